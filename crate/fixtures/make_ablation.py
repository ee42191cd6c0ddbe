"""Builds the 10-claim scripted fixture used by the ablation tests.

Every model call is keyed on the suffix of the prompt it answers, so a single
fixture serves the default run and each ablation (no decomposition, no
step-by-step questioning, search never, search always).

Run from this directory: python3 make_ablation.py
"""

import json

STEP = ("a fact-checker will go through a step-by-step process to ask and answer a series of "
        "questions relevant to its factuality. Here are the specific steps he/she raise each "
        "question and look for an answer:")
PROBE = 'Tell me if you are confident to answer the question or not. Answer with "yes" or "no":'
LABELS = "true, half, and false"
NO_SPLIT = "A fact checker will not split the claim since the original claim is easier to verify."


def header(j):
    return f"To verify subclaim {j}, {STEP}" if j else f"To verify the claim, {STEP}"


def final(label):
    return (f"Based on the answers to these questions, it is clear that among {LABELS}, "
            f"the claim is classified as {label}.\n\nQ: Claim:")


# (id, claim, gold, label predicted from unaided answers, subclaims)
# A subclaim is (text, [(question, confident, answer)]); None means "no split".
CLAIMS = [
    ("r01", "The city of Lakeview cut its police budget by 40 percent in 2021.", "false", "true", [
        ("Lakeview changed its police budget in 2021.", [
            ("Did Lakeview change its police budget in 2021?", True, "Lakeview adopted a new budget in 2021.")]),
        ("The police budget was cut by 40 percent.", [
            ("By how much did the Lakeview police budget change in 2021?", False, "It fell sharply."),
            ("Was the reduction a permanent cut or a reallocation?", False, "It was a cut.")]),
    ]),
    ("r02", "Governor Hale signed a law banning plastic straws statewide.", "true", "true", [
        ("Governor Hale signed a law about plastic straws.", [
            ("Did Governor Hale sign a bill about plastic straws?", True, "Yes, the bill was signed in March.")]),
        ("The law bans plastic straws statewide.", [
            ("Does the law apply statewide?", False, "It applies to restaurants only.")]),
    ]),
    ("r03", "Unemployment in Ridge County doubled last year.", "half", "false", None),
    ("r04", "The new stadium cost taxpayers $1 billion and created 10,000 jobs.", "half", "true", [
        ("The new stadium cost taxpayers money.", [
            ("Did public funds pay for the new stadium?", True, "Public bonds covered part of the cost.")]),
        ("The public cost was $1 billion.", [
            ("How much public money went into the stadium?", False, "About one billion dollars.")]),
        ("The stadium created 10,000 jobs.", [
            ("How many jobs did the stadium create?", False, "Around ten thousand."),
            ("Were those jobs permanent?", True, "Most of them were permanent.")]),
    ]),
    ("r05", "Senator Park voted against every veterans bill since 2015.", "false", "false", [
        ("Senator Park voted on veterans bills since 2015.", [
            ("Has Senator Park voted on veterans bills since 2015?", True, "Senator Park cast votes on several.")]),
        ("Senator Park voted against all of them.", [
            ("Did Senator Park vote against every veterans bill since 2015?", False, "Senator Park opposed all of them.")]),
    ]),
    ("r06", "The state's high school graduation rate is the highest in the nation.", "true", "half", [
        ("The state reports a high school graduation rate.", [
            ("What is the state's high school graduation rate?", False, "It is about 91 percent.")]),
        ("That rate is the highest in the nation.", [
            ("Which state has the highest graduation rate?", False, "Several states are tied near the top.")]),
    ]),
    ("r07", "Tap water in Millbrook contains lead above federal limits.", "false", "true", None),
    ("r08", "The mayor doubled the number of bike lanes in two years.", "half", "half", [
        ("The mayor expanded bike lanes.", [
            ("Did the city add bike lanes under the mayor?", True, "The city added new bike lanes.")]),
        ("The number doubled in two years.", [
            ("How many miles of bike lanes existed two years ago?", False, "About 40 miles."),
            ("How many miles of bike lanes exist now?", False, "About 80 miles.")]),
    ]),
    ("r09", "Wind power supplied half of the state's electricity last year.", "false", "true", [
        ("Wind power supplied electricity to the state last year.", [
            ("Did wind farms supply electricity to the state last year?", True, "Wind farms supplied power.")]),
        ("Wind supplied half of the total.", [
            ("What share of the state's electricity came from wind last year?", False, "About half.")]),
    ]),
    ("r10", "The school district spends more on administration than on teachers.", "true", "false", None),
]

NO_SPLIT_QUESTIONS = {
    "r03": [("What was the unemployment rate in Ridge County last year?", False, "It rose somewhat."),
            ("What was the rate the year before?", True, "It was about four percent.")],
    "r07": [("Have tests found lead above federal limits in Millbrook tap water?", False, "Yes, in many homes.")],
    "r10": [("How does the district's administration spending compare with teacher pay?", False,
             "Administration costs less.")],
}

# Questions whose search results are all fact-checking pages.
FACT_CHECK_ONLY = {"Were those jobs permanent?", "How many miles of bike lanes exist now?"}


def snippet(text):
    return f"Records show: {text.rstrip('?.')} (report {abs(hash_text(text)) % 9000 + 1000})."


def hash_text(text):
    h = 0
    for ch in text:
        h = (h * 131 + ord(ch)) % 1_000_003
    return h


def hits_for(query):
    fc = {"url": "https://www.politifact.com/factchecks/2022/" + str(hash_text(query)),
          "title": "PolitiFact", "snippet": "Rated on the Truth-O-Meter."}
    if query in FACT_CHECK_ONLY:
        return [fc]
    return [fc, {"url": f"https://news.example.org/{hash_text(query)}", "title": "Report",
                 "snippet": snippet(query)}]


def build():
    conversations = {}
    cache = {}
    dataset = []
    for cid, text, gold, unaided_label, subclaims in CLAIMS:
        dataset.append({"id": cid, "text": text, "gold": gold})
        entries = []

        def add(key, cont):
            entries.append({"match_key": key, "continuation": cont})

        if subclaims is None:
            blocks = [(None, text, NO_SPLIT_QUESTIONS[cid])]
            add(f'Claim: "{text}"\nA: ', f"{NO_SPLIT}\n{header(None)}\nQuestion:")
        else:
            blocks = [(j + 1, s, qs) for j, (s, qs) in enumerate(subclaims)]
            listing = "".join(f"{j}. {s}\n" for j, s, _ in blocks)
            add(f'Claim: "{text}"\nA: ',
                f"A fact checker will decompose the claim into {len(blocks)} subclaims that are easier "
                f"to verify:\n{listing}{header(1)}\nQuestion:")
        # Whole-claim block used when decomposition is switched off.
        no_dec = NO_SPLIT_QUESTIONS.get(cid) or [(f"Is it accurate that {text[0].lower()}{text[1:]}", False,
                                                  "Partly.")]
        variants = [blocks]
        if subclaims is not None:
            variants.append([(None, text, no_dec)])

        seen = set()

        def once(key, cont):
            if (key, cont) not in seen:
                seen.add((key, cont))
                add(key, cont)

        for variant in variants:
            for bi, (j, sub, qs) in enumerate(variant):
                last_block = bi == len(variant) - 1
                once(header(j) + "\n", f"Question: {qs[0][0]}\n{PROBE}")
                for qi, (q, confident, ans) in enumerate(qs):
                    cache[q] = hits_for(q)
                    reply = f" Yes.\nAnswer: {ans}\n" if confident else f" No.\nAnswer: {ans}\n"
                    once(f"{q}\n{PROBE}", reply)
                    once(f"{q}\n{PROBE} Yes.\nAnswer:", f" {ans}\n")
                    once(f"{q}\n{PROBE} No.\nAnswer:", f" {ans}\n")
                    once(f"Answer: {snippet(q)}", "\nQuestion:")
                    last_q = qi == len(qs) - 1
                    for answer_line, label in ((ans, unaided_label), (snippet(q), gold)):
                        key = f"Answer: {answer_line}\n"
                        if not last_q:
                            once(key, f"Question: {qs[qi + 1][0]}\n{PROBE}")
                        elif not last_block:
                            once(key, header(j + 1 if j else None) + "\nQuestion:")
                        else:
                            # Question call stops at the closing line; the final call reads it.
                            add(key, final(label))
                            add(key, final(label))
            # Without step-by-step questioning each block is one search on its text.
            for bi, (j, sub, _) in enumerate(variant):
                cache[sub] = hits_for(sub)
                once(f"Answer: {snippet(sub)}", "\nTo verify")
                if bi == len(variant) - 1:
                    add(f"Answer: {snippet(sub)}\n", final(gold))
        conversations[cid] = entries
    return {"default": [], "conversations": conversations}, cache, dataset


if __name__ == "__main__":
    fixture, cache, dataset = build()
    with open("ablation.json", "w") as f:
        json.dump(fixture, f, indent=1, sort_keys=True)
        f.write("\n")
    with open("ablation.cache.json", "w") as f:
        json.dump({k.lower(): v for k, v in sorted(cache.items())}, f, indent=2, sort_keys=True)
        f.write("\n")
    with open("ablation.jsonl", "w") as f:
        for row in dataset:
            f.write(json.dumps(row) + "\n")
