"""Writes the miniature LIAR and RAWFC datasets used by the loader tests.

Counts are fixed so tests can assert them exactly:
  LIAR   train 12 (2 per label), valid 6 (1 per label),
         test 12 = pants-fire 1, false 2, barely-true 2, half-true 3, mostly-true 2, true 2
  RAWFC  train 6 (2 per label), val 3 (1 per label), test 9 = true 3, half 2, false 4
"""
import json
import os

HERE = os.path.dirname(os.path.abspath(__file__))

LIAR = ["pants-fire", "false", "barely-true", "half-true", "mostly-true", "true"]
SUBJECTS = ["taxes", "health-care", "education", "jobs", "energy", "immigration"]
SPEAKERS = [("jane-doe", "State senator", "Ohio", "democrat"),
            ("john-roe", "Governor", "Texas", "republican"),
            ("sam-poe", "Talk show host", "", "none")]


def liar_rows(split, counts):
    rows = []
    n = 0
    for label, count in zip(LIAR, counts):
        for _ in range(count):
            n += 1
            sp = SPEAKERS[n % len(SPEAKERS)]
            subject = SUBJECTS[n % len(SUBJECTS)]
            text = f"Mini {split} claim {n} about {subject.replace('-', ' ')} spending rising {n * 3} percent."
            history = [str((n + k) % 5) for k in range(5)]
            rows.append("\t".join([f"{split}-{n}.json", label, text, subject, sp[0], sp[1], sp[2], sp[3],
                                   *history, f"a {split} interview"]))
    return rows


def write_liar():
    root = os.path.join(HERE, "mini_liar")
    os.makedirs(root, exist_ok=True)
    splits = {"train": [2] * 6, "valid": [1] * 6, "test": [1, 2, 2, 3, 2, 2]}
    for split, counts in splits.items():
        with open(os.path.join(root, f"{split}.tsv"), "w") as f:
            f.write("\n".join(liar_rows(split, counts)) + "\n")


def write_rawfc():
    root = os.path.join(HERE, "mini_rawfc")
    splits = {"train": {"true": 2, "half": 2, "false": 2},
              "val": {"true": 1, "half": 1, "false": 1},
              "test": {"true": 3, "half": 2, "false": 4}}
    for split, counts in splits.items():
        d = os.path.join(root, split)
        os.makedirs(d, exist_ok=True)
        n = 0
        for label, count in counts.items():
            for _ in range(count):
                n += 1
                record = {
                    "event_id": f"{split}{n:03d}",
                    "claim": f"Mini {split} claim {n}: the county budget grew by {n * 7} percent last year.",
                    "label": label,
                    "explain": "Constructed record for loader tests.",
                    "reports": [],
                }
                with open(os.path.join(d, f"{split}{n:03d}.json"), "w") as f:
                    json.dump(record, f, indent=1)
                    f.write("\n")


if __name__ == "__main__":
    write_liar()
    write_rawfc()
