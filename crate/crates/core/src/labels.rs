//! Label extraction shared by HiSS and every baseline.

use thiserror::Error;

use crate::model::{Label, LabelScheme, Verdict};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LabelParseError {
    #[error("no line containing \"classified as\"")]
    NoFinalLine,
    #[error("`{0}` does not name a label of the scheme")]
    LabelNotInScheme(String),
}

fn is_label_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-'
}

/// Finds the scheme label named in a fragment such as `" mostly-true."`.
///
/// Matching is ASCII case-insensitive and requires label boundaries, so
/// `true` never matches inside `mostly-true`. The earliest match wins; at the
/// same position the longer label wins.
pub fn parse_label_fragment(fragment: &str, scheme: &LabelScheme) -> Result<Label, LabelParseError> {
    let hay = fragment.to_ascii_lowercase();
    let mut best: Option<(usize, usize)> = None; // (position, label index)
    for (i, label) in scheme.labels().iter().enumerate() {
        let needle = label.to_ascii_lowercase();
        let mut from = 0;
        while let Some(off) = hay[from..].find(&needle) {
            let start = from + off;
            let end = start + needle.len();
            let before_ok = hay[..start].chars().next_back().is_none_or(|c| !is_label_char(c));
            let after_ok = hay[end..].chars().next().is_none_or(|c| !is_label_char(c));
            if before_ok && after_ok {
                let better = match best {
                    None => true,
                    Some((pos, j)) => start < pos || (start == pos && needle.len() > scheme.labels()[j].len()),
                };
                if better {
                    best = Some((start, i));
                }
                break;
            }
            from = start + needle.chars().next().map_or(1, char::len_utf8);
        }
    }
    match best {
        Some((_, i)) => Ok(scheme.label_at(i)),
        None => {
            let shown = fragment.trim().trim_end_matches(|c: char| c.is_ascii_punctuation()).to_string();
            Err(LabelParseError::LabelNotInScheme(shown))
        }
    }
}

/// Reads the verdict from generated text: the last line containing
/// "classified as", label taken from what follows its final " as ".
pub fn parse_final_line(text: &str, scheme: &LabelScheme) -> Result<Verdict, LabelParseError> {
    let line = text
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.to_ascii_lowercase().contains("classified as"))
        .ok_or(LabelParseError::NoFinalLine)?;
    let lower = line.to_ascii_lowercase();
    let tail = match lower.rfind(" as ") {
        Some(pos) => &line[pos + 4..],
        None => "",
    };
    let label = parse_label_fragment(tail, scheme)?;
    Ok(Verdict { label, raw_line: line.to_string() })
}
