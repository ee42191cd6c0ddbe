//! Few-shot demonstration sets, shipped as versioned plain-text assets.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ProtocolError;
use crate::model::Method;

/// Which prompt format a demo set is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoStyle {
    Hiss,
    Standard,
    Cot,
}

impl DemoStyle {
    pub fn for_method(method: Method) -> Self {
        match method {
            Method::Hiss => DemoStyle::Hiss,
            Method::Standard => DemoStyle::Standard,
            Method::VanillaCot | Method::SearchCot => DemoStyle::Cot,
        }
    }

    fn file_stem(self) -> &'static str {
        match self {
            DemoStyle::Hiss => "hiss",
            DemoStyle::Standard => "standard",
            DemoStyle::Cot => "cot",
        }
    }
}

const ASSETS: [(&str, &str, &str); 6] = [
    ("liar", "hiss", include_str!("../../assets/liar/hiss_v1.txt")),
    ("liar", "standard", include_str!("../../assets/liar/standard_v1.txt")),
    ("liar", "cot", include_str!("../../assets/liar/cot_v1.txt")),
    ("rawfc", "hiss", include_str!("../../assets/rawfc/hiss_v1.txt")),
    ("rawfc", "standard", include_str!("../../assets/rawfc/standard_v1.txt")),
    ("rawfc", "cot", include_str!("../../assets/rawfc/cot_v1.txt")),
];

/// Ordered demonstrations. Blank lines separate demos in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoSet {
    /// Asset identifier, part of the run fingerprint.
    pub id: String,
    pub demos: Vec<String>,
}

impl DemoSet {
    pub fn parse(id: impl Into<String>, text: &str) -> Self {
        let normalized = text.replace("\r\n", "\n");
        let mut demos = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        for line in normalized.lines() {
            if line.trim().is_empty() {
                if !current.is_empty() {
                    demos.push(current.join("\n"));
                    current.clear();
                }
            } else {
                current.push(line.trim_end());
            }
        }
        if !current.is_empty() {
            demos.push(current.join("\n"));
        }
        DemoSet { id: id.into(), demos }
    }

    /// Built-in set for a scheme name (`liar` or `rawfc`).
    pub fn builtin(scheme: &str, style: DemoStyle) -> Option<Self> {
        ASSETS
            .iter()
            .find(|(s, st, _)| *s == scheme && *st == style.file_stem())
            .map(|(s, st, text)| Self::parse(format!("{s}/{st}@v1"), text))
    }

    pub fn load(path: &Path) -> Result<Self, ProtocolError> {
        let text = fs::read_to_string(path)
            .map_err(|e| ProtocolError::InvalidConfig(format!("cannot read demos {}: {e}", path.display())))?;
        Ok(Self::parse(format!("file:{}", path.display()), &text))
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    /// The first `k` demos joined by blank lines, or an error if there are
    /// fewer than `k`.
    pub fn prefix(&self, k: usize) -> Result<String, ProtocolError> {
        if k > self.demos.len() {
            return Err(ProtocolError::InsufficientDemos { needed: k, available: self.demos.len() });
        }
        Ok(self.demos[..k].join("\n\n"))
    }
}
