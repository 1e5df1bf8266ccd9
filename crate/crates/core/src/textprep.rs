//! Deterministic corpus cleanup applied before enrichment and embedding.
//!
//! The canonical recipe is two steps, always in this order: [`strip_noise`]
//! removes URLs, hashtags and mentions, then [`lowercase`] applies simple
//! per-character lowercasing. Either step can be switched off per dataset
//! through [`PreprocessConfig`].

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// URLs (`http://`, `https://`, or a token starting with `www.`) up to the next
/// whitespace, `#word` hashtags and `@word` mentions.
static NOISE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:https?://|\bwww\.)\S*|#\w+|@\w+").expect("noise pattern compiles")
});

/// A preprocessing step. The derived `Ord` is the canonical application order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    StripNoise,
    Lowercase,
}

impl Step {
    pub fn name(self) -> &'static str {
        match self {
            Step::StripNoise => "strip_noise",
            Step::Lowercase => "lowercase",
        }
    }

    pub fn parse(name: &str) -> Option<Step> {
        match name {
            "strip_noise" => Some(Step::StripNoise),
            "lowercase" => Some(Step::Lowercase),
            _ => None,
        }
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Text that has been through zero or more preprocessing steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanText {
    pub value: String,
    pub applied_steps: Vec<Step>,
}

impl CleanText {
    /// Wraps text without applying any step.
    pub fn untouched(value: impl Into<String>) -> Self {
        Self {
            value: value.into(),
            applied_steps: Vec::new(),
        }
    }

    pub fn as_str(&self) -> &str {
        &self.value
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

impl fmt::Display for CleanText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.value)
    }
}

/// Removes URL, hashtag and mention tokens, collapses whitespace and trims.
///
/// Every whitespace run in the result is a single ASCII space, including runs
/// that were already present in the input.
pub fn strip_noise(raw: &str) -> CleanText {
    let removed = NOISE.replace_all(raw, " ");
    CleanText {
        value: collapse_whitespace(&removed),
        applied_steps: vec![Step::StripNoise],
    }
}

/// Simple (one-to-one) Unicode lowercasing of every character.
///
/// Characters whose full lowercase mapping expands to several code points
/// (only `İ` in current Unicode) keep the first one, which is their simple
/// mapping. Uppercase letters that have no lowercase form are left alone.
pub fn lowercase(text: CleanText) -> CleanText {
    let value = text.value.chars().map(simple_lowercase).collect();
    let mut applied_steps = text.applied_steps;
    if !applied_steps.contains(&Step::Lowercase) {
        applied_steps.push(Step::Lowercase);
    }
    CleanText {
        value,
        applied_steps,
    }
}

fn simple_lowercase(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

/// Splits on runs of Unicode whitespace.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

pub fn collapse_whitespace(text: &str) -> String {
    tokenize(text).join(" ")
}

/// Which steps to run for one dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub strip_noise: bool,
    pub lowercase: bool,
}

impl PreprocessConfig {
    /// Default for sentence-pair (social media) datasets.
    pub const PAIRS: Self = Self {
        strip_noise: true,
        lowercase: true,
    };
    /// Default for single-text classification datasets.
    pub const CLASSIFICATION: Self = Self {
        strip_noise: false,
        lowercase: true,
    };
    pub const NONE: Self = Self {
        strip_noise: false,
        lowercase: false,
    };

    pub fn from_steps(steps: &[Step]) -> Self {
        Self {
            strip_noise: steps.contains(&Step::StripNoise),
            lowercase: steps.contains(&Step::Lowercase),
        }
    }

    pub fn steps(&self) -> Vec<Step> {
        let mut steps = Vec::new();
        if self.strip_noise {
            steps.push(Step::StripNoise);
        }
        if self.lowercase {
            steps.push(Step::Lowercase);
        }
        steps
    }

    pub fn apply(&self, raw: &str) -> CleanText {
        let text = if self.strip_noise {
            strip_noise(raw)
        } else {
            CleanText::untouched(raw)
        };
        if self.lowercase {
            lowercase(text)
        } else {
            text
        }
    }
}
