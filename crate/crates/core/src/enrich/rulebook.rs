//! Dictionary-driven rewriter used as a deterministic offline chat provider.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{ChatProvider, ChatRequest, EnrichError};
use crate::provider::ProviderError;

/// The dictionary shipped with the crate (`data/rulebook.json`).
pub const DEFAULT_RULEBOOK: &str = include_str!("../../data/rulebook.json");

const TRAILING_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':'];

#[derive(Debug, Clone, Deserialize)]
pub struct Rulebook {
    #[serde(default)]
    pub acronyms: HashMap<String, String>,
    #[serde(default)]
    pub spelling: HashMap<String, String>,
    /// Words set off from the preceding text with a comma when expanded.
    #[serde(default)]
    pub interjections: HashMap<String, String>,
    /// Inputs with at least this many tokens get a terminal period.
    pub terminal_period_min_tokens: usize,
}

impl Rulebook {
    pub fn shipped() -> Self {
        Self::from_json(DEFAULT_RULEBOOK).expect("shipped rulebook parses")
    }

    pub fn from_json(json: &str) -> Result<Self, EnrichError> {
        serde_json::from_str(json).map_err(|e| EnrichError::InvalidRulebook(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, EnrichError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| EnrichError::InvalidRulebook(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Rewrites `text` token by token.
    ///
    /// A token's lookup key is its lowercase form minus trailing punctuation,
    /// which is re-attached after substitution. Acronyms win over spelling,
    /// spelling over interjections.
    pub fn rewrite(&self, text: &str) -> String {
        let tokens: Vec<&str> = text.split_whitespace().collect();
        let mut out: Vec<String> = Vec::with_capacity(tokens.len());
        for token in &tokens {
            let core = token.trim_end_matches(TRAILING_PUNCT);
            let tail = &token[core.len()..];
            let key = core.to_lowercase();
            if let Some(exp) = self.acronyms.get(&key).or_else(|| self.spelling.get(&key)) {
                out.push(format!("{exp}{tail}"));
            } else if let Some(exp) = self.interjections.get(&key) {
                if let Some(prev) = out.last_mut() {
                    if !prev.ends_with(TRAILING_PUNCT) {
                        prev.push(',');
                    }
                }
                out.push(format!("{exp}{tail}"));
            } else {
                out.push((*token).to_owned());
            }
        }
        let mut rewritten = out.join(" ");
        if tokens.len() >= self.terminal_period_min_tokens && !rewritten.ends_with(['.', '!', '?'])
        {
            let trimmed = rewritten.trim_end_matches([',', ';', ':']).len();
            rewritten.truncate(trimmed);
            if !rewritten.is_empty() {
                rewritten.push('.');
            }
        }
        rewritten
    }
}

impl ChatProvider for Rulebook {
    fn complete(&self, request: &ChatRequest<'_>) -> Result<String, ProviderError> {
        Ok(self.rewrite(request.user))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_goldens() {
        let rb = Rulebook::shipped();
        assert_eq!(
            rb.rewrite("atm pin reset plz"),
            "ATM (automated teller machine) PIN (personal identification number) reset, please."
        );
        assert_eq!(rb.rewrite("idk"), "I don't know");
        assert_eq!(rb.rewrite("u r wierd, thx!"), "you are weird, thanks!");
        assert_eq!(rb.rewrite("card declined twice"), "card declined twice.");
        assert_eq!(rb.rewrite(""), "");
    }

    #[test]
    fn punctuation_is_preserved() {
        let rb = Rulebook::shipped();
        assert_eq!(
            rb.rewrite("my OTP? idk."),
            "my OTP (one-time password)? I don't know."
        );
        assert_eq!(rb.rewrite("thx"), "thanks");
        assert_eq!(rb.rewrite("wait for it;"), "wait for it.");
    }

    #[test]
    fn bad_json_is_reported() {
        assert!(matches!(
            Rulebook::from_json("{"),
            Err(EnrichError::InvalidRulebook(_))
        ));
    }
}
