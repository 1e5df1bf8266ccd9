//! Built-in rewrite prompts and the registry that holds them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EnrichError;

/// A named system prompt steering the rewriting model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub system_text: String,
    #[serde(default)]
    pub description: String,
}

const PROMPT_1: &str = "You are a text enhancer tasked with pre-processing text for embedding models. Your goals are to enrich the text without losing the context, correct grammatical inaccuracies, clarify obscure references, normalize terminology, disambiguate polysemous words, expand acronyms and abbreviations, incorporate relevant metadata, improve sentence structure for clarity, and infer missing information where necessary. Your enhancements should make the text more informative and easier to understand, thereby improving the performance of embedding models in processing and analyzing the text. If a user asks a question, then you should return an improved version of the question. If the user did not ask a question, then you should return an improved version of an answer.";

const PROMPT_2: &str = "You are a text enhancer tasked with preprocessing text for embedding models. Your goals are to enrich the text with additional context, correct grammatical inaccuracies, clarify obscure references, normalize terminology, disambiguate polysemous words, expand acronyms and abbreviations, incorporate relevant metadata, improve sentence structure for clarity, and infer missing information where necessary. Your enhancements should make the text more informative and easier to understand, thereby improving the performance of embedding models in processing and analyzing the text.";

// Variants 3 and 4 were published with identical wording even though they
// were scored separately; both are kept verbatim.
const PROMPT_3: &str = "You are a text enhancer to make better embeddings, your task is to optimize text for embedding models by enriching, clarifying, and standardizing it. This involves improving grammar, resolving ambiguities, and inferring missing information to enhance model performance.";
const PROMPT_4: &str = PROMPT_3;

/// The four published prompt variants, ids `paper-1` through `paper-4`.
pub fn builtin_prompts() -> Vec<PromptTemplate> {
    [
        (
            "paper-1",
            PROMPT_1,
            "Full enhancement checklist with question/answer handling",
        ),
        (
            "paper-2",
            PROMPT_2,
            "Full enhancement checklist, enrich with additional context",
        ),
        (
            "paper-3",
            PROMPT_3,
            "Concise optimize-for-embeddings instruction",
        ),
        (
            "paper-4",
            PROMPT_4,
            "Concise optimize-for-embeddings instruction (second run)",
        ),
    ]
    .into_iter()
    .map(|(id, text, desc)| PromptTemplate {
        id: id.to_owned(),
        system_text: text.to_owned(),
        description: desc.to_owned(),
    })
    .collect()
}

/// Prompt templates by id, in insertion order.
#[derive(Debug, Clone, Default)]
pub struct PromptRegistry {
    prompts: Vec<PromptTemplate>,
    index: HashMap<String, usize>,
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        let mut registry = Self::default();
        for p in builtin_prompts() {
            registry.insert(p).expect("builtin prompt ids are unique");
        }
        registry
    }

    pub fn insert(&mut self, prompt: PromptTemplate) -> Result<(), EnrichError> {
        if prompt.system_text.trim().is_empty() {
            return Err(EnrichError::InvalidPrompt(format!(
                "{}: empty system text",
                prompt.id
            )));
        }
        if prompt.id.is_empty() || prompt.id == "baseline" || prompt.id == "-" {
            return Err(EnrichError::InvalidPrompt(format!(
                "reserved prompt id {:?}",
                prompt.id
            )));
        }
        if self.index.contains_key(&prompt.id) {
            return Err(EnrichError::InvalidPrompt(format!(
                "duplicate prompt id {}",
                prompt.id
            )));
        }
        self.index.insert(prompt.id.clone(), self.prompts.len());
        self.prompts.push(prompt);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&PromptTemplate> {
        self.index.get(id).map(|&i| &self.prompts[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.prompts.iter().map(|p| p.id.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = &PromptTemplate> {
        self.prompts.iter()
    }
}
