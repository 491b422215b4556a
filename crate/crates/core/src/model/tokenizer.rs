use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EncodedInput;

pub const UNK: &str = "<unk>";

/// Whitespace tokenization with lowercasing.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Token vocabulary. Id 0 is the out-of-vocabulary token; the mask token has
/// no id (masked positions carry a zero embedding).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Builds a vocabulary in first-appearance order.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut tokens = vec![UNK.to_string()];
        let mut index = HashMap::new();
        index.insert(UNK.to_string(), 0);
        for text in texts {
            for tok in tokenize(text) {
                if !index.contains_key(&tok) {
                    index.insert(tok.clone(), tokens.len());
                    tokens.push(tok);
                }
            }
        }
        Vocabulary { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map(String::as_str).unwrap_or(UNK)
    }

    /// Encodes a text, truncating to `max_length` tokens. All positions are
    /// visible.
    pub fn encode(&self, text: &str, max_length: usize) -> EncodedInput {
        let ids: Vec<usize> = tokenize(text)
            .iter()
            .take(max_length)
            .map(|t| self.id(t))
            .collect();
        EncodedInput::new(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn build_and_encode() {
        let v = Vocabulary::build(["The cat", "the DOG sat"]);
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("the"), 1);
        let e = v.encode("the bird sat extra", 3);
        assert_eq!(e.token_ids, vec![1, 0, 4]);
        assert!(e.mask.iter().all(|&m| m));
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }
}
