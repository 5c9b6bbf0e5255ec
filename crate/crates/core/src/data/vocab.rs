use std::collections::HashMap;

use super::news::NewsRecord;
use crate::encoders::{PAD_ID, UNK_ID};

pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    ids: HashMap<String, usize>,
    tokens: Vec<String>,
    freq: HashMap<String, usize>,
}

/// Tokens seen at least `min_count` times get ids `2..` in order of
/// descending frequency, ties broken lexicographically.
pub fn build_vocab(news: &[NewsRecord], min_count: usize) -> Vocab {
    let min_count = min_count.max(1);
    let mut freq: HashMap<String, usize> = HashMap::new();
    for n in news {
        for t in &n.tokens {
            *freq.entry(t.clone()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&String, usize)> = freq
        .iter()
        .filter(|(_, &c)| c >= min_count)
        .map(|(t, &c)| (t, c))
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    tokens.extend(kept.into_iter().map(|(t, _)| t.clone()));
    let ids = tokens
        .iter()
        .enumerate()
        .skip(2)
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Vocab { ids, tokens, freq }
}

impl Vocab {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn frequency(&self, token: &str) -> usize {
        self.freq.get(token).copied().unwrap_or(0)
    }

    /// Token ids for a title, truncated to `max_len`.
    pub fn encode(&self, tokens: &[String], max_len: usize) -> Vec<usize> {
        tokens.iter().take(max_len).map(|t| self.id(t)).collect()
    }

    /// `index<TAB>token<TAB>count` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            let count = if i == PAD_ID || i == UNK_ID { 0 } else { self.frequency(t) };
            out.push_str(&format!("{i}\t{t}\t{count}\n"));
        }
        out
    }
}
