//! Whitespace-plus-punctuation tokenization with character offsets, and the
//! id vocabulary shared by every encoder input.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// Tokens with their `[start, end)` character ranges in the source text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tokenized {
    pub tokens: Vec<String>,
    pub char_offsets: Vec<(usize, usize)>,
}

pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Tokenized;
}

/// Splits on whitespace; alphanumeric runs form one token, every other
/// non-space character is a token of its own. Surface forms are kept as-is so
/// offsets round-trip; case folding happens at vocabulary lookup.
#[derive(Debug, Clone, Copy, Default)]
pub struct BasicTokenizer;

impl Tokenizer for BasicTokenizer {
    fn tokenize(&self, text: &str) -> Tokenized {
        let mut out = Tokenized::default();
        let mut run: Option<(usize, String)> = None;

        for (pos, ch) in text.chars().enumerate() {
            if ch.is_alphanumeric() {
                match run.as_mut() {
                    Some((_, buf)) => buf.push(ch),
                    None => run = Some((pos, ch.to_string())),
                }
                continue;
            }
            if let Some((start, buf)) = run.take() {
                out.char_offsets.push((start, pos));
                out.tokens.push(buf);
            }
            if !ch.is_whitespace() {
                out.char_offsets.push((pos, pos + 1));
                out.tokens.push(ch.to_string());
            }
        }
        if let Some((start, buf)) = run.take() {
            let end = start + buf.chars().count();
            out.char_offsets.push((start, end));
            out.tokens.push(buf);
        }
        out
    }
}

/// Tokenize with the default [`BasicTokenizer`].
pub fn tokenize(text: &str) -> Tokenized {
    BasicTokenizer.tokenize(text)
}

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const CLS_TOKEN: &str = "[CLS]";
pub const SEP_TOKEN: &str = "[SEP]";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;

const SPECIALS: [&str; 4] = [PAD_TOKEN, UNK_TOKEN, CLS_TOKEN, SEP_TOKEN];

/// Lowercased token → id map. Ids 0..4 are the reserved markers; the rest are
/// assigned in lexicographic order so a vocabulary is a pure function of its
/// token set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: BTreeMap<String, usize>,
}

impl Vocabulary {
    pub fn build<'a, I>(tokens: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut set = BTreeSet::new();
        for tok in tokens {
            if SPECIALS.contains(&tok) {
                continue;
            }
            set.insert(tok.to_lowercase());
        }
        let list = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(set)
            .collect::<Vec<_>>();
        Self::from(list)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        self.ids
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(UNK_ID)
    }

    pub fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let ids = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self { tokens, ids }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn whitespace_split() {
        let t = tokenize("install fix pack");
        assert_eq!(t.tokens, vec!["install", "fix", "pack"]);
        assert_eq!(t.char_offsets, vec![(0, 7), (8, 11), (12, 16)]);
    }

    #[test]
    fn empty_input() {
        let t = tokenize("");
        assert!(t.tokens.is_empty());
        assert!(t.char_offsets.is_empty());
    }

    #[test]
    fn version_string_splits_on_punctuation() {
        let text = "v8.5.5.9 upgrade";
        let t = tokenize(text);
        assert_eq!(
            t.tokens,
            vec!["v8", ".", "5", ".", "5", ".", "9", "upgrade"]
        );
        let chars: Vec<char> = text.chars().collect();
        for (tok, &(s, e)) in t.tokens.iter().zip(&t.char_offsets) {
            assert_eq!(&chars[s..e].iter().collect::<String>(), tok);
        }
    }

    #[test]
    fn vocabulary_specials_and_case_folding() {
        let v = Vocabulary::build(["Fix", "pack", "fix", "[SEP]"]);
        assert_eq!(v.len(), 6);
        assert_eq!(v.id("[PAD]"), PAD_ID);
        assert_eq!(v.id("[SEP]"), SEP_ID);
        assert_eq!(v.id("FIX"), v.id("fix"));
        assert_eq!(v.id("never-seen"), UNK_ID);
        let json = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, v);
    }

    proptest! {
        #[test]
        fn offsets_round_trip(text in "[a-zA-Z0-9 .,:/_\\-é\t\n]{0,80}") {
            let t = tokenize(&text);
            let chars: Vec<char> = text.chars().collect();
            let mut prev_end = 0;
            for (tok, &(s, e)) in t.tokens.iter().zip(&t.char_offsets) {
                prop_assert!(s >= prev_end && s < e);
                prop_assert_eq!(&chars[s..e].iter().collect::<String>(), tok);
                prev_end = e;
            }
            // Everything outside token ranges is whitespace.
            let mut covered = vec![false; chars.len()];
            for &(s, e) in &t.char_offsets {
                covered[s..e].iter_mut().for_each(|c| *c = true);
            }
            for (c, cov) in chars.iter().zip(covered) {
                prop_assert!(cov || c.is_whitespace());
            }
        }
    }
}
