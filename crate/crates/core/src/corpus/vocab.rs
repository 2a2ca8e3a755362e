use std::collections::HashMap;

pub type TokenId = u32;
/// A token sequence.
pub type Text = Vec<TokenId>;

pub const UNK: TokenId = 0;
pub const SEP: TokenId = 1;
pub const BOS: TokenId = 2;
pub const EOS: TokenId = 3;
/// First id available to ordinary words.
pub const FIRST_WORD: TokenId = 4;

const SPECIALS: [&str; 4] = ["<unk>", "<sep>", "<bos>", "<eos>"];
const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Bidirectional token ↔ string table. Ids below [`FIRST_WORD`] are reserved.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    ids: HashMap<String, TokenId>,
}

impl Vocab {
    pub fn from_words(words: Vec<String>) -> Self {
        let ids = words.iter().enumerate().map(|(i, w)| (w.clone(), i as TokenId)).collect();
        Self { words, ids }
    }

    /// Specials followed by `n_words` pronounceable pseudo-words.
    pub fn synthetic(n_words: usize, order: &[usize]) -> Self {
        let mut words: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        words.extend(order.iter().take(n_words).map(|&i| pseudo_word(i)));
        Self::from_words(words)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: TokenId) -> &str {
        self.words.get(id as usize).map_or(SPECIALS[0], String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Unknown words map to [`UNK`].
    pub fn encode(&self, text: &str) -> Text {
        text.split_whitespace()
            .map(|w| self.ids.get(w).copied().unwrap_or(UNK))
            .collect()
    }

    pub fn decode(&self, tokens: &[TokenId]) -> String {
        tokens.iter().map(|&t| self.word(t)).collect::<Vec<_>>().join(" ")
    }
}

/// The `i`-th pseudo-word; at least two syllables, injective in `i`.
pub fn pseudo_word(i: usize) -> String {
    let base = ONSETS.len() * VOWELS.len();
    let mut n = i + base;
    let mut syllables = Vec::new();
    while n > 0 {
        let s = n % base;
        syllables.push(format!("{}{}", ONSETS[s / VOWELS.len()], VOWELS[s % VOWELS.len()]));
        n /= base;
    }
    syllables.reverse();
    syllables.concat()
}
