use std::collections::HashMap;
use std::io::{BufRead, Write};

use super::TextError;

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
/// Id of the digit token `'0'`; digits `'0'..='9'` are contiguous.
pub const DIGIT_BASE: TokenId = 4;
/// Id of the byte token `<0x00>`; all 256 byte tokens are contiguous.
pub const BYTE_BASE: TokenId = DIGIT_BASE + 10;
pub const PROMPT_GENERATE: TokenId = BYTE_BASE + 256;
pub const PROMPT_QUESTION: TokenId = PROMPT_GENERATE + 1;
/// First id available to language tags and corpus words.
pub const FIRST_FREE: TokenId = PROMPT_QUESTION + 1;

pub const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

pub fn digit_token(d: u8) -> TokenId {
    debug_assert!(d < 10);
    DIGIT_BASE + d as TokenId
}

pub fn token_digit(t: TokenId) -> Option<u8> {
    (DIGIT_BASE..DIGIT_BASE + 10)
        .contains(&t)
        .then(|| (t - DIGIT_BASE) as u8)
}

pub fn language_token(lang: &str) -> String {
    format!("⟨lang:{lang}⟩")
}

fn byte_token(b: u8) -> String {
    format!("<0x{b:02X}>")
}

/// Token/id bijection.
///
/// Layout: specials, the ten digits, the 256 byte-fallback tokens, the two
/// prompt words, then language tags and corpus words in insertion order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::base()
    }
}

impl Vocabulary {
    /// Only the fixed reserved tokens.
    pub fn base() -> Self {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for s in SPECIALS {
            v.push(s.to_string());
        }
        for d in 0..10u8 {
            v.push(d.to_string());
        }
        for b in 0..=255u8 {
            v.push(byte_token(b));
        }
        v.push("Generate".to_string());
        v.push("question:".to_string());
        debug_assert_eq!(v.len() as TokenId, FIRST_FREE);
        v
    }

    /// Reserved tokens, the given language tags, then every distinct
    /// whitespace-separated word of `texts` in sorted order.
    pub fn build<'a>(languages: &[String], texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut v = Self::base();
        for lang in languages {
            v.add(&language_token(lang));
        }
        let mut words: Vec<&str> = texts.into_iter().flat_map(str::split_whitespace).collect();
        words.sort_unstable();
        words.dedup();
        for w in words {
            v.add(w);
        }
        v
    }

    fn push(&mut self, token: String) -> TokenId {
        let id = self.tokens.len() as TokenId;
        self.index.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    /// Adds `token` if absent; returns its id either way.
    pub fn add(&mut self, token: &str) -> TokenId {
        match self.index.get(token) {
            Some(&id) => id,
            None => self.push(token.to_string()),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn has_language(&self, lang: &str) -> bool {
        self.index.contains_key(&language_token(lang))
    }

    /// Whitespace tokenization with byte fallback for unknown words.
    ///
    /// The result always ends in EOS and holds at most `max_len` ids; words
    /// beyond the budget are dropped.
    pub fn tokenize(&self, text: &str, max_len: usize) -> Vec<TokenId> {
        let budget = max_len.max(1) - 1;
        let mut out = Vec::with_capacity(budget + 1);
        'words: for word in text.split_whitespace() {
            match self.index.get(word) {
                Some(&id) => {
                    if out.len() == budget {
                        break;
                    }
                    out.push(id);
                }
                None => {
                    for &b in word.as_bytes() {
                        if out.len() == budget {
                            break 'words;
                        }
                        out.push(BYTE_BASE + b as TokenId);
                    }
                }
            }
        }
        out.push(EOS);
        out
    }

    /// Inverse of [`Vocabulary::tokenize`] up to whitespace. Special tokens are
    /// skipped and runs of byte tokens are reassembled into one word.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        let mut words: Vec<String> = Vec::new();
        let mut bytes: Vec<u8> = Vec::new();
        let flush = |bytes: &mut Vec<u8>, words: &mut Vec<String>| {
            if !bytes.is_empty() {
                words.push(String::from_utf8_lossy(bytes).into_owned());
                bytes.clear();
            }
        };
        for &id in ids {
            if id < DIGIT_BASE {
                flush(&mut bytes, &mut words);
                continue;
            }
            if (BYTE_BASE..BYTE_BASE + 256).contains(&id) {
                bytes.push((id - BYTE_BASE) as u8);
                continue;
            }
            flush(&mut bytes, &mut words);
            if let Some(tok) = self.token(id) {
                words.push(tok.to_string());
            }
        }
        flush(&mut bytes, &mut words);
        words.join(" ")
    }

    /// One token per line; the line number is the id.
    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        w.flush()
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, TextError> {
        let mut v = Self {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if v.index.contains_key(&line) {
                return Err(TextError::Vocabulary(format!("duplicate token {line:?} on line {}", n + 1)));
            }
            v.push(line);
        }
        let base = Self::base();
        if v.tokens.len() < base.tokens.len() || v.tokens[..base.tokens.len()] != base.tokens[..] {
            return Err(TextError::Vocabulary("reserved token block does not match".into()));
        }
        Ok(v)
    }
}
