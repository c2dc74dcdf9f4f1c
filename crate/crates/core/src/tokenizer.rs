//! Byte-level BPE.
//!
//! Ids `0..256` are the raw bytes, the three special tokens follow, and each
//! learned merge appends one id in rank order. Text is pre-split before
//! every space so merges never cross a word boundary; a word keeps its
//! leading space (`" is"`).

use std::collections::{BTreeMap, HashMap};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const VOCAB_FORMAT: &str = "erasmo-bpe/1";
pub const DEFAULT_VOCAB_SIZE: usize = 2048;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("vocab_size {requested} is below the minimum {minimum}")]
    VocabTooSmall { requested: usize, minimum: usize },
    #[error("token id {id} out of range for vocabulary of {size}")]
    InvalidId { id: u32, size: usize },
    #[error("decoded bytes are not valid UTF-8")]
    Utf8(#[from] std::string::FromUtf8Error),
    #[error("vocabulary format error: {0}")]
    Format(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Specials {
    pub pad: u32,
    pub bos: u32,
    pub eos: u32,
}

const SPECIAL_NAMES: [&str; 3] = ["<|pad|>", "<|bos|>", "<|eos|>"];
const N_SPECIALS: usize = SPECIAL_NAMES.len();

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Vec<u8>>,
    merges: Vec<(u32, u32)>,
    merge_index: HashMap<(u32, u32), u32>,
    specials: Specials,
}

/// Token ids for one text, including BOS and EOS.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn pre_split(text: &str) -> impl Iterator<Item = &[u8]> {
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 1;
    std::iter::from_fn(move || {
        if start >= bytes.len() {
            return None;
        }
        while i < bytes.len() && bytes[i] != b' ' {
            i += 1;
        }
        let chunk = &bytes[start..i];
        start = i;
        i += 1;
        Some(chunk)
    })
}

impl Vocabulary {
    fn base() -> Self {
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        tokens.extend(SPECIAL_NAMES.iter().map(|s| s.as_bytes().to_vec()));
        Self {
            tokens,
            merges: Vec::new(),
            merge_index: HashMap::new(),
            specials: Specials {
                pad: 256,
                bos: 257,
                eos: 258,
            },
        }
    }

    pub fn min_size() -> usize {
        256 + N_SPECIALS
    }

    fn push_merge(&mut self, pair: (u32, u32)) -> u32 {
        let id = self.tokens.len() as u32;
        let mut bytes = self.tokens[pair.0 as usize].clone();
        bytes.extend_from_slice(&self.tokens[pair.1 as usize]);
        self.tokens.push(bytes);
        self.merges.push(pair);
        self.merge_index.insert(pair, id);
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn specials(&self) -> Specials {
        self.specials
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn is_special(&self, id: u32) -> bool {
        (256..256 + N_SPECIALS as u32).contains(&id)
    }

    fn encode_chunk(&self, chunk: &[u8], out: &mut Vec<u32>) {
        let mut symbols: Vec<u32> = chunk.iter().map(|&b| u32::from(b)).collect();
        loop {
            // Lowest-rank mergeable pair; ids of merges grow with rank.
            let best = symbols
                .windows(2)
                .filter_map(|w| self.merge_index.get(&(w[0], w[1])).map(|&id| (id, (w[0], w[1]))))
                .min();
            let Some((new_id, pair)) = best else { break };
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && (symbols[i], symbols[i + 1]) == pair {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(symbols[i]);
                    i += 1;
                }
            }
            symbols = merged;
        }
        out.extend(symbols);
    }

    /// Encodes `text` without BOS/EOS.
    pub fn encode_raw(&self, text: &str) -> Vec<u32> {
        let mut out = Vec::with_capacity(text.len());
        for chunk in pre_split(text) {
            self.encode_chunk(chunk, &mut out);
        }
        out
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            format: VOCAB_FORMAT.to_string(),
            specials: SPECIAL_NAMES
                .iter()
                .zip([self.specials.pad, self.specials.bos, self.specials.eos])
                .map(|(n, id)| (n.to_string(), id))
                .collect(),
            merges: self
                .merges
                .iter()
                .map(|&(a, b)| {
                    [
                        B64.encode(&self.tokens[a as usize]),
                        B64.encode(&self.tokens[b as usize]),
                    ]
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, TokenizerError> {
        let file: VocabFile = serde_json::from_str(json)?;
        if file.format != VOCAB_FORMAT {
            return Err(TokenizerError::Format(format!(
                "unsupported format tag `{}`",
                file.format
            )));
        }
        let mut vocab = Self::base();
        let expected: BTreeMap<String, u32> = SPECIAL_NAMES
            .iter()
            .zip([256, 257, 258])
            .map(|(n, id)| (n.to_string(), id))
            .collect();
        if file.specials != expected {
            return Err(TokenizerError::Format("unexpected special token table".into()));
        }
        let mut by_bytes: HashMap<Vec<u8>, u32> = vocab
            .tokens
            .iter()
            .enumerate()
            .filter(|(id, _)| !vocab.is_special(*id as u32))
            .map(|(id, t)| (t.clone(), id as u32))
            .collect();
        for [a, b] in &file.merges {
            let decode = |s: &str| -> Result<u32, TokenizerError> {
                let bytes = B64.decode(s).map_err(|e| TokenizerError::Format(e.to_string()))?;
                by_bytes
                    .get(&bytes)
                    .copied()
                    .ok_or_else(|| TokenizerError::Format(format!("merge refers to unknown token {s}")))
            };
            let pair = (decode(a)?, decode(b)?);
            let id = vocab.push_merge(pair);
            by_bytes.insert(vocab.tokens[id as usize].clone(), id);
        }
        Ok(vocab)
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    format: String,
    specials: BTreeMap<String, u32>,
    merges: Vec<[String; 2]>,
}

/// Learns merges greedily by pair frequency until the vocabulary holds
/// `vocab_size` tokens or no pair occurs at least twice. Equal counts go to
/// the lexicographically smallest pair of byte strings.
pub fn train_bpe(corpus: &[String], vocab_size: usize) -> Result<Vocabulary, TokenizerError> {
    if corpus.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    if vocab_size < Vocabulary::min_size() {
        return Err(TokenizerError::VocabTooSmall {
            requested: vocab_size,
            minimum: Vocabulary::min_size(),
        });
    }
    let mut word_counts: BTreeMap<&[u8], usize> = BTreeMap::new();
    for text in corpus {
        for chunk in pre_split(text) {
            *word_counts.entry(chunk).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<u32>, usize)> = word_counts
        .into_iter()
        .map(|(w, c)| (w.iter().map(|&b| u32::from(b)).collect(), c))
        .collect();

    let mut vocab = Vocabulary::base();
    while vocab.len() < vocab_size {
        let mut pair_counts: HashMap<(u32, u32), usize> = HashMap::new();
        for (symbols, count) in &words {
            for w in symbols.windows(2) {
                *pair_counts.entry((w[0], w[1])).or_default() += count;
            }
        }
        let best = pair_counts
            .into_iter()
            .filter(|&(_, c)| c >= 2)
            .max_by(|(pa, ca), (pb, cb)| {
                ca.cmp(cb).then_with(|| {
                    let key = |p: &(u32, u32)| (vocab.tokens[p.0 as usize].clone(), vocab.tokens[p.1 as usize].clone());
                    key(pb).cmp(&key(pa))
                })
            });
        let Some((pair, _)) = best else { break };
        let new_id = vocab.push_merge(pair);
        for (symbols, _) in &mut words {
            if symbols.len() < 2 {
                continue;
            }
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && (symbols[i], symbols[i + 1]) == pair {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(symbols[i]);
                    i += 1;
                }
            }
            *symbols = merged;
        }
    }
    Ok(vocab)
}

/// Encodes `text` and wraps it in BOS/EOS. Never fails: every byte has a
/// base token.
pub fn tokenize(vocab: &Vocabulary, text: &str) -> TokenSequence {
    let mut ids = vec![vocab.specials.bos];
    ids.extend(vocab.encode_raw(text));
    ids.push(vocab.specials.eos);
    TokenSequence { ids }
}

/// Concatenates token bytes, skipping special tokens, and decodes UTF-8.
pub fn detokenize(vocab: &Vocabulary, seq: &TokenSequence) -> Result<String, TokenizerError> {
    let mut bytes = Vec::new();
    for &id in &seq.ids {
        let token = vocab
            .token_bytes(id)
            .ok_or(TokenizerError::InvalidId { id, size: vocab.len() })?;
        if !vocab.is_special(id) {
            bytes.extend_from_slice(token);
        }
    }
    Ok(String::from_utf8(bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pre_split_keeps_leading_spaces() {
        let chunks: Vec<&[u8]> = pre_split("age is  35,").collect();
        assert_eq!(chunks, vec![&b"age"[..], b" is", b" ", b" 35,"]);
        assert_eq!(pre_split("").count(), 0);
        assert_eq!(pre_split(" ").collect::<Vec<_>>(), vec![&b" "[..]]);
    }

    #[test]
    fn single_candidate_pair_is_merged() {
        let vocab = train_bpe(&["aaaa".to_string()], 259 + 1).unwrap();
        assert_eq!(vocab.merges()[0], (u32::from(b'a'), u32::from(b'a')));
    }

    #[test]
    fn minimum_size_means_no_merges() {
        let vocab = train_bpe(&["aaaa bbbb".to_string()], Vocabulary::min_size()).unwrap();
        assert!(vocab.merges().is_empty());
        assert_eq!(vocab.encode_raw("ab"), vec![97, 98]);
    }

    #[test]
    fn errors() {
        assert!(matches!(train_bpe(&[], 300), Err(TokenizerError::EmptyCorpus)));
        assert!(matches!(
            train_bpe(&["a".into()], 200),
            Err(TokenizerError::VocabTooSmall { .. })
        ));
        let vocab = Vocabulary::base();
        let bad = TokenSequence {
            ids: vec![vocab.len() as u32],
        };
        assert!(matches!(
            detokenize(&vocab, &bad),
            Err(TokenizerError::InvalidId { .. })
        ));
    }

    #[test]
    fn empty_text_and_base_tokens() {
        let vocab = train_bpe(&["hello hello".into()], 300).unwrap();
        let s = tokenize(&vocab, "");
        assert_eq!(s.ids, vec![vocab.specials().bos, vocab.specials().eos]);
        assert_eq!(detokenize(&vocab, &s).unwrap(), "");
        let a = TokenSequence { ids: vec![97] };
        assert_eq!(detokenize(&vocab, &a).unwrap(), "a");
        let emoji = "🦀";
        let ids = vocab.encode_raw(emoji);
        assert_eq!(ids, emoji.bytes().map(u32::from).collect::<Vec<_>>());
    }

    #[test]
    fn ties_prefer_smallest_pair() {
        // "ab" and "cd" both occur twice and outrank every other pair.
        let vocab = train_bpe(&["cdxabycdzab".into()], 260).unwrap();
        assert_eq!(vocab.token_bytes(259).unwrap(), b"ab");
    }

    #[test]
    fn json_round_trip() {
        let vocab = train_bpe(&vec!["age is 35, job is admin.,".to_string(); 3], 300).unwrap();
        let back = Vocabulary::from_json(&vocab.to_json()).unwrap();
        assert_eq!(back, vocab);
        let tampered = vocab.to_json().replace(VOCAB_FORMAT, "other/9");
        assert!(matches!(
            Vocabulary::from_json(&tampered),
            Err(TokenizerError::Format(_))
        ));
    }
}
