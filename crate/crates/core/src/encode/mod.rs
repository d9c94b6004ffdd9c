//! Model input encoding: subword tokenization, `<s>` / `</s>` boundary
//! tokens, padding to a fixed length and attention masks.
//!
//! The subword vocabulary is a pretrained asset (`tokenizer.json`) loaded
//! from disk; nothing here learns a vocabulary.

pub mod demo;
mod hf;
pub mod unigram;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use unigram::{Metaspace, Normalizer, PieceKind, UnigramModel};

/// Sequence length of the pretrained French encoder.
pub const DEFAULT_MAX_LEN: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum EncodeError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid tokenizer asset: {message}")]
    Asset { path: PathBuf, message: String },
    #[error("special token `{0}` missing from vocabulary")]
    MissingSpecial(&'static str),
    #[error("special token ids must be distinct (bos={bos}, eos={eos}, pad={pad})")]
    SpecialCollision { bos: u32, eos: u32, pad: u32 },
    #[error("max_len must be at least 2, got {0}")]
    MaxLen(usize),
    #[error("encoding violates the input contract: {0}")]
    Contract(String),
}

/// One subword produced by [`tokenize`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subword {
    pub id: u32,
    pub piece: String,
}

/// Loaded tokenizer plus the special ids and sequence length of the model.
#[derive(Debug, Clone)]
pub struct EncoderVocab {
    model: UnigramModel,
    normalizer: Option<Normalizer>,
    metaspace: Metaspace,
    bos_id: u32,
    eos_id: u32,
    pad_id: u32,
    max_len: usize,
}

impl EncoderVocab {
    /// Builds a vocabulary from pieces; `<s>`, `</s>`, `<pad>` and `<unk>`
    /// must be among them.
    pub fn new(
        model: UnigramModel,
        normalizer: Option<Normalizer>,
        metaspace: Metaspace,
    ) -> Result<Self, EncodeError> {
        let find = |name: &'static str| {
            model
                .pieces()
                .iter()
                .position(|p| p.text == name && p.kind != PieceKind::Normal)
                .map(|i| i as u32)
                .ok_or(EncodeError::MissingSpecial(name))
        };
        let bos_id = find("<s>")?;
        let eos_id = find("</s>")?;
        let pad_id = find("<pad>")?;
        if bos_id == eos_id || bos_id == pad_id || eos_id == pad_id {
            return Err(EncodeError::SpecialCollision {
                bos: bos_id,
                eos: eos_id,
                pad: pad_id,
            });
        }
        Ok(EncoderVocab {
            model,
            normalizer,
            metaspace,
            bos_id,
            eos_id,
            pad_id,
            max_len: DEFAULT_MAX_LEN,
        })
    }

    /// Loads `tokenizer.json` from a file or an asset directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EncodeError> {
        let path = path.as_ref();
        let file = if path.is_dir() {
            path.join("tokenizer.json")
        } else {
            path.to_path_buf()
        };
        hf::load(&file)
    }

    /// Writes the vocabulary as a `tokenizer.json` file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EncodeError> {
        hf::save(self, path.as_ref())
    }

    pub fn with_max_len(mut self, max_len: usize) -> Result<Self, EncodeError> {
        if max_len < 2 {
            return Err(EncodeError::MaxLen(max_len));
        }
        self.max_len = max_len;
        Ok(self)
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn bos_id(&self) -> u32 {
        self.bos_id
    }

    pub fn eos_id(&self) -> u32 {
        self.eos_id
    }

    pub fn pad_id(&self) -> u32 {
        self.pad_id
    }

    pub fn unk_id(&self) -> u32 {
        self.model.unk_id()
    }

    pub fn vocab_size(&self) -> usize {
        self.model.len()
    }

    pub fn model(&self) -> &UnigramModel {
        &self.model
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.normalizer.as_ref()
    }

    pub fn metaspace(&self) -> &Metaspace {
        &self.metaspace
    }

    /// The text as the tokenizer sees it after normalization.
    pub fn normalize(&self, text: &str) -> String {
        match &self.normalizer {
            Some(n) => n.apply(text),
            None => text.to_string(),
        }
    }
}

/// Splits text into subword units. Deterministic; characters missing from
/// the vocabulary become byte pieces (or `<unk>` without byte fallback).
pub fn tokenize(text: &str, vocab: &EncoderVocab) -> Vec<Subword> {
    let normalized = vocab.normalize(text);
    let mut ids = Vec::new();
    for word in vocab.metaspace.words(&normalized) {
        for part in vocab.model.segment(&word) {
            vocab.model.part_ids(part, &mut ids);
        }
    }
    ids.into_iter()
        .map(|id| Subword {
            id,
            piece: vocab.model.pieces()[id as usize].text.clone(),
        })
        .collect()
}

/// Inverse of [`tokenize`] up to normalization and the metaspace convention.
pub fn detokenize(ids: &[u32], vocab: &EncoderVocab) -> String {
    let pieces = vocab.model.pieces();
    let mut joined = String::new();
    let mut pending: Vec<u8> = Vec::new();
    for &id in ids {
        let Some(piece) = pieces.get(id as usize) else {
            continue;
        };
        if let PieceKind::Byte(b) = piece.kind {
            pending.push(b);
            continue;
        }
        if !pending.is_empty() {
            joined.push_str(&String::from_utf8_lossy(&pending));
            pending.clear();
        }
        match piece.kind {
            PieceKind::Normal => joined.push_str(&piece.text),
            PieceKind::Unknown => joined.push('\u{FFFD}'),
            PieceKind::Control | PieceKind::Byte(_) => {}
        }
    }
    if !pending.is_empty() {
        joined.push_str(&String::from_utf8_lossy(&pending));
    }
    vocab.metaspace.decode(&joined)
}

/// Fixed-length model input: `<s> subwords </s> <pad>...`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedReview {
    pub token_ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub active_len: usize,
}

impl EncodedReview {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Checks every structural invariant against `vocab`.
    pub fn validate(&self, vocab: &EncoderVocab) -> Result<(), EncodeError> {
        let fail = |m: String| Err(EncodeError::Contract(m));
        let n = vocab.max_len();
        if self.token_ids.len() != n || self.attention_mask.len() != n {
            return fail(format!(
                "length {} / mask {} != {n}",
                self.token_ids.len(),
                self.attention_mask.len()
            ));
        }
        if self.active_len < 2 || self.active_len > n {
            return fail(format!("active_len {} out of range", self.active_len));
        }
        if self.token_ids[0] != vocab.bos_id() {
            return fail("first token is not <s>".into());
        }
        if self.token_ids[self.active_len - 1] != vocab.eos_id() {
            return fail("last active token is not </s>".into());
        }
        for i in 0..n {
            let active = i < self.active_len;
            if self.attention_mask[i] != u8::from(active) {
                return fail(format!("mask[{i}] = {}", self.attention_mask[i]));
            }
            if !active && self.token_ids[i] != vocab.pad_id() {
                return fail(format!("position {i} is padding but not <pad>"));
            }
            if self.token_ids[i] as usize >= vocab.vocab_size() {
                return fail(format!("id {} outside vocabulary", self.token_ids[i]));
            }
        }
        Ok(())
    }
}

/// Encodes one review. Over-long inputs keep their first `max_len - 2`
/// subwords so `<s>` and `</s>` always survive.
pub fn encode_review(text: &str, vocab: &EncoderVocab) -> EncodedReview {
    let n = vocab.max_len();
    let subwords = tokenize(text, vocab);
    let keep = subwords.len().min(n - 2);
    let mut token_ids = Vec::with_capacity(n);
    token_ids.push(vocab.bos_id());
    token_ids.extend(subwords[..keep].iter().map(|s| s.id));
    token_ids.push(vocab.eos_id());
    let active_len = token_ids.len();
    token_ids.resize(n, vocab.pad_id());
    let mut attention_mask = vec![1u8; active_len];
    attention_mask.resize(n, 0);
    EncodedReview {
        token_ids,
        attention_mask,
        active_len,
    }
}

/// Encodes many reviews, preserving order.
pub fn encode_batch<S: AsRef<str>>(texts: &[S], vocab: &EncoderVocab) -> Vec<EncodedReview> {
    texts
        .iter()
        .map(|t| encode_review(t.as_ref(), vocab))
        .collect()
}
