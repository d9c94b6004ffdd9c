//! Unigram subword segmentation with a metaspace word convention and byte
//! fallback, compatible with SentencePiece-style `tokenizer.json` assets.

use std::collections::HashMap;

use unicode_normalization::UnicodeNormalization;

/// Penalty added to the lowest piece score for characters no piece covers.
const UNK_PENALTY: f64 = 10.0;

/// Text normalization applied before segmentation.
#[derive(Debug, Clone, PartialEq)]
pub enum Normalizer {
    Nfc,
    Nfkc,
    Replace { pattern: String, content: String },
    Sequence(Vec<Normalizer>),
}

impl Normalizer {
    pub fn apply(&self, text: &str) -> String {
        match self {
            Normalizer::Nfc => text.nfc().collect(),
            Normalizer::Nfkc => text.nfkc().collect(),
            Normalizer::Replace { pattern, content } => text.replace(pattern.as_str(), content),
            Normalizer::Sequence(steps) => steps
                .iter()
                .fold(text.to_string(), |acc, step| step.apply(&acc)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrependScheme {
    Always,
    First,
    Never,
}

/// Word splitting: spaces become `replacement` and a replacement is
/// prepended to the text; words start at each replacement character.
/// The prefix is added unconditionally so a leading space survives a
/// round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct Metaspace {
    pub replacement: char,
    pub prepend_scheme: PrependScheme,
    /// Collapse whitespace runs before replacing (lossy for repeated spaces).
    pub whitespace_split: bool,
}

impl Default for Metaspace {
    fn default() -> Self {
        Metaspace {
            replacement: '\u{2581}',
            prepend_scheme: PrependScheme::Always,
            whitespace_split: false,
        }
    }
}

impl Metaspace {
    pub fn words(&self, text: &str) -> Vec<String> {
        if text.is_empty() {
            return Vec::new();
        }
        let r = self.replacement;
        let joined = if self.whitespace_split {
            text.split_whitespace().collect::<Vec<_>>().join(" ")
        } else {
            text.to_string()
        };
        let mut s: String = joined.chars().map(|c| if c == ' ' { r } else { c }).collect();
        if self.prepend_scheme != PrependScheme::Never {
            s.insert(0, r);
        }
        let mut words = Vec::new();
        let mut current = String::new();
        for c in s.chars() {
            if c == r && !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            current.push(c);
        }
        if !current.is_empty() {
            words.push(current);
        }
        words
    }

    pub fn decode(&self, joined: &str) -> String {
        let s: String = joined
            .chars()
            .map(|c| if c == self.replacement { ' ' } else { c })
            .collect();
        match self.prepend_scheme {
            PrependScheme::Never => s,
            _ => s.strip_prefix(' ').map(str::to_string).unwrap_or(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PieceKind {
    Normal,
    /// Special tokens such as `<s>`; never produced by segmentation.
    Control,
    Unknown,
    /// `<0xNN>` byte-fallback piece.
    Byte(u8),
}

/// A vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabPiece {
    pub text: String,
    pub score: f64,
    pub kind: PieceKind,
}

/// Parses `<0xNN>`.
pub fn parse_byte_piece(text: &str) -> Option<u8> {
    let hex = text.strip_prefix("<0x")?.strip_suffix('>')?;
    if hex.len() != 2 {
        return None;
    }
    u8::from_str_radix(hex, 16).ok()
}

pub fn byte_piece(b: u8) -> String {
    format!("<0x{b:02X}>")
}

/// Scored subword vocabulary with Viterbi segmentation.
#[derive(Debug, Clone)]
pub struct UnigramModel {
    pieces: Vec<VocabPiece>,
    index: HashMap<String, u32>,
    unk_id: u32,
    byte_ids: Option<Box<[u32; 256]>>,
    max_piece_chars: usize,
    unk_score: f64,
}

impl UnigramModel {
    /// `byte_fallback` takes effect only if all 256 byte pieces exist.
    pub fn new(pieces: Vec<VocabPiece>, unk_id: u32, byte_fallback: bool) -> Self {
        let mut index = HashMap::new();
        let mut bytes = [u32::MAX; 256];
        let mut max_piece_chars = 1;
        let mut min_score = f64::INFINITY;
        for (id, piece) in pieces.iter().enumerate() {
            let id = id as u32;
            match piece.kind {
                PieceKind::Normal => {
                    index.entry(piece.text.clone()).or_insert(id);
                    max_piece_chars = max_piece_chars.max(piece.text.chars().count());
                    min_score = min_score.min(piece.score);
                }
                PieceKind::Byte(b) => bytes[b as usize] = id,
                PieceKind::Control | PieceKind::Unknown => {}
            }
        }
        let byte_ids = (byte_fallback && bytes.iter().all(|&id| id != u32::MAX))
            .then(|| Box::new(bytes));
        let min_score = if min_score.is_finite() { min_score } else { 0.0 };
        UnigramModel {
            pieces,
            index,
            unk_id,
            byte_ids,
            max_piece_chars,
            unk_score: min_score - UNK_PENALTY,
        }
    }

    pub fn pieces(&self) -> &[VocabPiece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn unk_id(&self) -> u32 {
        self.unk_id
    }

    pub fn has_byte_fallback(&self) -> bool {
        self.byte_ids.is_some()
    }

    pub fn piece_id(&self, text: &str) -> Option<u32> {
        self.index.get(text).copied()
    }

    /// Score of segmenting a word into the given substrings: known pieces
    /// contribute their score, anything else the unknown-character score.
    pub fn segmentation_score(&self, parts: &[&str]) -> f64 {
        parts
            .iter()
            .map(|p| match self.index.get(*p) {
                Some(&id) => self.pieces[id as usize].score,
                None => self.unk_score,
            })
            .sum()
    }

    /// Highest-scoring segmentation of one word, as substrings.
    pub fn segment<'w>(&self, word: &'w str) -> Vec<&'w str> {
        let offsets: Vec<usize> = word
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(word.len()))
            .collect();
        let n = offsets.len() - 1;
        // best[end] = (score, start of the last piece)
        let mut best: Vec<(f64, usize)> = vec![(f64::NEG_INFINITY, 0); n + 1];
        best[0] = (0.0, 0);
        for end in 1..=n {
            let lo = end.saturating_sub(self.max_piece_chars);
            for start in lo..end {
                let base = best[start].0;
                if base == f64::NEG_INFINITY {
                    continue;
                }
                let sub = &word[offsets[start]..offsets[end]];
                let score = match self.index.get(sub) {
                    Some(&id) => self.pieces[id as usize].score,
                    None if end - start == 1 => self.unk_score,
                    None => continue,
                };
                if base + score > best[end].0 {
                    best[end] = (base + score, start);
                }
            }
        }
        let mut parts = Vec::new();
        let mut end = n;
        while end > 0 {
            let start = best[end].1;
            parts.push(&word[offsets[start]..offsets[end]]);
            end = start;
        }
        parts.reverse();
        parts
    }

    /// Ids for one segmented part; uncovered characters expand to byte
    /// pieces when available, else the unknown id.
    pub fn part_ids(&self, part: &str, out: &mut Vec<u32>) {
        if let Some(&id) = self.index.get(part) {
            out.push(id);
        } else if let Some(bytes) = &self.byte_ids {
            out.extend(part.bytes().map(|b| bytes[b as usize]));
        } else {
            out.push(self.unk_id);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(pieces: &[(&str, f64)]) -> UnigramModel {
        let mut v = vec![VocabPiece {
            text: "<unk>".into(),
            score: 0.0,
            kind: PieceKind::Unknown,
        }];
        v.extend(pieces.iter().map(|(t, s)| VocabPiece {
            text: t.to_string(),
            score: *s,
            kind: PieceKind::Normal,
        }));
        UnigramModel::new(v, 0, false)
    }

    /// Every way of cutting `word` into non-empty substrings.
    fn all_segmentations(word: &str) -> Vec<Vec<&str>> {
        let idx: Vec<usize> = word.char_indices().map(|(i, _)| i).skip(1).collect();
        let mut out = Vec::new();
        for mask in 0u32..(1 << idx.len()) {
            let mut parts = Vec::new();
            let mut start = 0;
            for (k, &cut) in idx.iter().enumerate() {
                if mask & (1 << k) != 0 {
                    parts.push(&word[start..cut]);
                    start = cut;
                }
            }
            parts.push(&word[start..]);
            out.push(parts);
        }
        out
    }

    /// A cut is admissible if each part is a known piece or a single char.
    fn brute_force_best(m: &UnigramModel, word: &str) -> f64 {
        all_segmentations(word)
            .into_iter()
            .filter(|parts| {
                parts
                    .iter()
                    .all(|p| m.piece_id(p).is_some() || p.chars().count() == 1)
            })
            .map(|parts| m.segmentation_score(&parts))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn viterbi_matches_exhaustive_search() {
        let m = model(&[
            ("▁", -3.0),
            ("▁t", -4.0),
            ("▁très", -5.0),
            ("rès", -4.5),
            ("r", -6.0),
            ("è", -6.0),
            ("s", -6.0),
            ("▁bi", -5.5),
            ("en", -4.0),
            ("▁bien", -6.5),
            ("e", -6.0),
            ("n", -6.0),
            ("i", -6.0),
            ("b", -6.0),
        ]);
        for word in ["▁très", "▁bien", "▁tr", "▁bienrès", "▁xèn", "▁bbiien", "▁"] {
            let seg = m.segment(word);
            assert_eq!(seg.concat(), word);
            let got = m.segmentation_score(&seg);
            let best = brute_force_best(&m, word);
            assert!((got - best).abs() < 1e-12, "{word}: {got} vs {best}");
        }
    }

    #[test]
    fn metaspace_words() {
        let ms = Metaspace::default();
        assert_eq!(ms.words("Très bien"), vec!["▁Très", "▁bien"]);
        assert_eq!(ms.words("a  b"), vec!["▁a", "▁", "▁b"]);
        assert_eq!(ms.words(" a"), vec!["▁", "▁a"]);
        assert!(ms.words("").is_empty());
        assert_eq!(ms.decode("▁Très▁bien"), "Très bien");
        assert_eq!(ms.decode("▁▁a"), " a");
    }

    #[test]
    fn byte_piece_parsing() {
        assert_eq!(parse_byte_piece("<0x0A>"), Some(10));
        assert_eq!(parse_byte_piece(&byte_piece(255)), Some(255));
        assert_eq!(parse_byte_piece("<0x1>"), None);
        assert_eq!(parse_byte_piece("<s>"), None);
    }

    #[test]
    fn normalizers() {
        assert_eq!(Normalizer::Nfkc.apply("ﬁ"), "fi");
        assert_eq!(Normalizer::Nfc.apply("e\u{301}"), "é");
        let seq = Normalizer::Sequence(vec![
            Normalizer::Replace {
                pattern: "``".into(),
                content: "\"".into(),
            },
            Normalizer::Nfc,
        ]);
        assert_eq!(seq.apply("``a"), "\"a");
    }
}
