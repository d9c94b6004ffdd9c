//! A small hand-curated French vocabulary for examples and tests.
//!
//! It mirrors the layout of the pretrained asset (special tokens, scored
//! unigram pieces, byte fallback) but is far smaller. Models trained with it
//! are only useful for smoke tests.

use std::collections::HashSet;

use super::unigram::{byte_piece, Metaspace, Normalizer, PieceKind, UnigramModel, VocabPiece};
use super::EncoderVocab;

const PIECES: &str = include_str!("../../assets/demo_pieces.txt");

const CHARS: &str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789\
                     àâäçéèêëîïôöûùüÿœæÀÂÇÉÈÊÎÔÛŒ.,;:!?'\"()-/%&@#*+=’…";

pub fn demo_vocab() -> EncoderVocab {
    let mut pieces: Vec<VocabPiece> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut push = |pieces: &mut Vec<VocabPiece>, text: String, score: f64, kind: PieceKind| {
        if seen.insert(text.clone()) {
            pieces.push(VocabPiece { text, score, kind });
        }
    };
    for special in ["<s>", "<pad>", "</s>"] {
        push(&mut pieces, special.into(), 0.0, PieceKind::Control);
    }
    push(&mut pieces, "<unk>".into(), 0.0, PieceKind::Unknown);
    for b in 0..=255u8 {
        push(&mut pieces, byte_piece(b), 0.0, PieceKind::Byte(b));
    }
    push(&mut pieces, "\u{2581}".into(), -4.0, PieceKind::Normal);

    let mut section = "";
    let mut rank = 0.0;
    for line in PIECES.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.starts_with('[') {
            section = line;
            continue;
        }
        rank += 1.0;
        match section {
            "[words]" => push(
                &mut pieces,
                format!("\u{2581}{line}"),
                -6.0 - 0.001 * rank,
                PieceKind::Normal,
            ),
            _ => push(&mut pieces, line.to_string(), -7.0 - 0.001 * rank, PieceKind::Normal),
        }
    }
    for c in CHARS.chars() {
        push(&mut pieces, c.to_string(), -9.0, PieceKind::Normal);
        push(&mut pieces, format!("\u{2581}{c}"), -9.5, PieceKind::Normal);
    }
    EncoderVocab::new(
        UnigramModel::new(pieces, 3, true),
        Some(Normalizer::Nfc),
        Metaspace::default(),
    )
    .expect("demo vocabulary has all special tokens")
}
