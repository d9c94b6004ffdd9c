//! Reading and writing the `tokenizer.json` asset format (Unigram model).

use std::collections::HashSet;
use std::path::Path;

use serde_json::{json, Value};

use super::unigram::{
    parse_byte_piece, Metaspace, Normalizer, PieceKind, PrependScheme, UnigramModel, VocabPiece,
};
use super::{EncodeError, EncoderVocab};
use crate::fsutil;

pub(super) fn load(path: &Path) -> Result<EncoderVocab, EncodeError> {
    let bytes = std::fs::read(path).map_err(|source| EncodeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let asset = |message: String| EncodeError::Asset {
        path: path.to_path_buf(),
        message,
    };
    let root: Value = serde_json::from_slice(&bytes).map_err(|e| asset(e.to_string()))?;
    let model = &root["model"];
    if model["type"].as_str() != Some("Unigram") {
        return Err(asset(format!(
            "unsupported model type {}, expected Unigram",
            model["type"]
        )));
    }
    let specials: HashSet<u64> = root["added_tokens"]
        .as_array()
        .map(|tokens| {
            tokens
                .iter()
                .filter(|t| t["special"].as_bool().unwrap_or(false))
                .filter_map(|t| t["id"].as_u64())
                .collect()
        })
        .unwrap_or_default();
    let unk_id = model["unk_id"].as_u64();
    let vocab = model["vocab"]
        .as_array()
        .ok_or_else(|| asset("model.vocab is not an array".into()))?;
    let mut pieces = Vec::with_capacity(vocab.len());
    for (i, entry) in vocab.iter().enumerate() {
        let text = entry[0]
            .as_str()
            .ok_or_else(|| asset(format!("vocab[{i}] has no piece string")))?
            .to_string();
        let score = entry[1]
            .as_f64()
            .ok_or_else(|| asset(format!("vocab[{i}] has no score")))?;
        let kind = if Some(i as u64) == unk_id {
            PieceKind::Unknown
        } else if specials.contains(&(i as u64)) || is_control(&text) {
            PieceKind::Control
        } else if let Some(b) = parse_byte_piece(&text) {
            PieceKind::Byte(b)
        } else {
            PieceKind::Normal
        };
        pieces.push(VocabPiece { text, score, kind });
    }
    let unk_id = match unk_id {
        Some(id) if (id as usize) < pieces.len() => id as u32,
        _ => pieces
            .iter()
            .position(|p| p.text == "<unk>")
            .map(|i| {
                pieces[i].kind = PieceKind::Unknown;
                i as u32
            })
            .ok_or(EncodeError::MissingSpecial("<unk>"))?,
    };
    let byte_fallback = model["byte_fallback"].as_bool().unwrap_or(false);
    let normalizer = parse_normalizer(&root["normalizer"]).map_err(asset)?;
    let metaspace = parse_pre_tokenizer(&root["pre_tokenizer"]).map_err(asset)?;
    EncoderVocab::new(
        UnigramModel::new(pieces, unk_id, byte_fallback),
        normalizer,
        metaspace,
    )
}

fn is_control(text: &str) -> bool {
    matches!(text, "<s>" | "</s>" | "<pad>" | "<mask>" | "<unk>") || text.ends_with("NOTUSED")
}

fn parse_normalizer(v: &Value) -> Result<Option<Normalizer>, String> {
    if v.is_null() {
        return Ok(None);
    }
    let n = match v["type"].as_str() {
        Some("NFC") => Normalizer::Nfc,
        // A precompiled SentencePiece charsmap is NFKC-based; NFKC is the
        // closest portable equivalent.
        Some("NFKC") | Some("Precompiled") => Normalizer::Nfkc,
        Some("Replace") => {
            let pattern = v["pattern"]["String"]
                .as_str()
                .ok_or("only literal Replace patterns are supported")?;
            Normalizer::Replace {
                pattern: pattern.to_string(),
                content: v["content"].as_str().unwrap_or_default().to_string(),
            }
        }
        Some("Sequence") => {
            let steps = v["normalizers"]
                .as_array()
                .ok_or("Sequence normalizer without steps")?
                .iter()
                .map(parse_normalizer)
                .collect::<Result<Vec<_>, _>>()?;
            Normalizer::Sequence(steps.into_iter().flatten().collect())
        }
        other => return Err(format!("unsupported normalizer {other:?}")),
    };
    Ok(Some(n))
}

fn parse_pre_tokenizer(v: &Value) -> Result<Metaspace, String> {
    let mut ms = Metaspace::default();
    match v["type"].as_str() {
        None => {}
        Some("Metaspace") => apply_metaspace(v, &mut ms),
        Some("Sequence") => {
            for step in v["pretokenizers"].as_array().into_iter().flatten() {
                match step["type"].as_str() {
                    Some("Metaspace") => apply_metaspace(step, &mut ms),
                    Some("WhitespaceSplit") => ms.whitespace_split = true,
                    other => return Err(format!("unsupported pre-tokenizer {other:?}")),
                }
            }
        }
        Some("WhitespaceSplit") => ms.whitespace_split = true,
        other => return Err(format!("unsupported pre-tokenizer {other:?}")),
    }
    Ok(ms)
}

fn apply_metaspace(v: &Value, ms: &mut Metaspace) {
    if let Some(c) = v["replacement"].as_str().and_then(|s| s.chars().next()) {
        ms.replacement = c;
    }
    ms.prepend_scheme = match (v["prepend_scheme"].as_str(), v["add_prefix_space"].as_bool()) {
        (Some("never"), _) | (None, Some(false)) => PrependScheme::Never,
        (Some("first"), _) => PrependScheme::First,
        _ => PrependScheme::Always,
    };
}

fn normalizer_json(n: &Normalizer) -> Value {
    match n {
        Normalizer::Nfc => json!({"type": "NFC"}),
        Normalizer::Nfkc => json!({"type": "NFKC"}),
        Normalizer::Replace { pattern, content } => {
            json!({"type": "Replace", "pattern": {"String": pattern}, "content": content})
        }
        Normalizer::Sequence(steps) => {
            json!({"type": "Sequence", "normalizers": steps.iter().map(normalizer_json).collect::<Vec<_>>()})
        }
    }
}

pub(super) fn save(vocab: &EncoderVocab, path: &Path) -> Result<(), EncodeError> {
    let pieces = vocab.model().pieces();
    let added: Vec<Value> = pieces
        .iter()
        .enumerate()
        .filter(|(_, p)| matches!(p.kind, PieceKind::Control | PieceKind::Unknown))
        .map(|(i, p)| {
            json!({"id": i, "content": p.text, "single_word": false, "lstrip": false,
                   "rstrip": false, "normalized": false, "special": true})
        })
        .collect();
    let ms = vocab.metaspace();
    let metaspace = json!({
        "type": "Metaspace",
        "replacement": ms.replacement.to_string(),
        "prepend_scheme": match ms.prepend_scheme {
            PrependScheme::Always => "always",
            PrependScheme::First => "first",
            PrependScheme::Never => "never",
        },
        "split": true,
    });
    let pre_tokenizer = if ms.whitespace_split {
        json!({"type": "Sequence", "pretokenizers": [{"type": "WhitespaceSplit"}, metaspace]})
    } else {
        metaspace
    };
    let root = json!({
        "version": "1.0",
        "truncation": null,
        "padding": null,
        "added_tokens": added,
        "normalizer": vocab.normalizer().map(normalizer_json),
        "pre_tokenizer": pre_tokenizer,
        "post_processor": {
            "type": "RobertaProcessing",
            "sep": ["</s>", vocab.eos_id()],
            "cls": ["<s>", vocab.bos_id()],
            "trim_offsets": true,
            "add_prefix_space": true
        },
        "decoder": {"type": "Metaspace", "replacement": ms.replacement.to_string(), "prepend_scheme": "always", "split": true},
        "model": {
            "type": "Unigram",
            "unk_id": vocab.unk_id(),
            "byte_fallback": vocab.model().has_byte_fallback(),
            "vocab": pieces.iter().map(|p| json!([p.text, p.score])).collect::<Vec<_>>(),
        },
    });
    let bytes = serde_json::to_vec_pretty(&root).expect("json serialization");
    fsutil::write_atomic(path, &bytes).map_err(|source| EncodeError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{demo, tokenize};
    use super::*;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = demo::demo_vocab();
        v.save(dir.path().join("tokenizer.json")).unwrap();
        let back = EncoderVocab::load(dir.path()).unwrap();
        assert_eq!(back.vocab_size(), v.vocab_size());
        assert_eq!(
            (back.bos_id(), back.eos_id(), back.pad_id(), back.unk_id()),
            (v.bos_id(), v.eos_id(), v.pad_id(), v.unk_id())
        );
        assert_eq!(back.model().pieces(), v.model().pieces());
        for text in ["Très bien", "C'est une très bonne application. ☃"] {
            assert_eq!(tokenize(text, &back), tokenize(text, &v));
        }
    }

    #[test]
    fn reads_camembert_style_asset() {
        // layout of the pretrained French asset: fairseq specials first,
        // Precompiled normalizer, legacy Metaspace flags, no byte fallback
        let asset = json!({
            "added_tokens": [
                {"id": 0, "content": "<s>NOTUSED", "special": true},
                {"id": 1, "content": "<pad>", "special": true},
                {"id": 2, "content": "</s>NOTUSED", "special": true},
                {"id": 4, "content": "<unk>", "special": true},
                {"id": 5, "content": "<s>", "special": true},
                {"id": 6, "content": "</s>", "special": true},
            ],
            "normalizer": {"type": "Sequence", "normalizers": [
                {"type": "Replace", "pattern": {"String": "``"}, "content": "\""},
                {"type": "Precompiled", "precompiled_charsmap": "AAAA"}
            ]},
            "pre_tokenizer": {"type": "Metaspace", "replacement": "▁", "add_prefix_space": true},
            "model": {"type": "Unigram", "unk_id": 4, "vocab": [
                ["<s>NOTUSED", 0.0], ["<pad>", 0.0], ["</s>NOTUSED", 0.0], ["<unk>", 0.0],
                ["<unk>", 0.0], ["<s>", 0.0], ["</s>", 0.0], ["▁", -2.0], ["▁très", -5.0],
                ["▁bien", -5.0], ["t", -8.0], ["r", -8.0]
            ]}
        });
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tokenizer.json");
        std::fs::write(&p, serde_json::to_vec(&asset).unwrap()).unwrap();
        let v = EncoderVocab::load(&p).unwrap();
        assert_eq!((v.bos_id(), v.eos_id(), v.pad_id(), v.unk_id()), (5, 6, 1, 4));
        let ids: Vec<u32> = tokenize("très bien", &v).iter().map(|s| s.id).collect();
        assert_eq!(ids, vec![8, 9]);
        let ids: Vec<u32> = tokenize("ok", &v).iter().map(|s| s.id).collect();
        assert_eq!(ids, vec![7, 4, 4]);
    }

    #[test]
    fn rejects_other_model_types() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("tokenizer.json");
        std::fs::write(&p, r#"{"model": {"type": "BPE", "vocab": {}}}"#).unwrap();
        assert!(matches!(
            EncoderVocab::load(&p),
            Err(EncodeError::Asset { .. })
        ));
        assert!(matches!(
            EncoderVocab::load(dir.path().join("missing.json")),
            Err(EncodeError::Io { .. })
        ));
    }
}
