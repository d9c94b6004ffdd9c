//! Subword encoding of reviews into fixed-length model inputs.
//!
//! Uses the bundled demo vocabulary unless a `tokenizer.json` path is given.

use anyhow::Result;
use avis::encode::{demo::demo_vocab, detokenize, encode_review, tokenize, EncoderVocab};

pub fn run(tokenizer: Option<&str>) -> Result<()> {
    let vocab = match tokenizer {
        Some(p) => EncoderVocab::load(p)?,
        None => demo_vocab(),
    }
    .with_max_len(24)?;
    println!(
        "vocabulary of {} pieces, <s>={} </s>={} <pad>={}",
        vocab.vocab_size(),
        vocab.bos_id(),
        vocab.eos_id(),
        vocab.pad_id()
    );

    let text = "Depuis la mise à jour, l'appli ne synchronise plus ma montre 😞";
    let pieces = tokenize(text, &vocab);
    println!("\n{text}");
    println!(
        "{}",
        pieces.iter().map(|p| p.piece.as_str()).collect::<Vec<_>>().join(" | ")
    );

    let enc = encode_review(text, &vocab);
    enc.validate(&vocab)?;
    println!("\nids  {:?}", enc.token_ids);
    println!("mask {:?}", enc.attention_mask);
    println!("{} of {} positions active", enc.active_len, enc.len());
    let inner = &enc.token_ids[1..enc.active_len - 1];
    println!("decoded (truncated): {}", detokenize(inner, &vocab));

    let short = encode_review("Super appli", &vocab);
    println!("\nshort review: {} active, padded to {}", short.active_len, short.len());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<()> {
    let arg = std::env::args().nth(1);
    run(arg.as_deref())
}
