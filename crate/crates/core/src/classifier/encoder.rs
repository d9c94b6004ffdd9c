//! RoBERTa-style transformer encoder (the architecture of the pretrained
//! French model), with parameter names matching the published checkpoints.

use candle_core::{DType, Device, IndexOp, Module, Result, Tensor, D};
use candle_nn::{Init, VarBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Encoder hyperparameters; deserializes from a Hugging Face `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_pad")]
    pub pad_token_id: u32,
    #[serde(default = "default_dropout")]
    pub hidden_dropout_prob: f64,
    #[serde(default = "default_dropout")]
    pub attention_probs_dropout_prob: f64,
    #[serde(default = "default_init_range")]
    pub initializer_range: f64,
}

fn default_type_vocab() -> usize {
    1
}
fn default_eps() -> f64 {
    1e-5
}
fn default_pad() -> u32 {
    1
}
fn default_dropout() -> f64 {
    0.1
}
fn default_init_range() -> f64 {
    0.02
}

impl EncoderConfig {
    /// A small randomly initialized encoder for smoke tests: `layers` layers
    /// of width 32 with two heads.
    pub fn tiny(vocab_size: usize, max_len: usize, pad_token_id: u32, layers: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden_size: 32,
            num_hidden_layers: layers,
            num_attention_heads: 2,
            intermediate_size: 64,
            // positions are offset by pad_token_id + 1
            max_position_embeddings: max_len + pad_token_id as usize + 1,
            type_vocab_size: 1,
            layer_norm_eps: 1e-5,
            pad_token_id,
            hidden_dropout_prob: 0.1,
            attention_probs_dropout_prob: 0.1,
            initializer_range: 0.02,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.hidden_size == 0 || self.num_attention_heads == 0 {
            return Err("hidden_size and num_attention_heads must be positive".into());
        }
        if !self.hidden_size.is_multiple_of(self.num_attention_heads) {
            return Err(format!(
                "hidden_size {} not divisible by {} heads",
                self.hidden_size, self.num_attention_heads
            ));
        }
        for p in [self.hidden_dropout_prob, self.attention_probs_dropout_prob] {
            if !(0.0..1.0).contains(&p) {
                return Err(format!("dropout probability {p} outside [0, 1)"));
            }
        }
        Ok(())
    }

    /// Longest input the position table supports.
    pub fn max_input_len(&self) -> usize {
        self.max_position_embeddings
            .saturating_sub(self.pad_token_id as usize + 1)
    }
}

/// Seeded dropout masks, so training is reproducible on the CPU backend.
pub struct Dropout {
    rng: ChaCha8Rng,
}

impl Dropout {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Dropout { rng }
    }

    pub fn apply(&mut self, xs: &Tensor, p: f64) -> Result<Tensor> {
        if p <= 0.0 {
            return Ok(xs.clone());
        }
        let keep = 1.0 - p;
        let scale = (1.0 / keep) as f32;
        let mask: Vec<f32> = (0..xs.elem_count())
            .map(|_| if self.rng.random::<f64>() < keep { scale } else { 0.0 })
            .collect();
        let mask = Tensor::from_vec(mask, xs.shape(), xs.device())?.to_dtype(xs.dtype())?;
        xs.mul(&mask)
    }
}

fn maybe_dropout(xs: Tensor, p: f64, dropout: &mut Option<&mut Dropout>) -> Result<Tensor> {
    match dropout {
        Some(d) => d.apply(&xs, p),
        None => Ok(xs),
    }
}

pub(crate) struct Linear {
    weight: Tensor,
    bias: Tensor,
}

impl Linear {
    pub(crate) fn new(vb: VarBuilder, in_dim: usize, out_dim: usize) -> Result<Self> {
        Ok(Linear {
            weight: vb.get_with_hints((out_dim, in_dim), "weight", Init::Const(0.0))?,
            bias: vb.get_with_hints(out_dim, "bias", Init::Const(0.0))?,
        })
    }
}

impl Module for Linear {
    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        xs.broadcast_matmul(&self.weight.t()?)?
            .broadcast_add(&self.bias)
    }
}

/// Layer normalization from primitive ops (differentiable on every backend).
struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    fn new(vb: VarBuilder, dim: usize, eps: f64) -> Result<Self> {
        Ok(LayerNorm {
            weight: vb.get_with_hints(dim, "weight", Init::Const(1.0))?,
            bias: vb.get_with_hints(dim, "bias", Init::Const(0.0))?,
            eps,
        })
    }
}

impl Module for LayerNorm {
    fn forward(&self, xs: &Tensor) -> Result<Tensor> {
        let mean = xs.mean_keepdim(D::Minus1)?;
        let centered = xs.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        centered
            .broadcast_div(&(var + self.eps)?.sqrt()?)?
            .broadcast_mul(&self.weight)?
            .broadcast_add(&self.bias)
    }
}

struct Embeddings {
    word: Tensor,
    position: Tensor,
    token_type: Tensor,
    norm: LayerNorm,
    dropout: f64,
}

impl Embeddings {
    fn new(vb: VarBuilder, cfg: &EncoderConfig) -> Result<Self> {
        let h = cfg.hidden_size;
        Ok(Embeddings {
            word: vb.get_with_hints((cfg.vocab_size, h), "word_embeddings.weight", Init::Const(0.0))?,
            position: vb.get_with_hints(
                (cfg.max_position_embeddings, h),
                "position_embeddings.weight",
                Init::Const(0.0),
            )?,
            token_type: vb.get_with_hints(
                (cfg.type_vocab_size.max(1), h),
                "token_type_embeddings.weight",
                Init::Const(0.0),
            )?,
            norm: LayerNorm::new(vb.pp("LayerNorm"), h, cfg.layer_norm_eps)?,
            dropout: cfg.hidden_dropout_prob,
        })
    }

    fn forward(
        &self,
        ids: &Tensor,
        positions: &Tensor,
        dropout: &mut Option<&mut Dropout>,
    ) -> Result<Tensor> {
        let (b, l) = ids.dims2()?;
        let h = self.word.dim(1)?;
        let words = self.word.index_select(&ids.flatten_all()?, 0)?;
        let pos = self.position.index_select(&positions.flatten_all()?, 0)?;
        let xs = words
            .add(&pos)?
            .broadcast_add(&self.token_type.i(0)?)?
            .reshape((b, l, h))?;
        maybe_dropout(self.norm.forward(&xs)?, self.dropout, dropout)
    }
}

struct Layer {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: LayerNorm,
    intermediate: Linear,
    output: Linear,
    out_norm: LayerNorm,
    heads: usize,
    hidden_dropout: f64,
    attn_dropout: f64,
}

impl Layer {
    fn new(vb: VarBuilder, cfg: &EncoderConfig) -> Result<Self> {
        let h = cfg.hidden_size;
        let attn = vb.pp("attention");
        Ok(Layer {
            query: Linear::new(attn.pp("self").pp("query"), h, h)?,
            key: Linear::new(attn.pp("self").pp("key"), h, h)?,
            value: Linear::new(attn.pp("self").pp("value"), h, h)?,
            attn_out: Linear::new(attn.pp("output").pp("dense"), h, h)?,
            attn_norm: LayerNorm::new(attn.pp("output").pp("LayerNorm"), h, cfg.layer_norm_eps)?,
            intermediate: Linear::new(vb.pp("intermediate").pp("dense"), h, cfg.intermediate_size)?,
            output: Linear::new(vb.pp("output").pp("dense"), cfg.intermediate_size, h)?,
            out_norm: LayerNorm::new(vb.pp("output").pp("LayerNorm"), h, cfg.layer_norm_eps)?,
            heads: cfg.num_attention_heads,
            hidden_dropout: cfg.hidden_dropout_prob,
            attn_dropout: cfg.attention_probs_dropout_prob,
        })
    }

    fn forward(
        &self,
        xs: &Tensor,
        mask_bias: &Tensor,
        dropout: &mut Option<&mut Dropout>,
    ) -> Result<Tensor> {
        let (b, l, h) = xs.dims3()?;
        let d = h / self.heads;
        let split = |t: Tensor| -> Result<Tensor> {
            t.reshape((b, l, self.heads, d))?.transpose(1, 2)?.contiguous()
        };
        let q = split(self.query.forward(xs)?)?;
        let k = split(self.key.forward(xs)?)?;
        let v = split(self.value.forward(xs)?)?;
        let scores = (q.matmul(&k.t()?)? / (d as f64).sqrt())?.broadcast_add(mask_bias)?;
        let probs = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let probs = maybe_dropout(probs, self.attn_dropout, dropout)?;
        let ctx = probs
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, l, h))?;
        let attn = maybe_dropout(self.attn_out.forward(&ctx)?, self.hidden_dropout, dropout)?;
        let xs = self.attn_norm.forward(&attn.add(xs)?)?;
        let inner = self.intermediate.forward(&xs)?.gelu_erf()?;
        let out = maybe_dropout(self.output.forward(&inner)?, self.hidden_dropout, dropout)?;
        self.out_norm.forward(&out.add(&xs)?)
    }
}

pub struct Encoder {
    embeddings: Embeddings,
    layers: Vec<Layer>,
    config: EncoderConfig,
}

impl Encoder {
    /// Declares the encoder's parameters under `vb` (prefix `roberta`).
    pub fn new(vb: VarBuilder, cfg: &EncoderConfig) -> Result<Self> {
        let embeddings = Embeddings::new(vb.pp("embeddings"), cfg)?;
        let layers = (0..cfg.num_hidden_layers)
            .map(|i| Layer::new(vb.pp("encoder").pp("layer").pp(i), cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Encoder {
            embeddings,
            layers,
            config: cfg.clone(),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Hidden states `(batch, len, hidden)`. `ids`/`positions` are u32
    /// `(batch, len)`, `mask` is f32 `(batch, len)` with 1 for real tokens.
    pub fn forward(
        &self,
        ids: &Tensor,
        positions: &Tensor,
        mask: &Tensor,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<Tensor> {
        let (b, l) = mask.dims2()?;
        // 0 where attended, -1e9 on padding keys
        let mask_bias = ((mask.ones_like()? - mask)? * -1e9)?.reshape((b, 1, 1, l))?;
        let mut xs = self.embeddings.forward(ids, positions, &mut dropout)?;
        for layer in &self.layers {
            xs = layer.forward(&xs, &mask_bias, &mut dropout)?;
        }
        Ok(xs)
    }
}

/// Input tensors for a batch of encodings truncated to `len` positions.
/// Positions follow the RoBERTa convention: `pad + 1 + i` for real tokens,
/// `pad` for padding.
pub fn batch_inputs(
    rows: &[&[u32]],
    masks: &[&[u8]],
    len: usize,
    pad_id: u32,
    device: &Device,
) -> Result<(Tensor, Tensor, Tensor)> {
    let b = rows.len();
    let mut ids = Vec::with_capacity(b * len);
    let mut positions = Vec::with_capacity(b * len);
    let mut mask = Vec::with_capacity(b * len);
    for (row, m) in rows.iter().zip(masks) {
        for i in 0..len {
            ids.push(row[i]);
            let active = m[i] == 1;
            mask.push(if active { 1f32 } else { 0.0 });
            positions.push(if active { pad_id + 1 + i as u32 } else { pad_id });
        }
    }
    Ok((
        Tensor::from_vec(ids, (b, len), device)?,
        Tensor::from_vec(positions, (b, len), device)?,
        Tensor::from_vec(mask, (b, len), device)?.to_dtype(DType::F32)?,
    ))
}
