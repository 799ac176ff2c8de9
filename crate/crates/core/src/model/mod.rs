//! The SEizure TRansformer (SETR) block: a linear embedding of per-frame
//! features into motion tokens, an appended class token, a learnable
//! positional encoding, `L` pre-norm encoder layers and a one-layer head
//! on the class token.
//!
//! Encoder layer `l`:
//!
//! ```text
//! m'_l = MHSA(Norm(X_{l-1})) + X_{l-1}
//! m_l  = MLP(Norm(m'_l)) + m'_l
//! ```

mod params;

pub use params::{LayerWeights, SetrParams, SetrWeights};

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Value};
use crate::error::{Error, Result};
use crate::features::FEATURE_DIM;
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SetrConfig {
    /// Motion tokens per sample (`N`).
    pub tokens: usize,
    /// Hidden width (`D`).
    pub hidden: usize,
    pub heads: usize,
    pub layers: usize,
    pub mlp_hidden: usize,
    pub dropout: f64,
    pub classes: usize,
    pub feature_dim: usize,
    /// Drop the `1/√(D/N_h)` factor from attention logits.
    pub literal_attention: bool,
}

impl Default for SetrConfig {
    fn default() -> Self {
        SetrConfig {
            tokens: 64,
            hidden: 256,
            heads: 8,
            layers: 3,
            mlp_hidden: 4 * 256,
            dropout: 0.1,
            classes: 2,
            feature_dim: FEATURE_DIM,
            literal_attention: false,
        }
    }
}

impl SetrConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidConfig(m));
        if self.tokens == 0 || self.hidden == 0 || self.heads == 0 || self.mlp_hidden == 0 {
            return bad("tokens, hidden, heads and mlp-hidden must be positive".into());
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return bad(alloc::format!(
                "hidden {} is not divisible by heads {}",
                self.hidden,
                self.heads
            ));
        }
        if self.hidden < 2 {
            return bad("hidden must be at least 2 for layer norm".into());
        }
        if self.layers == 0 {
            return bad("at least one encoder layer is required".into());
        }
        if self.classes < 2 {
            return bad("at least two classes are required".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)".into());
        }
        if self.feature_dim == 0 {
            return bad("feature-dim must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Train mode enables dropout with a mask drawn from `seed`; eval mode is
/// deterministic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// Tape handles of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    pub logits: Value,
    pub class_token: Value,
    pub patch_tokens: Value,
    /// Per layer, per head attention weights.
    pub attention: Vec<Vec<Value>>,
}

/// Detached result of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct SetrOutput {
    pub logits: Vec<f64>,
    pub class_token: Vec<f64>,
    /// Rows `0..N` of the final representation, `N×D`.
    pub patch_tokens: Tensor,
    /// Per layer, `heads × (N+1) × (N+1)`.
    pub attention: Vec<Tensor>,
}

impl ForwardVars {
    pub fn detach(&self, tape: &Tape) -> SetrOutput {
        let attention = self
            .attention
            .iter()
            .map(|heads| {
                let n = tape.shape(heads[0])[0];
                let mut data = Vec::with_capacity(heads.len() * n * n);
                for h in heads {
                    data.extend_from_slice(tape.value(*h).data());
                }
                Tensor::new(alloc::vec![heads.len(), n, n], data).expect("attention shape")
            })
            .collect();
        SetrOutput {
            logits: tape.value(self.logits).data().to_vec(),
            class_token: tape.value(self.class_token).data().to_vec(),
            patch_tokens: tape.value(self.patch_tokens).clone(),
            attention,
        }
    }
}

struct Dropout {
    rate: f64,
    rng: Option<ChaCha8Rng>,
}

impl Dropout {
    fn new(rate: f64, mode: Mode) -> Self {
        let rng = match mode {
            Mode::Train { seed } if rate > 0.0 => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Dropout { rate, rng }
    }

    fn apply(&mut self, tape: &mut Tape, x: Value) -> Result<Value> {
        let Some(rng) = self.rng.as_mut() else {
            return Ok(x);
        };
        let keep = 1.0 - self.rate;
        let n = tape.value(x).len();
        let mask = (0..n)
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        tape.mask(x, mask)
    }
}

/// Records parameters as tape leaves.
pub fn params_to_tape(tape: &mut Tape, params: &SetrParams) -> SetrWeights<Value> {
    params.map(|t| tape.leaf(t.clone()))
}

/// Collects adjoints of parameter leaves after a backward pass.
pub fn collect_grads(tape: &Tape, vars: &SetrWeights<Value>) -> SetrParams {
    vars.map(|v| tape.grad_tensor(*v))
}

/// `concat(features·W + b, class_embed) + L_POS`, shape `(N+1)×D`; the
/// class token sits at row `N`.
pub fn tokenize(tape: &mut Tape, vars: &SetrWeights<Value>, features: Value, cfg: &SetrConfig) -> Result<Value> {
    let (rows, cols) = tape.value(features).dims2()?;
    if rows != cfg.tokens || cols != cfg.feature_dim {
        return Err(Error::ShapeMismatch {
            op: "tokenize",
            left: alloc::vec![rows, cols],
            right: alloc::vec![cfg.tokens, cfg.feature_dim],
        });
    }
    let emb = tape.matmul(features, vars.embed_w)?;
    let emb = tape.add_row(emb, vars.embed_b)?;
    let cls = tape.reshape(vars.class_embed, &[1, cfg.hidden])?;
    let x = tape.concat_rows(&[emb, cls])?;
    tape.add(x, vars.pos)
}

/// Multi-head self-attention over already-normalized input; returns the
/// projected output and the per-head attention weights.
fn mhsa(
    tape: &mut Tape,
    x: Value,
    layer: &LayerWeights<Value>,
    cfg: &SetrConfig,
    dropout: &mut Dropout,
) -> Result<(Value, Vec<Value>)> {
    let q = tape.matmul(x, layer.wq)?;
    let k = tape.matmul(x, layer.wk)?;
    let v = tape.matmul(x, layer.wv)?;
    let dh = cfg.head_dim();
    let scale = if cfg.literal_attention {
        1.0
    } else {
        1.0 / libm::sqrt(dh as f64)
    };
    let mut heads = Vec::with_capacity(cfg.heads);
    let mut maps = Vec::with_capacity(cfg.heads);
    for h in 0..cfg.heads {
        let qh = tape.slice_cols(q, h * dh, dh)?;
        let kh = tape.slice_cols(k, h * dh, dh)?;
        let vh = tape.slice_cols(v, h * dh, dh)?;
        let scores = tape.matmul_nt(qh, kh)?;
        let scores = tape.scale(scores, scale);
        let attn = tape.softmax(scores)?;
        maps.push(attn);
        let attn = dropout.apply(tape, attn)?;
        heads.push(tape.matmul(attn, vh)?);
    }
    let cat = tape.concat_cols(&heads)?;
    Ok((tape.matmul(cat, layer.wo)?, maps))
}

fn encoder_layer_inner(
    tape: &mut Tape,
    x: Value,
    layer: &LayerWeights<Value>,
    cfg: &SetrConfig,
    dropout: &mut Dropout,
) -> Result<(Value, Vec<Value>)> {
    let n1 = tape.layer_norm(x, layer.ln1_gamma, layer.ln1_beta, LAYER_NORM_EPS)?;
    let (attn, maps) = mhsa(tape, n1, layer, cfg, dropout)?;
    let m1 = tape.add(attn, x)?;
    let n2 = tape.layer_norm(m1, layer.ln2_gamma, layer.ln2_beta, LAYER_NORM_EPS)?;
    let h = tape.matmul(n2, layer.mlp_w1)?;
    let h = tape.add_row(h, layer.mlp_b1)?;
    let h = tape.gelu(h);
    let h = tape.matmul(h, layer.mlp_w2)?;
    let h = tape.add_row(h, layer.mlp_b2)?;
    let h = dropout.apply(tape, h)?;
    Ok((tape.add(h, m1)?, maps))
}

/// One pre-norm encoder layer on the tape.
pub fn encoder_layer(
    tape: &mut Tape,
    x: Value,
    layer: &LayerWeights<Value>,
    cfg: &SetrConfig,
    mode: Mode,
) -> Result<(Value, Vec<Value>)> {
    let mut dropout = Dropout::new(cfg.dropout, mode);
    encoder_layer_inner(tape, x, layer, cfg, &mut dropout)
}

/// Full SETR forward pass on the tape from an `N×F` feature matrix.
pub fn setr_forward(
    tape: &mut Tape,
    vars: &SetrWeights<Value>,
    features: Value,
    cfg: &SetrConfig,
    mode: Mode,
) -> Result<ForwardVars> {
    let mut dropout = Dropout::new(cfg.dropout, mode);
    let mut x = tokenize(tape, vars, features, cfg)?;
    let mut attention = Vec::with_capacity(cfg.layers);
    for layer in &vars.layers {
        let (y, maps) = encoder_layer_inner(tape, x, layer, cfg, &mut dropout)?;
        x = y;
        attention.push(maps);
    }
    let patch_tokens = tape.rows(x, 0, cfg.tokens)?;
    let cls = tape.rows(x, cfg.tokens, 1)?;
    let logits = tape.matmul(cls, vars.head_w)?;
    let logits = tape.reshape(logits, &[cfg.classes])?;
    let logits = tape.add(logits, vars.head_b)?;
    let class_token = tape.reshape(cls, &[cfg.hidden])?;
    Ok(ForwardVars {
        logits,
        class_token,
        patch_tokens,
        attention,
    })
}

/// Eval-mode forward pass returning detached outputs.
pub fn infer(params: &SetrParams, cfg: &SetrConfig, features: &Tensor) -> Result<SetrOutput> {
    let mut tape = Tape::new();
    let vars = params_to_tape(&mut tape, params);
    let x = tape.leaf(features.clone());
    let out = setr_forward(&mut tape, &vars, x, cfg, Mode::Eval)?;
    Ok(out.detach(&tape))
}

/// Index of the largest logit; ties go to the lower index.
pub fn predict(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in logits.iter().enumerate() {
        if *v > logits[best] {
            best = i;
        }
    }
    best
}
