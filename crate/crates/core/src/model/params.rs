use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::SetrConfig;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Weights of one encoder layer, generic over storage so the same layout
/// serves for tensors, tape handles and gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub ln1_gamma: T,
    pub ln1_beta: T,
    pub wq: T,
    pub wk: T,
    pub wv: T,
    pub wo: T,
    pub ln2_gamma: T,
    pub ln2_beta: T,
    pub mlp_w1: T,
    pub mlp_b1: T,
    pub mlp_w2: T,
    pub mlp_b2: T,
}

const LAYER_NAMES: [&str; 12] = [
    "ln1_gamma", "ln1_beta", "wq", "wk", "wv", "wo", "ln2_gamma", "ln2_beta", "mlp_w1", "mlp_b1", "mlp_w2",
    "mlp_b2",
];

impl<T> LayerWeights<T> {
    fn iter(&self) -> [&T; 12] {
        [
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.ln2_gamma,
            &self.ln2_beta,
            &self.mlp_w1,
            &self.mlp_b1,
            &self.mlp_w2,
            &self.mlp_b2,
        ]
    }

    fn iter_mut(&mut self) -> [&mut T; 12] {
        [
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
            &mut self.mlp_w1,
            &mut self.mlp_b1,
            &mut self.mlp_w2,
            &mut self.mlp_b2,
        ]
    }

    fn from_iter(it: &mut impl Iterator<Item = T>) -> Option<Self> {
        Some(LayerWeights {
            ln1_gamma: it.next()?,
            ln1_beta: it.next()?,
            wq: it.next()?,
            wk: it.next()?,
            wv: it.next()?,
            wo: it.next()?,
            ln2_gamma: it.next()?,
            ln2_beta: it.next()?,
            mlp_w1: it.next()?,
            mlp_b1: it.next()?,
            mlp_w2: it.next()?,
            mlp_b2: it.next()?,
        })
    }
}

/// All trainable weights of a SETR block.
#[derive(Debug, Clone, PartialEq)]
pub struct SetrWeights<T> {
    /// Feature → token projection, `F×D`.
    pub embed_w: T,
    pub embed_b: T,
    pub class_embed: T,
    /// Learnable positional encoding, `(N+1)×D`.
    pub pos: T,
    pub layers: Vec<LayerWeights<T>>,
    /// Classification head, `D×C`.
    pub head_w: T,
    pub head_b: T,
}

/// Concrete parameter values.
pub type SetrParams = SetrWeights<Tensor>;

impl<T> SetrWeights<T> {
    /// Canonical traversal order, shared by checkpoints and the optimizer.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        [&self.embed_w, &self.embed_b, &self.class_embed, &self.pos]
            .into_iter()
            .chain(self.layers.iter().flat_map(|l| l.iter()))
            .chain([&self.head_w, &self.head_b])
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> {
        [
            &mut self.embed_w,
            &mut self.embed_b,
            &mut self.class_embed,
            &mut self.pos,
        ]
        .into_iter()
        .chain(self.layers.iter_mut().flat_map(|l| l.iter_mut()))
        .chain([&mut self.head_w, &mut self.head_b])
    }

    /// Rebuilds the structure from items in canonical order.
    pub fn from_ordered(layers: usize, items: impl IntoIterator<Item = T>) -> Option<Self> {
        let mut it = items.into_iter();
        let embed_w = it.next()?;
        let embed_b = it.next()?;
        let class_embed = it.next()?;
        let pos = it.next()?;
        let mut ls = Vec::with_capacity(layers);
        for _ in 0..layers {
            ls.push(LayerWeights::from_iter(&mut it)?);
        }
        let head_w = it.next()?;
        let head_b = it.next()?;
        if it.next().is_some() {
            return None;
        }
        Some(SetrWeights {
            embed_w,
            embed_b,
            class_embed,
            pos,
            layers: ls,
            head_w,
            head_b,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> SetrWeights<U> {
        let layers = self.layers.len();
        SetrWeights::from_ordered(layers, self.iter().map(&mut f)).expect("same layout")
    }

    /// Names in canonical order, e.g. `layer1.wq`.
    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = ["embed_w", "embed_b", "class_embed", "pos"]
            .iter()
            .map(|s| String::from(*s))
            .collect();
        for l in 0..self.layers.len() {
            for n in LAYER_NAMES {
                out.push(format!("layer{}.{}", l, n));
            }
        }
        out.push("head_w".into());
        out.push("head_b".into());
        out
    }
}

fn uniform(rng: &mut dyn RngCore, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

fn projection(rng: &mut dyn RngCore, fan_in: usize, fan_out: usize) -> Tensor {
    uniform(rng, &[fan_in, fan_out], 1.0 / libm::sqrt(fan_in as f64))
}

/// Scale of the class embedding and positional encoding at initialization.
const EMBED_INIT: f64 = 0.02;

impl SetrParams {
    /// Projections ~ U(±1/√fan_in), biases zero, layer norms identity.
    pub fn init(cfg: &SetrConfig, rng: &mut dyn RngCore) -> Self {
        let d = cfg.hidden;
        let embed_w = projection(rng, cfg.feature_dim, d);
        let class_embed = uniform(rng, &[d], EMBED_INIT);
        let pos = uniform(rng, &[cfg.tokens + 1, d], EMBED_INIT);
        let layers = (0..cfg.layers)
            .map(|_| LayerWeights {
                ln1_gamma: Tensor::filled(&[d], 1.0),
                ln1_beta: Tensor::zeros(&[d]),
                wq: projection(rng, d, d),
                wk: projection(rng, d, d),
                wv: projection(rng, d, d),
                wo: projection(rng, d, d),
                ln2_gamma: Tensor::filled(&[d], 1.0),
                ln2_beta: Tensor::zeros(&[d]),
                mlp_w1: projection(rng, d, cfg.mlp_hidden),
                mlp_b1: Tensor::zeros(&[cfg.mlp_hidden]),
                mlp_w2: projection(rng, cfg.mlp_hidden, d),
                mlp_b2: Tensor::zeros(&[d]),
            })
            .collect();
        SetrWeights {
            embed_w,
            embed_b: Tensor::zeros(&[d]),
            class_embed,
            pos,
            layers,
            head_w: projection(rng, d, cfg.classes),
            head_b: Tensor::zeros(&[cfg.classes]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|t| Tensor::zeros(t.shape()))
    }

    pub fn param_count(&self) -> usize {
        self.iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|t| t.is_finite())
    }

    /// Expected shapes for a configuration, in canonical order.
    pub fn expected_shapes(cfg: &SetrConfig) -> Vec<Vec<usize>> {
        let d = cfg.hidden;
        let mut out = alloc::vec![
            alloc::vec![cfg.feature_dim, d],
            alloc::vec![d],
            alloc::vec![d],
            alloc::vec![cfg.tokens + 1, d],
        ];
        for _ in 0..cfg.layers {
            out.extend([
                alloc::vec![d],
                alloc::vec![d],
                alloc::vec![d, d],
                alloc::vec![d, d],
                alloc::vec![d, d],
                alloc::vec![d, d],
                alloc::vec![d],
                alloc::vec![d],
                alloc::vec![d, cfg.mlp_hidden],
                alloc::vec![cfg.mlp_hidden],
                alloc::vec![cfg.mlp_hidden, d],
                alloc::vec![d],
            ]);
        }
        out.push(alloc::vec![d, cfg.classes]);
        out.push(alloc::vec![cfg.classes]);
        out
    }

    /// Builds parameters from named tensors (checkpoint order), checking
    /// names and shapes against the configuration.
    pub fn from_named(cfg: &SetrConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        let shapes = Self::expected_shapes(cfg);
        if named.len() != shapes.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} parameter arrays, found {}",
                shapes.len(),
                named.len()
            )));
        }
        let probe = SetrWeights::from_ordered(cfg.layers, shapes.iter()).expect("layout");
        for ((name, t), (want_name, want_shape)) in named.iter().zip(probe.names().iter().zip(&shapes)) {
            if name != want_name || t.shape() != want_shape.as_slice() {
                return Err(Error::InvalidInput(format!(
                    "parameter {name} {:?} does not match expected {want_name} {:?}",
                    t.shape(),
                    want_shape
                )));
            }
        }
        Ok(SetrWeights::from_ordered(cfg.layers, named.into_iter().map(|(_, t)| t)).expect("layout"))
    }
}
