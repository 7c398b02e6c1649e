//! Model configuration, parameter layout and initialisation.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::scalar::{Precision, Scalar};
use super::vocab::VOCAB_SIZE;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub context_len: usize,
    /// Feed-forward width as a multiple of `embed_dim`.
    pub ffn_mult: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 64,
            n_layers: 2,
            n_heads: 2,
            context_len: 128,
            ffn_mult: 4.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// A model small enough for exhaustive finite-difference checks.
    pub fn tiny(seed: u64) -> Self {
        ModelConfig {
            embed_dim: 8,
            n_layers: 1,
            n_heads: 2,
            context_len: 24,
            ffn_mult: 2.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.n_heads == 0 || self.n_layers == 0 {
            return Err(Error::Config(
                "embed_dim, n_heads and n_layers must be positive".into(),
            ));
        }
        if !self.embed_dim.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "embed_dim {} is not divisible by n_heads {}",
                self.embed_dim, self.n_heads
            )));
        }
        if self.context_len < 2 {
            return Err(Error::Config("context_len must be at least 2".into()));
        }
        if !(self.ffn_mult > 0.0) || !self.ffn_mult.is_finite() {
            return Err(Error::Config("ffn_mult must be positive".into()));
        }
        Ok(())
    }

    pub fn ffn_dim(&self) -> usize {
        ((self.embed_dim as f64 * self.ffn_mult).round() as usize).max(1)
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.n_heads
    }
}

/// Name and shape of one parameter tensor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerSlots {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub w_qkv: Range<usize>,
    pub b_qkv: Range<usize>,
    pub w_o: Range<usize>,
    pub b_o: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w_fc: Range<usize>,
    pub b_fc: Range<usize>,
    pub w_proj: Range<usize>,
    pub b_proj: Range<usize>,
}

/// Offsets of every tensor inside the flat parameter buffer.
#[derive(Debug, Clone)]
pub(crate) struct Slots {
    pub tok_emb: Range<usize>,
    pub pos_emb: Range<usize>,
    pub layers: Vec<LayerSlots>,
    pub lnf_g: Range<usize>,
    pub lnf_b: Range<usize>,
    pub w_out: Range<usize>,
    pub b_out: Range<usize>,
    pub specs: Vec<TensorSpec>,
    pub total: usize,
}

struct SlotBuilder {
    specs: Vec<TensorSpec>,
    offset: usize,
}

impl SlotBuilder {
    fn push(&mut self, name: String, shape: &[usize]) -> Range<usize> {
        let n: usize = shape.iter().product();
        let r = self.offset..self.offset + n;
        self.offset += n;
        self.specs.push(TensorSpec {
            name,
            shape: shape.to_vec(),
        });
        r
    }
}

impl Slots {
    pub fn new(cfg: &ModelConfig) -> Slots {
        let d = cfg.embed_dim;
        let h = cfg.ffn_dim();
        let mut b = SlotBuilder {
            specs: Vec::new(),
            offset: 0,
        };
        let tok_emb = b.push("tok_emb".into(), &[VOCAB_SIZE, d]);
        let pos_emb = b.push("pos_emb".into(), &[cfg.context_len, d]);
        let layers = (0..cfg.n_layers)
            .map(|l| LayerSlots {
                ln1_g: b.push(format!("layers.{l}.ln1.gain"), &[d]),
                ln1_b: b.push(format!("layers.{l}.ln1.bias"), &[d]),
                w_qkv: b.push(format!("layers.{l}.attn.w_qkv"), &[d, 3 * d]),
                b_qkv: b.push(format!("layers.{l}.attn.b_qkv"), &[3 * d]),
                w_o: b.push(format!("layers.{l}.attn.w_o"), &[d, d]),
                b_o: b.push(format!("layers.{l}.attn.b_o"), &[d]),
                ln2_g: b.push(format!("layers.{l}.ln2.gain"), &[d]),
                ln2_b: b.push(format!("layers.{l}.ln2.bias"), &[d]),
                w_fc: b.push(format!("layers.{l}.mlp.w_fc"), &[d, h]),
                b_fc: b.push(format!("layers.{l}.mlp.b_fc"), &[h]),
                w_proj: b.push(format!("layers.{l}.mlp.w_proj"), &[h, d]),
                b_proj: b.push(format!("layers.{l}.mlp.b_proj"), &[d]),
            })
            .collect();
        let lnf_g = b.push("ln_f.gain".into(), &[d]);
        let lnf_b = b.push("ln_f.bias".into(), &[d]);
        let w_out = b.push("w_out".into(), &[d, VOCAB_SIZE]);
        let b_out = b.push("b_out".into(), &[VOCAB_SIZE]);
        Slots {
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            w_out,
            b_out,
            specs: b.specs,
            total: b.offset,
        }
    }
}

/// The trainable parameters of one model, stored as a single flat buffer
/// partitioned by a fixed layout.
#[derive(Debug, Clone)]
pub struct ModelParams<F: Scalar> {
    config: ModelConfig,
    pub(crate) slots: Slots,
    data: Vec<F>,
}

impl<F: Scalar> PartialEq for ModelParams<F> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.data == other.data
    }
}

impl<F: Scalar> ModelParams<F> {
    /// Seeded random initialisation: N(0, 0.02) weights, residual projections
    /// scaled by `1/sqrt(2·n_layers)`, zero biases, unit layer-norm gains.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let slots = Slots::new(config);
        let mut data = vec![F::zero(); slots.total];
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let std = 0.02;
        let normal = Normal::new(0.0, std).expect("valid std");
        let resid =
            Normal::new(0.0, std / (2.0 * config.n_layers as f64).sqrt()).expect("valid std");
        let mut fill = |r: &Range<usize>, dist: &Normal<f64>, data: &mut [F]| {
            for x in &mut data[r.clone()] {
                *x = F::lit(dist.sample(&mut rng));
            }
        };
        fill(&slots.tok_emb, &normal, &mut data);
        fill(&slots.pos_emb, &normal, &mut data);
        for layer in &slots.layers {
            fill(&layer.w_qkv, &normal, &mut data);
            fill(&layer.w_o, &resid, &mut data);
            fill(&layer.w_fc, &normal, &mut data);
            fill(&layer.w_proj, &resid, &mut data);
            for r in [&layer.ln1_g, &layer.ln2_g] {
                data[r.clone()].iter_mut().for_each(|x| *x = F::one());
            }
        }
        data[slots.lnf_g.clone()]
            .iter_mut()
            .for_each(|x| *x = F::one());
        fill(&slots.w_out, &normal, &mut data);
        Ok(ModelParams {
            config: config.clone(),
            slots,
            data,
        })
    }

    /// Build from an existing flat buffer; the length must match the layout.
    pub fn from_flat(config: &ModelConfig, data: Vec<F>) -> Result<Self> {
        config.validate()?;
        let slots = Slots::new(config);
        if data.len() != slots.total {
            return Err(Error::ShapeMismatch {
                name: "<flat parameters>".into(),
                expected: vec![slots.total],
                found: vec![data.len()],
            });
        }
        Ok(ModelParams {
            config: config.clone(),
            slots,
            data,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn precision(&self) -> Precision {
        F::PRECISION
    }

    pub fn tensor_specs(&self) -> &[TensorSpec] {
        &self.slots.specs
    }

    pub fn num_params(&self) -> usize {
        self.data.len()
    }

    pub fn flat(&self) -> &[F] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// View of one named tensor.
    pub fn tensor(&self, name: &str) -> Option<&[F]> {
        let mut offset = 0;
        for spec in &self.slots.specs {
            let n = spec.numel();
            if spec.name == name {
                return Some(&self.data[offset..offset + n]);
            }
            offset += n;
        }
        None
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Convert to another precision (used to run gradient checks in `f64`).
    pub fn cast<G: Scalar>(&self) -> ModelParams<G> {
        ModelParams {
            config: self.config.clone(),
            slots: self.slots.clone(),
            data: self.data.iter().map(|x| G::lit(x.as_f64())).collect(),
        }
    }

    pub(crate) fn same_layout(&self, other_len: usize) -> bool {
        self.data.len() == other_len
    }
}

/// Per-parameter gradient buffer mirroring [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F: Scalar> {
    data: Vec<F>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(params: &ModelParams<F>) -> Self {
        Gradients {
            data: vec![F::zero(); params.num_params()],
        }
    }

    pub fn zeros(len: usize) -> Self {
        Gradients {
            data: vec![F::zero(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn flat(&self) -> &[F] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = F::zero());
    }

    pub fn add_assign(&mut self, other: &Gradients<F>) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: F) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn l2_norm(&self) -> f64 {
        self.data
            .iter()
            .map(|x| x.as_f64() * x.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}
