//! AdamW with bias-corrected moments and decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::params::{Gradients, ModelParams};
use super::scalar::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moment estimates, kept in `f64` for both precisions.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamWState {
    pub fn new(n_params: usize) -> Self {
        AdamWState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

/// One AdamW update in place. Refuses non-finite gradients without touching
/// the parameters.
pub fn adamw_step<F: Scalar>(
    params: &mut ModelParams<F>,
    grads: &Gradients<F>,
    state: &mut AdamWState,
    lr: f64,
    cfg: &AdamWConfig,
) -> Result<()> {
    let n = params.num_params();
    if grads.len() != n || state.m.len() != n {
        return Err(Error::State(format!(
            "optimizer shapes disagree: params {n}, grads {}, state {}",
            grads.len(),
            state.m.len()
        )));
    }
    if let Some((i, g)) = grads
        .flat()
        .iter()
        .enumerate()
        .find(|(_, g)| !g.is_finite())
    {
        let name = locate(params, i);
        return Err(Error::Numerical(format!(
            "non-finite gradient {g:?} at flat index {i} ({name}) before step {}",
            state.step + 1
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let decay = 1.0 - lr * cfg.weight_decay;
    for (((p, g), m), v) in params
        .flat_mut()
        .iter_mut()
        .zip(grads.flat())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        let g = g.as_f64();
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        let updated = p.as_f64() * decay - lr * m_hat / (v_hat.sqrt() + cfg.eps);
        *p = F::lit(updated);
    }
    Ok(())
}

fn locate<F: Scalar>(params: &ModelParams<F>, index: usize) -> String {
    let mut offset = 0;
    for spec in params.tensor_specs() {
        if index < offset + spec.numel() {
            return spec.name.clone();
        }
        offset += spec.numel();
    }
    "<out of range>".into()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn params() -> ModelParams<f64> {
        ModelParams::init(&ModelConfig::tiny(2)).unwrap()
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut p = params();
        let before = p.clone();
        let g = Gradients::zeros_like(&p);
        let mut st = AdamWState::new(p.num_params());
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        adamw_step(&mut p, &g, &mut st, 1e-3, &cfg).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut p = params();
        let before = p.clone();
        let mut g = Gradients::zeros_like(&p);
        g.flat_mut().iter_mut().for_each(|x| *x = 0.3);
        let mut st = AdamWState::new(p.num_params());
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..AdamWConfig::default()
        };
        let lr = 1e-2;
        adamw_step(&mut p, &g, &mut st, lr, &cfg).unwrap();
        let expected = lr * 0.3 / (0.3 + cfg.eps);
        for (a, b) in p.flat().iter().zip(before.flat()) {
            assert!(((b - a) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_aborts_untouched() {
        let mut p = params();
        let before = p.clone();
        let mut g = Gradients::zeros_like(&p);
        g.flat_mut()[5] = f64::NAN;
        let mut st = AdamWState::new(p.num_params());
        let err = adamw_step(&mut p, &g, &mut st, 1e-3, &AdamWConfig::default()).unwrap_err();
        assert!(err.to_string().contains("tok_emb"), "{err}");
        assert_eq!(p, before);
        assert_eq!(st.step(), 0);
    }

    #[test]
    fn trajectory_is_reproducible() {
        let run = || {
            let mut p = params();
            let mut st = AdamWState::new(p.num_params());
            for k in 0..5 {
                let mut g = Gradients::zeros_like(&p);
                for (i, x) in g.flat_mut().iter_mut().enumerate() {
                    *x = ((i * 31 + k * 7) % 17) as f64 / 17.0 - 0.5;
                }
                adamw_step(&mut p, &g, &mut st, 1e-3, &AdamWConfig::default()).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        let bits = |p: &ModelParams<f64>| p.flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
