//! Aggregate statistics: harmonic-mean utility, two-sample KS, gaps, AUC.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Harmonic mean of strictly positive, finite values.
pub fn harmonic_mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::contract("harmonic_mean", "no values"));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::domain(
            "harmonic_mean",
            format!("value {v} is not positive and finite"),
        ));
    }
    Ok(values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>())
}

/// Harmonic mean of exactly nine retain-side numbers.
pub fn model_utility(values: &[f64]) -> Result<f64> {
    if values.len() != 9 {
        return Err(Error::contract(
            "model_utility",
            format!("expected 9 values, got {}", values.len()),
        ));
    }
    harmonic_mean(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// `sup_x |F_a(x) − F_b(x)|` over the pooled sample points.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::contract("ks_two_sample", "empty sample"));
    }
    if a.iter().chain(b).any(|x| x.is_nan()) {
        return Err(Error::domain("ks_two_sample", "NaN in sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    const TERMS: usize = 100;
    if lambda <= 0.0 {
        return 1.0;
    }
    let p = if lambda < 1.18 {
        // theta-function form converges fast for small λ
        let l2 = lambda * lambda;
        let s: f64 = (1..=TERMS)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (-m * m * PI * PI / (8.0 * l2)).exp()
            })
            .sum();
        1.0 - (2.0 * PI).sqrt() / lambda * s
    } else {
        let s: f64 = (1..=TERMS)
            .map(|k| {
                let k = k as f64;
                let sign = if k as usize % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * lambda * lambda).exp()
            })
            .sum();
        2.0 * s
    };
    p.clamp(f64::MIN_POSITIVE, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value at
/// effective size `n_a·n_b / (n_a + n_b)`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let statistic = ks_statistic(a, b)?;
    if statistic == 0.0 {
        return Ok(KsResult {
            statistic,
            p_value: 1.0,
        });
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let en = na * nb / (na + nb);
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_sf(en.sqrt() * statistic),
    })
}

/// `|bleu_u − bleu_r| + |rl_u − rl_r|`.
pub fn fq_gap(bleu_u: f64, bleu_r: f64, rl_u: f64, rl_r: f64) -> f64 {
    (bleu_u - bleu_r).abs() + (rl_u - rl_r).abs()
}

/// Mann–Whitney AUC: the fraction of (member, nonmember) pairs where the
/// member scores higher, ties counting one half.
pub fn auc_roc(members: &[f64], nonmembers: &[f64]) -> Result<f64> {
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::contract("auc_roc", "empty score set"));
    }
    if members.iter().chain(nonmembers).any(|x| x.is_nan()) {
        return Err(Error::domain("auc_roc", "NaN score"));
    }
    let mut neg = nonmembers.to_vec();
    neg.sort_by(f64::total_cmp);
    // twice the statistic, so ties stay integral
    let mut twice: u64 = 0;
    for &m in members {
        let below = neg.partition_point(|&x| x < m);
        let not_above = neg.partition_point(|&x| x <= m);
        twice += 2 * below as u64 + (not_above - below) as u64;
    }
    Ok(twice as f64 / 2.0 / (members.len() as f64 * nonmembers.len() as f64))
}

/// `(AUC_unlearn − AUC_retrain) / AUC_retrain`.
pub fn privleak(auc_unlearn: f64, auc_retrain: f64) -> Result<f64> {
    if auc_retrain == 0.0 || !auc_retrain.is_finite() {
        return Err(Error::domain(
            "privleak",
            format!("retrain AUC {auc_retrain} must be nonzero"),
        ));
    }
    Ok((auc_unlearn - auc_retrain) / auc_retrain)
}
