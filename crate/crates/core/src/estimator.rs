//! Sample-based f-divergence estimation with a learned variational function.
//!
//! A one-hidden-layer net `v(z)` is squashed through `g*` so its output stays
//! in `dom f*`, then trained by full-batch Adam to maximize
//! `E_e[g(Z)] − E_f[f*(g(Z))]`. The fit uses one half of each sample set and
//! the estimate is read off the other half.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::divergence::{
    f_star, f_star_derivative, g_star, g_star_derivative, primal_f, DivergenceKind,
};
use crate::error::{Error, Result};
use crate::parallel::Exec;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    values: Vec<Vec<f64>>,
}

impl SampleSet {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = values.first() else {
            return Err(Error::contract("SampleSet", "empty sample set"));
        };
        let d = first.len();
        if d == 0 {
            return Err(Error::contract("SampleSet", "zero-dimensional samples"));
        }
        if let Some(bad) = values.iter().find(|v| v.len() != d) {
            return Err(Error::contract(
                "SampleSet",
                format!("mixed dimensions {d} and {}", bad.len()),
            ));
        }
        if values.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::domain("SampleSet", "non-finite sample"));
        }
        Ok(SampleSet { values })
    }

    pub fn from_scalars(xs: &[f64]) -> Result<Self> {
        SampleSet::new(xs.iter().map(|&x| vec![x]).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// First `⌈n/2⌉` samples for fitting, the rest for estimation.
    pub fn split_half(&self) -> Result<(SampleSet, SampleSet)> {
        if self.len() < 2 {
            return Err(Error::contract("split_half", "need at least two samples"));
        }
        let mid = self.len().div_ceil(2);
        Ok((
            SampleSet {
                values: self.values[..mid].to_vec(),
            },
            SampleSet {
                values: self.values[mid..].to_vec(),
            },
        ))
    }
}

/// One-dimensional source distributions with known divergences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DistributionSpec {
    /// Values in {0, 1} with `P(1) = p`.
    Bernoulli { p: f64 },
    /// Unit-variance normal.
    Gaussian { mean: f64 },
}

impl DistributionSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            DistributionSpec::Bernoulli { p } if !(p > 0.0 && p < 1.0) => Err(Error::domain(
                "DistributionSpec",
                format!("Bernoulli p = {p} must be in (0, 1)"),
            )),
            DistributionSpec::Gaussian { mean } if !mean.is_finite() => Err(Error::domain(
                "DistributionSpec",
                "non-finite Gaussian mean",
            )),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Result<SampleSet> {
        self.validate()?;
        let xs: Vec<f64> = match *self {
            DistributionSpec::Bernoulli { p } => (0..n)
                .map(|_| f64::from(u8::from(rng.random::<f64>() < p)))
                .collect(),
            DistributionSpec::Gaussian { mean } => (0..n)
                .map(|_| mean + rng.sample::<f64, _>(StandardNormal))
                .collect(),
        };
        SampleSet::from_scalars(&xs)
    }
}

/// `D_f(e ‖ f) = E_f[f(p_e / p_f)]` for a pair of distributions of the same family.
pub fn true_f_div_oracle(
    kind: DivergenceKind,
    spec_e: DistributionSpec,
    spec_f: DistributionSpec,
) -> Result<f64> {
    spec_e.validate()?;
    spec_f.validate()?;
    match (spec_e, spec_f) {
        (DistributionSpec::Bernoulli { p }, DistributionSpec::Bernoulli { p: q }) => {
            Ok(q * primal_f(kind, p / q)? + (1.0 - q) * primal_f(kind, (1.0 - p) / (1.0 - q))?)
        }
        (DistributionSpec::Gaussian { mean: a }, DistributionSpec::Gaussian { mean: b }) => {
            let delta = a - b;
            Ok(match kind {
                DivergenceKind::KullbackLeibler => 0.5 * delta * delta,
                DivergenceKind::Pearson => (delta * delta).exp() - 1.0,
                DivergenceKind::TotalVariation => {
                    let n = Normal::standard();
                    2.0 * n.cdf(delta.abs() / 2.0) - 1.0
                }
                // no closed form for the Gaussian pair
                DivergenceKind::JensenShannon => gaussian_f_div_quadrature(kind, a, b)?,
            })
        }
        _ => Err(Error::contract(
            "true_f_div_oracle",
            "specs must share a family",
        )),
    }
}

/// `∫ p_f f(p_e / p_f) dz` for two unit-variance normals, by composite Simpson.
pub fn gaussian_f_div_quadrature(kind: DivergenceKind, mean_e: f64, mean_f: f64) -> Result<f64> {
    const INTERVALS: usize = 20_000;
    let lo = mean_e.min(mean_f) - 12.0;
    let hi = mean_e.max(mean_f) + 12.0;
    let h = (hi - lo) / INTERVALS as f64;
    let log_density = |z: f64, m: f64| -0.5 * (z - m) * (z - m) - 0.5 * (2.0 * PI).ln();
    let mut sum = 0.0;
    for i in 0..=INTERVALS {
        let z = lo + i as f64 * h;
        let lf = log_density(z, mean_f);
        let t = (log_density(z, mean_e) - lf).exp();
        let value = lf.exp() * primal_f(kind, t)?;
        let w = if i == 0 || i == INTERVALS {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        sum += w * value;
    }
    Ok(sum * h / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    /// Record the best-so-far objective every this many steps.
    pub record_every: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            hidden: 16,
            steps: 400,
            lr: 0.03,
            seed: 0,
            record_every: 10,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::Config(
                "estimator hidden width must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "estimator lr = {} must be positive",
                self.lr
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be positive".into()));
        }
        Ok(())
    }
}

/// `g(z) = g*(w₂·tanh(W₁z + b₁) + b₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationalNet {
    kind: DivergenceKind,
    dim: usize,
    hidden: usize,
    /// `[W₁ (hidden × dim), b₁, w₂, b₂]`
    params: Vec<f64>,
    trace: Vec<(usize, f64)>,
}

impl VariationalNet {
    pub fn init(kind: DivergenceKind, dim: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = hidden * dim + 2 * hidden + 1;
        let s1 = 1.0 / (dim as f64).sqrt();
        let s2 = 0.1 / (hidden as f64).sqrt();
        let mut params = vec![0.0; n];
        for (i, p) in params.iter_mut().enumerate() {
            let u: f64 = rng.random_range(-1.0..1.0);
            *p = if i < hidden * dim + hidden {
                u * s1
            } else if i < n - 1 {
                u * s2
            } else {
                0.0
            };
        }
        VariationalNet {
            kind,
            dim,
            hidden,
            params,
            trace: Vec::new(),
        }
    }

    pub fn kind(&self) -> DivergenceKind {
        self.kind
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// `(step, best objective so far)` pairs from the fit.
    pub fn trace(&self) -> &[(usize, f64)] {
        &self.trace
    }

    fn pre_activation(&self, z: &[f64], hidden_out: &mut [f64]) -> f64 {
        let (h, d) = (self.hidden, self.dim);
        let (w1, rest) = self.params.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let mut v = b2[0];
        for j in 0..h {
            let a: f64 = b1[j]
                + w1[j * d..(j + 1) * d]
                    .iter()
                    .zip(z)
                    .map(|(w, x)| w * x)
                    .sum::<f64>();
            hidden_out[j] = a.tanh();
            v += w2[j] * hidden_out[j];
        }
        v
    }

    pub fn output(&self, z: &[f64]) -> Result<f64> {
        let mut hid = vec![0.0; self.hidden];
        g_star(self.kind, self.pre_activation(z, &mut hid))
    }

    /// `E_e[g] − E_f[f*(g)]` on the given sets.
    pub fn objective(&self, e: &SampleSet, f: &SampleSet) -> Result<f64> {
        self.objective_and_grad(e, f, false).map(|(j, _)| j)
    }

    fn check_dim(&self, set: &SampleSet) -> Result<()> {
        if set.dim() != self.dim {
            return Err(Error::contract(
                "variational net",
                format!(
                    "net expects dimension {}, samples have {}",
                    self.dim,
                    set.dim()
                ),
            ));
        }
        Ok(())
    }

    fn objective_and_grad(
        &self,
        e: &SampleSet,
        f: &SampleSet,
        with_grad: bool,
    ) -> Result<(f64, Vec<f64>)> {
        self.check_dim(e)?;
        self.check_dim(f)?;
        let (h, d) = (self.hidden, self.dim);
        let mut grad = vec![0.0; if with_grad { self.params.len() } else { 0 }];
        let mut hid = vec![0.0; h];
        let mut total = 0.0;
        for (set, sign) in [(e, 1.0), (f, -1.0)] {
            let inv_n = 1.0 / set.len() as f64;
            for z in set.values() {
                let v = self.pre_activation(z, &mut hid);
                let g = g_star(self.kind, v)?;
                let (term, dterm) = if sign > 0.0 {
                    (g, 1.0)
                } else {
                    (f_star(self.kind, g)?, f_star_derivative(self.kind, g)?)
                };
                total += sign * inv_n * term;
                if !with_grad {
                    continue;
                }
                let dv = sign * inv_n * dterm * g_star_derivative(self.kind, v)?;
                let w2_off = h * d + h;
                grad[w2_off + h] += dv;
                for j in 0..h {
                    grad[w2_off + j] += dv * hid[j];
                    let da = dv * self.params[w2_off + j] * (1.0 - hid[j] * hid[j]);
                    grad[h * d + j] += da;
                    for (k, x) in z.iter().enumerate() {
                        grad[j * d + k] += da * x;
                    }
                }
            }
        }
        Ok((total, grad))
    }
}

/// Gradient ascent on the empirical variational objective; keeps the best
/// parameters seen. A non-finite objective aborts with the trace so far.
pub fn fit_g_hat(
    kind: DivergenceKind,
    e: &SampleSet,
    f: &SampleSet,
    cfg: &FitConfig,
) -> Result<VariationalNet> {
    cfg.validate()?;
    if e.dim() != f.dim() {
        return Err(Error::contract(
            "fit_g_hat",
            format!("dimensions {} and {} differ", e.dim(), f.dim()),
        ));
    }
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;
    let mut net = VariationalNet::init(kind, e.dim(), cfg.hidden, cfg.seed);
    let n = net.params.len();
    let (mut m, mut s) = (vec![0.0; n], vec![0.0; n]);
    let mut best = (f64::NEG_INFINITY, net.params.clone());
    let mut trace = Vec::new();
    for step in 0..=cfg.steps {
        let result = net.objective_and_grad(e, f, step < cfg.steps);
        let (j, grad) = match result {
            Ok((j, g)) if j.is_finite() => (j, g),
            Ok((j, _)) => return Err(diverged(step, &format!("objective {j}"), &trace)),
            Err(err) => return Err(diverged(step, &err.to_string(), &trace)),
        };
        if j > best.0 {
            best = (j, net.params.clone());
        }
        if step % cfg.record_every == 0 || step == cfg.steps {
            trace.push((step, best.0));
        }
        if step == cfg.steps {
            break;
        }
        let t = (step + 1) as i32;
        let (c1, c2) = (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t));
        for i in 0..n {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            s[i] = BETA2 * s[i] + (1.0 - BETA2) * grad[i] * grad[i];
            // ascent
            net.params[i] += cfg.lr * (m[i] / c1) / ((s[i] / c2).sqrt() + EPS);
        }
    }
    net.params = best.1;
    net.trace = trace;
    Ok(net)
}

fn diverged(step: usize, what: &str, trace: &[(usize, f64)]) -> Error {
    let last = trace
        .last()
        .map_or(String::from("none"), |(s, j)| format!("step {s}: {j}"));
    Error::Numerical(format!(
        "variational fit diverged at step {step} ({what}); last recorded best {last}"
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub estimate: f64,
    /// Samples per side used for the estimate.
    pub n_samples: usize,
    pub kind: DivergenceKind,
    pub trace: Vec<(usize, f64)>,
}

/// Plugs a fitted `ĝ` into the empirical objective on the given sets.
pub fn estimate_f_div(
    kind: DivergenceKind,
    e: &SampleSet,
    f: &SampleSet,
    g_hat: &VariationalNet,
) -> Result<EstimatorResult> {
    if g_hat.kind != kind {
        return Err(Error::contract(
            "estimate_f_div",
            format!("net was fit for {}, not {kind}", g_hat.kind),
        ));
    }
    Ok(EstimatorResult {
        estimate: g_hat.objective(e, f)?,
        n_samples: e.len().min(f.len()),
        kind,
        trace: g_hat.trace.clone(),
    })
}

/// Split both sets in half, fit on the first halves, estimate on the second.
pub fn estimate_divergence(
    kind: DivergenceKind,
    e: &SampleSet,
    f: &SampleSet,
    cfg: &FitConfig,
) -> Result<EstimatorResult> {
    let (e_fit, e_eval) = e.split_half()?;
    let (f_fit, f_eval) = f.split_half()?;
    let net = fit_g_hat(kind, &e_fit, &f_fit, cfg)?;
    estimate_f_div(kind, &e_eval, &f_eval, &net)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    pub estimate: f64,
    pub oracle: f64,
    pub abs_error: f64,
}

/// For each `N` and each of `repeats` seeds (`seed, seed+1, ...`), draws
/// `N` samples per side, estimates, and compares with the oracle.
#[allow(clippy::too_many_arguments)]
pub fn convergence_experiment(
    kind: DivergenceKind,
    spec_e: DistributionSpec,
    spec_f: DistributionSpec,
    n_grid: &[usize],
    repeats: usize,
    seed: u64,
    cfg: &FitConfig,
    exec: Exec,
) -> Result<Vec<ConvergenceRow>> {
    if n_grid.is_empty() || repeats == 0 {
        return Err(Error::contract(
            "convergence_experiment",
            "empty N grid or zero repeats",
        ));
    }
    let oracle = true_f_div_oracle(kind, spec_e, spec_f)?;
    let jobs: Vec<(usize, u64)> = n_grid
        .iter()
        .flat_map(|&n| (0..repeats as u64).map(move |r| (n, seed + r)))
        .collect();
    exec.try_map(&jobs, |&(n, s)| {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        rng.set_stream(n as u64);
        let e = spec_e.sample(n, &mut rng)?;
        let f = spec_f.sample(n, &mut rng)?;
        let fit = FitConfig { seed: s, ..*cfg };
        let estimate = estimate_divergence(kind, &e, &f, &fit)?.estimate;
        Ok(ConvergenceRow {
            n,
            seed: s,
            estimate,
            oracle,
            abs_error: (estimate - oracle).abs(),
        })
    })
}

/// `(N, mean abs error)` in grid order.
pub fn mean_abs_error_by_n(rows: &[ConvergenceRow]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64, usize)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|o| o.0 == r.n) {
            Some(o) => {
                o.1 += r.abs_error;
                o.2 += 1;
            }
            None => out.push((r.n, r.abs_error, 1)),
        }
    }
    out.into_iter().map(|(n, s, c)| (n, s / c as f64)).collect()
}

pub fn write_convergence_csv<W: Write>(writer: W, rows: &[ConvergenceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn save_convergence_csv(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_convergence_csv(file, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const B08: DistributionSpec = DistributionSpec::Bernoulli { p: 0.8 };
    const B02: DistributionSpec = DistributionSpec::Bernoulli { p: 0.2 };

    #[test]
    fn bernoulli_oracles() {
        let kl = true_f_div_oracle(DivergenceKind::KullbackLeibler, B08, B02).unwrap();
        // 0.8 ln(0.8/0.2) + 0.2 ln(0.2/0.8)
        assert_abs_diff_eq!(kl, 0.8 * 4f64.ln() + 0.2 * 0.25f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(kl, 0.83178, epsilon = 1e-5);
        let tv = true_f_div_oracle(DivergenceKind::TotalVariation, B08, B02).unwrap();
        assert_abs_diff_eq!(tv, 0.6, epsilon = 1e-12);
        let chi2 = true_f_div_oracle(DivergenceKind::Pearson, B08, B02).unwrap();
        assert_abs_diff_eq!(chi2, 0.36 / 0.2 + 0.36 / 0.8, epsilon = 1e-12);
        for kind in DivergenceKind::ALL {
            assert_abs_diff_eq!(
                true_f_div_oracle(kind, B08, B08).unwrap(),
                0.0,
                epsilon = 1e-12
            );
        }
        assert!(true_f_div_oracle(
            DivergenceKind::KullbackLeibler,
            B08,
            DistributionSpec::Gaussian { mean: 0.0 }
        )
        .is_err());
    }

    #[test]
    fn gaussian_closed_forms_match_quadrature() {
        for kind in [
            DivergenceKind::KullbackLeibler,
            DivergenceKind::Pearson,
            DivergenceKind::TotalVariation,
        ] {
            let closed = true_f_div_oracle(
                kind,
                DistributionSpec::Gaussian { mean: 1.0 },
                DistributionSpec::Gaussian { mean: 0.0 },
            )
            .unwrap();
            let quad = gaussian_f_div_quadrature(kind, 1.0, 0.0).unwrap();
            assert_abs_diff_eq!(closed, quad, epsilon = 1e-6);
        }
        let js = gaussian_f_div_quadrature(DivergenceKind::JensenShannon, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(js, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let e = SampleSet::new(vec![vec![0.3, -1.0], vec![1.2, 0.4], vec![-0.5, 0.9]]).unwrap();
        let f = SampleSet::new(vec![vec![0.1, 0.2], vec![-1.1, 0.0]]).unwrap();
        for kind in DivergenceKind::ALL {
            let net = VariationalNet::init(kind, 2, 5, 9);
            let (_, grad) = net.objective_and_grad(&e, &f, true).unwrap();
            for (i, &analytic) in grad.iter().enumerate() {
                let mut plus = net.clone();
                plus.params[i] += 1e-6;
                let mut minus = net.clone();
                minus.params[i] -= 1e-6;
                let numeric =
                    (plus.objective(&e, &f).unwrap() - minus.objective(&e, &f).unwrap()) / 2e-6;
                assert_abs_diff_eq!(analytic, numeric, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn identical_samples_give_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = DistributionSpec::Gaussian { mean: 0.0 }
            .sample(400, &mut rng)
            .unwrap();
        let r = estimate_divergence(
            DivergenceKind::KullbackLeibler,
            &s,
            &s,
            &FitConfig::default(),
        )
        .unwrap();
        assert!(r.estimate <= 0.02, "estimate {}", r.estimate);
    }

    #[test]
    fn fit_is_deterministic_and_trace_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = B08.sample(300, &mut rng).unwrap();
        let f = B02.sample(300, &mut rng).unwrap();
        let cfg = FitConfig {
            steps: 100,
            ..Default::default()
        };
        let a = fit_g_hat(DivergenceKind::JensenShannon, &e, &f, &cfg).unwrap();
        let b = fit_g_hat(DivergenceKind::JensenShannon, &e, &f, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.trace().windows(2).all(|w| w[1].1 >= w[0].1));
        assert_eq!(a.trace().last().unwrap().0, 100);
    }

    #[test]
    fn zero_steps_uses_the_initial_net() {
        let e = SampleSet::from_scalars(&[0.0, 1.0]).unwrap();
        let f = SampleSet::from_scalars(&[1.0, 1.0]).unwrap();
        let cfg = FitConfig {
            steps: 0,
            seed: 4,
            ..Default::default()
        };
        let net = fit_g_hat(DivergenceKind::Pearson, &e, &f, &cfg).unwrap();
        assert_eq!(
            net.params(),
            VariationalNet::init(DivergenceKind::Pearson, 1, 16, 4).params()
        );
        let r = estimate_f_div(DivergenceKind::Pearson, &e, &f, &net).unwrap();
        assert!(r.estimate.is_finite());
        assert!(estimate_f_div(DivergenceKind::KullbackLeibler, &e, &f, &net).is_err());
    }

    #[test]
    fn bernoulli_estimates_track_the_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = B08.sample(4000, &mut rng).unwrap();
        let f = B02.sample(4000, &mut rng).unwrap();
        for kind in DivergenceKind::ALL {
            let oracle = true_f_div_oracle(kind, B08, B02).unwrap();
            let r = estimate_divergence(kind, &e, &f, &FitConfig::default()).unwrap();
            let tol = if kind == DivergenceKind::Pearson {
                0.25
            } else {
                0.08
            };
            assert!(
                (r.estimate - oracle).abs() < tol,
                "{kind}: {} vs {oracle}",
                r.estimate
            );
        }
    }

    #[test]
    fn sample_set_contracts() {
        assert!(SampleSet::new(vec![]).is_err());
        assert!(SampleSet::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(SampleSet::from_scalars(&[f64::NAN]).is_err());
        let (a, b) = SampleSet::from_scalars(&[1.0, 2.0, 3.0])
            .unwrap()
            .split_half()
            .unwrap();
        assert_eq!((a.len(), b.len()), (2, 1));
        let e = SampleSet::from_scalars(&[1.0]).unwrap();
        let f = SampleSet::new(vec![vec![1.0, 2.0]]).unwrap();
        assert!(fit_g_hat(
            DivergenceKind::KullbackLeibler,
            &e,
            &f,
            &FitConfig::default()
        )
        .is_err());
    }

    #[test]
    fn convergence_csv_layout() {
        let cfg = FitConfig {
            steps: 20,
            ..Default::default()
        };
        let rows = convergence_experiment(
            DivergenceKind::KullbackLeibler,
            B08,
            B02,
            &[20, 40],
            2,
            5,
            &cfg,
            Exec::Sequential,
        )
        .unwrap();
        assert_eq!(rows.len(), 4);
        let mut buf = Vec::new();
        write_convergence_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("N,seed,estimate,oracle,abs_error\n20,5,"));
        assert_eq!(mean_abs_error_by_n(&rows).len(), 2);
        let par = convergence_experiment(
            DivergenceKind::KullbackLeibler,
            B08,
            B02,
            &[20, 40],
            2,
            5,
            &cfg,
            Exec::Parallel,
        )
        .unwrap();
        assert_eq!(par, rows);
    }
}
