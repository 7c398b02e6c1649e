//! Unlearning objectives over forget/retain batches.
//!
//! Every objective reduces to a few scalar statistics per (prompt, response)
//! sequence: the summed response log-probability, the mean correct-token
//! probability, and the summed token-level KL to a reference model. A loss is
//! evaluated in three passes:
//!
//! 1. forward every distinct sequence (in parallel),
//! 2. combine the statistics into the loss value and per-sequence
//!    sensitivities `a = dL/d(Σ log p)`, `b = dL/dP`, `c = dL/d(Σ KL)`,
//! 3. backpropagate each sequence independently (in parallel) and sum the
//!    per-sequence gradients in a fixed order.
//!
//! All methods report batch means.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::{flat_adjustment_weighted, sigmoid, softplus, DivergenceKind};
use crate::error::{Error, Result};
use crate::model::{
    backward, forward, join_pair, Gradients, ModelParams, Scalar, Tape, Token, VOCAB_SIZE,
};
use crate::parallel::Exec;

/// A forget-set item: prompt, the response to forget, and optional
/// replacement answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForgetExample {
    pub x_f: Vec<Token>,
    pub y_f: Vec<Token>,
    /// Template ("good") answer used by FLAT and the preference losses.
    #[serde(default)]
    pub y_e: Option<Vec<Token>>,
    /// Refusal answer used by PO.
    #[serde(default)]
    pub y_idk: Option<Vec<Token>>,
}

impl ForgetExample {
    pub fn new(x_f: Vec<Token>, y_f: Vec<Token>) -> Self {
        ForgetExample {
            x_f,
            y_f,
            y_e: None,
            y_idk: None,
        }
    }

    pub fn with_template(mut self, y_e: Vec<Token>) -> Self {
        self.y_e = Some(y_e);
        self
    }

    pub fn with_idk(mut self, y_idk: Vec<Token>) -> Self {
        self.y_idk = Some(y_idk);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetainExample {
    pub x_r: Vec<Token>,
    pub y_r: Vec<Token>,
}

impl RetainExample {
    pub fn new(x_r: Vec<Token>, y_r: Vec<Token>) -> Self {
        RetainExample { x_r, y_r }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Finetune,
    Ga,
    Gd,
    KlMin,
    Po,
    Mismatch,
    Llmu,
    Dpo,
    DpoNoMref,
    Simpo,
    Npo,
    NpoKl,
    NpoRt,
    Flat,
}

impl Method {
    pub const ALL: [Method; 14] = [
        Method::Finetune,
        Method::Ga,
        Method::Gd,
        Method::KlMin,
        Method::Po,
        Method::Mismatch,
        Method::Llmu,
        Method::Dpo,
        Method::DpoNoMref,
        Method::Simpo,
        Method::Npo,
        Method::NpoKl,
        Method::NpoRt,
        Method::Flat,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Finetune => "finetune",
            Method::Ga => "ga",
            Method::Gd => "gd",
            Method::KlMin => "kl_min",
            Method::Po => "po",
            Method::Mismatch => "mismatch",
            Method::Llmu => "llmu",
            Method::Dpo => "dpo",
            Method::DpoNoMref => "dpo_no_mref",
            Method::Simpo => "simpo",
            Method::Npo => "npo",
            Method::NpoKl => "npo_kl",
            Method::NpoRt => "npo_rt",
            Method::Flat => "flat",
        }
    }

    pub fn needs_reference(self) -> bool {
        matches!(
            self,
            Method::KlMin
                | Method::Llmu
                | Method::Dpo
                | Method::Npo
                | Method::NpoKl
                | Method::NpoRt
        )
    }

    pub fn uses_forget(self) -> bool {
        self != Method::Finetune
    }

    pub fn uses_retain(self) -> bool {
        matches!(
            self,
            Method::Finetune
                | Method::Gd
                | Method::KlMin
                | Method::Po
                | Method::Mismatch
                | Method::Llmu
                | Method::NpoKl
                | Method::NpoRt
        )
    }

    pub fn needs_template(self) -> bool {
        matches!(
            self,
            Method::Flat | Method::Dpo | Method::DpoNoMref | Method::Simpo
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.label() == norm || m.label().replace('_', "") == norm)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

fn default_beta() -> f64 {
    0.1
}

fn unit() -> f64 {
    1.0
}

/// Which objective to apply and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSpec {
    pub method: Method,
    #[serde(default)]
    pub divergence: Option<DivergenceKind>,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default = "unit")]
    pub lambda_e: f64,
    #[serde(default = "unit")]
    pub lambda_f: f64,
}

impl LossSpec {
    pub fn new(method: Method) -> Self {
        LossSpec {
            method,
            divergence: None,
            beta: default_beta(),
            gamma: 0.0,
            lambda_e: 1.0,
            lambda_f: 1.0,
        }
    }

    pub fn flat(kind: DivergenceKind) -> Self {
        LossSpec {
            divergence: Some(kind),
            ..LossSpec::new(Method::Flat)
        }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!(
                "gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if !self.lambda_e.is_finite() || !self.lambda_f.is_finite() {
            return Err(Error::Config("lambda weights must be finite".into()));
        }
        if self.method == Method::Flat && self.divergence.is_none() {
            return Err(Error::Config("flat requires a divergence kind".into()));
        }
        Ok(())
    }

    /// Short name such as `flat-kl` or `npo`.
    pub fn tag(&self) -> String {
        match (self.method, self.divergence) {
            (Method::Flat, Some(kind)) => format!("flat-{}", kind.label()),
            (m, _) => m.label().to_string(),
        }
    }
}

/// Frozen snapshot of the pre-unlearning model. There is no mutable access.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceModel<F: Scalar> {
    params: ModelParams<F>,
}

impl<F: Scalar> ReferenceModel<F> {
    pub fn new(params: ModelParams<F>) -> Self {
        ReferenceModel { params }
    }

    pub fn params(&self) -> &ModelParams<F> {
        &self.params
    }
}

/// Everything a loss may read for one step.
#[derive(Debug, Clone, Copy)]
pub struct LossBatch<'a> {
    pub forget: &'a [ForgetExample],
    pub retain: &'a [RetainExample],
    /// `Y_rdn` for Mismatch and LLMU.
    pub random_pool: &'a [Vec<Token>],
    /// Drives LLMU's per-prompt draw from the pool.
    pub sample_seed: u64,
}

impl<'a> LossBatch<'a> {
    pub fn new(forget: &'a [ForgetExample], retain: &'a [RetainExample]) -> Self {
        LossBatch {
            forget,
            retain,
            random_pool: &[],
            sample_seed: 0,
        }
    }

    pub fn with_pool(mut self, pool: &'a [Vec<Token>], seed: u64) -> Self {
        self.random_pool = pool;
        self.sample_seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput<F: Scalar> {
    pub value: f64,
    pub grads: Option<Gradients<F>>,
}

/// Sample a pool of retain responses, reproducibly.
pub fn build_random_responses(
    retain: &[RetainExample],
    pool_size: usize,
    seed: u64,
) -> Result<Vec<Vec<Token>>> {
    if pool_size == 0 {
        return Ok(Vec::new());
    }
    if retain.is_empty() {
        return Err(Error::contract(
            "build_random_responses",
            "retain corpus is empty",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distinct = pool_size.min(retain.len());
    let mut picks: Vec<usize> = index::sample(&mut rng, retain.len(), distinct).into_vec();
    while picks.len() < pool_size {
        picks.push(rng.random_range(0..retain.len()));
    }
    Ok(picks.into_iter().map(|i| retain[i].y_r.clone()).collect())
}

/// Index into the pool for forget example `k` at a given step seed.
fn llmu_draw(seed: u64, k: usize, pool_len: usize) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng.random_range(0..pool_len)
}

struct Job<'a> {
    prompt: &'a [Token],
    response: &'a [Token],
    kl: bool,
    ref_lp: bool,
}

enum Term {
    /// `w · (−Σ log p)`
    CrossEntropy { job: usize, w: f64 },
    /// `w · Σ_i KL(ref_i ‖ θ_i)`
    RetainKl { job: usize, w: f64 },
    /// `w · [λ_f f*(g*(P_f)) − λ_e g*(P_e)]`
    Flat {
        e: usize,
        f: usize,
        w: f64,
        kind: DivergenceKind,
        lambda_e: f64,
        lambda_f: f64,
    },
    /// `w · (2/β) softplus(−z)` with `z = Σ c_k LP_θ(k) + Σ r_k LP_ref(k) + z0`
    Preference {
        parts: Vec<(usize, f64)>,
        ref_parts: Vec<(usize, f64)>,
        z0: f64,
        beta: f64,
        w: f64,
    },
}

#[derive(Default)]
struct Plan<'a> {
    jobs: Vec<Job<'a>>,
    index: HashMap<(&'a [Token], &'a [Token]), usize>,
    terms: Vec<Term>,
}

impl<'a> Plan<'a> {
    fn job(&mut self, prompt: &'a [Token], response: &'a [Token], kl: bool, ref_lp: bool) -> usize {
        let id = *self.index.entry((prompt, response)).or_insert_with(|| {
            self.jobs.push(Job {
                prompt,
                response,
                kl: false,
                ref_lp: false,
            });
            self.jobs.len() - 1
        });
        self.jobs[id].kl |= kl;
        self.jobs[id].ref_lp |= ref_lp;
        id
    }

    fn finetune(&mut self, retain: &'a [RetainExample]) {
        let w = 1.0 / retain.len() as f64;
        for r in retain {
            let job = self.job(&r.x_r, &r.y_r, false, false);
            self.terms.push(Term::CrossEntropy { job, w });
        }
    }

    fn ascent(&mut self, forget: &'a [ForgetExample]) {
        let w = -1.0 / forget.len() as f64;
        for ex in forget {
            let job = self.job(&ex.x_f, &ex.y_f, false, false);
            self.terms.push(Term::CrossEntropy { job, w });
        }
    }

    fn retain_kl(&mut self, retain: &'a [RetainExample]) {
        let w = 1.0 / retain.len() as f64;
        for r in retain {
            let job = self.job(&r.x_r, &r.y_r, true, false);
            self.terms.push(Term::RetainKl { job, w });
        }
    }

    fn npo(&mut self, forget: &'a [ForgetExample], beta: f64) {
        let w = 1.0 / forget.len() as f64;
        for ex in forget {
            let f = self.job(&ex.x_f, &ex.y_f, false, true);
            self.terms.push(Term::Preference {
                parts: vec![(f, -beta)],
                ref_parts: vec![(f, beta)],
                z0: 0.0,
                beta,
                w,
            });
        }
    }
}

fn require_nonempty<T>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        Err(Error::contract("loss", format!("empty {what} batch")))
    } else {
        Ok(())
    }
}

fn template(ex: &ForgetExample, k: usize) -> Result<&[Token]> {
    ex.y_e.as_deref().ok_or_else(|| {
        Error::contract(
            "loss",
            format!("forget example {k} has no template answer y_e"),
        )
    })
}

fn build_plan<'a>(spec: &LossSpec, batch: &LossBatch<'a>, has_reference: bool) -> Result<Plan<'a>> {
    spec.validate()?;
    let m = spec.method;
    if m.needs_reference() && !has_reference {
        return Err(Error::contract(
            "loss",
            format!("{m} requires a reference model"),
        ));
    }
    if m.uses_forget() {
        require_nonempty(batch.forget, "forget")?;
    }
    if m.uses_retain() {
        require_nonempty(batch.retain, "retain")?;
    }
    for (k, ex) in batch.forget.iter().enumerate() {
        if ex.y_f.is_empty() {
            return Err(Error::contract(
                "loss",
                format!("forget example {k} has an empty y_f"),
            ));
        }
    }
    for (k, r) in batch.retain.iter().enumerate() {
        if r.y_r.is_empty() {
            return Err(Error::contract(
                "loss",
                format!("retain example {k} has an empty y_r"),
            ));
        }
    }

    let mut plan = Plan::default();
    let forget = batch.forget;
    let nf = forget.len() as f64;
    let beta = spec.beta;
    match m {
        Method::Finetune => plan.finetune(batch.retain),
        Method::Ga => plan.ascent(forget),
        Method::Gd => {
            plan.finetune(batch.retain);
            plan.ascent(forget);
        }
        Method::KlMin => {
            plan.ascent(forget);
            plan.retain_kl(batch.retain);
        }
        Method::Po => {
            plan.finetune(batch.retain);
            for (k, ex) in forget.iter().enumerate() {
                let idk = ex.y_idk.as_deref().ok_or_else(|| {
                    Error::contract(
                        "loss",
                        format!("forget example {k} has no refusal answer y_idk"),
                    )
                })?;
                if idk.is_empty() {
                    return Err(Error::contract(
                        "loss",
                        format!("forget example {k} has an empty y_idk"),
                    ));
                }
                let job = plan.job(&ex.x_f, idk, false, false);
                plan.terms.push(Term::CrossEntropy { job, w: 1.0 / nf });
            }
        }
        Method::Mismatch => {
            require_nonempty(batch.random_pool, "random response pool")?;
            plan.finetune(batch.retain);
            let w = 1.0 / (nf * batch.random_pool.len() as f64);
            for ex in forget {
                for y in batch.random_pool {
                    let job = plan.job(&ex.x_f, y, false, false);
                    plan.terms.push(Term::CrossEntropy { job, w });
                }
            }
        }
        Method::Llmu => {
            plan.ascent(forget);
            if !batch.random_pool.is_empty() {
                for (k, ex) in forget.iter().enumerate() {
                    let y = &batch.random_pool
                        [llmu_draw(batch.sample_seed, k, batch.random_pool.len())];
                    let job = plan.job(&ex.x_f, y, false, false);
                    plan.terms.push(Term::CrossEntropy { job, w: 1.0 / nf });
                }
            }
            plan.retain_kl(batch.retain);
        }
        Method::Dpo | Method::DpoNoMref | Method::Simpo => {
            let with_ref = m == Method::Dpo;
            for (k, ex) in forget.iter().enumerate() {
                let y_e = template(ex, k)?;
                if y_e.is_empty() {
                    return Err(Error::contract(
                        "loss",
                        format!("forget example {k} has an empty y_e"),
                    ));
                }
                let e = plan.job(&ex.x_f, y_e, false, with_ref);
                let f = plan.job(&ex.x_f, &ex.y_f, false, with_ref);
                let (ce, cf, z0) = if m == Method::Simpo {
                    (
                        beta / y_e.len() as f64,
                        beta / ex.y_f.len() as f64,
                        -spec.gamma,
                    )
                } else {
                    (beta, beta, 0.0)
                };
                let ref_parts = if with_ref {
                    vec![(e, -beta), (f, beta)]
                } else {
                    Vec::new()
                };
                plan.terms.push(Term::Preference {
                    parts: vec![(e, ce), (f, -cf)],
                    ref_parts,
                    z0,
                    beta,
                    w: 1.0 / nf,
                });
            }
        }
        Method::Npo => plan.npo(forget, beta),
        Method::NpoKl => {
            plan.npo(forget, beta);
            plan.retain_kl(batch.retain);
        }
        Method::NpoRt => {
            plan.npo(forget, beta);
            plan.finetune(batch.retain);
        }
        Method::Flat => {
            let kind = spec.divergence.expect("validated");
            for (k, ex) in forget.iter().enumerate() {
                let y_e = template(ex, k)?;
                if y_e.is_empty() {
                    return Err(Error::contract(
                        "loss",
                        format!("forget example {k} has an empty y_e"),
                    ));
                }
                let e = plan.job(&ex.x_f, y_e, false, false);
                let f = plan.job(&ex.x_f, &ex.y_f, false, false);
                plan.terms.push(Term::Flat {
                    e,
                    f,
                    w: 1.0 / nf,
                    kind,
                    lambda_e: spec.lambda_e,
                    lambda_f: spec.lambda_f,
                });
            }
        }
    }
    Ok(plan)
}

struct JobStats<F: Scalar> {
    tape: Tape<F>,
    first: usize,
    log_probs: Vec<f64>,
    kl: f64,
    ref_lp: f64,
    /// Reference next-token probabilities at each response position, row-major.
    ref_probs: Vec<f64>,
}

impl<F: Scalar> JobStats<F> {
    fn sum_lp(&self) -> f64 {
        self.log_probs.iter().sum()
    }

    fn mean_prob(&self) -> f64 {
        self.log_probs.iter().map(|lp| lp.exp()).sum::<f64>() / self.log_probs.len() as f64
    }
}

fn run_job<F: Scalar>(
    params: &ModelParams<F>,
    reference: Option<&ReferenceModel<F>>,
    job: &Job<'_>,
) -> Result<JobStats<F>> {
    let (seq, first) = join_pair(job.prompt, job.response);
    let tape = forward(params, &seq)?;
    let n = job.response.len();
    let log_probs: Vec<f64> = (0..n)
        .map(|i| tape.log_probs_at(first + i)[job.response[i] as usize].as_f64())
        .collect();
    let mut stats = JobStats {
        tape,
        first,
        log_probs,
        kl: 0.0,
        ref_lp: 0.0,
        ref_probs: Vec::new(),
    };
    if job.kl || job.ref_lp {
        let reference = reference.expect("plan checked reference presence");
        let ref_tape = forward(reference.params(), &seq)?;
        if job.ref_lp {
            stats.ref_lp = (0..n)
                .map(|i| ref_tape.log_probs_at(first + i)[job.response[i] as usize].as_f64())
                .sum();
        }
        if job.kl {
            stats.ref_probs.reserve(n * VOCAB_SIZE);
            for i in 0..n {
                let rl = ref_tape.log_probs_at(first + i);
                let tl = stats.tape.log_probs_at(first + i);
                for v in 0..VOCAB_SIZE {
                    let (r, t) = (rl[v].as_f64(), tl[v].as_f64());
                    let rp = r.exp();
                    if rp > 0.0 {
                        stats.kl += rp * (r - t);
                    }
                    stats.ref_probs.push(rp);
                }
            }
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, Copy, Default)]
struct Sensitivity {
    /// dL / d(Σ_i log p_i)
    a: f64,
    /// dL / dP where P is the mean correct-token probability
    b: f64,
    /// dL / d(Σ_i KL_i)
    c: f64,
}

fn combine<F: Scalar>(terms: &[Term], stats: &[JobStats<F>]) -> Result<(f64, Vec<Sensitivity>)> {
    let mut value = 0.0;
    let mut sens = vec![Sensitivity::default(); stats.len()];
    for term in terms {
        match *term {
            Term::CrossEntropy { job, w } => {
                value += -w * stats[job].sum_lp();
                sens[job].a -= w;
            }
            Term::RetainKl { job, w } => {
                value += w * stats[job].kl;
                sens[job].c += w;
            }
            Term::Flat {
                e,
                f,
                w,
                kind,
                lambda_e,
                lambda_f,
            } => {
                let adj = flat_adjustment_weighted(
                    kind,
                    stats[e].mean_prob(),
                    stats[f].mean_prob(),
                    lambda_e,
                    lambda_f,
                )?;
                value += w * adj.loss;
                sens[e].b += w * adj.d_loss_d_pe;
                sens[f].b += w * adj.d_loss_d_pf;
            }
            Term::Preference {
                ref parts,
                ref ref_parts,
                z0,
                beta,
                w,
            } => {
                let mut z = z0;
                for &(job, coef) in parts {
                    z += coef * stats[job].sum_lp();
                }
                for &(job, coef) in ref_parts {
                    z += coef * stats[job].ref_lp;
                }
                let scale = 2.0 / beta;
                value += w * scale * softplus(-z);
                let dz = -w * scale * sigmoid(-z);
                for &(job, coef) in parts {
                    sens[job].a += dz * coef;
                }
            }
        }
    }
    if !value.is_finite() {
        return Err(Error::Numerical(format!("loss evaluated to {value}")));
    }
    Ok((value, sens))
}

fn job_gradient<F: Scalar>(
    params: &ModelParams<F>,
    job: &Job<'_>,
    stats: &JobStats<F>,
    s: Sensitivity,
) -> Result<Option<Gradients<F>>> {
    if s.a == 0.0 && s.b == 0.0 && s.c == 0.0 {
        return Ok(None);
    }
    let t_len = stats.tape.len();
    let n = job.response.len();
    let b_tok = s.b / n as f64;
    let mut dlogits = vec![F::zero(); t_len * VOCAB_SIZE];
    for i in 0..n {
        let pos = stats.first + i;
        let lp = stats.tape.log_probs_at(pos);
        let y = job.response[i] as usize;
        let coef = s.a + b_tok * stats.log_probs[i].exp();
        let row = &mut dlogits[pos * VOCAB_SIZE..(pos + 1) * VOCAB_SIZE];
        for v in 0..VOCAB_SIZE {
            let p = lp[v].as_f64().exp();
            let onehot = if v == y { 1.0 } else { 0.0 };
            let mut g = coef * (onehot - p);
            if s.c != 0.0 {
                g += s.c * (p - stats.ref_probs[i * VOCAB_SIZE + v]);
            }
            row[v] = F::lit(g);
        }
    }
    let mut grads = Gradients::zeros_like(params);
    backward(params, &stats.tape, &dlogits, &mut grads)?;
    Ok(Some(grads))
}

/// Evaluate `spec` on `batch`, optionally with `dL/dθ`.
pub fn compute_loss<F: Scalar>(
    params: &ModelParams<F>,
    reference: Option<&ReferenceModel<F>>,
    batch: &LossBatch<'_>,
    spec: &LossSpec,
    with_grad: bool,
    exec: Exec,
) -> Result<LossOutput<F>> {
    if let Some(r) = reference {
        if r.params().tensor_specs() != params.tensor_specs() {
            return Err(Error::State(
                "reference model layout differs from the trained model".into(),
            ));
        }
    }
    let plan = build_plan(spec, batch, reference.is_some())?;
    let stats = exec.try_map(&plan.jobs, |job| run_job(params, reference, job))?;
    let (value, sens) = combine(&plan.terms, &stats)?;
    if !with_grad {
        return Ok(LossOutput { value, grads: None });
    }
    let work: Vec<usize> = (0..plan.jobs.len()).collect();
    let parts = exec.try_map(&work, |&j| {
        job_gradient(params, &plan.jobs[j], &stats[j], sens[j])
    })?;
    let mut total = Gradients::zeros_like(params);
    for g in parts.iter().flatten() {
        total.add_assign(g);
    }
    Ok(LossOutput {
        value,
        grads: Some(total),
    })
}

/// Loss value only.
pub fn loss_value<F: Scalar>(
    params: &ModelParams<F>,
    reference: Option<&ReferenceModel<F>>,
    batch: &LossBatch<'_>,
    spec: &LossSpec,
) -> Result<f64> {
    Ok(compute_loss(params, reference, batch, spec, false, Exec::available())?.value)
}
