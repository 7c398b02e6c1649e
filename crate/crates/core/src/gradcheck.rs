//! Central finite-difference verification of every loss gradient.

use serde::Serialize;

use crate::divergence::DivergenceKind;
use crate::error::Result;
use crate::losses::{
    compute_loss, ForgetExample, LossBatch, LossSpec, Method, ReferenceModel, RetainExample,
};
use crate::model::{ModelConfig, ModelParams, Precision, Scalar, Token};
use crate::parallel::Exec;

pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative-error threshold for a precision.
pub fn tolerance(precision: Precision) -> f64 {
    match precision {
        Precision::Double => 1e-6,
        Precision::Single => 1e-3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckCase {
    pub loss: String,
    pub n_params: usize,
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub precision: Precision,
    pub tolerance: f64,
    pub cases: Vec<GradcheckCase>,
}

impl GradcheckReport {
    pub fn all_passed(&self) -> bool {
        self.cases.iter().all(|c| c.passed)
    }
}

/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Central differences of the loss in double precision, one coordinate at a
/// time. Coordinates are split into blocks that run on `exec`.
pub fn numeric_gradient(
    params: &ModelParams<f64>,
    reference: Option<&ReferenceModel<f64>>,
    batch: &LossBatch<'_>,
    spec: &LossSpec,
    h: f64,
    exec: Exec,
) -> Result<Vec<f64>> {
    const BLOCK: usize = 256;
    let n = params.num_params();
    let blocks = n.div_ceil(BLOCK);
    let parts = exec.map_range(blocks, |b| -> Result<Vec<f64>> {
        let mut p = params.clone();
        let mut out = Vec::with_capacity(BLOCK);
        for i in b * BLOCK..((b + 1) * BLOCK).min(n) {
            let orig = p.flat()[i];
            p.flat_mut()[i] = orig + h;
            let up = compute_loss(&p, reference, batch, spec, false, Exec::Sequential)?.value;
            p.flat_mut()[i] = orig - h;
            let down = compute_loss(&p, reference, batch, spec, false, Exec::Sequential)?.value;
            p.flat_mut()[i] = orig;
            out.push((up - down) / (2.0 * h));
        }
        Ok(out)
    });
    let mut grad = Vec::with_capacity(n);
    for part in parts {
        grad.extend(part?);
    }
    Ok(grad)
}

/// Compare the analytic gradient in precision `F` against double-precision
/// central differences at the same point.
pub fn check_loss<F: Scalar>(
    params: &ModelParams<F>,
    reference: Option<&ReferenceModel<F>>,
    batch: &LossBatch<'_>,
    spec: &LossSpec,
    h: f64,
    exec: Exec,
) -> Result<GradcheckCase> {
    let analytic = compute_loss(params, reference, batch, spec, true, exec)?
        .grads
        .expect("gradient requested");
    let analytic: Vec<f64> = analytic.flat().iter().map(|g| g.as_f64()).collect();
    let p64 = params.cast::<f64>();
    let r64 = reference.map(|r| ReferenceModel::new(r.params().cast::<f64>()));
    let numeric = numeric_gradient(&p64, r64.as_ref(), batch, spec, h, exec)?;
    let rel_error = relative_error(&analytic, &numeric);
    let max_abs_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs())
        .fold(0.0, f64::max);
    let tol = tolerance(F::PRECISION);
    Ok(GradcheckCase {
        loss: spec.tag(),
        n_params: params.num_params(),
        rel_error,
        max_abs_error,
        passed: rel_error <= tol && rel_error.is_finite(),
    })
}

/// Every loss specification the suite covers: the 13 non-FLAT methods and
/// FLAT under each divergence.
pub fn all_loss_specs() -> Vec<LossSpec> {
    let mut specs: Vec<LossSpec> = Method::ALL
        .into_iter()
        .filter(|m| *m != Method::Flat)
        .map(|m| {
            let spec = LossSpec::new(m);
            if m == Method::Simpo {
                spec.with_gamma(0.3)
            } else {
                spec
            }
        })
        .collect();
    specs.extend(DivergenceKind::ALL.into_iter().map(LossSpec::flat));
    specs
}

/// Small fixed batches exercising every optional field.
pub struct Fixture {
    pub forget: Vec<ForgetExample>,
    pub retain: Vec<RetainExample>,
    pub pool: Vec<Vec<Token>>,
}

impl Fixture {
    pub fn new() -> Self {
        let t = |s: &str| s.bytes().map(Token::from).collect::<Vec<_>>();
        Fixture {
            forget: vec![
                ForgetExample::new(t("Who?"), t("Ann Lee"))
                    .with_template(t("No idea"))
                    .with_idk(t("I don't know")),
                ForgetExample::new(t("Born"), t("1902."))
                    .with_template(t("Unsure"))
                    .with_idk(t("Pass")),
            ],
            retain: vec![
                RetainExample::new(t("Sky"), t("blue")),
                RetainExample::new(t("Cat"), t("meows.")),
            ],
            pool: vec![t("blue"), t("meows.")],
        }
    }

    pub fn batch(&self) -> LossBatch<'_> {
        LossBatch::new(&self.forget, &self.retain).with_pool(&self.pool, 17)
    }
}

impl Default for Fixture {
    fn default() -> Self {
        Fixture::new()
    }
}

fn run_suite<F: Scalar>(seed: u64, exec: Exec) -> Result<GradcheckReport> {
    let params = ModelParams::<F>::init(&ModelConfig::tiny(seed))?;
    let reference = ReferenceModel::new(ModelParams::<F>::init(&ModelConfig::tiny(seed + 1))?);
    let fixture = Fixture::new();
    let batch = fixture.batch();
    let cases = all_loss_specs()
        .iter()
        .map(|spec| check_loss(&params, Some(&reference), &batch, spec, DEFAULT_STEP, exec))
        .collect::<Result<Vec<_>>>()?;
    Ok(GradcheckReport {
        precision: F::PRECISION,
        tolerance: tolerance(F::PRECISION),
        cases,
    })
}

/// The full suite on the tiny model in the requested precision.
pub fn gradcheck_suite(precision: Precision, seed: u64, exec: Exec) -> Result<GradcheckReport> {
    match precision {
        Precision::Double => run_suite::<f64>(seed, exec),
        Precision::Single => run_suite::<f32>(seed, exec),
    }
}
