//! Experiment orchestration: pretraining, the retained comparator, unlearning
//! runs, post-hoc baselines, and evaluation into a [`MetricsReport`].

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::synthetic::{self, SyntheticConfig};
use crate::data::{DataBundle, RawBundle};
use crate::divergence::DivergenceKind;
use crate::error::{Error, Result};
use crate::losses::{
    build_random_responses, compute_loss, ForgetExample, LossBatch, LossSpec, Method,
    ReferenceModel, RetainExample,
};
use crate::metrics::{
    self, auc_roc, fq_gap, generate_answers, ks_two_sample, min_k_scores, normalized_cond_prob,
    perplexity, score_generations, truth_ratios, GenerationScores, MetricsReport, Pair, ReportRow,
    TruthDenominator,
};
use crate::model::{
    adamw_step, encode_checkpoint, save_checkpoint, AdamWConfig, AdamWState, CausalLm, ModelConfig,
    ModelParams, Precision, Scalar, Token, TokenDistribution, BOS,
};
use crate::parallel::Exec;

/// Where the experiment's text comes from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Directory of JSONL splits; the synthetic generator is used when absent.
    pub dir: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    /// Seed for assigning refusal templates to forget examples.
    pub template_seed: u64,
}

impl DataConfig {
    pub fn load(&self) -> Result<DataBundle> {
        let raw = match &self.dir {
            Some(dir) => RawBundle::load(dir)?,
            None => synthetic::generate(&self.synthetic)?,
        };
        raw.tokenize(self.template_seed)
    }
}

/// Next-token training schedule for the original, retained and reinforced models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 40,
            lr: 3e-3,
            batch_size: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Fraction of lowest-probability tokens for Min-K% Prob.
    pub min_k: f64,
    /// Also evaluate the task-vector baseline.
    pub task_vector: bool,
    /// Also evaluate WHP with this interpolation weight.
    pub whp_alpha: Option<f64>,
    /// Epochs of forget-only training for the reinforced model.
    pub reinforce_epochs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            min_k: metrics::DEFAULT_MIN_K,
            task_vector: false,
            whp_alpha: None,
            reinforce_epochs: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub data: DataConfig,
    pub method: LossSpec,
    /// Unlearning epochs over the forget set.
    pub epochs: usize,
    pub batch_size: usize,
    /// Unlearning learning rate.
    pub lr: f64,
    pub seed: u64,
    pub precision: Precision,
    pub pretrain: PretrainConfig,
    pub adamw: AdamWConfig,
    /// Size of the retain-response pool used by Mismatch and LLMU.
    pub random_pool_size: usize,
    /// Abort unlearning once `|loss|` exceeds this.
    pub divergence_guard: f64,
    /// Cap on worker threads (0 = library default).
    pub threads: usize,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig::default(),
            data: DataConfig::default(),
            method: LossSpec::flat(DivergenceKind::KullbackLeibler),
            epochs: 3,
            batch_size: 8,
            lr: 3e-4,
            seed: 0,
            precision: Precision::Single,
            pretrain: PretrainConfig::default(),
            adamw: AdamWConfig::default(),
            random_pool_size: 16,
            divergence_guard: 1e4,
            threads: 0,
            eval: EvalConfig::default(),
        }
    }
}

fn positive_lr(name: &str, lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {lr}")))
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.method.validate()?;
        if self.epochs == 0 || self.pretrain.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 || self.pretrain.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        positive_lr("lr", self.lr)?;
        positive_lr("pretrain.lr", self.pretrain.lr)?;
        if !(self.divergence_guard > 0.0) {
            return Err(Error::Config("divergence_guard must be positive".into()));
        }
        if !(self.eval.min_k > 0.0 && self.eval.min_k <= 1.0) {
            return Err(Error::Config(format!(
                "min_k = {} must be in (0, 1]",
                self.eval.min_k
            )));
        }
        if matches!(self.eval.whp_alpha, Some(a) if !a.is_finite() || a < 0.0) {
            return Err(Error::Config("whp_alpha must be finite and >= 0".into()));
        }
        if matches!(self.method.method, Method::Mismatch | Method::Llmu)
            && self.random_pool_size == 0
        {
            return Err(Error::Config(format!(
                "{} needs random_pool_size >= 1",
                self.method.method
            )));
        }
        Ok(())
    }
}

/// Parameters after training and the mean loss of each epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun<F: Scalar> {
    pub params: ModelParams<F>,
    pub epoch_losses: Vec<f64>,
}

/// Per-epoch permutation of `0..n`, reproducible from `(seed, epoch)`.
fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

/// Plain next-token fine-tuning on `examples`. When `checkpoint_dir` is set,
/// writes `<prefix>_epoch<k>.ckpt` after every epoch.
#[allow(clippy::too_many_arguments)]
pub fn train_next_token<F: Scalar>(
    mut params: ModelParams<F>,
    examples: &[RetainExample],
    schedule: &PretrainConfig,
    adamw: &AdamWConfig,
    seed: u64,
    checkpoint: Option<(&Path, &str)>,
    exec: Exec,
) -> Result<TrainRun<F>> {
    if examples.is_empty() {
        return Err(Error::Data("nothing to train on".into()));
    }
    let spec = LossSpec::new(Method::Finetune);
    let mut state = AdamWState::new(params.num_params());
    let mut epoch_losses = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        let order = epoch_order(examples.len(), seed, epoch);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(schedule.batch_size) {
            let batch: Vec<RetainExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let out = compute_loss(
                &params,
                None,
                &LossBatch::new(&[], &batch),
                &spec,
                true,
                exec,
            )?;
            if !out.value.is_finite() {
                return Err(Error::Numerical(format!(
                    "training loss {} at epoch {epoch}",
                    out.value
                )));
            }
            let grads = out.grads.expect("gradients requested");
            adamw_step(&mut params, &grads, &mut state, schedule.lr, adamw)?;
            total += out.value;
            steps += 1;
        }
        epoch_losses.push(total / steps as f64);
        if let Some((dir, prefix)) = checkpoint {
            save_checkpoint(
                &params,
                dir.join(format!("{prefix}_epoch{}.ckpt", epoch + 1)),
            )?;
        }
    }
    Ok(TrainRun {
        params,
        epoch_losses,
    })
}

fn forget_as_pairs(forget: &[ForgetExample]) -> Vec<RetainExample> {
    forget
        .iter()
        .map(|e| RetainExample::new(e.x_f.clone(), e.y_f.clone()))
        .collect()
}

fn check_context(cfg: &ExperimentConfig, data: &DataBundle) -> Result<()> {
    let need = data.max_sequence_len();
    if need > cfg.model.context_len {
        return Err(Error::Config(format!(
            "longest sequence has {need} tokens but context_len is {}",
            cfg.model.context_len
        )));
    }
    Ok(())
}

/// Trains from initialization on forget ∪ retain.
pub fn train_original<F: Scalar>(
    cfg: &ExperimentConfig,
    data: &DataBundle,
    checkpoint_dir: Option<&Path>,
    exec: Exec,
) -> Result<TrainRun<F>> {
    check_context(cfg, data)?;
    let mut all = forget_as_pairs(&data.corpus.forget);
    all.extend(data.corpus.retain.iter().cloned());
    train_next_token(
        ModelParams::init(&cfg.model)?,
        &all,
        &cfg.pretrain,
        &cfg.adamw,
        cfg.seed,
        checkpoint_dir.map(|d| (d, "original")),
        exec,
    )
}

/// Same initialization and schedule as [`train_original`], retain data only.
pub fn train_retained<F: Scalar>(
    cfg: &ExperimentConfig,
    data: &DataBundle,
    checkpoint_dir: Option<&Path>,
    exec: Exec,
) -> Result<TrainRun<F>> {
    check_context(cfg, data)?;
    train_next_token(
        ModelParams::init(&cfg.model)?,
        &data.corpus.retain,
        &cfg.pretrain,
        &cfg.adamw,
        cfg.seed,
        checkpoint_dir.map(|d| (d, "retained")),
        exec,
    )
}

/// Continues training `original` on the forget pairs only.
pub fn train_reinforced<F: Scalar>(
    original: &ModelParams<F>,
    forget: &[ForgetExample],
    epochs: usize,
    cfg: &ExperimentConfig,
    exec: Exec,
) -> Result<TrainRun<F>> {
    let schedule = PretrainConfig {
        epochs,
        ..cfg.pretrain
    };
    if epochs == 0 {
        return Err(Error::Config("reinforce epochs must be at least 1".into()));
    }
    train_next_token(
        original.clone(),
        &forget_as_pairs(forget),
        &schedule,
        &cfg.adamw,
        cfg.seed ^ 0x5eed,
        None,
        exec,
    )
}

/// Runs `cfg.method` starting from `original`. Each step pairs `batch_size`
/// forget examples with the next `batch_size` retain examples (cycling).
pub fn unlearn<F: Scalar>(
    original: &ModelParams<F>,
    data: &DataBundle,
    cfg: &ExperimentConfig,
    exec: Exec,
) -> Result<TrainRun<F>> {
    cfg.method.validate()?;
    let forget = &data.corpus.forget;
    let retain = &data.corpus.retain;
    if forget.is_empty() {
        return Err(Error::Data("forget split is empty".into()));
    }
    if cfg.method.method.uses_retain() && retain.is_empty() {
        return Err(Error::Data("retain split is empty".into()));
    }
    let reference = cfg
        .method
        .method
        .needs_reference()
        .then(|| ReferenceModel::new(original.clone()));
    let pool = match cfg.method.method {
        Method::Mismatch | Method::Llmu => {
            build_random_responses(retain, cfg.random_pool_size, cfg.seed)?
        }
        _ => Vec::new(),
    };
    let mut params = original.clone();
    let mut state = AdamWState::new(params.num_params());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut retain_cursor = 0usize;
    let mut retain_epoch = 0usize;
    let mut retain_order = epoch_order(retain.len(), cfg.seed ^ 0x7e7a, 0);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let order = epoch_order(forget.len(), cfg.seed, epoch);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let fb: Vec<ForgetExample> = chunk.iter().map(|&i| forget[i].clone()).collect();
            let mut rb = Vec::new();
            if cfg.method.method.uses_retain() {
                while rb.len() < cfg.batch_size.min(retain.len()) {
                    if retain_cursor == retain_order.len() {
                        retain_epoch += 1;
                        retain_order = epoch_order(retain.len(), cfg.seed ^ 0x7e7a, retain_epoch);
                        retain_cursor = 0;
                    }
                    rb.push(retain[retain_order[retain_cursor]].clone());
                    retain_cursor += 1;
                }
            }
            let batch = LossBatch::new(&fb, &rb).with_pool(&pool, cfg.seed.wrapping_add(step));
            let out = compute_loss(&params, reference.as_ref(), &batch, &cfg.method, true, exec)?;
            if !out.value.is_finite() || out.value.abs() > cfg.divergence_guard {
                return Err(Error::Numerical(format!(
                    "{} loss {} exceeded the divergence guard {} at epoch {epoch}, step {step}",
                    cfg.method.tag(),
                    out.value,
                    cfg.divergence_guard
                )));
            }
            let grads = out.grads.expect("gradients requested");
            adamw_step(&mut params, &grads, &mut state, cfg.lr, &cfg.adamw)?;
            total += out.value;
            steps += 1;
            step += 1;
        }
        epoch_losses.push(total / steps as f64);
    }
    if let Some(r) = &reference {
        debug_assert!(r.params() == original);
    }
    Ok(TrainRun {
        params,
        epoch_losses,
    })
}

/// `θ_o − (θ_reinforced − θ_o)`, elementwise.
pub fn task_vector_unlearn<F: Scalar>(
    original: &ModelParams<F>,
    reinforced: &ModelParams<F>,
) -> Result<ModelParams<F>> {
    for (a, b) in original
        .tensor_specs()
        .iter()
        .zip(reinforced.tensor_specs())
    {
        if a != b {
            return Err(Error::ShapeMismatch {
                name: a.name.clone(),
                expected: a.shape.clone(),
                found: b.shape.clone(),
            });
        }
    }
    if original.tensor_specs().len() != reinforced.tensor_specs().len() {
        return Err(Error::ShapeMismatch {
            name: "tensor count".into(),
            expected: vec![original.tensor_specs().len()],
            found: vec![reinforced.tensor_specs().len()],
        });
    }
    let data = original
        .flat()
        .iter()
        .zip(reinforced.flat())
        .map(|(&o, &r)| o + o - r)
        .collect();
    ModelParams::from_flat(original.config(), data)
}

/// `p_o − α(p_r − p_o)`, clamped at zero; renormalized only if clamping
/// removed mass, so `α = 0` returns `p_o` bit for bit.
pub fn whp_combine(
    original: &TokenDistribution,
    reinforced: &TokenDistribution,
    alpha: f64,
) -> TokenDistribution {
    let mut clamped = false;
    let mut probs: Vec<f64> = original
        .probs
        .iter()
        .zip(&reinforced.probs)
        .map(|(&po, &pr)| {
            let p = po - alpha * (pr - po);
            if p < 0.0 {
                clamped = true;
                0.0
            } else {
                p
            }
        })
        .collect();
    if clamped {
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
    }
    TokenDistribution { probs }
}

/// WHP as a language model over two frozen parameter sets.
#[derive(Debug, Clone, Copy)]
pub struct WhpModel<'a, F: Scalar> {
    pub original: &'a ModelParams<F>,
    pub reinforced: &'a ModelParams<F>,
    pub alpha: f64,
}

impl<F: Scalar> CausalLm for WhpModel<'_, F> {
    fn context_len(&self) -> usize {
        self.original.context_len()
    }

    fn distributions(&self, tokens: &[Token]) -> Result<Vec<TokenDistribution>> {
        let o = self.original.distributions(tokens)?;
        let r = self.reinforced.distributions(tokens)?;
        Ok(o.iter()
            .zip(&r)
            .map(|(a, b)| whp_combine(a, b, self.alpha))
            .collect())
    }
}

/// WHP distribution for the token after `[BOS] ++ prompt`.
pub fn whp_next_token<F: Scalar>(
    original: &ModelParams<F>,
    reinforced: &ModelParams<F>,
    prompt: &[Token],
    alpha: f64,
) -> Result<TokenDistribution> {
    let mut seq = vec![BOS];
    seq.extend_from_slice(prompt);
    let model = WhpModel {
        original,
        reinforced,
        alpha,
    };
    Ok(model
        .distributions(&seq)?
        .pop()
        .expect("sequence starts with BOS"))
}

/// Raw per-model measurements; reports compare two of these.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    /// Greedy answers to every forget prompt against the true responses.
    pub forget: GenerationScores,
    /// ROUGE-L F1 on the raw-text completions.
    pub verbmem: Option<f64>,
    pub knowmem_forget: f64,
    pub knowmem_retain: f64,
    pub retain_ppl: f64,
    pub holdout_ppl: Option<f64>,
    pub forget_truth_ratios: Vec<f64>,
    /// Mean normalized probability of the true forget responses.
    pub forget_prob: f64,
    /// Probability, ROUGE-L recall and truth ratio on retain, real-author
    /// and world-fact items, in that order.
    pub utility: Vec<(String, f64)>,
    pub min_k_auc: Option<f64>,
}

fn pairs_of_forget(f: &[ForgetExample]) -> Vec<Pair<'_>> {
    f.iter().map(|e| (&e.x_f[..], &e.y_f[..])).collect()
}

fn pairs_of_retain(r: &[RetainExample]) -> Vec<Pair<'_>> {
    r.iter().map(|e| (&e.x_r[..], &e.y_r[..])).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn utility_block<M: CausalLm + ?Sized>(
    model: &M,
    name: &str,
    qa: &[RetainExample],
    truth: &[crate::data::PerturbedAnswerSet],
    denom: TruthDenominator,
    exec: Exec,
    out: &mut Vec<(String, f64)>,
) -> Result<()> {
    if qa.is_empty() || truth.is_empty() {
        return Ok(());
    }
    let prob = match denom {
        // retain items: plain normalized probability of the answer
        TruthDenominator::Paraphrase => exec.try_map(truth, |s| {
            normalized_cond_prob(model, &s.question, &s.correct)
        })?,
        TruthDenominator::Original => exec.try_map(truth, |s| {
            metrics::answer_ratio(model, &s.question, &s.correct, &s.perturbed)
        })?,
    };
    let pairs = pairs_of_retain(qa);
    let generated = generate_answers(model, &pairs, exec)?;
    let rouge = score_generations(&pairs, &generated)?.rouge_l_recall;
    let tr = truth_ratios(model, truth, denom, exec)?;
    out.push((format!("{name}/probability"), mean(&prob)));
    out.push((format!("{name}/rouge_l"), rouge));
    out.push((format!("{name}/truth_ratio"), mean(&tr)));
    Ok(())
}

pub fn evaluate_model<M: CausalLm + ?Sized>(
    model: &M,
    data: &DataBundle,
    min_k: f64,
    exec: Exec,
) -> Result<ModelEvaluation> {
    let forget = pairs_of_forget(&data.corpus.forget);
    let generated = generate_answers(model, &forget, exec)?;
    let scores = score_generations(&forget, &generated)?;
    let nq = data.n_forget_qa;
    let knowmem_forget = if nq > 0 {
        score_generations(&forget[..nq], &generated[..nq])?.rouge_l_f1
    } else {
        scores.rouge_l_f1
    };
    let verbmem = if forget.len() > nq {
        Some(score_generations(&forget[nq..], &generated[nq..])?.rouge_l_f1)
    } else {
        None
    };
    let retain = pairs_of_retain(&data.corpus.retain);
    let knowmem_retain = metrics::knowmem(model, &retain, exec)?;
    let retain_ppl = perplexity(model, &retain, exec)?;
    let holdout = pairs_of_retain(&data.corpus.holdout);
    let holdout_ppl = if holdout.is_empty() {
        None
    } else {
        Some(perplexity(model, &holdout, exec)?)
    };
    let forget_truth_ratios = if data.forget_truth.is_empty() {
        Vec::new()
    } else {
        truth_ratios(
            model,
            &data.forget_truth,
            TruthDenominator::Paraphrase,
            exec,
        )?
    };
    let probs = exec.try_map(&forget, |&(x, y)| normalized_cond_prob(model, x, y))?;
    let mut utility = Vec::new();
    utility_block(
        model,
        "retain",
        &data.corpus.retain,
        &data.retain_truth,
        TruthDenominator::Paraphrase,
        exec,
        &mut utility,
    )?;
    utility_block(
        model,
        "real_authors",
        &data.real_authors,
        &data.real_authors_truth,
        TruthDenominator::Original,
        exec,
        &mut utility,
    )?;
    utility_block(
        model,
        "world_facts",
        &data.world_facts,
        &data.world_facts_truth,
        TruthDenominator::Original,
        exec,
        &mut utility,
    )?;
    let min_k_auc = if holdout.is_empty() {
        None
    } else {
        let members = min_k_scores(model, &forget, min_k, exec)?;
        let nonmembers = min_k_scores(model, &holdout, min_k, exec)?;
        Some(auc_roc(&members, &nonmembers)?)
    };
    Ok(ModelEvaluation {
        forget: scores,
        verbmem,
        knowmem_forget,
        knowmem_retain,
        retain_ppl,
        holdout_ppl,
        forget_truth_ratios,
        forget_prob: mean(&probs),
        utility,
        min_k_auc,
    })
}

/// Report for `model` with gaps, forget quality and PrivLeak measured
/// against `retained`.
pub fn compare(model: &ModelEvaluation, retained: &ModelEvaluation) -> Result<MetricsReport> {
    let mut report = MetricsReport {
        bleu: Some(model.forget.bleu),
        rouge_l: Some(model.forget.rouge_l_recall),
        fq_gap: Some(fq_gap(
            model.forget.bleu,
            retained.forget.bleu,
            model.forget.rouge_l_recall,
            retained.forget.rouge_l_recall,
        )),
        ppl: Some(model.retain_ppl),
        verbmem: model.verbmem,
        knowmem_forget: Some(model.knowmem_forget),
        knowmem_retain: Some(model.knowmem_retain),
        ..Default::default()
    };
    if !model.forget_truth_ratios.is_empty() && !retained.forget_truth_ratios.is_empty() {
        report.forget_quality_p =
            Some(ks_two_sample(&model.forget_truth_ratios, &retained.forget_truth_ratios)?.p_value);
        report.breakdown.insert(
            "forget/truth_ratio".into(),
            mean(&model.forget_truth_ratios),
        );
    }
    if model.utility.len() == 9 {
        let values: Vec<f64> = model.utility.iter().map(|(_, v)| *v).collect();
        // a zero component leaves utility undefined; the components are still reported
        report.model_utility = metrics::model_utility(&values).ok();
    }
    for (k, v) in &model.utility {
        report.breakdown.insert(k.clone(), *v);
    }
    if let (Some(u), Some(r)) = (model.min_k_auc, retained.min_k_auc) {
        report.privleak = metrics::privleak(u, r).ok();
        report.breakdown.insert("min_k/auc".into(), u);
    }
    if let Some(h) = model.holdout_ppl {
        report.breakdown.insert("holdout/ppl".into(), h);
    }
    report
        .breakdown
        .insert("forget/probability".into(), model.forget_prob);
    report.validate()?;
    Ok(report)
}

/// Everything one experiment produced.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    /// The unlearned model's report.
    pub report: MetricsReport,
    /// `(label, divergence, report)` for every evaluated model, unlearned first.
    pub reports: Vec<(String, Option<String>, MetricsReport)>,
    pub rows: Vec<ReportRow>,
    pub unlearn_losses: Vec<f64>,
}

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_MD: &str = "report.md";

/// Train original and retained models, unlearn, evaluate, and (with `out`)
/// write checkpoints, `report.csv` and `report.md`.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentOutput> {
    cfg.validate()?;
    crate::parallel::with_thread_cap(cfg.threads, || match cfg.precision {
        Precision::Single => run_typed::<f32>(cfg, out),
        Precision::Double => run_typed::<f64>(cfg, out),
    })
}

fn run_typed<F: Scalar>(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentOutput> {
    let exec = Exec::available();
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let data = cfg.data.load()?;
    let original = train_original::<F>(cfg, &data, out, exec)?.params;
    let retained = train_retained::<F>(cfg, &data, out, exec)?.params;
    let before = encode_checkpoint(&original)?;
    let run = unlearn(&original, &data, cfg, exec)?;
    if encode_checkpoint(&original)? != before {
        return Err(Error::State(
            "reference snapshot changed during unlearning".into(),
        ));
    }
    if let Some(dir) = out {
        save_checkpoint(&run.params, dir.join("unlearned.ckpt"))?;
    }

    let eval_r = evaluate_model(&retained, &data, cfg.eval.min_k, exec)?;
    let eval_o = evaluate_model(&original, &data, cfg.eval.min_k, exec)?;
    let eval_u = evaluate_model(&run.params, &data, cfg.eval.min_k, exec)?;
    let div = match (cfg.method.method, cfg.method.divergence) {
        (Method::Flat, Some(d)) => Some(d.label().to_string()),
        _ => None,
    };
    let mut reports = vec![
        (
            cfg.method.method.label().to_string(),
            div,
            compare(&eval_u, &eval_r)?,
        ),
        ("original".to_string(), None, compare(&eval_o, &eval_r)?),
        ("retained".to_string(), None, compare(&eval_r, &eval_r)?),
    ];
    if cfg.eval.task_vector || cfg.eval.whp_alpha.is_some() {
        let reinforced = train_reinforced(
            &original,
            &data.corpus.forget,
            cfg.eval.reinforce_epochs,
            cfg,
            exec,
        )?
        .params;
        if cfg.eval.task_vector {
            let tv = task_vector_unlearn(&original, &reinforced)?;
            let e = evaluate_model(&tv, &data, cfg.eval.min_k, exec)?;
            reports.push(("task_vector".into(), None, compare(&e, &eval_r)?));
        }
        if let Some(alpha) = cfg.eval.whp_alpha {
            let whp = WhpModel {
                original: &original,
                reinforced: &reinforced,
                alpha,
            };
            let e = evaluate_model(&whp, &data, cfg.eval.min_k, exec)?;
            reports.push(("whp".into(), None, compare(&e, &eval_r)?));
        }
    }
    let rows: Vec<ReportRow> = reports
        .iter()
        .flat_map(|(m, d, r)| metrics::report_rows(m, d.as_deref(), r))
        .collect();
    if let Some(dir) = out {
        metrics::write_csv(&dir.join(REPORT_CSV), &rows)?;
        let md = dir.join(REPORT_MD);
        fs::write(&md, metrics::markdown_table(&rows)).map_err(|e| Error::io(&md, e))?;
    }
    Ok(ExperimentOutput {
        report: reports[0].2.clone(),
        reports,
        rows,
        unlearn_losses: run.epoch_losses,
    })
}

/// Mean normalized probability of the true forget responses; the quantity
/// FLAT pushes down.
pub fn forget_probability<M: CausalLm + ?Sized>(
    model: &M,
    forget: &[ForgetExample],
    exec: Exec,
) -> Result<f64> {
    let pairs = pairs_of_forget(forget);
    let p = exec.try_map(&pairs, |&(x, y)| normalized_cond_prob(model, x, y))?;
    Ok(mean(&p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{decode_checkpoint, VOCAB_SIZE};

    fn tiny_cfg() -> ExperimentConfig {
        ExperimentConfig {
            model: ModelConfig {
                embed_dim: 8,
                n_layers: 1,
                n_heads: 2,
                context_len: 128,
                ffn_mult: 2.0,
                seed: 1,
            },
            data: DataConfig {
                synthetic: SyntheticConfig {
                    forget_authors: 2,
                    retain_authors: 2,
                    holdout_authors: 1,
                    ..Default::default()
                },
                ..Default::default()
            },
            epochs: 1,
            pretrain: PretrainConfig {
                epochs: 1,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    fn params(seed: u64) -> ModelParams<f64> {
        ModelParams::init(&ModelConfig::tiny(seed)).unwrap()
    }

    #[test]
    fn config_json_rejects_unknown_keys() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json_str(&text).unwrap(), cfg);
        assert!(ExperimentConfig::from_json_str(r#"{"epochz": 3}"#).is_err());
        let partial = ExperimentConfig::from_json_str(r#"{"lr": 0.01, "seed": 7}"#).unwrap();
        assert_eq!((partial.lr, partial.seed, partial.epochs), (0.01, 7, 3));
        assert!(ExperimentConfig::from_json_str(r#"{"batch_size": 0}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"lr": -1}"#).is_err());
    }

    #[test]
    fn task_vector_arithmetic() {
        let o = params(1);
        assert_eq!(task_vector_unlearn(&o, &o).unwrap(), o);
        let mut a = o.clone();
        let mut b = o.clone();
        a.flat_mut()[0] = 1.0;
        b.flat_mut()[0] = 1.5;
        assert_eq!(task_vector_unlearn(&a, &b).unwrap().flat()[0], 0.5);
        let other: ModelParams<f64> = ModelParams::init(&ModelConfig {
            embed_dim: 12,
            ..ModelConfig::tiny(1)
        })
        .unwrap();
        assert!(matches!(
            task_vector_unlearn(&o, &other),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn whp_contracts() {
        let o = params(1);
        let r = params(2);
        let prompt = [72, 105];
        let base = whp_next_token(&o, &o, &prompt, 0.0).unwrap();
        assert_eq!(whp_next_token(&o, &r, &prompt, 0.0).unwrap(), base);
        assert_eq!(whp_next_token(&o, &o, &prompt, 3.0).unwrap(), base);
        for alpha in [0.5, 2.0, 50.0] {
            let d = whp_next_token(&o, &r, &prompt, alpha).unwrap();
            assert_eq!(d.probs.len(), VOCAB_SIZE);
            assert!((d.total() - 1.0).abs() < 1e-6);
            assert!(d.probs.iter().all(|&p| p >= 0.0));
        }
        let clamped = whp_combine(
            &TokenDistribution {
                probs: vec![0.5, 0.5],
            },
            &TokenDistribution {
                probs: vec![1.0, 0.0],
            },
            2.0,
        );
        assert_eq!(clamped.probs, vec![0.0, 1.0]);
    }

    #[test]
    fn training_reduces_loss_and_writes_checkpoints() {
        let cfg = ExperimentConfig {
            pretrain: PretrainConfig {
                epochs: 3,
                lr: 1e-2,
                batch_size: 4,
            },
            ..tiny_cfg()
        };
        let data = cfg.data.load().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let run = train_original::<f32>(&cfg, &data, Some(dir.path()), Exec::available()).unwrap();
        assert_eq!(run.epoch_losses.len(), 3);
        assert!(run.epoch_losses[2] < run.epoch_losses[0]);
        let bytes = std::fs::read(dir.path().join("original_epoch3.ckpt")).unwrap();
        assert_eq!(decode_checkpoint::<f32>(&bytes).unwrap(), run.params);
    }

    #[test]
    fn reference_snapshot_is_untouched_by_unlearning() {
        let cfg = ExperimentConfig {
            method: LossSpec::new(Method::Npo),
            lr: 1e-2,
            ..tiny_cfg()
        };
        let data = cfg.data.load().unwrap();
        let original: ModelParams<f32> = ModelParams::init(&cfg.model).unwrap();
        let before = encode_checkpoint(&original).unwrap();
        let run = unlearn(&original, &data, &cfg, Exec::available()).unwrap();
        assert_eq!(encode_checkpoint(&original).unwrap(), before);
        assert_ne!(run.params, original);
    }

    #[test]
    fn divergence_guard_trips() {
        let cfg = ExperimentConfig {
            method: LossSpec::new(Method::Ga),
            divergence_guard: 1e-3,
            ..tiny_cfg()
        };
        let data = cfg.data.load().unwrap();
        let original: ModelParams<f32> = ModelParams::init(&cfg.model).unwrap();
        let err = unlearn(&original, &data, &cfg, Exec::available()).unwrap_err();
        assert!(err.is_numerical(), "{err}");
    }

    #[test]
    fn context_too_short_is_a_config_error() {
        let cfg = ExperimentConfig {
            model: ModelConfig {
                context_len: 16,
                ..tiny_cfg().model
            },
            ..tiny_cfg()
        };
        let data = cfg.data.load().unwrap();
        assert!(matches!(
            train_original::<f32>(&cfg, &data, None, Exec::Sequential),
            Err(Error::Config(_))
        ));
    }
}
