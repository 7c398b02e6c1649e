//! `unlearn-forge` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation or data error,
//! 3 numerical failure (divergence guard, failed gradient check).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use unlearn_forge::data::{
    completion_records, load_jsonl, synthetic, QaRecord, RawBundle, DEFAULT_IDK_PHRASES,
};
use unlearn_forge::divergence::DivergenceKind;
use unlearn_forge::estimator::{
    convergence_experiment, mean_abs_error_by_n, save_convergence_csv, DistributionSpec, FitConfig,
};
use unlearn_forge::gradcheck::gradcheck_suite;
use unlearn_forge::losses::{LossSpec, Method};
use unlearn_forge::metrics::{self, markdown_table, read_csv, report_rows, ReportRow};
use unlearn_forge::model::{
    load_checkpoint, read_manifest, save_checkpoint, CausalLm, ModelParams, Precision, Scalar,
};
use unlearn_forge::parallel::{with_thread_cap, Exec};
use unlearn_forge::trainer::{
    compare, evaluate_model, forget_probability, run_experiment, train_original, train_retained,
    unlearn, ExperimentConfig, REPORT_CSV, REPORT_MD,
};
use unlearn_forge::Error;

const THREADS_ENV: &str = "UNLEARN_FORGE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "unlearn-forge",
    version,
    about = "Language-model unlearning experiments"
)]
struct Cli {
    /// Print what would run and which files would be written, then stop.
    #[arg(long, global = true)]
    dry_run: bool,

    /// Worker thread cap (0 = all cores). Falls back to UNLEARN_FORGE_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write JSONL splits from the synthetic generator, a prepared directory, or raw text.
    PrepareData(PrepareArgs),
    /// Train the original and retained models.
    Train(TrainArgs),
    /// Run one unlearning method from an original checkpoint (trained if absent).
    Unlearn(UnlearnArgs),
    /// Evaluate checkpoints, or run the whole pipeline and write the report.
    Eval(EvalArgs),
    /// Variational f-divergence estimates against a closed-form oracle.
    EstimateDivergence(EstimateArgs),
    /// Finite-difference check of every loss gradient.
    Gradcheck(GradcheckArgs),
    /// Render report CSVs as a markdown table.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Single,
    Double,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Single => Precision::Single,
            PrecisionArg::Double => Precision::Double,
        }
    }
}

/// Flags mirroring the experiment config keys. Unset flags keep the value
/// from `--config`, or the library default.
#[derive(Debug, Args)]
struct ExperimentArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prepared data directory (synthetic corpus when absent).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    divergence: Option<DivergenceKind>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda_e: Option<f64>,
    #[arg(long)]
    lambda_f: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    pretrain_lr: Option<f64>,
    #[arg(long)]
    pretrain_batch_size: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    context_len: Option<usize>,
    #[arg(long)]
    ffn_mult: Option<f64>,
    #[arg(long)]
    model_seed: Option<u64>,
    #[arg(long)]
    template_seed: Option<u64>,
    #[arg(long)]
    random_pool_size: Option<usize>,
    #[arg(long)]
    divergence_guard: Option<f64>,
    #[arg(long)]
    min_k: Option<f64>,
    /// Also evaluate the task-vector baseline.
    #[arg(long)]
    task_vector: bool,
    /// Also evaluate WHP with this interpolation weight.
    #[arg(long)]
    whp_alpha: Option<f64>,
    #[arg(long)]
    reinforce_epochs: Option<usize>,
}

#[derive(Debug, Args)]
struct PrepareArgs {
    /// `synthetic`, a prepared data directory, or a raw text file.
    #[arg(long, required = true)]
    corpus: Option<String>,
    /// Retain QA pairs (JSONL), required with a raw text corpus.
    #[arg(long)]
    retain: Option<PathBuf>,
    #[arg(long, default_value_t = 24)]
    prefix_len: usize,
    #[arg(long, default_value_t = 64)]
    max_tokens: usize,
    /// Refusal phrases, one per line.
    #[arg(long)]
    idk_pool: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct UnlearnArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Original model; trained from the config when absent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Model to evaluate; the full pipeline runs when absent.
    #[arg(long, requires = "retained")]
    model: Option<PathBuf>,
    /// Retained comparator for `--model`.
    #[arg(long, requires = "model")]
    retained: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Family {
    Bernoulli,
    Gaussian,
}

#[derive(Debug, Args)]
struct EstimateArgs {
    #[arg(long, default_value = "kl")]
    kind: DivergenceKind,
    #[arg(long, value_enum, default_value = "bernoulli")]
    family: Family,
    /// Bernoulli p or Gaussian mean of the first distribution.
    #[arg(long, default_value_t = 0.8)]
    param_e: f64,
    /// Bernoulli p or Gaussian mean of the second distribution.
    #[arg(long, default_value_t = 0.2)]
    param_f: f64,
    /// Sample sizes per side, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "200,2000,20000")]
    n_grid: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "double")]
    precision: PrecisionArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Report CSVs, concatenated in order.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Also write the table to `<out>/report.md`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn thread_cap(flag: Option<usize>) -> CliResult<Option<usize>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| invalid(format!("{THREADS_ENV}={v:?} is not a thread count"))),
        Err(_) => Ok(None),
    }
}

fn run(cli: Cli) -> CliResult {
    let threads = thread_cap(cli.threads)?;
    let dry = cli.dry_run;
    match cli.command {
        Command::PrepareData(a) => prepare_data(a, dry),
        Command::Train(a) => {
            let cfg = resolve(&a.exp, threads)?;
            train_cmd(&cfg, &a.out, dry)
        }
        Command::Unlearn(a) => {
            let cfg = resolve(&a.exp, threads)?;
            unlearn_cmd(cfg, a.checkpoint.as_deref(), &a.out, dry)
        }
        Command::Eval(a) => {
            let cfg = resolve(&a.exp, threads)?;
            match (&a.model, &a.retained) {
                (Some(m), Some(r)) => eval_checkpoints(&cfg, m, r, &a.out, dry),
                _ => eval_pipeline(&cfg, &a.out, dry),
            }
        }
        Command::EstimateDivergence(a) => {
            with_thread_cap(threads.unwrap_or(0), || estimate_cmd(&a, dry))
        }
        Command::Gradcheck(a) => with_thread_cap(threads.unwrap_or(0), || gradcheck_cmd(&a, dry)),
        Command::Report(a) => report_cmd(&a, dry),
    }
}

/// Defaults, then `--config`, then individual flags.
fn resolve(a: &ExperimentArgs, threads: Option<usize>) -> CliResult<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::from_json_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &a.data {
        cfg.data.dir = Some(d.clone());
    }
    if let Some(m) = a.method {
        let divergence = match (m, a.divergence, cfg.method.divergence) {
            (Method::Flat, Some(d), _) | (Method::Flat, None, Some(d)) => Some(d),
            (Method::Flat, None, None) => Some(DivergenceKind::KullbackLeibler),
            _ => None,
        };
        cfg.method = LossSpec {
            method: m,
            divergence,
            ..cfg.method
        };
    } else if let Some(d) = a.divergence {
        cfg.method.divergence = Some(d);
    }
    let set = |slot: &mut f64, v: Option<f64>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.method.beta, a.beta);
    set(&mut cfg.method.gamma, a.gamma);
    set(&mut cfg.method.lambda_e, a.lambda_e);
    set(&mut cfg.method.lambda_f, a.lambda_f);
    set(&mut cfg.lr, a.lr);
    set(&mut cfg.pretrain.lr, a.pretrain_lr);
    set(&mut cfg.model.ffn_mult, a.ffn_mult);
    set(&mut cfg.divergence_guard, a.divergence_guard);
    set(&mut cfg.eval.min_k, a.min_k);
    let setu = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    setu(&mut cfg.epochs, a.epochs);
    setu(&mut cfg.batch_size, a.batch_size);
    setu(&mut cfg.pretrain.epochs, a.pretrain_epochs);
    setu(&mut cfg.pretrain.batch_size, a.pretrain_batch_size);
    setu(&mut cfg.model.embed_dim, a.embed_dim);
    setu(&mut cfg.model.n_layers, a.n_layers);
    setu(&mut cfg.model.n_heads, a.n_heads);
    setu(&mut cfg.model.context_len, a.context_len);
    setu(&mut cfg.random_pool_size, a.random_pool_size);
    setu(&mut cfg.eval.reinforce_epochs, a.reinforce_epochs);
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(s) = a.model_seed {
        cfg.model.seed = s;
    }
    if let Some(s) = a.template_seed {
        cfg.data.template_seed = s;
    }
    if let Some(p) = a.precision {
        cfg.precision = p.into();
    }
    if a.task_vector {
        cfg.eval.task_vector = true;
    }
    if a.whp_alpha.is_some() {
        cfg.eval.whp_alpha = a.whp_alpha;
    }
    if let Some(t) = threads {
        cfg.threads = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_plan(what: &str, cfg: Option<&ExperimentConfig>, writes: &[PathBuf]) -> CliResult {
    println!("plan: {what}");
    if let Some(cfg) = cfg {
        let json = serde_json::to_string_pretty(cfg).map_err(|e| invalid(e.to_string()))?;
        println!("config:\n{json}");
    }
    for w in writes {
        println!("would write: {}", w.display());
    }
    Ok(())
}

fn create_out(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn save_config(cfg: &ExperimentConfig, out: &Path) -> CliResult {
    let json = serde_json::to_string_pretty(cfg).map_err(|e| invalid(e.to_string()))?;
    write_text(&out.join("config.json"), &(json + "\n"))
}

fn prepare_data(a: PrepareArgs, dry: bool) -> CliResult {
    let corpus = a.corpus.as_deref().unwrap_or("synthetic");
    let mut raw = if corpus == "synthetic" {
        synthetic::generate(&synthetic::SyntheticConfig {
            chunk_tokens: a.max_tokens,
            prefix_len: a.prefix_len,
            seed: a.seed,
            ..Default::default()
        })?
    } else {
        let path = Path::new(corpus);
        if path.is_dir() {
            RawBundle::load(path)?
        } else if path.is_file() {
            let retain = a
                .retain
                .as_ref()
                .ok_or_else(|| invalid("a raw text corpus needs --retain <retain.jsonl>"))?;
            let text = fs::read_to_string(path)
                .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            let (forget_text, skipped) = completion_records(&text, a.max_tokens, a.prefix_len)?;
            if skipped > 0 {
                eprintln!("skipped {skipped} chunk(s) too short to split at --prefix-len");
            }
            let retain: Vec<QaRecord> = load_jsonl(retain)?;
            RawBundle {
                forget_text,
                retain,
                idk_pool: DEFAULT_IDK_PHRASES.iter().map(|s| s.to_string()).collect(),
                ..Default::default()
            }
        } else {
            return Err(invalid(format!("corpus {corpus:?} not found")));
        }
    };
    if let Some(pool) = &a.idk_pool {
        let text =
            fs::read_to_string(pool).map_err(|e| invalid(format!("{}: {e}", pool.display())))?;
        raw.idk_pool = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect();
        if raw.idk_pool.is_empty() {
            return Err(invalid("--idk-pool has no phrases"));
        }
    }
    let bundle = raw.tokenize(a.seed)?;
    println!(
        "forget: {} QA + {} completions, retain: {}, holdout: {}, longest sequence {} tokens",
        raw.forget_qa.len(),
        raw.forget_text.len(),
        raw.retain.len(),
        raw.holdout.len(),
        bundle.max_sequence_len()
    );
    if dry {
        return print_plan("prepare-data", None, std::slice::from_ref(&a.out));
    }
    raw.save(&a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn train_cmd(cfg: &ExperimentConfig, out: &Path, dry: bool) -> CliResult {
    if dry {
        return print_plan(
            "train original and retained models",
            Some(cfg),
            &[out.join("original.ckpt"), out.join("retained.ckpt")],
        );
    }
    let data = cfg.data.load()?;
    create_out(out)?;
    save_config(cfg, out)?;
    with_thread_cap(cfg.threads, || match cfg.precision {
        Precision::Single => train_typed::<f32>(cfg, &data, out),
        Precision::Double => train_typed::<f64>(cfg, &data, out),
    })
}

fn train_typed<F: Scalar>(
    cfg: &ExperimentConfig,
    data: &unlearn_forge::data::DataBundle,
    out: &Path,
) -> CliResult {
    let exec = Exec::available();
    let original = train_original::<F>(cfg, data, Some(out), exec)?;
    save_checkpoint(&original.params, out.join("original.ckpt"))?;
    println!(
        "original: final loss {:.4}",
        original.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    let retained = train_retained::<F>(cfg, data, Some(out), exec)?;
    save_checkpoint(&retained.params, out.join("retained.ckpt"))?;
    println!(
        "retained: final loss {:.4}",
        retained.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn unlearn_cmd(
    mut cfg: ExperimentConfig,
    checkpoint: Option<&Path>,
    out: &Path,
    dry: bool,
) -> CliResult {
    if let Some(ck) = checkpoint {
        let manifest = read_manifest(ck)?;
        cfg.model = manifest.config;
        cfg.precision = manifest.dtype;
        cfg.validate()?;
    }
    if dry {
        let mut writes = vec![out.join("unlearned.ckpt"), out.join("unlearn_losses.csv")];
        if checkpoint.is_none() {
            writes.insert(0, out.join("original.ckpt"));
        }
        return print_plan(
            &format!("unlearn with {}", cfg.method.tag()),
            Some(&cfg),
            &writes,
        );
    }
    let data = cfg.data.load()?;
    create_out(out)?;
    save_config(&cfg, out)?;
    with_thread_cap(cfg.threads, || match cfg.precision {
        Precision::Single => unlearn_typed::<f32>(&cfg, &data, checkpoint, out),
        Precision::Double => unlearn_typed::<f64>(&cfg, &data, checkpoint, out),
    })
}

fn unlearn_typed<F: Scalar>(
    cfg: &ExperimentConfig,
    data: &unlearn_forge::data::DataBundle,
    checkpoint: Option<&Path>,
    out: &Path,
) -> CliResult {
    let exec = Exec::available();
    let original: ModelParams<F> = match checkpoint {
        Some(ck) => load_checkpoint(ck)?,
        None => {
            let run = train_original::<F>(cfg, data, None, exec)?;
            save_checkpoint(&run.params, out.join("original.ckpt"))?;
            run.params
        }
    };
    let before = forget_probability(&original, &data.corpus.forget, exec)?;
    let run = unlearn(&original, data, cfg, exec)?;
    save_checkpoint(&run.params, out.join("unlearned.ckpt"))?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in run.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{},{l}\n", i + 1));
    }
    write_text(&out.join("unlearn_losses.csv"), &csv)?;
    let after = forget_probability(&run.params, &data.corpus.forget, exec)?;
    println!(
        "{}: forget-answer probability {before:.4} -> {after:.4} over {} epoch(s)",
        cfg.method.tag(),
        run.epoch_losses.len()
    );
    Ok(())
}

fn eval_pipeline(cfg: &ExperimentConfig, out: &Path, dry: bool) -> CliResult {
    if dry {
        return print_plan(
            "train, unlearn and evaluate",
            Some(cfg),
            &[
                out.join("original.ckpt"),
                out.join("retained.ckpt"),
                out.join("unlearned.ckpt"),
                out.join(REPORT_CSV),
                out.join(REPORT_MD),
            ],
        );
    }
    create_out(out)?;
    save_config(cfg, out)?;
    let result = run_experiment(cfg, Some(out))?;
    print!("{}", markdown_table(&result.rows));
    Ok(())
}

fn load_any(path: &Path) -> CliResult<Box<dyn CausalLm>> {
    Ok(match read_manifest(path)?.dtype {
        Precision::Single => Box::new(load_checkpoint::<f32>(path)?),
        Precision::Double => Box::new(load_checkpoint::<f64>(path)?),
    })
}

fn eval_checkpoints(
    cfg: &ExperimentConfig,
    model: &Path,
    retained: &Path,
    out: &Path,
    dry: bool,
) -> CliResult {
    if dry {
        return print_plan(
            &format!(
                "evaluate {} against {}",
                model.display(),
                retained.display()
            ),
            Some(cfg),
            &[out.join(REPORT_CSV), out.join(REPORT_MD)],
        );
    }
    let data = cfg.data.load()?;
    let m = load_any(model)?;
    let r = load_any(retained)?;
    let rows = with_thread_cap(cfg.threads, || -> CliResult<Vec<ReportRow>> {
        let exec = Exec::available();
        let eval_r = evaluate_model(r.as_ref(), &data, cfg.eval.min_k, exec)?;
        let eval_m = evaluate_model(m.as_ref(), &data, cfg.eval.min_k, exec)?;
        let label = model
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into());
        let mut rows = report_rows(&label, None, &compare(&eval_m, &eval_r)?);
        rows.extend(report_rows("retained", None, &compare(&eval_r, &eval_r)?));
        Ok(rows)
    })?;
    create_out(out)?;
    metrics::write_csv(&out.join(REPORT_CSV), &rows)?;
    let md = markdown_table(&rows);
    write_text(&out.join(REPORT_MD), &md)?;
    print!("{md}");
    Ok(())
}

fn estimate_cmd(a: &EstimateArgs, dry: bool) -> CliResult {
    let spec = |v: f64| match a.family {
        Family::Bernoulli => DistributionSpec::Bernoulli { p: v },
        Family::Gaussian => DistributionSpec::Gaussian { mean: v },
    };
    let defaults = FitConfig::default();
    let fit = FitConfig {
        hidden: a.hidden.unwrap_or(defaults.hidden),
        steps: a.steps.unwrap_or(defaults.steps),
        lr: a.lr.unwrap_or(defaults.lr),
        ..defaults
    };
    if a.n_grid.is_empty() || a.n_grid.contains(&0) || a.repeats == 0 {
        return Err(invalid("--n-grid entries and --repeats must be positive"));
    }
    let csv = a.out.join("convergence.csv");
    if dry {
        println!(
            "{} between {:?} and {:?}, N = {:?}, {} repeat(s)",
            a.kind,
            spec(a.param_e),
            spec(a.param_f),
            a.n_grid,
            a.repeats
        );
        return print_plan("estimate-divergence", None, &[csv]);
    }
    let rows = convergence_experiment(
        a.kind,
        spec(a.param_e),
        spec(a.param_f),
        &a.n_grid,
        a.repeats,
        a.seed,
        &fit,
        Exec::available(),
    )?;
    create_out(&a.out)?;
    save_convergence_csv(&csv, &rows)?;
    println!("oracle {:.5}", rows[0].oracle);
    for (n, mae) in mean_abs_error_by_n(&rows) {
        println!("N = {n:>6}  mean abs error {mae:.5}");
    }
    Ok(())
}

fn gradcheck_cmd(a: &GradcheckArgs, dry: bool) -> CliResult {
    let precision: Precision = a.precision.into();
    if dry {
        return print_plan(
            &format!("finite-difference check of every loss in {precision:?} precision"),
            None,
            &[],
        );
    }
    let report = gradcheck_suite(precision, a.seed, Exec::available())?;
    for c in &report.cases {
        println!(
            "{:<14} rel {:.3e}  max abs {:.3e}  {}",
            c.loss,
            c.rel_error,
            c.max_abs_error,
            if c.passed { "ok" } else { "FAIL" }
        );
    }
    let failed = report.cases.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Numerical(format!(
            "{failed} of {} gradient checks exceeded tolerance {:.0e}",
            report.cases.len(),
            report.tolerance
        )));
    }
    println!(
        "all {} checks within {:.0e}",
        report.cases.len(),
        report.tolerance
    );
    Ok(())
}

fn report_cmd(a: &ReportArgs, dry: bool) -> CliResult {
    let mut rows = Vec::new();
    for p in &a.inputs {
        rows.extend(read_csv(p)?);
    }
    let target = a.out.as_ref().map(|d| d.join(REPORT_MD));
    if dry {
        return print_plan("render report", None, target.as_slice());
    }
    let md = markdown_table(&rows);
    if let (Some(dir), Some(path)) = (&a.out, &target) {
        create_out(dir)?;
        write_text(path, &md)?;
    }
    print!("{md}");
    Ok(())
}
