use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use unlearn_forge::data::synthetic::{generate, SyntheticConfig};
use unlearn_forge::divergence::DivergenceKind;
use unlearn_forge::losses::{compute_loss, LossBatch, LossSpec};
use unlearn_forge::metrics::{perplexity, Pair};
use unlearn_forge::model::{ModelConfig, ModelParams};
use unlearn_forge::parallel::Exec;

fn bench(c: &mut Criterion) {
    let data = generate(&SyntheticConfig::default())
        .and_then(|raw| raw.tokenize(0))
        .expect("synthetic data");
    let params: ModelParams<f32> = ModelParams::init(&ModelConfig::default()).unwrap();
    let forget = &data.corpus.forget[..8];
    let retain = &data.corpus.retain[..8];
    let spec = LossSpec::flat(DivergenceKind::KullbackLeibler);
    let pairs: Vec<Pair<'_>> = data
        .corpus
        .retain
        .iter()
        .map(|e| (&e.x_r[..], &e.y_r[..]))
        .collect();

    let mut g = c.benchmark_group("exec");
    g.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let name = format!("{exec:?}");
        g.bench_with_input(BenchmarkId::new("flat_kl_step", &name), &exec, |b, &e| {
            b.iter(|| {
                compute_loss(
                    &params,
                    None,
                    &LossBatch::new(forget, retain),
                    &spec,
                    true,
                    e,
                )
                .unwrap()
            })
        });
        g.bench_with_input(
            BenchmarkId::new("retain_perplexity", &name),
            &exec,
            |b, &e| b.iter(|| perplexity(&params, &pairs, e).unwrap()),
        );
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
