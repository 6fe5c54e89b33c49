//! One worker against the default pool for the data-parallel stages.
//! Built with `--no-default-features`, both rows measure the sequential
//! fallback.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use codesem::classify::svm::{fit_svm, SvmConfig};
use codesem::corpus::{make_split, Snippet};
use codesem::evaluate::cross_validate;
use codesem::features::{fit_vectorizer, VectorizerConfig};
use codesem::par;
use codesem::pipeline::{Tokenizer, TokenizerSpec};
use codesem::strategies::{StrategySpec, TrainSpec};
use codesem::synthetic::{generate, SyntheticConfig};

const JOBS: [(&str, usize); 2] = [("sequential", 1), ("parallel", 0)];

fn corpus() -> Vec<Snippet> {
    generate(&SyntheticConfig {
        n_labeled: 600,
        n_unlabeled: 0,
        ..Default::default()
    })
    .labeled
}

fn spec() -> TokenizerSpec {
    TokenizerSpec {
        vocab_size: 400,
        ..Default::default()
    }
}

fn stages(c: &mut Criterion) {
    let snippets = corpus();
    let codes: Vec<&str> = snippets.iter().map(|s| s.code.as_str()).collect();
    let tokenizer = Tokenizer::train(&codes, &spec()).unwrap();
    let docs = tokenizer.tokenize(&codes);
    let vectorizer = fit_vectorizer(&docs, &VectorizerConfig::default()).unwrap();
    let x = vectorizer.transform(&docs);
    let classes: Vec<&str> = {
        let mut v: Vec<&str> = snippets.iter().map(|s| s.lower_label.as_deref().unwrap()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let y: Vec<usize> = snippets
        .iter()
        .map(|s| classes.binary_search(&s.lower_label.as_deref().unwrap()).unwrap())
        .collect();

    let mut g = c.benchmark_group("stages");
    g.sample_size(10);
    for (name, jobs) in JOBS {
        g.bench_with_input(BenchmarkId::new("tokenize", name), &jobs, |b, &jobs| {
            b.iter(|| par::with_jobs(jobs, || black_box(tokenizer.tokenize(&codes))))
        });
        g.bench_with_input(BenchmarkId::new("vectorize", name), &jobs, |b, &jobs| {
            b.iter(|| par::with_jobs(jobs, || black_box(vectorizer.transform(&docs))))
        });
        g.bench_with_input(BenchmarkId::new("svm_fit", name), &jobs, |b, &jobs| {
            b.iter(|| par::with_jobs(jobs, || black_box(fit_svm(&x, &y, classes.len(), &SvmConfig::default()).unwrap())))
        });
    }
    g.finish();
}

fn cross_validation(c: &mut Criterion) {
    let snippets = corpus();
    let taxonomy = codesem::synthetic::taxonomy();
    let plan = make_split(&snippets, 0, 0.2, 0.0, 5).unwrap();
    let train_spec = TrainSpec {
        tokenizer: spec(),
        strategy: StrategySpec::Flat(codesem::config::baseline_model()),
        augment: None,
    };
    let mut g = c.benchmark_group("cv5");
    g.sample_size(10);
    for (name, jobs) in JOBS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &jobs, |b, &jobs| {
            b.iter(|| {
                par::with_jobs(jobs, || black_box(cross_validate(&snippets, &[], &taxonomy, &plan, &train_spec, 0).unwrap()))
            })
        });
    }
    g.finish();
}

criterion_group!(benches, stages, cross_validation);
criterion_main!(benches);
