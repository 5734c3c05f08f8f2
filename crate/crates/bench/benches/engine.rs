use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use rtgen_core::interaction::{assemble_final_suite, Context, PreferenceArchive};
use rtgen_core::interpreter::{execute, fitness_vector, DEFAULT_STEP_BUDGET};
use rtgen_core::minimization::minimize_for_target;
use rtgen_core::search::{preference_sort, run_search, Search, SearchConfig};
use rtgen_core::stats::{cliffs_delta, rank_sum_test};
use rtgen_core::subject::{extract_targets, SubjectClass, TargetSet, ARRAY_INT_LIST};
use rtgen_core::test_model::{random_test, TestCase, VariationConfig};

fn fixture() -> (SubjectClass, TargetSet) {
    let subject = SubjectClass::parse(ARRAY_INT_LIST).unwrap();
    let targets = extract_targets(&subject);
    (subject, targets)
}

fn random_tests(subject: &SubjectClass, n: usize) -> Vec<TestCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n).map(|_| random_test(subject, &VariationConfig::default(), &mut rng)).collect()
}

fn execution(c: &mut Criterion) {
    let (subject, targets) = fixture();
    let tests = random_tests(&subject, 50);
    c.bench_function("execute 50 random tests", |b| {
        b.iter(|| {
            for t in &tests {
                black_box(execute(&subject, t, DEFAULT_STEP_BUDGET).ok());
            }
        })
    });
    c.bench_function("fitness of 50 random tests", |b| {
        b.iter(|| {
            for t in &tests {
                if let Ok(trace) = execute(&subject, t, DEFAULT_STEP_BUDGET) {
                    black_box(fitness_vector(&subject, targets.iter(), &trace));
                }
            }
        })
    });
}

fn ranking(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let fitness: Vec<Vec<f64>> = (0..100).map(|_| (0..60).map(|_| rng.random::<f64>()).collect()).collect();
    let lengths: Vec<usize> = (0..100).map(|_| rng.random_range(1..40)).collect();
    let active: Vec<usize> = (0..60).collect();
    c.bench_function("preference sort 100 x 60", |b| {
        b.iter(|| black_box(preference_sort(&fitness, &lengths, &active)))
    });
}

fn search(c: &mut Criterion) {
    let (subject, targets) = fixture();
    let config = SearchConfig::default();
    c.bench_function("one generation", |b| {
        b.iter_batched(
            || Search::new(&subject, &targets, config.clone()),
            |mut s| {
                s.evolve_generation(&[], 0.0);
                s
            },
            BatchSize::LargeInput,
        )
    });
    let mut group = c.benchmark_group("whole search");
    group.sample_size(10);
    group.bench_function("100 generations", |b| {
        let config = SearchConfig {
            max_generations: 100,
            ..SearchConfig::default()
        };
        b.iter(|| black_box(run_search(&subject, &targets, &config)))
    });
    group.finish();
}

fn minimization(c: &mut Criterion) {
    let (subject, targets) = fixture();
    let outcome = run_search(
        &subject,
        &targets,
        &SearchConfig {
            max_generations: 50,
            ..SearchConfig::default()
        },
    );
    let archived: Vec<_> = outcome.archive.iter().map(|(t, e)| (t, e.test.clone())).collect();
    c.bench_function("minimize every archived test", |b| {
        b.iter(|| {
            for (t, test) in &archived {
                black_box(minimize_for_target(&subject, test, targets.get(*t), DEFAULT_STEP_BUDGET).ok());
            }
        })
    });
    let ctx = Context {
        subject: &subject,
        targets: &targets,
        step_budget: DEFAULT_STEP_BUDGET,
    };
    c.bench_function("assemble suite", |b| {
        b.iter_batched(
            || outcome.archive.clone(),
            |mut archive| black_box(assemble_final_suite(ctx, &PreferenceArchive::new(), &mut archive, 50)),
            BatchSize::LargeInput,
        )
    });
}

fn statistics(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<f64> = (0..2000).map(|_| rng.random_range(1..20) as f64).collect();
    let ys: Vec<f64> = (0..8000).map(|_| rng.random_range(1..30) as f64).collect();
    c.bench_function("rank-sum 2000 vs 8000", |b| b.iter(|| black_box(rank_sum_test(&xs, &ys))));
    c.bench_function("exact rank-sum 6 vs 6", |b| {
        b.iter(|| black_box(rank_sum_test(&xs[..6], &ys[..6])))
    });
    c.bench_function("cliff's delta 2000 vs 8000", |b| b.iter(|| black_box(cliffs_delta(&xs, &ys))));
}

criterion_group!(benches, execution, ranking, search, minimization, statistics);
criterion_main!(benches);
