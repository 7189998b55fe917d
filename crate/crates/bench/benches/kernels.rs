use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fednl::data::{generate_synthetic, SyntheticSpec};
use fednl::linalg::eigh;
use fednl::rng::{Purpose, StreamKey};
use fednl::{run, CompressorSpec, LogisticRegression, MethodConfig, Reference, RunOptions, SymmetricMatrix, Vector};
use rand::Rng;

fn random_symmetric(d: usize, seed: u64) -> SymmetricMatrix {
    let mut rng = StreamKey::new(seed, 0, 0, Purpose::Test).stream();
    SymmetricMatrix::from_lower_fn(d, |_, _| rng.random_range(-1.0..1.0))
}

fn bench_eigh(c: &mut Criterion) {
    let mut group = c.benchmark_group("eigh");
    for d in [20, 60, 123] {
        let m = random_symmetric(d, 1);
        group.bench_with_input(BenchmarkId::from_parameter(d), &m, |b, m| b.iter(|| eigh(m).unwrap()));
    }
    group.finish();
}

fn bench_compressors(c: &mut Criterion) {
    let d = 123;
    let m = random_symmetric(d, 2);
    let mut group = c.benchmark_group("compress_d123");
    for (name, spec) in [
        ("top_k", CompressorSpec::top_k(d)),
        ("rank_r", CompressorSpec::rank_r(1)),
        ("rand_k", CompressorSpec::rand_k(d)),
    ] {
        let mut rng = StreamKey::new(3, 0, 0, Purpose::Test).stream();
        group.bench_function(name, |b| b.iter(|| spec.compress_matrix(&m, &mut rng).unwrap()));
    }
    group.finish();
}

fn bench_fednl_rounds(c: &mut Criterion) {
    let spec = SyntheticSpec { alpha: 0.5, beta: 0.5, n: 10, m: 50, d: 30, iid: false, seed: 4 };
    let problem = LogisticRegression::new(generate_synthetic(&spec).unwrap(), 1e-3).unwrap();
    let reference = Reference::newton(&problem, 20).unwrap();
    let x0 = Vector::zeros(30);
    let cfg = MethodConfig {
        compressor: CompressorSpec::top_k(30),
        max_rounds: 10,
        tol_grad: 0.0,
        ..MethodConfig::default()
    };
    let mut group = c.benchmark_group("fednl_10_rounds_d30");
    group.sample_size(20);
    for parallel in [false, true] {
        let cfg = MethodConfig { parallel, ..cfg.clone() };
        let label = if parallel { "parallel" } else { "sequential" };
        group.bench_function(label, |b| {
            b.iter(|| run(&cfg, &problem, &x0, &reference, &RunOptions::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_eigh, bench_compressors, bench_fednl_rounds);
criterion_main!(benches);
