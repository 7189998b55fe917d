//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Set FEDNL_A1A to run on the real a1a file.

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use fednl::data::{generate_synthetic, parse_libsvm, partition};
use fednl::linalg::lower_len;
use fednl::methods::{cubic_gradient, cubic_model, cubic_subproblem, newton_iterate};
use fednl::rng::{Purpose, StreamKey};
use fednl::{
    run, CompressorClass, CompressorSpec, HessianInit, LogisticRegression, Method, MethodConfig, Problem, Quadratic,
    Reference, RunOptions, SymmetricMatrix, SyntheticSpec, Trace, UpdateOption, Vector,
};
use fednl_cli::{execute, parse_config};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Criterion = fn() -> Outcome;

fn a1a_path() -> PathBuf {
    std::env::var_os("FEDNL_A1A")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/a1a_standin.libsvm"))
}

struct A1a {
    problem: LogisticRegression,
    reference: Reference,
}

fn a1a() -> &'static A1a {
    static CELL: OnceLock<A1a> = OnceLock::new();
    CELL.get_or_init(|| {
        let rows = parse_libsvm(a1a_path(), Some(123)).expect("a1a parses");
        let data = partition(rows.rows(), 16).and_then(|p| p.apply(&rows)).expect("a1a partitions");
        let problem = LogisticRegression::new(data, 1e-3).expect("valid problem");
        let reference = Reference::newton(&problem, 20).expect("reference");
        A1a { problem, reference }
    })
}

fn warm_start(p: &dyn Problem) -> Vector {
    newton_iterate(p, &Vector::zeros(p.dim()), 5).expect("warm start")
}

fn synthetic(d: usize, seed: u64) -> (LogisticRegression, Reference) {
    let spec = SyntheticSpec { alpha: 0.5, beta: 0.5, n: 10, m: 50, d, iid: false, seed };
    let problem = LogisticRegression::new(generate_synthetic(&spec).unwrap(), 1e-3).unwrap();
    let reference = Reference::newton(&problem, 20).unwrap();
    (problem, reference)
}

fn go(cfg: &MethodConfig, p: &dyn Problem, x0: &Vector, r: &Reference) -> Trace {
    run(cfg, p, x0, r, &RunOptions::default()).expect("run succeeds")
}

/// Worst per-round ratio `‖x^{k+1} − x*‖² / ‖x^k − x*‖²` over rounds whose
/// gap is still at or above `gap`.
fn worst_ratio_until(trace: &Trace, gap: f64) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for pair in trace.records.windows(2) {
        if pair[0].f_gap < gap {
            break;
        }
        worst = worst.max(pair[1].dist_sq / pair[0].dist_sq);
        checked += 1;
    }
    (worst, checked)
}

fn criterion_one_trace() -> &'static Trace {
    static CELL: OnceLock<Trace> = OnceLock::new();
    CELL.get_or_init(|| {
        let a = a1a();
        let cfg = MethodConfig { max_rounds: 100, tol_gap: Some(1e-12), ..MethodConfig::default() };
        go(&cfg, &a.problem, &warm_start(&a.problem), &a.reference)
    })
}

fn c1_local_linear_rate() -> Outcome {
    let trace = criterion_one_trace();
    let (worst, checked) = worst_ratio_until(trace, 1e-12);
    let reached = trace.first_reaching(1e-12).is_some();
    outcome(
        reached && checked > 0 && worst <= 0.55,
        format!("{checked} round(s) before gap < 1e-12, worst ratio {worst:.3e} (bound 0.55), reached={reached}"),
    )
}

fn c2_newton_zero_rate() -> Outcome {
    let a = a1a();
    let cfg = MethodConfig { max_rounds: 100, tol_gap: Some(1e-12), ..MethodConfig::new(Method::N0) };
    let trace = go(&cfg, &a.problem, &warm_start(&a.problem), &a.reference);
    let (worst, checked) = worst_ratio_until(&trace, 1e-12);
    let reached = trace.first_reaching(1e-12).is_some();
    outcome(
        reached && checked > 0 && worst <= 0.55,
        format!("{checked} round(s) before gap < 1e-12, worst ratio {worst:.3e} (bound 0.55), reached={reached}"),
    )
}

fn c3_newton_star_one_step() -> Outcome {
    let mut rng = StreamKey::new(2021, 0, 0, Purpose::Test).stream();
    let q = Quadratic::random(4, 20, &mut rng).unwrap();
    let x_star = q.minimizer().unwrap();
    let r = Reference { f_star: q.value(&x_star), x_star };
    let x0 = Vector::from_fn(20, |_, _| rng.random_range(-5.0..5.0));
    let trace = go(&MethodConfig { max_rounds: 1, ..MethodConfig::new(Method::Ns) }, &q, &x0, &r);
    let err = (&trace.iterates[1] - &r.x_star).norm();
    outcome(err < 1e-10, format!("‖x¹ − x*‖ = {err:.3e} (bound 1e-10)"))
}

fn c4_lyapunov_decay() -> Outcome {
    let a = a1a();
    let cfg = MethodConfig {
        compressor: CompressorSpec::top_k(123),
        max_rounds: 30,
        tol_grad: 0.0,
        ..MethodConfig::default()
    };
    let opts = RunOptions { lyapunov: true, ..RunOptions::default() };
    let trace = run(&cfg, &a.problem, &warm_start(&a.problem), &a.reference, &opts).expect("run succeeds");
    let Some(constants) = trace.lyapunov_constants else {
        return outcome(false, "run did not report Lyapunov constants");
    };
    let rate = constants.contraction();
    let phi: Vec<f64> = trace.records.iter().filter_map(|r| r.lyapunov).collect();
    if phi.len() != trace.records.len() {
        return outcome(false, "Lyapunov column is incomplete");
    }
    let violations = phi.windows(2).filter(|w| w[1] > rate * w[0] + 1e-9).count();
    outcome(
        violations == 0,
        format!(
            "{} rounds, rate 1 − min(A, 1/3) = {rate:.6}, Φ⁰ = {:.3e}, Φ^K = {:.3e}, violations {violations}",
            phi.len() - 1,
            phi[0],
            phi[phi.len() - 1]
        ),
    )
}

fn max_gap(a: &Trace, b: &Trace) -> f64 {
    if a.iterates.len() != b.iterates.len() {
        return f64::INFINITY;
    }
    a.iterates.iter().zip(&b.iterates).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max)
}

fn c5_special_cases() -> Outcome {
    let (p, r) = synthetic(30, 5);
    let x0 = Vector::zeros(30);
    let base = MethodConfig { max_rounds: 20, tol_grad: 0.0, ..MethodConfig::default() };

    // Stationary Hessian estimates: the only setting in which the two methods
    // learn at the same points.
    let frozen = MethodConfig {
        compressor: CompressorSpec::zero(),
        alpha: 0.0,
        h_init: Some(HessianInit::LocalAtX0),
        option: UpdateOption::Corrected,
        ..base.clone()
    };
    let pp = max_gap(&go(&frozen, &p, &x0, &r), &go(&MethodConfig { method: Method::FedNlPp, ..frozen }, &p, &x0, &r));

    let mut bc: f64 = 0.0;
    for option in [UpdateOption::Projected, UpdateOption::Corrected] {
        let fednl = MethodConfig { option, ..base.clone() };
        let bc_cfg = MethodConfig {
            method: Method::FedNlBc,
            p: 1.0,
            eta: 1.0,
            compressor_master: CompressorSpec::identity(),
            ..fednl.clone()
        };
        bc = bc.max(max_gap(&go(&fednl, &p, &x0, &r), &go(&bc_cfg, &p, &x0, &r)));
    }
    outcome(
        pp <= 1e-12 && bc <= 1e-12,
        format!("PP(τ=n) vs FedNL option 2: {pp:.2e}; BC(p=1, identity, η=1) vs FedNL: {bc:.2e} (bound 1e-12)"),
    )
}

fn random_symmetric(d: usize, rng: &mut impl Rng) -> SymmetricMatrix {
    SymmetricMatrix::from_lower_fn(d, |_, _| rng.random_range(-1.0..1.0))
}

/// Worst bias z-score and variance ratio over `draws` samples.
fn monte_carlo(x: &[f64], draws: usize, mut sample: impl FnMut() -> Vec<f64>) -> (f64, f64) {
    let dim = x.len();
    let (mut sum, mut sum_sq, mut err) = (vec![0.0; dim], vec![0.0; dim], 0.0);
    for _ in 0..draws {
        let c = sample();
        for j in 0..dim {
            sum[j] += c[j];
            sum_sq[j] += c[j] * c[j];
            err += (c[j] - x[j]).powi(2);
        }
    }
    let n = draws as f64;
    let z = (0..dim)
        .map(|j| {
            let mean = sum[j] / n;
            let se = ((sum_sq[j] / n - mean * mean).max(0.0) / n).sqrt();
            match se {
                0.0 if mean == x[j] => 0.0,
                0.0 => f64::INFINITY,
                se => (mean - x[j]).abs() / se,
            }
        })
        .fold(0.0, f64::max);
    (z, err / n / x.iter().map(|v| v * v).sum::<f64>())
}

fn c6_compressor_contracts() -> Outcome {
    let mut rng = StreamKey::new(6, 0, 0, Purpose::Test).stream();
    let mut contraction_failures = 0;
    for case in 0..200 {
        let d = 2 + case % 29;
        let m = random_symmetric(d, &mut rng);
        let k = rng.random_range(1..=d);
        for spec in [CompressorSpec::top_k(k), CompressorSpec::rank_r(k)] {
            let Ok(CompressorClass::Contractive { delta }) = spec.matrix_class(d) else {
                return outcome(false, format!("{spec:?} is not declared contractive"));
            };
            let err = spec.compress_matrix(&m, &mut rng).unwrap().densify().frobenius_distance(&m).powi(2);
            // Relative slack only absorbs the eigendecomposition round trip.
            if err > (1.0 - delta + 1e-14) * m.frobenius_norm_sq() {
                contraction_failures += 1;
            }
        }
    }

    let draws = 100_000;
    let mut worst_z: f64 = 0.0;
    let mut worst_var: f64 = 0.0;
    let mut record = |(z, ratio): (f64, f64), omega: f64| {
        worst_z = worst_z.max(z);
        worst_var = worst_var.max(ratio / omega);
    };

    let v = Vector::from_vec(vec![0.7, -1.3, 2.0]);
    let spec = CompressorSpec::rand_k(2);
    let Ok(CompressorClass::Unbiased { omega }) = spec.vector_class(3) else { unreachable!() };
    let x: Vec<f64> = v.iter().copied().collect();
    record(
        monte_carlo(&x, draws, || spec.compress_vector(&v, &mut rng).unwrap().densify().iter().copied().collect()),
        omega,
    );

    let m = random_symmetric(3, &mut rng);
    let Ok(CompressorClass::Unbiased { omega }) = spec.matrix_class(3) else { unreachable!() };
    let x: Vec<f64> = m.as_dense().iter().copied().collect();
    record(
        monte_carlo(&x, draws, || {
            spec.compress_matrix(&m, &mut rng).unwrap().densify().as_dense().iter().copied().collect()
        }),
        omega,
    );
    debug_assert_eq!(lower_len(3), 6);

    let v = Vector::from_vec(vec![0.3, -0.1, 0.8, 0.0, -0.5, 0.25, 0.6, -0.9]);
    let spec = CompressorSpec::dithering(2);
    let Ok(CompressorClass::Unbiased { omega }) = spec.vector_class(8) else { unreachable!() };
    let x: Vec<f64> = v.iter().copied().collect();
    record(
        monte_carlo(&x, draws, || spec.compress_vector(&v, &mut rng).unwrap().densify().iter().copied().collect()),
        omega,
    );

    outcome(
        contraction_failures == 0 && worst_z < 4.0 && worst_var <= 1.05,
        format!(
            "contraction failures {contraction_failures}/400; worst bias {worst_z:.2} SE (bound 4); \
             worst variance/ω {worst_var:.3} (bound 1.05)"
        ),
    )
}

fn c7_communication_ordering() -> Outcome {
    let a = a1a();
    let x0 = Vector::zeros(123);
    let fednl = MethodConfig { max_rounds: 500, tol_gap: Some(1e-8), ..MethodConfig::default() };
    let fednl = go(&fednl, &a.problem, &x0, &a.reference);
    let gd = MethodConfig { max_rounds: 5000, tol_gap: Some(1e-8), ..MethodConfig::new(Method::Gd) };
    let gd = go(&gd, &a.problem, &x0, &a.reference);
    let Some(f) = fednl.first_reaching(1e-8) else {
        return outcome(false, "FedNL did not reach gap 1e-8");
    };
    // If GD never gets there its total is a lower bound on what it needs.
    let (g, bound) = match gd.first_reaching(1e-8) {
        Some(g) => (g, ""),
        None => (gd.last().unwrap(), " (GD not converged: lower bound)"),
    };
    let ratio = g.bits_up_cum / f.bits_up_cum;
    let total = (g.bits_up_cum + g.bits_down_cum) / (f.bits_up_cum + f.bits_down_cum);
    outcome(
        ratio >= 10.0,
        format!(
            "uplink bits/node to 1e-8: FedNL {:.3e} (round {}), GD {:.3e} (round {}){bound}; ratio {ratio:.1} \
             (bound 10), both directions {total:.1}",
            f.bits_up_cum, f.round, g.bits_up_cum, g.round
        ),
    )
}

fn monotone(trace: &Trace) -> bool {
    trace.records.windows(2).all(|w| w[1].f_gap <= w[0].f_gap)
}

fn c8_globalization() -> Outcome {
    let a = a1a();
    let x0 = Vector::from_element(123, 10.0);
    let mut pass = true;
    let mut parts = Vec::new();
    for method in [Method::FedNlLs, Method::FedNlCr] {
        let cfg = MethodConfig { max_rounds: 500, tol_gap: Some(1e-8), ..MethodConfig::new(method) };
        let trace = go(&cfg, &a.problem, &x0, &a.reference);
        let mono = monotone(&trace);
        let reached = trace.first_reaching(1e-8).map(|r| r.round);
        pass &= mono && reached.is_some();
        let last = trace.last().unwrap();
        parts.push(match reached {
            Some(k) => format!("{method}: monotone={mono}, gap 1e-8 at round {k}"),
            None => format!("{method}: monotone={mono}, gap {:.3e} after {} rounds", last.f_gap, last.round),
        });
    }
    outcome(pass, parts.join("; "))
}

fn c9_cubic_subproblem() -> Outcome {
    let mut rng = StreamKey::new(9, 0, 0, Purpose::Test).stream();
    let trials = 1_000_000;
    let mut worst_residual: f64 = 0.0;
    let mut beaten = 0;
    for _ in 0..100 {
        let d = rng.random_range(2..=6);
        let mut h = random_symmetric(d, &mut rng);
        let lo = fednl::linalg::eigh(&h).unwrap().min_value();
        h.add_diagonal(-lo + rng.random_range(0.01..1.0));
        let l = rng.random_range(0.0..0.5);
        let m = rng.random_range(0.1..10.0);
        let g = Vector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let step = cubic_subproblem(&g, &h, l, m).unwrap();
        worst_residual = worst_residual.max(cubic_gradient(&g, &h, l, m, &step).norm() / (1.0 + g.norm()));
        let best = cubic_model(&g, &h, l, m, &step);

        // Flat copies keep the trial loop allocation-free.
        let a: Vec<f64> = h.as_dense().iter().copied().collect();
        let gs: Vec<f64> = g.iter().copied().collect();
        let hs: Vec<f64> = step.iter().copied().collect();
        let radius = 2.0 * step.norm() + 1.0;
        let local = 0.1 * step.norm() + 1e-3;
        let mut trial = vec![0.0; d];
        let mut lowest = f64::INFINITY;
        for t in 0..trials {
            if t % 2 == 0 {
                // Uniform in a box around the origin that contains the ball.
                trial.iter_mut().for_each(|v| *v = rng.random_range(-radius..radius));
            } else {
                for (v, s) in trial.iter_mut().zip(&hs) {
                    *v = s + rng.random_range(-local..local);
                }
            }
            let mut quad = 0.0;
            let mut lin = 0.0;
            let mut norm_sq = 0.0;
            for i in 0..d {
                let row: f64 = (0..d).map(|j| a[i * d + j] * trial[j]).sum();
                quad += trial[i] * row;
                lin += gs[i] * trial[i];
                norm_sq += trial[i] * trial[i];
            }
            let value = lin + 0.5 * (quad + l * norm_sq) + m / 6.0 * norm_sq * norm_sq.sqrt();
            lowest = lowest.min(value);
        }
        if best > lowest + 1e-12 * best.abs().max(1.0) {
            beaten += 1;
        }
    }
    outcome(
        worst_residual <= 1e-9 && beaten == 0,
        format!(
            "worst residual/(1+‖g‖) {worst_residual:.2e} (bound 1e-9); instances beaten by a trial point: {beaten}/100"
        ),
    )
}

fn median(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[v.len() / 2]
}

fn c10_partial_participation() -> Outcome {
    let n = 10;
    let taus = [2, 5, 10];
    let mut medians = Vec::new();
    let problems: Vec<_> = (1..=5).map(|seed| synthetic(20, seed)).collect();
    for tau in taus {
        let mut rounds = Vec::new();
        for (seed, (p, r)) in (1..=5).zip(&problems) {
            let cfg = MethodConfig {
                method: Method::FedNlPp,
                tau: Some(tau),
                seed,
                max_rounds: 3000,
                tol_gap: Some(1e-8),
                ..MethodConfig::default()
            };
            let trace = go(&cfg, p, &Vector::zeros(20), r);
            rounds.push(trace.first_reaching(1e-8).map_or(usize::MAX, |rec| rec.round));
        }
        medians.push(median(rounds));
    }
    let pass = medians.windows(2).all(|w| w[0] >= w[1]) && medians[0] != usize::MAX;
    let shown: Vec<String> = taus.iter().zip(&medians).map(|(t, m)| format!("τ={t}/{n}: {m}")).collect();
    outcome(pass, format!("median rounds to 1e-8: {}", shown.join(", ")))
}

fn c11_superlinear_trend() -> Outcome {
    let trace = criterion_one_trace();
    let ratios: Vec<f64> = trace.records.windows(2).map(|w| w[1].dist_sq / w[0].dist_sq).collect();
    if ratios.len() < 5 {
        return outcome(
            false,
            format!(
                "criterion-1 run has only {} recorded round(s) after x⁰; 5 are needed (gap at x⁰ {:.3e})",
                ratios.len(),
                trace.records[0].f_gap
            ),
        );
    }
    let tail = &ratios[ratios.len() - 5..];
    let decreasing = tail.windows(2).all(|w| w[1] < w[0]);
    let shown: Vec<String> = tail.iter().map(|r| format!("{r:.3e}")).collect();
    outcome(decreasing, format!("final ratios {}", shown.join(", ")))
}

const DETERMINISM_CONFIG: &str = r#"
[problem]
kind = "synthetic"
alpha = 1.0
beta = 1.0
n = 12
m = 40
d = 15
seed = 11
lambda = 1e-3

[method]
name = "{METHOD}"
option = "corrected"
tau = 5
p = 0.6
compressor = { kind = "rand_k", param = 24 }
alpha = 0.2
compressor_master = { kind = "rand_k", param = 5 }
eta = 0.25
seed = 1234
max_rounds = 40
parallel = {PARALLEL}
"#;

fn c12_determinism() -> Outcome {
    let mut mismatches = Vec::new();
    for method in ["fednl", "fednl_pp", "fednl_bc", "fednl_ls"] {
        let text = |parallel: bool| {
            DETERMINISM_CONFIG.replace("{METHOD}", method).replace("{PARALLEL}", &parallel.to_string())
        };
        let csv = |parallel: bool, threads: usize| {
            let cfg = parse_config(&text(parallel), std::path::Path::new(".")).unwrap();
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| execute(&cfg).expect("run succeeds").0.to_csv_string())
        };
        let reference = csv(true, 4);
        let variants = [
            ("repeat", csv(true, 4)),
            ("1 thread", csv(true, 1)),
            ("3 threads", csv(true, 3)),
            ("sequential", csv(false, 1)),
        ];
        for (label, other) in variants {
            if other != reference {
                mismatches.push(format!("{method}/{label}"));
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "4 methods × (repeat, 1/3/4 threads, sequential): byte-identical CSV".into()
        } else {
            format!("differing traces: {}", mismatches.join(", "))
        },
    )
}

fn main() {
    let criteria: [(&str, Criterion); 12] = [
        ("local linear rate", c1_local_linear_rate),
        ("Newton Zero rate", c2_newton_zero_rate),
        ("Newton Star one-step exactness", c3_newton_star_one_step),
        ("Lyapunov linear decay", c4_lyapunov_decay),
        ("special-case equivalences", c5_special_cases),
        ("compressor contracts", c6_compressor_contracts),
        ("communication ordering", c7_communication_ordering),
        ("globalization monotonicity", c8_globalization),
        ("cubic subproblem correctness", c9_cubic_subproblem),
        ("partial-participation monotonicity", c10_partial_participation),
        ("superlinear trend", c11_superlinear_trend),
        ("determinism", c12_determinism),
    ];
    println!("acceptance data: {}", a1a_path().display());
    let mut failed = Vec::new();
    for (i, (name, criterion)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = criterion();
        let secs = start.elapsed().as_secs_f64();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("{tag} [{:>2}] {name}: {} ({secs:.1} s)", i + 1, result.detail);
        if !result.pass {
            failed.push(i + 1);
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
