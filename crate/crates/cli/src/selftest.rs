//! Quick property checks over every module plus golden-trace regression.

use std::io::Write;
use std::path::{Path, PathBuf};

use fednl::data::{parse_libsvm_reader, partition, write_libsvm};
use fednl::linalg::{eigh, project_psd_mu};
use fednl::methods::{cubic_gradient, cubic_subproblem};
use fednl::rng::{Purpose, StreamKey};
use fednl::{
    run, CompressorClass, CompressorSpec, HessianInit, Method, MethodConfig, Problem, Quadratic, RunOptions,
    SymmetricMatrix, Trace, Vector,
};
use rand::Rng;

use crate::{execute, load_config, CliError};

/// Names of the committed golden traces; each has a `.toml` and a `.csv`.
pub const GOLDEN: [&str; 4] = ["fednl_a1a", "fednl_cr_a1a", "fednl_pp_synthetic", "fednl_bc_synthetic"];

pub fn default_golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("golden")
}

type Check = fn() -> Result<(), String>;

const CHECKS: [(&str, Check); 8] = [
    ("linalg: projection onto {M ⪰ μI}", projection),
    ("compress: Top-K and Rank-R contraction", contraction),
    ("compress: Rand-K unbiasedness", rand_k_unbiased),
    ("data: LibSVM round trip and partition", libsvm_round_trip),
    ("oracle: quadratic minimizer is stationary", quadratic_oracle),
    ("methods: cubic subproblem stationarity", cubic_stationarity),
    ("methods: Zero-compressor FedNL equals Newton Zero", newton_zero_collapse),
    ("methods: parallel and sequential traces agree", thread_independence),
];

fn rng(tag: u64) -> impl Rng {
    StreamKey::new(tag, 0, 0, Purpose::Test).stream()
}

fn random_symmetric(d: usize, rng: &mut impl Rng) -> SymmetricMatrix {
    SymmetricMatrix::from_lower_fn(d, |_, _| rng.random_range(-1.0..1.0))
}

fn ensure(ok: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(message())
    }
}

fn projection() -> Result<(), String> {
    let mut rng = rng(1);
    for _ in 0..50 {
        let m = random_symmetric(rng.random_range(1..10), &mut rng);
        let p = project_psd_mu(&m, 0.3).map_err(|e| e.to_string())?;
        let lo = eigh(&p).map_err(|e| e.to_string())?.min_value();
        ensure(lo >= 0.3 - 1e-10, || format!("λ_min = {lo} after projection"))?;
    }
    Ok(())
}

fn contraction() -> Result<(), String> {
    let mut rng = rng(2);
    for _ in 0..50 {
        let d = rng.random_range(2..15);
        let m = random_symmetric(d, &mut rng);
        for spec in [CompressorSpec::top_k(d), CompressorSpec::rank_r(1)] {
            let Ok(CompressorClass::Contractive { delta }) = spec.matrix_class(d) else {
                return Err(format!("{spec:?} is not contractive"));
            };
            let c = spec.compress_matrix(&m, &mut rng).map_err(|e| e.to_string())?.densify();
            let err = c.frobenius_distance(&m).powi(2);
            ensure(err <= (1.0 - delta + 1e-12) * m.frobenius_norm_sq(), || format!("{spec:?} fails on d={d}"))?;
        }
    }
    Ok(())
}

fn rand_k_unbiased() -> Result<(), String> {
    let mut rng = rng(3);
    let v = Vector::from_vec(vec![0.5, -1.0, 2.0, 0.25]);
    let spec = CompressorSpec::rand_k(2);
    let draws = 20_000;
    let mut sum = Vector::zeros(4);
    let mut sum_sq = Vector::zeros(4);
    for _ in 0..draws {
        let c = spec.compress_vector(&v, &mut rng).map_err(|e| e.to_string())?.densify();
        sum += &c;
        sum_sq += c.component_mul(&c);
    }
    let n = draws as f64;
    for j in 0..4 {
        let mean = sum[j] / n;
        let se = ((sum_sq[j] / n - mean * mean) / n).sqrt();
        ensure((mean - v[j]).abs() <= 4.0 * se, || format!("coordinate {j}: mean {mean} vs {}", v[j]))?;
    }
    Ok(())
}

fn libsvm_round_trip() -> Result<(), String> {
    let text = "+1 1:0.5 3:1\n-1 2:2\n+1 1:1 2:1 3:1\n-1 3:0.25\n";
    let data = parse_libsvm_reader(text.as_bytes(), None).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    write_libsvm(&data, &mut out).map_err(|e| e.to_string())?;
    let again = parse_libsvm_reader(out.as_slice(), Some(data.dim())).map_err(|e| e.to_string())?;
    ensure(again == data, || "LibSVM write/parse changed the data".into())?;
    let plan = partition(4, 2).map_err(|e| e.to_string())?;
    ensure(plan.rows_per_device == 2, || format!("{} rows per device", plan.rows_per_device))
}

fn quadratic_oracle() -> Result<(), String> {
    let q = Quadratic::random(3, 6, &mut rng(4)).map_err(|e| e.to_string())?;
    let x = q.minimizer().map_err(|e| e.to_string())?;
    let g = q.grad(&x).norm();
    ensure(g < 1e-10, || format!("gradient norm {g} at the minimizer"))
}

fn cubic_stationarity() -> Result<(), String> {
    let mut rng = rng(5);
    for _ in 0..20 {
        let d = rng.random_range(1..8);
        let mut h = random_symmetric(d, &mut rng);
        let lo = eigh(&h).map_err(|e| e.to_string())?.min_value();
        h.add_diagonal(-lo + 0.1);
        let g = Vector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let m = rng.random_range(0.1..5.0);
        let step = cubic_subproblem(&g, &h, 0.0, m).map_err(|e| e.to_string())?;
        let r = cubic_gradient(&g, &h, 0.0, m, &step).norm();
        ensure(r <= 1e-9 * (1.0 + g.norm()), || format!("residual {r}"))?;
    }
    Ok(())
}

fn small_problem() -> Result<(Quadratic, fednl::Reference), String> {
    let q = Quadratic::random(4, 5, &mut rng(6)).map_err(|e| e.to_string())?;
    let x_star = q.minimizer().map_err(|e| e.to_string())?;
    let reference = fednl::Reference { f_star: q.value(&x_star), x_star };
    Ok((q, reference))
}

fn newton_zero_collapse() -> Result<(), String> {
    let (q, r) = small_problem()?;
    let x0 = Vector::from_element(5, 1.0);
    let base = MethodConfig { max_rounds: 10, tol_grad: 0.0, ..MethodConfig::default() };
    let fednl = MethodConfig {
        compressor: CompressorSpec::zero(),
        alpha: 0.0,
        h_init: Some(HessianInit::LocalAtX0),
        ..base.clone()
    };
    let n0 = MethodConfig { method: Method::N0, ..base };
    let a = run(&fednl, &q, &x0, &r, &RunOptions::default()).map_err(|e| e.to_string())?;
    let b = run(&n0, &q, &x0, &r, &RunOptions::default()).map_err(|e| e.to_string())?;
    let gap = a.iterates.iter().zip(&b.iterates).map(|(x, y)| (x - y).amax()).fold(0.0, f64::max);
    ensure(gap <= 1e-12, || format!("trajectories differ by {gap}"))
}

fn thread_independence() -> Result<(), String> {
    let (q, r) = small_problem()?;
    let x0 = Vector::from_element(5, 1.0);
    let cfg = MethodConfig {
        method: Method::FedNlPp,
        compressor: CompressorSpec::rand_k(5),
        alpha: 1.0 / 3.0,
        tau: Some(2),
        max_rounds: 10,
        ..MethodConfig::default()
    };
    let a = run(&cfg, &q, &x0, &r, &RunOptions::default()).map_err(|e| e.to_string())?;
    let seq = MethodConfig { parallel: false, ..cfg };
    let b = run(&seq, &q, &x0, &r, &RunOptions::default()).map_err(|e| e.to_string())?;
    ensure(a.to_csv_string() == b.to_csv_string(), || "CSV traces differ".into())
}

/// Runs the property checks and the golden traces, printing one line per
/// item. With `bless`, golden CSVs are rewritten instead of compared.
pub fn selftest(golden_dir: &Path, bless: bool, mut out: impl Write) -> Result<(), CliError> {
    let mut failures = Vec::new();
    let mut say = |line: String| {
        let _ = writeln!(out, "{line}");
    };
    for (name, check) in CHECKS {
        match check() {
            Ok(()) => say(format!("ok    {name}")),
            Err(e) => {
                say(format!("FAIL  {name}: {e}"));
                failures.push(name.to_string());
            }
        }
    }
    for name in GOLDEN {
        let label = format!("golden: {name}");
        match golden(golden_dir, name, bless) {
            Ok(msg) => say(format!("ok    {label}{msg}")),
            Err(e) => {
                say(format!("FAIL  {label}: {e}"));
                failures.push(label);
            }
        }
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(format!("{} selftest item(s) failed: {}", failures.len(), failures.join(", "))))
    }
}

fn golden(dir: &Path, name: &str, bless: bool) -> Result<&'static str, CliError> {
    let cfg = load_config(&dir.join(format!("{name}.toml")))?;
    let (trace, _) = execute(&cfg)?;
    let csv = trace.to_csv_string();
    let path = dir.join(format!("{name}.csv"));
    if bless {
        std::fs::write(&path, &csv).map_err(|source| CliError::Io { path: path.clone(), source })?;
        return Ok(" (blessed)");
    }
    let expected = std::fs::read_to_string(&path).map_err(|source| CliError::Io { path: path.clone(), source })?;
    if expected == csv {
        return Ok("");
    }
    let expected = Trace::read_csv(&expected)?;
    let row = expected.records.iter().zip(&trace.records).position(|(a, b)| a.csv_row() != b.csv_row());
    Err(CliError::Check(match row {
        Some(r) => format!("trace differs from {} at round {r}", path.display()),
        None => format!("trace length {} differs from {}", trace.records.len(), expected.records.len()),
    }))
}
