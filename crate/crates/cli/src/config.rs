//! TOML run configuration. Relative paths resolve against the directory of
//! the config file; unknown keys are rejected.

use std::path::{Path, PathBuf};

use fednl::data::{generate_synthetic, parse_libsvm, partition};
use fednl::methods::newton_iterate;
use fednl::rng::{Purpose, StreamKey};
use fednl::{
    BitPolicy, CompressorKind, CompressorSpec, HessianInit, LogisticRegression, Method, MethodConfig, Problem,
    Quadratic, SyntheticSpec, UpdateOption, Vector,
};
use serde::Deserialize;

use crate::{CliError, ReferenceFile};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: ProblemConfig,
    #[serde(default)]
    method: MethodSection,
    #[serde(default)]
    x0: X0Config,
    #[serde(default)]
    reference: ReferenceConfig,
    #[serde(default)]
    output: OutputConfig,
    #[serde(default)]
    bit_policy: BitPolicySection,
    #[serde(default)]
    run: RunSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemConfig {
    Libsvm {
        path: PathBuf,
        /// Environment variable that, when set, replaces `path`.
        #[serde(default)]
        path_env: Option<String>,
        n: usize,
        lambda: f64,
        #[serde(default)]
        dim: Option<usize>,
    },
    Synthetic {
        alpha: f64,
        beta: f64,
        n: usize,
        m: usize,
        d: usize,
        #[serde(default)]
        iid: bool,
        #[serde(default = "default_seed")]
        seed: u64,
        lambda: f64,
    },
    Quadratic {
        n: usize,
        d: usize,
        #[serde(default = "default_seed")]
        seed: u64,
    },
}

fn default_seed() -> u64 {
    42
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CompressorConfig {
    pub kind: CompressorName,
    #[serde(default)]
    pub param: usize,
    #[serde(default)]
    pub scale_to_norm: bool,
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CompressorName {
    TopK,
    RankR,
    RandK,
    Identity,
    Zero,
    Dithering,
}

impl CompressorConfig {
    fn spec(&self) -> CompressorSpec {
        let kind = match self.kind {
            CompressorName::TopK => CompressorKind::TopK,
            CompressorName::RankR => CompressorKind::RankR,
            CompressorName::RandK => CompressorKind::RandK,
            CompressorName::Identity => CompressorKind::Identity,
            CompressorName::Zero => CompressorKind::Zero,
            CompressorName::Dithering => CompressorKind::Dithering,
        };
        let spec = CompressorSpec::new(kind, self.param);
        if self.scale_to_norm {
            spec.scaled()
        } else {
            spec
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MethodSection {
    #[serde(default = "default_method")]
    name: String,
    #[serde(default)]
    option: OptionName,
    alpha: Option<f64>,
    eta: Option<f64>,
    p: Option<f64>,
    tau: Option<usize>,
    ls_c: Option<f64>,
    ls_gamma: Option<f64>,
    ls_max_trials: Option<usize>,
    hess_lipschitz: Option<f64>,
    compressor: Option<CompressorConfig>,
    compressor_master: Option<CompressorConfig>,
    h_init: Option<InitName>,
    seed: Option<u64>,
    max_rounds: Option<usize>,
    tol_grad: Option<f64>,
    tol_gap: Option<f64>,
    parallel: Option<bool>,
}

impl Default for MethodSection {
    fn default() -> Self {
        toml::from_str("").expect("all method fields have defaults")
    }
}

fn default_method() -> String {
    "fednl".into()
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum OptionName {
    #[default]
    Projected,
    Corrected,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum InitName {
    Zero,
    LocalAtX0,
    Optimal,
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum X0Config {
    #[default]
    Zeros,
    Constant {
        value: f64,
    },
    /// JSON array of numbers.
    File {
        path: PathBuf,
    },
    NewtonWarm {
        steps: usize,
    },
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    /// 20 Newton steps from the origin.
    #[default]
    Newton20,
    /// JSON written by the `reference` subcommand.
    File { path: PathBuf },
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub trace: Option<PathBuf>,
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BitPolicySection {
    #[serde(default = "default_float_bits")]
    float_bits: u32,
    #[serde(default = "default_shared_seed_indices")]
    shared_seed_indices: bool,
}

impl Default for BitPolicySection {
    fn default() -> Self {
        Self { float_bits: default_float_bits(), shared_seed_indices: default_shared_seed_indices() }
    }
}

fn default_float_bits() -> u32 {
    BitPolicy::default().float_bits
}

fn default_shared_seed_indices() -> bool {
    BitPolicy::default().shared_seed_indices
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    #[serde(default)]
    lyapunov: bool,
    #[serde(default)]
    wallclock: bool,
}

/// A validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub method: MethodConfig,
    pub x0: X0Config,
    pub reference: ReferenceConfig,
    pub output: OutputConfig,
    pub bit_policy: BitPolicy,
    pub lyapunov: bool,
    pub wallclock: bool,
    /// Directory that relative paths resolve against.
    pub base_dir: PathBuf,
}

fn config_error(field: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config { field: field.into(), message: message.to_string() }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error("<file>", format!("cannot read {}: {e}", path.display())))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base_dir)
}

/// Parses and validates config text; paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<RunConfig, CliError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let field = e.span().map(|s| locate(text, s.start)).unwrap_or_else(|| "<document>".into());
        config_error(&field, e.message())
    })?;
    build(raw, base_dir)
}

/// `line N` for a byte offset, used to point at parse errors.
fn locate(text: &str, offset: usize) -> String {
    let line = text[..offset.min(text.len())].matches('\n').count() + 1;
    format!("line {line}")
}

fn build(raw: RawConfig, base_dir: &Path) -> Result<RunConfig, CliError> {
    let mut problem = raw.problem;
    match &mut problem {
        ProblemConfig::Libsvm { path, path_env, n, lambda, .. } => {
            if let Some(var) = path_env {
                if let Ok(value) = std::env::var(var.as_str()) {
                    *path = PathBuf::from(value);
                }
            }
            *path = resolve(base_dir, path);
            if !path.is_file() {
                return Err(config_error("problem.path", format!("{} does not exist", path.display())));
            }
            if *n == 0 {
                return Err(config_error("problem.n", "need at least one device"));
            }
            check_lambda(*lambda)?;
        }
        ProblemConfig::Synthetic { lambda, n, m, d, .. } => {
            if *n == 0 || *m == 0 || *d == 0 {
                return Err(config_error("problem", "n, m and d must be positive"));
            }
            check_lambda(*lambda)?;
        }
        ProblemConfig::Quadratic { n, d, .. } => {
            if *n == 0 || *d == 0 {
                return Err(config_error("problem", "n and d must be positive"));
            }
        }
    }

    let mut x0 = raw.x0;
    if let X0Config::File { path } = &mut x0 {
        *path = resolve(base_dir, path);
        if !path.is_file() {
            return Err(config_error("x0.path", format!("{} does not exist", path.display())));
        }
    }
    let mut reference = raw.reference;
    if let ReferenceConfig::File { path } = &mut reference {
        // A missing reference file is reported when the run needs it.
        *path = resolve(base_dir, path);
    }
    let mut output = raw.output;
    output.trace = output.trace.map(|p| resolve(base_dir, &p));
    output.summary = output.summary.map(|p| resolve(base_dir, &p));

    let bit_policy =
        BitPolicy { float_bits: raw.bit_policy.float_bits, shared_seed_indices: raw.bit_policy.shared_seed_indices };
    bit_policy.validate().map_err(|e| config_error("bit_policy.float_bits", e))?;

    Ok(RunConfig {
        problem,
        method: method_config(raw.method)?,
        x0,
        reference,
        output,
        bit_policy,
        lyapunov: raw.run.lyapunov,
        wallclock: raw.run.wallclock,
        base_dir: base_dir.to_path_buf(),
    })
}

fn check_lambda(lambda: f64) -> Result<(), CliError> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(config_error("problem.lambda", format!("must be finite and >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        eprintln!("warning: lambda = 0 gives no strong convexity guarantee");
    }
    Ok(())
}

fn method_config(raw: MethodSection) -> Result<MethodConfig, CliError> {
    let method: Method = raw.name.parse().map_err(|e| config_error("method.name", e))?;
    let mut cfg = MethodConfig::new(method);
    cfg.option = match raw.option {
        OptionName::Projected => UpdateOption::Projected,
        OptionName::Corrected => UpdateOption::Corrected,
    };
    cfg.alpha = raw.alpha.unwrap_or(cfg.alpha);
    cfg.eta = raw.eta.unwrap_or(cfg.eta);
    cfg.p = raw.p.unwrap_or(cfg.p);
    cfg.tau = raw.tau;
    cfg.ls_c = raw.ls_c.unwrap_or(cfg.ls_c);
    cfg.ls_gamma = raw.ls_gamma.unwrap_or(cfg.ls_gamma);
    cfg.ls_max_trials = raw.ls_max_trials.unwrap_or(cfg.ls_max_trials);
    cfg.hess_lipschitz = raw.hess_lipschitz;
    if let Some(c) = raw.compressor {
        cfg.compressor = c.spec();
    }
    if let Some(c) = raw.compressor_master {
        cfg.compressor_master = c.spec();
    }
    cfg.h_init = raw.h_init.map(|h| match h {
        InitName::Zero => HessianInit::Zero,
        InitName::LocalAtX0 => HessianInit::LocalAtX0,
        InitName::Optimal => HessianInit::Optimal,
    });
    cfg.seed = raw.seed.unwrap_or(cfg.seed);
    cfg.max_rounds = raw.max_rounds.unwrap_or(cfg.max_rounds);
    cfg.tol_grad = raw.tol_grad.unwrap_or(cfg.tol_grad);
    cfg.tol_gap = raw.tol_gap;
    cfg.parallel = raw.parallel.unwrap_or(cfg.parallel);
    Ok(cfg)
}

/// Problem instance built from a config.
pub enum BuiltProblem {
    Logistic(LogisticRegression),
    Quadratic(Quadratic),
}

impl BuiltProblem {
    pub fn as_problem(&self) -> &dyn Problem {
        match self {
            BuiltProblem::Logistic(p) => p,
            BuiltProblem::Quadratic(q) => q,
        }
    }
}

impl RunConfig {
    pub fn build_problem(&self) -> Result<BuiltProblem, CliError> {
        let data_error = |e: fednl::Error| config_error("problem", e);
        Ok(match &self.problem {
            ProblemConfig::Libsvm { path, n, lambda, dim, .. } => {
                let rows = parse_libsvm(path, *dim).map_err(data_error)?;
                let data = partition(rows.rows(), *n).and_then(|plan| plan.apply(&rows)).map_err(data_error)?;
                BuiltProblem::Logistic(LogisticRegression::new(data, *lambda).map_err(data_error)?)
            }
            &ProblemConfig::Synthetic { alpha, beta, n, m, d, iid, seed, lambda } => {
                let spec = SyntheticSpec { alpha, beta, n, m, d, iid, seed };
                let data = generate_synthetic(&spec).map_err(data_error)?;
                BuiltProblem::Logistic(LogisticRegression::new(data, lambda).map_err(data_error)?)
            }
            &ProblemConfig::Quadratic { n, d, seed } => {
                let mut rng = StreamKey::server(seed, 0, Purpose::DataGeneration).stream();
                BuiltProblem::Quadratic(Quadratic::random(n, d, &mut rng).map_err(data_error)?)
            }
        })
    }

    pub fn initial_point(&self, problem: &dyn Problem) -> Result<Vector, CliError> {
        let d = problem.dim();
        let x0 = match &self.x0 {
            X0Config::Zeros => Vector::zeros(d),
            X0Config::Constant { value } => Vector::from_element(d, *value),
            X0Config::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| config_error("x0.path", e))?;
                let values: Vec<f64> = serde_json::from_str(&text).map_err(|e| config_error("x0.path", e))?;
                Vector::from_vec(values)
            }
            X0Config::NewtonWarm { steps } => {
                newton_iterate(problem, &Vector::zeros(d), *steps).map_err(CliError::Runtime)?
            }
        };
        if x0.len() != d {
            return Err(config_error("x0", format!("expected {d} entries, got {}", x0.len())));
        }
        if !x0.iter().all(|v| v.is_finite()) {
            return Err(config_error("x0", "entries must be finite"));
        }
        Ok(x0)
    }

    pub fn reference(&self, problem: &dyn Problem) -> Result<fednl::Reference, CliError> {
        match &self.reference {
            ReferenceConfig::Newton20 => fednl::Reference::newton(problem, 20).map_err(CliError::Runtime),
            ReferenceConfig::File { path } => {
                let file = ReferenceFile::read(path)?;
                if file.x_star.len() != problem.dim() {
                    return Err(config_error(
                        "reference.path",
                        format!("reference has dimension {}, problem has {}", file.x_star.len(), problem.dim()),
                    ));
                }
                Ok(file.into_reference())
            }
        }
    }

    /// Validates the method against the built problem.
    pub fn validate_method(&self, problem: &dyn Problem) -> Result<(), CliError> {
        self.method.validate(problem.n_devices(), problem.dim()).map_err(|e| config_error("method", e))
    }
}
