use std::fmt;
use std::str::FromStr;

use crate::compress::{CompressorClass, CompressorKind, CompressorSpec};
use crate::{Error, Result};

/// Tolerance when matching a learning rate against `1 − √(1 − δ)`.
const RATE_MATCH_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    FedNl,
    FedNlPp,
    FedNlLs,
    FedNlCr,
    FedNlBc,
    N0,
    Ns,
    Newton,
    Gd,
    GdLs,
}

impl Method {
    pub const ALL: [Method; 10] = [
        Method::FedNl,
        Method::FedNlPp,
        Method::FedNlLs,
        Method::FedNlCr,
        Method::FedNlBc,
        Method::N0,
        Method::Ns,
        Method::Newton,
        Method::Gd,
        Method::GdLs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::FedNl => "fednl",
            Method::FedNlPp => "fednl_pp",
            Method::FedNlLs => "fednl_ls",
            Method::FedNlCr => "fednl_cr",
            Method::FedNlBc => "fednl_bc",
            Method::N0 => "n0",
            Method::Ns => "ns",
            Method::Newton => "newton",
            Method::Gd => "gd",
            Method::GdLs => "gd_ls",
        }
    }

    /// Whether the method learns local Hessians with a compressor.
    pub fn learns_hessians(self) -> bool {
        matches!(self, Method::FedNl | Method::FedNlPp | Method::FedNlLs | Method::FedNlCr | Method::FedNlBc)
    }

    fn default_h_init(self) -> HessianInit {
        match self {
            Method::FedNlCr => HessianInit::Zero,
            Method::Ns => HessianInit::Optimal,
            _ => HessianInit::LocalAtX0,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method {s:?}")))
    }
}

/// Server update used by FedNL and FedNL-BC.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum UpdateOption {
    /// Projected estimate `[H]_μ`.
    #[default]
    Projected,
    /// Corrected estimate `H + l·I`.
    Corrected,
}

/// Initial local Hessian estimates `H_i^0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HessianInit {
    Zero,
    /// `∇²f_i(x^0)`.
    LocalAtX0,
    /// `∇²f_i(x*)`, taken from the reference solution.
    Optimal,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodConfig {
    pub method: Method,
    /// Ignored by FedNL-PP, which always uses the corrected estimate.
    pub option: UpdateOption,
    /// Hessian learning rate.
    pub alpha: f64,
    /// Model learning rate (FedNL-BC).
    pub eta: f64,
    /// Probability of sending fresh gradients (FedNL-BC).
    pub p: f64,
    /// Devices participating per round (FedNL-PP); `None` means all.
    pub tau: Option<usize>,
    pub ls_c: f64,
    pub ls_gamma: f64,
    pub ls_max_trials: usize,
    /// Hessian Lipschitz constant for FedNL-CR; `None` uses the problem's bound.
    pub hess_lipschitz: Option<f64>,
    pub compressor: CompressorSpec,
    /// Model compressor of the server (FedNL-BC).
    pub compressor_master: CompressorSpec,
    /// `None` uses the method's default.
    pub h_init: Option<HessianInit>,
    pub seed: u64,
    pub max_rounds: usize,
    pub tol_grad: f64,
    /// Optional stop once `f(x^k) − f* ≤ tol_gap`.
    pub tol_gap: Option<f64>,
    /// Run the device phase on the rayon pool.
    pub parallel: bool,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            method: Method::FedNl,
            option: UpdateOption::Projected,
            alpha: 1.0,
            eta: 1.0,
            p: 1.0,
            tau: None,
            ls_c: 0.5,
            ls_gamma: 0.5,
            ls_max_trials: 60,
            hess_lipschitz: None,
            compressor: CompressorSpec::rank_r(1),
            compressor_master: CompressorSpec::identity(),
            h_init: None,
            seed: 42,
            max_rounds: 100,
            tol_grad: 1e-12,
            tol_gap: None,
            parallel: true,
        }
    }
}

impl MethodConfig {
    pub fn new(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn h_init(&self) -> HessianInit {
        self.h_init.unwrap_or(self.method.default_h_init())
    }

    pub fn tau(&self, n: usize) -> usize {
        self.tau.unwrap_or(n)
    }

    /// Checks the configuration against a problem with `n` devices in
    /// dimension `d`.
    pub fn validate(&self, n: usize, d: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.max_rounds > 0 && !(self.tol_grad >= 0.0) {
            return bad(format!("tol_grad must be >= 0, got {}", self.tol_grad));
        }
        if let Some(gap) = self.tol_gap {
            if !(gap >= 0.0) {
                return bad(format!("tol_gap must be >= 0, got {gap}"));
            }
        }
        let m = self.method;
        if m.learns_hessians() {
            check_learning_rate("alpha", self.alpha, self.compressor.matrix_class(d)?)?;
        }
        if matches!(m, Method::FedNlLs | Method::GdLs) {
            if !(self.ls_c > 0.0 && self.ls_c <= 0.5) {
                return bad(format!("ls_c must lie in (0, 1/2], got {}", self.ls_c));
            }
            if !(self.ls_gamma > 0.0 && self.ls_gamma < 1.0) {
                return bad(format!("ls_gamma must lie in (0, 1), got {}", self.ls_gamma));
            }
            if self.ls_max_trials == 0 {
                return bad("ls_max_trials must be positive".into());
            }
        }
        if m == Method::FedNlPp {
            let tau = self.tau(n);
            if tau == 0 || tau > n {
                return bad(format!("tau must lie in [1, {n}], got {tau}"));
            }
        }
        if m == Method::FedNlCr {
            if let Some(h) = self.hess_lipschitz {
                if !(h >= 0.0 && h.is_finite()) {
                    return bad(format!("hess_lipschitz must be finite and >= 0, got {h}"));
                }
            }
        }
        if m == Method::FedNlBc {
            if !(self.p > 0.0 && self.p <= 1.0) {
                return bad(format!("p must lie in (0, 1], got {}", self.p));
            }
            if self.compressor_master.kind == CompressorKind::Zero {
                return bad("the model compressor cannot be Zero".into());
            }
            check_learning_rate("eta", self.eta, self.compressor_master.vector_class(d)?)?;
        }
        Ok(())
    }
}

/// `C(δ)` requires a rate of `1 − √(1 − δ)` or `1`; `B(ω)` requires
/// `0 < rate ≤ 1/(ω + 1)`.
pub fn check_learning_rate(name: &str, rate: f64, class: CompressorClass) -> Result<()> {
    match class {
        CompressorClass::Contractive { delta } => {
            let small = 1.0 - (1.0 - delta).sqrt();
            if (rate - small).abs() <= RATE_MATCH_TOL || rate == 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} = {rate} must be 1 or 1 - sqrt(1 - delta) = {small} for a C({delta}) compressor"
                )))
            }
        }
        CompressorClass::Unbiased { omega } => {
            let max = 1.0 / (omega + 1.0);
            if rate > 0.0 && rate <= max {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} = {rate} must lie in (0, {max}] for a B({omega}) compressor"
                )))
            }
        }
    }
}

/// Constants `(A, B)` of the Lyapunov contraction for a Hessian compressor
/// of the given class and learning rate `alpha`.
pub fn lyapunov_constants(class: CompressorClass, alpha: f64) -> (f64, f64) {
    match class {
        CompressorClass::Contractive { delta } if alpha == 1.0 => (delta / 4.0, 6.0 / delta - 3.5),
        CompressorClass::Contractive { .. } => (alpha * alpha, alpha),
        CompressorClass::Unbiased { .. } => (alpha, alpha),
    }
}
