//! Pieces shared by the Hessian-learning engines.

use rayon::prelude::*;

use crate::compress::{CompressedMatrix, CompressorSpec};
use crate::linalg::{project_psd_mu, SpdFactor, SymmetricMatrix};
use crate::methods::{HessianInit, Reference, UpdateOption};
use crate::oracle::Problem;
use crate::rng::{Purpose, StreamKey};
use crate::{Error, Result, Vector};

/// Runs `f` on every device state, in parallel when asked. Results come back
/// in device order either way.
pub(crate) fn for_devices<S, T, F>(parallel: bool, states: &mut [S], f: F) -> Result<Vec<T>>
where
    S: Send,
    T: Send,
    F: Fn(usize, &mut S) -> Result<T> + Sync + Send,
{
    if parallel {
        states.par_iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
    } else {
        states.iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
    }
}

/// What a device reports after one Hessian-learning step.
pub(crate) struct Learned {
    /// `C(∇²f_i(x) − H_i)`.
    pub s: CompressedMatrix,
    /// `‖H_i − ∇²f_i(x)‖_F`, measured before the update.
    pub l: f64,
    pub hess: SymmetricMatrix,
}

/// Device side of Hessian learning at `x`: compresses the residual and
/// moves `h_i` by `alpha` along it.
pub(crate) fn learn(
    problem: &dyn Problem,
    i: usize,
    x: &Vector,
    h_i: &mut SymmetricMatrix,
    compressor: &CompressorSpec,
    alpha: f64,
    key: StreamKey,
) -> Result<Learned> {
    let hess = problem.hess_i(i, x);
    let diff = hess.sub(h_i);
    let l = diff.frobenius_norm();
    let s = compressor.compress_matrix(&diff, &mut key.stream())?;
    if alpha != 0.0 {
        s.add_to(h_i, alpha);
    }
    Ok(Learned { s, l, hess })
}

pub(crate) fn compression_key(seed: u64, device: usize, round: usize) -> StreamKey {
    StreamKey::new(seed, device as u64, round as u64, Purpose::HessianCompression)
}

pub(crate) fn initial_hessians(
    problem: &dyn Problem,
    init: HessianInit,
    x0: &Vector,
    reference: &Reference,
) -> Vec<SymmetricMatrix> {
    let n = problem.n_devices();
    match init {
        HessianInit::Zero => vec![SymmetricMatrix::zeros(problem.dim()); n],
        HessianInit::LocalAtX0 => (0..n).map(|i| problem.hess_i(i, x0)).collect(),
        HessianInit::Optimal => (0..n).map(|i| problem.hess_i(i, &reference.x_star)).collect(),
    }
}

/// Factor of `[H]_μ` or `H + l·I`.
pub(crate) fn server_system(h: &SymmetricMatrix, option: UpdateOption, mu: f64, l: f64) -> Result<SpdFactor> {
    match option {
        UpdateOption::Projected => SpdFactor::new(&project_psd_mu(h, mu)?),
        UpdateOption::Corrected => {
            let mut m = h.clone();
            m.add_diagonal(l);
            SpdFactor::new(&m)
        }
    }
}

/// Checks that a server aggregate matches the mean of the device copies.
pub(crate) fn debug_check_mean(what: &str, server: &SymmetricMatrix, devices: &[&SymmetricMatrix]) {
    if cfg!(debug_assertions) {
        let mean = SymmetricMatrix::mean(devices.iter().copied());
        let err = server.frobenius_distance(&mean);
        assert!(err <= 1e-10 * mean.frobenius_norm().max(1.0), "{what} drifted from the device mean by {err:e}");
    }
}

pub(crate) fn debug_check_scalar(what: &str, server: f64, devices: impl Iterator<Item = f64>) {
    if cfg!(debug_assertions) {
        let values: Vec<f64> = devices.collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!((server - mean).abs() <= 1e-10 * mean.abs().max(1.0), "{what} drifted: {server} vs {mean}");
    }
}

/// Mean of per-device vectors in device order.
pub(crate) fn mean_vector<'a>(items: impl IntoIterator<Item = &'a Vector>, d: usize) -> Vector {
    let mut acc = Vector::zeros(d);
    let mut count = 0usize;
    for v in items {
        acc += v;
        count += 1;
    }
    acc / count as f64
}

pub(crate) fn mean_scalar(items: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = 0.0;
    let mut count = 0usize;
    for v in items {
        acc += v;
        count += 1;
    }
    acc / count as f64
}

pub(crate) fn require_positive_mu(mu: f64, option: UpdateOption) -> Result<()> {
    if option == UpdateOption::Projected && !(mu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "the projected update needs a strongly convex problem, got mu = {mu}"
        )));
    }
    Ok(())
}
