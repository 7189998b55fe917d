//! Round engines and the run loop.
//!
//! Every engine simulates one server and `n` devices in a single process. A
//! round has a device phase (independent per device, optionally parallel)
//! and a server phase that aggregates the reports in device order, so the
//! floating-point result never depends on scheduling.

mod baseline;
mod bc;
pub mod config;
pub mod cubic;
mod fednl;
mod learning;
mod pp;

use std::time::Instant;

pub use config::{check_learning_rate, lyapunov_constants, HessianInit, Method, MethodConfig, UpdateOption};
pub use cubic::{cubic_gradient, cubic_model, cubic_subproblem};

use crate::accounting::{BitPolicy, LyapunovConstants, Trace, TraceRecord};
use crate::linalg::{solve_spd, SymmetricMatrix};
use crate::oracle::Problem;
use crate::{Error, Result, Vector};

/// Optimal model and value used to report gaps and distances.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub x_star: Vector,
    pub f_star: f64,
}

impl Reference {
    /// `steps` iterations of classical Newton from the origin.
    pub fn newton(problem: &dyn Problem, steps: usize) -> Result<Self> {
        let x_star = newton_iterate(problem, &Vector::zeros(problem.dim()), steps)?;
        let f_star = problem.value(&x_star);
        Ok(Self { x_star, f_star })
    }

    pub fn optimal_hessians(&self, problem: &dyn Problem) -> Vec<SymmetricMatrix> {
        (0..problem.n_devices()).map(|i| problem.hess_i(i, &self.x_star)).collect()
    }
}

/// `steps` iterations of classical Newton from `x0`.
pub fn newton_iterate(problem: &dyn Problem, x0: &Vector, steps: usize) -> Result<Vector> {
    let mut x = x0.clone();
    for _ in 0..steps {
        let g = problem.grad(&x);
        if g.iter().all(|v| *v == 0.0) {
            break;
        }
        x -= solve_spd(&problem.hess(&x), &g)?;
    }
    Ok(x)
}

/// Run-level switches that do not change the iterates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub policy: BitPolicy,
    /// Fill the `lyapunov` column (FedNL, FedNL-LS and FedNL-CR only). Costs
    /// one extra Hessian evaluation per device and round.
    pub lyapunov: bool,
    /// Record elapsed time; when off the column is zero so traces are
    /// byte-reproducible.
    pub wallclock: bool,
}

/// Bits sent in one round, per node.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct RoundCost {
    pub up: f64,
    pub down: f64,
    pub trials: Option<usize>,
}

impl RoundCost {
    /// Per-node cost when every device sends `up` bits and receives `down`.
    pub fn uniform(up: u64, down: u64) -> Self {
        Self { up: up as f64, down: down as f64, trials: None }
    }
}

pub(crate) trait Engine {
    /// Model reported in the trace for the current round.
    fn model(&self) -> &Vector;
    fn step(&mut self, round: usize) -> Result<RoundCost>;
    fn local_hessians(&self) -> Option<Vec<&SymmetricMatrix>> {
        None
    }
}

#[derive(Clone, Copy)]
pub(crate) struct Context<'a> {
    pub problem: &'a dyn Problem,
    pub cfg: &'a MethodConfig,
    pub policy: BitPolicy,
    pub reference: &'a Reference,
}

impl Context<'_> {
    pub fn n(&self) -> usize {
        self.problem.n_devices()
    }

    pub fn d(&self) -> usize {
        self.problem.dim()
    }

    pub fn cost(&self, kind: crate::MessageKind) -> u64 {
        self.policy.cost_of(kind)
    }
}

fn build<'a>(ctx: Context<'a>, x0: &Vector) -> Result<(Box<dyn Engine + 'a>, RoundCost)> {
    Ok(match ctx.cfg.method {
        Method::FedNl | Method::FedNlLs | Method::FedNlCr => {
            let (e, c) = fednl::FedNl::new(ctx, x0)?;
            (Box::new(e), c)
        }
        Method::FedNlPp => {
            let (e, c) = pp::FedNlPp::new(ctx, x0)?;
            (Box::new(e), c)
        }
        Method::FedNlBc => {
            let (e, c) = bc::FedNlBc::new(ctx, x0)?;
            (Box::new(e), c)
        }
        Method::N0 | Method::Ns | Method::Newton | Method::Gd | Method::GdLs => {
            let (e, c) = baseline::Baseline::new(ctx, x0)?;
            (Box::new(e), c)
        }
    })
}

/// Runs `cfg` from `x0` until `‖∇f(x^k)‖ ≤ tol_grad`, the optional gap
/// tolerance, or `max_rounds`. Record `k` describes `x^k` and the bits spent
/// to produce it; round 0 carries the initialization traffic.
pub fn run(
    cfg: &MethodConfig,
    problem: &dyn Problem,
    x0: &Vector,
    reference: &Reference,
    opts: &RunOptions,
) -> Result<Trace> {
    let (n, d) = (problem.n_devices(), problem.dim());
    cfg.validate(n, d)?;
    opts.policy.validate()?;
    if x0.len() != d || !x0.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput(format!("x0 must be a finite vector of length {d}")));
    }
    if reference.x_star.len() != d {
        return Err(Error::InvalidInput(format!("reference has length {}, expected {d}", reference.x_star.len())));
    }
    let ctx = Context { problem, cfg, policy: opts.policy, reference };
    let start = Instant::now();
    let (mut engine, init) = build(ctx, x0)?;

    let learns = cfg.method.learns_hessians();
    let optimal = learns.then(|| reference.optimal_hessians(problem));
    let lyapunov = opts.lyapunov && matches!(cfg.method, Method::FedNl | Method::FedNlLs | Method::FedNlCr);
    let mut l_hat: f64 = 0.0;

    let mut trace = Trace::default();
    let (mut up, mut down) = (init.up, init.down);
    for round in 0..=cfg.max_rounds {
        let x = engine.model().clone();
        let f_gap = problem.value(&x) - reference.f_star;
        let grad_norm = problem.grad(&x).norm();
        let dist_sq = (&x - &reference.x_star).norm_squared();
        let hessian_error = match (&optimal, engine.local_hessians()) {
            (Some(opt), Some(local)) => {
                let total: f64 = local.iter().zip(opt).map(|(h, o)| h.sub(o).frobenius_norm_sq()).sum();
                Some(total / n as f64)
            }
            _ => None,
        };
        if lyapunov && dist_sq > 0.0 {
            let opt = optimal.as_ref().expect("learning methods carry optimal Hessians");
            let dist = dist_sq.sqrt();
            for (i, o) in opt.iter().enumerate() {
                l_hat = l_hat.max(problem.hess_i(i, &x).frobenius_distance(o) / dist);
            }
        }
        trace.records.push(TraceRecord {
            round,
            f_gap,
            grad_norm,
            dist_sq,
            lyapunov: None,
            hessian_error,
            bits_up_cum: up,
            bits_down_cum: down,
            wallclock_ms: if opts.wallclock { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 },
        });
        trace.iterates.push(x);

        let done = round == cfg.max_rounds
            || grad_norm == 0.0
            || grad_norm <= cfg.tol_grad
            || cfg.tol_gap.is_some_and(|tol| f_gap <= tol);
        if done {
            break;
        }
        let cost = engine.step(round)?;
        up += cost.up;
        down += cost.down;
        if let Some(t) = cost.trials {
            trace.line_search_trials.push(t);
        }
    }

    if lyapunov {
        let (a, b) = lyapunov_constants(cfg.compressor.matrix_class(d)?, cfg.alpha);
        let constants = LyapunovConstants { a, b, l_hat };
        for rec in &mut trace.records {
            let h = rec.hessian_error.expect("learning methods report Hessian errors");
            rec.lyapunov = Some(h + 6.0 * b * l_hat * l_hat * rec.dist_sq);
        }
        trace.lyapunov_constants = Some(constants);
    }
    Ok(trace)
}
