//! FedNL and its line-search and cubic-regularized variants. All three share
//! the device phase; they differ in how the server turns `H^k` into a step.

use crate::accounting::MessageKind;
use crate::linalg::{project_psd_mu, solve_spd, SymmetricMatrix};
use crate::methods::cubic::cubic_subproblem;
use crate::methods::learning::{
    compression_key, debug_check_mean, for_devices, initial_hessians, learn, mean_scalar, mean_vector,
    require_positive_mu, server_system,
};
use crate::methods::{Context, Engine, HessianInit, Method, RoundCost, UpdateOption};
use crate::{Error, Result, Vector};

enum Step {
    Newton(UpdateOption),
    LineSearch,
    Cubic { m: f64 },
}

pub(crate) struct FedNl<'a> {
    ctx: Context<'a>,
    step: Step,
    x: Vector,
    local: Vec<SymmetricMatrix>,
    h: SymmetricMatrix,
}

struct Report {
    grad: Vector,
    value: f64,
    s: crate::CompressedMatrix,
    l: f64,
}

impl<'a> FedNl<'a> {
    pub fn new(ctx: Context<'a>, x0: &Vector) -> Result<(Self, RoundCost)> {
        let cfg = ctx.cfg;
        let step = match cfg.method {
            Method::FedNl => Step::Newton(cfg.option),
            Method::FedNlLs => Step::LineSearch,
            Method::FedNlCr => Step::Cubic { m: cfg.hess_lipschitz.unwrap_or(ctx.problem.hess_lipschitz()) },
            other => unreachable!("{other} is not a FedNL variant"),
        };
        match step {
            Step::Newton(option) => require_positive_mu(ctx.problem.mu(), option)?,
            Step::LineSearch => require_positive_mu(ctx.problem.mu(), UpdateOption::Projected)?,
            Step::Cubic { .. } => {}
        }
        let local = initial_hessians(ctx.problem, cfg.h_init(), x0, ctx.reference);
        let h = SymmetricMatrix::mean(&local);
        let init_up = match cfg.h_init() {
            HessianInit::Zero => 0,
            _ => ctx.cost(MessageKind::SymmetricDense { d: ctx.d() }),
        };
        Ok((Self { ctx, step, x: x0.clone(), local, h }, RoundCost::uniform(init_up, 0)))
    }

    fn line_search(&self, f: f64, grad: &Vector) -> Result<(Vector, usize)> {
        let cfg = self.ctx.cfg;
        let problem = self.ctx.problem;
        let direction = -solve_spd(&project_psd_mu(&self.h, problem.mu())?, grad)?;
        let slope = grad.dot(&direction);
        let mut t = 1.0;
        for trial in 1..=cfg.ls_max_trials {
            let candidate = &self.x + &direction * t;
            if problem.value(&candidate) <= f + cfg.ls_c * t * slope {
                return Ok((candidate, trial));
            }
            t *= cfg.ls_gamma;
        }
        Err(Error::LineSearchStall { trials: cfg.ls_max_trials })
    }
}

impl Engine for FedNl<'_> {
    fn model(&self) -> &Vector {
        &self.x
    }

    fn local_hessians(&self) -> Option<Vec<&SymmetricMatrix>> {
        Some(self.local.iter().collect())
    }

    fn step(&mut self, round: usize) -> Result<RoundCost> {
        let Context { problem, cfg, .. } = self.ctx;
        let n = self.ctx.n();
        let d = self.ctx.d();
        let x = &self.x;
        let wants_value = matches!(self.step, Step::LineSearch);
        let reports = for_devices(cfg.parallel, &mut self.local, |i, h_i| {
            let grad = problem.grad_i(i, x);
            let value = if wants_value { problem.value_i(i, x) } else { 0.0 };
            let key = compression_key(cfg.seed, i, round);
            let learned = learn(problem, i, x, h_i, &cfg.compressor, cfg.alpha, key)?;
            Ok(Report { grad, value, s: learned.s, l: learned.l })
        })?;

        let grad = mean_vector(reports.iter().map(|r| &r.grad), d);
        let l = mean_scalar(reports.iter().map(|r| r.l));
        let mut trials = None;
        let next = match self.step {
            Step::Newton(option) => &self.x - server_system(&self.h, option, problem.mu(), l)?.solve(&grad)?,
            Step::LineSearch => {
                let f = mean_scalar(reports.iter().map(|r| r.value));
                let (next, t) = self.line_search(f, &grad)?;
                trials = Some(t);
                next
            }
            Step::Cubic { m } => &self.x + cubic_subproblem(&grad, &self.h, l, m)?,
        };
        for r in &reports {
            r.s.add_to(&mut self.h, cfg.alpha / n as f64);
        }
        debug_check_mean("H", &self.h, &self.local.iter().collect::<Vec<_>>());
        self.x = next;

        let vector = self.ctx.cost(MessageKind::DenseVector { d });
        let scalar = self.ctx.cost(MessageKind::Scalar);
        let model = self.ctx.cost(MessageKind::Model { d });
        let s_bits: u64 = reports.iter().map(|r| r.s.bits(&self.ctx.policy)).sum();
        let per_node = |fixed: u64| (n as u64 * fixed + s_bits) as f64 / n as f64;
        Ok(match trials {
            // f_i(x^k), ∇f_i(x^k), S_i and one value per trial; the server
            // sends the model, the direction and one step size per trial.
            Some(t) => RoundCost {
                up: per_node(scalar + vector + t as u64 * scalar),
                down: (model + vector + t as u64 * scalar) as f64,
                trials,
            },
            None => RoundCost { up: per_node(vector + scalar), down: model as f64, trials: None },
        })
    }
}
