//! Reference methods: classical Newton, Newton Zero, Newton Star, gradient
//! descent with step `1/L`, and gradient descent with backtracking.

use crate::accounting::MessageKind;
use crate::linalg::SpdFactor;
use crate::methods::learning::{for_devices, mean_scalar, mean_vector};
use crate::methods::{Context, Engine, Method, RoundCost};
use crate::{Error, Result, Vector};

enum Kind {
    Newton,
    /// Fixed preconditioner: `∇²f(x^0)` for Newton Zero, `∇²f(x*)` for
    /// Newton Star.
    Fixed(SpdFactor),
    Gd {
        step: f64,
    },
    GdLs,
}

pub(crate) struct Baseline<'a> {
    ctx: Context<'a>,
    kind: Kind,
    x: Vector,
}

impl<'a> Baseline<'a> {
    pub fn new(ctx: Context<'a>, x0: &Vector) -> Result<(Self, RoundCost)> {
        let problem = ctx.problem;
        let hessian_bits = ctx.cost(MessageKind::SymmetricDense { d: ctx.d() });
        let (kind, init_up) = match ctx.cfg.method {
            Method::Newton => (Kind::Newton, 0),
            Method::N0 => (Kind::Fixed(SpdFactor::new(&problem.hess(x0))?), hessian_bits),
            Method::Ns => (Kind::Fixed(SpdFactor::new(&problem.hess(&ctx.reference.x_star))?), hessian_bits),
            Method::Gd => (Kind::Gd { step: 1.0 / problem.smoothness() }, 0),
            Method::GdLs => (Kind::GdLs, 0),
            other => unreachable!("{other} is not a baseline"),
        };
        Ok((Self { ctx, kind, x: x0.clone() }, RoundCost::uniform(init_up, 0)))
    }
}

impl Engine for Baseline<'_> {
    fn model(&self) -> &Vector {
        &self.x
    }

    fn step(&mut self, _round: usize) -> Result<RoundCost> {
        let Context { problem, cfg, .. } = self.ctx;
        let d = self.ctx.d();
        let x = &self.x;
        let needs_hessian = matches!(self.kind, Kind::Newton);
        let needs_value = matches!(self.kind, Kind::GdLs);
        let mut states = vec![(); problem.n_devices()];
        let reports = for_devices(cfg.parallel, &mut states, |i, _| {
            let grad = problem.grad_i(i, x);
            let hess = needs_hessian.then(|| problem.hess_i(i, x));
            let value = if needs_value { problem.value_i(i, x) } else { 0.0 };
            Ok((grad, hess, value))
        })?;
        let grad = mean_vector(reports.iter().map(|r| &r.0), d);

        let vector = self.ctx.cost(MessageKind::DenseVector { d });
        let scalar = self.ctx.cost(MessageKind::Scalar);
        let model = self.ctx.cost(MessageKind::Model { d });
        let (next, cost) = match &self.kind {
            Kind::Newton => {
                let hessians: Vec<_> = reports.iter().map(|r| r.1.as_ref().expect("requested")).collect();
                let h = crate::linalg::SymmetricMatrix::mean(hessians);
                let next = x - SpdFactor::new(&h)?.solve(&grad)?;
                let hess_bits = self.ctx.cost(MessageKind::SymmetricDense { d });
                (next, RoundCost::uniform(vector + hess_bits, model))
            }
            Kind::Fixed(factor) => (x - factor.solve(&grad)?, RoundCost::uniform(vector, model)),
            Kind::Gd { step } => (x - &grad * *step, RoundCost::uniform(vector, model)),
            Kind::GdLs => {
                let f = mean_scalar(reports.iter().map(|r| r.2));
                let slope = -grad.norm_squared();
                let mut t = 1.0;
                let mut accepted = None;
                for trial in 1..=cfg.ls_max_trials {
                    let candidate = x - &grad * t;
                    if problem.value(&candidate) <= f + cfg.ls_c * t * slope {
                        accepted = Some((candidate, trial));
                        break;
                    }
                    t *= cfg.ls_gamma;
                }
                let (next, trials) = accepted.ok_or(Error::LineSearchStall { trials: cfg.ls_max_trials })?;
                let cost = RoundCost {
                    up: (scalar + vector + trials as u64 * scalar) as f64,
                    down: (model + vector + trials as u64 * scalar) as f64,
                    trials: Some(trials),
                };
                (next, cost)
            }
        };
        self.x = next;
        Ok(cost)
    }
}
