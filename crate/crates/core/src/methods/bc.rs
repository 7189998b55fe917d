//! FedNL with bidirectional compression: Bernoulli-scheduled gradients on the
//! uplink and a compressed model delta on the downlink.

use rand::Rng;

use crate::accounting::MessageKind;
use crate::linalg::SymmetricMatrix;
use crate::methods::learning::{
    compression_key, debug_check_mean, for_devices, initial_hessians, learn, mean_scalar, mean_vector,
    require_positive_mu, server_system,
};
use crate::methods::{Context, Engine, HessianInit, RoundCost};
use crate::rng::{Purpose, StreamKey};
use crate::{CompressedMatrix, Result, Vector};

struct Device {
    h: SymmetricMatrix,
    /// `∇f_i(w)` from the last round that sent fresh gradients.
    grad_w: Vector,
}

pub(crate) struct FedNlBc<'a> {
    ctx: Context<'a>,
    /// Last server iterate `x^k`, reported in the trace.
    x: Vector,
    z: Vector,
    w: Vector,
    fresh: bool,
    devices: Vec<Device>,
    h: SymmetricMatrix,
}

struct Report {
    g: Vector,
    s: CompressedMatrix,
    l: f64,
}

impl<'a> FedNlBc<'a> {
    pub fn new(ctx: Context<'a>, x0: &Vector) -> Result<(Self, RoundCost)> {
        require_positive_mu(ctx.problem.mu(), ctx.cfg.option)?;
        let devices: Vec<Device> = initial_hessians(ctx.problem, ctx.cfg.h_init(), x0, ctx.reference)
            .into_iter()
            .map(|h| Device { h, grad_w: Vector::zeros(x0.len()) })
            .collect();
        let h = SymmetricMatrix::mean(devices.iter().map(|dev| &dev.h));
        let up = match ctx.cfg.h_init() {
            HessianInit::Zero => 0,
            _ => ctx.cost(MessageKind::SymmetricDense { d: ctx.d() }),
        };
        let engine = Self { ctx, x: x0.clone(), z: x0.clone(), w: x0.clone(), fresh: true, devices, h };
        Ok((engine, RoundCost::uniform(up, 0)))
    }
}

impl Engine for FedNlBc<'_> {
    fn model(&self) -> &Vector {
        &self.x
    }

    fn local_hessians(&self) -> Option<Vec<&SymmetricMatrix>> {
        Some(self.devices.iter().map(|dev| &dev.h).collect())
    }

    fn step(&mut self, round: usize) -> Result<RoundCost> {
        let Context { problem, cfg, .. } = self.ctx;
        let (n, d) = (self.ctx.n(), self.ctx.d());
        let (z, w, fresh) = (&self.z, &self.w, self.fresh);
        let reports = for_devices(cfg.parallel, &mut self.devices, |i, dev| {
            let g = if fresh {
                dev.grad_w = problem.grad_i(i, z);
                dev.grad_w.clone()
            } else {
                dev.h.mul_vec(&(z - w)) + &dev.grad_w
            };
            let key = compression_key(cfg.seed, i, round);
            let learned = learn(problem, i, z, &mut dev.h, &cfg.compressor, cfg.alpha, key)?;
            Ok(Report { g, s: learned.s, l: learned.l })
        })?;

        let g = mean_vector(reports.iter().map(|r| &r.g), d);
        let l = mean_scalar(reports.iter().map(|r| r.l));
        let x = &self.z - server_system(&self.h, cfg.option, problem.mu(), l)?.solve(&g)?;
        for r in &reports {
            r.s.add_to(&mut self.h, cfg.alpha / n as f64);
        }
        debug_check_mean("H", &self.h, &self.devices.iter().map(|dev| &dev.h).collect::<Vec<_>>());
        if fresh {
            self.w = self.z.clone();
        }

        let mut rng = StreamKey::server(cfg.seed, round as u64, Purpose::ModelCompression).stream();
        let s = cfg.compressor_master.compress_vector(&(&x - &self.z), &mut rng)?;
        self.z += s.densify() * cfg.eta;
        let mut coin = StreamKey::server(cfg.seed, round as u64, Purpose::Bernoulli).stream();
        self.fresh = coin.random::<f64>() < cfg.p;
        self.x = x;

        let grad_bits = if fresh { self.ctx.cost(MessageKind::DenseVector { d }) } else { 0 };
        let s_bits: u64 = reports.iter().map(|r| r.s.bits(&self.ctx.policy)).sum();
        let fixed = grad_bits + self.ctx.cost(MessageKind::Scalar);
        let up = (n as u64 * fixed + s_bits) as f64 / n as f64;
        let down = (s.bits(&self.ctx.policy) + self.ctx.cost(MessageKind::Bit)) as f64;
        Ok(RoundCost { up, down, trials: None })
    }
}
