//! FedNL with partial participation.

use rand::Rng;

use crate::accounting::MessageKind;
use crate::linalg::{SpdFactor, SymmetricMatrix};
use crate::methods::learning::{
    compression_key, debug_check_mean, debug_check_scalar, for_devices, initial_hessians, learn, mean_scalar,
    mean_vector,
};
use crate::methods::{Context, Engine, HessianInit, RoundCost};
use crate::rng::{Purpose, StreamKey};
use crate::{CompressedMatrix, Result, Vector};

struct Device {
    h: SymmetricMatrix,
    l: f64,
    w: Vector,
    /// `(H_i + l_i·I)w_i − ∇f_i(w_i)`.
    g: Vector,
}

pub(crate) struct FedNlPp<'a> {
    ctx: Context<'a>,
    x: Vector,
    devices: Vec<Device>,
    h: SymmetricMatrix,
    l: f64,
    g: Vector,
}

struct Delta {
    s: CompressedMatrix,
    dl: f64,
    dg: Vector,
}

fn corrected_gradient(h: &SymmetricMatrix, l: f64, w: &Vector, grad: &Vector) -> Vector {
    h.mul_vec(w) + w * l - grad
}

/// Uniform `tau`-subset of `0..n` in increasing order.
pub(crate) fn sample_devices(n: usize, tau: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..tau {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(tau);
    idx.sort_unstable();
    idx
}

impl<'a> FedNlPp<'a> {
    pub fn new(ctx: Context<'a>, x0: &Vector) -> Result<(Self, RoundCost)> {
        let problem = ctx.problem;
        let d = ctx.d();
        let devices: Vec<Device> = initial_hessians(problem, ctx.cfg.h_init(), x0, ctx.reference)
            .into_iter()
            .enumerate()
            .map(|(i, h)| {
                let l = problem.hess_i(i, x0).sub(&h).frobenius_norm();
                let g = corrected_gradient(&h, l, x0, &problem.grad_i(i, x0));
                Device { h, l, w: x0.clone(), g }
            })
            .collect();
        let h = SymmetricMatrix::mean(devices.iter().map(|dev| &dev.h));
        let l = mean_scalar(devices.iter().map(|dev| dev.l));
        let g = mean_vector(devices.iter().map(|dev| &dev.g), d);
        let hessian = match ctx.cfg.h_init() {
            HessianInit::Zero => 0,
            _ => ctx.cost(MessageKind::SymmetricDense { d }),
        };
        let up = hessian + ctx.cost(MessageKind::Scalar) + ctx.cost(MessageKind::DenseVector { d });
        let down = ctx.cost(MessageKind::Model { d });
        Ok((Self { ctx, x: x0.clone(), devices, h, l, g }, RoundCost::uniform(up, down)))
    }
}

impl Engine for FedNlPp<'_> {
    fn model(&self) -> &Vector {
        &self.x
    }

    fn local_hessians(&self) -> Option<Vec<&SymmetricMatrix>> {
        Some(self.devices.iter().map(|dev| &dev.h).collect())
    }

    fn step(&mut self, round: usize) -> Result<RoundCost> {
        let Context { problem, cfg, .. } = self.ctx;
        let (n, d) = (self.ctx.n(), self.ctx.d());
        let tau = cfg.tau(n);

        let mut system = self.h.clone();
        system.add_diagonal(self.l);
        let x = SpdFactor::new(&system)?.solve(&self.g)?;

        let mut rng = StreamKey::server(cfg.seed, round as u64, Purpose::DeviceSampling).stream();
        let selected = sample_devices(n, tau, &mut rng);
        let mut active = vec![false; n];
        for &i in &selected {
            active[i] = true;
        }

        let deltas = for_devices(cfg.parallel, &mut self.devices, |i, dev| {
            if !active[i] {
                return Ok(None);
            }
            dev.w = x.clone();
            let key = compression_key(cfg.seed, i, round);
            let learned = learn(problem, i, &dev.w, &mut dev.h, &cfg.compressor, cfg.alpha, key)?;
            let l = dev.h.frobenius_distance(&learned.hess);
            let g = corrected_gradient(&dev.h, l, &dev.w, &problem.grad_i(i, &dev.w));
            let delta = Delta { s: learned.s, dl: l - dev.l, dg: &g - &dev.g };
            dev.l = l;
            dev.g = g;
            Ok(Some(delta))
        })?;

        let inv_n = 1.0 / n as f64;
        let mut s_bits = 0;
        for delta in deltas.iter().flatten() {
            self.g += &delta.dg * inv_n;
            delta.s.add_to(&mut self.h, cfg.alpha * inv_n);
            self.l += delta.dl * inv_n;
            s_bits += delta.s.bits(&self.ctx.policy);
        }
        debug_check_mean("H", &self.h, &self.devices.iter().map(|dev| &dev.h).collect::<Vec<_>>());
        debug_check_scalar("l", self.l, self.devices.iter().map(|dev| dev.l));
        if cfg!(debug_assertions) {
            let mean = mean_vector(self.devices.iter().map(|dev| &dev.g), d);
            assert!((&self.g - &mean).norm() <= 1e-10 * mean.norm().max(1.0), "g drifted from the device mean");
        }
        self.x = x;

        // Participants send S_i, the change in l_i and the change in g_i; the
        // server sends the new model to participants only.
        let fixed = self.ctx.cost(MessageKind::Scalar) + self.ctx.cost(MessageKind::DenseVector { d });
        let up = (tau as u64 * fixed + s_bits) as f64 / n as f64;
        let down = (tau as u64 * self.ctx.cost(MessageKind::Model { d })) as f64 / n as f64;
        Ok(RoundCost { up, down, trials: None })
    }
}
