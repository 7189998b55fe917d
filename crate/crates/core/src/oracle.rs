//! Finite-sum problems `f(x) = (1/n) Σ_i f_i(x)` with exact local oracles.

use nalgebra::DMatrix;

use crate::data::Dataset;
use crate::linalg::{eigh, solve_spd, SymmetricMatrix};
use crate::{Error, Result, Vector};

/// A problem distributed over `n` devices.
///
/// Global quantities are plain averages of the local ones, accumulated in
/// device order so results do not depend on how devices were scheduled.
pub trait Problem: Sync {
    fn n_devices(&self) -> usize;
    fn dim(&self) -> usize;
    /// Strong-convexity constant of every `f_i`.
    fn mu(&self) -> f64;
    /// Upper bound on the spectral-norm Lipschitz constant of every `∇²f_i`.
    fn hess_lipschitz(&self) -> f64;
    /// Smoothness constant `L` of `f`, used for the gradient-descent step.
    fn smoothness(&self) -> f64;

    fn value_i(&self, i: usize, x: &Vector) -> f64;
    fn grad_i(&self, i: usize, x: &Vector) -> Vector;
    fn hess_i(&self, i: usize, x: &Vector) -> SymmetricMatrix;

    fn value(&self, x: &Vector) -> f64 {
        let n = self.n_devices();
        (0..n).map(|i| self.value_i(i, x)).sum::<f64>() / n as f64
    }

    fn grad(&self, x: &Vector) -> Vector {
        let n = self.n_devices();
        let mut g = Vector::zeros(self.dim());
        for i in 0..n {
            g += self.grad_i(i, x);
        }
        g / n as f64
    }

    fn hess(&self, x: &Vector) -> SymmetricMatrix {
        let hs: Vec<_> = (0..self.n_devices()).map(|i| self.hess_i(i, x)).collect();
        SymmetricMatrix::mean(&hs)
    }
}

/// `log(1 + eᵗ)` without overflow.
pub fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// `f_i(x) = (1/m) Σ_j log(1 + exp(−b_ij a_ijᵀx)) + (λ/2)‖x‖²`.
#[derive(Clone, Debug)]
pub struct LogisticRegression {
    data: Dataset,
    lambda: f64,
    hess_lipschitz: f64,
    smoothness: f64,
}

impl LogisticRegression {
    pub fn new(data: Dataset, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let hess_lipschitz = hess_lipschitz_bound(&data)?;
        let smoothness = logistic_smoothness(&data, lambda)?;
        Ok(Self { data, lambda, hess_lipschitz, smoothness })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn margins(&self, i: usize, x: &Vector) -> (Vector, &[f64]) {
        let dev = &self.data.devices[i];
        (&dev.features * x, &dev.labels)
    }
}

impl Problem for LogisticRegression {
    fn n_devices(&self) -> usize {
        self.data.n_devices()
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn mu(&self) -> f64 {
        self.lambda
    }

    fn hess_lipschitz(&self) -> f64 {
        self.hess_lipschitz
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn value_i(&self, i: usize, x: &Vector) -> f64 {
        let (t, b) = self.margins(i, x);
        let loss: f64 = t.iter().zip(b).map(|(t, b)| softplus(-b * t)).sum();
        loss / b.len() as f64 + 0.5 * self.lambda * x.norm_squared()
    }

    fn grad_i(&self, i: usize, x: &Vector) -> Vector {
        let (t, b) = self.margins(i, x);
        let m = b.len() as f64;
        let coeff = Vector::from_iterator(b.len(), t.iter().zip(b).map(|(t, b)| -b * sigmoid(-b * t) / m));
        self.data.devices[i].features.tr_mul(&coeff) + self.lambda * x
    }

    fn hess_i(&self, i: usize, x: &Vector) -> SymmetricMatrix {
        let (t, b) = self.margins(i, x);
        let m = b.len() as f64;
        let features = &self.data.devices[i].features;
        let mut scaled = features.clone();
        for (r, t) in t.iter().enumerate() {
            let s = sigmoid(*t);
            let w = (s * (1.0 - s)).sqrt();
            scaled.row_mut(r).scale_mut(w);
        }
        let mut h = SymmetricMatrix::gram(&scaled, 1.0 / m);
        h.add_diagonal(self.lambda);
        h
    }
}

/// `(1/(6√3 m)) max_i Σ_j ‖a_ij‖³`, from `|σ''| ≤ 1/(6√3)`.
pub fn hess_lipschitz_bound(data: &Dataset) -> Result<f64> {
    if data.total_rows() == 0 {
        return Err(Error::InvalidInput("empty dataset".into()));
    }
    let c = 1.0 / (6.0 * 3f64.sqrt());
    Ok(data
        .devices
        .iter()
        .map(|dev| {
            let cubes: f64 = dev.features.row_iter().map(|r| r.norm().powi(3)).sum();
            c * cubes / dev.rows() as f64
        })
        .fold(0.0, f64::max))
}

/// `λ_max((1/(4N)) Σ a aᵀ) + λ` over all `N` rows.
fn logistic_smoothness(data: &Dataset, lambda: f64) -> Result<f64> {
    let total = data.total_rows();
    let mut gram = SymmetricMatrix::zeros(data.dim());
    for dev in &data.devices {
        gram.add_scaled(1.0, &SymmetricMatrix::gram(&dev.features, 1.0 / (4.0 * total as f64)));
    }
    Ok(eigh(&gram)?.values[0] + lambda)
}

/// `f_i(x) = ½xᵀA_i x − b_iᵀx` with every `A_i` positive definite.
#[derive(Clone, Debug)]
pub struct Quadratic {
    a: Vec<SymmetricMatrix>,
    b: Vec<Vector>,
    mu: f64,
    smoothness: f64,
}

impl Quadratic {
    pub fn new(a: Vec<SymmetricMatrix>, b: Vec<Vector>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InvalidInput(format!("{} matrices for {} vectors", a.len(), b.len())));
        }
        let d = a[0].dim();
        let mut mu = f64::INFINITY;
        for (i, (ai, bi)) in a.iter().zip(&b).enumerate() {
            if ai.dim() != d || bi.len() != d {
                return Err(Error::InvalidInput(format!("device {i} has inconsistent dimensions")));
            }
            let min = eigh(ai)?.min_value();
            if min <= 0.0 {
                return Err(Error::InvalidInput(format!("A_{i} is not positive definite (λ_min = {min})")));
            }
            mu = mu.min(min);
        }
        let smoothness = eigh(&SymmetricMatrix::mean(&a))?.values[0];
        Ok(Self { a, b, mu, smoothness })
    }

    /// Random instance with `A_i = BᵀB/d + I` and standard normal `b_i`.
    pub fn random(n: usize, d: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        use rand_distr::{Distribution, StandardNormal};
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            let m = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
            let mut ai = SymmetricMatrix::gram(&m, 1.0 / d as f64);
            ai.add_diagonal(1.0);
            a.push(ai);
            b.push(Vector::from_fn(d, |_, _| StandardNormal.sample(rng)));
        }
        Self::new(a, b)
    }

    /// `(avg A_i)⁻¹ (avg b_i)`.
    pub fn minimizer(&self) -> Result<Vector> {
        let n = self.b.len() as f64;
        let mut b = Vector::zeros(self.dim());
        for bi in &self.b {
            b += bi;
        }
        solve_spd(&SymmetricMatrix::mean(&self.a), &(b / n))
    }
}

impl Problem for Quadratic {
    fn n_devices(&self) -> usize {
        self.a.len()
    }

    fn dim(&self) -> usize {
        self.a[0].dim()
    }

    fn mu(&self) -> f64 {
        self.mu
    }

    fn hess_lipschitz(&self) -> f64 {
        0.0
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn value_i(&self, i: usize, x: &Vector) -> f64 {
        0.5 * x.dot(&self.a[i].mul_vec(x)) - self.b[i].dot(x)
    }

    fn grad_i(&self, i: usize, x: &Vector) -> Vector {
        self.a[i].mul_vec(x) - &self.b[i]
    }

    fn hess_i(&self, i: usize, _x: &Vector) -> SymmetricMatrix {
        self.a[i].clone()
    }
}
