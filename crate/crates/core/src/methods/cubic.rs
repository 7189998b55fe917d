//! Cubic-regularized Newton subproblem.

use crate::linalg::{eigh, SymmetricMatrix};
use crate::{Error, Result, Vector};

const MAX_ITERATIONS: usize = 200;

/// `T(h) = ⟨g, h⟩ + ½⟨(H + l·I)h, h⟩ + (M/6)‖h‖³`.
pub fn cubic_model(g: &Vector, h_mat: &SymmetricMatrix, l: f64, m: f64, h: &Vector) -> f64 {
    let norm = h.norm();
    g.dot(h) + 0.5 * (h.dot(&h_mat.mul_vec(h)) + l * norm * norm) + m / 6.0 * norm.powi(3)
}

/// `∇T(h) = g + (H + l·I)h + (M/2)‖h‖h`.
pub fn cubic_gradient(g: &Vector, h_mat: &SymmetricMatrix, l: f64, m: f64, h: &Vector) -> Vector {
    g + h_mat.mul_vec(h) + h * (l + 0.5 * m * h.norm())
}

/// Global minimizer of [`cubic_model`] for `H + l·I ≻ 0` and `M ≥ 0`.
///
/// With `QΛQᵀ = H + l·I`, the minimizer is `h = −Q(Λ + (M/2)r)⁻¹Qᵀg` where
/// `r = ‖h‖` is the unique root of `φ(r) = ‖(Λ + (M/2)r)⁻¹Qᵀg‖ − r` on
/// `[0, ‖g‖/λ_min]`. The root is found by Newton's method, falling back to
/// bisection whenever a step leaves the bracket.
pub fn cubic_subproblem(g: &Vector, h_mat: &SymmetricMatrix, l: f64, m: f64) -> Result<Vector> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!("cubic weight must be finite and >= 0, got {m}")));
    }
    let mut a = h_mat.clone();
    a.add_diagonal(l);
    let eig = eigh(&a)?;
    let lambda_min = eig.min_value();
    if !(lambda_min > 0.0) {
        return Err(Error::InvalidInput(format!("H + lI is not positive definite (λ_min = {lambda_min})")));
    }
    let d = g.len();
    let gq = eig.vectors.tr_mul(g);
    let g_norm = gq.norm();
    if g_norm == 0.0 {
        return Ok(Vector::zeros(d));
    }
    let half_m = 0.5 * m;
    let step_norm = |r: f64| -> f64 {
        gq.iter().zip(&eig.values).map(|(c, lam)| (c / (lam + half_m * r)).powi(2)).sum::<f64>().sqrt()
    };

    let r = if m == 0.0 {
        0.0
    } else {
        let (mut lo, mut hi) = (0.0, g_norm / lambda_min);
        let mut r = hi.min(step_norm(0.0));
        for _ in 0..MAX_ITERATIONS {
            let norm = step_norm(r);
            let phi = norm - r;
            if phi == 0.0 {
                break;
            }
            if phi > 0.0 {
                lo = r;
            } else {
                hi = r;
            }
            // φ'(r) = −(M/2) Σ c²/(λ + Mr/2)³ / ‖·‖ − 1.
            let cubes: f64 = gq.iter().zip(&eig.values).map(|(c, lam)| c * c / (lam + half_m * r).powi(3)).sum();
            let dphi = -half_m * cubes / norm - 1.0;
            let mut next = r - phi / dphi;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - r).abs() <= f64::EPSILON * r.max(f64::MIN_POSITIVE) || hi - lo <= f64::EPSILON * hi {
                r = next;
                break;
            }
            r = next;
        }
        r
    };

    let coeffs = Vector::from_iterator(d, gq.iter().zip(&eig.values).map(|(c, lam)| -c / (lam + half_m * r)));
    Ok(&eig.vectors * coeffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::solve_spd;
    use crate::rng::{Purpose, StreamKey};
    use nalgebra::DMatrix;
    use rand::Rng;

    fn random_spd(rng: &mut impl Rng, d: usize) -> SymmetricMatrix {
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let mut a = SymmetricMatrix::gram(&b, 1.0);
        a.add_diagonal(0.1);
        a
    }

    #[test]
    fn zero_weight_is_a_newton_step() {
        let mut rng = StreamKey::new(1, 0, 0, Purpose::Test).stream();
        let h = random_spd(&mut rng, 6);
        let g = Vector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
        let step = cubic_subproblem(&g, &h, 0.3, 0.0).unwrap();
        let mut shifted = h.clone();
        shifted.add_diagonal(0.3);
        let newton = -solve_spd(&shifted, &g).unwrap();
        assert!((step - newton).norm() < 1e-12);
    }

    #[test]
    fn zero_gradient_gives_zero_step() {
        let h = SymmetricMatrix::identity(3);
        assert_eq!(cubic_subproblem(&Vector::zeros(3), &h, 0.0, 2.0).unwrap(), Vector::zeros(3));
    }

    #[test]
    fn rejects_indefinite_systems() {
        let h = SymmetricMatrix::from_diagonal(&[1.0, -2.0]);
        let g = Vector::from_vec(vec![1.0, 1.0]);
        assert!(matches!(cubic_subproblem(&g, &h, 0.5, 1.0), Err(Error::InvalidInput(_))));
        assert!(matches!(cubic_subproblem(&g, &h, 3.0, -1.0), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn one_dimensional_closed_form() {
        // T(h) = g h + a h²/2 + M|h|³/6 has root h = −2g / (a + √(a² + 2M|g|)).
        let (g, a, m) = (3.0, 0.5, 4.0);
        let step = cubic_subproblem(&Vector::from_vec(vec![g]), &SymmetricMatrix::from_diagonal(&[a]), 0.0, m).unwrap();
        let expected = -2.0 * g / (a + (a * a + 2.0 * m * g).sqrt());
        assert!((step[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn stationary_on_random_instances() {
        let mut rng = StreamKey::new(2, 0, 0, Purpose::Test).stream();
        for _ in 0..200 {
            let d = rng.random_range(1..12);
            let h = random_spd(&mut rng, d);
            let scale = 10f64.powf(rng.random_range(-3.0..3.0));
            let g = Vector::from_fn(d, |_, _| scale * rng.random_range(-1.0..1.0));
            let m = 10f64.powf(rng.random_range(-3.0..3.0));
            let l = rng.random_range(0.0..1.0);
            let step = cubic_subproblem(&g, &h, l, m).unwrap();
            let residual = cubic_gradient(&g, &h, l, m, &step).norm();
            assert!(residual <= 1e-9 * (1.0 + g.norm()), "residual {residual}");
            assert!(cubic_model(&g, &h, l, m, &step) <= 0.0);
        }
    }
}
