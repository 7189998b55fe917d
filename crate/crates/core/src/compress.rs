//! Compression operators for symmetric matrices and vectors.
//!
//! Matrix operators come in two classes:
//!
//! * contractive `C(δ)`: deterministic, `‖C(M)‖_F ≤ ‖M‖_F` and
//!   `‖C(M) − M‖²_F ≤ (1 − δ)‖M‖²_F` (Top-K, Rank-R, identity, zero);
//! * unbiased `B(ω)`: randomized, `E[C(M)] = M` and
//!   `E‖C(M) − M‖²_F ≤ ω‖M‖²_F` (Rand-K; random dithering for vectors).
//!
//! Top-K and Rand-K act on the lower triangle only and mirror the result,
//! so symmetric inputs give symmetric outputs.

use rand::Rng;

use crate::accounting::MessageKind;
use crate::linalg::{eigh, lower_index, lower_len, lower_position, SymmetricMatrix};
use crate::{Error, Result, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CompressorKind {
    TopK,
    RankR,
    RandK,
    Identity,
    Zero,
    Dithering,
}

/// Declared class of a compression operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CompressorClass {
    Contractive { delta: f64 },
    Unbiased { omega: f64 },
}

/// How δ of a triangular Top-K is reported.
///
/// `FullSquare` (`K/d²`) is the bound the operator provably satisfies in the
/// Frobenius norm and is the declared class. `Triangular` (`K/(d(d+1)/2)`) is
/// the fraction of transmitted lower-triangle entries; it is only a reporting
/// convention, since mirrored off-diagonal entries carry double weight in
/// `‖·‖_F` and can break the contraction inequality at that δ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DeltaConvention {
    #[default]
    FullSquare,
    Triangular,
}

/// A compression operator with its parameter (`K`, `R` or number of levels `s`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressorSpec {
    pub kind: CompressorKind,
    pub param: usize,
    /// Rescale outputs whose norm exceeds the input norm.
    pub scale_to_norm: bool,
}

impl CompressorSpec {
    pub fn new(kind: CompressorKind, param: usize) -> Self {
        Self { kind, param, scale_to_norm: false }
    }

    pub fn top_k(k: usize) -> Self {
        Self::new(CompressorKind::TopK, k)
    }

    pub fn rank_r(r: usize) -> Self {
        Self::new(CompressorKind::RankR, r)
    }

    pub fn rand_k(k: usize) -> Self {
        Self::new(CompressorKind::RandK, k)
    }

    pub fn dithering(s: usize) -> Self {
        Self::new(CompressorKind::Dithering, s)
    }

    pub fn identity() -> Self {
        Self::new(CompressorKind::Identity, 0)
    }

    pub fn zero() -> Self {
        Self::new(CompressorKind::Zero, 0)
    }

    pub fn scaled(mut self) -> Self {
        self.scale_to_norm = true;
        self
    }

    pub fn is_randomized(&self) -> bool {
        matches!(self.kind, CompressorKind::RandK | CompressorKind::Dithering)
    }

    /// Class of the operator on `d × d` symmetric matrices.
    pub fn matrix_class(&self, d: usize) -> Result<CompressorClass> {
        let n = lower_len(d);
        let k = self.param;
        let check = |lo: usize, hi: usize, what: &str| -> Result<()> {
            if k < lo || k > hi {
                Err(Error::InvalidParameter(format!("{what} must lie in [{lo}, {hi}], got {k}")))
            } else {
                Ok(())
            }
        };
        Ok(match self.kind {
            CompressorKind::TopK => {
                check(1, n, "Top-K parameter K")?;
                CompressorClass::Contractive { delta: (k as f64 / (d * d) as f64).min(1.0) }
            }
            CompressorKind::RankR => {
                check(1, d, "Rank-R parameter R")?;
                CompressorClass::Contractive { delta: k as f64 / d as f64 }
            }
            CompressorKind::RandK => {
                check(1, n, "Rand-K parameter K")?;
                CompressorClass::Unbiased { omega: n as f64 / k as f64 - 1.0 }
            }
            CompressorKind::Identity => CompressorClass::Contractive { delta: 1.0 },
            CompressorKind::Zero => CompressorClass::Contractive { delta: 0.0 },
            CompressorKind::Dithering => {
                return Err(Error::InvalidParameter("random dithering applies to vectors only".into()))
            }
        })
    }

    /// Class of the operator on length-`d` vectors.
    pub fn vector_class(&self, d: usize) -> Result<CompressorClass> {
        let k = self.param;
        let in_range = |what: &str| -> Result<()> {
            if k == 0 || k > d {
                Err(Error::InvalidParameter(format!("{what} must lie in [1, {d}], got {k}")))
            } else {
                Ok(())
            }
        };
        Ok(match self.kind {
            CompressorKind::TopK => {
                in_range("Top-K parameter K")?;
                CompressorClass::Contractive { delta: k as f64 / d as f64 }
            }
            CompressorKind::RandK => {
                in_range("Rand-K parameter K")?;
                CompressorClass::Unbiased { omega: d as f64 / k as f64 - 1.0 }
            }
            CompressorKind::Dithering => {
                if k == 0 {
                    return Err(Error::InvalidParameter("dithering needs s >= 1 levels".into()));
                }
                let (d, s) = (d as f64, k as f64);
                CompressorClass::Unbiased { omega: (d / (s * s)).min(d.sqrt() / s) }
            }
            CompressorKind::Identity => CompressorClass::Contractive { delta: 1.0 },
            CompressorKind::Zero => CompressorClass::Contractive { delta: 0.0 },
            CompressorKind::RankR => return Err(Error::InvalidParameter("Rank-R applies to matrices only".into())),
        })
    }

    /// δ of a matrix compressor under the given reporting convention.
    pub fn reported_delta(&self, d: usize, convention: DeltaConvention) -> Result<Option<f64>> {
        Ok(match (self.matrix_class(d)?, self.kind, convention) {
            (CompressorClass::Contractive { .. }, CompressorKind::TopK, DeltaConvention::Triangular) => {
                Some(self.param as f64 / lower_len(d) as f64)
            }
            (CompressorClass::Contractive { delta }, _, _) => Some(delta),
            (CompressorClass::Unbiased { .. }, _, _) => None,
        })
    }

    pub fn compress_matrix(&self, m: &SymmetricMatrix, rng: &mut impl Rng) -> Result<CompressedMatrix> {
        self.matrix_class(m.dim())?;
        let out = match self.kind {
            CompressorKind::TopK => compress_topk(m, self.param)?,
            CompressorKind::RankR => compress_rankr(m, self.param)?,
            CompressorKind::RandK => compress_randk(m, self.param, rng)?,
            CompressorKind::Identity => CompressedMatrix {
                dim: m.dim(),
                payload: MatrixPayload::Dense(m.clone()),
                message: MessageKind::SymmetricDense { d: m.dim() },
            },
            CompressorKind::Zero => CompressedMatrix::zero(m.dim()),
            CompressorKind::Dithering => unreachable!("rejected by matrix_class"),
        };
        Ok(if self.scale_to_norm { scale_to_contract(out, m) } else { out })
    }

    pub fn compress_vector(&self, v: &Vector, rng: &mut impl Rng) -> Result<CompressedVector> {
        let d = v.len();
        self.vector_class(d)?;
        let out = match self.kind {
            CompressorKind::TopK => {
                let mut order: Vec<usize> = (0..d).collect();
                order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
                let mut kept: Vec<(usize, f64)> = order[..self.param].iter().map(|&i| (i, v[i])).collect();
                kept.sort_by_key(|e| e.0);
                CompressedVector {
                    dim: d,
                    payload: VectorPayload::Sparse(kept),
                    message: MessageKind::SparseVector { d, k: self.param, random: false },
                }
            }
            CompressorKind::RandK => {
                let k = self.param;
                let scale = d as f64 / k as f64;
                let mut picked = partial_shuffle(d, k, rng);
                picked.sort_unstable();
                CompressedVector {
                    dim: d,
                    payload: VectorPayload::Sparse(picked.into_iter().map(|i| (i, scale * v[i])).collect()),
                    message: MessageKind::SparseVector { d, k, random: true },
                }
            }
            CompressorKind::Dithering => compress_dither(v, self.param, rng)?,
            CompressorKind::Identity => CompressedVector {
                dim: d,
                payload: VectorPayload::Dense(v.clone()),
                message: MessageKind::DenseVector { d },
            },
            CompressorKind::Zero => {
                CompressedVector { dim: d, payload: VectorPayload::Zero, message: MessageKind::Empty }
            }
            CompressorKind::RankR => unreachable!("rejected by vector_class"),
        };
        Ok(if self.scale_to_norm { scale_vector_to_contract(out, v) } else { out })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MatrixPayload {
    Zero,
    /// Lower-triangular `(row, col, value)` triplets with `col <= row`.
    Sparse(Vec<(usize, usize, f64)>),
    /// Symmetric eigenpairs `(σ, u)` representing `Σ σ u uᵀ`.
    LowRank(Vec<(f64, Vector)>),
    Dense(SymmetricMatrix),
}

/// Output of a matrix compressor together with the shape of its message.
#[derive(Clone, Debug, PartialEq)]
pub struct CompressedMatrix {
    pub dim: usize,
    pub payload: MatrixPayload,
    pub message: MessageKind,
}

impl CompressedMatrix {
    pub fn zero(dim: usize) -> Self {
        Self { dim, payload: MatrixPayload::Zero, message: MessageKind::Empty }
    }

    pub fn bits(&self, policy: &crate::BitPolicy) -> u64 {
        policy.cost_of(self.message)
    }

    /// `target += coeff · self`.
    pub fn add_to(&self, target: &mut SymmetricMatrix, coeff: f64) {
        match &self.payload {
            MatrixPayload::Zero => {}
            MatrixPayload::Sparse(entries) => {
                for &(r, c, v) in entries {
                    let cur = target.get(r, c);
                    target.set(r, c, cur + coeff * v);
                }
            }
            MatrixPayload::LowRank(pairs) => {
                for (sigma, u) in pairs {
                    target.add_rank_one(coeff * sigma, u);
                }
            }
            MatrixPayload::Dense(m) => target.add_scaled(coeff, m),
        }
    }

    pub fn densify(&self) -> SymmetricMatrix {
        let mut out = SymmetricMatrix::zeros(self.dim);
        self.add_to(&mut out, 1.0);
        out
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        match &mut self.payload {
            MatrixPayload::Zero => {}
            MatrixPayload::Sparse(entries) => entries.iter_mut().for_each(|e| e.2 *= factor),
            MatrixPayload::LowRank(pairs) => pairs.iter_mut().for_each(|p| p.0 *= factor),
            MatrixPayload::Dense(m) => m.scale(factor),
        }
        self
    }
}

/// Keeps the `k` largest-magnitude lower-triangular entries, ties broken
/// towards the lower linear index, and mirrors them.
pub fn compress_topk(m: &SymmetricMatrix, k: usize) -> Result<CompressedMatrix> {
    let d = m.dim();
    let n = lower_len(d);
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("Top-K parameter K must lie in [1, {n}], got {k}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let value = |t: usize| {
        let (r, c) = lower_position(t);
        m.get(r, c)
    };
    order.sort_by(|&a, &b| value(b).abs().total_cmp(&value(a).abs()).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order[..k].to_vec();
    kept.sort_unstable();
    let entries = kept
        .into_iter()
        .map(|t| {
            let (r, c) = lower_position(t);
            (r, c, m.get(r, c))
        })
        .collect();
    Ok(CompressedMatrix {
        dim: d,
        payload: MatrixPayload::Sparse(entries),
        message: MessageKind::TopK { d, k, triangular: true },
    })
}

/// Best rank-`r` approximation in Frobenius norm: the `r` eigenpairs of
/// largest |eigenvalue|.
pub fn compress_rankr(m: &SymmetricMatrix, r: usize) -> Result<CompressedMatrix> {
    let d = m.dim();
    if r == 0 || r > d {
        return Err(Error::InvalidParameter(format!("Rank-R parameter R must lie in [1, {d}], got {r}")));
    }
    let eig = eigh(m)?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.values[b].abs().total_cmp(&eig.values[a].abs()));
    let pairs = order[..r].iter().map(|&i| (eig.values[i], eig.vector(i))).collect();
    Ok(CompressedMatrix { dim: d, payload: MatrixPayload::LowRank(pairs), message: MessageKind::RankR { d, r } })
}

/// Keeps `k` uniformly random lower-triangular entries, scaled by `N/k` with
/// `N = d(d+1)/2`.
pub fn compress_randk(m: &SymmetricMatrix, k: usize, rng: &mut impl Rng) -> Result<CompressedMatrix> {
    let d = m.dim();
    let n = lower_len(d);
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("Rand-K parameter K must lie in [1, {n}], got {k}")));
    }
    let scale = n as f64 / k as f64;
    let mut picked = partial_shuffle(n, k, rng);
    picked.sort_unstable();
    let entries = picked
        .into_iter()
        .map(|t| {
            let (r, c) = lower_position(t);
            debug_assert_eq!(lower_index(r, c), t);
            (r, c, scale * m.get(r, c))
        })
        .collect();
    Ok(CompressedMatrix { dim: d, payload: MatrixPayload::Sparse(entries), message: MessageKind::RandK { d, k } })
}

/// Uniform `k`-subset of `0..n` by a partial Fisher–Yates shuffle.
fn partial_shuffle(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

#[derive(Clone, Debug, PartialEq)]
pub enum VectorPayload {
    Zero,
    Dense(Vector),
    Sparse(Vec<(usize, f64)>),
    /// `norm · level_i / s` per coordinate; `level_i` carries the sign.
    Dithered {
        norm: f64,
        s: usize,
        levels: Vec<i64>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressedVector {
    pub dim: usize,
    pub payload: VectorPayload,
    pub message: MessageKind,
}

impl CompressedVector {
    pub fn bits(&self, policy: &crate::BitPolicy) -> u64 {
        policy.cost_of(self.message)
    }

    pub fn densify(&self) -> Vector {
        match &self.payload {
            VectorPayload::Zero => Vector::zeros(self.dim),
            VectorPayload::Dense(v) => v.clone(),
            VectorPayload::Sparse(entries) => {
                let mut out = Vector::zeros(self.dim);
                for &(i, v) in entries {
                    out[i] = v;
                }
                out
            }
            VectorPayload::Dithered { norm, s, levels } => {
                Vector::from_iterator(self.dim, levels.iter().map(|&l| norm * l as f64 / *s as f64))
            }
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        match &mut self.payload {
            VectorPayload::Zero => {}
            VectorPayload::Dense(v) => *v *= factor,
            VectorPayload::Sparse(entries) => entries.iter_mut().for_each(|e| e.1 *= factor),
            VectorPayload::Dithered { norm, .. } => *norm *= factor,
        }
        self
    }
}

/// Random dithering with `s` levels and the Euclidean norm:
/// `sign(v_i) · ‖v‖ · ξ_i / s`, where `ξ_i` rounds `s|v_i|/‖v‖` up or down to
/// an integer level with probabilities that keep it unbiased.
pub fn compress_dither(v: &Vector, s: usize, rng: &mut impl Rng) -> Result<CompressedVector> {
    if s == 0 {
        return Err(Error::InvalidParameter("dithering needs s >= 1 levels".into()));
    }
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidInput("dithering input has non-finite entries".into()));
    }
    let d = v.len();
    let norm = v.norm();
    let levels = if norm == 0.0 {
        vec![0; d]
    } else {
        v.iter()
            .map(|&x| {
                let r = (x.abs() / norm * s as f64).min(s as f64);
                let lower = r.floor();
                let up = rng.random::<f64>() < r - lower;
                let level = lower as i64 + i64::from(up);
                if x < 0.0 {
                    -level
                } else {
                    level
                }
            })
            .collect()
    };
    Ok(CompressedVector {
        dim: d,
        payload: VectorPayload::Dithered { norm, s, levels },
        message: MessageKind::Dithered { d, s },
    })
}

/// Rescales `compressed` by `‖M‖_F / ‖C(M)‖_F` when it is longer than `m`.
pub fn scale_to_contract(compressed: CompressedMatrix, m: &SymmetricMatrix) -> CompressedMatrix {
    let out_norm = compressed.densify().frobenius_norm();
    let in_norm = m.frobenius_norm();
    if out_norm > in_norm {
        compressed.scaled(in_norm / out_norm)
    } else {
        compressed
    }
}

/// Vector counterpart of [`scale_to_contract`].
pub fn scale_vector_to_contract(compressed: CompressedVector, v: &Vector) -> CompressedVector {
    let out_norm = compressed.densify().norm();
    let in_norm = v.norm();
    if out_norm > in_norm {
        compressed.scaled(in_norm / out_norm)
    } else {
        compressed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamKey};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sym(rows: &[f64], d: usize) -> SymmetricMatrix {
        SymmetricMatrix::from_dense(&DMatrix::from_row_slice(d, d, rows)).unwrap()
    }

    fn random_symmetric(rng: &mut impl Rng, d: usize) -> SymmetricMatrix {
        SymmetricMatrix::from_lower_fn(d, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn topk_keeps_largest_triangular_entries() {
        let m = sym(&[3.0, -1.0, -1.0, 2.0], 2);
        let c = compress_topk(&m, 2).unwrap().densify();
        assert_eq!(c, SymmetricMatrix::from_diagonal(&[3.0, 2.0]));
        assert_eq!(compress_topk(&m, 3).unwrap().densify(), m);
        assert!(matches!(compress_topk(&m, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(compress_topk(&m, 4), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn topk_breaks_ties_by_lower_index() {
        let m = SymmetricMatrix::from_lower_fn(3, |_, _| 1.0);
        let c = compress_topk(&m, 2).unwrap();
        assert_eq!(c.payload, MatrixPayload::Sparse(vec![(0, 0, 1.0), (1, 0, 1.0)]));
    }

    #[test]
    fn topk_random_10x10_k5() {
        let mut rng = ChaCha8Rng::seed_from_u64(2021);
        let m = random_symmetric(&mut rng, 10);
        let c = compress_topk(&m, 5).unwrap().densify();
        let delta = 5.0 / 55.0;
        assert!(c.frobenius_norm() <= m.frobenius_norm());
        assert!(c.sub(&m).frobenius_norm_sq() <= (1.0 - delta) * m.frobenius_norm_sq());
    }

    #[test]
    fn triangular_delta_is_not_a_frobenius_contraction() {
        // Diagonal slightly dominant, off-diagonal mirrored twice in ‖·‖_F.
        let m = SymmetricMatrix::from_lower_fn(3, |r, c| if r == c { 1.01 } else { 1.0 });
        let c = compress_topk(&m, 1).unwrap().densify();
        let residual = c.sub(&m).frobenius_norm_sq();
        let total = m.frobenius_norm_sq();
        assert!(residual > (1.0 - 1.0 / 6.0) * total);
        assert!(residual <= (1.0 - 1.0 / 9.0) * total);
    }

    #[test]
    fn rankr_examples() {
        let m = SymmetricMatrix::from_diagonal(&[3.0, 1.0]);
        let c = compress_rankr(&m, 1).unwrap().densify();
        assert!(c.frobenius_distance(&SymmetricMatrix::from_diagonal(&[3.0, 0.0])) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_symmetric(&mut rng, 7);
        let full = compress_rankr(&m, 7).unwrap().densify();
        assert!(full.frobenius_distance(&m) < 1e-10);
        assert!(matches!(compress_rankr(&m, 8), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn rankr_residual_matches_spectrum_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = random_symmetric(&mut rng, 10);
        let residual = compress_rankr(&m, 2).unwrap().densify().sub(&m).frobenius_norm_sq();
        // Independent route: squared eigenvalues sorted by magnitude.
        let mut sq: Vec<f64> = eigh(&m).unwrap().values.iter().map(|l| l * l).collect();
        sq.sort_by(|a, b| b.total_cmp(a));
        let tail: f64 = sq[2..].iter().sum();
        assert!((residual - tail).abs() < 1e-10);
    }

    #[test]
    fn randk_full_and_zero() {
        let mut rng = StreamKey::new(1, 0, 0, Purpose::Test).stream();
        let m = sym(&[1.0, 2.0, 2.0, 3.0], 2);
        assert_eq!(compress_randk(&m, 3, &mut rng).unwrap().densify(), m);
        let z = SymmetricMatrix::zeros(4);
        for _ in 0..10 {
            assert_eq!(compress_randk(&z, 3, &mut rng).unwrap().densify(), z);
        }
    }

    #[test]
    fn randk_is_deterministic_per_stream() {
        let m = SymmetricMatrix::from_lower_fn(6, |r, c| (r * 7 + c) as f64);
        let key = StreamKey::new(5, 2, 9, Purpose::HessianCompression);
        let a = compress_randk(&m, 4, &mut key.stream()).unwrap();
        let b = compress_randk(&m, 4, &mut key.stream()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dither_zero_and_grid_points() {
        let mut rng = StreamKey::new(1, 0, 0, Purpose::Test).stream();
        let z = Vector::zeros(4);
        assert_eq!(compress_dither(&z, 3, &mut rng).unwrap().densify(), z);
        let v = Vector::from_vec(vec![1.0, 0.0]);
        for _ in 0..20 {
            assert_eq!(compress_dither(&v, 1, &mut rng).unwrap().densify(), v);
        }
        let v = Vector::from_vec(vec![-3.0, 4.0]);
        // |v_i|/‖v‖ = 0.6, 0.8 lie on the s = 5 grid.
        for _ in 0..20 {
            let out = compress_dither(&v, 5, &mut rng).unwrap().densify();
            assert!((out - &v).norm() < 1e-14);
        }
    }

    #[test]
    fn scaling_wrapper() {
        let m = SymmetricMatrix::from_lower_fn(3, |r, c| 1.0 + (r + c) as f64);
        let small = compress_topk(&m, 1).unwrap();
        assert_eq!(scale_to_contract(small.clone(), &m), small);

        let doubled = CompressedMatrix {
            dim: 3,
            payload: MatrixPayload::Dense(m.scaled(2.0)),
            message: MessageKind::SymmetricDense { d: 3 },
        };
        let out = scale_to_contract(doubled, &m).densify();
        assert!((out.frobenius_norm() - m.frobenius_norm()).abs() < 1e-12);
        assert!(out.frobenius_distance(&m) < 1e-12);
    }

    #[test]
    fn scaling_a_dithered_vector() {
        let v = Vector::from_vec(vec![0.3, -0.1, 0.7, 0.2, -0.45]);
        let mut rng = StreamKey::new(3, 0, 0, Purpose::Test).stream();
        let mut found = false;
        for _ in 0..200 {
            let c = compress_dither(&v, 1, &mut rng).unwrap();
            if c.densify().norm() > v.norm() {
                let scaled = scale_vector_to_contract(c, &v).densify();
                assert!((scaled.norm() - v.norm()).abs() <= 1e-12);
                found = true;
                break;
            }
        }
        assert!(found, "no dithered output exceeded the input norm");
    }

    #[test]
    fn declared_classes() {
        let d = 10;
        assert_eq!(CompressorSpec::rank_r(2).matrix_class(d).unwrap(), CompressorClass::Contractive { delta: 0.2 });
        assert_eq!(CompressorSpec::top_k(10).matrix_class(d).unwrap(), CompressorClass::Contractive { delta: 0.1 });
        assert_eq!(
            CompressorSpec::top_k(10).reported_delta(d, DeltaConvention::Triangular).unwrap(),
            Some(10.0 / 55.0)
        );
        assert_eq!(CompressorSpec::rand_k(11).matrix_class(d).unwrap(), CompressorClass::Unbiased { omega: 4.0 });
        assert!(CompressorSpec::dithering(2).matrix_class(d).is_err());
        assert!(CompressorSpec::rank_r(1).vector_class(d).is_err());
        let CompressorClass::Unbiased { omega } = CompressorSpec::dithering(2).vector_class(8).unwrap() else {
            panic!("dithering is unbiased")
        };
        assert!((omega - 8f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn vector_topk_and_randk() {
        let v = Vector::from_vec(vec![0.5, -3.0, 2.0, 0.0]);
        let mut rng = StreamKey::new(0, 0, 0, Purpose::Test).stream();
        let top = CompressorSpec::top_k(2).compress_vector(&v, &mut rng).unwrap();
        assert_eq!(top.densify(), Vector::from_vec(vec![0.0, -3.0, 2.0, 0.0]));
        let rand = CompressorSpec::rand_k(4).compress_vector(&v, &mut rng).unwrap();
        assert_eq!(rand.densify(), v);
    }
}
