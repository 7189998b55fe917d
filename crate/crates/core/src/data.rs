//! Datasets: LibSVM text ingestion, partitioning across devices, and the
//! heterogeneous synthetic generator.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::rng::{Purpose, StreamKey};
use crate::{Error, Result, Vector};

/// Rows held by one device: an `m × d` feature matrix and labels in `{−1, +1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceData {
    pub features: DMatrix<f64>,
    pub labels: Vec<f64>,
}

impl DeviceData {
    pub fn new(features: DMatrix<f64>, labels: Vec<f64>) -> Result<Self> {
        let data = Self { features, labels };
        data.validate()?;
        Ok(data)
    }

    pub fn rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    fn validate(&self) -> Result<()> {
        if self.labels.len() != self.features.nrows() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} feature rows",
                self.labels.len(),
                self.features.nrows()
            )));
        }
        if self.labels.is_empty() {
            return Err(Error::InvalidInput("device has no rows".into()));
        }
        if let Some(b) = self.labels.iter().find(|&&b| b != 1.0 && b != -1.0) {
            return Err(Error::InvalidInput(format!("label {b} is not in {{-1, +1}}")));
        }
        if !self.features.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("features contain non-finite values".into()));
        }
        Ok(())
    }
}

/// Rows split across `n` devices, all of the same dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub devices: Vec<DeviceData>,
}

impl Dataset {
    pub fn new(devices: Vec<DeviceData>) -> Result<Self> {
        let Some(first) = devices.first() else {
            return Err(Error::InvalidInput("dataset has no devices".into()));
        };
        let d = first.dim();
        for (i, dev) in devices.iter().enumerate() {
            dev.validate()?;
            if dev.dim() != d {
                return Err(Error::InvalidInput(format!("device {i} has dimension {} != {d}", dev.dim())));
            }
        }
        Ok(Self { devices })
    }

    pub fn n_devices(&self) -> usize {
        self.devices.len()
    }

    pub fn dim(&self) -> usize {
        self.devices[0].dim()
    }

    pub fn total_rows(&self) -> usize {
        self.devices.iter().map(DeviceData::rows).sum()
    }

    /// Scales every nonzero row to unit Euclidean norm.
    pub fn normalize_rows(&mut self) {
        for dev in &mut self.devices {
            for mut row in dev.features.row_iter_mut() {
                let norm = row.norm();
                if norm > 0.0 {
                    row /= norm;
                }
            }
        }
    }
}

/// Parses LibSVM text (`label idx:val ...`, 1-based indices).
///
/// The dimension is the largest index seen unless `dim` overrides it. Labels
/// greater than zero map to `+1`, everything else to `−1`.
pub fn parse_libsvm_reader(reader: impl BufRead, dim: Option<usize>) -> Result<DeviceData> {
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut max_index = 0;
    for (line_idx, line) in reader.lines().enumerate() {
        let line_no = line_idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: line_no, message };
        let mut tokens = line.split_whitespace();
        let label_token = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_token.parse().map_err(|_| parse_err(format!("bad label {label_token:?}")))?;
        if !label.is_finite() {
            return Err(parse_err(format!("bad label {label_token:?}")));
        }
        let mut entries = Vec::new();
        for token in tokens {
            let (idx, val) =
                token.split_once(':').ok_or_else(|| parse_err(format!("expected idx:val, got {token:?}")))?;
            let idx: usize = idx.parse().map_err(|_| parse_err(format!("bad index in {token:?}")))?;
            let val: f64 = val.parse().map_err(|_| parse_err(format!("bad value in {token:?}")))?;
            if idx == 0 {
                return Err(parse_err("indices are 1-based".into()));
            }
            if !val.is_finite() {
                return Err(parse_err(format!("non-finite value in {token:?}")));
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(Error::Dimension { line: line_no, index: idx, dim: d });
                }
            }
            max_index = max_index.max(idx);
            entries.push((idx - 1, val));
        }
        labels.push(if label > 0.0 { 1.0 } else { -1.0 });
        rows.push(entries);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("LibSVM input has no rows".into()));
    }
    let d = dim.unwrap_or(max_index).max(1);
    let mut features = DMatrix::zeros(rows.len(), d);
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            features[(r, c)] = v;
        }
    }
    DeviceData::new(features, labels)
}

pub fn parse_libsvm(path: impl AsRef<Path>, dim: Option<usize>) -> Result<DeviceData> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_libsvm_reader(BufReader::new(file), dim)
}

/// Writes rows in LibSVM format, omitting zeros. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_libsvm(data: &DeviceData, mut out: impl Write) -> Result<()> {
    let mut line = String::new();
    for (r, &label) in data.labels.iter().enumerate() {
        line.clear();
        line.push_str(if label > 0.0 { "+1" } else { "-1" });
        for c in 0..data.dim() {
            let v = data.features[(r, c)];
            if v != 0.0 {
                write!(line, " {}:{}", c + 1, v).expect("writing to a String cannot fail");
            }
        }
        line.push('\n');
        out.write_all(line.as_bytes())?;
    }
    Ok(())
}

/// Contiguous equal blocks after truncating to `n·⌊rows/n⌋` rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionPlan {
    pub n: usize,
    pub rows_per_device: usize,
    /// Device of each global row; `None` for truncated rows.
    pub assignment: Vec<Option<usize>>,
}

pub fn partition(rows: usize, n: usize) -> Result<PartitionPlan> {
    if n == 0 || n > rows {
        return Err(Error::InvalidParameter(format!("cannot split {rows} rows across {n} devices")));
    }
    let m = rows / n;
    let assignment = (0..rows).map(|r| (r < n * m).then_some(r / m)).collect();
    Ok(PartitionPlan { n, rows_per_device: m, assignment })
}

impl PartitionPlan {
    pub fn apply(&self, data: &DeviceData) -> Result<Dataset> {
        if data.rows() != self.assignment.len() {
            return Err(Error::InvalidInput(format!(
                "plan covers {} rows, data has {}",
                self.assignment.len(),
                data.rows()
            )));
        }
        let m = self.rows_per_device;
        let devices = (0..self.n)
            .map(|i| DeviceData {
                features: data.features.rows(i * m, m).into_owned(),
                labels: data.labels[i * m..(i + 1) * m].to_vec(),
            })
            .collect();
        Dataset::new(devices)
    }
}

/// Parameters of the heterogeneous synthetic generator. `alpha` and `beta`
/// are variances: `alpha` controls how much the local models differ across
/// devices, `beta` how much the local feature distributions differ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub iid: bool,
    pub seed: u64,
}

fn normal(mean: f64, variance: f64) -> Normal<f64> {
    Normal::new(mean, variance.sqrt()).expect("variance is validated non-negative")
}

/// Draws `Synthetic(α, β)`.
///
/// Device `i` draws `B_i ~ N(0, β)` and feature means `v_i` with entries
/// `N(B_i, 1)`; features are `a_ij ~ N(v_i, Σ)` with `Σ_jj = j^(−1.2)`. Its
/// model is `w_i` with entries `N(u_i, 1)` and bias `c_i ~ N(u_i, 1)` where
/// `u_i ~ N(0, α)`. A label is `−1` with probability `σ(w_iᵀa_ij + c_i)`.
/// In the IID variant every device shares one `(w, c)` drawn from `N(0, 1)`
/// and every entry of `v_i` equals `B_i`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    generate_synthetic_with_probabilities(spec).map(|(data, _)| data)
}

/// [`generate_synthetic`] together with the probability of a `−1` label for
/// every generated row.
pub fn generate_synthetic_with_probabilities(spec: &SyntheticSpec) -> Result<(Dataset, Vec<Vec<f64>>)> {
    let SyntheticSpec { alpha, beta, n, m, d, iid, seed } = *spec;
    if !(alpha >= 0.0 && alpha.is_finite() && beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidParameter(format!("alpha, beta must be finite and >= 0, got {alpha}, {beta}")));
    }
    if n == 0 || m == 0 || d == 0 {
        return Err(Error::InvalidParameter(format!("n, m, d must be positive, got {n}, {m}, {d}")));
    }
    let std_normal = normal(0.0, 1.0);
    let feature_std: Vec<f64> = (1..=d).map(|j| (j as f64).powf(-0.6)).collect();

    let shared = iid.then(|| {
        let mut rng = StreamKey::server(seed, 0, Purpose::DataGeneration).stream();
        let w = Vector::from_fn(d, |_, _| std_normal.sample(&mut rng));
        let c = std_normal.sample(&mut rng);
        (w, c)
    });

    let mut devices = Vec::with_capacity(n);
    let mut probabilities = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = StreamKey::new(seed, i as u64, 0, Purpose::DataGeneration).stream();
        let b_i = normal(0.0, beta).sample(&mut rng);
        let v: Vec<f64> = if iid { vec![b_i; d] } else { (0..d).map(|_| normal(b_i, 1.0).sample(&mut rng)).collect() };
        let (w, c) = match &shared {
            Some((w, c)) => (w.clone(), *c),
            None => {
                let u_i = normal(0.0, alpha).sample(&mut rng);
                let model = normal(u_i, 1.0);
                let c = model.sample(&mut rng);
                let w = Vector::from_fn(d, |_, _| model.sample(&mut rng));
                (w, c)
            }
        };
        let mut features = DMatrix::zeros(m, d);
        let mut labels = Vec::with_capacity(m);
        let mut probs = Vec::with_capacity(m);
        for r in 0..m {
            for col in 0..d {
                features[(r, col)] = v[col] + feature_std[col] * std_normal.sample(&mut rng);
            }
            let p = sigmoid(features.row(r).transpose().dot(&w) + c);
            labels.push(if rng.random::<f64>() < p { -1.0 } else { 1.0 });
            probs.push(p);
        }
        devices.push(DeviceData::new(features, labels)?);
        probabilities.push(probs);
    }
    Ok((Dataset::new(devices)?, probabilities))
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}
