//! Communication accounting and per-round traces.
//!
//! Costs are counted, not measured: every message a device or the server
//! would transmit is described by a [`MessageKind`] and priced by
//! [`BitPolicy::cost_of`]. Nothing is actually serialized.

use std::fmt::Write as _;
use std::io::Write;
use std::str::FromStr;

use crate::{Error, Result};

/// Counting rules for transmitted payloads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BitPolicy {
    /// Width of one transmitted float, 32 or 64.
    pub float_bits: u32,
    /// Rand-K indices are reproducible from a seed shared with the receiver
    /// and are not transmitted.
    pub shared_seed_indices: bool,
}

impl Default for BitPolicy {
    fn default() -> Self {
        Self { float_bits: 64, shared_seed_indices: false }
    }
}

/// `⌈log2 n⌉`, the bits needed to address one of `n` positions.
pub fn index_bits(n: u64) -> u64 {
    if n <= 1 {
        0
    } else {
        64 - u64::from((n - 1).leading_zeros())
    }
}

/// Shape of a transmitted message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MessageKind {
    /// Dense length-`d` vector, e.g. a gradient.
    DenseVector {
        d: usize,
    },
    /// Model broadcast.
    Model {
        d: usize,
    },
    Scalar,
    /// A single bit, e.g. the Bernoulli outcome of bidirectional compression.
    Bit,
    /// `r` symmetric eigenpairs `(σ_i, u_i)`.
    RankR {
        d: usize,
        r: usize,
    },
    /// `k` (index, value) pairs of a `d × d` matrix; indices address the lower
    /// triangle when `triangular`, all `d²` entries otherwise.
    TopK {
        d: usize,
        k: usize,
        triangular: bool,
    },
    /// `k` values at random lower-triangular positions of a `d × d` matrix.
    RandK {
        d: usize,
        k: usize,
    },
    /// `k` (index, value) pairs of a length-`d` vector. `random` marks
    /// seed-reproducible positions.
    SparseVector {
        d: usize,
        k: usize,
        random: bool,
    },
    /// Norm plus per-coordinate sign and level for `s` levels.
    Dithered {
        d: usize,
        s: usize,
    },
    /// Full symmetric matrix, lower triangle only.
    SymmetricDense {
        d: usize,
    },
    /// Nothing is sent.
    Empty,
}

impl BitPolicy {
    pub fn validate(&self) -> Result<()> {
        match self.float_bits {
            32 | 64 => Ok(()),
            other => Err(Error::InvalidParameter(format!("float_bits must be 32 or 64, got {other}"))),
        }
    }

    /// Bits needed to send one message of the given kind.
    pub fn cost_of(&self, kind: MessageKind) -> u64 {
        let f = u64::from(self.float_bits);
        let tri = |d: usize| (d * (d + 1) / 2) as u64;
        match kind {
            MessageKind::DenseVector { d } | MessageKind::Model { d } => d as u64 * f,
            MessageKind::Scalar => f,
            MessageKind::Bit => 1,
            MessageKind::RankR { d, r } => r as u64 * (d as u64 + 1) * f,
            MessageKind::TopK { d, k, triangular } => {
                let universe = if triangular { tri(d) } else { (d * d) as u64 };
                k as u64 * (f + index_bits(universe))
            }
            MessageKind::RandK { d, k } => {
                let idx = if self.shared_seed_indices { 0 } else { k as u64 * index_bits(tri(d)) };
                k as u64 * f + idx
            }
            MessageKind::SparseVector { d, k, random } => {
                let idx = if random && self.shared_seed_indices { 0 } else { k as u64 * index_bits(d as u64) };
                k as u64 * f + idx
            }
            MessageKind::Dithered { d, s } => f + d as u64 * (1 + index_bits(s as u64 + 1)),
            MessageKind::SymmetricDense { d } => tri(d) * f,
            MessageKind::Empty => 0,
        }
    }
}

impl FromStr for MessageKind {
    type Err = Error;

    /// Parses `name(arg, ...)`, e.g. `rankR(123,1)` or `topK(3,2,triangular)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown message kind `{s}`"));
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) if s.ends_with(')') => (&s[..open], &s[open + 1..s.len() - 1]),
            None => (s, ""),
            _ => return Err(bad()),
        };
        let args: Vec<&str> = args.split(',').map(str::trim).filter(|a| !a.is_empty()).collect();
        let num = |i: usize| -> Result<usize> { args.get(i).and_then(|a| a.parse().ok()).ok_or_else(bad) };
        let kind = match (name, args.len()) {
            ("dense_vector", 1) => MessageKind::DenseVector { d: num(0)? },
            ("model", 1) => MessageKind::Model { d: num(0)? },
            ("scalar", 0) => MessageKind::Scalar,
            ("bit", 0) => MessageKind::Bit,
            ("rankR", 2) => MessageKind::RankR { d: num(0)?, r: num(1)? },
            ("topK", 2) => MessageKind::TopK { d: num(0)?, k: num(1)?, triangular: true },
            ("topK", 3) => MessageKind::TopK {
                d: num(0)?,
                k: num(1)?,
                triangular: match args[2] {
                    "triangular" | "true" => true,
                    "full" | "false" => false,
                    _ => return Err(bad()),
                },
            },
            ("randK", 2) => MessageKind::RandK { d: num(0)?, k: num(1)? },
            ("dithered", 2) => MessageKind::Dithered { d: num(0)?, s: num(1)? },
            ("symmetric", 1) => MessageKind::SymmetricDense { d: num(0)? },
            _ => return Err(bad()),
        };
        Ok(kind)
    }
}

/// One row of a run trace, describing the state after `round` rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub round: usize,
    pub f_gap: f64,
    pub grad_norm: f64,
    pub dist_sq: f64,
    pub lyapunov: Option<f64>,
    /// Mean squared Frobenius error `(1/n) Σ ‖H_i − ∇²f_i(x*)‖²_F` of the
    /// learned Hessians, for methods that learn them.
    pub hessian_error: Option<f64>,
    /// Cumulative uplink bits per node (total over devices divided by n).
    pub bits_up_cum: f64,
    /// Cumulative downlink bits per node.
    pub bits_down_cum: f64,
    pub wallclock_ms: f64,
}

/// Ordered trace of a run, plus the iterates when requested.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub iterates: Vec<crate::Vector>,
    /// Line-search trials per round (line-search methods only).
    pub line_search_trials: Vec<usize>,
    /// Constants behind the `lyapunov` column, when it was computed.
    pub lyapunov_constants: Option<LyapunovConstants>,
}

/// `Φ^k = 𝓗^k + 6·B·L̂²·‖x^k − x*‖²`, expected to contract by `1 − min{A, 1/3}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LyapunovConstants {
    pub a: f64,
    pub b: f64,
    /// Empirical Frobenius Lipschitz estimate
    /// `max_{i,k} ‖∇²f_i(x^k) − ∇²f_i(x*)‖_F / ‖x^k − x*‖` over the run.
    pub l_hat: f64,
}

impl LyapunovConstants {
    pub fn contraction(&self) -> f64 {
        1.0 - self.a.min(1.0 / 3.0)
    }
}

pub const CSV_HEADER: &str = "round,f_gap,grad_norm,dist_sq,lyapunov,bits_up_cum,bits_down_cum,wallclock_ms";

fn fmt_float(out: &mut String, v: f64) {
    // 17 significant digits round-trip every f64.
    let _ = write!(out, "{v:.16e}");
}

impl TraceRecord {
    pub fn csv_row(&self) -> String {
        let mut s = String::with_capacity(160);
        let _ = write!(s, "{},", self.round);
        fmt_float(&mut s, self.f_gap);
        s.push(',');
        fmt_float(&mut s, self.grad_norm);
        s.push(',');
        fmt_float(&mut s, self.dist_sq);
        s.push(',');
        if let Some(l) = self.lyapunov {
            fmt_float(&mut s, l);
        }
        s.push(',');
        fmt_float(&mut s, self.bits_up_cum);
        s.push(',');
        fmt_float(&mut s, self.bits_down_cum);
        s.push(',');
        fmt_float(&mut s, self.wallclock_ms);
        s
    }

    /// Parses a row produced by [`TraceRecord::csv_row`].
    pub fn from_csv_row(line: &str, line_no: usize) -> Result<Self> {
        let err = |message: String| Error::Parse { line: line_no, message };
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 8 {
            return Err(err(format!("expected 8 columns, found {}", fields.len())));
        }
        let float =
            |i: usize| -> Result<f64> { fields[i].parse::<f64>().map_err(|e| err(format!("column {}: {e}", i + 1))) };
        Ok(Self {
            round: fields[0].parse().map_err(|e| err(format!("round: {e}")))?,
            f_gap: float(1)?,
            grad_norm: float(2)?,
            dist_sq: float(3)?,
            lyapunov: if fields[4].is_empty() { None } else { Some(float(4)?) },
            hessian_error: None,
            bits_up_cum: float(5)?,
            bits_down_cum: float(6)?,
            wallclock_ms: float(7)?,
        })
    }
}

impl Trace {
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            writeln!(w, "{}", r.csv_row())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV output is ASCII")
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == CSV_HEADER => {}
            _ => return Err(Error::Parse { line: 1, message: "missing trace header".into() }),
        }
        let records = lines
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| TraceRecord::from_csv_row(l, i + 2))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { records, ..Default::default() })
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// First record whose gap is at or below `gap`.
    pub fn first_reaching(&self, gap: f64) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.f_gap <= gap)
    }
}
