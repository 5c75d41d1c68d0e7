//! Synthetic ranking data with planted query-dependent relevance.
//!
//! For every query, in this order on one ChaCha8 stream seeded with
//! `seed_from_u64(seed)`:
//!
//! 1. `L·m_d` document features from φ, row-major;
//! 2. `m_q` distinct columns `c` by partial Fisher–Yates over `0..m_d`
//!    (step `i` swaps `i` with `i + ⌊u·(m_d − i)⌋`);
//! 3. `m_q` query coefficients `γ` from ψ;
//! 4. labels `y = max(ℓ, min(h, Σ_k γ_k·x[c_k]))`;
//! 5. `γ` appended to every document, giving `m_d + m_q` features.
//!
//! A uniform draw is `u = (next_u64 >> 11)·2⁻⁵³`. Normal draws use
//! Box–Muller on `(1 − u₁, u₂)`, keeping only the cosine branch.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DataError, QueryGroup, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std: f64 },
    Constant(f64),
}

impl Distribution {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Distribution::Uniform { low, high } => low.is_finite() && high.is_finite() && low <= high,
            Distribution::Normal { mean, std } => mean.is_finite() && std.is_finite() && std >= 0.0,
            Distribution::Constant(v) => v.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(DataError::Config(format!("invalid distribution {self}")))
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Distribution::Uniform { low, high } => low + (high - low) * unit(rng),
            Distribution::Normal { mean, std } => {
                let u1 = 1.0 - unit(rng);
                let u2 = unit(rng);
                mean + std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            }
            Distribution::Constant(v) => v,
        }
    }
}

/// Uniform on `[0, 1)` with 53 random bits.
fn unit(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Uniform { low, high } => write!(f, "uniform:{low}:{high}"),
            Distribution::Normal { mean, std } => write!(f, "normal:{mean}:{std}"),
            Distribution::Constant(v) => write!(f, "constant:{v}"),
        }
    }
}

impl FromStr for Distribution {
    type Err = String;

    /// `uniform:<low>:<high>`, `normal:<mean>:<std>` or `constant:<value>`.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |t: &str| t.parse::<f64>().map_err(|e| format!("bad number `{t}` in `{s}`: {e}"));
        match parts.as_slice() {
            ["uniform", a, b] => Ok(Distribution::Uniform {
                low: num(a)?,
                high: num(b)?,
            }),
            ["normal", a, b] => Ok(Distribution::Normal {
                mean: num(a)?,
                std: num(b)?,
            }),
            ["constant", a] => Ok(Distribution::Constant(num(a)?)),
            _ => Err(format!(
                "unknown distribution `{s}` (uniform:<low>:<high>, normal:<mean>:<std>, constant:<v>)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub queries: usize,
    pub list_size: usize,
    pub doc_features: usize,
    pub query_features: usize,
    pub label_min: f64,
    pub label_max: f64,
    pub phi: Distribution,
    pub psi: Distribution,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            queries: 100,
            list_size: 20,
            doc_features: 10,
            query_features: 2,
            label_min: 0.0,
            label_max: 4.0,
            phi: Distribution::Uniform { low: 0.0, high: 1.0 },
            psi: Distribution::Uniform { low: 0.0, high: 1.0 },
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.queries == 0 || self.list_size == 0 || self.doc_features == 0 {
            return Err(DataError::Config(
                "queries, list size and document features must be positive".into(),
            ));
        }
        if self.query_features > self.doc_features {
            return Err(DataError::Config(format!(
                "query features ({}) exceed document features ({})",
                self.query_features, self.doc_features
            )));
        }
        if !(self.label_min.is_finite() && self.label_max.is_finite() && self.label_min <= self.label_max) {
            return Err(DataError::Config(format!(
                "label bounds must satisfy min ≤ max, got [{}, {}]",
                self.label_min, self.label_max
            )));
        }
        self.phi.validate()?;
        self.psi.validate()
    }

    /// Sidecar `key=value` lines.
    pub fn write_meta(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "format=pirank-synthetic-1")?;
        writeln!(w, "rng=chacha8")?;
        writeln!(w, "queries={}", self.queries)?;
        writeln!(w, "list_size={}", self.list_size)?;
        writeln!(w, "doc_features={}", self.doc_features)?;
        writeln!(w, "query_features={}", self.query_features)?;
        writeln!(w, "label_min={}", self.label_min)?;
        writeln!(w, "label_max={}", self.label_max)?;
        writeln!(w, "phi={}", self.phi)?;
        writeln!(w, "psi={}", self.psi)?;
        writeln!(w, "seed={}", self.seed)
    }

    pub fn read_meta(r: impl BufRead) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let err = |msg: String| DataError::Parse { line: i + 1, msg };
            let Some((key, value)) = line.split_once('=') else {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(err(format!("expected key=value, got `{line}`")));
            };
            let (key, value) = (key.trim(), value.trim());
            fn num<T: FromStr>(v: &str) -> std::result::Result<T, String>
            where
                T::Err: fmt::Display,
            {
                v.parse().map_err(|e| format!("bad value `{v}`: {e}"))
            }
            let res: std::result::Result<(), String> = (|| {
                match key {
                    "queries" => cfg.queries = num(value)?,
                    "list_size" => cfg.list_size = num(value)?,
                    "doc_features" => cfg.doc_features = num(value)?,
                    "query_features" => cfg.query_features = num(value)?,
                    "label_min" => cfg.label_min = num(value)?,
                    "label_max" => cfg.label_max = num(value)?,
                    "phi" => cfg.phi = value.parse()?,
                    "psi" => cfg.psi = value.parse()?,
                    "seed" => cfg.seed = num(value)?,
                    "format" | "rng" => {}
                    other => return Err(format!("unknown key `{other}`")),
                }
                Ok(())
            })();
            res.map_err(err)?;
        }
        Ok(cfg)
    }
}

/// Generates `cfg.queries` groups of `cfg.list_size` items, qids `1..=n`.
pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<Vec<QueryGroup>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (l, md, mq) = (cfg.list_size, cfg.doc_features, cfg.query_features);
    let width = md + mq;
    let mut groups = Vec::with_capacity(cfg.queries);
    for q in 0..cfg.queries {
        let docs: Vec<f64> = (0..l * md).map(|_| cfg.phi.sample(&mut rng)).collect();
        let mut cols: Vec<usize> = (0..md).collect();
        for i in 0..mq {
            let j = i + ((unit(&mut rng) * (md - i) as f64) as usize).min(md - i - 1);
            cols.swap(i, j);
        }
        let cols = &cols[..mq];
        let gamma: Vec<f64> = (0..mq).map(|_| cfg.psi.sample(&mut rng)).collect();
        let labels = (0..l)
            .map(|d| {
                let s: f64 = cols.iter().zip(&gamma).map(|(&c, g)| g * docs[d * md + c]).sum();
                cfg.label_min.max(cfg.label_max.min(s))
            })
            .collect();
        let mut features = Vec::with_capacity(l * width);
        for d in 0..l {
            features.extend_from_slice(&docs[d * md..(d + 1) * md]);
            features.extend_from_slice(&gamma);
        }
        groups.push(QueryGroup::new((q + 1).to_string(), features, width, labels));
    }
    Ok(groups)
}
