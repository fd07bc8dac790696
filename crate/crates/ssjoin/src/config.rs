//! Run configuration as flat `key=value` text.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ssjoin_core::PAGE_SIZE;

use crate::dataset::DEFAULT_BLOCK_BYTES;
use crate::error::{Error, IoContext, Result};

/// Memory budget, absolute or relative to the dataset's float32 size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MemorySpec {
    Bytes(u64),
    Percent(f64),
}

impl MemorySpec {
    pub fn resolve(self, dataset_bytes: u64) -> u64 {
        match self {
            MemorySpec::Bytes(b) => b,
            MemorySpec::Percent(p) => (dataset_bytes as f64 * p / 100.0).floor() as u64,
        }
    }
}

impl fmt::Display for MemorySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemorySpec::Bytes(b) => write!(f, "{b}"),
            MemorySpec::Percent(p) => write!(f, "{p}%"),
        }
    }
}

impl FromStr for MemorySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidArgument(format!("bad memory size `{s}` (use bytes, K/M/G suffix, or N%)"));
        if let Some(p) = s.strip_suffix('%') {
            let p: f64 = p.trim().parse().map_err(|_| bad())?;
            if !(p > 0.0 && p.is_finite()) {
                return Err(bad());
            }
            return Ok(MemorySpec::Percent(p));
        }
        let upper = s.to_ascii_uppercase();
        let (digits, mult) = match upper.trim_end_matches("IB").trim_end_matches('B') {
            t if t.ends_with('K') => (&s[..t.len() - 1], 1u64 << 10),
            t if t.ends_with('M') => (&s[..t.len() - 1], 1 << 20),
            t if t.ends_with('G') => (&s[..t.len() - 1], 1 << 30),
            t => (&s[..t.len()], 1),
        };
        let n: u64 = digits.trim().parse().map_err(|_| bad())?;
        n.checked_mul(mult).map(MemorySpec::Bytes).ok_or_else(bad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinConfig {
    /// Distance threshold; calibrated from `target_neighbors` when absent.
    pub epsilon: Option<f32>,
    pub target_neighbors: f64,
    pub calibration_samples: usize,
    pub lambda: f64,
    pub memory: MemorySpec,
    /// Budget for bucketization when it should differ from `memory`.
    pub layout_memory: Option<MemorySpec>,
    /// Centers M; one per thousand vectors when absent.
    pub num_buckets: Option<u64>,
    /// Initial candidate width L.
    pub candidates: usize,
    pub apply_mu: bool,
    /// Fixed pruning-ball radius instead of `r_b + epsilon`.
    pub ball_radius: Option<f64>,
    pub seed: u64,
    pub page_size: u64,
    pub prefetch_depth: usize,
    pub graph_degree: usize,
    pub ef_construction: usize,
    pub ef_search: usize,
    pub block_bytes: u64,
    /// Buckets above this fraction of the cache are split.
    pub split_fraction: f64,
    pub direct_io: bool,
    pub deterministic: bool,
    pub evaluate: bool,
    pub oracle_max_n: u64,
}

impl Default for JoinConfig {
    fn default() -> Self {
        JoinConfig {
            epsilon: None,
            target_neighbors: 100.0,
            calibration_samples: 1000,
            lambda: 0.9,
            memory: MemorySpec::Percent(10.0),
            layout_memory: None,
            num_buckets: None,
            candidates: 256,
            apply_mu: true,
            ball_radius: None,
            seed: 42,
            page_size: PAGE_SIZE,
            prefetch_depth: 2,
            graph_degree: 16,
            ef_construction: 200,
            ef_search: 64,
            block_bytes: DEFAULT_BLOCK_BYTES,
            split_fraction: 0.25,
            direct_io: true,
            deterministic: false,
            evaluate: false,
            oracle_max_n: crate::oracle::DEFAULT_MAX_N,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value `{value}` for `{key}`")))
}

fn optional<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value.trim() {
        "" | "auto" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

fn show<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), |x| x.to_string())
}

impl JoinConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "epsilon" => self.epsilon = optional(key, value)?,
            "target_neighbors" => self.target_neighbors = parse(key, value)?,
            "calibration_samples" => self.calibration_samples = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "memory" => self.memory = value.parse()?,
            "layout_memory" => self.layout_memory = optional(key, value)?,
            "num_buckets" => self.num_buckets = optional(key, value)?,
            "candidates" => self.candidates = parse(key, value)?,
            "apply_mu" => self.apply_mu = parse(key, value)?,
            "ball_radius" => self.ball_radius = optional(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "page_size" => self.page_size = parse(key, value)?,
            "prefetch_depth" => self.prefetch_depth = parse(key, value)?,
            "graph_degree" => self.graph_degree = parse(key, value)?,
            "ef_construction" => self.ef_construction = parse(key, value)?,
            "ef_search" => self.ef_search = parse(key, value)?,
            "block_bytes" => self.block_bytes = parse(key, value)?,
            "split_fraction" => self.split_fraction = parse(key, value)?,
            "direct_io" => self.direct_io = parse(key, value)?,
            "deterministic" => self.deterministic = parse(key, value)?,
            "evaluate" => self.evaluate = parse(key, value)?,
            "oracle_max_n" => self.oracle_max_n = parse(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses `key=value` lines; `#` starts a comment.
    pub fn parse_text(text: &str) -> Result<JoinConfig> {
        let mut cfg = JoinConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("line {}: expected key=value", n + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<JoinConfig> {
        JoinConfig::parse_text(&std::fs::read_to_string(path).at(path)?)
    }

    pub fn to_text(&self) -> String {
        let lines = [
            ("epsilon", show(&self.epsilon)),
            ("target_neighbors", self.target_neighbors.to_string()),
            ("calibration_samples", self.calibration_samples.to_string()),
            ("lambda", self.lambda.to_string()),
            ("memory", self.memory.to_string()),
            ("layout_memory", show(&self.layout_memory)),
            ("num_buckets", show(&self.num_buckets)),
            ("candidates", self.candidates.to_string()),
            ("apply_mu", self.apply_mu.to_string()),
            ("ball_radius", show(&self.ball_radius)),
            ("seed", self.seed.to_string()),
            ("page_size", self.page_size.to_string()),
            ("prefetch_depth", self.prefetch_depth.to_string()),
            ("graph_degree", self.graph_degree.to_string()),
            ("ef_construction", self.ef_construction.to_string()),
            ("ef_search", self.ef_search.to_string()),
            ("block_bytes", self.block_bytes.to_string()),
            ("split_fraction", self.split_fraction.to_string()),
            ("direct_io", self.direct_io.to_string()),
            ("deterministic", self.deterministic.to_string()),
            ("evaluate", self.evaluate.to_string()),
            ("oracle_max_n", self.oracle_max_n.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return bad("epsilon must be positive and finite");
            }
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad("lambda must lie in (0, 1]");
        }
        if self.page_size != PAGE_SIZE {
            return bad("page_size must be 4096");
        }
        if self.num_buckets == Some(0) {
            return bad("num_buckets must be at least 1");
        }
        if self.candidates == 0 || self.graph_degree < 2 || self.ef_search == 0 {
            return bad("candidates, graph_degree and ef_search must be positive (graph_degree >= 2)");
        }
        if !(self.split_fraction > 0.0 && self.split_fraction <= 1.0) {
            return bad("split_fraction must lie in (0, 1]");
        }
        if self.target_neighbors < 0.0 || self.calibration_samples == 0 {
            return bad("target_neighbors must be >= 0 and calibration_samples >= 1");
        }
        Ok(())
    }
}
