//! Run statistics as key=value text and as a versioned CSV row.

use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use crate::error::{IoContext, Result};

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseTimes {
    pub bucketize: f64,
    pub graph: f64,
    pub orchestrate: f64,
    pub execute: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub bytes_total: u64,
    pub bytes_useful: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub planned_misses: u64,
    pub distance_computations: u64,
    pub pairs: u64,
    pub tasks: u64,
    pub capacity: u64,
    pub cache_bytes: u64,
    pub peak_resident_bytes: u64,
    pub peak_resident_buckets: u64,
    pub direct_io: bool,
    pub times: PhaseTimes,
}

impl RunStats {
    pub fn amp(&self) -> f64 {
        if self.bytes_useful == 0 {
            1.0
        } else {
            self.bytes_total as f64 / self.bytes_useful as f64
        }
    }

    pub fn hit_rate(&self) -> f64 {
        ssjoin_core::cache::hit_rate(self.cache_hits, self.cache_misses)
    }

    /// The counters that must repeat exactly when a plan is replayed.
    pub fn counters(&self) -> [u64; 6] {
        [
            self.bytes_total,
            self.bytes_useful,
            self.cache_hits,
            self.cache_misses,
            self.distance_computations,
            self.pairs,
        ]
    }

    fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("bytes_total", self.bytes_total.to_string()),
            ("bytes_useful", self.bytes_useful.to_string()),
            ("amp", format!("{:.6}", self.amp())),
            ("cache_hits", self.cache_hits.to_string()),
            ("cache_misses", self.cache_misses.to_string()),
            ("planned_misses", self.planned_misses.to_string()),
            ("hit_rate", format!("{:.6}", self.hit_rate())),
            ("distance_computations", self.distance_computations.to_string()),
            ("pairs", self.pairs.to_string()),
            ("tasks", self.tasks.to_string()),
            ("capacity", self.capacity.to_string()),
            ("cache_bytes", self.cache_bytes.to_string()),
            ("peak_resident_bytes", self.peak_resident_bytes.to_string()),
            ("peak_resident_buckets", self.peak_resident_buckets.to_string()),
            ("direct_io", self.direct_io.to_string()),
            ("time_bucketize_s", format!("{:.3}", self.times.bucketize)),
            ("time_graph_s", format!("{:.3}", self.times.graph)),
            ("time_orchestrate_s", format!("{:.3}", self.times.orchestrate)),
            ("time_execute_s", format!("{:.3}", self.times.execute)),
        ]
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn csv_header() -> String {
        let names: Vec<&str> = RunStats::default().fields().iter().map(|(k, _)| *k).collect();
        format!("schema_version,{}", names.join(","))
    }

    pub fn csv_row(&self) -> String {
        let values: Vec<String> = self.fields().into_iter().map(|(_, v)| v).collect();
        format!("{CSV_SCHEMA_VERSION},{}", values.join(","))
    }

    /// Appends a row, writing the header first when the file is new.
    pub fn append_csv(&self, path: &Path) -> Result<()> {
        let fresh = !path.exists();
        let mut f = OpenOptions::new().create(true).append(true).open(path).at(path)?;
        if fresh {
            writeln!(f, "{}", RunStats::csv_header()).at(path)?;
        }
        writeln!(f, "{}", self.csv_row()).at(path)
    }
}
