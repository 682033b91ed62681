//! Desk-scale benchmarks comparing the endorsement framework with a
//! manufacturer-only baseline: issue throughput against send rate,
//! authentication latency against parallelism, and a resource profile
//! based on operation counters.

mod fixture;
mod latency;
mod output;
mod resource;
mod throughput;

use std::path::PathBuf;
use std::time::Duration;

use serde::Serialize;

pub use fixture::Fixture;
pub use latency::{run_auth_latency, run_auth_latency_on};
pub use output::{line_chart_svg, write_outputs};
pub use resource::{run_resource_profile, ResourceProfile};
pub use throughput::run_issue_throughput;

use crate::ledger::Mode;
use crate::trust::Threshold;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid bench config: {0}")]
    InvalidConfig(String),
    #[error("fixture has {have} credentialed devices, need {need}")]
    InsufficientFixture { have: usize, need: usize },
    #[error("fixture setup failed: {0}")]
    Fixture(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub mode: Mode,
    pub send_rates: Vec<u32>,
    pub parallelism_levels: Vec<usize>,
    pub duration_s: u64,
    pub tau: Threshold,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            mode: Mode::Endorsement,
            send_rates: vec![25, 50, 100, 200],
            parallelism_levels: vec![1, 4, 16, 64],
            duration_s: 10,
            tau: Threshold::default(),
            seed: 7,
            out_dir: None,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::InvalidConfig(m.into()));
        if self.send_rates.is_empty() || self.send_rates.contains(&0) {
            return bad("send rates must be non-empty and positive");
        }
        if self.parallelism_levels.is_empty() || self.parallelism_levels.contains(&0) {
            return bad("parallelism levels must be non-empty and positive");
        }
        if self.duration_s < 1 {
            return bad("duration must be at least 1 s");
        }
        Ok(())
    }

    pub fn duration(&self) -> Duration {
        Duration::from_secs(self.duration_s)
    }
}

/// What a row measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Point {
    Rate,
    Parallelism,
    Issue,
    Verify,
}

/// One measurement point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub mode: Mode,
    pub point: Point,
    pub target: f64,
    pub requests: usize,
    pub achieved_tps: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub mean_ms: f64,
    pub sig_verifications: u64,
    pub hash_computations: u64,
    pub committed: u64,
    pub rejected: u64,
    pub wall_s: f64,
    pub ledger_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub counter: String,
    pub endorsement: f64,
    pub baseline: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Coefficient of variation of the per-level mean latencies.
    pub latency_cv: Option<f64>,
    pub ratios: Vec<RatioRow>,
    pub peak_memory_kb: Option<u64>,
}

/// Latency summary of a sample set, in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyStats {
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub mean: f64,
}

impl LatencyStats {
    /// Nearest-rank percentiles over `samples`.
    pub fn from_samples(samples: &[Duration]) -> Self {
        if samples.is_empty() {
            return LatencyStats { p50: 0.0, p95: 0.0, p99: 0.0, mean: 0.0 };
        }
        let mut ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        ms.sort_by(f64::total_cmp);
        let rank = |p: f64| ms[((p * ms.len() as f64).ceil() as usize).clamp(1, ms.len()) - 1];
        LatencyStats { p50: rank(0.50), p95: rank(0.95), p99: rank(0.99), mean: ms.iter().sum::<f64>() / ms.len() as f64 }
    }
}

/// Population coefficient of variation, `stddev / mean`.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

/// Peak resident set size of this process, where the platform reports it.
pub fn peak_memory_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}
