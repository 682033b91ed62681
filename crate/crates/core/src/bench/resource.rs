use std::time::{Duration, Instant};

use super::{BenchConfig, BenchError, BenchReport, BenchRow, Fixture, LatencyStats, Point, RatioRow};
use crate::identity::VerifiableCredential;
use crate::ledger::{CounterSnapshot, Mode, Payload, Transaction};

/// Issue transactions per mode in the profile workload; the same number of
/// verifications follows.
pub const PROFILE_ISSUES: usize = 400;
/// Transactions per mode before switching to the other mode.
const CHUNK: usize = 10;
const WORKLOAD_EPOCH: u64 = 20_000_000;

/// Per-mode results of a resource profile.
#[derive(Debug, Clone)]
pub struct ResourceProfile {
    pub report: BenchReport,
    pub endorsement: CounterSnapshot,
    pub baseline: CounterSnapshot,
}

impl ResourceProfile {
    pub fn row(&self, mode: Mode, point: Point) -> &BenchRow {
        self.report.rows.iter().find(|r| r.mode == mode && r.point == point).expect("profile has every row")
    }

    /// Endorsement-mode mean issue latency over baseline.
    pub fn issue_latency_ratio(&self) -> f64 {
        self.row(Mode::Endorsement, Point::Issue).mean_ms / self.row(Mode::Baseline, Point::Issue).mean_ms
    }

    pub fn ratio(&self, counter: &str) -> Option<f64> {
        self.report.ratios.iter().find(|r| r.counter == counter).map(|r| r.ratio)
    }
}

struct Side {
    fixture: Fixture,
    issues: Vec<Transaction>,
    issue_lat: Vec<Duration>,
    verify_lat: Vec<Duration>,
}

impl Side {
    fn new(cfg: &BenchConfig, mode: Mode) -> Result<Self, BenchError> {
        let fixture = Fixture::build(cfg.seed, mode, cfg.tau, 32)?;
        let issues = fixture.issue_workload(cfg.seed, PROFILE_ISSUES, WORKLOAD_EPOCH);
        Ok(Side { fixture, issues, issue_lat: Vec::new(), verify_lat: Vec::new() })
    }

    fn submit_timed(&self, tx: Transaction) -> Duration {
        let t = Instant::now();
        let receipt = self.fixture.ledger().submit(tx);
        let d = t.elapsed();
        debug_assert!(receipt.is_committed(), "{receipt:?}");
        d
    }
}

/// Runs the same issue-then-verify workload against a fresh fixture in each
/// mode, alternating between the modes in small chunks so that both see the
/// same machine conditions. Counters cover the whole run of each ledger,
/// fixture setup included, since setup is where the two modes differ most.
pub fn run_resource_profile(cfg: &BenchConfig) -> Result<ResourceProfile, BenchError> {
    cfg.validate()?;
    let mut sides = [Side::new(cfg, Mode::Endorsement)?, Side::new(cfg, Mode::Baseline)?];

    let issues: Vec<Vec<Transaction>> = sides.iter_mut().map(|s| std::mem::take(&mut s.issues)).collect();
    let mut iters: Vec<_> = issues.into_iter().map(|v| v.into_iter()).collect();
    for _ in (0..PROFILE_ISSUES).step_by(CHUNK) {
        for (side, it) in sides.iter_mut().zip(iters.iter_mut()) {
            for tx in it.by_ref().take(CHUNK) {
                let d = side.submit_timed(tx);
                side.issue_lat.push(d);
            }
        }
    }

    let verifies: Vec<Vec<Transaction>> = sides
        .iter()
        .map(|s| {
            let creds: Vec<VerifiableCredential> = s.fixture.ledger().read(|st| {
                let mut v: Vec<_> = st.credentials().map(|e| e.credential.clone()).collect();
                v.sort_by_key(|vc| vc.issued_at);
                v
            });
            s.fixture.verify_workload(&creds, WORKLOAD_EPOCH + PROFILE_ISSUES as u64)
        })
        .collect();
    let mut iters: Vec<_> = verifies.into_iter().map(|v| v.into_iter()).collect();
    for _ in (0..PROFILE_ISSUES).step_by(CHUNK) {
        for (side, it) in sides.iter_mut().zip(iters.iter_mut()) {
            for tx in it.by_ref().take(CHUNK) {
                debug_assert!(matches!(tx.payload, Payload::Verify { .. }));
                let d = side.submit_timed(tx);
                side.verify_lat.push(d);
            }
        }
    }

    let mut rows = Vec::new();
    let mut totals = Vec::new();
    for side in &sides {
        let ledger = side.fixture.ledger();
        ledger.flush().map_err(|e| BenchError::Fixture(e.to_string()))?;
        let counters = ledger.counters().snapshot();
        for (point, lat) in [(Point::Issue, &side.issue_lat), (Point::Verify, &side.verify_lat)] {
            let stats = LatencyStats::from_samples(lat);
            let wall: f64 = lat.iter().map(Duration::as_secs_f64).sum();
            rows.push(BenchRow {
                mode: side.fixture.mode,
                point,
                target: lat.len() as f64,
                requests: lat.len(),
                achieved_tps: lat.len() as f64 / wall,
                p50_ms: stats.p50,
                p95_ms: stats.p95,
                p99_ms: stats.p99,
                mean_ms: stats.mean,
                sig_verifications: counters.sig_verifications,
                hash_computations: counters.hash_computations,
                committed: counters.committed,
                rejected: counters.rejected,
                wall_s: wall,
                ledger_digest: ledger.state_digest().to_hex(),
            });
        }
        totals.push(counters);
    }

    let (e, b) = (totals[0], totals[1]);
    let mut ratios: Vec<RatioRow> = e
        .entries()
        .iter()
        .zip(b.entries())
        .map(|(&(name, ev), (_, bv))| ratio_row(name, ev as f64, bv as f64))
        .collect();
    let wall = |s: &Side| s.issue_lat.iter().chain(&s.verify_lat).map(Duration::as_secs_f64).sum::<f64>() * 1e3;
    ratios.push(ratio_row("workload_wall_ms", wall(&sides[0]), wall(&sides[1])));

    Ok(ResourceProfile {
        report: BenchReport { rows, ratios, peak_memory_kb: super::peak_memory_kb(), latency_cv: None },
        endorsement: e,
        baseline: b,
    })
}

fn ratio_row(counter: &str, endorsement: f64, baseline: f64) -> RatioRow {
    let ratio = if baseline == 0.0 {
        if endorsement == 0.0 { 1.0 } else { f64::INFINITY }
    } else {
        endorsement / baseline
    };
    RatioRow { counter: counter.into(), endorsement, baseline, ratio }
}
