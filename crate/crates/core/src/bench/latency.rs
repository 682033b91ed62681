use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Barrier;
use std::time::{Duration, Instant};

use super::{coefficient_of_variation, BenchConfig, BenchError, BenchReport, BenchRow, Fixture, LatencyStats, Point};

/// Authentication latency against parallelism. For each level `p`, `p`
/// client threads repeatedly start a round together and each runs one full
/// challenge-response flow, for `duration` seconds. A request's latency is
/// measured by its own client from issuing the challenge to the verdict.
pub fn run_auth_latency(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let need = *cfg.parallelism_levels.iter().max().expect("validated non-empty");
    let mut fixture = Fixture::build(cfg.seed, cfg.mode, cfg.tau, need)?;
    fixture.credential_devices()?;
    run_auth_latency_on(&fixture, cfg)
}

/// Runs the latency measurement against an existing credentialed fixture.
pub fn run_auth_latency_on(fixture: &Fixture, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let need = *cfg.parallelism_levels.iter().max().expect("validated non-empty");
    if fixture.credentials.len() < need {
        return Err(BenchError::InsufficientFixture { have: fixture.credentials.len(), need });
    }
    let mut rows = Vec::with_capacity(cfg.parallelism_levels.len());
    for &p in &cfg.parallelism_levels {
        rows.push(level(fixture, p, cfg));
    }
    let means: Vec<f64> = rows.iter().map(|r| r.mean_ms).collect();
    Ok(BenchReport {
        latency_cv: Some(coefficient_of_variation(&means)),
        rows,
        peak_memory_kb: super::peak_memory_kb(),
        ..Default::default()
    })
}

fn level(fixture: &Fixture, p: usize, cfg: &BenchConfig) -> BenchRow {
    let node = &fixture.node;
    let verifier = fixture.verifier();
    let before = node.ledger().counters().snapshot();
    let barrier = Barrier::new(p);
    let stop = AtomicBool::new(false);
    let deadline = Instant::now() + cfg.duration();
    let start = Instant::now();

    let samples: Vec<(Duration, bool)> = std::thread::scope(|s| {
        let clients: Vec<_> = (0..p)
            .map(|i| {
                let (barrier, stop, verifier) = (&barrier, &stop, &verifier);
                let (device_key, _) = &fixture.devices[i];
                let vc = &fixture.credentials[i];
                s.spawn(move || {
                    let mut out = Vec::new();
                    loop {
                        if barrier.wait().is_leader() {
                            stop.store(Instant::now() >= deadline, Ordering::SeqCst);
                        }
                        barrier.wait();
                        if stop.load(Ordering::SeqCst) {
                            return out;
                        }
                        let t = Instant::now();
                        let challenge = node.challenge(verifier);
                        let ok = node.authenticate(device_key, vc, &challenge).is_ok();
                        out.push((t.elapsed(), ok));
                    }
                })
            })
            .collect();
        clients.into_iter().flat_map(|c| c.join().expect("client panicked")).collect()
    });

    let wall = start.elapsed().as_secs_f64();
    let delta = node.ledger().counters().snapshot().delta(&before);
    let latencies: Vec<Duration> = samples.iter().map(|(d, _)| *d).collect();
    let accepted = samples.iter().filter(|(_, ok)| *ok).count() as u64;
    let stats = LatencyStats::from_samples(&latencies);
    BenchRow {
        mode: cfg.mode,
        point: Point::Parallelism,
        target: p as f64,
        requests: samples.len(),
        achieved_tps: samples.len() as f64 / wall,
        p50_ms: stats.p50,
        p95_ms: stats.p95,
        p99_ms: stats.p99,
        mean_ms: stats.mean,
        sig_verifications: delta.sig_verifications,
        hash_computations: delta.hash_computations,
        committed: accepted,
        rejected: samples.len() as u64 - accepted,
        wall_s: wall,
        ledger_digest: node.ledger().state_digest().to_hex(),
    }
}
