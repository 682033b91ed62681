use std::time::{Duration, Instant};

use crossbeam_channel::unbounded;
use parking_lot::{Condvar, Mutex};

use super::{BenchConfig, BenchError, BenchReport, BenchRow, Fixture, LatencyStats, Point};
use crate::ledger::{Ledger, Transaction};

/// Devices in the throughput fixture; credentials are spread across them.
const DEVICES: usize = 32;
/// Concurrent submitter threads.
const SUBMITTERS: usize = 4;
/// Workload timestamps start here, well after fixture setup.
const WORKLOAD_EPOCH: u64 = 10_000_000;

/// Open-loop issue load: for each send rate a fresh fixture receives
/// `rate * duration` pre-signed issue transactions, released on a fixed
/// schedule. Latency runs from scheduled release to receipt.
pub fn run_issue_throughput(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.send_rates.len());
    for &rate in &cfg.send_rates {
        let fixture = Fixture::build(cfg.seed, cfg.mode, cfg.tau, DEVICES)?;
        let n = rate as usize * cfg.duration_s as usize;
        let txs = fixture.issue_workload(cfg.seed.wrapping_add(rate as u64), n, WORKLOAD_EPOCH);
        rows.push(drive(fixture.ledger(), txs, rate, cfg)?);
    }
    Ok(BenchReport { rows, peak_memory_kb: super::peak_memory_kb(), ..Default::default() })
}

/// Hands out turns in sequence so concurrent submitters reach the ledger in
/// dispatch order.
struct Turnstile {
    next: Mutex<usize>,
    cv: Condvar,
}

impl Turnstile {
    fn run<R>(&self, ticket: usize, f: impl FnOnce() -> R) -> R {
        let mut next = self.next.lock();
        while *next != ticket {
            self.cv.wait(&mut next);
        }
        let r = f();
        *next += 1;
        self.cv.notify_all();
        r
    }
}

fn drive(ledger: &Ledger, txs: Vec<Transaction>, rate: u32, cfg: &BenchConfig) -> Result<BenchRow, BenchError> {
    let n = txs.len();
    let before = ledger.counters().snapshot();
    let turnstile = Turnstile { next: Mutex::new(0), cv: Condvar::new() };
    let (tx_send, tx_recv) = unbounded::<(usize, Transaction, Instant)>();
    let interval = Duration::from_secs_f64(1.0 / rate as f64);
    let start = Instant::now();

    let (latencies, finished) = std::thread::scope(|s| {
        let workers: Vec<_> = (0..SUBMITTERS)
            .map(|_| {
                let (rx, turnstile) = (tx_recv.clone(), &turnstile);
                s.spawn(move || {
                    let mut out = Vec::new();
                    for (ticket, tx, scheduled) in rx {
                        turnstile.run(ticket, || ledger.submit(tx));
                        let done = Instant::now();
                        out.push((done - scheduled, done));
                    }
                    out
                })
            })
            .collect();
        for (k, tx) in txs.into_iter().enumerate() {
            let scheduled = start + interval * k as u32;
            let now = Instant::now();
            if scheduled > now {
                std::thread::sleep(scheduled - now);
            }
            tx_send.send((k, tx, scheduled)).expect("workers outlive the dispatcher");
        }
        drop(tx_send);
        let mut latencies = Vec::with_capacity(n);
        let mut finished = start;
        for w in workers {
            for (lat, done) in w.join().expect("submitter panicked") {
                latencies.push(lat);
                finished = finished.max(done);
            }
        }
        (latencies, finished)
    });

    ledger.flush().map_err(|e| BenchError::Fixture(e.to_string()))?;
    let delta = ledger.counters().snapshot().delta(&before);
    let wall = (finished - start).as_secs_f64();
    let window = wall.max(cfg.duration_s as f64);
    let stats = LatencyStats::from_samples(&latencies);
    Ok(BenchRow {
        mode: cfg.mode,
        point: Point::Rate,
        target: rate as f64,
        requests: n,
        achieved_tps: delta.committed as f64 / window,
        p50_ms: stats.p50,
        p95_ms: stats.p95,
        p99_ms: stats.p99,
        mean_ms: stats.mean,
        sig_verifications: delta.sig_verifications,
        hash_computations: delta.hash_computations,
        committed: delta.committed,
        rejected: delta.rejected,
        wall_s: wall,
        ledger_digest: ledger.state_digest().to_hex(),
    })
}
