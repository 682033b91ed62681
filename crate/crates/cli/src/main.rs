use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ssivdr::bench::{self, BenchConfig, BenchReport, BenchRow};
use ssivdr::crypto::{digest, generate_keypair, KeyPair};
use ssivdr::identity::{Claim, DeviceType, Did, IdentityRecord, Rationale, VcId, VerifiableCredential};
use ssivdr::ledger::{self, AuditReport, Genesis, Ledger, Mode, VerifyOutcome, DEFAULT_BATCH_LIMIT};
use ssivdr::node::{DeviceBinding, LogicalClock, Node, NodeError};
use ssivdr::trust::{Threshold, DEFAULT_TAU};

/// Self-sovereign identity registry for IoT device lifecycles.
#[derive(Parser)]
#[command(name = "ssivdr", version)]
struct Cli {
    /// Ledger file; created from --genesis when it does not exist yet.
    #[arg(long, global = true, env = "SSIVDR_LEDGER")]
    ledger: Option<PathBuf>,
    /// Genesis file used to create a new ledger.
    #[arg(long, global = true)]
    genesis: Option<PathBuf>,
    /// Directory holding named key files.
    #[arg(long, global = true, env = "SSIVDR_KEYS", default_value = "keys")]
    keys: PathBuf,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a named Ed25519 key pair.
    Keygen {
        name: String,
        /// Derive the key from a seed instead of OS entropy.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Write a genesis file naming the manufacturers (and create --ledger).
    Genesis {
        #[arg(long = "manufacturer", required = true)]
        manufacturers: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value = "endorsement")]
        mode: Mode,
        #[arg(long, default_value_t = DEFAULT_BATCH_LIMIT)]
        batch_limit: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register a user, or a device when --owner is given.
    Register {
        #[arg(long)]
        key: String,
        #[arg(long)]
        owner: Option<String>,
        #[arg(long = "type", requires = "owner", default_value = "strong")]
        device_type: DeviceType,
    },
    /// Endorse another issuer with a score in [0, 1].
    Endorse {
        #[arg(long)]
        key: String,
        #[arg(long)]
        subject: String,
        #[arg(long)]
        score: f64,
    },
    /// Let a manufacturer designate a proxy issuer.
    DesignateProxy {
        #[arg(long)]
        key: String,
        #[arg(long)]
        proxy: String,
        #[arg(long, default_value_t = DEFAULT_TAU)]
        min_trust: f64,
    },
    /// Onboard a registered user as a credential issuer.
    Onboard {
        #[arg(long)]
        key: String,
    },
    /// Issue a credential to a registered device.
    Issue {
        #[arg(long)]
        key: String,
        #[arg(long)]
        holder: String,
        /// Claim as key=value; repeatable.
        #[arg(long = "claim")]
        claims: Vec<String>,
    },
    /// Check a credential; with --key the check is logged on the ledger.
    Verify {
        #[arg(long)]
        vc: VcId,
        #[arg(long)]
        key: Option<String>,
    },
    /// Revoke a credential.
    Revoke {
        #[arg(long)]
        key: String,
        #[arg(long)]
        vc: VcId,
        /// compromised, stolen, ownership_transfer or other:<text>
        #[arg(long, default_value = "compromised")]
        reason: Rationale,
    },
    /// Transfer a device to a new owner.
    Transfer {
        #[arg(long)]
        key: String,
        #[arg(long)]
        device: String,
        /// Key name of the new owner, who signs the replacement credential.
        #[arg(long)]
        to: String,
    },
    /// Bind a weak device to a strong device with the same owner.
    Bind {
        #[arg(long)]
        key: String,
        #[arg(long)]
        strong: String,
        #[arg(long)]
        weak: String,
        /// Where to write the binding (printed otherwise).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a challenge-response authentication for a device credential.
    Auth {
        /// The holder's key, or the strong device's key with --binding.
        #[arg(long)]
        key: String,
        #[arg(long)]
        vc: VcId,
        #[arg(long)]
        binding: Option<PathBuf>,
        #[arg(long)]
        verifier: Option<String>,
    },
    /// Benchmarks comparing the endorsement framework with the baseline.
    Bench {
        #[command(subcommand)]
        kind: BenchKind,
    },
    /// Ledger file maintenance.
    Ledger {
        #[command(subcommand)]
        op: LedgerOp,
    },
    /// Trust graph inspection.
    Trustgraph {
        #[command(subcommand)]
        op: GraphOp,
    },
    /// Scripted lifecycle: manufacturer, proxy, user, device, transfer, revoke.
    Demo {
        #[arg(long, default_value_t = DEFAULT_TAU)]
        tau: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum BenchKind {
    /// Issue throughput against open-loop send rates.
    Throughput(BenchArgs),
    /// Authentication latency against client parallelism.
    Latency(BenchArgs),
    /// Operation counters and issue cost, endorsement over baseline.
    Resource(BenchArgs),
}

#[derive(Args)]
struct BenchArgs {
    /// Run one mode only; both modes run by default.
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long, value_delimiter = ',', default_value = "25,50,100,200")]
    rates: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "1,4,16,64")]
    parallel: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    duration: u64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum LedgerOp {
    /// Check the file byte for byte and report the first broken height.
    Audit,
    /// Rebuild state from the chain and print its digest.
    Replay,
    /// Write the replayed state as canonical text.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum GraphOp {
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// A request the registry refused; exits with status 1.
#[derive(Debug)]
struct Rejected(String);

impl fmt::Display for Rejected {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Rejected {}

fn rejected(msg: impl fmt::Display) -> anyhow::Error {
    Rejected(msg.to_string()).into()
}

fn node_err(e: NodeError) -> anyhow::Error {
    match e {
        NodeError::Identity(_) | NodeError::Canonical(_) => anyhow!(e),
        other => rejected(other),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Rejected>() => {
            eprintln!("rejected: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let keys = KeyStore(cli.keys.clone());
    let (ledger_path, genesis_path) = (cli.ledger.clone(), cli.genesis.clone());
    match cli.cmd {
        Command::Keygen { ref name, seed, force } => keygen(&keys, name, seed, force),
        Command::Genesis { ref manufacturers, tau, mode, batch_limit, ref out } => {
            let pks = manufacturers.iter().map(|m| keys.load(m).map(|k| k.public())).collect::<Result<Vec<_>>>()?;
            let genesis = Genesis::new(&pks, Threshold::new(tau)?, batch_limit, mode)?;
            std::fs::write(out, genesis.to_text()).with_context(|| format!("writing {}", out.display()))?;
            println!("genesis {} ({} manufacturers, tau {tau}, mode {mode})", genesis.digest(), pks.len());
            if let Some(path) = &cli.ledger {
                Ledger::create_file(path, genesis)?;
                println!("created ledger {}", path.display());
            }
            Ok(())
        }
        Command::Bench { kind } => run_bench(kind),
        Command::Ledger { ref op } => ledger_op(&cli, op),
        Command::Demo { tau, seed } => demo(tau, seed, cli.ledger.as_deref()),
        cmd => {
            let session = Session::open(ledger_path.as_deref(), genesis_path.as_deref(), keys)?;
            let result = session.dispatch(cmd);
            session.node.ledger().flush()?;
            result
        }
    }
}

struct KeyStore(PathBuf);

impl KeyStore {
    fn path(&self, name: &str) -> PathBuf {
        self.0.join(format!("{name}.key"))
    }

    fn load(&self, name: &str) -> Result<KeyPair> {
        let path = self.path(name);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading key {}", path.display()))?;
        let mut seed = [0u8; 32];
        hex_decode(text.trim(), &mut seed).with_context(|| format!("{} is not a key file", path.display()))?;
        Ok(generate_keypair(Some(&seed))?)
    }

    /// A DID literal, or the DID of a named key.
    fn resolve(&self, name_or_did: &str) -> Result<Did> {
        if name_or_did.starts_with("did:") {
            return Ok(name_or_did.parse()?);
        }
        Ok(Did::from_key(&self.load(name_or_did)?.public()))
    }
}

fn hex_decode(s: &str, out: &mut [u8; 32]) -> Result<()> {
    if s.len() != 64 {
        bail!("expected 64 hex characters");
    }
    for (i, byte) in out.iter_mut().enumerate() {
        *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16)?;
    }
    Ok(())
}

fn keygen(keys: &KeyStore, name: &str, seed: Option<u64>, force: bool) -> Result<()> {
    let path = keys.path(name);
    if path.exists() && !force {
        bail!("{} exists; pass --force to overwrite", path.display());
    }
    let key = match seed {
        Some(seed) => generate_keypair(Some(&digest(format!("keygen/{seed}/{name}").as_bytes()).0))?,
        None => generate_keypair(None)?,
    };
    std::fs::create_dir_all(&keys.0)?;
    let secret: String = key.secret_bytes().iter().map(|b| format!("{b:02x}")).collect();
    std::fs::write(&path, secret + "\n")?;
    println!("{name}: {} key {}", Did::from_key(&key.public()), key.public().to_hex());
    Ok(())
}

struct Session {
    node: Node,
    keys: KeyStore,
}

impl Session {
    fn open(ledger: Option<&Path>, genesis: Option<&Path>, keys: KeyStore) -> Result<Self> {
        let path = ledger.ok_or_else(|| anyhow!("no ledger given; pass --ledger or set SSIVDR_LEDGER"))?;
        let ledger = if path.exists() {
            Ledger::open_file(path).with_context(|| format!("opening {}", path.display()))?
        } else {
            let g = genesis.ok_or_else(|| anyhow!("{} does not exist; pass --genesis to create it", path.display()))?;
            Ledger::create_file(path, Genesis::load(g)?)?
        };
        Ok(Session { node: Node::new(Arc::new(ledger)), keys })
    }

    fn record(&self, did: &Did) -> Result<IdentityRecord> {
        self.node.ledger().read(|s| s.identity(did).cloned()).ok_or_else(|| rejected(format!("{did} is not registered")))
    }

    fn credential(&self, vc_id: &VcId) -> Result<VerifiableCredential> {
        self.node
            .ledger()
            .read(|s| s.credential(vc_id).map(|e| e.credential.clone()))
            .ok_or_else(|| rejected(format!("credential {vc_id} is not on the ledger")))
    }

    fn dispatch(&self, cmd: Command) -> Result<()> {
        let node = &self.node;
        match cmd {
            Command::Register { key, owner: None, .. } => {
                let r = node.register_user(&self.keys.load(&key)?).map_err(node_err)?;
                println!("registered user {}", r.did);
            }
            Command::Register { key, owner: Some(owner), device_type } => {
                let device = self.keys.load(&key)?.public();
                let r = node.register_device(&self.keys.load(&owner)?, &device, device_type).map_err(node_err)?;
                let kind = if device_type == DeviceType::Strong { "strong" } else { "weak" };
                println!("registered {kind} device {} owned by {}", r.did, r.owner.expect("device has owner"));
            }
            Command::Endorse { key, subject, score } => {
                let subject = self.keys.resolve(&subject)?;
                node.endorse(&self.keys.load(&key)?, &subject, score).map_err(node_err)?;
                println!("endorsed {subject} with {score}");
            }
            Command::DesignateProxy { key, proxy, min_trust } => {
                let proxy = self.keys.resolve(&proxy)?;
                node.designate_proxy(&self.keys.load(&key)?, &proxy, Threshold::new(min_trust)?).map_err(node_err)?;
                println!("designated {proxy} as proxy");
            }
            Command::Onboard { key } => {
                let key = self.keys.load(&key)?;
                let record = self.record(&Did::from_key(&key.public()))?;
                let score = node.onboard_issuer(&record, &key).map_err(node_err)?;
                println!("onboarded {} with trust {score}", record.did);
            }
            Command::Issue { key, holder, claims } => {
                let device = self.record(&self.keys.resolve(&holder)?)?;
                let claims = claims
                    .iter()
                    .map(|c| c.split_once('=').map(|(k, v)| Claim::new(k, v)).ok_or_else(|| anyhow!("claim {c:?} is not key=value")))
                    .collect::<Result<Vec<_>>>()?;
                let vc = node.issue_device_credential(&self.keys.load(&key)?, &device, claims).map_err(node_err)?;
                println!("issued {} to {}", vc.vc_id, vc.holder);
            }
            Command::Verify { vc, key } => {
                let outcome = match key {
                    Some(key) => node.verify_on_ledger(&self.keys.load(&key)?, &vc).map_err(node_err)?,
                    None => node.ledger().query(&vc),
                };
                match outcome {
                    VerifyOutcome::Valid => println!("{vc}: valid"),
                    invalid => return Err(rejected(format!("{vc}: {invalid}"))),
                }
            }
            Command::Revoke { key, vc, reason } => {
                node.revoke_credential(&self.keys.load(&key)?, &vc, reason.clone()).map_err(node_err)?;
                println!("revoked {vc} ({reason})");
            }
            Command::Transfer { key, device, to } => {
                let device = self.record(&self.keys.resolve(&device)?)?;
                let new_key = self.keys.load(&to)?;
                let new_owner = self.record(&Did::from_key(&new_key.public()))?;
                let vc = node.transfer_ownership(&self.keys.load(&key)?, &new_owner, &new_key, &device).map_err(node_err)?;
                println!("transferred {} to {}; new credential {}", device.did, new_owner.did, vc.vc_id);
            }
            Command::Bind { key, strong, weak, out } => {
                let strong = self.record(&self.keys.resolve(&strong)?)?;
                let weak = self.record(&self.keys.resolve(&weak)?)?;
                let binding = node.bind_weak_device(&self.keys.load(&key)?, &strong, &weak).map_err(node_err)?;
                let text = serde_json::to_string_pretty(&binding)?;
                match out {
                    Some(path) => {
                        std::fs::write(&path, text)?;
                        println!("bound {} to {} ({})", weak.did, strong.did, path.display());
                    }
                    None => println!("{text}"),
                }
            }
            Command::Auth { key, vc, binding, verifier } => {
                let key = self.keys.load(&key)?;
                let vc = self.credential(&vc)?;
                let verifier = match verifier {
                    Some(v) => self.keys.resolve(&v)?,
                    None => node.ledger().genesis().manufacturers[0].did.clone(),
                };
                let challenge = node.challenge(&verifier);
                let result = match binding {
                    Some(path) => {
                        let binding: DeviceBinding = serde_json::from_str(&std::fs::read_to_string(&path)?)
                            .with_context(|| format!("reading binding {}", path.display()))?;
                        node.delegated_authenticate(&key, &binding, &vc, &challenge)
                    }
                    None => node.authenticate(&key, &vc, &challenge),
                };
                match result {
                    Ok(()) => println!("authenticated {} for {verifier}", vc.holder),
                    Err(e) => return Err(rejected(format!("authentication failed: {e}"))),
                }
            }
            Command::Trustgraph { op: GraphOp::Export { out } } => {
                let text = node.ledger().read(|s| s.trust_graph().export());
                emit(out.as_deref(), &text)?;
            }
            Command::Keygen { .. }
            | Command::Genesis { .. }
            | Command::Bench { .. }
            | Command::Ledger { .. }
            | Command::Demo { .. } => unreachable!("handled before opening a session"),
        }
        Ok(())
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn ledger_op(cli: &Cli, op: &LedgerOp) -> Result<()> {
    let path = cli.ledger.as_ref().ok_or_else(|| anyhow!("no ledger given; pass --ledger or set SSIVDR_LEDGER"))?;
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    match op {
        LedgerOp::Audit => match ledger::audit(&bytes) {
            AuditReport::Intact { blocks } => {
                println!("intact: {blocks} blocks");
                Ok(())
            }
            AuditReport::HeaderCorrupt(reason) => Err(rejected(format!("broken at header: {reason}"))),
            AuditReport::Broken { height, reason } => Err(rejected(format!("broken at height {height}: {reason}"))),
        },
        LedgerOp::Replay | LedgerOp::Export { .. } => {
            let (genesis, chain) = ledger::parse_ledger(&bytes)?;
            let state = ledger::replay(&genesis, &chain).map_err(rejected)?;
            if let LedgerOp::Export { out } = op {
                return emit(out.as_deref(), &String::from_utf8(state.canonical_bytes())?);
            }
            let txs: usize = chain.iter().map(|b| b.transactions.len()).sum();
            println!("blocks {}  transactions {txs}", chain.len());
            println!("identities {}  issuers {}", state.identities().count(), state.onboarded_issuers().len());
            println!("credentials {}  verifications {}", state.credentials().count(), state.verification_log().len());
            println!("state digest {}", state.digest());
            Ok(())
        }
    }
}

fn run_bench(kind: BenchKind) -> Result<()> {
    let (name, args) = match &kind {
        BenchKind::Throughput(a) => ("throughput", a),
        BenchKind::Latency(a) => ("latency", a),
        BenchKind::Resource(a) => ("resource", a),
    };
    let tau = Threshold::new(args.tau)?;
    let cfg = |mode| BenchConfig {
        mode,
        send_rates: args.rates.clone(),
        parallelism_levels: args.parallel.clone(),
        duration_s: args.duration,
        tau,
        seed: args.seed,
        out_dir: Some(args.out.clone()),
    };
    let modes = args.mode.map_or(vec![Mode::Endorsement, Mode::Baseline], |m| vec![m]);
    let mut report = BenchReport::default();
    match kind {
        BenchKind::Throughput(_) | BenchKind::Latency(_) => {
            for &mode in &modes {
                let part = match kind {
                    BenchKind::Throughput(_) => bench::run_issue_throughput(&cfg(mode))?,
                    _ => bench::run_auth_latency(&cfg(mode))?,
                };
                if let Some(cv) = part.latency_cv {
                    println!("{mode}: coefficient of variation of mean latency {cv:.3}");
                }
                report.rows.extend(part.rows);
                report.peak_memory_kb = part.peak_memory_kb;
            }
            print_rows(&report.rows);
        }
        BenchKind::Resource(_) => {
            let profile = bench::run_resource_profile(&cfg(Mode::Endorsement))?;
            report = profile.report;
            print_rows(&report.rows);
            println!("{:<20} {:>12} {:>12} {:>8}", "counter", "endorsement", "baseline", "ratio");
            for r in &report.ratios {
                println!("{:<20} {:>12.0} {:>12.0} {:>8.3}", r.counter, r.endorsement, r.baseline, r.ratio);
            }
        }
    }
    if let Some(kb) = report.peak_memory_kb {
        println!("peak memory {kb} kB");
    }
    for path in bench::write_outputs(&args.out, name, &report)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn print_rows(rows: &[BenchRow]) {
    println!(
        "{:<12} {:<12} {:>7} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "mode", "point", "target", "tps", "p50_ms", "p95_ms", "p99_ms", "mean_ms", "rejected"
    );
    for r in rows {
        println!(
            "{:<12} {:<12} {:>7} {:>9.2} {:>9.3} {:>9.3} {:>9.3} {:>9.3} {:>9}",
            r.mode.to_string(),
            format!("{:?}", r.point).to_lowercase(),
            r.target,
            r.achieved_tps,
            r.p50_ms,
            r.p95_ms,
            r.p99_ms,
            r.mean_ms,
            r.rejected
        );
    }
}

fn demo(tau: f64, seed: u64, save: Option<&Path>) -> Result<()> {
    let key = |label: &str| generate_keypair(Some(&digest(format!("demo/{seed}/{label}").as_bytes()).0));
    let (m, p, u, v, d, w) = (key("manufacturer")?, key("proxy")?, key("alice")?, key("bob")?, key("camera")?, key("sensor")?);
    let threshold = Threshold::new(tau)?;
    let genesis = Genesis::new(&[m.public()], threshold, DEFAULT_BATCH_LIMIT, Mode::Endorsement)?;
    let ledger = Arc::new(Ledger::new(genesis));
    let node = Node::deterministic(ledger.clone(), Arc::new(LogicalClock::starting_at(1_000)), seed);
    let did = |k: &KeyPair| Did::from_key(&k.public());
    let mut step = 0;
    let mut say = |text: String| {
        step += 1;
        println!("[{step:>2}] {text}");
    };

    say(format!("genesis: manufacturer {} is the root of trust (tau {tau}, mode endorsement)", did(&m)));
    let proxy = node.register_user(&p).map_err(node_err)?;
    node.endorse(&m, &proxy.did, 0.9).map_err(node_err)?;
    say(format!("proxy {} registered and endorsed by the manufacturer with 0.9", proxy.did));
    let score = node.onboard_issuer(&proxy, &p).map_err(node_err)?;
    node.designate_proxy(&m, &proxy.did, threshold).map_err(node_err)?;
    say(format!("proxy onboarded as issuer with trust {score} and designated as the manufacturer's proxy"));

    let alice = node.register_user(&u).map_err(node_err)?;
    node.endorse(&p, &alice.did, 0.8).map_err(node_err)?;
    let score = node.onboard_issuer(&alice, &u).map_err(node_err)?;
    say(format!("user alice {} endorsed by the proxy with 0.8 and onboarded with trust {score}", alice.did));

    let camera = node.register_device(&u, &d.public(), DeviceType::Strong).map_err(node_err)?;
    let sensor = node.register_device(&u, &w.public(), DeviceType::Weak).map_err(node_err)?;
    let cam_vc = node
        .issue_device_credential(&u, &camera, vec![Claim::new("model", "cam-2"), Claim::new("firmware", "1.4")])
        .map_err(node_err)?;
    let sensor_vc = node.issue_device_credential(&u, &sensor, vec![Claim::new("model", "th-1")]).map_err(node_err)?;
    say(format!("alice registered camera {} and sensor {}, issued {} and {}", camera.did, sensor.did, cam_vc.vc_id, sensor_vc.vc_id));

    let verifier = did(&m);
    let auth = |k: &KeyPair, vc: &VerifiableCredential| match node.authenticate(k, vc, &node.challenge(&verifier)) {
        Ok(()) => "accepted".to_string(),
        Err(e) => format!("rejected ({e})"),
    };
    say(format!("camera authenticates with {}: {}", cam_vc.vc_id, auth(&d, &cam_vc)));
    let binding = node.bind_weak_device(&u, &camera, &sensor).map_err(node_err)?;
    let delegated = |vc: &VerifiableCredential| match node.delegated_authenticate(&d, &binding, vc, &node.challenge(&verifier)) {
        Ok(()) => "accepted".to_string(),
        Err(e) => format!("rejected ({e})"),
    };
    say(format!("sensor bound to camera; camera answers for the sensor: {}", delegated(&sensor_vc)));

    let bob = node.register_user(&v).map_err(node_err)?;
    node.endorse(&p, &bob.did, 0.85).map_err(node_err)?;
    say(format!("user bob {} registered and endorsed by the proxy with 0.85", bob.did));
    let new_vc = node.transfer_ownership(&u, &bob, &v, &camera).map_err(node_err)?;
    let bob_score = ledger.read(|s| s.onboarded_issuers().get(&bob.did).copied());
    say(format!(
        "camera transferred to bob (onboarded in the same step with trust {}); new credential {}",
        bob_score.map_or("-".into(), |s| s.to_string()),
        new_vc.vc_id
    ));
    say(format!("old credential {}: {}", cam_vc.vc_id, ledger.query(&cam_vc.vc_id)));
    say(format!("camera with the old credential: {}", auth(&d, &cam_vc)));
    say(format!("camera with the new credential: {}", auth(&d, &new_vc)));
    say(format!("sensor delegation after the transfer: {}", delegated(&sensor_vc)));

    node.revoke_credential(&v, &new_vc.vc_id, Rationale::Compromised).map_err(node_err)?;
    let outcome = node.verify_on_ledger(&m, &new_vc.vc_id).map_err(node_err)?;
    say(format!("bob revoked {} as compromised; logged verification: {outcome}", new_vc.vc_id));
    say(format!("camera with the revoked credential: {}", auth(&d, &new_vc)));

    ledger.flush()?;
    let chain = ledger.chain();
    let replayed = ledger::replay(&ledger.genesis(), &chain)?;
    say(format!(
        "ledger: {} blocks, state digest {}, replay {}",
        chain.len(),
        ledger.state_digest(),
        if replayed.digest() == ledger.state_digest() { "matches" } else { "DIFFERS" }
    ));
    if let Some(path) = save {
        ledger.write_to(path)?;
        say(format!("ledger written to {}", path.display()));
    }
    Ok(())
}
