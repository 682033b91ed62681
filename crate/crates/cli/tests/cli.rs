use std::path::Path;
use std::process::{Command, Output};

fn ssivdr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssivdr"))
        .current_dir(dir)
        .env("SSIVDR_LEDGER", dir.join("site.ledger"))
        .env("SSIVDR_KEYS", dir.join("keys"))
        .args(args)
        .output()
        .expect("run ssivdr")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ssivdr(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn demo_runs_the_full_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["demo", "--tau", "0.5", "--seed", "7"]);
    for needle in ["onboarded", "transferred to bob", "revoked", "replay matches"] {
        assert!(out.contains(needle), "missing {needle:?} in\n{out}");
    }
    // same seed, same transcript
    assert_eq!(out, ok(dir.path(), &["demo", "--tau", "0.5", "--seed", "7"]));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ssivdr(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(ssivdr(dir.path(), &["bench", "throughput", "--rates", "0"]).status.code(), Some(2));
    assert_eq!(ssivdr(dir.path(), &["onboard", "--key", "nobody"]).status.code(), Some(2));
}

#[test]
fn registry_refusals_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for name in ["acme", "alice", "cam"] {
        ok(d, &["keygen", name, "--seed", "3"]);
    }
    ok(d, &["genesis", "--manufacturer", "acme", "--out", "genesis.json"]);
    ok(d, &["register", "--key", "alice"]);

    // no endorsements yet
    assert_eq!(ssivdr(d, &["onboard", "--key", "alice"]).status.code(), Some(1));

    ok(d, &["endorse", "--key", "acme", "--subject", "alice", "--score", "0.9"]);
    assert!(ok(d, &["onboard", "--key", "alice"]).contains("0.9000"));
    ok(d, &["register", "--key", "cam", "--owner", "alice", "--type", "strong"]);
    let issued = ok(d, &["issue", "--key", "alice", "--holder", "cam", "--claim", "model=x"]);
    let vc = issued.split_whitespace().nth(1).unwrap().to_string();

    ok(d, &["auth", "--key", "cam", "--vc", &vc]);
    // the manufacturer is not the holder
    assert_eq!(ssivdr(d, &["auth", "--key", "acme", "--vc", &vc]).status.code(), Some(1));

    ok(d, &["verify", "--vc", &vc]);
    ok(d, &["revoke", "--key", "alice", "--vc", &vc, "--reason", "stolen"]);
    let out = ssivdr(d, &["verify", "--vc", &vc]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Revoked"));

    assert!(ok(d, &["ledger", "audit"]).starts_with("intact"));
    let replay = ok(d, &["ledger", "replay"]);
    assert!(replay.contains("credentials 1"), "{replay}");
    assert!(ok(d, &["trustgraph", "export"]).starts_with(r#"{"fmt":"1""#));
}

#[test]
fn audit_reports_the_broken_height() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["demo", "--seed", "1", "--ledger", "demo.ledger"]);
    let mut bytes = std::fs::read(d.join("demo.ledger")).unwrap();
    let second_block = bytes.iter().enumerate().filter(|(_, &b)| b == b'\n').nth(1).unwrap().0 + 1;
    bytes[second_block + 30] ^= 0x20;
    std::fs::write(d.join("bad.ledger"), &bytes).unwrap();

    let out = ssivdr(d, &["ledger", "audit", "--ledger", "bad.ledger"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken at height 1"));
}
