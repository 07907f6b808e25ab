use std::path::Path;
use std::process::{Command, Output};

fn dlacb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlacb")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn init(dir: &Path, seed: &str) {
    let o = dlacb(&["--seed", seed, "--set", "n_users=30", "--set", "n_resources=12", "init", "--dir", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&dlacb(&[])), 2);
    assert_eq!(code(&dlacb(&["frobnicate"])), 2);
    assert_eq!(code(&dlacb(&["bench", "--engine", "xacml", "--out", "x"])), 2);
    assert_eq!(code(&dlacb(&["--set", "validator_count=2", "init", "--dir", "unused"])), 2);
    assert_eq!(code(&dlacb(&["--config", "/no/such/file", "train", "--out", "w.bin"])), 2);
    assert_eq!(code(&dlacb(&["--seed", "xyz", "keygen"])), 2);
    assert_eq!(code(&dlacb(&["--help"])), 0);
}

#[test]
fn keygen_accepts_hex_seeds() {
    let seed = "11".repeat(32);
    let a = dlacb(&["--seed", &seed, "keygen"]);
    let b = dlacb(&["--seed", &seed, "keygen"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["public"].as_str().unwrap().len(), 64);
    assert_ne!(dlacb(&["--seed", "1", "keygen"]).stdout, a.stdout);
}

#[test]
fn scenario_suite_and_verification() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("world");
    let d = dir.to_str().unwrap();
    init(&dir, "5");
    assert_eq!(code(&dlacb(&["init", "--dir", d])), 2, "existing world must not be replaced silently");

    let o = dlacb(&["scenario", "--all", "--dir", d]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let reports: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(reports.as_array().unwrap().len(), 4);
    assert!(reports.as_array().unwrap().iter().all(|r| r["pass"] == true));

    assert_eq!(code(&dlacb(&["verify-chain", "--dir", d])), 0);
    assert_eq!(code(&dlacb(&["verify-log", "--dir", d])), 0);
    assert_eq!(code(&dlacb(&["tamper", "--dir", d])), 0);
    assert_eq!(code(&dlacb(&["verify-chain", "--dir", d])), 0);

    let o = dlacb(&["request", "--dir", d, "--user", "0", "--resource", "9999", "--op", "read"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("WrongResource"));
    assert_eq!(code(&dlacb(&["request", "--dir", d, "--user", "999", "--resource", "1"])), 2);
    assert_eq!(code(&dlacb(&["--seed", "3", "request", "--dir", d, "--user", "0", "--resource", "1"])), 2);

    let report = dlacb(&["report", "--dir", d]);
    assert_eq!(code(&report), 0);
    let v: serde_json::Value = serde_json::from_slice(&report.stdout).unwrap();
    assert_eq!(v["world"]["chain_valid"], true);
    assert_eq!(v["world"]["log_verified"], true);

    // Byte flip in the chain file.
    let chain = dir.join("chain.jsonl");
    let mut bytes = std::fs::read(&chain).unwrap();
    let at = bytes.len() / 2;
    bytes[at] ^= 0x01;
    let flipped = tmp.path().join("flipped.jsonl");
    std::fs::write(&flipped, &bytes).unwrap();
    assert_eq!(code(&dlacb(&["verify-chain", "--chain", flipped.to_str().unwrap()])), 1);

    // Deleting a log record.
    let log = std::fs::read_to_string(dir.join("malicious.jsonl")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert!(lines.len() > 1);
    let cut = tmp.path().join("cut.jsonl");
    std::fs::write(&cut, lines[1..].join("\n") + "\n").unwrap();
    let o = dlacb(&["verify-log", "--log", cut.to_str().unwrap(), "--chain", chain.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("Compromised"));
}

#[test]
fn data_training_and_bench_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let t = |p: &str| tmp.path().join(p).to_str().unwrap().to_string();
    assert_eq!(code(&dlacb(&["--set", "n_users=20", "gen-data", "--out", &t("data")])), 0);
    let train_csv = std::fs::read_to_string(tmp.path().join("data/train.csv")).unwrap();
    assert!(train_csv.lines().count() > 1);

    let o = dlacb(&["--set", "n_users=20", "--set", "epochs=30", "train", "--out", &t("w.bin")]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["train_accuracy"].as_f64().unwrap() > 0.5);

    let o = dlacb(&[
        "--set", "n_users=20", "bench", "--weights", &t("w.bin"), "--n", "200", "--threads", "1,2",
        "--scale", "1,3", "--repeats", "1", "--out", &t("bench"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("bench/bench.csv")).unwrap();
    assert!(csv.starts_with("engine,threads,scale,n,mean_ns,median_ns,p95_ns,throughput\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 2 * 2);
    let decisions = std::fs::read_to_string(tmp.path().join("bench/decisions.csv")).unwrap();
    assert_eq!(decisions.lines().count(), 1 + 4 * 2 * 200);

    let o = dlacb(&["report", "--bench", &t("bench/bench.csv")]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["bench"]["abac@1"]["scale_ratio"].as_f64().is_some());
}

#[test]
fn policy_files_override_generated_policies() {
    let tmp = tempfile::tempdir().unwrap();
    let rbac = tmp.path().join("rbac.csv");
    let abac = tmp.path().join("abac.csv");
    std::fs::write(&rbac, "classes,1\nrole,0\ngrant,0,0,*\n").unwrap();
    std::fs::write(&abac, "rule,0,deny,*\n").unwrap();
    let out = tmp.path().join("b");
    let o = dlacb(&[
        "--set", "n_users=20", "--set", "epochs=5",
        "--set", &format!("rbac_policy={}", rbac.display()),
        "--set", &format!("abac_policy={}", abac.display()),
        "bench", "--engine", "rbac,abac", "--n", "50", "--scale", "1", "--repeats", "1",
        "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = std::fs::read_to_string(out.join("decisions.csv")).unwrap();
    for line in d.lines().skip(1) {
        let want = if line.starts_with("rbac,") { "allow" } else { "deny" };
        assert!(line.ends_with(want), "{line}");
    }
    std::fs::write(&abac, "rule,0,perhaps,*\n").unwrap();
    let o = dlacb(&[
        "--set", &format!("abac_policy={}", abac.display()),
        "bench", "--engine", "abac", "--n", "5", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}
