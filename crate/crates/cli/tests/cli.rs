use std::path::Path;
use std::process::{Command, Output};

use keyrate::io::{read_rows, to_json};
use keyrate::opalg::Cardinalities;
use keyrate::scenarios::{werner_chsh, Behavior};

fn keyrate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keyrate")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn behavior_file(dir: &Path, name: &str, b: &Behavior) -> String {
    let path = dir.join(name);
    std::fs::write(&path, to_json(b).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn table(f: impl Fn(usize, usize, usize, usize) -> f64) -> Behavior {
    let card = Cardinalities::chsh();
    let mut t = vec![0.0; card.table_len()];
    for a in 0..2 {
        for b in 0..2 {
            for x in 0..2 {
                for y in 0..2 {
                    t[card.index(a, b, x, y)] = f(a, b, x, y);
                }
            }
        }
    }
    Behavior { card, table: t, pe_inputs: (2, 2), key: (0, 0) }
}

#[test]
fn unit_budget_sweep_writes_zero_bounds() {
    let o = keyrate(&["rate", "--grid", "0,0.05", "--constraints", "chsh", "--lambda-budget", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(o.stdout.as_slice()).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert_eq!(r.status, "ok");
        assert!(r.bound_bits.unwrap().abs() < 1e-9);
        assert_eq!(r.evaluations, 1);
    }
}

#[test]
fn rows_go_to_the_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rows.csv");
    let o = keyrate(&["rate", "--grid", "0.1", "--constraints", "chsh", "--lambda-budget", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let rows = read_rows(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows[0].parameter, 0.1);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&keyrate(&["rate", "--grid", ""])), 64);
    assert_eq!(code(&keyrate(&["rate", "--grid", "0.1", "--scenario", "nope"])), 64);
    assert_eq!(code(&keyrate(&["rate", "--grid", "0.1", "--lambda-budget", "0"])), 64);
    assert_eq!(code(&keyrate(&["rate", "--grid", "0.1", "--level", "x"])), 64);
    assert_eq!(code(&keyrate(&["frobnicate"])), 64);
    assert_eq!(code(&keyrate(&["verify", "--cases", "0"])), 64);
}

#[test]
fn failed_rows_exit_2() {
    let o = keyrate(&["rate", "--grid", "0.1,0.9", "--constraints", "chsh", "--lambda-budget", "1"]);
    assert_eq!(code(&o), 2);
    let rows = read_rows(o.stdout.as_slice()).unwrap();
    assert_eq!(rows[0].status, "ok");
    assert_ne!(rows[1].status, "ok");
}

#[test]
fn bound_reports_json() {
    let dir = tempfile::tempdir().unwrap();
    let (_, b) = werner_chsh(0.02).unwrap();
    let path = behavior_file(dir.path(), "werner.json", &b);
    let o = keyrate(&["bound", "--behavior", &path, "--constraints", "chsh", "--lambda-budget", "6"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let bits = v["bound"]["bits"].as_f64().unwrap();
    assert!(bits > 0.0 && bits < 1.0, "{bits}");
    assert!(v["h_ab_bits"].as_f64().unwrap() > 0.0);
    assert_eq!(v["bound"]["diagnostics"]["evaluations"].as_u64(), Some(6));
}

#[test]
fn bad_behaviors_exit_65() {
    let dir = tempfile::tempdir().unwrap();
    // Alice's outcome reveals Bob's setting.
    let signaling = table(|a, b, _, y| if a == y && b == 0 { 1.0 } else { 0.0 });
    let path = behavior_file(dir.path(), "signaling.json", &signaling);
    assert_eq!(code(&keyrate(&["bound", "--behavior", &path])), 65);
    let missing = dir.path().join("missing.json");
    assert_eq!(code(&keyrate(&["bound", "--behavior", missing.to_str().unwrap()])), 65);
    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{").unwrap();
    assert_eq!(code(&keyrate(&["bound", "--behavior", garbage.to_str().unwrap()])), 65);
}

#[test]
fn nonquantum_behavior_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let pr = table(|a, b, x, y| if (a ^ b) == (x & y) { 0.5 } else { 0.0 });
    let path = behavior_file(dir.path(), "pr.json", &pr);
    let o = keyrate(&["bound", "--behavior", &path, "--lambda-budget", "2"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_is_deterministic() {
    let a = keyrate(&["verify", "--seed", "4", "--cases", "6"]);
    let b = keyrate(&["verify", "--seed", "4", "--cases", "6"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["inequality_violations"].as_u64(), Some(0));
    assert_eq!(v["cases"].as_u64(), Some(6));
}
