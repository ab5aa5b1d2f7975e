use std::fs;
use std::path::Path;

use prnet::cli::run_with_io;
use prnet::joint::{build_joint, PartyOrdering};
use prnet::strategy::sample_random_network;
use prnet::{BoxCounts, NetworkStrategy, Outcome, SettingTriple};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("prnet").chain(args.iter().copied());
    let code = run_with_io(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_network(dir: &Path, name: &str, n: &NetworkStrategy) -> String {
    let path = dir.join(name);
    fs::write(&path, n.to_json()).unwrap();
    path.display().to_string()
}

fn trivial_file(dir: &Path) -> String {
    write_network(dir, "trivial.json", &NetworkStrategy::trivial(BoxCounts::uniform(1), Outcome::Plus))
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run(&["validate", &trivial_file(dir.path())]);
    assert_eq!(code, 0, "{out}");

    let mut broken = NetworkStrategy::trivial(BoxCounts::uniform(1), Outcome::Plus);
    broken.party_mut(prnet::PartyId::Bob).trees[0].as_mut().unwrap().on0 = None;
    let (code, out, _) = run(&["validate", &write_network(dir.path(), "broken.json", &broken)]);
    assert_eq!(code, 1);
    assert!(out.contains("missing child"), "{out}");

    let (code, _, err) = run(&["validate", "/definitely/not/here.json"]);
    assert_eq!(code, 2);
    assert!(err.contains("file not found"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["frobnicate"]).0, 2);
    assert_eq!(run(&["behavior"]).0, 2);
    assert_eq!(run(&["search", "--counts", "2,2,2"]).0, 2);
    assert_eq!(run(&["behavior", "--quantum", "--ordering", "AAB"]).0, 2);
    assert_eq!(run(&["--help"]).0, 0);
}

#[test]
fn behavior_of_trivial_network() {
    let dir = tempfile::tempdir().unwrap();
    let file = trivial_file(dir.path());
    let out_dir = dir.path().join("run");
    let (code, out, _) = run(&["behavior", &file, "--check-orderings", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("E(F) = 1/8"), "{out}");
    assert!(out.contains("bound satisfied (tight)"));
    assert!(out.contains("6/6 orderings identical"));
    for f in ["behavior.json", "behavior.csv", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(out_dir.join("behavior.csv")).unwrap();
    assert!(csv.starts_with("settings,+++,++0,+0+,+00,0++,0+0,00+,000\nabc,1,0,0,0,0,0,0,0"), "{csv}");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "behavior");
    assert_eq!(manifest["exit_code"], 0);
}

#[test]
fn quantum_behavior_violates() {
    let (code, out, _) = run(&["behavior", "--quantum"]);
    assert_eq!(code, 0);
    assert!(out.contains("0.0732233"), "{out}");
    assert!(out.contains("bound VIOLATED"));
    assert!(out.contains("2C") || out.contains("0.2133883"), "{out}");
}

#[test]
fn exact_outputs_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_network(dir.path(), "r.json", &sample_random_network(BoxCounts::uniform(2), 7).unwrap());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        assert_eq!(run(&["behavior", &file, "--ordering", "CAB", "--out", d.to_str().unwrap()]).0, 0);
    }
    for f in ["behavior.json", "behavior.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let (_, json, _) = run(&["behavior", &file, "--format", "json"]);
    assert!(json.contains("\"mode\": \"exact\""));
}

#[test]
fn monte_carlo_mode() {
    let dir = tempfile::tempdir().unwrap();
    let file = trivial_file(dir.path());
    let (code, out, err) = run(&["behavior", &file, "--mode", "mc", "--rounds", "20000", "--seed", "3"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("E(F) = 0.1250000"), "{out}");
    assert!(err.contains("\"seed\": 3"));
}

#[test]
fn verify_random_network() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_network(dir.path(), "r.json", &sample_random_network(BoxCounts::new(1, 2, 1), 2).unwrap());
    let (code, out, _) = run(&["verify", &file]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("all checks passed"));
    assert!(!out.contains("[FAIL]"));
}

#[test]
fn verify_lp_only_and_quantum() {
    let (code, out, _) = run(&["verify", "--lp-only"]);
    assert_eq!(code, 0);
    assert_eq!(out.matches("1 (exact)").count(), 2, "{out}");
    let (code, _, err) = run(&["verify", "--quantum"]);
    assert_eq!(code, 2);
    assert!(err.contains("network required"));
}

#[test]
fn corrupted_joint_is_localized() {
    let dir = tempfile::tempdir().unwrap();
    let n = sample_random_network(BoxCounts::uniform(1), 4).unwrap();
    let s: SettingTriple = "ab'c".parse().unwrap();
    let joint = build_joint(&n, s, PartyOrdering::ABC).unwrap();
    let mut csv = Vec::new();
    joint.write_csv(&mut csv).unwrap();
    let good = dir.path().join("good.csv");
    fs::write(&good, &csv).unwrap();
    let (code, out, _) = run(&["verify", "--joint", good.to_str().unwrap(), "--settings", "ab'c"]);
    assert_eq!(code, 0, "{out}");

    // Split one point's weight with a copy whose b_a bit is flipped.
    let text = String::from_utf8(csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[1].split(',').map(String::from).collect();
    assert_eq!(fields[6], "1/8");
    fields[6] = "1/16".into();
    lines[1] = fields.join(",");
    fields[2] = if fields[2] == "0" { "1".into() } else { "0".into() };
    lines.push(fields.join(","));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let (code, out, _) = run(&["verify", "--joint", bad.to_str().unwrap(), "--settings", "ab'c"]);
    assert_eq!(code, 1);
    assert!(out.contains("[FAIL] determinism of (b_a, b_c, a_c) at ab'c"), "{out}");
}

#[test]
fn transform_emits_surgery_report() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_network(dir.path(), "r.json", &sample_random_network(BoxCounts::uniform(2), 11).unwrap());
    let out_dir = dir.path().join("t");
    let (code, out, _) = run(&["transform", &file, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["a_b_star"].is_string());
    assert!(v["k_star"].is_string());
    assert!(v["values"]["E_S(F)"].as_str().unwrap().contains('/'));
    for f in ["surgery.json", "derandomized.json", "fixed.json", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let fixed = NetworkStrategy::from_json(&fs::read_to_string(out_dir.join("fixed.json")).unwrap()).unwrap();
    assert!(fixed.validate().is_valid());
}

#[test]
fn search_and_lp_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("s");
    let (code, out, _) = run(&["search", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("exhaustive over canonical forms: best E(F) = 1/8"), "{out}");
    let hist = fs::read_to_string(out_dir.join("histogram.csv")).unwrap();
    assert!(hist.starts_with("value,count\n1/8,"));
    let best = NetworkStrategy::from_json(&fs::read_to_string(out_dir.join("best_network.json")).unwrap()).unwrap();
    assert!(best.validate().is_valid());

    let (code, out, _) = run(&["search", "--mode", "random", "--counts", "2", "--budget", "50", "--seed", "1"]);
    assert_eq!(code, 0);
    assert!(out.contains("best of random samples"));

    let (code, out, _) = run(&["lp"]);
    assert_eq!(code, 0);
    assert!(out.contains("optimum without the fixed-output constraint: 0 (exact)"), "{out}");
}

#[test]
fn sample_round_trips() {
    let (code, out, _) = run(&["sample", "--counts", "2,1,3", "--seed", "9"]);
    assert_eq!(code, 0);
    let n = NetworkStrategy::from_json(&out).unwrap();
    assert_eq!(n, sample_random_network(BoxCounts::new(2, 1, 3), 9).unwrap());
}
