use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use transship::instgen::{generate, GenConfig};
use transship::model::fixtures::two_store;
use transship::{Instance, Money};
use transship_cli::io::{read_json, write_json, InstanceFile, Metadata, SolutionFile};

fn transship(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_transship"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Path, args: &[&str]) {
    let o = transship(out, args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

fn write_instance(dir: &Path, name: &str, inst: &Instance) -> PathBuf {
    let path = dir.join(name);
    write_json(&path, &InstanceFile::from_instance(inst, Metadata::default())).unwrap();
    path
}

#[test]
fn exact_solves_the_two_store_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path(), "two.json", &two_store());
    ok(dir.path(), &["solve", inst.to_str().unwrap(), "--method", "exact"]);
    let sol: SolutionFile = read_json(&dir.path().join("two.exact.json")).unwrap();
    assert_eq!(sol.objective, Some(Money::from_units(45)));
    assert_eq!(sol.transfers, vec![(0, 1, 0)]);
}

#[test]
fn unconstrained_matches_relax_a_without_caps() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path(), "free.json", &generate(&GenConfig::new(4, 5, 2, 3)));
    let inst = inst.to_str().unwrap();
    ok(dir.path(), &["solve", inst, "--method", "unconstrained"]);
    ok(dir.path(), &["solve", inst, "--method", "relaxA"]);
    let u: SolutionFile = read_json(&dir.path().join("free.unconstrained.json")).unwrap();
    let a: SolutionFile = read_json(&dir.path().join("free.relaxA.json")).unwrap();
    assert_eq!(u.objective, a.objective);
}

#[test]
fn heuristic_respects_a_time_limit() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path(), "big.json", &generate(&GenConfig::new(20, 50, 5, 1)));
    let started = std::time::Instant::now();
    ok(
        dir.path(),
        &["solve", inst.to_str().unwrap(), "--time-limit", "1", "--sa-iterations", "100000000"],
    );
    assert!(started.elapsed().as_secs_f64() < 10.0);
    let sol: SolutionFile = read_json(&dir.path().join("big.heuristic.json")).unwrap();
    assert!(sol.objective.is_some());
}

#[test]
fn generate_writes_one_file_per_replication() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["generate", "--stores", "3", "--products", "4", "--sizes", "7", "--reps", "10", "--level", "med"],
    );
    let files: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 10);
    for f in &files {
        let inst: InstanceFile = read_json(f).unwrap();
        let inst = inst.to_instance().unwrap();
        assert!(inst.products().iter().all(|p| p.sizes == 7));
        assert!(inst.stores().iter().all(|s| s.sku_cap.is_some() && s.dest_cap.is_some()));
    }
}

#[test]
fn bad_arguments_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(transship(dir.path(), &["solve"]).status.code(), Some(1));
    assert_eq!(transship(dir.path(), &["generate", "--bogus"]).status.code(), Some(1));
    assert_eq!(transship(dir.path(), &["generate", "--level", "huge"]).status.code(), Some(1));
    assert_eq!(transship(dir.path(), &["solve", "missing.json"]).status.code(), Some(1));
}

#[test]
fn oversized_exact_search_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path(), "big.json", &generate(&GenConfig::new(10, 20, 3, 2)));
    let o = transship(dir.path(), &["solve", inst.to_str().unwrap(), "--method", "exact"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
}

#[test]
fn verify_accepts_solver_output_and_rejects_edits() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write_instance(dir.path(), "v.json", &generate(&GenConfig::new(4, 4, 2, 8)));
    let inst = inst.to_str().unwrap();
    ok(dir.path(), &["solve", inst, "--sa-iterations", "5000"]);
    let sol_path = dir.path().join("v.heuristic.json");
    ok(dir.path(), &["verify", inst, sol_path.to_str().unwrap()]);

    let mut sol: SolutionFile = read_json(&sol_path).unwrap();
    sol.objective = Some(sol.objective.unwrap() + Money::from_units(1));
    let bad = dir.path().join("bad.json");
    write_json(&bad, &sol).unwrap();
    assert_ne!(transship(dir.path(), &["verify", inst, bad.to_str().unwrap()]).status.code(), Some(0));
}
