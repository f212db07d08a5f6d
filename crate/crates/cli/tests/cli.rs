use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn fgeom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fgeom"))
        .args(args)
        .env_remove("FGEOM_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("report is JSON")
}

fn untimed(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("timing");
    v
}

#[test]
fn f_identity_on_orthant_passes() {
    let o = fgeom(&["check", "f-identity", "--cone", "orthant:3", "--trials", "50", "--seed", "7", "--tol", "1e-6"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["summary"]["total"], 150);
    assert_eq!(r["config"]["seed"], 7);
}

#[test]
fn wdvv_failure_records_residual() {
    let pot = data("bad3d.json");
    let pts = data("pts.csv");
    let o = fgeom(&[
        "check", "wdvv", "--potential", pot.to_str().unwrap(), "--points", pts.to_str().unwrap(), "--tol", "1e-6",
    ]);
    assert_eq!(code(&o), 1);
    let r = json(&o);
    let recs = r["records"].as_array().unwrap();
    assert_eq!(recs.len(), 3);
    let first = &recs[0];
    assert_eq!(first["location"]["point"], serde_json::json!([1.0, 1.0, 1.0]));
    assert!(first["residual"].as_f64().unwrap() > 1e-3);
    assert_eq!(first["verdict"], "fail");
}

#[test]
fn good_potential_passes_wdvv_and_pencil() {
    let pot = data("frobenius2d.json");
    for sub in ["wdvv", "pencil"] {
        let o = fgeom(&["check", sub, "--potential", pot.to_str().unwrap(), "--random", "10", "--seed", "3"]);
        assert_eq!(code(&o), 0, "{sub}: {}", String::from_utf8_lossy(&o.stdout));
    }
}

#[test]
fn configuration_errors_exit_two() {
    assert_eq!(code(&fgeom(&["cone", "report", "--cone", "orthant:0", "--seed", "1"])), 2);
    assert_eq!(code(&fgeom(&["cone", "report", "--cone", "nonsense:2", "--seed", "1"])), 2);
    // random runs need a seed
    assert_eq!(code(&fgeom(&["check", "dual-flat", "--cone", "orthant:2"])), 2);
    assert_eq!(code(&fgeom(&["check", "dual-flat", "--cone", "orthant:2", "--at", "1,2,3"])), 2);
    assert_eq!(code(&fgeom(&["check", "wdvv", "--potential", "/nonexistent.json", "--at", "1,1"])), 2);
    assert_eq!(code(&fgeom(&["cone", "report", "--cone", "orthant:2", "--at", "1,1", "--tol", "-1"])), 2);
    assert_eq!(code(&fgeom(&["check", "no-such-check"])), 2);
}

#[test]
fn inline_points_need_no_seed() {
    let o = fgeom(&["check", "dual-flat", "--cone", "orthant:2", "--at", "1,2", "--at", "0.5,3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(json(&o)["summary"]["total"], 4);
}

#[test]
fn seed_falls_back_to_environment() {
    let args = ["simplex", "geodesic", "--dim", "4", "--trials", "5"];
    let explicit = {
        let mut a = args.to_vec();
        a.extend(["--seed", "42"]);
        fgeom(&a)
    };
    let env = Command::new(env!("CARGO_BIN_EXE_fgeom"))
        .args(args)
        .env("FGEOM_SEED", "42")
        .output()
        .unwrap();
    assert_eq!(code(&explicit), 0);
    assert_eq!(code(&env), 0);
    assert_eq!(untimed(json(&explicit)), untimed(json(&env)));
}

#[test]
fn engine_errors_become_single_failed_records() {
    let o = fgeom(&["cone", "report", "--cone", "orthant:2", "--at", "1,2", "--at", "-1,2"]);
    assert_eq!(code(&o), 1);
    let r = json(&o);
    let recs = r["records"].as_array().unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0]["verdict"], "pass");
    assert_eq!(recs[1]["verdict"], "fail");
    assert!(recs[1]["error"].as_str().is_some_and(|c| !c.is_empty()));
}

#[test]
fn reports_written_to_file_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let runs: Vec<Value> = (0..2)
        .map(|k| {
            let out = dir.path().join(format!("run{k}.json"));
            let o = fgeom(&["markov", "laws", "--trials", "20", "--seed", "9", "-o", out.to_str().unwrap()]);
            assert_eq!(code(&o), 0);
            assert!(o.stdout.is_empty());
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap()
        })
        .collect();
    assert_eq!(untimed(runs[0].clone()), untimed(runs[1].clone()));
    // only the two reports remain; no temporary files left behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
}

#[test]
fn csv_projection_of_saito_table() {
    let o = fgeom(&["saito", "table", "--n", "2", "--random", "3", "--seed", "1", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t1,t2,i,j,g_res,g_trace,assoc_residual");
    // 3 points × 4 index pairs
    assert_eq!(lines.count(), 12);
}

#[test]
fn csv_projection_of_records() {
    let o = fgeom(&["check", "dolbeault", "--trials", "3", "--seed", "2", "--format", "csv"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("name,index,location,residual,tolerance,verdict,error\n"));
    assert_eq!(text.lines().filter(|l| l.starts_with("gauge,")).count(), 3);
}

#[test]
fn exported_saito_potential_checks_out() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a3.json");
    let o = fgeom(&["saito", "export-wdvv", "--n", "3", "--random", "5", "--seed", "4", "--export", file.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = fgeom(&["check", "wdvv", "--potential", file.to_str().unwrap(), "--random", "10", "--seed", "5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}
