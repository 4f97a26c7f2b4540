use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const LN2: f64 = std::f64::consts::LN_2;

fn hamlearn(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hamlearn"))
        .args(args)
        .current_dir(dir)
        .env("HAMLEARN_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap()
}

const SINGLE_QUBIT: &str = r#"{"n": 1, "terms": [{"pauli": "Z", "coeff": 0.6931471805599453}]}"#;

#[test]
fn single_qubit_interval_contains_ln2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "model.json", SINGLE_QUBIT);
    write(dir.path(), "cfg.json", r#"{"model": "model.json"}"#);
    let out = hamlearn(&["learn", "--config", "cfg.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let mut rdr = csv::Reader::from_path(dir.path().join("out/intervals.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let a: f64 = rows[0][3].parse().unwrap();
    let b: f64 = rows[0][4].parse().unwrap();
    assert!(a <= LN2 && LN2 <= b, "[{a}, {b}]");
    assert_eq!(&rows[0][8], "true");

    let rep = report(dir.path());
    assert!(rep["tasks"]["learn_b"]["mu_star"].as_f64().unwrap() < 1e-6);
}

#[test]
fn verify_two_qubit_chain_passes() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.json",
        r#"{"model": {"generator": {"kind": "ising_chain", "n": 2, "coupling": 0.5, "field": 0.3}}}"#,
    );
    let out = hamlearn(&["verify", "--config", "cfg.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(dir.path());
    let v = &rep["tasks"]["verify_modular"];
    assert_eq!(v["pass"], true, "{v:#}");
    assert!(v["locality"]["support_pass"].as_bool().unwrap());
}

#[test]
fn empty_task_list_only_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "cfg.json", &format!(r#"{{"model": {SINGLE_QUBIT}, "level": 2}}"#));
    let out = hamlearn(&["report", "--config", "cfg.json", "--tol", "1e-7"], dir.path());
    assert!(out.status.success());
    let files: Vec<String> = fs::read_dir(dir.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(files, ["config.resolved.json"]);
    let echo: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/config.resolved.json")).unwrap()).unwrap();
    assert_eq!(echo["level"], 2);
    assert_eq!(echo["tol"], 1e-7);
    assert_eq!(echo["model"]["terms"][0]["pauli"], "Z");
}

#[test]
fn bad_config_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    for (i, text) in [
        r#"{"model": "missing.json"}"#,
        r#"{"model": {"n": 1, "terms": [{"pauli": "Q"}]}}"#,
        r#"{"model": {"n": 1, "terms": [{"pauli": "Z", "coeff": 1.0}]}, "level": 0}"#,
        r#"{"model": {"n": 1, "terms": [{"pauli": "Z", "coeff": 1.0}]}, "unknown_key": 1}"#,
        r#"{"model": {"n": 1, "terms": [{"pauli": "Z"}]}, "tasks": ["measure"]}"#,
        r#"{"model": {"n": 1, "terms": [{"pauli": "Z", "coeff": 1.0}]}, "tasks": ["sweep"]}"#,
    ]
    .iter()
    .enumerate()
    {
        let name = format!("cfg{i}.json");
        write(dir.path(), &name, text);
        let out = hamlearn(&["report", "--config", &name], dir.path());
        assert_eq!(out.status.code(), Some(2), "config {i}");
        let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
        assert_eq!(err["error"], "config");
    }
}

#[test]
fn dense_cap_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.json",
        r#"{"model": {"generator": {"kind": "ising_chain", "n": 20, "coupling": 0.5, "field": 0.3}}, "tasks": ["measure"]}"#,
    );
    let out = hamlearn(&["report", "--config", "cfg.json"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(report(dir.path())["errors"][0]["error"], "cap");
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.json",
        r#"{"model": {"generator": {"kind": "ising_chain", "n": 2, "coupling": 0.5, "field": 0.3}},
            "noise": {"mode": "uniform_adversarial", "epsilon0": 1e-6, "seed": 5},
            "tasks": ["measure", "intervals", "certify"]}"#,
    );
    let read_all = |d: &Path| -> Vec<(String, Vec<u8>)> {
        let mut v: Vec<_> = fs::read_dir(d)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
            })
            .collect();
        v.sort();
        v
    };
    assert!(hamlearn(&["report", "--config", "cfg.json", "--out", "a"], dir.path()).status.success());
    assert!(hamlearn(&["report", "--config", "cfg.json", "--out", "b"], dir.path()).status.success());
    let (a, b) = (read_all(&dir.path().join("a")), read_all(&dir.path().join("b")));
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        if na == "config.resolved.json" {
            continue; // records its own output path
        }
        assert!(ba == bb, "{na} differs between runs");
    }
}

#[test]
fn sweep_covers_the_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.json",
        r#"{"model": {"generator": {"kind": "ising_chain", "n": 2, "coupling": 0.5, "field": 0.3}},
            "tasks": ["sweep"],
            "sweep": {"epsilon0": [0.0, 1e-6, 0.5], "levels": [1, 2], "seeds": [1, 2, 3]}}"#,
    );
    let out = hamlearn(&["sweep", "--config", "cfg.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("out/sweep.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3 * 2 * 3);
    let mut cells: Vec<(String, String, String)> =
        rows.iter().map(|r| (r[0].to_string(), r[1].to_string(), r[2].to_string())).collect();
    cells.sort();
    cells.dedup();
    assert_eq!(cells.len(), 18);
    // the large-noise cells trip the guard but stay in the table
    assert!(rows.iter().filter(|r| &r[0] == "0.5").all(|r| &r[5] == "true"));
    for svg in ["width_vs_epsilon.svg", "width_vs_level.svg"] {
        assert!(fs::read_to_string(dir.path().join("out").join(svg)).unwrap().starts_with("<svg"));
    }
}

#[test]
fn gen_model_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = hamlearn(
        &["gen-model", "--generator", r#"{"kind": "random_local", "n": 3, "k": 2, "num_terms": 3, "coeff_bound": 1.0, "seed": 4}"#, "--out", "m.json"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = hamlearn::model::HamiltonianModel::load(dir.path().join("m.json")).unwrap();
    assert_eq!(m.n(), 3);
    assert_eq!(m.m(), 3);
}

#[test]
fn learns_from_recorded_tables() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "cfg.json", &format!(r#"{{"model": {SINGLE_QUBIT}, "tasks": ["measure"]}}"#));
    assert!(hamlearn(&["report", "--config", "cfg.json"], dir.path()).status.success());
    write(
        dir.path(),
        "learn.json",
        r#"{"model": {"n": 1, "terms": [{"pauli": "Z"}]}, "tables": "out/tables.csv", "beta": 1.0,
            "tasks": ["intervals"], "output": "learned"}"#,
    );
    let out = hamlearn(&["report", "--config", "learn.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("learned/report.json")).unwrap()).unwrap();
    let d = &rep["tasks"]["intervals"]["directions"][0];
    let (a, b) = (d["a"].as_f64().unwrap(), d["b"].as_f64().unwrap());
    assert!(a <= LN2 && LN2 <= b, "[{a}, {b}]");
}
