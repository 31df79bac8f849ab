//! End-to-end tests of the `incstab` binary: exit codes, error paths,
//! atomic outputs, and the plot command.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_incstab"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &str, config: &Path) -> Output {
    bin().arg(cmd).arg(config).output().unwrap()
}

/// Copies a shipped configuration into `dir`, applying text substitutions.
fn shipped(dir: &Path, name: &str, edits: &[(&str, &str)]) -> PathBuf {
    let mut text = fs::read_to_string(configs_dir().join(name)).unwrap();
    for (from, to) in edits {
        assert!(text.contains(from), "{from} not in {name}");
        text = text.replace(from, to);
    }
    write(dir, name, &text)
}

#[test]
fn small_gain_config_certifies_with_bound_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped(dir.path(), "small_gain.json", &[]);
    let out = run("run", &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cert: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/small_gain.certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["verdict"], "certified");
    assert!((cert["gamma"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(cert["seed"], 0);
    assert_eq!(cert["schedule"]["steps"], 0);
    assert!(cert["empirical"]["max_ratio"].as_f64().unwrap() <= 1.0);
}

#[test]
fn iqc_with_excess_gain_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped(
        dir.path(),
        "certify_iqc.json",
        &[("\"c\": 1.5", "\"c\": 2.0"), ("\"declared_gain\": 1.5", "\"declared_gain\": 2.0")],
    );
    let out = run("run", &cfg);
    assert_eq!(out.status.code(), Some(1));
    let cert: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/certify_iqc.certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["verdict"], "refused");
    assert_eq!(cert["witness"]["kind"], "falsified");
}

#[test]
fn malformed_matrix_reports_document_path_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped(dir.path(), "certify_iqc.json", &[("\"A\": [[-1.0]]", "\"A\": [[-1.0, 0.0]]")]);
    let out = run("run", &cfg);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("systems.plant.node.A"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn schema_errors_cite_paths() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.json",
        r#"{"job": "small_gain", "parameters": {"gamma1": 0.5, "gamma2": 1, "bogus": 1}}"#,
    );
    let out = run("validate", &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parameters"), "{}", String::from_utf8_lossy(&out.stderr));

    let cfg = write(dir.path(), "unknown.json", r#"{"job": "small_gain", "parameters": {}, "extra": 1}"#);
    assert_eq!(run("run", &cfg).status.code(), Some(2));

    let cfg = write(
        dir.path(),
        "missing.json",
        r#"{"job": "simulate", "parameters": {"h1": "nope", "h2": "nope",
            "input": {"kind": "step", "amplitude": 1, "duration": 1, "len": 10, "dt": 0.1}}}"#,
    );
    let out = run("validate", &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parameters.h1"));
}

#[test]
fn validate_accepts_every_shipped_config() {
    for entry in fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let out = run("validate", &path);
            assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        }
    }
}

#[test]
fn diverging_simulation_exits_one_with_report_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "div.json",
        r#"{"systems": {"a": {"node": {"type": "static", "fn": "gain", "k": 2}},
                        "b": {"node": {"type": "static", "fn": "gain", "k": 1}}},
            "job": "simulate",
            "parameters": {"h1": "a", "h2": "b",
                           "input": {"kind": "sine", "amplitude": 1, "frequency": 2, "len": 100, "dt": 0.01}},
            "outputs": {"csv": "out/sim.csv", "report": "out/sim.json"}}"#,
    );
    let out = run("run", &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("out/sim.csv").exists());
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/sim.json")).unwrap()).unwrap();
    assert_eq!(report["converged"], false);
}

#[test]
fn srg_sample_flags_a_falsified_declaration() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped(dir.path(), "srg_sample_arctan.json", &[("\"r\": 1.0", "\"r\": 0.5")]);
    let out = run("run", &cfg);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("outside the declared region"));
}

#[test]
fn outputs_the_job_cannot_produce_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped(dir.path(), "small_gain.json", &[("\"certificate\"", "\"csv\"")]);
    let out = run("run", &cfg);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outputs.csv"));
}

#[test]
fn plot_renders_cloud_and_regions() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write(dir.path(), "cloud.csv", "# seed=7\nre,im,pair\n0.5,0.25,0\n0.5,-0.25,0\n");
    let svg = dir.path().join("plot.svg");
    let out = bin()
        .arg("plot")
        .arg(&csv)
        .arg("disc:0,0,1")
        .arg(r#"{"halfplane":{"nre":1,"nim":0,"offset":-2}}"#)
        .arg(&svg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&svg).unwrap();
    assert!(text.contains("<!-- seed=7 -->"));
    assert_eq!(text.matches("class=\"point\"").count(), 2);
    assert_eq!(text.matches("class=\"region\"").count(), 2);

    let bad = bin().arg("plot").arg(&csv).arg("disc:0,0").arg(dir.path().join("x.svg")).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn arctan_cloud_plot_stays_inside_unit_circle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped(dir.path(), "srg_sample_arctan.json", &[]);
    assert_eq!(run("run", &cfg).status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("out/srg_sample_arctan.csv")).unwrap();
    assert!(csv.starts_with("# seed=0\nre,im,pair\n"));
    for line in csv.lines().skip(2) {
        let mut f = line.split(',').map(|v| v.parse::<f64>().unwrap());
        let (re, im) = (f.next().unwrap(), f.next().unwrap());
        assert!(re.hypot(im) < 1.0);
    }
}
