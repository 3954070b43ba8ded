use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kuramoto-oed"));
    cmd.env_remove("KURAMOTO_OED_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn missing_preset_is_a_usage_error() {
    let out = run(&["gen-data", "--per-class", "2", "--out", "/tmp/unused"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["rank", "--preset", "nine_osc"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn domain_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let setup = dir.path().join("bad.json");
    fs::write(
        &setup,
        r#"{"name":"bad","omega":[0.0,1.0],"lower":[2.0],"upper":[1.0]}"#,
    )
    .unwrap();
    let out = run(&["rank", "--setup", p(&setup), "--k", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bounds"));

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\n\"omega\": [1,\n").unwrap();
    let out = run(&["rank", "--setup", p(&broken), "--k", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.json:"));

    let out = run(&[
        "rank",
        "--preset",
        "five_osc",
        "--backend",
        "ml",
        "--k",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn rank_lists_every_pair() {
    let csv = ok(&[
        "rank",
        "--preset",
        "five_osc",
        "--backend",
        "ode",
        "--k",
        "16",
        "--tolerance",
        "1e-3",
    ]);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("pair_i,pair_j,p_sync,mocu_sync,mocu_nosync,remaining_mocu")
    );
    assert_eq!(lines.count(), 10);
}

#[test]
fn gen_data_is_balanced_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        ok(&[
            "gen-data",
            "--preset",
            "five_osc",
            "--per-class",
            "200",
            "--seed",
            "7",
            "--label-duration",
            "100",
            "--out",
            p(out),
        ]);
    }
    let csv = fs::read_to_string(a.join("dataset.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 400);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",1")).count(), 200);
    for name in ["dataset.csv", "dataset.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let manifest = |dir: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        v["args"].as_object_mut().unwrap().remove("out");
        v
    };
    assert_eq!(manifest(&a), manifest(&b));
}

#[test]
fn train_then_use_the_ml_backend() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    ok(&[
        "gen-data",
        "--preset",
        "five_osc",
        "--per-class",
        "40",
        "--seed",
        "1",
        "--out",
        p(&data),
    ]);
    let csv_before = fs::read(data.join("dataset.csv")).unwrap();
    ok(&[
        "train",
        "--data",
        p(&data),
        "--preset",
        "five_osc",
        "--seed",
        "2",
        "--out",
        p(&model),
    ]);
    assert_eq!(fs::read(data.join("dataset.csv")).unwrap(), csv_before);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(model.join("train_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["metrics"]["accuracy"], 1.0);
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(model.join("model.json")).unwrap()).unwrap();
    assert_eq!(m["W1"].as_array().unwrap().len(), 108);
    let model_file = model.join("model.json");

    let est = ok(&[
        "estimate",
        "--preset",
        "five_osc",
        "--backend",
        "ml",
        "--model",
        p(&model_file),
        "--k",
        "64",
    ]);
    let est: serde_json::Value = serde_json::from_str(&est).unwrap();
    assert_eq!(est["backend"], "ml");
    assert!(est["value"].as_f64().unwrap() >= 0.0);

    let runs = dir.path().join("runs");
    let log = ok(&[
        "campaign",
        "--preset",
        "five_osc",
        "--strategy",
        "mocu_static",
        "--backend",
        "ml",
        "--model",
        p(&model_file),
        "--steps",
        "10",
        "--seed",
        "3",
        "--k",
        "64",
        "--eval-k",
        "8",
        "--tolerance",
        "1e-3",
    ]);
    assert_eq!(log.lines().count(), 10);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        for key in [
            "step",
            "pair",
            "outcome",
            "mocu",
            "stderr_mc",
            "wall_ms",
            "backend_calls",
        ] {
            assert!(v.get(key).is_some());
        }
    }

    let mut dirs = Vec::new();
    for strategy in ["random", "entropy"] {
        let out = runs.join(strategy);
        ok(&[
            "campaign",
            "--preset",
            "five_osc",
            "--strategy",
            strategy,
            "--steps",
            "10",
            "--seed",
            "3",
            "--eval-k",
            "8",
            "--tolerance",
            "1e-3",
            "--out",
            p(&out),
        ]);
        assert!(out.join("manifest.json").exists());
        dirs.push(out);
    }
    let plots = dir.path().join("plots");
    let mut args = vec!["emit-plots", "--out", p(&plots), "--runs"];
    args.extend(dirs.iter().map(|d| p(d)));
    ok(&args);
    let traj = fs::read_to_string(plots.join("mocu_trajectories.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 2 * 11);
    let agree = fs::read_to_string(plots.join("sequence_agreement.csv")).unwrap();
    assert_eq!(agree.lines().count(), 1 + 10);
    assert!(agree.lines().last().unwrap().ends_with(",10,10"));

    let bench = ok(&[
        "benchmark",
        "--preset",
        "five_osc",
        "--model",
        p(&model_file),
        "--k",
        "32",
    ]);
    let bench: serde_json::Value = serde_json::from_str(&bench).unwrap();
    assert!(bench["ratio"].as_f64().unwrap() > 1.0);
}
