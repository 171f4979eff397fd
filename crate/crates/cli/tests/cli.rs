use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_catcast");

const NOISELESS: &str = "seed = 3\nepsilon = 0.0\n[cardinalities]\ndate_month = 4\nnotification_country = 3\n\
distribution_status = 3\ncountry_origin = 4\nproduct_category = 4\nhazard_category = 4\naction_taken = 4\n";

const TINY_GRID: &str = r#"
[search]
family = "mlp"
k = 2
[search.grid]
family = "mlp"
iterations = [
  [{ name = "hidden_layers", values = [1, 2] }, { name = "neurons", values = [8] }, { name = "epochs", values = [3] }],
  [{ name = "learning_rate", values = [0.01, 0.001] }],
]
"#;

fn catcast(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .env_remove("CATCAST_SEED")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = catcast(dir, args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(rows: usize) -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("gen.toml"), NOISELESS).unwrap();
        ok(
            dir.path(),
            &[
                "synth",
                "--spec",
                "gen.toml",
                "--rows",
                &rows.to_string(),
                "--out",
                "data.csv",
            ],
        );
        Fixture { dir }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn train(&self, out: &str, report: &str, epochs: &str, extra: &[&str]) {
        let mut args = vec![
            "--seed",
            "1",
            "train",
            "--data",
            "data.csv",
            "--model",
            "mlp",
            "--hidden",
            "32",
            "--dropout",
            "0",
            "--epochs",
            epochs,
            "--learning-rate",
            "0.01",
            "--batch-size",
            "32",
            "--out",
            out,
            "--report",
            report,
        ];
        args.extend_from_slice(extra);
        ok(self.path(), &args);
    }
}

#[test]
fn help_lists_every_subcommand() {
    let out = ok(Path::new("."), &["--help"]);
    for cmd in [
        "ingest",
        "synth",
        "train",
        "gridsearch",
        "evaluate",
        "predict",
        "gradcheck",
        "reproduce",
    ] {
        assert!(
            out.lines().any(|l| l.trim_start().starts_with(cmd)),
            "{cmd} missing from\n{out}"
        );
    }
}

#[test]
fn train_and_evaluate_reports_are_reproducible() {
    let f = Fixture::new(400);
    f.train("m1", "train1.json", "5", &["--stage", "1"]);
    f.train("m2", "train2.json", "5", &["--stage", "1"]);
    let (a, b) = (
        std::fs::read(f.file("train1.json")).unwrap(),
        std::fs::read(f.file("train2.json")).unwrap(),
    );
    let strip = |bytes: &[u8]| {
        let mut v: Value = serde_json::from_slice(bytes).unwrap();
        v["invocation"]["out"] = Value::Null;
        v
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(
        std::fs::read(f.file("m1/stage1.model")).unwrap(),
        std::fs::read(f.file("m2/stage1.model")).unwrap()
    );

    let eval = [
        "--seed",
        "1",
        "evaluate",
        "--data",
        "data.csv",
        "--model",
        "m1/stage1.model",
        "--report",
    ];
    ok(f.path(), &[&eval[..], &["e1.json"]].concat());
    ok(f.path(), &[&eval[..], &["e2.json"]].concat());
    assert_eq!(
        std::fs::read(f.file("e1.json")).unwrap(),
        std::fs::read(f.file("e2.json")).unwrap()
    );

    assert!(ok(f.path(), &["reproduce", "train1.json"]).contains("reproduced"));
    assert!(ok(f.path(), &["reproduce", "e1.json"]).contains("reproduced"));
}

#[test]
fn tampered_reports_fail_to_reproduce() {
    let f = Fixture::new(300);
    f.train("m", "train.json", "3", &["--stage", "1"]);
    let mut report: Value =
        serde_json::from_str(&std::fs::read_to_string(f.file("train.json")).unwrap()).unwrap();
    report["config"]["seed"] = Value::from(2);
    std::fs::write(
        f.file("tampered.json"),
        serde_json::to_string(&report).unwrap(),
    )
    .unwrap();
    let out = catcast(f.path(), &["reproduce", "tampered.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("differ"));

    std::fs::write(f.file("junk.json"), "{\"results\": 1}").unwrap();
    assert_eq!(
        catcast(f.path(), &["reproduce", "junk.json"]).status.code(),
        Some(1)
    );
}

#[test]
fn noiseless_chain_predicts_the_generator_mapping() {
    let f = Fixture::new(400);
    f.train("m", "train.json", "150", &[]);
    let csv = std::fs::read_to_string(f.file("data.csv")).unwrap();
    for line in csv.lines().skip(1).take(25) {
        let cells: Vec<&str> = line.split(',').collect();
        let vars = [
            format!("DATE_MONTH={}", cells[0]),
            format!("NOTIFICATION_COUNTRY={}", cells[1]),
            format!("DISTRIBUTION_STATUS={}", cells[2]),
            format!("COUNTRY_ORIGIN={}", cells[3]),
        ];
        let mut args = vec![
            "--format",
            "machine",
            "predict",
            "--model",
            "m/stage1.model",
            "m/stage2.model",
            "m/stage3.model",
        ];
        for v in &vars {
            args.extend(["--var", v.as_str()]);
        }
        let preds: Value = serde_json::from_str(&ok(f.path(), &args)).unwrap();
        for (stage, want) in cells[4..7].iter().enumerate() {
            let top = &preds[stage]["candidates"][0];
            assert_eq!(top["category"], *want, "{line}");
            assert!(
                top["probability"].as_f64().unwrap() >= 0.99,
                "{line}: {top}"
            );
        }
    }
}

#[test]
fn predict_warns_on_unknown_values_and_rejects_missing_ones() {
    let f = Fixture::new(300);
    f.train("m", "train.json", "2", &["--stage", "1"]);
    let base = [
        "predict",
        "--model",
        "m/stage1.model",
        "--var",
        "DATE_MONTH=m01",
        "--var",
        "distribution_status=D00",
    ];
    let out = catcast(
        f.path(),
        &[
            &base[..],
            &[
                "--var",
                "NOTIFICATION_COUNTRY=n00",
                "--var",
                "COUNTRY_ORIGIN=atlantis",
            ],
        ]
        .concat(),
    );
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("COUNTRY_ORIGIN"));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout)
            .lines()
            .filter(|l| l.trim_start().starts_with(char::is_numeric))
            .count(),
        3
    );

    let out = catcast(
        f.path(),
        &[&base[..], &["--var", "COUNTRY_ORIGIN=o01"]].concat(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NOTIFICATION_COUNTRY"));
    assert!(out.stdout.is_empty());
}

#[test]
fn record_file_and_date_parsing() {
    let f = Fixture::new(300);
    f.train("m", "train.json", "2", &["--stage", "1"]);
    std::fs::write(
        f.file("record.csv"),
        "DATE_CASE,NOTIFICATION_COUNTRY,DISTRIBUTION_STATUS,COUNTRY_ORIGIN\n03/02/2012,n00,d01,o03\n",
    )
    .unwrap();
    let out = catcast(
        f.path(),
        &[
            "predict",
            "--model",
            "m/stage1.model",
            "--record",
            "record.csv",
        ],
    );
    assert!(out.status.success());
    // DATE_CASE becomes month "02", which the synthetic vocabulary does not contain
    assert!(String::from_utf8_lossy(&out.stderr).contains("DATE_MONTH"));
}

#[test]
fn gridsearch_trace_streams_and_reproduces() {
    let f = Fixture::new(200);
    std::fs::write(f.file("grid.toml"), TINY_GRID).unwrap();
    let run = |threads: &str, trace: &str| {
        ok(
            f.path(),
            &[
                "--config",
                "grid.toml",
                "--seed",
                "4",
                "--threads",
                threads,
                "gridsearch",
                "--data",
                "data.csv",
                "--stage",
                "1",
                "--trace",
                trace,
            ],
        )
    };
    run("1", "t1.jsonl");
    let lines: Vec<Value> = std::fs::read_to_string(f.file("t1.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 1 + 4 + 1);
    assert_eq!(lines[0]["record"], "header");
    assert!(lines[1..5].iter().all(|l| l["record"] == "config"));
    assert_eq!(lines[5]["record"], "summary");
    assert_eq!(lines[5]["iterations"].as_array().unwrap().len(), 2);
    assert!(ok(f.path(), &["reproduce", "t1.jsonl"]).contains("reproduced"));

    run("2", "t2.jsonl");
    let body = |p: &str| {
        let text = std::fs::read_to_string(f.file(p)).unwrap();
        text.lines().skip(1).map(str::to_owned).collect::<Vec<_>>()
    };
    assert_eq!(body("t1.jsonl"), body("t2.jsonl"));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let f = Fixture::new(200);
    let run = |env: Option<&str>, extra: &[&str], report: &str| {
        let mut cmd = Command::new(BIN);
        cmd.current_dir(f.path()).env_remove("CATCAST_SEED");
        if let Some(s) = env {
            cmd.env("CATCAST_SEED", s);
        }
        let args = [
            extra,
            &[
                "train", "--data", "data.csv", "--stage", "1", "--model", "logreg", "--epochs",
                "1", "--out", "m", "--report", report,
            ],
        ]
        .concat();
        assert!(cmd.args(&args).output().unwrap().status.success());
        let v: Value =
            serde_json::from_str(&std::fs::read_to_string(f.file(report)).unwrap()).unwrap();
        v["config"]["seed"].as_u64().unwrap()
    };
    assert_eq!(run(Some("17"), &[], "a.json"), 17);
    assert_eq!(run(Some("17"), &["--seed", "5"], "b.json"), 5);
    assert_eq!(run(None, &[], "c.json"), 0);
}

#[test]
fn ingest_writes_a_reusable_directory() {
    let f = Fixture::new(500);
    let out = ok(
        f.path(),
        &[
            "--format", "machine", "--seed", "2", "ingest", "--input", "data.csv", "--out", "ing",
        ],
    );
    let s: Value = serde_json::from_str(&out).unwrap();
    let (train, val) = (
        s["train"].as_u64().unwrap() as f64,
        s["validation"].as_u64().unwrap() as f64,
    );
    assert!((train - 0.8 * (train + val)).abs() <= 1.0);
    for name in ["data.csv", "data.csv.meta.json", "split.json"] {
        assert!(f.file("ing").join(name).exists(), "{name}");
    }
    ok(
        f.path(),
        &[
            "train", "--data", "ing", "--stage", "1", "--model", "tree", "--out", "m", "--report",
            "r.json",
        ],
    );
    let rep: Value =
        serde_json::from_str(&std::fs::read_to_string(f.file("r.json")).unwrap()).unwrap();
    assert_eq!(
        rep["results"][0]["validation"]["n_evaluated"]
            .as_u64()
            .unwrap() as f64,
        val
    );
}

#[test]
fn gradcheck_passes_for_every_stage() {
    let out = ok(Path::new("."), &["--format", "machine", "gradcheck"]);
    let checks: Vec<Value> = serde_json::from_str(&out).unwrap();
    assert_eq!(checks.len(), 3);
    assert!(checks
        .iter()
        .all(|c| c["report"]["max_rel_error"].as_f64().unwrap() < 1e-4));
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(catcast(Path::new("."), &["train"]).status.code(), Some(2));
    assert_eq!(
        catcast(Path::new("."), &["gradcheck", "--width", "2"])
            .status
            .code(),
        Some(2)
    );
}
