use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_elastokit"))
        .args(args)
        .env_remove("ELASTOKIT_SEED")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CLEAN: &str = "id,smiles,dielectric_constant,youngs_modulus_mpa,source_url
a,*CC(*)C(=O)OCCCC,5.1,0.4,https://example.org/a
b,*CC(*)C(=O)OCC,6.3,0.9,https://example.org/b
";

/// 8 records with a seq table; gin features come from the toy checkpoint.
fn eval_fixture(dir: &Path, pipeline: &str, extra: &str) -> PathBuf {
    let ckpt = repo().join("data/demo/gin_toy.ckpt");
    write_fixture(
        dir,
        pipeline,
        &format!(r#", "gin_checkpoint": "{}"{extra}"#, path(&ckpt)),
    )
}

fn write_fixture(dir: &Path, pipeline: &str, extra: &str) -> PathBuf {
    let mut data = String::from("id,smiles,dielectric_constant,youngs_modulus_mpa,source_url\n");
    let mut seq = String::from("id,e0,e1\n");
    for i in 0..8 {
        let t = i as f64 / 8.0;
        let smiles = format!("*CC(*)C(=O)O{}", "C".repeat(i + 1));
        data.push_str(&format!(
            "r{i},{smiles},{},{},synthetic://r{i}\n",
            4.0 + 8.0 * t,
            0.3 + t * t
        ));
        seq.push_str(&format!("r{i},{t},{}\n", (2.0 * t).sin()));
    }
    std::fs::write(dir.join("data.csv"), data).unwrap();
    std::fs::write(dir.join("seq.csv"), seq).unwrap();
    let config = dir.join("run.json");
    std::fs::write(
        &config,
        format!(
            r#"{{"dataset": "data.csv", "embeddings": {{"seq": "seq.csv"}}, "pipeline": "{pipeline}"{extra}}}"#
        ),
    )
    .unwrap();
    config
}

#[test]
fn validate_data_flags_the_malformed_row() {
    let out = run(&[
        "validate-data",
        "--dataset",
        path(&repo().join("data/table1.csv")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let text = stdout(&out);
    assert!(text.contains("t1-3"), "{text}");
    assert!(text.contains("3 records, 2 valid, 1 rejected"), "{text}");
}

#[test]
fn validate_data_accepts_a_clean_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("clean.csv");
    std::fs::write(&f, CLEAN).unwrap();
    let out = run(&["validate-data", "--dataset", path(&f)]);
    assert_eq!(out.status.code(), Some(0), "{}", stdout(&out));
}

#[test]
fn missing_file_is_an_error() {
    let out = run(&["validate-data", "--dataset", "/nonexistent/data.csv"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["evaluate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn pretrain_writes_a_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("g.ckpt");
    let loss = dir.path().join("loss.csv");
    let corpus = repo().join("data/toy_corpus.smi");
    let args = |lr: &str| {
        run(&[
            "pretrain",
            "--corpus",
            path(&corpus),
            "--out",
            path(&ckpt),
            "--hidden-dim",
            "8",
            "--epochs",
            "3",
            "--lr",
            lr,
            "--loss-csv",
            path(&loss),
        ])
    };
    let out = args("1e-3");
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(elastokit::gin::load_checkpoint(&ckpt).unwrap().hidden_dim() == 8);
    let text = std::fs::read_to_string(&loss).unwrap();
    assert_eq!(text.lines().count(), 4);

    let out = args("0");
    assert!(out.status.success());
    let totals: Vec<String> = std::fs::read_to_string(&loss)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().to_string())
        .collect();
    assert!(totals.windows(2).all(|w| w[0] == w[1]), "{totals:?}");
}

#[test]
fn pretrain_rejects_an_empty_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("empty.smi");
    std::fs::write(&corpus, "# nothing\n").unwrap();
    let out = run(&[
        "pretrain",
        "--corpus",
        path(&corpus),
        "--out",
        path(&dir.path().join("x")),
    ]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn embed_graph_skips_invalid_rows_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = repo().join("data/demo/gin_toy.ckpt");
    let data = repo().join("data/table1.csv");
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let f = dir.path().join(name);
        let out = run(&[
            "embed-graph",
            "--dataset",
            path(&data),
            "--checkpoint",
            path(&ckpt),
            "--out",
            path(&f),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stderr(&out).contains("t1-3"));
        outputs.push(std::fs::read(&f).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("t1-1,"));
}

#[test]
fn fingerprint_width_matches_nbits() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("fp.csv");
    let data = repo().join("data/table1.csv");
    let out = run(&[
        "fingerprint",
        "--dataset",
        path(&data),
        "--nbits",
        "64",
        "--out",
        path(&f),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&f).unwrap();
    for line in text.lines() {
        assert_eq!(line.split(',').count(), 65);
    }
    let out = run(&[
        "fingerprint",
        "--dataset",
        path(&data),
        "--nbits",
        "0",
        "--out",
        path(&f),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_reports_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_fixture(dir.path(), "seq", "");
    let out = run(&["evaluate", "--config", path(&config), "--pipeline", "bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("unknown pipeline 'bogus'"),
        "{}",
        stderr(&out)
    );

    let out = run(&[
        "evaluate",
        "--config",
        path(&config),
        "--pipeline",
        "concat",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("'gin'"), "{}", stderr(&out));
}

#[test]
fn evaluate_writes_reports_and_report_regenerates_them() {
    let dir = tempfile::tempdir().unwrap();
    let config = eval_fixture(dir.path(), "seq", "");
    let out_dir = dir.path().join("run");
    let out = run(&[
        "evaluate",
        "--config",
        path(&config),
        "--seeds",
        "0,1",
        "--out-dir",
        path(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("pooled leave-one-out over 8 samples, 2 seeds"));

    let redo = dir.path().join("redo");
    let out = run(&[
        "report",
        "--metrics",
        path(&out_dir.join("metrics.csv")),
        "--predictions",
        path(&out_dir.join("predictions.csv")),
        "--dataset",
        path(&dir.path().join("data.csv")),
        "--out",
        path(&redo),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in ["scatter_k.svg", "scatter_E.svg", "hist_k.svg", "hist_E.svg"] {
        assert_eq!(
            std::fs::read(out_dir.join(f)).unwrap(),
            std::fs::read(redo.join(f)).unwrap(),
            "{f}"
        );
    }
    assert!(redo.join("comparison.md").is_file());
}

#[test]
fn seed_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let config = eval_fixture(dir.path(), "seq", "");
    let out_dir = dir.path().join("run");
    let out = Command::new(env!("CARGO_BIN_EXE_elastokit"))
        .args([
            "evaluate",
            "--config",
            path(&config),
            "--out-dir",
            path(&out_dir),
        ])
        .env("ELASTOKIT_SEED", "7")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let metrics = std::fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    let mut seeds: Vec<&str> = metrics
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    seeds.retain(|s| s.parse::<u64>().is_ok());
    seeds.dedup();
    assert_eq!(seeds, ["7", "8", "9", "10", "11"]);
}

#[test]
fn predict_handles_ids_and_new_smiles() {
    let dir = tempfile::tempdir().unwrap();
    let config = eval_fixture(dir.path(), "seq", "");
    let out = run(&[
        "predict",
        "--config",
        path(&config),
        "--smiles",
        "*CC(*)C(=O)OC",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));

    let config = eval_fixture(dir.path(), "gin", r#", "gpr": {"log10_noise": [-8]}"#);
    let out = run(&[
        "predict",
        "--config",
        path(&config),
        "--id",
        "r3",
        "--smiles",
        "*CC(*)C(=O)OC",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "input,k,k_std,E_MPa,E_MPa_std");
    let row = |i: usize| -> Vec<f64> {
        lines[i]
            .split(',')
            .skip(1)
            .map(|v| v.parse().unwrap())
            .collect()
    };
    let known = row(1);
    assert!((known[0] - 7.0).abs() < 1e-2, "{known:?}");
    assert!((known[2] - (0.3 + 0.140625)).abs() < 1e-2, "{known:?}");
    assert!(row(2).iter().all(|v| v.is_finite()));
}
