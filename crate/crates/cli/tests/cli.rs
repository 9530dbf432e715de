//! End-to-end CLI tests: exit codes, file formats, and the full
//! gen -> window -> train -> predict -> eval and embed -> cluster -> similar
//! pipelines on a small configuration.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_kpidet");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn kpidet")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

struct MiniEnv {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
}

fn mini_env() -> MiniEnv {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let config = root.join("mini.conf");
    std::fs::write(
        &config,
        "gen.n_series = 2\ngen.days = 15\nwindow.k = 10\nmlp.epochs = 6\n\
         bench.train_normal_stride = 90\nbench.test_normal_stride = 45\n",
    )
    .unwrap();
    MiniEnv {
        _dir: dir,
        root,
        config,
    }
}

#[test]
fn help_and_usage_errors() {
    assert_exit(&run(&["--help"]), 0);
    assert_exit(&run(&["gen", "--help"]), 0);
    // Unknown flag: usage error.
    assert_exit(&run(&["gen", "--bogus"]), 1);
    // Missing subcommand.
    assert_exit(&run(&[]), 1);
}

#[test]
fn unknown_config_key_is_usage_error() {
    let env = mini_env();
    let bad = env.root.join("bad.conf");
    std::fs::write(&bad, "no.such.key = 1\n").unwrap();
    let out = run(&[
        "gen",
        "--config",
        bad.to_str().unwrap(),
        "--out",
        env.root.join("x").to_str().unwrap(),
    ]);
    assert_exit(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown config key"));
}

#[test]
fn missing_input_is_data_error() {
    let env = mini_env();
    let out = run(&[
        "train",
        "--data",
        env.root.join("nope.csv").to_str().unwrap(),
        "--out",
        env.root.join("m.txt").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
}

#[test]
fn malformed_dataset_is_data_error() {
    let env = mini_env();
    let bad = env.root.join("bad.csv");
    std::fs::write(&bad, "1,0.5,0.5\n").unwrap(); // wrong row width
    let out = run(&[
        "train",
        "--data",
        bad.to_str().unwrap(),
        "--out",
        env.root.join("m.txt").to_str().unwrap(),
    ]);
    assert_exit(&out, 2);
}

fn sha(path: &Path) -> u64 {
    // Cheap content fingerprint for input-mutation checks.
    let bytes = std::fs::read(path).unwrap();
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

#[test]
fn full_pipeline_round_trip() {
    let env = mini_env();
    let cfg = env.config.to_str().unwrap();
    let data_dir = env.root.join("data");

    assert_exit(
        &run(&[
            "gen",
            "--seed",
            "5",
            "--config",
            cfg,
            "--out",
            data_dir.to_str().unwrap(),
        ]),
        0,
    );
    for file in [
        "synth-000.csv",
        "synth-001.csv",
        "anomalies.csv",
        "train.csv",
        "test.csv",
    ] {
        assert!(data_dir.join(file).exists(), "missing {file}");
    }

    // Re-window the raw series from files; the command must not mutate its
    // inputs.
    let series0 = data_dir.join("synth-000.csv");
    let before = sha(&series0);
    let rebuilt = env.root.join("rebuilt.csv");
    assert_exit(
        &run(&[
            "window",
            "--seed",
            "5",
            "--config",
            cfg,
            "--series",
            series0.to_str().unwrap(),
            "--anomalies",
            data_dir.join("anomalies.csv").to_str().unwrap(),
            "--normal-stride",
            "90",
            "--out",
            rebuilt.to_str().unwrap(),
        ]),
        0,
    );
    assert_eq!(before, sha(&series0), "window mutated its input");
    let rebuilt_text = std::fs::read_to_string(&rebuilt).unwrap();
    assert!(rebuilt_text.lines().count() > 50);
    // Rows are label + 5k+3 values at k = 10.
    assert_eq!(rebuilt_text.lines().next().unwrap().split(',').count(), 54);

    let model = env.root.join("model.txt");
    let trace = env.root.join("trace.csv");
    assert_exit(
        &run(&[
            "train",
            "--seed",
            "5",
            "--config",
            cfg,
            "--data",
            data_dir.join("train.csv").to_str().unwrap(),
            "--val",
            data_dir.join("test.csv").to_str().unwrap(),
            "--out",
            model.to_str().unwrap(),
            "--trace",
            trace.to_str().unwrap(),
        ]),
        0,
    );
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert!(trace_text.starts_with("epoch,loss,accuracy,val_loss,val_accuracy"));
    assert_eq!(trace_text.lines().count(), 7); // header + 6 epochs

    let preds = env.root.join("pred.csv");
    assert_exit(
        &run(&[
            "predict",
            "--model",
            model.to_str().unwrap(),
            "--data",
            data_dir.join("test.csv").to_str().unwrap(),
            "--out",
            preds.to_str().unwrap(),
        ]),
        0,
    );
    let n_test = std::fs::read_to_string(data_dir.join("test.csv"))
        .unwrap()
        .lines()
        .count();
    let n_preds = std::fs::read_to_string(&preds).unwrap().lines().count() - 1;
    assert_eq!(n_test, n_preds);

    let report = env.root.join("report.csv");
    let out = run(&[
        "eval",
        "--predictions",
        preds.to_str().unwrap(),
        "--data",
        data_dir.join("test.csv").to_str().unwrap(),
        "--name",
        "DNN",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_exit(&out, 0);
    let report_text = std::fs::read_to_string(&report).unwrap();
    assert!(report_text.starts_with("name,tp,fn,fp,tn,recall,precision,f1"));
    assert!(report_text.lines().nth(1).unwrap().starts_with("DNN,"));
    // The rendered table goes to stdout.
    assert!(String::from_utf8_lossy(&out.stdout).contains("F1-Score"));

    // Predict straight from a raw series.
    let series_preds = env.root.join("series-pred.csv");
    assert_exit(
        &run(&[
            "predict",
            "--model",
            model.to_str().unwrap(),
            "--series",
            series0.to_str().unwrap(),
            "--stride",
            "120",
            "--out",
            series_preds.to_str().unwrap(),
        ]),
        0,
    );
    let text = std::fs::read_to_string(&series_preds).unwrap();
    assert!(text.lines().count() > 10);
    assert!(text.lines().nth(1).unwrap().starts_with("0,synth-000,"));
}

#[test]
fn embedding_pipeline_round_trip() {
    let env = mini_env();
    let cfg = env.config.to_str().unwrap();
    let data_dir = env.root.join("data");
    assert_exit(
        &run(&[
            "gen",
            "--seed",
            "9",
            "--config",
            cfg,
            "--out",
            data_dir.to_str().unwrap(),
        ]),
        0,
    );
    let model = env.root.join("model.txt");
    assert_exit(
        &run(&[
            "train",
            "--seed",
            "9",
            "--config",
            cfg,
            "--data",
            data_dir.join("train.csv").to_str().unwrap(),
            "--out",
            model.to_str().unwrap(),
        ]),
        0,
    );

    let emb = env.root.join("emb.csv");
    assert_exit(
        &run(&[
            "embed",
            "--model",
            model.to_str().unwrap(),
            "--series",
            data_dir.join("synth-000.csv").to_str().unwrap(),
            "--stride",
            "360",
            "--out",
            emb.to_str().unwrap(),
        ]),
        0,
    );
    let emb_text = std::fs::read_to_string(&emb).unwrap();
    let header = emb_text.lines().next().unwrap();
    assert!(header.starts_with("id,timestamp,v1,"));
    assert!(header.ends_with(",v100")); // 50 + 50 hidden units
    let n_rows = emb_text.lines().count() - 1;
    assert!(n_rows > 5);

    let clusters = env.root.join("clusters.csv");
    assert_exit(
        &run(&[
            "cluster",
            "--embeddings",
            emb.to_str().unwrap(),
            "--clusters",
            "2",
            "--seed",
            "9",
            "--out",
            clusters.to_str().unwrap(),
        ]),
        0,
    );
    let cl_text = std::fs::read_to_string(&clusters).unwrap();
    assert_eq!(cl_text.lines().count() - 1, n_rows);
    assert!(cl_text.lines().nth(1).unwrap().starts_with("synth-000,"));

    // Query the first embedded window; the result must not contain the
    // query itself.
    let first = emb_text.lines().nth(1).unwrap();
    let ts = first.split(',').nth(1).unwrap();
    let out = run(&[
        "similar",
        "--embeddings",
        emb.to_str().unwrap(),
        "--query-id",
        "synth-000",
        "--query-timestamp",
        ts,
        "--top",
        "3",
    ]);
    assert_exit(&out, 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.starts_with("rank,id,timestamp,similarity"));
    assert_eq!(stdout.lines().count(), 4);
    for line in stdout.lines().skip(1) {
        assert!(
            !line.contains(&format!(",{ts},1.000000")),
            "query returned itself"
        );
    }
}

#[test]
fn compile_features_writes_loadable_graph() {
    let env = mini_env();
    let graph_path = env.root.join("graph.txt");
    assert_exit(
        &run(&[
            "compile-features",
            "--n",
            "30",
            "--out",
            graph_path.to_str().unwrap(),
        ]),
        0,
    );
    let text = std::fs::read_to_string(&graph_path).unwrap();
    let graph = kpidet_core::netfab::graph_from_text(&text).unwrap();
    assert_eq!(graph.input_dim(), 30);

    // The loaded graph matches the oracle on a fresh vector.
    let x: Vec<f64> = (0..30).map(|i| ((i * 11) % 7) as f64 - 3.0).collect();
    let profile = kpidet_core::features::FeatureProfile::for_length(30, 0.0);
    let (_, oracle) = kpidet_core::features::compute_all(&profile, &x).unwrap();
    let got = kpidet_core::netfab::eval(&graph, &x).unwrap();
    assert_eq!(got.len(), oracle.len());
    for (name, (g, o)) in graph.output_names().iter().zip(got.iter().zip(&oracle)) {
        let tol = if name.starts_with("count") || name.starts_with("simple_threshold") {
            1e-3
        } else {
            1e-9 * o.abs().max(1.0)
        };
        assert!((g - o).abs() <= tol, "{name}: {g} vs {o}");
    }

    // Oversized n is a usage error.
    assert_exit(
        &run(&[
            "compile-features",
            "--n",
            "5000",
            "--out",
            env.root.join("huge.txt").to_str().unwrap(),
        ]),
        1,
    );
}

#[test]
fn verify_features_exit_codes() {
    let out = run(&[
        "verify-features",
        "--n",
        "12",
        "--trials",
        "50",
        "--seed",
        "3",
    ]);
    assert_exit(&out, 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("all feature networks match"));
}
