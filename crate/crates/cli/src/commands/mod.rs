//! Subcommand implementations.

mod benchdata;
mod formats;

pub use formats::{read_predictions, Prediction};

use crate::config::CommonArgs;
use crate::CliError;
use clap::Args;
use formats::{
    anomalies_to_csv, embeddings_to_csv, predictions_to_csv, read_anomalies, read_embeddings,
    trace_to_csv,
};
use kpidet_core::features::FeatureProfile;
use kpidet_core::io::{atomic_write, read_series, write_dataset, write_series};
use kpidet_core::metrics::{accumulate, report, EvalRow};
use kpidet_core::mlp::{model_from_text, model_to_text, train_with_validation, MlpModel};
use kpidet_core::model::{Dataset, Label, MINUTES_PER_WEEK};
use kpidet_core::netfab::build::build_profile_network;
use kpidet_core::netfab::graph_to_text;
use kpidet_core::netfab::verify::verify_profile;
use kpidet_core::ts2vec::{cosine, embed as embed_sample, kmeans, top_k_similar};
use kpidet_core::windowing::{label_windows, sliding_extract, WindowSpec};
use kpidet_core::{baselines, seeds};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

fn log_config(config: &crate::config::RunConfig) {
    eprintln!("resolved configuration:");
    for line in config.resolved().lines() {
        eprintln!("  {line}");
    }
}

fn read_dataset_infer(path: &Path) -> Result<Dataset, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let first = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| CliError::Data(format!("{}: empty dataset", path.display())))?;
    let width = first.split(',').count().saturating_sub(1);
    if width < 8 || (width - 3) % 5 != 0 {
        return Err(CliError::Data(format!(
            "{}: row width {width} is not 5k+3 for any k >= 1",
            path.display()
        )));
    }
    let k = ((width - 3) / 5) as u32;
    Ok(kpidet_core::io::dataset_from_csv(&text, k)?)
}

fn model_k(model: &MlpModel) -> Result<u32, CliError> {
    let dim = model.config.input_dim;
    if dim < 8 || !(dim - 3).is_multiple_of(5) {
        return Err(CliError::Data(format!(
            "model input dimension {dim} is not 5k+3 for any k >= 1"
        )));
    }
    Ok(((dim - 3) / 5) as u32)
}

fn load_model(path: &Path) -> Result<MlpModel, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(model_from_text(&text)?)
}

// --- gen ----------------------------------------------------------------

#[derive(Args)]
pub struct GenArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for series files, ground truth, and datasets.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

pub fn gen(args: GenArgs) -> Result<(), CliError> {
    let config = args.common.resolve()?;
    log_config(&config);
    let data = benchdata::build(&config)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", args.out.display())))?;

    let mut truth: BTreeMap<String, std::collections::BTreeSet<i64>> = BTreeMap::new();
    for s in &data.series {
        write_series(&args.out.join(format!("{}.csv", s.series.id())), &s.series)?;
        truth.insert(
            s.series.id().to_string(),
            s.anomalies.iter().copied().collect(),
        );
    }
    atomic_write(&args.out.join("anomalies.csv"), &anomalies_to_csv(&truth))?;
    write_dataset(&args.out.join("train.csv"), &data.train)?;
    write_dataset(&args.out.join("test.csv"), &data.test)?;

    let (train_anom, train_norm) = data.train.class_counts();
    let (test_anom, test_norm) = data.test.class_counts();
    eprintln!(
        "gen: {} series, train {train_anom} anomaly / {train_norm} normal \
         (undersampled at ratio {:.3}), test {test_anom} anomaly / {test_norm} normal, \
         {} windows skipped",
        data.series.len(),
        data.undersample.achieved_ratio,
        data.skipped
    );
    Ok(())
}

// --- window ---------------------------------------------------------------

#[derive(Args)]
pub struct WindowArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Raw series CSV; repeat for several series.
    #[arg(long = "series", value_name = "PATH", required = true)]
    series: Vec<PathBuf>,
    /// Ground-truth anomaly timestamps (id,timestamp CSV).
    #[arg(long, value_name = "PATH")]
    anomalies: PathBuf,
    /// Output dataset CSV.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// First pending timestamp (default: earliest with a full window).
    #[arg(long, value_name = "T")]
    t_start: Option<i64>,
    /// Last pending timestamp (default: series end).
    #[arg(long, value_name = "T")]
    t_end: Option<i64>,
    /// Stride between Normal samples.
    #[arg(long, value_name = "N", default_value_t = 1)]
    normal_stride: u32,
}

pub fn window(args: WindowArgs) -> Result<(), CliError> {
    let config = args.common.resolve()?;
    log_config(&config);
    let truth = read_anomalies(&args.anomalies)?;
    let wspec = WindowSpec::new(config.k);
    let mut samples = Vec::new();
    let mut skipped = 0usize;
    let empty = std::collections::BTreeSet::new();
    for path in &args.series {
        let series = read_series(path)?;
        let anomalies = truth.get(series.id()).unwrap_or(&empty);
        let t_start = args
            .t_start
            .unwrap_or(series.start() + MINUTES_PER_WEEK + i64::from(config.k));
        let t_end = args.t_end.unwrap_or_else(|| series.end());
        let (mut s, sk) = label_windows(
            &series,
            anomalies,
            t_start,
            t_end,
            args.normal_stride,
            &wspec,
        )?;
        samples.append(&mut s);
        skipped += sk;
    }
    let dataset = Dataset::new(config.k, samples)?;
    let (anom, norm) = dataset.class_counts();
    write_dataset(&args.out, &dataset)?;
    eprintln!("window: {anom} anomaly / {norm} normal samples, {skipped} skipped");
    Ok(())
}

// --- train ----------------------------------------------------------------

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Labeled training dataset CSV.
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Optional labeled validation dataset evaluated once per epoch.
    #[arg(long, value_name = "PATH")]
    val: Option<PathBuf>,
    /// Output model file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Optional per-epoch loss/accuracy trace CSV.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Training epochs.
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// Dropout keep probability (1 disables dropout).
    #[arg(long, value_name = "P")]
    dropout_keep: Option<f64>,
    /// Learning rate.
    #[arg(long, value_name = "LR")]
    learning_rate: Option<f64>,
    /// Mini-batch size.
    #[arg(long, value_name = "N")]
    batch_size: Option<usize>,
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let mut config = args.common.resolve()?;
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.dropout_keep {
        config.dropout_keep = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    log_config(&config);

    let dataset = read_dataset_infer(&args.data)?;
    let validation = args.val.as_deref().map(read_dataset_infer).transpose()?;
    let mut mlp_config = config.mlp_config();
    mlp_config.input_dim = dataset.input_dim();
    let (model, trace) = train_with_validation(&dataset, validation.as_ref(), &mlp_config)?;
    atomic_write(&args.out, &model_to_text(&model))?;
    if let Some(trace_path) = &args.trace {
        atomic_write(trace_path, &trace_to_csv(&trace))?;
    }
    if let Some(last) = trace.last() {
        eprintln!(
            "train: {} epochs, loss {:.6}, accuracy {:.4}",
            trace.len(),
            last.loss,
            last.accuracy
        );
    } else {
        eprintln!("train: 0 epochs (model left at initialization)");
    }
    Ok(())
}

// --- predict ----------------------------------------------------------------

#[derive(Args)]
pub struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Trained model file.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Labeled or unlabeled dataset CSV to classify.
    #[arg(long, value_name = "PATH", conflicts_with = "series")]
    data: Option<PathBuf>,
    /// Raw series CSV to window and classify.
    #[arg(long, value_name = "PATH")]
    series: Option<PathBuf>,
    /// First pending timestamp for --series.
    #[arg(long, value_name = "T")]
    t_start: Option<i64>,
    /// Last pending timestamp for --series.
    #[arg(long, value_name = "T")]
    t_end: Option<i64>,
    /// Stride between pending timestamps for --series.
    #[arg(long, value_name = "N", default_value_t = 1)]
    stride: u32,
    /// Output predictions CSV.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

fn samples_from_input(
    data: Option<&Path>,
    series: Option<&Path>,
    t_start: Option<i64>,
    t_end: Option<i64>,
    stride: u32,
    k: u32,
) -> Result<Vec<kpidet_core::model::WindowSample>, CliError> {
    match (data, series) {
        (Some(path), None) => {
            let dataset = read_dataset_infer(path)?;
            if dataset.k() != k {
                return Err(CliError::Data(format!(
                    "dataset k = {} does not match model k = {k}",
                    dataset.k()
                )));
            }
            Ok(dataset.samples().to_vec())
        }
        (None, Some(path)) => {
            let series = read_series(path)?;
            let start = t_start.unwrap_or(series.start() + MINUTES_PER_WEEK + i64::from(k));
            let end = t_end.unwrap_or_else(|| series.end());
            let (samples, skipped) =
                sliding_extract(&series, start, end, stride, &WindowSpec::new(k))?;
            if skipped > 0 {
                eprintln!("predict: {skipped} timestamps skipped (incomplete windows)");
            }
            Ok(samples)
        }
        _ => Err(CliError::Usage(
            "exactly one of --data or --series is required".into(),
        )),
    }
}

pub fn predict(args: PredictArgs) -> Result<(), CliError> {
    let config = args.common.resolve()?;
    log_config(&config);
    let model = load_model(&args.model)?;
    let k = model_k(&model)?;
    let samples = samples_from_input(
        args.data.as_deref(),
        args.series.as_deref(),
        args.t_start,
        args.t_end,
        args.stride,
        k,
    )?;
    let mut predictions = Vec::with_capacity(samples.len());
    for s in &samples {
        let (label, p_anomaly) = model.predict(s)?;
        predictions.push(Prediction {
            source_id: s.source_id.clone(),
            pending_timestamp: s.pending_timestamp,
            label,
            p_anomaly,
        });
    }
    atomic_write(&args.out, &predictions_to_csv(&predictions))?;
    let flagged = predictions
        .iter()
        .filter(|p| p.label == Label::Anomaly)
        .count();
    eprintln!(
        "predict: {} samples, {flagged} flagged anomalous",
        predictions.len()
    );
    Ok(())
}

// --- eval -------------------------------------------------------------------

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Predictions CSV from `predict`.
    #[arg(long, value_name = "PATH")]
    predictions: PathBuf,
    /// Labeled dataset the predictions were made on (same row order).
    #[arg(long, value_name = "PATH")]
    data: PathBuf,
    /// Output report CSV.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Row name in the report.
    #[arg(long, value_name = "NAME", default_value = "model")]
    name: String,
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    let config = args.common.resolve()?;
    log_config(&config);
    let predictions = read_predictions(&args.predictions)?;
    let dataset = read_dataset_infer(&args.data)?;
    if predictions.len() != dataset.len() {
        return Err(CliError::Data(format!(
            "{} predictions vs {} labeled samples",
            predictions.len(),
            dataset.len()
        )));
    }
    let pairs = dataset
        .samples()
        .iter()
        .zip(&predictions)
        .map(|(s, p)| (s.label.expect("dataset is labeled"), p.label));
    let matrix = accumulate(pairs)?;
    let rep = report(vec![EvalRow::new(args.name, matrix)])?;
    atomic_write(&args.out, &rep.render_csv())?;
    print!("{}", rep.render_text());
    Ok(())
}

// --- bench ------------------------------------------------------------------

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output directory for the report, model, and trace.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Training epochs.
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
    /// Dropout keep probability.
    #[arg(long, value_name = "P")]
    dropout_keep: Option<f64>,
}

pub fn bench(args: BenchArgs) -> Result<(), CliError> {
    let mut config = args.common.resolve()?;
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.dropout_keep {
        config.dropout_keep = v;
    }
    log_config(&config);
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", args.out.display())))?;

    let data = benchdata::build(&config)?;
    let (train_anom, train_norm) = data.train.class_counts();
    let (test_anom, test_norm) = data.test.class_counts();
    eprintln!(
        "bench: train {train_anom}/{train_norm} (anomaly/normal), test {test_anom}/{test_norm}"
    );

    let (model, trace) =
        train_with_validation(&data.train, Some(&data.test), &config.mlp_config())?;
    atomic_write(&args.out.join("model.txt"), &model_to_text(&model))?;
    atomic_write(&args.out.join("trace.csv"), &trace_to_csv(&trace))?;

    let truth: Vec<Label> = data
        .test
        .samples()
        .iter()
        .map(|s| s.label.expect("labeled"))
        .collect();

    let mut rows = Vec::new();
    let dnn: Vec<Label> = data
        .test
        .samples()
        .iter()
        .map(|s| model.predict(s).map(|(label, _)| label))
        .collect::<Result<_, _>>()?;
    rows.push(("DNN", dnn));
    rows.push((
        "3-Sigma",
        data.test
            .samples()
            .iter()
            .map(|s| baselines::three_sigma(s, config.baselines.sigma_multiplier))
            .collect(),
    ));
    rows.push((
        "EWMA Control Chart",
        data.test
            .samples()
            .iter()
            .map(|s| baselines::ewma_chart(s, config.baselines.ewma_l, config.baselines.ewma_alpha))
            .collect(),
    ));
    rows.push((
        "Polynomial Regression",
        data.test
            .samples()
            .iter()
            .map(|s| {
                baselines::poly_regression(
                    s,
                    config.baselines.poly_degree,
                    config.baselines.poly_threshold,
                )
            })
            .collect(),
    ));
    let iforest_config = kpidet_core::baselines::IsolationForestConfig {
        seed: seeds::derive(config.seed, "iforest"),
        ..config.baselines.iforest.clone()
    };
    rows.push((
        "Isolation Forest",
        baselines::isolation_forest(data.test.samples(), &iforest_config)?,
    ));

    let mut eval_rows = Vec::new();
    for (name, predicted) in rows {
        let matrix = accumulate(truth.iter().copied().zip(predicted))?;
        eval_rows.push(EvalRow::new(name, matrix));
    }
    let rep = report(eval_rows)?;
    atomic_write(&args.out.join("report.csv"), &rep.render_csv())?;
    atomic_write(&args.out.join("report.txt"), &rep.render_text())?;
    print!("{}", rep.render_text());
    Ok(())
}

// --- compile-features ---------------------------------------------------------

#[derive(Args)]
pub struct CompileArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input length of the compiled network.
    #[arg(long, value_name = "N")]
    n: usize,
    /// Output graph text file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

pub fn compile_features(args: CompileArgs) -> Result<(), CliError> {
    let config = args.common.resolve()?;
    log_config(&config);
    if args.n < 1 {
        return Err(CliError::Usage("--n must be >= 1".into()));
    }
    if args.n > 300 {
        return Err(CliError::Usage(format!(
            "--n {} is too large to serialize: the folded max/min chains grow \
             cubically (about {} MB of weights); choose n <= 300",
            args.n,
            8 * args.n * args.n * args.n / 375_000
        )));
    }
    if args.n > 120 {
        eprintln!(
            "compile-features: n = {} produces a large graph file; expect \
             hundreds of megabytes",
            args.n
        );
    }
    let profile = FeatureProfile::for_length(args.n, config.feature_threshold);
    let graph = build_profile_network(&profile, args.n)?;
    eprintln!(
        "compile-features: {} outputs, depth {}, {} parameters",
        graph.output_dim(),
        graph.depth(),
        graph.parameter_count()
    );
    atomic_write(&args.out, &graph_to_text(&graph))?;
    Ok(())
}

// --- verify-features -----------------------------------------------------------

#[derive(Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Input length; repeat to sweep several lengths.
    #[arg(long = "n", value_name = "N")]
    ns: Vec<usize>,
    /// Random trial vectors per feature (edge cases are added on top).
    #[arg(long, value_name = "N", default_value_t = 1000)]
    trials: usize,
}

pub fn verify_features(args: VerifyArgs) -> Result<(), CliError> {
    let config = args.common.resolve()?;
    log_config(&config);
    let ns = if args.ns.is_empty() {
        vec![10, 50, 100, 200]
    } else {
        args.ns.clone()
    };
    let mut failures = 0usize;
    for &n in &ns {
        let profile = FeatureProfile::for_length(n, config.feature_threshold);
        let report = verify_profile(
            &profile,
            n,
            args.trials,
            seeds::derive_indexed(config.seed, "verify", n as u64),
        )?;
        println!("n = {n}:");
        for outcome in &report.outcomes {
            println!("  {outcome}");
            if !outcome.pass {
                failures += 1;
            }
        }
    }
    if failures > 0 {
        return Err(CliError::Verification(format!(
            "{failures} feature verification(s) failed"
        )));
    }
    println!("all feature networks match the oracle");
    Ok(())
}

// --- embed ----------------------------------------------------------------------

#[derive(Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Trained model file.
    #[arg(long, value_name = "PATH")]
    model: PathBuf,
    /// Dataset CSV to embed.
    #[arg(long, value_name = "PATH", conflicts_with = "series")]
    data: Option<PathBuf>,
    /// Raw series CSV to window and embed.
    #[arg(long, value_name = "PATH")]
    series: Option<PathBuf>,
    #[arg(long, value_name = "T")]
    t_start: Option<i64>,
    #[arg(long, value_name = "T")]
    t_end: Option<i64>,
    #[arg(long, value_name = "N", default_value_t = 1)]
    stride: u32,
    /// Output embeddings CSV.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

pub fn embed(args: EmbedArgs) -> Result<(), CliError> {
    let config = args.common.resolve()?;
    log_config(&config);
    let model = load_model(&args.model)?;
    let k = model_k(&model)?;
    let samples = samples_from_input(
        args.data.as_deref(),
        args.series.as_deref(),
        args.t_start,
        args.t_end,
        args.stride,
        k,
    )?;
    let embeddings = samples
        .iter()
        .map(|s| embed_sample(&model, s))
        .collect::<Result<Vec<_>, _>>()?;
    atomic_write(&args.out, &embeddings_to_csv(&embeddings))?;
    eprintln!("embed: {} embeddings written", embeddings.len());
    Ok(())
}

// --- cluster ----------------------------------------------------------------------

#[derive(Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Embeddings CSV from `embed`.
    #[arg(long, value_name = "PATH")]
    embeddings: PathBuf,
    /// Number of clusters.
    #[arg(long, value_name = "K")]
    clusters: usize,
    #[arg(long, value_name = "N", default_value_t = 100)]
    max_iters: usize,
    #[arg(long, value_name = "TOL", default_value_t = 1e-6)]
    tol: f64,
    /// Output cluster assignment CSV.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

pub fn cluster(args: ClusterArgs) -> Result<(), CliError> {
    let config = args.common.resolve()?;
    log_config(&config);
    let embeddings = read_embeddings(&args.embeddings)?;
    let points: Vec<Vec<f64>> = embeddings.iter().map(|e| e.combined()).collect();
    let result = kmeans(
        &points,
        args.clusters,
        seeds::derive(config.seed, "kmeans"),
        args.max_iters,
        args.tol,
    )?;
    let mut out = String::from("id,timestamp,cluster\n");
    for (e, c) in embeddings.iter().zip(&result.assignments) {
        let _ = writeln!(out, "{},{},{c}", e.source_id, e.pending_timestamp);
    }
    atomic_write(&args.out, &out)?;
    eprintln!(
        "cluster: {} points into {} clusters, inertia {:.6} after {} iterations",
        points.len(),
        args.clusters,
        result.inertia,
        result.iterations
    );
    Ok(())
}

// --- similar ----------------------------------------------------------------------

#[derive(Args)]
pub struct SimilarArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Embeddings CSV from `embed`.
    #[arg(long, value_name = "PATH")]
    embeddings: PathBuf,
    /// Query id (matches the embeddings' id column).
    #[arg(long, value_name = "ID")]
    query_id: String,
    /// Query pending timestamp.
    #[arg(long, value_name = "T")]
    query_timestamp: i64,
    /// How many neighbors to return.
    #[arg(long, value_name = "K", default_value_t = 3)]
    top: usize,
}

pub fn similar(args: SimilarArgs) -> Result<(), CliError> {
    let config = args.common.resolve()?;
    log_config(&config);
    let embeddings = read_embeddings(&args.embeddings)?;
    let query = embeddings
        .iter()
        .find(|e| e.source_id == args.query_id && e.pending_timestamp == args.query_timestamp)
        .ok_or_else(|| {
            CliError::Data(format!(
                "no embedding with id '{}' at timestamp {}",
                args.query_id, args.query_timestamp
            ))
        })?
        .clone();
    let hits = top_k_similar(&query, &embeddings, args.top)?;
    println!("rank,id,timestamp,similarity");
    for (rank, hit) in hits.iter().enumerate() {
        println!(
            "{},{},{},{:.6}",
            rank + 1,
            hit.source_id,
            hit.pending_timestamp,
            hit.similarity
        );
    }
    // Self-similarity of the query, for the logs.
    let qv = query.combined();
    let self_sim = cosine(&qv, &qv)?;
    eprintln!(
        "similar: {} candidates ranked, query self-similarity {self_sim}",
        hits.len()
    );
    Ok(())
}
