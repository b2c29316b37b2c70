use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dconad::data::{generate_synthetic, load_csv_dataset, write_csv_dataset};
use dconad::eval::evaluate;
use dconad::harness::{
    gradcheck, load_data, parse_scores_csv, score_series, scores_csv, sweep, sweep_csv, train_with,
    Checkpoint, GradcheckConfig, RunConfig, SweepAxis,
};
use dconad::{Error, Result};

#[derive(Parser)]
#[command(
    name = "dconad",
    version,
    about = "Contrastive anomaly detection for multivariate time series"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (`key = value` lines). Defaults to the synthetic benchmark.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Directory with train.csv, test.csv and test_labels.csv; overrides `data_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Checkpoint to read (score) or write (train). Defaults to OUT/checkpoint.bin.
    #[arg(long, global = true, value_name = "PATH")]
    checkpoint: Option<PathBuf>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write config.txt, checkpoint.bin and trainlog.csv.
    Train,
    /// Score the test split with a checkpoint and write scores.csv.
    Score,
    /// Threshold a scores file and write metrics.txt and metrics_raw.txt.
    Evaluate {
        /// Scores to evaluate. Defaults to OUT/scores.csv.
        #[arg(long, value_name = "PATH")]
        scores: Option<PathBuf>,
    },
    /// Write the synthetic dataset described by the configuration as CSV.
    Synth,
    /// Run train, score and evaluate once per value of one axis.
    Sweep {
        /// heads, d_model, layers, window or ablation.
        #[arg(long)]
        axis: String,
        /// Comma-separated values, e.g. `1,2,4` or `full,time-only,rel-only`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Compare backpropagated and finite-difference gradients on a shrunken model.
    Gradcheck,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = resolve_config(&cli.common)?;
    match cli.command {
        Command::Train => cmd_train(&cli.common, &config),
        Command::Score => cmd_score(&cli.common, &config),
        Command::Evaluate { scores } => cmd_evaluate(&config, scores),
        Command::Synth => cmd_synth(&config),
        Command::Sweep { axis, values } => cmd_sweep(&config, &axis, &values),
        Command::Gradcheck => cmd_gradcheck(&config),
    }
}

/// The configuration file (or the benchmark defaults) with flag overrides, validated.
fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::synthetic_benchmark(),
    };
    if let Some(dir) = &common.data {
        config.data_dir = Some(dir.clone());
    }
    if let Some(out) = &common.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn stamp(config: &RunConfig) -> String {
    format!("# name={} seed={}\n", config.name, config.seed)
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_out(config: &RunConfig) -> Result<&Path> {
    let dir = config.out_dir.as_path();
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    Ok(dir)
}

fn checkpoint_path(common: &Common, config: &RunConfig) -> PathBuf {
    common
        .checkpoint
        .clone()
        .unwrap_or_else(|| config.out_dir.join("checkpoint.bin"))
}

fn cmd_train(common: &Common, config: &RunConfig) -> Result<()> {
    let data = load_data(config)?;
    let trained = train_with(config, &data.train, |e| {
        eprintln!(
            "epoch {} loss={:.6} l_v1={:.6} l_v2={:.6} ({:.1}s)",
            e.epoch, e.loss, e.l_v1, e.l_v2, e.wall_seconds
        );
    })?;
    let out = create_out(config)?;
    let ck_path = checkpoint_path(common, config);
    write(&out.join("config.txt"), config.to_text())?;
    write(
        &ck_path,
        Checkpoint::from_trained(config, &trained).to_bytes(),
    )?;
    write(
        &out.join("trainlog.csv"),
        format!("{}{}", stamp(config), trained.log.to_csv()),
    )?;
    println!(
        "checkpoint {} checksum={}",
        ck_path.display(),
        trained.log.checksum
    );
    Ok(())
}

fn cmd_score(common: &Common, config: &RunConfig) -> Result<()> {
    let ck_path = checkpoint_path(common, config);
    let bytes = fs::read(&ck_path).map_err(|source| Error::Io {
        path: ck_path.clone(),
        source,
    })?;
    let checkpoint = Checkpoint::from_bytes(&bytes)?;
    let trained = checkpoint.restore(config)?;
    let data = load_data(config)?;
    let scores = score_series(&trained.model, &trained.preprocessor, &data.test)?;
    let csv = scores_csv(&scores, config.threshold, data.test.labels())?;
    let out = create_out(config)?;
    write(&out.join("scores.csv"), format!("{}{csv}", stamp(config)))?;
    println!("scored {} timestamps", scores.len());
    Ok(())
}

fn cmd_evaluate(config: &RunConfig, scores: Option<PathBuf>) -> Result<()> {
    let path = scores.unwrap_or_else(|| config.out_dir.join("scores.csv"));
    let text = fs::read_to_string(&path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let (scores, truth) = parse_scores_csv(&text)?;
    let truth = match (truth, &config.data_dir) {
        (Some(t), _) => t,
        (None, Some(dir)) => {
            let (_, test) = load_csv_dataset(dir)?;
            test.labels()
                .ok_or_else(|| Error::Contract(format!("{} has no test labels", dir.display())))?
                .to_vec()
        }
        (None, None) => {
            return Err(Error::Contract(format!(
                "{} has no truth column and no data directory was given",
                path.display()
            )))
        }
    };
    let report = evaluate(&scores, &truth, config.threshold, config.adjust)?;
    let raw = evaluate(&scores, &truth, config.threshold, false)?;
    let out = create_out(config)?;
    write(
        &out.join("metrics.txt"),
        format!("{}{}", stamp(config), report.to_text()),
    )?;
    write(
        &out.join("metrics_raw.txt"),
        format!("{}{}", stamp(config), raw.to_text()),
    )?;
    println!(
        "precision={:.4} recall={:.4} f1={:.4} threshold={}",
        report.precision, report.recall, report.f1, report.threshold
    );
    Ok(())
}

fn cmd_synth(config: &RunConfig) -> Result<()> {
    let (train, test, injections) = generate_synthetic(&config.synth, config.seed)?;
    let out = create_out(config)?;
    write_csv_dataset(out, &train, &test)?;
    let mut table = format!("{}kind,start,len,variables\n", stamp(config));
    for inj in &injections {
        let vars: Vec<String> = inj.variables.iter().map(|v| v.to_string()).collect();
        table.push_str(&format!(
            "{},{},{},{}\n",
            inj.kind.as_str(),
            inj.start,
            inj.len,
            vars.join(" ")
        ));
    }
    write(&out.join("injections.csv"), table)?;
    println!("wrote {} anomalies to {}", injections.len(), out.display());
    Ok(())
}

fn cmd_sweep(config: &RunConfig, axis: &str, values: &[String]) -> Result<()> {
    let axis = SweepAxis::parse(axis).ok_or_else(|| {
        Error::Config(format!(
            "unknown axis `{axis}`; expected heads, d_model, layers, window or ablation"
        ))
    })?;
    let data = load_data(config)?;
    let rows = sweep(config, axis, values, &data)?;
    let out = create_out(config)?;
    let name = format!("sweep_{}.csv", axis.as_str());
    write(
        &out.join(&name),
        format!("{}{}", stamp(config), sweep_csv(axis, &rows)),
    )?;
    for row in &rows {
        match &row.outcome {
            Ok(r) => println!("{}={} f1={:.4}", axis.as_str(), row.value, r.f1),
            Err(e) => println!("{}={} error: {e}", axis.as_str(), row.value),
        }
    }
    Ok(())
}

fn cmd_gradcheck(config: &RunConfig) -> Result<()> {
    let report = gradcheck(&GradcheckConfig::from_run(config))?;
    print!("{}", report.to_text());
    report.into_result().map(|_| ())
}
