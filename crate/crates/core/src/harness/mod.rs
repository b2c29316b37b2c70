//! Run configuration, training, scoring, checkpoints, sweeps and gradient checks.

mod checkpoint;
mod config;
mod gradcheck;
mod score;
mod sweep;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use config::RunConfig;
pub use gradcheck::{gradcheck, param_group, GradcheckConfig, GradcheckReport, GroupResult};
pub use score::{parse_scores_csv, score_series, scores_csv};
pub use sweep::{apply_axis, sweep, sweep_csv, SweepAxis, SweepRow};
pub use train::{train, train_with, EpochLog, TrainLog, Trained};

use crate::data::{generate_synthetic, load_csv_dataset, Injection, TimeSeriesDataset};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};

/// Train and test splits for a run, plus the injected anomalies for synthetic data.
#[derive(Clone, Debug)]
pub struct RunData {
    pub train: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
    pub injections: Vec<Injection>,
}

pub fn load_data(config: &RunConfig) -> Result<RunData> {
    let (train, test, injections) = match &config.data_dir {
        Some(dir) => {
            let (train, test) = load_csv_dataset(dir)?;
            (train, test, Vec::new())
        }
        None => generate_synthetic(&config.synth, config.seed)?,
    };
    for (split, len) in [("train", train.len()), ("test", test.len())] {
        if config.window > len {
            return Err(Error::Config(format!(
                "window {} exceeds {split} length {len}",
                config.window
            )));
        }
    }
    Ok(RunData {
        train,
        test,
        injections,
    })
}

/// Everything produced by one train → score → evaluate pass.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub trained: Trained,
    pub scores: Vec<f64>,
    pub report: Option<EvalReport>,
    pub raw_report: Option<EvalReport>,
}

pub fn run_pipeline(config: &RunConfig, data: &RunData) -> Result<RunOutcome> {
    let trained = train(config, &data.train)?;
    let scores = trained.score(&data.test)?;
    let (report, raw_report) = match data.test.labels() {
        Some(truth) => (
            Some(evaluate(&scores, truth, config.threshold, config.adjust)?),
            Some(evaluate(&scores, truth, config.threshold, false)?),
        ),
        None => (None, None),
    };
    Ok(RunOutcome {
        trained,
        scores,
        report,
        raw_report,
    })
}
