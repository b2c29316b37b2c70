use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::RunConfig;
use crate::data::{window_starts, Preprocessor, TimeSeriesDataset, WindowBatch};
use crate::error::{Error, Result};
use crate::model::{DConAd, Session};
use crate::tensor::{Adam, AdamConfig, Tensor};

/// Loss statistics of one completed epoch, averaged over its batches.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub l_v1: f64,
    pub l_v2: f64,
    pub batches: usize,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub checksum: String,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,l_v1,l_v2,batches,wall_seconds\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{:.3}\n",
                e.epoch, e.loss, e.l_v1, e.l_v2, e.batches, e.wall_seconds
            ));
        }
        out.push_str(&format!("# checksum={}\n", self.checksum));
        out
    }
}

/// A fitted detector together with the statistics its inputs must be scaled by.
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: DConAd,
    pub preprocessor: Preprocessor,
    pub log: TrainLog,
}

struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.start.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        return 0.0;
    }
}

pub fn train(config: &RunConfig, data: &TimeSeriesDataset) -> Result<Trained> {
    train_with(config, data, |_| {})
}

/// Trains from a fresh seeded initialization, calling `on_epoch` after every epoch.
pub fn train_with(
    config: &RunConfig,
    data: &TimeSeriesDataset,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Trained> {
    config.validate()?;
    let preprocessor = Preprocessor::fit(data, config.diff_order)?;
    let series = preprocessor.prepare(data)?;
    let mut model = DConAd::new(config.encoder(), data.dims(), config.seed)?;
    let objective = config.objective();
    let mut starts = window_starts(series.len(), config.window, config.stride)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        model.params.values(),
    );
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5ee_d0fb_a7c4);
    let mut log = TrainLog::default();

    for epoch in 0..config.epochs {
        let clock = Stopwatch::start();
        starts.shuffle(&mut shuffle_rng);
        let (mut loss_sum, mut v1_sum, mut v2_sum) = (0.0, 0.0, 0.0);
        let chunks = starts.chunks(config.batch_size);
        let batches = chunks.len();
        for (batch_index, chunk) in chunks.enumerate() {
            let batch = WindowBatch::from_starts(&series, chunk, config.window)?;
            let grads = {
                let mut session = Session::training(&model.params);
                let (loss, parts) = model.batch_loss(&mut session, &batch, &objective)?;
                if !parts.total.is_finite() || !parts.l_v1.is_finite() || !parts.l_v2.is_finite() {
                    return Err(Error::NonFinite {
                        epoch,
                        batch: batch_index,
                        starts: chunk.to_vec(),
                    });
                }
                loss_sum += parts.total;
                v1_sum += parts.l_v1;
                v2_sum += parts.l_v2;
                session.backward(loss)?;
                session.param_grads()
            };
            let grads: Vec<Tensor> = grads
                .into_iter()
                .zip(model.params.values())
                .map(|(g, p)| g.unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            adam.apply(model.params.values_mut(), &grads)?;
        }
        let n = batches.max(1) as f64;
        let entry = EpochLog {
            epoch,
            loss: loss_sum / n,
            l_v1: v1_sum / n,
            l_v2: v2_sum / n,
            batches,
            wall_seconds: clock.seconds(),
        };
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    log.checksum = model.params.checksum();
    Ok(Trained {
        model,
        preprocessor,
        log,
    })
}
