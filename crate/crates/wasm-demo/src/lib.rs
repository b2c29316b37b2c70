//! Browser bindings: generate a synthetic series, train a small detector on it
//! and threshold the resulting scores.

use dconad::data::{generate_synthetic, SynthSpec};
use dconad::eval::{evaluate, Threshold};
use dconad::harness::{load_data, train, RunConfig};
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn demo_config(seed: u64, epochs: usize) -> RunConfig {
    RunConfig {
        synth: SynthSpec {
            dims: 3,
            train_len: 400,
            test_len: 400,
            ..SynthSpec::default()
        },
        window: 16,
        d_model: 8,
        epochs,
        seed,
        ..RunConfig::synthetic_benchmark()
    }
}

/// Test split of the demo benchmark.
#[wasm_bindgen]
pub struct Preview {
    values: Vec<f64>,
    labels: Vec<u8>,
    dims: usize,
}

#[wasm_bindgen]
impl Preview {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Values of one variable over time.
    pub fn variable(&self, v: usize) -> Vec<f64> {
        let n = self.labels.len();
        self.values[v * n..(v + 1) * n].to_vec()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.labels.clone()
    }
}

#[wasm_bindgen]
pub fn synth_preview(seed: u64) -> Result<Preview, JsError> {
    let config = demo_config(seed, 0);
    let (_, test, _) = generate_synthetic(&config.synth, seed).map_err(js)?;
    Ok(Preview {
        values: test.values().concat(),
        labels: test.labels().unwrap_or_default().to_vec(),
        dims: test.dims(),
    })
}

/// Trains on the demo benchmark and returns one score per test timestamp.
#[wasm_bindgen]
pub fn train_and_score(seed: u64, epochs: usize) -> Result<Vec<f64>, JsError> {
    let config = demo_config(seed, epochs);
    let data = load_data(&config).map_err(js)?;
    let trained = train(&config, &data.train).map_err(js)?;
    trained.score(&data.test).map_err(js)
}

/// `[precision, recall, f1, threshold]` after flagging the top `ratio` of scores.
#[wasm_bindgen]
pub fn evaluate_top(
    scores: &[f64],
    labels: &[u8],
    ratio: f64,
    adjust: bool,
) -> Result<Vec<f64>, JsError> {
    let report = evaluate(scores, labels, Threshold::Quantile(ratio), adjust).map_err(js)?;
    Ok(vec![
        report.precision,
        report.recall,
        report.f1,
        report.threshold,
    ])
}
