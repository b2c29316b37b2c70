use super::Trained;
use crate::data::{scoring_starts, Preprocessor, TimeSeriesDataset, WindowBatch};
use crate::error::{Error, Result};
use crate::eval::{threshold_labels, Threshold};
use crate::model::DConAd;

/// One score per test timestamp.
///
/// Windows are laid end to end; a final right-aligned window covers any
/// remainder and contributes scores only for timestamps not yet scored.
pub fn score_series(
    model: &DConAd,
    preprocessor: &Preprocessor,
    data: &TimeSeriesDataset,
) -> Result<Vec<f64>> {
    if data.dims() != model.input_dims {
        return Err(Error::Incompatible {
            field: "input dimensions",
            checkpoint: model.input_dims.to_string(),
            config: data.dims().to_string(),
        });
    }
    let window = model.config.window;
    let series = preprocessor.prepare(data)?;
    let starts = scoring_starts(series.len(), window)?;
    let batch = WindowBatch::from_starts(&series, &starts, window)?;
    let mut scores: Vec<Option<f64>> = vec![None; series.len()];
    for ((w, dw), &start) in batch
        .windows
        .iter()
        .zip(&batch.diff_windows)
        .zip(&batch.start_indices)
    {
        let window_scores = model.score_window(w, dw)?;
        for (offset, s) in window_scores.into_iter().enumerate() {
            scores[start + offset].get_or_insert(s);
        }
    }
    Ok(scores
        .into_iter()
        .map(|s| s.expect("scoring windows cover every timestamp"))
        .collect())
}

impl Trained {
    pub fn score(&self, data: &TimeSeriesDataset) -> Result<Vec<f64>> {
        score_series(&self.model, &self.preprocessor, data)
    }
}

/// `timestamp_index,score,pred,truth` rows; `truth` is empty without labels.
pub fn scores_csv(scores: &[f64], threshold: Threshold, truth: Option<&[u8]>) -> Result<String> {
    let (pred, _) = threshold_labels(scores, threshold)?;
    let mut out = String::from("timestamp_index,score,pred,truth\n");
    for (t, (s, p)) in scores.iter().zip(&pred).enumerate() {
        let label = truth.map_or(String::new(), |l| l[t].to_string());
        out.push_str(&format!("{t},{s},{p},{label}\n"));
    }
    Ok(out)
}

/// Reads back the scores and labels of a `scores.csv` file. Lines starting
/// with `#` are ignored.
pub fn parse_scores_csv(text: &str) -> Result<(Vec<f64>, Option<Vec<u8>>)> {
    let mut scores = Vec::new();
    let mut truth = Vec::new();
    let mut labelled = true;
    let rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#'))
        .skip(1);
    for (i, line) in rows {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Contract(format!(
                "scores line {}: expected 4 fields, found {}",
                i + 1,
                fields.len()
            )));
        }
        let score: f64 = fields[1].parse().map_err(|_| {
            Error::Contract(format!("scores line {}: bad score `{}`", i + 1, fields[1]))
        })?;
        scores.push(score);
        match fields[3].trim() {
            "" => labelled = false,
            "0" => truth.push(0),
            "1" => truth.push(1),
            other => {
                return Err(Error::Contract(format!(
                    "scores line {}: bad label `{other}`",
                    i + 1
                )))
            }
        }
    }
    Ok((scores, labelled.then_some(truth)))
}
