use super::{run_pipeline, RunConfig, RunData};
use crate::error::{Error, Result};
use crate::eval::EvalReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Heads,
    DModel,
    Layers,
    Window,
    /// Values `full`, `time-only` and `rel-only`.
    Ablation,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Heads => "heads",
            SweepAxis::DModel => "d_model",
            SweepAxis::Layers => "layers",
            SweepAxis::Window => "window",
            SweepAxis::Ablation => "ablation",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "heads" => SweepAxis::Heads,
            "d_model" => SweepAxis::DModel,
            "layers" => SweepAxis::Layers,
            "window" => SweepAxis::Window,
            "ablation" => SweepAxis::Ablation,
            _ => return None,
        })
    }
}

/// `config` with one axis set to `value`, validated.
pub fn apply_axis(config: &RunConfig, axis: SweepAxis, value: &str) -> Result<RunConfig> {
    let mut out = config.clone();
    let number = || {
        value.parse::<usize>().map_err(|_| {
            Error::Config(format!(
                "{} value `{value}` is not a positive integer",
                axis.as_str()
            ))
        })
    };
    match axis {
        SweepAxis::Heads => out.n_heads = number()?,
        SweepAxis::DModel => out.d_model = number()?,
        SweepAxis::Layers => out.n_layers = number()?,
        SweepAxis::Window => out.window = number()?,
        SweepAxis::Ablation => {
            let (time, rel) = match value {
                "full" => (true, true),
                "time-only" => (true, false),
                "rel-only" => (false, true),
                other => {
                    return Err(Error::Config(format!(
                        "ablation value `{other}` must be full, time-only or rel-only"
                    )))
                }
            };
            out.enable_time_block = time;
            out.enable_rel_block = rel;
        }
    }
    out.validate()
        .map_err(|e| Error::Config(format!("{}={value}: {e}", axis.as_str())))?;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub value: String,
    pub outcome: Result<EvalReport, String>,
}

/// Validates every value, then runs train → score → evaluate once per value.
///
/// A failing run is recorded in its row and the sweep moves on.
pub fn sweep(
    config: &RunConfig,
    axis: SweepAxis,
    values: &[String],
    data: &RunData,
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let shortest = data.train.len().min(data.test.len());
    let configs = values
        .iter()
        .map(|v| {
            let c = apply_axis(config, axis, v)?;
            if c.window > shortest {
                return Err(Error::Config(format!(
                    "window={v} exceeds series length {shortest}"
                )));
            }
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    if data.test.labels().is_none() {
        return Err(Error::Config("sweep needs a labeled test split".into()));
    }
    Ok(values
        .iter()
        .zip(configs)
        .map(|(value, c)| SweepRow {
            value: value.clone(),
            outcome: run_pipeline(&c, data)
                .map(|o| o.report.expect("labels checked above"))
                .map_err(|e| e.to_string()),
        })
        .collect())
}

pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut out = format!("{},precision,recall,f1,status\n", axis.as_str());
    for row in rows {
        match &row.outcome {
            Ok(r) => out.push_str(&format!(
                "{},{},{},{},ok\n",
                row.value, r.precision, r.recall, r.f1
            )),
            Err(e) => out.push_str(&format!(
                "{},,,,\"error: {}\"\n",
                row.value,
                e.replace('"', "'")
            )),
        }
    }
    out
}
