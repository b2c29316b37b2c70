use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{AnomalyKind, DiffOrder, SynthSpec};
use crate::error::{Error, Result};
use crate::eval::Threshold;
use crate::model::EncoderConfig;
use crate::objective::{LossCombine, LossMode, Objective};

/// Every setting of one train/score/evaluate run.
///
/// Serialized as flat `key = value` lines; `#` starts a comment.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub name: String,
    /// Directory with `train.csv`, `test.csv` and `test_labels.csv`; synthetic data when `None`.
    pub data_dir: Option<PathBuf>,
    pub synth: SynthSpec,
    pub window: usize,
    pub stride: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// Inner width of the feed-forward blocks; follows `d_model` when `None`.
    pub ff_inner: Option<usize>,
    pub leaky_slope: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss_mode: LossMode,
    pub loss_combine: LossCombine,
    pub threshold: Threshold,
    pub adjust: bool,
    pub enable_time_block: bool,
    pub enable_rel_block: bool,
    pub diff_order: DiffOrder,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            data_dir: None,
            synth: SynthSpec::default(),
            window: 90,
            stride: 1,
            d_model: 256,
            n_heads: 1,
            n_layers: 1,
            ff_inner: None,
            leaky_slope: 0.01,
            lr: 1e-4,
            epochs: 3,
            batch_size: 32,
            seed: 0,
            loss_mode: LossMode::SymmetricKl,
            loss_combine: LossCombine::Difference,
            threshold: Threshold::Fixed(1.1),
            adjust: true,
            enable_time_block: true,
            enable_rel_block: true,
            diff_order: DiffOrder::NormalizeThenDiff,
            out_dir: PathBuf::from("runs"),
        }
    }
}

const PRESETS: [(&str, usize, usize, f64); 5] = [
    ("msl", 90, 1, 1.1),
    ("smap", 105, 3, 0.8),
    ("psm", 60, 3, 1.5),
    ("smd", 105, 1, 1.1),
    ("swat", 105, 3, 1.0),
];

impl RunConfig {
    /// Window, depth and threshold published for a benchmark dataset.
    pub fn preset(name: &str) -> Option<Self> {
        let (_, window, n_layers, xi) = PRESETS.iter().find(|p| p.0 == name)?;
        Some(Self {
            name: name.to_string(),
            window: *window,
            n_layers: *n_layers,
            threshold: Threshold::Fixed(*xi),
            out_dir: PathBuf::from("runs").join(name),
            ..Self::default()
        })
    }

    pub fn preset_names() -> impl Iterator<Item = &'static str> {
        PRESETS.iter().map(|p| p.0)
    }

    /// The seed-7 synthetic benchmark.
    ///
    /// The summed objective is used here: with the difference form the
    /// optimizer pushes the two views apart and the scores stop separating
    /// anomalies from normal points.
    pub fn synthetic_benchmark() -> Self {
        Self {
            name: "synthetic".into(),
            window: 32,
            d_model: 16,
            n_layers: 1,
            seed: 7,
            loss_combine: LossCombine::Sum,
            lr: 1e-3,
            batch_size: 8,
            threshold: Threshold::Quantile(0.01),
            out_dir: PathBuf::from("runs/synthetic"),
            ..Self::default()
        }
    }

    pub fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_layers: self.n_layers,
            window: self.window,
            enable_time_block: self.enable_time_block,
            enable_rel_block: self.enable_rel_block,
            ff_inner: self.ff_inner.unwrap_or(self.d_model),
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn objective(&self) -> Objective {
        Objective {
            mode: self.loss_mode,
            combine: self.loss_combine,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder().validate()?;
        self.threshold.validate()?;
        if self.data_dir.is_none() {
            self.synth.validate()?;
        }
        let positive = [("stride", self.stride), ("batch_size", self.batch_size)];
        for (field, value) in positive {
            if value == 0 {
                return Err(Error::Config(format!("{field} must be ≥ 1")));
            }
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!(
                "lr {} must be finite and > 0",
                self.lr
            )));
        }
        if self.data_dir.is_none() {
            let shortest = self.synth.train_len.min(self.synth.test_len);
            if self.window > shortest {
                return Err(Error::Config(format!(
                    "window {} exceeds series length {shortest}",
                    self.window
                )));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("name", self.name.clone());
        put(
            "data_dir",
            self.data_dir
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
        );
        put("synth_dims", self.synth.dims.to_string());
        put("synth_train_len", self.synth.train_len.to_string());
        put("synth_test_len", self.synth.test_len.to_string());
        put("synth_anomaly_rate", self.synth.anomaly_rate.to_string());
        put(
            "synth_kinds",
            self.synth
                .kinds
                .iter()
                .map(|k| k.as_str())
                .collect::<Vec<_>>()
                .join(","),
        );
        put("synth_noise_std", self.synth.noise_std.to_string());
        put("window", self.window.to_string());
        put("stride", self.stride.to_string());
        put("d_model", self.d_model.to_string());
        put("n_heads", self.n_heads.to_string());
        put("n_layers", self.n_layers.to_string());
        put(
            "ff_inner",
            self.ff_inner.map_or("auto".to_string(), |v| v.to_string()),
        );
        put("leaky_slope", self.leaky_slope.to_string());
        put("lr", self.lr.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("seed", self.seed.to_string());
        put("loss_mode", self.loss_mode.as_str().to_string());
        put("loss_combine", self.loss_combine.as_str().to_string());
        put("threshold", self.threshold.to_string());
        put("adjust", self.adjust.to_string());
        put("enable_time_block", self.enable_time_block.to_string());
        put("enable_rel_block", self.enable_rel_block.to_string());
        put("diff_order", self.diff_order.as_str().to_string());
        put("out_dir", self.out_dir.display().to_string());
        out
    }

    /// The serialized form without `out_dir`, which never affects results.
    pub fn fingerprint_text(&self) -> String {
        self.to_text()
            .lines()
            .filter(|l| !l.starts_with("out_dir "))
            .map(|l| format!("{l}\n"))
            .collect()
    }

    /// Parses `key = value` lines on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (index, raw) in text.lines().enumerate() {
            let line_no = index + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {line_no}: expected `key = value`, found `{line}`"
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if seen.iter().any(|k| k == key) {
                return Err(Error::Config(format!(
                    "line {line_no}: duplicate key `{key}`"
                )));
            }
            seen.push(key.to_string());
            cfg.set(key, value)
                .map_err(|msg| Error::Config(format!("line {line_no}: {key}: {msg}")))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse `{v}`"))
        }
        fn flag(v: &str) -> Result<bool, String> {
            match v {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(format!("expected true or false, found `{v}`")),
            }
        }
        match key {
            "name" => self.name = value.to_string(),
            "data_dir" => {
                self.data_dir = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            "synth_dims" => self.synth.dims = num(value)?,
            "synth_train_len" => self.synth.train_len = num(value)?,
            "synth_test_len" => self.synth.test_len = num(value)?,
            "synth_anomaly_rate" => self.synth.anomaly_rate = num(value)?,
            "synth_kinds" => {
                self.synth.kinds = value
                    .split(',')
                    .map(|k| {
                        AnomalyKind::parse(k.trim())
                            .ok_or_else(|| format!("unknown anomaly kind `{k}`"))
                    })
                    .collect::<Result<_, _>>()?;
            }
            "synth_noise_std" => self.synth.noise_std = num(value)?,
            "window" => self.window = num(value)?,
            "stride" => self.stride = num(value)?,
            "d_model" => self.d_model = num(value)?,
            "n_heads" => self.n_heads = num(value)?,
            "n_layers" => self.n_layers = num(value)?,
            "ff_inner" => {
                self.ff_inner = if value == "auto" {
                    None
                } else {
                    Some(num(value)?)
                };
            }
            "leaky_slope" => self.leaky_slope = num(value)?,
            "lr" => self.lr = num(value)?,
            "epochs" => self.epochs = num(value)?,
            "batch_size" => self.batch_size = num(value)?,
            "seed" => self.seed = num(value)?,
            "loss_mode" => {
                self.loss_mode =
                    LossMode::parse(value).ok_or_else(|| format!("unknown loss mode `{value}`"))?;
            }
            "loss_combine" => {
                self.loss_combine = LossCombine::parse(value)
                    .ok_or_else(|| format!("unknown loss combination `{value}`"))?;
            }
            "threshold" => {
                self.threshold = match value.strip_prefix("quantile:") {
                    Some(r) => Threshold::Quantile(num(r)?),
                    None => Threshold::Fixed(num(value)?),
                };
            }
            "adjust" => self.adjust = flag(value)?,
            "enable_time_block" => self.enable_time_block = flag(value)?,
            "enable_rel_block" => self.enable_rel_block = flag(value)?,
            "diff_order" => {
                self.diff_order = DiffOrder::parse(value)
                    .ok_or_else(|| format!("unknown differencing order `{value}`"))?;
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }
}
