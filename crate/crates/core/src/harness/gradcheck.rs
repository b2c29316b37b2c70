use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::RunConfig;
use crate::data::make_windows;
use crate::error::{Error, Result};
use crate::model::{DConAd, EncoderConfig, ParamStore, Session};
use crate::objective::{LossCombine, LossMode, Objective};
use crate::tensor::OpKind;

/// Settings for a finite-difference audit of the full model.
#[derive(Clone, Debug)]
pub struct GradcheckConfig {
    pub encoder: EncoderConfig,
    pub input_dims: usize,
    pub windows: usize,
    pub seed: u64,
    /// Entries checked per parameter tensor; smaller tensors are checked in full.
    pub samples_per_tensor: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Scales one backward rule, to confirm that a broken rule is caught.
    pub fault: Option<(OpKind, f64)>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig {
                d_model: 8,
                n_heads: 1,
                n_layers: 1,
                window: 8,
                ff_inner: 8,
                ..EncoderConfig::default()
            },
            input_dims: 3,
            windows: 2,
            seed: 0,
            samples_per_tensor: 24,
            step: 1e-5,
            tolerance: 1e-3,
            fault: None,
        }
    }
}

impl GradcheckConfig {
    /// The run's architecture shrunk to at most 8 timestamps and 8 channels.
    pub fn from_run(config: &RunConfig) -> Self {
        let base = Self::default();
        let d_model = config.d_model.min(8);
        let n_heads = if d_model % config.n_heads == 0 {
            config.n_heads
        } else {
            1
        };
        Self {
            encoder: EncoderConfig {
                d_model,
                n_heads,
                n_layers: config.n_layers.min(2),
                window: config.window.clamp(2, 8),
                ff_inner: config.encoder().ff_inner.min(8),
                enable_time_block: config.enable_time_block,
                enable_rel_block: config.enable_rel_block,
                leaky_slope: config.leaky_slope,
            },
            seed: config.seed,
            ..base
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupResult {
    pub group: &'static str,
    pub max_rel_err: f64,
    pub checked: usize,
    /// Entries sitting on a kink, where one-sided differences disagree.
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub groups: Vec<GroupResult>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn failures(&self) -> Vec<&GroupResult> {
        self.groups
            .iter()
            .filter(|g| g.max_rel_err.is_nan() || g.max_rel_err >= self.tolerance)
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            let verdict = if g.max_rel_err < self.tolerance {
                "ok"
            } else {
                "FAIL"
            };
            out.push_str(&format!(
                "{:<14} max_rel_err={:.3e} checked={} skipped={} {verdict}\n",
                g.group, g.max_rel_err, g.checked, g.skipped
            ));
        }
        out
    }

    /// Turns a failing report into an error listing the failing groups.
    pub fn into_result(self) -> Result<Self> {
        let failed: Vec<String> = self
            .failures()
            .iter()
            .map(|g| format!("{} ({:.3e})", g.group, g.max_rel_err))
            .collect();
        if failed.is_empty() {
            Ok(self)
        } else {
            Err(Error::Gradcheck(failed.join(", ")))
        }
    }
}

/// Parameter group of a named tensor.
pub fn param_group(name: &str) -> &'static str {
    if name.starts_with("views.bilinear") {
        "bilinear"
    } else if name.starts_with("views.") {
        "view-linear"
    } else if name.contains(".embed.") {
        "embedding"
    } else if name.contains(".attn.") {
        "attention"
    } else if name.contains("_norm.") {
        "layer-norm"
    } else if name.contains(".ff.") {
        "feed-forward"
    } else {
        "other"
    }
}

const KINK_RATIO: f64 = 1e-2;
const KINK_MARGIN: f64 = 1e-3;
const MAX_DRAWS: usize = 32;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Compares backpropagated gradients of the training loss with central
/// differences, for sampled entries of every parameter tensor.
///
/// The symmetric-KL loss with summed views has the value `2·S` where `S` is the
/// symmetric divergence, while stop-gradient leaves exactly `∇S` to flow back.
/// The finite differences are therefore taken of half the loss value.
///
/// ReLU-family activations make the loss non-differentiable where an input is
/// exactly zero, which happens whenever a whole feed-forward row is switched
/// off. Inputs are redrawn until every activation input is clear of zero, and
/// any entry whose forward and backward one-sided differences still disagree
/// is counted as skipped rather than compared.
pub fn gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    cfg.encoder.validate()?;
    let model = DConAd::new(cfg.encoder.clone(), cfg.input_dims, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let objective = Objective {
        mode: LossMode::SymmetricKl,
        combine: LossCombine::Sum,
    };
    let len = cfg.encoder.window + cfg.windows - 1;

    // Redraw the inputs until no activation sits close to its kink.
    let mut chosen = None;
    for _ in 0..MAX_DRAWS {
        let series: Vec<Vec<f64>> = (0..cfg.input_dims)
            .map(|_| (0..len).map(|_| rng.gen_range(-1.5..1.5)).collect())
            .collect();
        let batch = make_windows(&series, cfg.encoder.window, 1)?;
        let mut s = Session::training(&model.params);
        let (loss, _) = model.batch_loss(&mut s, &batch, &objective)?;
        if s.tape.kink_margin() > KINK_MARGIN {
            if let Some((kind, factor)) = cfg.fault {
                s.tape.inject_fault(kind, factor);
            }
            s.backward(loss)?;
            chosen = Some((batch, s.param_grads()));
            break;
        }
    }
    let (batch, analytic) = chosen.ok_or_else(|| {
        Error::Gradcheck(format!(
            "no input draw kept every activation {KINK_MARGIN} away from zero"
        ))
    })?;

    let loss_of = |store: &ParamStore| -> Result<f64> {
        let probe = DConAd {
            params: store.clone(),
            ..model.clone()
        };
        let mut s = Session::inference(&probe.params);
        let (_, parts) = probe.batch_loss(&mut s, &batch, &objective)?;
        Ok(0.5 * parts.total)
    };

    let mut groups: Vec<GroupResult> = Vec::new();
    let mut store = model.params.clone();
    let base = loss_of(&store)?;
    for id in model.params.ids() {
        let name = model.params.name(id).to_string();
        let grad = analytic[id.index()]
            .as_ref()
            .ok_or_else(|| Error::Gradcheck(format!("{name} received no gradient")))?;
        let n = grad.len();
        let entries: Vec<usize> = if n <= cfg.samples_per_tensor {
            (0..n).collect()
        } else {
            sample(&mut rng, n, cfg.samples_per_tensor).into_vec()
        };
        let mut worst: f64 = 0.0;
        let mut skipped = 0;
        for &e in &entries {
            let original = store.get(id).data()[e];
            store.get_mut(id).data_mut()[e] = original + cfg.step;
            let plus = loss_of(&store)?;
            store.get_mut(id).data_mut()[e] = original - cfg.step;
            let minus = loss_of(&store)?;
            store.get_mut(id).data_mut()[e] = original;
            let ahead = (plus - base) / cfg.step;
            let behind = (base - minus) / cfg.step;
            if (ahead - behind).abs() > KINK_RATIO * ahead.abs().max(behind.abs()).max(1e-6) {
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let err = rel_err(grad.data()[e], numeric);
            worst = if err.is_nan() {
                f64::INFINITY
            } else {
                worst.max(err)
            };
        }
        let group = param_group(&name);
        match groups.iter_mut().find(|g| g.group == group) {
            Some(g) => {
                g.max_rel_err = g.max_rel_err.max(worst);
                g.checked += entries.len() - skipped;
                g.skipped += skipped;
            }
            None => groups.push(GroupResult {
                group,
                max_rel_err: worst,
                checked: entries.len() - skipped,
                skipped,
            }),
        }
    }
    Ok(GradcheckReport {
        groups,
        tolerance: cfg.tolerance,
    })
}
