use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DataError, Split, TimeSeriesDataset};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnomalyKind {
    /// A single timestamp pushed far from its neighbourhood.
    Spike,
    /// A contiguous segment offset by a constant.
    LevelShift,
    /// A contiguous segment with heavy additive noise.
    CollectiveNoise,
}

impl AnomalyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyKind::Spike => "spike",
            AnomalyKind::LevelShift => "level-shift",
            AnomalyKind::CollectiveNoise => "collective-noise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "spike" => Some(AnomalyKind::Spike),
            "level-shift" => Some(AnomalyKind::LevelShift),
            "collective-noise" => Some(AnomalyKind::CollectiveNoise),
            _ => None,
        }
    }
}

/// Parameters of the synthetic benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub dims: usize,
    pub train_len: usize,
    pub test_len: usize,
    /// Fraction of test timestamps labeled anomalous, in (0, 1).
    pub anomaly_rate: f64,
    pub kinds: Vec<AnomalyKind>,
    pub noise_std: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            dims: 5,
            train_len: 2000,
            test_len: 2000,
            anomaly_rate: 0.01,
            kinds: vec![AnomalyKind::Spike],
            noise_std: 0.05,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.anomaly_rate > 0.0 && self.anomaly_rate < 1.0) {
            return Err(DataError::Config(format!(
                "anomaly rate {} outside (0, 1)",
                self.anomaly_rate
            )));
        }
        if self.dims == 0 {
            return Err(DataError::Config("synthetic dims must be ≥ 1".into()));
        }
        if self.train_len < 2 || self.test_len < 2 {
            return Err(DataError::Config(
                "synthetic splits need ≥ 2 timestamps".into(),
            ));
        }
        if self.kinds.is_empty() {
            return Err(DataError::Config("no anomaly kinds requested".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(DataError::Config("noise std must be finite and ≥ 0".into()));
        }
        Ok(())
    }

    /// Number of labeled test timestamps: `⌈rate · T_test⌉`.
    pub fn anomaly_count(&self) -> usize {
        ((self.anomaly_rate * self.test_len as f64) - 1e-9)
            .ceil()
            .max(1.0) as usize
    }
}

/// One injected anomaly in the test split.
#[derive(Clone, Debug, PartialEq)]
pub struct Injection {
    pub kind: AnomalyKind,
    pub start: usize,
    pub len: usize,
    pub variables: Vec<usize>,
}

/// Neighbourhood radius used to size spikes; injected segments keep at least
/// this much clean signal between them.
const LOCAL_RADIUS: usize = 10;
const GAP: usize = LOCAL_RADIUS + 2;

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

struct Generator {
    offsets: Vec<f64>,
    loadings: Vec<Vec<f64>>,
    shared: Vec<(f64, f64)>,
    own: Vec<(f64, f64, f64)>,
}

impl Generator {
    fn new(dims: usize, rng: &mut ChaCha8Rng) -> Self {
        let shared: Vec<(f64, f64)> = (0..3)
            .map(|_| (rng.gen_range(24.0..160.0), rng.gen_range(0.0..TAU)))
            .collect();
        let loadings = (0..dims)
            .map(|_| shared.iter().map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let own = (0..dims)
            .map(|_| {
                (
                    rng.gen_range(0.2..0.6),
                    rng.gen_range(10.0..80.0),
                    rng.gen_range(0.0..TAU),
                )
            })
            .collect();
        let offsets = (0..dims).map(|_| rng.gen_range(-2.0..2.0)).collect();
        Self {
            offsets,
            loadings,
            shared,
            own,
        }
    }

    fn value(&self, var: usize, t: usize) -> f64 {
        let t = t as f64;
        let mut x = self.offsets[var];
        for (load, (period, phase)) in self.loadings[var].iter().zip(&self.shared) {
            x += load * (TAU * t / period + phase).sin();
        }
        let (amp, period, phase) = self.own[var];
        x + amp * (TAU * t / period + phase).sin()
    }

    fn series(
        &self,
        from: usize,
        len: usize,
        noise: &Normal<f64>,
        rng: &mut ChaCha8Rng,
    ) -> Vec<Vec<f64>> {
        (0..self.offsets.len())
            .map(|v| {
                (from..from + len)
                    .map(|t| self.value(v, t) + noise.sample(rng))
                    .collect()
            })
            .collect()
    }
}

/// Sinusoidal multivariate benchmark: a clean train split and a test split
/// with injected, exactly labeled anomalies. Identical seeds give identical data.
pub fn generate_synthetic(
    spec: &SynthSpec,
    seed: u64,
) -> Result<(TimeSeriesDataset, TimeSeriesDataset, Vec<Injection>), DataError> {
    let s = generate_synthetic_paired(spec, seed)?;
    Ok((s.train, s.test, s.injections))
}

/// Output of [`generate_synthetic_paired`].
#[derive(Clone, Debug)]
pub struct SyntheticSplits {
    pub train: TimeSeriesDataset,
    /// The test split before any anomaly was injected, all labels 0.
    pub clean_test: TimeSeriesDataset,
    pub test: TimeSeriesDataset,
    pub injections: Vec<Injection>,
}

/// Same data as [`generate_synthetic`], plus the anomaly-free test split.
pub fn generate_synthetic_paired(
    spec: &SynthSpec,
    seed: u64,
) -> Result<SyntheticSplits, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise =
        Normal::new(0.0, spec.noise_std).map_err(|e| DataError::Config(format!("noise: {e}")))?;
    let generator = Generator::new(spec.dims, &mut rng);

    let train_values = generator.series(0, spec.train_len, &noise, &mut rng);
    let mut test_values = generator.series(spec.train_len, spec.test_len, &noise, &mut rng);
    let clean_values = test_values.clone();

    let spread: Vec<f64> = train_values
        .iter()
        .map(|v| {
            let n = v.len() as f64;
            let mu = v.iter().sum::<f64>() / n;
            (v.iter().map(|a| (a - mu) * (a - mu)).sum::<f64>() / n).sqrt()
        })
        .collect();

    let target = spec.anomaly_count();
    let mut labels = vec![0u8; spec.test_len];
    let mut blocked = vec![false; spec.test_len];
    let mut injections = Vec::new();
    let mut placed = 0;
    let mut kinds = spec.kinds.iter().cycle();

    while placed < target {
        let kind = *kinds.next().expect("non-empty kinds");
        let len = match kind {
            AnomalyKind::Spike => 1,
            _ => rng.gen_range(5..=20usize).min(target - placed),
        };
        let lo = GAP.min(spec.test_len.saturating_sub(len));
        let hi = spec.test_len.saturating_sub(len + GAP).max(lo);
        let mut start = None;
        for _ in 0..10_000 {
            let s = rng.gen_range(lo..=hi);
            if s + len <= spec.test_len && blocked[s..s + len].iter().all(|b| !b) {
                start = Some(s);
                break;
            }
        }
        let Some(start) = start else {
            return Err(DataError::Config(format!(
                "cannot place {target} anomalous timestamps in a test split of {}",
                spec.test_len
            )));
        };

        let mut variables: Vec<usize> = (0..spec.dims).collect();
        variables.shuffle(&mut rng);
        let affected = rng.gen_range(1..=(spec.dims / 2).max(1));
        variables.truncate(affected);
        variables.sort_unstable();

        for &v in &variables {
            let sigma = spread[v].max(1e-3);
            match kind {
                AnomalyKind::Spike => {
                    let lo = start.saturating_sub(LOCAL_RADIUS);
                    let hi = (start + LOCAL_RADIUS + 1).min(spec.test_len);
                    let mut local: Vec<f64> = (lo..hi)
                        .filter(|t| *t != start)
                        .map(|t| test_values[v][t])
                        .collect();
                    let med = median(&mut local);
                    let mut dev: Vec<f64> = local.iter().map(|x| (x - med).abs()).collect();
                    let mad = median(&mut dev);
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    test_values[v][start] = med + sign * (8.0 * mad).max(4.0 * sigma);
                }
                AnomalyKind::LevelShift => {
                    let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                    for x in &mut test_values[v][start..start + len] {
                        *x += sign * 3.0 * sigma;
                    }
                }
                AnomalyKind::CollectiveNoise => {
                    let burst = Normal::new(0.0, 1.5 * sigma)
                        .map_err(|e| DataError::Config(format!("noise: {e}")))?;
                    for x in &mut test_values[v][start..start + len] {
                        *x += burst.sample(&mut rng);
                    }
                }
            }
        }

        labels[start..start + len].iter_mut().for_each(|l| *l = 1);
        let lo = start.saturating_sub(GAP);
        let hi = (start + len + GAP).min(spec.test_len);
        blocked[lo..hi].iter_mut().for_each(|b| *b = true);
        placed += len;
        injections.push(Injection {
            kind,
            start,
            len,
            variables,
        });
    }

    let train = TimeSeriesDataset::new("synthetic", Split::Train, train_values, None)?;
    let clean_test = TimeSeriesDataset::new(
        "synthetic",
        Split::Test,
        clean_values,
        Some(vec![0; spec.test_len]),
    )?;
    let test = TimeSeriesDataset::new("synthetic", Split::Test, test_values, Some(labels))?;
    Ok(SyntheticSplits {
        train,
        clean_test,
        test,
        injections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_anomaly_count() {
        let spec = SynthSpec::default();
        let (train, test, injections) = generate_synthetic(&spec, 7).unwrap();
        assert_eq!(train.dims(), 5);
        assert_eq!(test.len(), 2000);
        assert!(train.labels().is_none());
        let labeled = test.labels().unwrap().iter().filter(|l| **l == 1).count();
        assert_eq!(labeled, 20);
        assert_eq!(injections.len(), 20);
    }

    #[test]
    fn mixed_kinds_hit_exact_count() {
        let spec = SynthSpec {
            anomaly_rate: 0.05,
            kinds: vec![
                AnomalyKind::Spike,
                AnomalyKind::LevelShift,
                AnomalyKind::CollectiveNoise,
            ],
            ..SynthSpec::default()
        };
        let (_, test, injections) = generate_synthetic(&spec, 11).unwrap();
        let labeled = test.labels().unwrap().iter().filter(|l| **l == 1).count();
        assert_eq!(labeled, 100);
        assert_eq!(injections.iter().map(|i| i.len).sum::<usize>(), 100);
        assert!(injections.iter().any(|i| i.kind == AnomalyKind::LevelShift));
    }

    #[test]
    fn rate_outside_unit_interval_rejected() {
        for rate in [0.0, 1.0, -0.1, 1.5] {
            let spec = SynthSpec {
                anomaly_rate: rate,
                ..SynthSpec::default()
            };
            assert!(matches!(
                generate_synthetic(&spec, 1),
                Err(DataError::Config(_))
            ));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SynthSpec::default();
        let a = generate_synthetic(&spec, 7).unwrap();
        let b = generate_synthetic(&spec, 7).unwrap();
        assert_eq!(a, b);
        let bits = |d: &TimeSeriesDataset| -> Vec<u64> {
            d.values().iter().flatten().map(|v| v.to_bits()).collect()
        };
        assert_eq!(bits(&a.1), bits(&b.1));
        let c = generate_synthetic(&spec, 8).unwrap();
        assert_ne!(a.1, c.1);
    }
}
