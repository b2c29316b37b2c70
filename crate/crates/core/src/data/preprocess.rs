use super::{DataError, TimeSeriesDataset};

/// First-order differencing of each variable: `out[v][t] = x[v][t+1] − x[v][t]`.
pub fn difference(x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DataError> {
    x.iter()
        .map(|v| {
            if v.len() < 2 {
                return Err(DataError::TooShort {
                    len: v.len(),
                    min: 2,
                });
            }
            Ok(v.windows(2).map(|w| w[1] - w[0]).collect())
        })
        .collect()
}

/// Inverse of [`difference`] given each variable's first value.
pub fn cumulative_sum(first: &[f64], diffs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    first
        .iter()
        .zip(diffs)
        .map(|(x0, d)| {
            let mut out = Vec::with_capacity(d.len() + 1);
            let mut acc = *x0;
            out.push(acc);
            for step in d {
                acc += step;
                out.push(acc);
            }
            out
        })
        .collect()
}

/// Standardizes a single series to zero mean and unit population variance.
pub fn normalize(v: &[f64]) -> Vec<f64> {
    let stats = Normalizer::fit(&[v.to_vec()]);
    stats.apply_one(0, v)
}

/// Per-variable mean and scale fitted on one series and reusable on another.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    /// Fits population mean and standard deviation per variable. A variable
    /// whose deviation vanishes relative to its magnitude keeps scale 1, so it
    /// is only centered.
    pub fn fit(x: &[Vec<f64>]) -> Self {
        let mut mean = Vec::with_capacity(x.len());
        let mut scale = Vec::with_capacity(x.len());
        for v in x {
            let n = v.len().max(1) as f64;
            let mu = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|a| (a - mu) * (a - mu)).sum::<f64>() / n;
            let std = var.sqrt();
            mean.push(mu);
            scale.push(if std > 1e-12 * mu.abs().max(1.0) {
                std
            } else {
                1.0
            });
        }
        Self { mean, scale }
    }

    pub fn dims(&self) -> usize {
        self.mean.len()
    }

    fn apply_one(&self, var: usize, v: &[f64]) -> Vec<f64> {
        let (mu, s) = (self.mean[var], self.scale[var]);
        v.iter().map(|a| (a - mu) / s).collect()
    }

    pub fn apply(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, DataError> {
        if x.len() != self.dims() {
            return Err(DataError::DimensionMismatch {
                train: self.dims(),
                test: x.len(),
            });
        }
        Ok(x.iter()
            .enumerate()
            .map(|(i, v)| self.apply_one(i, v))
            .collect())
    }
}

/// Whether differencing runs on the normalized series or on the raw one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DiffOrder {
    #[default]
    NormalizeThenDiff,
    DiffThenNormalize,
}

impl DiffOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            DiffOrder::NormalizeThenDiff => "normalize-then-diff",
            DiffOrder::DiffThenNormalize => "diff-then-normalize",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "normalize-then-diff" => Some(DiffOrder::NormalizeThenDiff),
            "diff-then-normalize" => Some(DiffOrder::DiffThenNormalize),
            _ => None,
        }
    }
}

/// Normalization statistics fitted on the training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Preprocessor {
    pub order: DiffOrder,
    pub original: Normalizer,
    /// Statistics of the raw differenced series; only used by [`DiffOrder::DiffThenNormalize`].
    pub differenced: Option<Normalizer>,
}

/// A series ready for windowing: the normalized original values and, when
/// differencing precedes normalization, the separately normalized differences.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSeries {
    pub original: Vec<Vec<f64>>,
    pub differenced: Option<Vec<Vec<f64>>>,
}

impl PreparedSeries {
    pub fn len(&self) -> usize {
        self.original.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> usize {
        self.original.len()
    }
}

impl Preprocessor {
    pub fn fit(train: &TimeSeriesDataset, order: DiffOrder) -> Result<Self, DataError> {
        let original = Normalizer::fit(train.values());
        let differenced = match order {
            DiffOrder::NormalizeThenDiff => None,
            DiffOrder::DiffThenNormalize => Some(Normalizer::fit(&difference(train.values())?)),
        };
        Ok(Self {
            order,
            original,
            differenced,
        })
    }

    pub fn prepare(&self, data: &TimeSeriesDataset) -> Result<PreparedSeries, DataError> {
        let original = self.original.apply(data.values())?;
        let differenced = match (&self.order, &self.differenced) {
            (DiffOrder::NormalizeThenDiff, _) => None,
            (DiffOrder::DiffThenNormalize, Some(stats)) => {
                Some(stats.apply(&difference(data.values())?)?)
            }
            (DiffOrder::DiffThenNormalize, None) => {
                return Err(DataError::Config(
                    "diff-then-normalize preprocessor lacks difference statistics".into(),
                ))
            }
        };
        Ok(PreparedSeries {
            original,
            differenced,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn difference_examples() {
        assert_eq!(
            difference(&[vec![1.0, 3.0, 2.0, 2.0]]).unwrap(),
            vec![vec![2.0, -1.0, 0.0]]
        );
        assert_eq!(
            difference(&[vec![5.0, 5.0, 5.0]]).unwrap(),
            vec![vec![0.0, 0.0]]
        );
        assert!(matches!(
            difference(&[vec![1.0]]),
            Err(DataError::TooShort { .. })
        ));
    }

    #[test]
    fn difference_shape() {
        let x: Vec<Vec<f64>> = (0..25)
            .map(|v| (0..100).map(|t| (v * t) as f64).collect())
            .collect();
        let d = difference(&x).unwrap();
        assert_eq!(d.len(), 25);
        assert!(d.iter().all(|r| r.len() == 99));
    }

    #[test]
    fn normalize_examples() {
        let out = normalize(&[1.0, 2.0, 3.0]);
        let expected = 1.0 / (2.0f64 / 3.0).sqrt();
        assert!((out[0] + expected).abs() < 1e-12);
        assert_eq!(out[1], 0.0);
        assert!((out[2] - expected).abs() < 1e-12);
        assert!((out[2] - 1.2247).abs() < 1e-4);
        assert_eq!(normalize(&[7.0, 7.0, 7.0]), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn test_split_uses_train_statistics() {
        let train = TimeSeriesDataset::new(
            "t",
            super::super::Split::Train,
            vec![vec![0.0, 2.0, 4.0]],
            None,
        )
        .unwrap();
        let test =
            TimeSeriesDataset::new("t", super::super::Split::Test, vec![vec![2.0, 10.0]], None)
                .unwrap();
        let pre = Preprocessor::fit(&train, DiffOrder::NormalizeThenDiff).unwrap();
        let out = pre.prepare(&test).unwrap();
        let std = (8.0f64 / 3.0).sqrt();
        assert_eq!(out.original[0][0], 0.0);
        assert!((out.original[0][1] - 8.0 / std).abs() < 1e-12);
        assert!(out.differenced.is_none());
    }

    fn series() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10f64..10.0, 2..500)
    }

    proptest! {
        #[test]
        fn difference_round_trips(x in series()) {
            let d = difference(std::slice::from_ref(&x)).unwrap();
            let back = cumulative_sum(&[x[0]], &d);
            for (a, b) in back[0].iter().zip(&x) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn normalized_moments(x in series()) {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            prop_assume!(x.iter().any(|v| (v - mean).abs() > 1e-6));
            let y = normalize(&x);
            let n = y.len() as f64;
            let m = y.iter().sum::<f64>() / n;
            let var = y.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-3);
        }

        #[test]
        fn normalize_is_idempotent(x in series()) {
            let mean = x.iter().sum::<f64>() / x.len() as f64;
            prop_assume!(x.iter().any(|v| (v - mean).abs() > 1e-6));
            let once = normalize(&x);
            let twice = normalize(&once);
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
