//! Thresholding, point adjustment and precision/recall/F1.

use std::fmt;

use crate::error::{Error, Result};

/// How the score threshold `ξ` is chosen.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    /// Flag the top `ratio` fraction of test scores.
    Quantile(f64),
}

impl Threshold {
    pub fn validate(self) -> Result<()> {
        match self {
            Threshold::Fixed(xi) if !xi.is_finite() => {
                Err(Error::Config(format!("threshold {xi} is not finite")))
            }
            Threshold::Quantile(r) if !(r > 0.0 && r < 1.0) => Err(Error::Config(format!(
                "anomaly ratio {r} must lie in (0, 1)"
            ))),
            _ => Ok(()),
        }
    }

    /// The concrete `ξ` for a given score series.
    pub fn resolve(self, scores: &[f64]) -> Result<f64> {
        self.validate()?;
        match self {
            Threshold::Fixed(xi) => Ok(xi),
            Threshold::Quantile(r) => {
                if scores.is_empty() {
                    return Err(Error::Contract(
                        "cannot take a quantile of no scores".into(),
                    ));
                }
                let n = scores.len();
                let k = ((r * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
                let mut sorted = scores.to_vec();
                sorted.sort_by(|a, b| b.total_cmp(a));
                Ok(sorted[k - 1])
            }
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Fixed(xi) => write!(f, "{xi}"),
            Threshold::Quantile(r) => write!(f, "quantile:{r}"),
        }
    }
}

/// Labels every score `≥ ξ` as anomalous. Returns the labels and `ξ`.
pub fn threshold_labels(scores: &[f64], threshold: Threshold) -> Result<(Vec<u8>, f64)> {
    let xi = threshold.resolve(scores)?;
    Ok((scores.iter().map(|s| u8::from(*s >= xi)).collect(), xi))
}

fn check_lengths(pred: &[u8], truth: &[u8]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::Contract(format!(
            "prediction length {} differs from label length {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// Marks a whole true anomaly segment as detected once any point in it is.
pub fn point_adjust(pred: &[u8], truth: &[u8]) -> Result<Vec<u8>> {
    check_lengths(pred, truth)?;
    let mut out = pred.to_vec();
    let mut t = 0;
    while t < truth.len() {
        if truth[t] == 0 {
            t += 1;
            continue;
        }
        let start = t;
        while t < truth.len() && truth[t] != 0 {
            t += 1;
        }
        if pred[start..t].iter().any(|p| *p != 0) {
            out[start..t].fill(1);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub adjusted: bool,
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl EvalReport {
    /// `key=value` lines, one per field.
    pub fn to_text(&self) -> String {
        format!(
            "precision={}\nrecall={}\nf1={}\nthreshold={}\nadjusted={}\ntp={}\nfp={}\nfn={}\ntn={}\n",
            self.precision,
            self.recall,
            self.f1,
            self.threshold,
            self.adjusted,
            self.tp,
            self.fp,
            self.fn_,
            self.tn
        )
    }
}

/// Point-wise confusion counts and the derived scores.
pub fn prf1(pred: &[u8], truth: &[u8]) -> Result<EvalReport> {
    check_lengths(pred, truth)?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
        match (p, t) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            (0, 0) => tn += 1,
            _ => {
                return Err(Error::Contract(format!(
                    "non-binary entry at index {i}: pred={p}, truth={t}"
                )))
            }
        }
    }
    let ratio = |a: usize, b: usize| {
        if a + b == 0 {
            0.0
        } else {
            a as f64 / (a + b) as f64
        }
    };
    let precision = ratio(tp, fp);
    let recall = ratio(tp, fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(EvalReport {
        precision,
        recall,
        f1,
        adjusted: false,
        threshold: f64::NAN,
        tp,
        fp,
        fn_,
        tn,
    })
}

/// Threshold, optionally point-adjust, then score against the labels.
pub fn evaluate(
    scores: &[f64],
    truth: &[u8],
    threshold: Threshold,
    adjust: bool,
) -> Result<EvalReport> {
    let (pred, xi) = threshold_labels(scores, threshold)?;
    let pred = if adjust {
        point_adjust(&pred, truth)?
    } else {
        pred
    };
    let mut report = prf1(&pred, truth)?;
    report.adjusted = adjust;
    report.threshold = xi;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_threshold_is_inclusive() {
        let (labels, xi) = threshold_labels(&[1.2, 1.1, 0.3], Threshold::Fixed(1.1)).unwrap();
        assert_eq!(labels, vec![1, 1, 0]);
        assert_eq!(xi, 1.1);
        let (none, _) = threshold_labels(&[0.1, 0.2], Threshold::Fixed(1.1)).unwrap();
        assert_eq!(none, vec![0, 0]);
    }

    #[test]
    fn quantile_flags_exact_fraction() {
        let scores: Vec<f64> = (0..100).map(|i| (i * 37 % 100) as f64 * 0.5).collect();
        let (labels, _) = threshold_labels(&scores, Threshold::Quantile(0.1)).unwrap();
        assert_eq!(labels.iter().filter(|l| **l == 1).count(), 10);
        for bad in [0.0, 1.0, -0.2, f64::NAN] {
            assert!(matches!(
                threshold_labels(&scores, Threshold::Quantile(bad)),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn adjustment_examples() {
        assert_eq!(
            point_adjust(&[0, 1, 0, 0], &[0, 1, 1, 0]).unwrap(),
            vec![0, 1, 1, 0]
        );
        assert_eq!(
            point_adjust(&[0, 0, 0, 1], &[0, 1, 1, 0]).unwrap(),
            vec![0, 0, 0, 1]
        );
        assert!(matches!(
            point_adjust(&[0, 1], &[0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn prf1_examples() {
        let r = prf1(&[1, 0, 1], &[1, 1, 0]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        let r = prf1(&[0, 1, 1], &[0, 1, 1]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = prf1(&[0, 0, 0], &[0, 1, 1]).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        assert!(matches!(prf1(&[2, 0], &[1, 0]), Err(Error::Contract(_))));
    }

    fn binary(len: usize) -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..=1, len)
    }

    proptest! {
        #[test]
        fn adjustment_is_idempotent_and_local(
            (pred, truth) in (1usize..300).prop_flat_map(|n| (binary(n), binary(n)))
        ) {
            let once = point_adjust(&pred, &truth).unwrap();
            prop_assert_eq!(point_adjust(&once, &truth).unwrap(), once.clone());
            for i in 0..pred.len() {
                if truth[i] == 0 {
                    prop_assert_eq!(once[i], pred[i]);
                }
                prop_assert!(once[i] >= pred[i]);
            }
            let raw = prf1(&pred, &truth).unwrap();
            let adj = prf1(&once, &truth).unwrap();
            prop_assert!(adj.recall >= raw.recall);
        }

        #[test]
        fn raising_threshold_never_adds_positives(
            scores in prop::collection::vec(0.0f64..10.0, 1..200),
            lo in 0.0f64..10.0,
            bump in 0.0f64..5.0,
        ) {
            let (a, _) = threshold_labels(&scores, Threshold::Fixed(lo)).unwrap();
            let (b, _) = threshold_labels(&scores, Threshold::Fixed(lo + bump)).unwrap();
            prop_assert!(a.iter().zip(&b).all(|(x, y)| y <= x));
        }

        #[test]
        fn f1_is_harmonic_mean(
            (pred, truth) in (1usize..200).prop_flat_map(|n| (binary(n), binary(n)))
        ) {
            let r = prf1(&pred, &truth).unwrap();
            if r.precision + r.recall > 0.0 {
                let h = 2.0 * r.precision * r.recall / (r.precision + r.recall);
                prop_assert!((r.f1 - h).abs() < 1e-12);
            } else {
                prop_assert_eq!(r.f1, 0.0);
            }
            prop_assert_eq!(r.tp + r.fp + r.fn_ + r.tn, pred.len());
        }
    }
}
