//! Contrastive views, the stop-gradient consistency loss and per-point scores.

use rand_chacha::ChaCha8Rng;

use crate::model::{xavier_uniform, Linear, ParamId, ParamStore, Session};
use crate::tensor::{Result, Tape, Tensor, Var};

/// Divergence used to compare the two views.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossMode {
    #[default]
    SymmetricKl,
    AsymmetricKl,
    Js,
}

impl LossMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::SymmetricKl => "symmetric-kl",
            LossMode::AsymmetricKl => "asymmetric-kl",
            LossMode::Js => "js",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "symmetric-kl" => Some(LossMode::SymmetricKl),
            "asymmetric-kl" => Some(LossMode::AsymmetricKl),
            "js" => Some(LossMode::Js),
            _ => None,
        }
    }
}

/// How the two per-view losses are joined into the training objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LossCombine {
    /// `(ℒ_v1 − ℒ_v2) / rows`
    #[default]
    Difference,
    /// `(ℒ_v1 + ℒ_v2) / rows`
    Sum,
}

impl LossCombine {
    pub fn as_str(self) -> &'static str {
        match self {
            LossCombine::Difference => "difference",
            LossCombine::Sum => "sum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "difference" => Some(LossCombine::Difference),
            "sum" => Some(LossCombine::Sum),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Objective {
    pub mode: LossMode,
    pub combine: LossCombine,
}

/// The two sigmoid views of one window, both `(L−1) × d_model`.
///
/// The original stream has one more row than the differenced stream, so its
/// final row is dropped before the views are built.
#[derive(Clone, Copy, Debug)]
pub struct ViewPair {
    pub v1: Var,
    pub v2: Var,
}

impl ViewPair {
    pub const DROPPED_FINAL_ROW: bool = true;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub l_v1: f64,
    pub l_v2: f64,
    pub total: f64,
    pub mode: LossMode,
}

/// Parameters of both view pathways.
#[derive(Clone, Debug)]
pub struct ViewHeads {
    pub bilinear_weight: ParamId,
    pub bilinear_bias: ParamId,
    pub v1_out: Linear,
    pub v2_in: Linear,
    pub v2_out: Linear,
    pub leaky_slope: f64,
}

impl ViewHeads {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        d_model: usize,
        leaky_slope: f64,
    ) -> Self {
        let dm = d_model;
        let bilinear_weight = store.add(
            "views.bilinear.weight",
            xavier_uniform(rng, &[dm, dm, dm], dm * dm, dm),
        );
        let bilinear_bias = store.add("views.bilinear.bias", Tensor::zeros(&[dm]));
        Self {
            bilinear_weight,
            bilinear_bias,
            v1_out: Linear::new(store, rng, "views.v1_out", dm, dm),
            v2_in: Linear::new(store, rng, "views.v2_in", 2 * dm, dm),
            v2_out: Linear::new(store, rng, "views.v2_out", dm, dm),
            leaky_slope,
        }
    }

    fn align(s: &mut Session, h_d: Var, h_t: Var) -> Result<Var> {
        let rows = s.tape.shape(h_d)[0];
        s.tape.slice_rows(h_t, 0, rows)
    }

    /// `Sigmoid(Linear(LeakyReLU(Bilinear(H_d, H_t))))`
    pub fn make_view1(&self, s: &mut Session, h_d: Var, h_t: Var) -> Result<Var> {
        let aligned = Self::align(s, h_d, h_t)?;
        let (w, b) = (s.param(self.bilinear_weight), s.param(self.bilinear_bias));
        let joint = s.tape.bilinear(h_d, aligned, w, b)?;
        let hidden = s.tape.leaky_relu(joint, self.leaky_slope);
        let out = self.v1_out.forward(s, hidden)?;
        Ok(s.tape.sigmoid(out))
    }

    /// `Sigmoid(Linear(LeakyReLU(Linear(H_d ⊕ H_t))))`
    pub fn make_view2(&self, s: &mut Session, h_d: Var, h_t: Var) -> Result<Var> {
        let aligned = Self::align(s, h_d, h_t)?;
        let joint = s.tape.concat_cols(&[h_d, aligned])?;
        let hidden = self.v2_in.forward(s, joint)?;
        let hidden = s.tape.leaky_relu(hidden, self.leaky_slope);
        let out = self.v2_out.forward(s, hidden)?;
        Ok(s.tape.sigmoid(out))
    }

    pub fn views(&self, s: &mut Session, h_d: Var, h_t: Var) -> Result<ViewPair> {
        Ok(ViewPair {
            v1: self.make_view1(s, h_d, h_t)?,
            v2: self.make_view2(s, h_d, h_t)?,
        })
    }
}

/// Unnormalized per-view losses `(ℒ_v1, ℒ_v2)` of one window, as scalars.
pub fn consistency_terms(tape: &mut Tape, views: ViewPair, mode: LossMode) -> Result<(Var, Var)> {
    let p1 = tape.row_normalize(views.v1)?;
    let p2 = tape.row_normalize(views.v2)?;
    let p1_stopped = tape.stop_gradient(p1);
    let p2_stopped = tape.stop_gradient(p2);
    match mode {
        LossMode::SymmetricKl => {
            let a = tape.kl_rows(p1, p2_stopped)?;
            let b = tape.kl_rows(p2_stopped, p1)?;
            let l1 = tape.add(a, b)?;
            let c = tape.kl_rows(p2, p1_stopped)?;
            let d = tape.kl_rows(p1_stopped, p2)?;
            let l2 = tape.add(c, d)?;
            Ok((l1, l2))
        }
        LossMode::AsymmetricKl => {
            Ok((tape.kl_rows(p1, p2_stopped)?, tape.kl_rows(p2, p1_stopped)?))
        }
        LossMode::Js => {
            let a = tape.js_rows_each(p1, p2_stopped)?;
            let b = tape.js_rows_each(p2, p1_stopped)?;
            Ok((tape.sum(a), tape.sum(b)))
        }
    }
}

/// Averages per-window terms over a batch and forms the training loss.
pub fn combine_terms(
    tape: &mut Tape,
    terms: &[(Var, Var)],
    rows: usize,
    objective: &Objective,
) -> Result<(Var, LossBreakdown)> {
    let n = terms.len() as f64;
    let (mut l1, mut l2) = terms[0];
    for &(a, b) in &terms[1..] {
        l1 = tape.add(l1, a)?;
        l2 = tape.add(l2, b)?;
    }
    let l1 = tape.scale(l1, 1.0 / n);
    let l2 = tape.scale(l2, 1.0 / n);
    let joined = match objective.combine {
        LossCombine::Difference => tape.sub(l1, l2)?,
        LossCombine::Sum => tape.add(l1, l2)?,
    };
    let total = tape.scale(joined, 1.0 / rows as f64);
    let breakdown = LossBreakdown {
        l_v1: tape.value(l1).item(),
        l_v2: tape.value(l2).item(),
        total: tape.value(total).item(),
        mode: objective.mode,
    };
    Ok((total, breakdown))
}

/// Loss of a single window.
pub fn consistency_loss(
    tape: &mut Tape,
    views: ViewPair,
    objective: &Objective,
) -> Result<(Var, LossBreakdown)> {
    let rows = tape.shape(views.v1)[0];
    let terms = consistency_terms(tape, views, objective.mode)?;
    combine_terms(tape, &[terms], rows, objective)
}

/// Per-timestamp score of one window: symmetric KL between the row-normalized
/// views, with the final (unaligned) timestamp copying its predecessor.
pub fn anomaly_score(v1: &Tensor, v2: &Tensor) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let a = tape.constant(v1.clone());
    let b = tape.constant(v2.clone());
    let p1 = tape.row_normalize(a)?;
    let p2 = tape.row_normalize(b)?;
    let forward = tape.kl_rows_each(p1, p2)?;
    let reverse = tape.kl_rows_each(p2, p1)?;
    let both = tape.add(forward, reverse)?;
    let mut scores = tape.value(both).data().to_vec();
    let last = *scores.last().unwrap_or(&0.0);
    scores.push(last);
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pair(tape: &mut Tape, a: Tensor, b: Tensor) -> ViewPair {
        ViewPair {
            v1: tape.param(a),
            v2: tape.param(b),
        }
    }

    #[test]
    fn single_row_symmetric_kl() {
        let mut tape = Tape::new();
        let views = pair(
            &mut tape,
            Tensor::from_rows(&[vec![0.5, 0.5]]).unwrap(),
            Tensor::from_rows(&[vec![0.25, 0.75]]).unwrap(),
        );
        let (_, lb) = consistency_loss(&mut tape, views, &Objective::default()).unwrap();
        let kl_pq = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        let kl_qp = 0.25 * (0.25f64 / 0.5).ln() + 0.75 * (0.75f64 / 0.5).ln();
        assert!((lb.l_v1 - (kl_pq + kl_qp)).abs() < 1e-12);
        assert!((lb.l_v1 - 0.27465).abs() < 1e-5);
        assert!((lb.total - (lb.l_v1 - lb.l_v2)).abs() < 1e-12);
    }

    #[test]
    fn identical_views_give_zero_in_every_mode() {
        let v = Tensor::from_rows(&[vec![0.2, 0.7, 0.4], vec![0.9, 0.1, 0.3]]).unwrap();
        for mode in [LossMode::SymmetricKl, LossMode::AsymmetricKl, LossMode::Js] {
            let mut tape = Tape::new();
            let views = pair(&mut tape, v.clone(), v.clone());
            let objective = Objective {
                mode,
                combine: LossCombine::Sum,
            };
            let (_, lb) = consistency_loss(&mut tape, views, &objective).unwrap();
            assert_eq!((lb.l_v1, lb.l_v2, lb.total), (0.0, 0.0, 0.0));
        }
        assert!(anomaly_score(&v, &v).unwrap().iter().all(|s| *s == 0.0));
    }

    #[test]
    fn stopped_factor_sends_no_gradient() {
        let mut tape = Tape::new();
        let views = pair(
            &mut tape,
            Tensor::from_rows(&[vec![0.3, 0.6], vec![0.5, 0.2]]).unwrap(),
            Tensor::from_rows(&[vec![0.7, 0.4], vec![0.1, 0.8]]).unwrap(),
        );
        let p1 = tape.row_normalize(views.v1).unwrap();
        let p2 = tape.row_normalize(views.v2).unwrap();
        let p2_stopped = tape.stop_gradient(p2);
        let term = tape.kl_rows(p1, p2_stopped).unwrap();
        tape.backward(term).unwrap();
        assert!(tape
            .grad(views.v2)
            .unwrap()
            .data()
            .iter()
            .all(|g| g.to_bits() == 0));
        assert!(tape
            .grad(views.v1)
            .unwrap()
            .data()
            .iter()
            .any(|g| *g != 0.0));
    }

    #[test]
    fn score_is_row_local_and_replicates_last_entry() {
        let v1 = Tensor::from_rows(&[vec![0.2, 0.7], vec![0.6, 0.3], vec![0.5, 0.5]]).unwrap();
        let v2 = Tensor::from_rows(&[vec![0.3, 0.6], vec![0.6, 0.35], vec![0.4, 0.5]]).unwrap();
        let base = anomaly_score(&v1, &v2).unwrap();
        assert_eq!(base.len(), 4);
        assert_eq!(base[3], base[2]);
        let mut bumped = v2.clone();
        bumped.data_mut()[2] = 0.95;
        let after = anomaly_score(&v1, &bumped).unwrap();
        assert!(after[1] > base[1]);
        assert_eq!(after[0], base[0]);
        assert_eq!(after[2], base[2]);
    }

    #[test]
    fn views_are_sigmoid_valued_and_view2_reaches_both_streams() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let heads = ViewHeads::new(&mut store, &mut rng, 4, 0.01);
        let h_t = xavier_uniform(&mut rng, &[5, 4], 1, 1);
        let h_d = xavier_uniform(&mut rng, &[4, 4], 1, 1);
        let mut s = Session::inference(&store);
        let t = s.tape.param(h_t);
        let d = s.tape.param(h_d);
        let views = heads.views(&mut s, d, t).unwrap();
        for v in [views.v1, views.v2] {
            assert_eq!(s.value(v).shape(), &[4, 4]);
            assert!(s.value(v).data().iter().all(|x| *x > 0.0 && *x < 1.0));
        }
        let total = s.tape.sum(views.v2);
        s.backward(total).unwrap();
        let nonzero = |v: Var| s.tape.grad(v).unwrap().data().iter().any(|g| *g != 0.0);
        assert!(nonzero(t) && nonzero(d));
        // the final row of H_t is dropped and never influences the views
        assert!(s.tape.grad(t).unwrap().row(4).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn zero_differenced_input_leaves_only_linear_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let heads = ViewHeads::new(&mut store, &mut rng, 3, 0.01);
        let mut s = Session::inference(&store);
        let t = s.constant(Tensor::filled(&[3, 3], 0.4));
        let d = s.constant(Tensor::zeros(&[2, 3]));
        let v1 = heads.make_view1(&mut s, d, t).unwrap();
        assert!(s.value(v1).data().iter().all(|x| (*x - 0.5).abs() < 1e-15));
    }
}
