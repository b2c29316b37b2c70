//! Analytic gradients of every differentiable op against central finite differences.

mod common;

use common::{fd_check, random, rng, weighted_sum};
use dconad::tensor::Tensor;

const SEEDS: u64 = 20;
const TOL: f64 = 1e-4;

fn check(name: &str, mut case: impl FnMut(u64) -> f64) {
    for seed in 0..SEEDS {
        let err = case(seed);
        assert!(err < TOL, "{name}: seed {seed} max rel err {err:e}");
    }
}

#[test]
fn matmul_gradients() {
    check("matmul", |seed| {
        let mut r = rng(seed);
        let a = random(&mut r, &[3, 4], -1.0, 1.0);
        let b = random(&mut r, &[4, 2], -1.0, 1.0);
        fd_check(&[a, b], |t, v| {
            let c = t.matmul(v[0], v[1]).unwrap();
            weighted_sum(t, c, seed)
        })
    });
}

#[test]
fn sum_of_product_gradients() {
    check("sum(A·B)", |seed| {
        let mut r = rng(seed);
        let a = random(&mut r, &[2, 2], -2.0, 2.0);
        let b = random(&mut r, &[2, 2], -2.0, 2.0);
        fd_check(&[a, b], |t, v| {
            let c = t.matmul(v[0], v[1]).unwrap();
            t.sum(c)
        })
    });
}

#[test]
fn softmax_gradients() {
    check("softmax_rows", |seed| {
        let a = random(&mut rng(seed), &[2, 3], -3.0, 3.0);
        fd_check(&[a], |t, v| {
            let s = t.softmax_rows(v[0]).unwrap();
            weighted_sum(t, s, seed)
        })
    });
}

#[test]
fn layer_norm_gradients() {
    check("layer_norm", |seed| {
        let mut r = rng(seed);
        let x = random(&mut r, &[4, 8], -2.0, 2.0);
        let g = random(&mut r, &[8], 0.5, 1.5);
        let b = random(&mut r, &[8], -0.5, 0.5);
        fd_check(&[x, g, b], |t, v| {
            let y = t.layer_norm(v[0], v[1], v[2]).unwrap();
            weighted_sum(t, y, seed)
        })
    });
}

#[test]
fn pointwise_ff_gradients() {
    check("conv1d_pointwise_ff", |seed| {
        let mut r = rng(seed);
        let x = random(&mut r, &[5, 4], -1.0, 1.0);
        let w1 = random(&mut r, &[4, 4], -1.0, 1.0);
        let b1 = random(&mut r, &[4], -0.3, 0.3);
        let w2 = random(&mut r, &[4, 4], -1.0, 1.0);
        let b2 = random(&mut r, &[4], -0.3, 0.3);
        fd_check(&[x, w1, b1, w2, b2], |t, v| {
            let y = t.conv1d_pointwise_ff(v[0], v[1], v[2], v[3], v[4]).unwrap();
            weighted_sum(t, y, seed)
        })
    });
}

#[test]
fn bilinear_gradients() {
    check("bilinear", |seed| {
        let mut r = rng(seed);
        let x = random(&mut r, &[3, 4], -1.0, 1.0);
        let y = random(&mut r, &[3, 4], -1.0, 1.0);
        let w = random(&mut r, &[2, 4, 4], -1.0, 1.0);
        let b = random(&mut r, &[2], -1.0, 1.0);
        fd_check(&[x, y, w, b], |t, v| {
            let o = t.bilinear(v[0], v[1], v[2], v[3]).unwrap();
            weighted_sum(t, o, seed)
        })
    });
}

#[test]
fn kl_gradients() {
    check("kl_rows", |seed| {
        let mut r = rng(seed);
        let p = random(&mut r, &[3, 5], 0.05, 1.0);
        let q = random(&mut r, &[3, 5], 0.05, 1.0);
        fd_check(&[p, q], |t, v| {
            let pn = t.row_normalize(v[0]).unwrap();
            let qn = t.row_normalize(v[1]).unwrap();
            t.kl_rows(pn, qn).unwrap()
        })
    });
}

#[test]
fn js_gradients() {
    check("js_rows", |seed| {
        let mut r = rng(seed);
        let p = random(&mut r, &[3, 5], 0.05, 1.0);
        let q = random(&mut r, &[3, 5], 0.05, 1.0);
        fd_check(&[p, q], |t, v| {
            let pn = t.row_normalize(v[0]).unwrap();
            let qn = t.row_normalize(v[1]).unwrap();
            let js = t.js_rows_each(pn, qn).unwrap();
            weighted_sum(t, js, seed)
        })
    });
}

#[test]
fn elementwise_and_structural_gradients() {
    check("elementwise", |seed| {
        let mut r = rng(seed);
        let a = random(&mut r, &[3, 4], -2.0, 2.0);
        let b = random(&mut r, &[3, 4], -2.0, 2.0);
        let row = random(&mut r, &[4], -1.0, 1.0);
        fd_check(&[a, b, row], |t, v| {
            let s = t.add(v[0], v[1]).unwrap();
            let d = t.sub(s, v[1]).unwrap();
            let m = t.mul(d, v[1]).unwrap();
            let m = t.add_row(m, v[2]).unwrap();
            let lr = t.leaky_relu(m, 0.01);
            let sg = t.sigmoid(lr);
            let tr = t.transpose(sg).unwrap();
            let left = t.slice_cols(tr, 0, 2).unwrap();
            let right = t.slice_cols(tr, 1, 3).unwrap();
            let cat = t.concat_cols(&[left, right, tr]).unwrap();
            let top = t.slice_rows(cat, 0, 3).unwrap();
            let sc = t.scale(top, 1.7);
            let mean = t.mean(sc);
            let ws = weighted_sum(t, cat, seed);
            t.add(mean, ws).unwrap()
        })
    });
}

#[test]
fn backward_twice_doubles_exactly() {
    let mut r = rng(3);
    let mut tape = dconad::tensor::Tape::new();
    let a = tape.param(random(&mut r, &[3, 4], -1.0, 1.0));
    let b = tape.param(random(&mut r, &[4, 2], -1.0, 1.0));
    let c = tape.matmul(a, b).unwrap();
    let s = tape.softmax_rows(c).unwrap();
    let loss = weighted_sum(&mut tape, s, 9);
    tape.backward(loss).unwrap();
    let once: Vec<Tensor> = [a, b]
        .iter()
        .map(|v| tape.grad(*v).unwrap().clone())
        .collect();
    tape.backward(loss).unwrap();
    for (v, g1) in [a, b].iter().zip(&once) {
        let g2 = tape.grad(*v).unwrap();
        for (x, y) in g1.data().iter().zip(g2.data()) {
            assert_eq!((2.0 * x).to_bits(), y.to_bits());
        }
    }
}
