use super::tape::Op;
use super::{Result, Tape, Tensor, TensorError, Var};

/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Probabilities are clamped to this value before taking logarithms.
pub const LOG_EPS: f64 = 1e-8;
/// Row sums are clamped to this value before dividing.
pub const ROW_SUM_EPS: f64 = 1e-8;

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

impl Tape {
    fn matrix(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v).ensure_matrix(op)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn map(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let v = self.value(a);
        let data = v.data().iter().map(|x| f(*x)).collect();
        let out = Tensor::new(v.shape().to_vec(), data).expect("same element count");
        self.push(out, op)
    }

    fn zip(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let out = Tensor::new(av.shape().to_vec(), data).expect("same element count");
        self.push(out, op)
    }

    /// Matrix product `a[m×k] · b[k×n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix(a, "matmul")?;
        let (k2, n) = self.matrix(b, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", self.shape(a), self.shape(b)));
        }
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let orow = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                for (o, b) in orow.iter_mut().zip(&bd[p * n..(p + 1) * n]) {
                    *o += aip * b;
                }
            }
        }
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        Ok(self.zip(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        Ok(self.zip(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        Ok(self.zip(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// Adds a length-`n` row vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.matrix(a, "add_row")?;
        if self.value(row).len() != n {
            return Err(shape_err("add_row", self.shape(a), self.shape(row)));
        }
        let (ad, rd) = (self.value(a).data(), self.value(row).data());
        let mut out = ad.to_vec();
        for r in out.chunks_mut(n) {
            for (o, b) in r.iter_mut().zip(rd) {
                *o += b;
            }
        }
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.map(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix(a, "transpose")?;
        let ad = self.value(a).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = ad[i * n + j];
            }
        }
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(a)))
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix(a, "softmax_rows")?;
        let ad = self.value(a).data();
        if ad.iter().any(|v| v.is_nan()) {
            return Err(TensorError::Numeric { op: "softmax_rows" });
        }
        let mut out = vec![0.0; m * n];
        for (src, dst) in ad.chunks(n).zip(out.chunks_mut(n)) {
            let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (s - max).exp();
                total += *d;
            }
            dst.iter_mut().for_each(|d| *d /= total);
        }
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::Softmax(a)))
    }

    /// Normalizes each row to zero mean and unit variance, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, a: Var, gain: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.matrix(a, "layer_norm")?;
        if self.value(gain).len() != n {
            return Err(shape_err("layer_norm", self.shape(a), self.shape(gain)));
        }
        if self.value(bias).len() != n {
            return Err(shape_err("layer_norm", self.shape(a), self.shape(bias)));
        }
        let ad = self.value(a).data();
        let (gd, bd) = (self.value(gain).data(), self.value(bias).data());
        let mut xhat = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &ad[r * n..(r + 1) * n];
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = inv;
            for j in 0..n {
                let h = (row[j] - mean) * inv;
                xhat[r * n + j] = h;
                out[r * n + j] = h * gd[j] + bd[j];
            }
        }
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::LayerNorm {
                x: a,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        self.map(a, Op::LeakyRelu(a, slope), |x| {
            if x > 0.0 {
                x
            } else {
                slope * x
            }
        })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, Op::Sigmoid(a), |x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        })
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(TensorError::Contract("concat_cols: no inputs".into()));
        };
        let (m, _) = self.matrix(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pm, pn) = self.matrix(p, "concat_cols")?;
            if pm != m {
                return Err(shape_err("concat_cols", self.shape(first), self.shape(p)));
            }
            widths.push(pn);
        }
        let total: usize = widths.iter().sum();
        let mut out = vec![0.0; m * total];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let pd = self.value(p).data();
            for i in 0..m {
                out[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&pd[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        Ok(self.push(
            Tensor::new(vec![m, total], out)?,
            Op::ConcatCols(parts.to_vec()),
        ))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.matrix(a, "slice_cols")?;
        if start >= end || end > n {
            return Err(TensorError::Contract(format!(
                "slice_cols: range {start}..{end} outside {n} columns"
            )));
        }
        let w = end - start;
        let ad = self.value(a).data();
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&ad[i * n + start..i * n + end]);
        }
        Ok(self.push(Tensor::new(vec![m, w], out)?, Op::SliceCols(a, start)))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.matrix(a, "slice_rows")?;
        if start >= end || end > m {
            return Err(TensorError::Contract(format!(
                "slice_rows: range {start}..{end} outside {m} rows"
            )));
        }
        let out = self.value(a).data()[start * n..end * n].to_vec();
        Ok(self.push(
            Tensor::new(vec![end - start, n], out)?,
            Op::SliceRows(a, start),
        ))
    }

    /// `out[i, j] = x[i]ᵀ · w[j] · y[i] + b[j]` with `w` shaped `k×p×q`.
    pub fn bilinear(&mut self, x: Var, y: Var, w: Var, b: Var) -> Result<Var> {
        let (m, p) = self.matrix(x, "bilinear")?;
        let (my, q) = self.matrix(y, "bilinear")?;
        if m != my {
            return Err(TensorError::Alignment {
                op: "bilinear",
                lhs: m,
                rhs: my,
            });
        }
        let k = match self.shape(w) {
            [k, wp, wq] if *wp == p && *wq == q => *k,
            other => return Err(shape_err("bilinear", &[p, q], other)),
        };
        if self.value(b).len() != k {
            return Err(shape_err("bilinear", &[k], self.shape(b)));
        }
        let (xd, yd) = (self.value(x).data(), self.value(y).data());
        let (wd, bd) = (self.value(w).data(), self.value(b).data());
        let mut out = vec![0.0; m * k];
        for i in 0..m {
            let xi = &xd[i * p..(i + 1) * p];
            let yi = &yd[i * q..(i + 1) * q];
            for j in 0..k {
                let wj = &wd[j * p * q..(j + 1) * p * q];
                let mut s = 0.0;
                for (a, xa) in xi.iter().enumerate() {
                    if *xa == 0.0 {
                        continue;
                    }
                    let inner: f64 = wj[a * q..(a + 1) * q]
                        .iter()
                        .zip(yi)
                        .map(|(w, y)| w * y)
                        .sum();
                    s += xa * inner;
                }
                out[i * k + j] = s + bd[j];
            }
        }
        Ok(self.push(Tensor::new(vec![m, k], out)?, Op::Bilinear { x, y, w, b }))
    }

    /// Divides each row by its sum (clamped below at [`ROW_SUM_EPS`]).
    pub fn row_normalize(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.matrix(a, "row_normalize")?;
        let ad = self.value(a).data();
        let mut sums = Vec::with_capacity(m);
        let mut out = vec![0.0; m * n];
        for (src, dst) in ad.chunks(n).zip(out.chunks_mut(n)) {
            let s = src.iter().sum::<f64>().max(ROW_SUM_EPS);
            sums.push(s);
            for (d, v) in dst.iter_mut().zip(src) {
                *d = v / s;
            }
        }
        Ok(self.push(
            Tensor::new(vec![m, n], out)?,
            Op::RowNormalize { x: a, sums },
        ))
    }

    /// Per-row KL divergence `Σⱼ p·(ln p − ln q)` as an `m×1` column.
    pub fn kl_rows_each(&mut self, p: Var, q: Var) -> Result<Var> {
        let (m, n) = self.matrix(p, "kl_rows")?;
        self.same_shape(p, q, "kl_rows")?;
        let (pd, qd) = (self.value(p).data(), self.value(q).data());
        if pd.iter().chain(qd).any(|v| *v < 0.0) {
            return Err(TensorError::Domain {
                op: "kl_rows",
                msg: "negative probability".into(),
            });
        }
        if pd.iter().chain(qd).any(|v| v.is_nan()) {
            return Err(TensorError::Numeric { op: "kl_rows" });
        }
        let mut out = vec![0.0; m];
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in r * n..(r + 1) * n {
                let (pc, qc) = (pd[j].max(LOG_EPS), qd[j].max(LOG_EPS));
                s += pd[j] * (pc.ln() - qc.ln());
            }
            *o = s;
        }
        Ok(self.push(Tensor::new(vec![m, 1], out)?, Op::KlRows { p, q }))
    }

    /// Total KL divergence summed over rows.
    pub fn kl_rows(&mut self, p: Var, q: Var) -> Result<Var> {
        let each = self.kl_rows_each(p, q)?;
        Ok(self.sum(each))
    }

    /// Per-row Jensen–Shannon divergence as an `m×1` column.
    pub fn js_rows_each(&mut self, p: Var, q: Var) -> Result<Var> {
        let both = self.add(p, q)?;
        let mid = self.scale(both, 0.5);
        let kp = self.kl_rows_each(p, mid)?;
        let kq = self.kl_rows_each(q, mid)?;
        let s = self.add(kp, kq)?;
        Ok(self.scale(s, 0.5))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Value-identical copy that blocks gradient flow into `a`.
    pub fn stop_gradient(&mut self, a: Var) -> Var {
        let v = self.value(a).clone();
        self.push(v, Op::StopGradient)
    }

    /// `a · weight + bias` with `weight` shaped `in×out`.
    pub fn linear(&mut self, a: Var, weight: Var, bias: Var) -> Result<Var> {
        let h = self.matmul(a, weight)?;
        self.add_row(h, bias)
    }

    /// Two stacked kernel-size-1 convolutions over the time axis: affine, ReLU, affine.
    pub fn conv1d_pointwise_ff(
        &mut self,
        a: Var,
        w1: Var,
        b1: Var,
        w2: Var,
        b2: Var,
    ) -> Result<Var> {
        let h = self.linear(a, w1, b1)?;
        let h = self.relu(h);
        self.linear(h, w2, b2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity_and_projector() {
        let mut t = Tape::new();
        let i = t.constant(Tensor::identity(2));
        let m = t.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let out = t.matmul(i, m).unwrap();
        assert_eq!(t.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

        let p = t.constant(mat(&[&[1.0, 0.0], &[0.0, 0.0]]));
        let v = t.constant(mat(&[&[5.0], &[7.0]]));
        let out = t.matmul(p, v).unwrap();
        assert_eq!(t.value(out).data(), &[5.0, 0.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, TensorError::Shape { .. }));
    }

    #[test]
    fn softmax_symmetric_and_stable() {
        let mut t = Tape::new();
        let a = t.constant(mat(&[&[0.0, 0.0], &[1000.0, 0.0]]));
        let s = t.softmax_rows(a).unwrap();
        let v = t.value(s).data();
        assert_eq!(&v[..2], &[0.5, 0.5]);
        assert!((v[2] - 1.0).abs() < 1e-12);
        assert!(v[3] >= 0.0 && v[3] < 1e-300);
        assert!(v.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn softmax_rejects_nan() {
        let mut t = Tape::new();
        let a = t.constant(mat(&[&[f64::NAN, 0.0]]));
        assert!(matches!(
            t.softmax_rows(a),
            Err(TensorError::Numeric { .. })
        ));
    }

    #[test]
    fn layer_norm_definitional_and_constant_rows() {
        let mut t = Tape::new();
        let a = t.constant(mat(&[&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]]));
        let g = t.constant(Tensor::filled(&[3], 1.0));
        let b = t.constant(Tensor::zeros(&[3]));
        let y = t.layer_norm(a, g, b).unwrap();
        let v = t.value(y);
        let r0 = v.row(0);
        let mean = r0.iter().sum::<f64>() / 3.0;
        let var = r0.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4);
        assert_eq!(v.row(1), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn pointwise_ff_identity_and_relu_kill() {
        let mut t = Tape::new();
        let x = t.constant(mat(&[&[1.0, 2.0], &[0.5, 0.0], &[3.0, 4.0]]));
        let w = t.constant(Tensor::identity(2));
        let b = t.constant(Tensor::zeros(&[2]));
        let y = t.conv1d_pointwise_ff(x, w, b, w, b).unwrap();
        assert_eq!(t.value(y), t.value(x));

        let neg = t.constant(mat(&[&[-1.0, -2.0], &[-0.5, -3.0]]));
        let h = t.linear(neg, w, b).unwrap();
        let killed = t.relu(h);
        assert!(t.value(killed).data().iter().all(|v| *v == 0.0));
        let y = t.conv1d_pointwise_ff(neg, w, b, w, b).unwrap();
        assert!(t.value(y).data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bilinear_quadratic_form_and_zero_input() {
        let mut t = Tape::new();
        let x = t.constant(mat(&[&[1.0, 2.0]]));
        let w = t.constant(Tensor::new(vec![1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let b = t.constant(Tensor::zeros(&[1]));
        let out = t.bilinear(x, x, w, b).unwrap();
        assert_eq!(t.value(out).data(), &[5.0]);

        let z = t.constant(Tensor::zeros(&[3, 2]));
        let y = t.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]));
        let w2 = t.constant(Tensor::filled(&[2, 2, 2], 0.7));
        let b2 = t.constant(Tensor::new(vec![2], vec![0.25, -1.5]).unwrap());
        let out = t.bilinear(z, y, w2, b2).unwrap();
        assert_eq!(t.value(out).data(), &[0.25, -1.5, 0.25, -1.5, 0.25, -1.5]);
    }

    #[test]
    fn bilinear_row_mismatch_is_alignment_error() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(&[3, 2]));
        let y = t.constant(Tensor::zeros(&[2, 2]));
        let w = t.constant(Tensor::zeros(&[1, 2, 2]));
        let b = t.constant(Tensor::zeros(&[1]));
        assert!(matches!(
            t.bilinear(x, y, w, b),
            Err(TensorError::Alignment { .. })
        ));
    }

    #[test]
    fn kl_known_values() {
        let mut t = Tape::new();
        let p = t.constant(mat(&[&[0.5, 0.5]]));
        let q = t.constant(mat(&[&[0.25, 0.75]]));
        let kl = t.kl_rows(p, q).unwrap();
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((t.value(kl).item() - expected).abs() < 1e-15);
        assert!((t.value(kl).item() - 0.14384).abs() < 1e-5);

        let same = t.kl_rows(p, p).unwrap();
        assert!(t.value(same).item().abs() <= 1e-12);
    }

    #[test]
    fn kl_rejects_negative_entries() {
        let mut t = Tape::new();
        let p = t.constant(mat(&[&[1.1, -0.1]]));
        let q = t.constant(mat(&[&[0.5, 0.5]]));
        assert!(matches!(t.kl_rows(p, q), Err(TensorError::Domain { .. })));
    }

    #[test]
    fn row_normalize_uniform() {
        let mut t = Tape::new();
        let a = t.constant(mat(&[&[0.2, 0.2]]));
        let n = t.row_normalize(a).unwrap();
        assert_eq!(t.value(n).data(), &[0.5, 0.5]);
    }

    #[test]
    fn stop_gradient_examples() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(3.0));
        let sx = t.stop_gradient(x);
        let loss = t.mul(x, sx).unwrap();
        assert_eq!(t.value(loss).item(), 9.0);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 3.0);

        let mut t = Tape::new();
        let x = t.param(Tensor::new(vec![3], vec![1.0, -2.0, 4.0]).unwrap());
        let sx = t.stop_gradient(x);
        let loss = t.sum(sx);
        t.backward(loss).unwrap();
        assert!(t.grad(x).unwrap().data().iter().all(|g| g.to_bits() == 0));
    }

    #[test]
    fn backward_basics() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(3.0));
        let y = t.param(Tensor::scalar(-1.0));
        let loss = t.mul(x, x).unwrap();
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 6.0);
        assert_eq!(t.grad(y).unwrap().item(), 0.0);

        // accumulation without reset
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 12.0);
        t.zero_grad();
        assert_eq!(t.grad(x).unwrap().item(), 0.0);
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let mut t = Tape::new();
        let x = t.param(Tensor::zeros(&[2, 2]));
        let y = t.scale(x, 2.0);
        assert!(matches!(t.backward(y), Err(TensorError::Contract(_))));
    }
}
