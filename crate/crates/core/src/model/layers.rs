use rand_chacha::ChaCha8Rng;

use super::params::{xavier_uniform, AttentionSite, ParamId, ParamStore, Session};
use crate::tensor::{Result, Tensor, Var};

/// Affine map `x · W + b` with `W` shaped `in × out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let weight = store.add(
            format!("{name}.weight"),
            xavier_uniform(rng, &[in_dim, out_dim], in_dim, out_dim),
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let (w, b) = (s.param(self.weight), s.param(self.bias));
        s.tape.linear(x, w, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::filled(&[dim], 1.0)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[dim])),
        }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let (g, b) = (s.param(self.gain), s.param(self.bias));
        s.tape.layer_norm(x, g, b)
    }
}

/// Two kernel-size-1 convolutions over time with a ReLU between them.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
    ) -> Self {
        Self {
            inner: Linear::new(store, rng, &format!("{name}.conv1"), in_dim, hidden),
            outer: Linear::new(store, rng, &format!("{name}.conv2"), hidden, out_dim),
        }
    }

    pub fn forward(&self, s: &mut Session, x: Var) -> Result<Var> {
        let (w1, b1) = (s.param(self.inner.weight), s.param(self.inner.bias));
        let (w2, b2) = (s.param(self.outer.weight), s.param(self.outer.bias));
        s.tape.conv1d_pointwise_ff(x, w1, b1, w2, b2)
    }
}

/// Scaled dot-product self-attention with query/key/value/output projections.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl SelfAttention {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        dim: usize,
        heads: usize,
    ) -> Self {
        debug_assert!(heads >= 1 && dim % heads == 0);
        Self {
            query: Linear::new(store, rng, &format!("{name}.query"), dim, dim),
            key: Linear::new(store, rng, &format!("{name}.key"), dim, dim),
            value: Linear::new(store, rng, &format!("{name}.value"), dim, dim),
            output: Linear::new(store, rng, &format!("{name}.output"), dim, dim),
            heads,
            dim,
        }
    }

    /// Attends across the rows of `x` (`tokens × dim`).
    pub fn forward(&self, s: &mut Session, x: Var, site: AttentionSite) -> Result<Var> {
        let q = self.query.forward(s, x)?;
        let k = self.key.forward(s, x)?;
        let v = self.value.forward(s, x)?;
        let head_dim = self.dim / self.heads;
        let scale = 1.0 / (head_dim as f64).sqrt();

        let mut contexts = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                let (lo, hi) = (h * head_dim, (h + 1) * head_dim);
                (
                    s.tape.slice_cols(q, lo, hi)?,
                    s.tape.slice_cols(k, lo, hi)?,
                    s.tape.slice_cols(v, lo, hi)?,
                )
            };
            let kt = s.tape.transpose(kh)?;
            let scores = s.tape.matmul(qh, kt)?;
            let scores = s.tape.scale(scores, scale);
            let weights = s.tape.softmax_rows(scores)?;
            s.log_attention(AttentionSite { head: h, ..site }, weights);
            contexts.push(s.tape.matmul(weights, vh)?);
        }
        let context = if contexts.len() == 1 {
            contexts[0]
        } else {
            s.tape.concat_cols(&contexts)?
        };
        self.output.forward(s, context)
    }
}
