//! The spatiotemporal dependency learning (SDL) encoder.
//!
//! Each layer runs a time-oriented block (attention across timestamps) and a
//! relation-oriented block (attention across embedding channels, on the
//! transposed representation), then fuses both back to `tokens × d_model`.

use rand_chacha::ChaCha8Rng;

use super::layers::{FeedForward, LayerNorm, SelfAttention};
use super::params::{AttentionSite, BlockKind, ParamId, ParamStore, Session, Stream};
use super::{xavier_uniform, EncoderConfig};
use crate::tensor::{Result, Tensor, TensorError, Var};

/// Fixed sinusoidal positional table of shape `tokens × d_model`.
pub fn sinusoidal_positions(tokens: usize, d_model: usize) -> Tensor {
    let mut data = vec![0.0; tokens * d_model];
    for pos in 0..tokens {
        for i in 0..d_model {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10000f64.powf(2.0 * pair / d_model as f64);
            data[pos * d_model + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![tokens, d_model], data).expect("positional shape")
}

/// `LN(H + SAM(H)) → LN(Ĥ + FF(Ĥ))` over timestamps.
#[derive(Clone, Debug)]
pub struct TimeBlock {
    pub attention: SelfAttention,
    pub attn_norm: LayerNorm,
    pub ff: FeedForward,
    pub ff_norm: LayerNorm,
}

impl TimeBlock {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cfg: &EncoderConfig) -> Self {
        let dm = cfg.d_model;
        Self {
            attention: SelfAttention::new(store, rng, &format!("{name}.attn"), dm, cfg.n_heads),
            attn_norm: LayerNorm::new(store, &format!("{name}.attn_norm"), dm),
            ff: FeedForward::new(store, rng, &format!("{name}.ff"), dm, cfg.ff_inner, dm),
            ff_norm: LayerNorm::new(store, &format!("{name}.ff_norm"), dm),
        }
    }

    pub fn forward(&self, s: &mut Session, h: Var, site: AttentionSite) -> Result<Var> {
        let attended = self.attention.forward(s, h, site)?;
        let res = s.tape.add(h, attended)?;
        let mid = self.attn_norm.forward(s, res)?;
        let ff = self.ff.forward(s, mid)?;
        let res = s.tape.add(mid, ff)?;
        self.ff_norm.forward(s, res)
    }
}

/// Attention over the transposed representation, where each embedding channel
/// is a token whose features are the window's timestamps.
#[derive(Clone, Debug)]
pub struct RelationBlock {
    pub attention: SelfAttention,
    pub attn_norm: LayerNorm,
    pub ff: FeedForward,
    pub ff_norm: LayerNorm,
}

impl RelationBlock {
    fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        cfg: &EncoderConfig,
        tokens: usize,
    ) -> Self {
        let dm = cfg.d_model;
        Self {
            attention: SelfAttention::new(store, rng, &format!("{name}.attn"), tokens, 1),
            // normalizes the length-`tokens` rows of the transposed matrix
            attn_norm: LayerNorm::new(store, &format!("{name}.attn_norm"), tokens),
            ff: FeedForward::new(store, rng, &format!("{name}.ff"), dm, cfg.ff_inner, dm),
            ff_norm: LayerNorm::new(store, &format!("{name}.ff_norm"), dm),
        }
    }

    pub fn forward(&self, s: &mut Session, h: Var, site: AttentionSite) -> Result<Var> {
        let ht = s.tape.transpose(h)?;
        let attended = self.attention.forward(s, ht, site)?;
        let res = s.tape.add(ht, attended)?;
        let mid_t = self.attn_norm.forward(s, res)?;
        let mid = s.tape.transpose(mid_t)?;
        let ff = self.ff.forward(s, mid)?;
        let res = s.tape.add(mid, ff)?;
        self.ff_norm.forward(s, res)
    }
}

/// `LN(FF(LN(H_time ⊕ H_rel)))`, mapping the concatenated width back to `d_model`.
#[derive(Clone, Debug)]
pub struct Fusion {
    pub concat_norm: LayerNorm,
    pub ff: FeedForward,
    pub out_norm: LayerNorm,
}

impl Fusion {
    fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, cfg: &EncoderConfig) -> Self {
        let width = cfg.d_model * cfg.enabled_blocks();
        Self {
            concat_norm: LayerNorm::new(store, &format!("{name}.concat_norm"), width),
            ff: FeedForward::new(
                store,
                rng,
                &format!("{name}.ff"),
                width,
                cfg.ff_inner,
                cfg.d_model,
            ),
            out_norm: LayerNorm::new(store, &format!("{name}.out_norm"), cfg.d_model),
        }
    }

    pub fn forward(&self, s: &mut Session, branches: &[Var]) -> Result<Var> {
        let joined = if branches.len() == 1 {
            branches[0]
        } else {
            s.tape.concat_cols(branches)?
        };
        let normed = self.concat_norm.forward(s, joined)?;
        let ff = self.ff.forward(s, normed)?;
        self.out_norm.forward(s, ff)
    }
}

#[derive(Clone, Debug)]
pub struct SdlLayer {
    pub time: Option<TimeBlock>,
    pub relation: Option<RelationBlock>,
    pub fusion: Fusion,
}

/// Embedding followed by `n_layers` SDL layers, for one stream of fixed length.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub stream: Stream,
    pub tokens: usize,
    pub input_dims: usize,
    pub embed: ParamId,
    pub positions: Tensor,
    pub layers: Vec<SdlLayer>,
}

impl Encoder {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        stream: Stream,
        cfg: &EncoderConfig,
        input_dims: usize,
        tokens: usize,
    ) -> Self {
        let prefix = match stream {
            Stream::Original => "original",
            Stream::Differenced => "differenced",
        };
        let embed = store.add(
            format!("{prefix}.embed.weight"),
            xavier_uniform(rng, &[input_dims, cfg.d_model], input_dims, cfg.d_model),
        );
        let layers = (0..cfg.n_layers)
            .map(|l| {
                let name = format!("{prefix}.layer{l}");
                SdlLayer {
                    time: cfg
                        .enable_time_block
                        .then(|| TimeBlock::new(store, rng, &format!("{name}.time"), cfg)),
                    relation: cfg.enable_rel_block.then(|| {
                        RelationBlock::new(store, rng, &format!("{name}.relation"), cfg, tokens)
                    }),
                    fusion: Fusion::new(store, rng, &format!("{name}.fusion"), cfg),
                }
            })
            .collect();
        Self {
            stream,
            tokens,
            input_dims,
            embed,
            positions: sinusoidal_positions(tokens, cfg.d_model),
            layers,
        }
    }

    /// Value projection plus positional encoding: the first layer's input.
    pub fn embed(&self, s: &mut Session, window: &Tensor) -> Result<Var> {
        if window.shape() != [self.tokens, self.input_dims] {
            return Err(TensorError::Shape {
                op: "embed",
                lhs: vec![self.tokens, self.input_dims],
                rhs: window.shape().to_vec(),
            });
        }
        let x = s.constant(window.clone());
        let w = s.param(self.embed);
        let projected = s.tape.matmul(x, w)?;
        let pos = s.constant(self.positions.clone());
        s.tape.add(projected, pos)
    }

    pub fn forward(&self, s: &mut Session, window: &Tensor) -> Result<Var> {
        let mut h = self.embed(s, window)?;
        for (index, layer) in self.layers.iter().enumerate() {
            let site = |block| AttentionSite {
                stream: self.stream,
                layer: index,
                block,
                head: 0,
            };
            let mut branches = Vec::with_capacity(2);
            if let Some(time) = &layer.time {
                branches.push(time.forward(s, h, site(BlockKind::Time))?);
            }
            if let Some(rel) = &layer.relation {
                branches.push(rel.forward(s, h, site(BlockKind::Relation))?);
            }
            h = layer.fusion.forward(s, &branches)?;
        }
        Ok(h)
    }
}
