//! The two-stream encoder model and its contrastive view heads.

mod encoder;
mod layers;
mod params;

pub use encoder::{sinusoidal_positions, Encoder, Fusion, RelationBlock, SdlLayer, TimeBlock};
pub use layers::{FeedForward, LayerNorm, Linear, SelfAttention};
pub use params::{xavier_uniform, AttentionSite, BlockKind, ParamId, ParamStore, Session, Stream};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::WindowBatch;
use crate::error::{Error, Result};
use crate::objective::{self, LossBreakdown, Objective, ViewHeads, ViewPair};
use crate::tensor::{Tensor, Var};

/// Shape and ablation settings of the encoder stack.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// Window length `L` of the original stream; the differenced stream has `L − 1` rows.
    pub window: usize,
    pub enable_time_block: bool,
    pub enable_rel_block: bool,
    pub ff_inner: usize,
    pub leaky_slope: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            n_heads: 1,
            n_layers: 1,
            window: 90,
            enable_time_block: true,
            enable_rel_block: true,
            ff_inner: 256,
            leaky_slope: 0.01,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !self.enable_time_block && !self.enable_rel_block {
            return fail("at least one of the time and relation blocks must be enabled".into());
        }
        if self.d_model == 0 || self.n_heads == 0 || self.ff_inner == 0 {
            return fail("d_model, n_heads and ff_inner must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_layers == 0 {
            return fail("n_layers must be ≥ 1".into());
        }
        if self.window < 2 {
            return fail(format!("window {} must be ≥ 2", self.window));
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return fail("leaky_slope must be finite and ≥ 0".into());
        }
        Ok(())
    }

    pub fn enabled_blocks(&self) -> usize {
        usize::from(self.enable_time_block) + usize::from(self.enable_rel_block)
    }
}

/// Everything one window produces in a forward pass.
#[derive(Clone, Copy, Debug)]
pub struct WindowForward {
    /// Encoded original stream, `L × d_model`.
    pub h_t: Var,
    /// Encoded differenced stream, `(L−1) × d_model`.
    pub h_d: Var,
    pub views: ViewPair,
}

/// The full detector: separate encoders for the original and differenced
/// streams plus the two contrastive view heads.
#[derive(Clone, Debug)]
pub struct DConAd {
    pub config: EncoderConfig,
    pub input_dims: usize,
    pub params: ParamStore,
    pub original: Encoder,
    pub differenced: Encoder,
    pub views: Option<ViewHeads>,
}

impl DConAd {
    pub fn new(config: EncoderConfig, input_dims: usize, seed: u64) -> Result<Self> {
        Self::build(config, input_dims, seed, true)
    }

    /// Only the two encoders, without view heads.
    pub fn encoders_only(config: EncoderConfig, input_dims: usize, seed: u64) -> Result<Self> {
        Self::build(config, input_dims, seed, false)
    }

    fn build(
        config: EncoderConfig,
        input_dims: usize,
        seed: u64,
        with_views: bool,
    ) -> Result<Self> {
        config.validate()?;
        if input_dims == 0 {
            return Err(Error::Config("input dimension must be ≥ 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let original = Encoder::new(
            &mut params,
            &mut rng,
            Stream::Original,
            &config,
            input_dims,
            config.window,
        );
        let differenced = Encoder::new(
            &mut params,
            &mut rng,
            Stream::Differenced,
            &config,
            input_dims,
            config.window - 1,
        );
        let views = with_views
            .then(|| ViewHeads::new(&mut params, &mut rng, config.d_model, config.leaky_slope));
        Ok(Self {
            config,
            input_dims,
            params,
            original,
            differenced,
            views,
        })
    }

    /// Encodes one window and its differenced counterpart.
    pub fn encode(
        &self,
        s: &mut Session,
        window: &Tensor,
        diff_window: &Tensor,
    ) -> Result<(Var, Var)> {
        let h_t = self.original.forward(s, window)?;
        let h_d = self.differenced.forward(s, diff_window)?;
        Ok((h_t, h_d))
    }

    fn heads(&self) -> Result<&ViewHeads> {
        self.views
            .as_ref()
            .ok_or_else(|| Error::Contract("model was built without view heads".into()))
    }

    pub fn forward_window(
        &self,
        s: &mut Session,
        window: &Tensor,
        diff_window: &Tensor,
    ) -> Result<WindowForward> {
        let heads = self.heads()?;
        let (h_t, h_d) = self.encode(s, window, diff_window)?;
        let views = heads.views(s, h_d, h_t)?;
        Ok(WindowForward { h_t, h_d, views })
    }

    /// Mean consistency loss over a batch, summed in window order.
    pub fn batch_loss(
        &self,
        s: &mut Session,
        batch: &WindowBatch,
        objective: &Objective,
    ) -> Result<(Var, LossBreakdown)> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let mut terms = Vec::with_capacity(batch.len());
        for (w, dw) in batch.windows.iter().zip(&batch.diff_windows) {
            let out = self.forward_window(s, w, dw)?;
            terms.push(objective::consistency_terms(
                &mut s.tape,
                out.views,
                objective.mode,
            )?);
        }
        Ok(objective::combine_terms(
            &mut s.tape,
            &terms,
            self.config.window - 1,
            objective,
        )?)
    }

    /// Per-timestamp anomaly scores for one window (length `L`).
    pub fn score_window(&self, window: &Tensor, diff_window: &Tensor) -> Result<Vec<f64>> {
        let mut s = Session::inference(&self.params);
        let out = self.forward_window(&mut s, window, diff_window)?;
        Ok(objective::anomaly_score(
            s.value(out.views.v1),
            s.value(out.views.v2),
        )?)
    }
}
