//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "DCONADCK" | version u32 | config text (u32 length + UTF-8)
//! input dims u64 | preprocessor | parameter count u64 | parameters… | SHA-256 of everything before
//! ```
//!
//! A parameter is its name (u32 length + UTF-8), rank u32, dims u64 each and
//! its values as f64 bits.

use sha2::{Digest, Sha256};

use super::{RunConfig, TrainLog, Trained};
use crate::data::{DiffOrder, Normalizer, Preprocessor};
use crate::error::{Error, Result};
use crate::model::DConAd;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"DCONADCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub input_dims: usize,
    pub preprocessor: Preprocessor,
    pub params: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn from_trained(config: &RunConfig, trained: &Trained) -> Self {
        let store = &trained.model.params;
        Self {
            config: config.clone(),
            input_dims: trained.model.input_dims,
            preprocessor: trained.preprocessor.clone(),
            params: store
                .names()
                .iter()
                .cloned()
                .zip(store.values().iter().cloned())
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(CHECKPOINT_VERSION);
        w.str(&self.config.fingerprint_text());
        w.u64(self.input_dims as u64);
        w.u8(match self.preprocessor.order {
            DiffOrder::NormalizeThenDiff => 0,
            DiffOrder::DiffThenNormalize => 1,
        });
        w.normalizer(&self.preprocessor.original);
        match &self.preprocessor.differenced {
            Some(n) => {
                w.u8(1);
                w.normalizer(n);
            }
            None => w.u8(0),
        }
        w.u64(self.params.len() as u64);
        for (name, value) in &self.params {
            w.str(name);
            w.u32(value.shape().len() as u32);
            for d in value.shape() {
                w.u64(*d as u64);
            }
            for v in value.data() {
                w.f64(*v);
            }
        }
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        let mut r = Reader {
            bytes: body,
            pos: MAGIC.len(),
        };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version} (this build reads version {CHECKPOINT_VERSION})"
            )));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint(
                "checksum mismatch, file is corrupt".into(),
            ));
        }
        let config = RunConfig::parse(&r.str()?)
            .map_err(|e| Error::Checkpoint(format!("embedded configuration: {e}")))?;
        let input_dims = r.u64()? as usize;
        let order = match r.u8()? {
            0 => DiffOrder::NormalizeThenDiff,
            1 => DiffOrder::DiffThenNormalize,
            other => {
                return Err(Error::Checkpoint(format!(
                    "unknown differencing order tag {other}"
                )))
            }
        };
        let original = r.normalizer()?;
        let differenced = match r.u8()? {
            0 => None,
            1 => Some(r.normalizer()?),
            other => return Err(Error::Checkpoint(format!("bad statistics flag {other}"))),
        };
        let count = r.u64()? as usize;
        let mut params = Vec::new();
        for _ in 0..count {
            let name = r.str()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            let tensor = Tensor::new(shape, data)
                .map_err(|e| Error::Checkpoint(format!("parameter {name}: {e}")))?;
            params.push((name, tensor));
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint(format!(
                "{} trailing bytes after parameters",
                body.len() - r.pos
            )));
        }
        Ok(Self {
            config,
            input_dims,
            preprocessor: Preprocessor {
                order,
                original,
                differenced,
            },
            params,
        })
    }

    /// Fields that must agree between the checkpoint and a run configuration.
    pub fn check_compatible(&self, config: &RunConfig) -> Result<()> {
        let ours = &self.config;
        let fields: [(&'static str, String, String); 8] = [
            ("window", ours.window.to_string(), config.window.to_string()),
            (
                "d_model",
                ours.d_model.to_string(),
                config.d_model.to_string(),
            ),
            (
                "n_heads",
                ours.n_heads.to_string(),
                config.n_heads.to_string(),
            ),
            (
                "n_layers",
                ours.n_layers.to_string(),
                config.n_layers.to_string(),
            ),
            (
                "ff_inner",
                ours.encoder().ff_inner.to_string(),
                config.encoder().ff_inner.to_string(),
            ),
            (
                "enable_time_block",
                ours.enable_time_block.to_string(),
                config.enable_time_block.to_string(),
            ),
            (
                "enable_rel_block",
                ours.enable_rel_block.to_string(),
                config.enable_rel_block.to_string(),
            ),
            (
                "diff_order",
                ours.diff_order.as_str().to_string(),
                config.diff_order.as_str().to_string(),
            ),
        ];
        for (field, checkpoint, config) in fields {
            if checkpoint != config {
                return Err(Error::Incompatible {
                    field,
                    checkpoint,
                    config,
                });
            }
        }
        Ok(())
    }

    /// Rebuilds the model, checking it against `config` first.
    pub fn restore(&self, config: &RunConfig) -> Result<Trained> {
        self.check_compatible(config)?;
        let mut model = DConAd::new(self.config.encoder(), self.input_dims, self.config.seed)?;
        model
            .params
            .load(self.params.clone())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let checksum = model.params.checksum();
        Ok(Trained {
            model,
            preprocessor: self.preprocessor.clone(),
            log: TrainLog {
                epochs: Vec::new(),
                checksum,
            },
        })
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn normalizer(&mut self, n: &Normalizer) {
        self.u64(n.mean.len() as u64);
        for v in n.mean.iter().chain(&n.scale) {
            self.f64(*v);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|end| *end <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("string is not UTF-8".into()))
    }
    fn normalizer(&mut self) -> Result<Normalizer> {
        let d = self.u64()? as usize;
        let mean = (0..d).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        let scale = (0..d).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Ok(Normalizer { mean, scale })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use crate::data::TimeSeriesDataset;

    fn tiny() -> (RunConfig, Trained) {
        let config = RunConfig {
            window: 6,
            d_model: 4,
            epochs: 0,
            ..RunConfig::default()
        };
        let values = (0..2)
            .map(|v| (0..20).map(|t| ((t + v) as f64 * 0.7).sin()).collect())
            .collect();
        let data = TimeSeriesDataset::new("t", Split::Train, values, None).unwrap();
        let trained = super::super::train(&config, &data).unwrap();
        (config, trained)
    }

    #[test]
    fn bytes_round_trip() {
        let (config, trained) = tiny();
        let ck = Checkpoint::from_trained(&config, &trained);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.params, ck.params);
        assert_eq!(back.preprocessor, ck.preprocessor);
        let restored = back.restore(&config).unwrap();
        assert_eq!(
            restored.model.params.checksum(),
            trained.model.params.checksum()
        );
    }

    #[test]
    fn version_and_corruption_are_detected() {
        let (config, trained) = tiny();
        let bytes = Checkpoint::from_trained(&config, &trained).to_bytes();
        let mut wrong_version = bytes.clone();
        wrong_version[8] = 9;
        let err = Checkpoint::from_bytes(&wrong_version)
            .unwrap_err()
            .to_string();
        assert!(err.contains("version 9"), "{err}");
        let mut flipped = bytes.clone();
        let mid = bytes.len() / 2;
        flipped[mid] ^= 1;
        assert!(Checkpoint::from_bytes(&flipped).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 5]).is_err());
    }

    #[test]
    fn mismatched_config_names_the_field() {
        let (config, trained) = tiny();
        let ck = Checkpoint::from_trained(&config, &trained);
        let other = RunConfig {
            window: 7,
            ..config
        };
        match ck.restore(&other) {
            Err(Error::Incompatible { field, .. }) => assert_eq!(field, "window"),
            other => panic!("expected incompatibility, got {other:?}"),
        }
    }
}
