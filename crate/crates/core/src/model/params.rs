use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::tensor::{Tape, Tensor, TensorError, Var};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named, ordered collection of every learnable tensor of a model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn element_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Replaces all values, checking that names and shapes line up.
    pub fn load(&mut self, entries: Vec<(String, Tensor)>) -> Result<(), TensorError> {
        if entries.len() != self.values.len() {
            return Err(TensorError::Contract(format!(
                "expected {} parameter tensors, found {}",
                self.values.len(),
                entries.len()
            )));
        }
        for ((name, value), (own_name, own)) in
            entries.iter().zip(self.names.iter().zip(&self.values))
        {
            if name != own_name {
                return Err(TensorError::Contract(format!(
                    "parameter {own_name} missing (found {name})"
                )));
            }
            if value.shape() != own.shape() {
                return Err(TensorError::Shape {
                    op: "load parameters",
                    lhs: own.shape().to_vec(),
                    rhs: value.shape().to_vec(),
                });
            }
        }
        self.values = entries.into_iter().map(|(_, v)| v).collect();
        Ok(())
    }

    /// SHA-256 over names, shapes and the exact bits of every value.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for (name, value) in self.names.iter().zip(&self.values) {
            hasher.update(name.as_bytes());
            for d in value.shape() {
                hasher.update((*d as u64).to_le_bytes());
            }
            for v in value.data() {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Uniform Xavier/Glorot initialization.
pub fn xavier_uniform(
    rng: &mut ChaCha8Rng,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches element count")
}

/// Where an attention map was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionSite {
    pub stream: Stream,
    pub layer: usize,
    pub block: BlockKind,
    pub head: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Original,
    Differenced,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Time,
    Relation,
}

/// A tape plus lazy bindings of store parameters to tape leaves.
///
/// Parameters are registered on first use, so parameters that a forward pass
/// never touches have no gradient at all.
pub struct Session<'a> {
    pub tape: Tape,
    store: &'a ParamStore,
    bound: Vec<Option<Var>>,
    trainable: bool,
    pub(crate) attention: Option<Vec<(AttentionSite, Var)>>,
}

impl<'a> Session<'a> {
    /// A session whose parameters receive gradients.
    pub fn training(store: &'a ParamStore) -> Self {
        Self::new(store, true)
    }

    /// A session whose parameters are constants.
    pub fn inference(store: &'a ParamStore) -> Self {
        Self::new(store, false)
    }

    fn new(store: &'a ParamStore, trainable: bool) -> Self {
        Self {
            tape: Tape::new(),
            store,
            bound: vec![None; store.len()],
            trainable,
            attention: None,
        }
    }

    /// Keeps every attention-weight matrix produced from now on.
    pub fn record_attention(&mut self) {
        self.attention.get_or_insert_with(Vec::new);
    }

    pub fn attention_maps(&self) -> &[(AttentionSite, Var)] {
        self.attention.as_deref().unwrap_or(&[])
    }

    pub(crate) fn log_attention(&mut self, site: AttentionSite, var: Var) {
        if let Some(log) = &mut self.attention {
            log.push((site, var));
        }
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.bound[id.0] {
            return v;
        }
        let value = self.store.get(id).clone();
        let v = if self.trainable {
            self.tape.param(value)
        } else {
            self.tape.constant(value)
        };
        self.bound[id.0] = Some(v);
        v
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.tape.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.tape.value(v)
    }

    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        self.tape.backward(loss)
    }

    /// Gradient per store parameter; `None` for parameters never used on this tape.
    pub fn param_grads(&self) -> Vec<Option<Tensor>> {
        self.bound
            .iter()
            .map(|b| b.and_then(|v| self.tape.grad(v).cloned()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unused_parameters_have_no_gradient() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::scalar(2.0));
        let _b = store.add("b", Tensor::scalar(5.0));
        let mut s = Session::training(&store);
        let va = s.param(a);
        let loss = s.tape.mul(va, va).unwrap();
        s.backward(loss).unwrap();
        let grads = s.param_grads();
        assert_eq!(grads[0].as_ref().unwrap().item(), 4.0);
        assert!(grads[1].is_none());
    }

    #[test]
    fn checksum_tracks_bits() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::scalar(1.0));
        let c1 = store.checksum();
        assert_eq!(c1, store.clone().checksum());
        store.get_mut(a).data_mut()[0] = 1.0 + f64::EPSILON;
        assert_ne!(c1, store.checksum());
    }

    #[test]
    fn load_rejects_shape_mismatch() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(&[2, 2]));
        let err = store
            .load(vec![("w".into(), Tensor::zeros(&[2, 3]))])
            .unwrap_err();
        assert!(matches!(err, TensorError::Shape { .. }));
        assert!(store
            .load(vec![("v".into(), Tensor::zeros(&[2, 2]))])
            .is_err());
    }
}
