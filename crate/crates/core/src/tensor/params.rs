use std::collections::BTreeMap;

use super::{Result, Tensor, TensorError};

/// Handle to a parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct Parameter {
    name: String,
    value: Tensor,
    grad: Tensor,
}

impl Parameter {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor {
        &mut self.value
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut Tensor {
        &mut self.grad
    }

    pub(crate) fn value_and_grad_mut(&mut self) -> (&mut Tensor, &mut Tensor) {
        (&mut self.value, &mut self.grad)
    }
}

/// Ordered collection of named trainable parameters.
///
/// Names are dot-separated; the first segment (`encoder`, `controller`,
/// `baseline`) groups parameters for counting.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(self.find(&name).is_none(), "duplicate parameter {name}");
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter { name, value, grad });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn counts(&self) -> ParamCounts {
        let mut counts = ParamCounts::default();
        for p in &self.params {
            let group = p.name.split('.').next().unwrap_or_default().to_string();
            *counts.groups.entry(group).or_default() += p.value.len();
            counts.total += p.value.len();
        }
        counts
    }

    /// Copies values from `other` for every parameter name present here.
    ///
    /// Every parameter must exist in `other` with an identical shape.
    pub fn load_values(&mut self, tensors: &BTreeMap<String, Tensor>) -> Result<()> {
        for p in &mut self.params {
            let Some(t) = tensors.get(&p.name) else {
                return Err(TensorError::Checkpoint(format!(
                    "missing tensor `{}`",
                    p.name
                )));
            };
            if t.shape() != p.value.shape() {
                return Err(TensorError::CheckpointShape {
                    name: p.name.clone(),
                    expected: p.value.shape().to_vec(),
                    found: t.shape().to_vec(),
                });
            }
            p.value = t.clone();
        }
        Ok(())
    }

    /// 64-bit FNV-1a digest over names and value bit patterns.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for p in &self.params {
            eat(p.name.as_bytes());
            for v in p.value.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// Element counts grouped by the first segment of each parameter name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParamCounts {
    pub groups: BTreeMap<String, usize>,
    pub total: usize,
}

impl ParamCounts {
    pub fn group(&self, name: &str) -> usize {
        self.groups.get(name).copied().unwrap_or(0)
    }
}

pub mod init {
    use rand::Rng;

    use crate::tensor::Tensor;

    pub const RECURRENT_SCALE: f64 = 0.08;
    pub const EMBEDDING_SCALE: f64 = 0.1;

    pub fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], scale: f64) -> Tensor {
        let mut t = Tensor::zeros(shape);
        for v in t.data_mut() {
            *v = rng.gen_range(-scale..scale);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_matrix_plus_bias() {
        let mut store = ParamStore::new();
        store.add("encoder.w", Tensor::zeros(&[3, 4]));
        store.add("encoder.b", Tensor::zeros(&[4]));
        let c = store.counts();
        assert_eq!(c.total, 16);
        assert_eq!(c.group("encoder"), 16);
        assert_eq!(c.group("controller"), 0);
    }

    #[test]
    fn empty_store_counts_zero() {
        assert_eq!(ParamStore::new().counts().total, 0);
    }

    #[test]
    fn load_values_reports_shape_mismatch() {
        let mut store = ParamStore::new();
        store.add("controller.head.w", Tensor::zeros(&[9, 4]));
        let mut src = BTreeMap::new();
        src.insert("controller.head.w".to_string(), Tensor::zeros(&[9, 5]));
        let err = store.load_values(&src).unwrap_err().to_string();
        assert!(err.contains("controller.head.w"), "{err}");
        assert!(err.contains("[9, 4]") && err.contains("[9, 5]"), "{err}");
    }
}
