use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::{Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip_norm: Option<f64>,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: None,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub clip_norm: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Optimizer {
    Adam(Adam),
    Sgd(Sgd),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, clip_norm: Option<f64>) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam {
                clip_norm,
                ..Adam::new(lr)
            }),
            OptimizerKind::Sgd => Optimizer::Sgd(Sgd { lr, clip_norm }),
        }
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    ///
    /// Fails without touching any value if a gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for p in store.iter() {
            if p.grad().data().iter().any(|g| !g.is_finite()) {
                return Err(TensorError::NonFiniteGradient(p.name().to_string()));
            }
        }
        let clip = match self {
            Optimizer::Adam(a) => a.clip_norm,
            Optimizer::Sgd(s) => s.clip_norm,
        };
        let scale = clip.map_or(1.0, |max_norm| {
            let norm = store
                .iter()
                .flat_map(|p| p.grad().data().iter())
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            if norm > max_norm {
                max_norm / norm
            } else {
                1.0
            }
        });
        match self {
            Optimizer::Sgd(s) => {
                for p in store.iter_mut() {
                    let (value, grad) = p.value_and_grad_mut();
                    for (w, g) in value.data_mut().iter_mut().zip(grad.data()) {
                        *w -= s.lr * g * scale;
                    }
                }
            }
            Optimizer::Adam(a) => {
                if a.m.len() != store.len() {
                    a.m = store.iter().map(|p| vec![0.0; p.value().len()]).collect();
                    a.v = a.m.clone();
                }
                a.step += 1;
                let bc1 = 1.0 - a.beta1.powi(a.step as i32);
                let bc2 = 1.0 - a.beta2.powi(a.step as i32);
                for ((p, m), v) in store.iter_mut().zip(&mut a.m).zip(&mut a.v) {
                    let (value, grad) = p.value_and_grad_mut();
                    for k in 0..m.len() {
                        let g = grad.data()[k] * scale;
                        m[k] = a.beta1 * m[k] + (1.0 - a.beta1) * g;
                        v[k] = a.beta2 * v[k] + (1.0 - a.beta2) * g * g;
                        let mh = m[k] / bc1;
                        let vh = v[k] / bc2;
                        value.data_mut()[k] -= a.lr * mh / (vh.sqrt() + a.eps);
                    }
                }
            }
        }
        store.zero_grad();
        Ok(())
    }

    /// Optimizer state as named tensors, for checkpointing.
    pub fn state_tensors(&self, store: &ParamStore) -> Vec<(String, Tensor)> {
        let Optimizer::Adam(a) = self else {
            return Vec::new();
        };
        if a.m.len() != store.len() {
            return Vec::new();
        }
        let mut out = Vec::new();
        for ((p, m), v) in store.iter().zip(&a.m).zip(&a.v) {
            let shape = p.value().shape().to_vec();
            out.push((
                format!("adam.m.{}", p.name()),
                Tensor::new(shape.clone(), m.clone()).expect("moment shape"),
            ));
            out.push((
                format!("adam.v.{}", p.name()),
                Tensor::new(shape, v.clone()).expect("moment shape"),
            ));
        }
        out
    }

    pub fn steps_taken(&self) -> u64 {
        match self {
            Optimizer::Adam(a) => a.step,
            Optimizer::Sgd(_) => 0,
        }
    }

    /// Restores Adam moments saved by [`Optimizer::state_tensors`].
    pub fn restore_state(
        &mut self,
        store: &ParamStore,
        steps: u64,
        lookup: impl Fn(&str) -> Option<Tensor>,
    ) -> Result<()> {
        let Optimizer::Adam(a) = self else {
            return Ok(());
        };
        if steps == 0 {
            return Ok(());
        }
        let mut m = Vec::with_capacity(store.len());
        let mut v = Vec::with_capacity(store.len());
        for p in store.iter() {
            let get = |kind: &str| {
                let name = format!("adam.{kind}.{}", p.name());
                let t = lookup(&name).ok_or_else(|| {
                    TensorError::Checkpoint(format!("missing optimizer state `{name}`"))
                })?;
                if t.shape() != p.value().shape() {
                    return Err(TensorError::CheckpointShape {
                        name,
                        expected: p.value().shape().to_vec(),
                        found: t.shape().to_vec(),
                    });
                }
                Ok(t.data().to_vec())
            };
            m.push(get("m")?);
            v.push(get("v")?);
        }
        a.m = m;
        a.v = v;
        a.step = steps;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(x: f64) -> (ParamStore, crate::tensor::ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("x", Tensor::vector(vec![x]));
        (store, id)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut store, id) = scalar_store(1.5);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 1e-3, None);
        opt.step(&mut store).unwrap();
        assert_eq!(store.value(id).data(), &[1.5]);
    }

    #[test]
    fn moves_against_gradient_sign() {
        let (mut store, id) = scalar_store(0.0);
        store.get_mut(id).grad_mut().data_mut()[0] = 1.0;
        Optimizer::new(OptimizerKind::Adam, 1e-3, None)
            .step(&mut store)
            .unwrap();
        assert!(store.value(id).data()[0] < 0.0);
        assert_eq!(store.grad(id).data(), &[0.0]);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        // 100 steps on (x - 3)^2 from x = 0. With the default lr of 1e-3 Adam
        // moves at most ~0.1 in 100 steps, so the run uses lr = 0.1.
        let (mut store, id) = scalar_store(0.0);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.1, None);
        for _ in 0..100 {
            let x = store.value(id).data()[0];
            store.get_mut(id).grad_mut().data_mut()[0] = 2.0 * (x - 3.0);
            opt.step(&mut store).unwrap();
        }
        let x = store.value(id).data()[0];
        assert!((x - 3.0).abs() < 0.1, "x = {x}");
    }

    #[test]
    fn sgd_minimizes_quadratic() {
        let (mut store, id) = scalar_store(0.0);
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, None);
        for _ in 0..100 {
            let x = store.value(id).data()[0];
            store.get_mut(id).grad_mut().data_mut()[0] = 2.0 * (x - 3.0);
            opt.step(&mut store).unwrap();
        }
        assert!((store.value(id).data()[0] - 3.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let (mut store, id) = scalar_store(0.0);
        store.get_mut(id).grad_mut().data_mut()[0] = f64::NAN;
        let err = Optimizer::new(OptimizerKind::Adam, 1e-3, None)
            .step(&mut store)
            .unwrap_err();
        assert!(matches!(err, TensorError::NonFiniteGradient(ref n) if n == "x"));
        assert_eq!(store.value(id).data(), &[0.0]);
    }

    #[test]
    fn clipping_bounds_sgd_step() {
        let (mut store, id) = scalar_store(0.0);
        store.get_mut(id).grad_mut().data_mut()[0] = 100.0;
        Optimizer::new(OptimizerKind::Sgd, 1.0, Some(1.0))
            .step(&mut store)
            .unwrap();
        assert!((store.value(id).data()[0] + 1.0).abs() < 1e-12);
    }
}
