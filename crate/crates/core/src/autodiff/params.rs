use std::collections::BTreeMap;

use rand::Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Vec<f64>,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

/// Named, shaped parameter arrays with gradient slots and optimizer state.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: BTreeMap<String, ParamId>,
    steps: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Contract(format!("duplicate parameter name {name}")));
        }
        let n = value.numel();
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.to_string(),
            value,
            grad: vec![0.0; n],
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Uniform init in ±1/√fan_in.
    pub fn insert_uniform<R: Rng>(
        &mut self,
        name: &str,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(name, Tensor::new(shape, values)?)
    }

    pub fn insert_filled(&mut self, name: &str, shape: Vec<usize>, fill: f64) -> Result<ParamId> {
        let n: usize = shape.iter().product();
        self.insert(name, Tensor::new(shape, vec![fill; n])?)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.params[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of optimizer steps applied so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, grad: &[f64]) {
        for (slot, g) in self.params[id.0].grad.iter_mut().zip(grad) {
            *slot += g;
        }
    }

    /// Overwrites a parameter's values, keeping its shape.
    pub fn set_values(&mut self, id: ParamId, values: Vec<f64>) -> Result<()> {
        let shape = self.params[id.0].value.shape().to_vec();
        self.params[id.0].value = Tensor::new(shape, values)?;
        Ok(())
    }

    /// Clears gradients and optimizer moments, keeping parameter values.
    pub fn reset_optimizer(&mut self) {
        self.steps = 0;
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
            p.first_moment.iter_mut().for_each(|g| *g = 0.0);
            p.second_moment.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// FNV-1a over names, shapes and the exact bit patterns of all values.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for p in &self.params {
            eat(p.name.as_bytes());
            for d in p.value.shape() {
                eat(&(*d as u64).to_le_bytes());
            }
            for v in p.value.values() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }
}

/// Adaptive-moment optimizer settings. Moment buffers live in the
/// [`ParamStore`] so they persist across steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step(&self, store: &mut ParamStore) -> Result<()> {
        for p in &store.params {
            if let Some(i) = p.grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite gradient in parameter {} at index {}",
                    p.name, i
                )));
            }
        }
        store.steps += 1;
        let t = store.steps as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for p in &mut store.params {
            let mut values = p.value.values().to_vec();
            for (i, v) in values.iter_mut().enumerate() {
                let g = p.grad[i];
                let m = self.beta1 * p.first_moment[i] + (1.0 - self.beta1) * g;
                let s = self.beta2 * p.second_moment[i] + (1.0 - self.beta2) * g * g;
                p.first_moment[i] = m;
                p.second_moment[i] = s;
                let m_hat = m / bc1;
                let s_hat = s / bc2;
                *v -= self.lr * m_hat / (s_hat.sqrt() + self.eps);
            }
            let shape = p.value.shape().to_vec();
            p.value = Tensor::new(shape, values)?;
        }
        Ok(())
    }
}
