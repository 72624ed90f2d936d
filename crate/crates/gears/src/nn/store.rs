//! Parameter storage and the Adam optimizer.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math::split_seed;

use super::tensor::Tensor;
use super::NnError;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub(crate) struct ParamEntry {
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
}

/// Named parameters with Adam moment state. The map is ordered so that
/// serialization and iteration are deterministic regardless of insertion
/// order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    pub(crate) entries: BTreeMap<String, ParamEntry>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let m = Tensor::zeros(value.shape());
        let v = Tensor::zeros(value.shape());
        self.entries.insert(name.to_string(), ParamEntry { value, m, v, step: 0 });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NnError> {
        self.entries
            .get(name)
            .map(|e| &e.value)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NnError> {
        self.entries
            .get_mut(name)
            .map(|e| &mut e.value)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))
    }

    pub fn total_values(&self) -> usize {
        self.entries.values().map(|e| e.value.numel()).sum()
    }

    /// Weight matrix initialized uniform in ±sqrt(1/fan_in). The per-name RNG
    /// stream is derived from the master seed and a hash of the name, so
    /// registration order does not matter.
    pub fn init_weight(&mut self, name: &str, fan_in: usize, fan_out: usize, seed: u64) {
        let bound = (1.0 / fan_in as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, fnv1a(name)));
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| rng.gen::<f64>() * 2.0 * bound - bound)
            .collect();
        self.insert(name, Tensor::from_vec(&[fan_in, fan_out], data).unwrap());
    }

    /// Bias (or any other tensor) initialized to zeros.
    pub fn init_zeros(&mut self, name: &str, shape: &[usize]) {
        self.insert(name, Tensor::zeros(shape));
    }

    /// One Adam update over the given `(name, gradient)` pairs.
    /// β₁ = 0.9, β₂ = 0.999, ε = 1e-8, with bias correction. Each parameter
    /// carries its own step count, so updates that skip a parameter leave its
    /// bias-correction schedule untouched.
    pub fn adam_step(&mut self, grads: &[(String, Tensor)], lr: f64) -> Result<(), NnError> {
        for (name, g) in grads {
            let entry = self
                .entries
                .get_mut(name)
                .ok_or_else(|| NnError::UnknownParam(name.clone()))?;
            if g.shape() != entry.value.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "adam_step",
                    lhs: entry.value.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            entry.step += 1;
            let t = entry.step as i32;
            let c1 = 1.0 - BETA1.powi(t);
            let c2 = 1.0 - BETA2.powi(t);
            for ((w, m), (v, &gi)) in entry
                .value
                .data_mut()
                .iter_mut()
                .zip(entry.m.data_mut())
                .zip(entry.v.data_mut().iter_mut().zip(g.data()))
            {
                *m = BETA1 * *m + (1.0 - BETA1) * gi;
                *v = BETA2 * *v + (1.0 - BETA2) * gi * gi;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *w -= lr * mhat / (vhat.sqrt() + EPS);
            }
        }
        Ok(())
    }
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}
