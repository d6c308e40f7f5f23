use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to an entry of a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub gradient: Tensor,
    pub adam_m: Tensor,
    pub adam_v: Tensor,
    pub step_count: u64,
}

impl ParamEntry {
    fn new(name: String, value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Self {
            name,
            gradient: Tensor::zeros(&shape),
            adam_m: Tensor::zeros(&shape),
            adam_v: Tensor::zeros(&shape),
            value,
            step_count: 0,
        }
    }
}

/// Named learnable tensors with their gradients and optimizer state.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateParameter(name));
        }
        let id = ParamId(self.entries.len());
        self.index.insert(name.clone(), id);
        self.entries.push(ParamEntry::new(name, value));
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        self.entries[id.0].value.values()
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        self.entries[id.0].value.values_mut()
    }

    pub fn gradient(&self, id: ParamId) -> &[f64] {
        self.entries[id.0].gradient.values()
    }

    pub fn zero_grad(&mut self) {
        for e in &mut self.entries {
            e.gradient.fill(0.0);
        }
    }

    /// Adds `grads` into the stored gradients.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (e, g) in self.entries.iter_mut().zip(&grads.buffers) {
            for (a, b) in e.gradient.values_mut().iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    /// Snapshot of names, shapes and values (no optimizer state).
    pub fn to_saved(&self) -> Vec<SavedParam> {
        self.entries
            .iter()
            .map(|e| SavedParam {
                name: e.name.clone(),
                shape: e.value.shape().to_vec(),
                values: e.value.values().to_vec(),
            })
            .collect()
    }

    /// Overwrites values from a snapshot; every stored entry must be present with its shape.
    pub fn load_saved(&mut self, saved: &[SavedParam]) -> Result<()> {
        let mut seen = vec![false; self.entries.len()];
        for s in saved {
            let id = self.id(&s.name)?;
            let entry = &mut self.entries[id.0];
            if entry.value.shape() != s.shape.as_slice() {
                return Err(Error::Shape(format!(
                    "parameter `{}` has shape {:?}, file has {:?}",
                    s.name,
                    entry.value.shape(),
                    s.shape
                )));
            }
            entry.value = Tensor::from_vec(&s.shape, s.values.clone())?;
            seen[id.0] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::UnknownParameter(format!(
                "{} (missing from file)",
                self.entries[missing].name
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SavedParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Gradient buffers laid out like a [`ParamStore`], owned by one worker.
#[derive(Clone, Debug)]
pub struct Gradients {
    buffers: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            buffers: store
                .entries
                .iter()
                .map(|e| vec![0.0; e.value.len()])
                .collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.buffers[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.buffers[id.0]
    }

    /// Two distinct buffers at once.
    pub fn get_pair_mut(&mut self, a: ParamId, b: ParamId) -> (&mut [f64], &mut [f64]) {
        assert_ne!(a, b, "pair must address distinct parameters");
        if a.0 < b.0 {
            let (lo, hi) = self.buffers.split_at_mut(b.0);
            (&mut lo[a.0], &mut hi[0])
        } else {
            let (lo, hi) = self.buffers.split_at_mut(a.0);
            (&mut hi[0], &mut lo[b.0])
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.buffers.iter_mut().zip(&other.buffers) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of every entry. Gradients are left in place.
pub fn adam_step(params: &mut ParamStore, config: &AdamConfig) -> Result<()> {
    if let Some(bad) = params.entries.iter().find(|e| !e.gradient.is_finite()) {
        return Err(Error::NonFiniteGradient(bad.name.clone()));
    }
    if config.lr <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            config.lr
        )));
    }
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = *config;
    for e in &mut params.entries {
        e.step_count += 1;
        let t = e.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let g = e.gradient.values();
        let m = e.adam_m.values_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
        }
        let v = e.adam_v.values_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
        }
        let (m, v) = (e.adam_m.values(), e.adam_v.values());
        for ((theta, mi), vi) in e.value.values_mut().iter_mut().zip(m).zip(v) {
            let m_hat = mi / c1;
            let v_hat = vi / c2;
            *theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
