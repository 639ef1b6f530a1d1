use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{DiffError, Graph, Real, Tensor};

/// Which network a parameter belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Primary,
    Cracking,
    Contamination,
    Fusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Encoder,
    Classifier,
    Decoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamInfo {
    pub branch: Branch,
    pub part: Part,
}

/// Named parameters in insertion order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    entries: Vec<(String, Tensor<T>, ParamInfo)>,
    index: HashMap<String, usize>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>, info: ParamInfo) -> Result<(), DiffError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(DiffError::DuplicateParam(name));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, value, info));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn info(&self, name: &str) -> Option<ParamInfo> {
        self.index.get(name).map(|&i| self.entries[i].2)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>, ParamInfo)> {
        self.entries.iter().map(|(n, t, i)| (n.as_str(), t, *i))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>, ParamInfo)> {
        self.entries.iter_mut().map(|(n, t, i)| (n.as_str(), t, *i))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar weights.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|(_, t, _)| t.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.entries.iter_mut().for_each(|(_, t, _)| t.zero_grad());
    }

    /// Adds the gradients of every parameter leaf of `graph` into the store.
    pub fn absorb_grads(&mut self, graph: &Graph<T>) {
        for (name, g) in graph.param_grads() {
            if let Some(&i) = self.index.get(name) {
                self.entries[i].1.accumulate_grad(g);
            }
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self.entries.iter().map(|(n, t, i)| (n.clone(), t.cast(), *i)).collect(),
            index: self.index.clone(),
        }
    }
}
