use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::spec::LayerDesc;
use crate::autodiff::{GradientMap, Graph, Real, Tensor, Var};
use crate::error::{Error, Result};

/// Named trainable tensors in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Real> NetworkParams<T> {
    pub fn new(entries: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (name, _) in &entries {
            if !seen.insert(name.as_str()) {
                return Err(Error::config("params", format!("duplicate parameter `{name}`")));
            }
        }
        Ok(Self { entries })
    }

    /// He-normal weights (`std = sqrt(gain / fan_in)`), zero biases.
    pub(crate) fn init(layers: &[LayerDesc], seed: u64, gain: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::with_capacity(layers.len() * 2);
        for l in layers {
            let std = (gain / l.fan_in() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            let w = Tensor::from_fn(l.weight_shape(), |_| T::of(normal.sample(&mut rng)));
            entries.push((format!("{}.weight", l.name), w));
            entries.push((format!("{}.bias", l.name), Tensor::zeros(vec![l.cout])));
        }
        Self { entries }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn into_entries(self) -> Vec<(String, Tensor<T>)> {
        self.entries
    }

    /// Raw little-endian bytes of every tensor, in order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.total_elements() * T::BYTES);
        for (_, t) in &self.entries {
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    /// Adds every tensor to `g` as a leaf.
    pub fn bind(&self, g: &mut Graph<T>, tracked: bool) -> BoundParams {
        let vars = self
            .entries
            .iter()
            .map(|(n, t)| (n.clone(), g.leaf(t.clone(), tracked)))
            .collect();
        BoundParams { vars }
    }

    /// Checks names and shapes against a reference parameter set, naming the
    /// first layer that diverges.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        for (i, (name, t)) in self.entries.iter().enumerate() {
            match other.entries.get(i) {
                Some((n, o)) if n == name && o.shape() == t.shape() => {}
                Some((n, o)) => {
                    return Err(Error::CheckpointMismatch(format!(
                        "layer `{name}` expects {:?}, checkpoint has `{n}` {:?}",
                        t.shape(),
                        o.shape()
                    )))
                }
                None => {
                    return Err(Error::CheckpointMismatch(format!(
                        "layer `{name}` missing from checkpoint"
                    )))
                }
            }
        }
        if let Some((n, _)) = other.entries.get(self.entries.len()) {
            return Err(Error::CheckpointMismatch(format!(
                "checkpoint has unexpected layer `{n}`"
            )));
        }
        Ok(())
    }
}

/// Graph handles for a [`NetworkParams`], in the same order.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<(String, Var)>,
}

impl BoundParams {
    /// Binds names to vars created elsewhere, e.g. leaves of a test graph.
    pub fn new(vars: Vec<(String, Var)>) -> Self {
        Self { vars }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .map(|&(_, v)| v)
            .ok_or_else(|| Error::CheckpointMismatch(format!("missing parameter `{name}`")))
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.vars.iter().map(|&(_, v)| v)
    }

    /// Gradient tensors in parameter order; absent gradients are zero.
    pub fn collect_grads<T: Real>(
        &self,
        params: &NetworkParams<T>,
        grads: &mut GradientMap<T>,
    ) -> Vec<Tensor<T>> {
        self.vars
            .iter()
            .zip(params.iter())
            .map(|((_, v), (_, t))| {
                grads
                    .take(*v)
                    .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
            })
            .collect()
    }

    pub fn lookup(&self) -> HashMap<&str, Var> {
        self.vars.iter().map(|(n, v)| (n.as_str(), *v)).collect()
    }
}
