//! Reusable differentiable blocks and parameter bookkeeping.

pub mod attention;
pub mod conv;
pub mod lam;
pub mod lgconv;
pub mod linear;
pub mod norm;

pub use attention::TransformerBlock;
pub use conv::{BatchNorm2d, Conv2d, ConvBnRelu, ConvKind};
pub use lam::LossAttention;
pub use lgconv::LocalGlobalConv;
pub use linear::Linear;
pub use norm::LayerNorm;

use crate::tensor::{checksum, Scalar, Tensor};

/// Trainable parameter vs. non-trainable state (BN running stats).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Param,
    Buffer,
}

/// Named, ordered collection of a model's tensors. Collection order is
/// construction order and is stable, which checkpointing and the
/// optimizer both rely on.
#[derive(Clone)]
pub struct ParamSet<T> {
    entries: Vec<(String, Tensor<T>, VarKind)>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: &Tensor<T>, kind: VarKind) {
        let name = name.into();
        debug_assert!(
            !self.entries.iter().any(|(n, _, _)| *n == name),
            "duplicate parameter name {name}"
        );
        self.entries.push((name, t.clone(), kind));
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>, VarKind)> {
        self.entries.iter().map(|(n, t, k)| (n.as_str(), t, *k))
    }

    /// Trainable parameters only (kind Param and requires_grad).
    pub fn trainable(&self) -> Vec<(String, Tensor<T>)> {
        self.entries
            .iter()
            .filter(|(_, t, k)| *k == VarKind::Param && t.requires_grad())
            .map(|(n, t, _)| (n.clone(), t.clone()))
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _, _)| n == name).map(|(_, t, _)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries
            .iter()
            .filter(|(_, _, k)| *k == VarKind::Param)
            .map(|(_, t, _)| t.numel())
            .sum()
    }

    /// Mark every parameter as frozen (no gradient flow, skipped by the
    /// optimizer).
    pub fn freeze(&self) {
        for (_, t, k) in &self.entries {
            if *k == VarKind::Param {
                t.set_requires_grad(false);
            }
        }
    }

    pub fn mark_trainable(&self) {
        for (_, t, k) in &self.entries {
            if *k == VarKind::Param {
                t.set_requires_grad(true);
            }
        }
    }

    pub fn zero_grads(&self) {
        for (_, t, _) in &self.entries {
            t.zero_grad();
        }
    }

    /// Bit-level checksum over parameters only (running stats excluded;
    /// they move during ordinary forward passes).
    pub fn checksum_params(&self) -> u64 {
        let ts: Vec<Tensor<T>> = self
            .entries
            .iter()
            .filter(|(_, _, k)| *k == VarKind::Param)
            .map(|(_, t, _)| t.clone())
            .collect();
        checksum(&ts)
    }

    /// Checksum over parameters and buffers.
    pub fn checksum_all(&self) -> u64 {
        let ts: Vec<Tensor<T>> = self.entries.iter().map(|(_, t, _)| t.clone()).collect();
        checksum(&ts)
    }

    /// Copy every tensor's data from `src`, matching by position. The
    /// two sets must have identical names/shapes in identical order.
    pub fn copy_data_from(&self, src: &ParamSet<T>) {
        assert_eq!(self.entries.len(), src.entries.len(), "param set size mismatch");
        for ((dn, dt, _), (sn, st, _)) in self.entries.iter().zip(&src.entries) {
            let (dtail, stail) = (dn.rsplit('.').next(), sn.rsplit('.').next());
            assert_eq!(dtail, stail, "param order mismatch: {dn} vs {sn}");
            dt.copy_from(st);
        }
    }

    /// True if any trainable parameter currently holds a gradient.
    pub fn any_grad_present(&self) -> bool {
        self.entries.iter().any(|(_, t, _)| t.grad().is_some())
    }
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Anything that can enumerate its tensors under a name prefix.
pub trait Module<T: Scalar> {
    fn collect(&self, prefix: &str, out: &mut ParamSet<T>);

    fn param_set(&self, prefix: &str) -> ParamSet<T> {
        let mut ps = ParamSet::new();
        self.collect(prefix, &mut ps);
        ps
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
