use std::ops::Deref;

use super::Tensor;
use crate::error::{Error, Result};

/// Named trainable tensors with a fixed iteration order.
///
/// Two sets built from the same model definition list their parameters in the
/// same order, so flattened vectors from different replicas line up entry for
/// entry.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParameterSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a parameter and returns its index.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(value);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn get(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.tensors[index]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total scalar count across all parameters.
    pub fn total_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// All scalar values, concatenated in parameter order.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flat_map(|t| t.data().iter().copied())
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.tensors.iter_mut().flat_map(|t| t.data_mut().iter_mut())
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values().collect()
    }

    /// Overwrites every value from a flat vector laid out like [`flatten`](Self::flatten).
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.total_count() {
            return Err(Error::InvalidArgument(format!(
                "flat vector has {} values, parameter set holds {}",
                flat.len(),
                self.total_count()
            )));
        }
        for (dst, &src) in self.values_mut().zip(flat) {
            *dst = src;
        }
        Ok(())
    }
}

/// One gradient vector covering every parameter, in [`ParameterSet`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatGradient(Vec<f64>);

impl FlatGradient {
    pub fn new(values: Vec<f64>) -> Self {
        FlatGradient(values)
    }

    pub fn zeros(len: usize) -> Self {
        FlatGradient(vec![0.0; len])
    }

    /// Concatenates per-parameter gradients in order.
    pub fn from_tensors(grads: &[Tensor]) -> Self {
        FlatGradient(grads.iter().flat_map(|g| g.data().iter().copied()).collect())
    }

    /// Splits back into tensors shaped like `template`.
    pub fn unflatten(&self, template: &ParameterSet) -> Result<Vec<Tensor>> {
        if self.0.len() != template.total_count() {
            return Err(Error::InvalidArgument(format!(
                "gradient has {} values, parameter set holds {}",
                self.0.len(),
                template.total_count()
            )));
        }
        let mut offset = 0;
        template
            .tensors()
            .iter()
            .map(|t| {
                let chunk = self.0[offset..offset + t.len()].to_vec();
                offset += t.len();
                Tensor::new(t.shape().to_vec(), chunk)
            })
            .collect()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &FlatGradient) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> FlatGradient {
        FlatGradient(self.0.iter().map(|v| v * c).collect())
    }

    /// `self += c * other`
    pub fn add_scaled(&mut self, c: f64, other: &FlatGradient) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
    }
}

impl Deref for FlatGradient {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_params() -> ParameterSet {
        let mut p = ParameterSet::new();
        p.push("a", Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap());
        p.push("b", Tensor::new(vec![2, 2], vec![4.0, 5.0, 6.0, 7.0]).unwrap());
        p
    }

    #[test]
    fn flatten_length_is_additive() {
        let p = two_params();
        assert_eq!(p.total_count(), 7);
        assert_eq!(FlatGradient::from_tensors(p.tensors()).len(), 7);
    }

    #[test]
    fn zero_gradients_flatten_to_zero_vector() {
        let p = two_params();
        let zeros: Vec<Tensor> = p.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let flat = FlatGradient::from_tensors(&zeros);
        assert!(flat.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unflatten_rejects_wrong_length() {
        let p = two_params();
        assert!(FlatGradient::zeros(6).unflatten(&p).is_err());
    }

    proptest! {
        #[test]
        fn flatten_unflatten_is_identity(values in proptest::collection::vec(-1e6f64..1e6, 7)) {
            let p = two_params();
            let flat = FlatGradient::new(values.clone());
            let tensors = flat.unflatten(&p).unwrap();
            prop_assert_eq!(tensors[0].shape(), p.get(0).shape());
            prop_assert_eq!(FlatGradient::from_tensors(&tensors).into_inner(), values);
        }
    }
}
