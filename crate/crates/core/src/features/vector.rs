use serde::{Deserialize, Serialize};

use super::FeatureError;

/// Sparse real vector: sorted `(index, weight)` pairs, zeros omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    dimension: usize,
    entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn zeros(dimension: usize) -> Self {
        FeatureVector { dimension, entries: Vec::new() }
    }

    /// Builds from arbitrary pairs; duplicates are summed, zeros dropped.
    pub fn new(dimension: usize, mut entries: Vec<(usize, f64)>) -> Result<Self, FeatureError> {
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
        for (i, w) in entries {
            if i >= dimension {
                return Err(FeatureError::IndexOutOfRange { index: i, dimension });
            }
            if !w.is_finite() {
                return Err(FeatureError::NonFinite(i));
            }
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 += w,
                _ => merged.push((i, w)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        Ok(FeatureVector { dimension, entries: merged })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        FeatureVector {
            dimension: values.len(),
            entries: values.iter().enumerate().filter(|(_, w)| **w != 0.0).map(|(i, w)| (i, *w)).collect(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries.binary_search_by_key(&index, |e| e.0).map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        for &(i, w) in &self.entries {
            out[i] = w;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt()
    }

    /// Dot product with a dense vector of at least `dimension` entries.
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, w)| w * dense[i]).sum()
    }

    /// `self` followed by `other`, whose indices shift by `self.dimension`.
    pub fn concat(&self, other: &FeatureVector) -> FeatureVector {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().map(|&(i, w)| (i + self.dimension, w)));
        FeatureVector { dimension: self.dimension + other.dimension, entries }
    }

    pub(crate) fn scaled(mut self, factor: f64) -> Self {
        for e in &mut self.entries {
            e.1 *= factor;
        }
        self
    }
}
