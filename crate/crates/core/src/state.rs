//! Sample state carried along a trajectory.
//!
//! A state is either a single flat vector or a node/edge pair `(X, A)`. Edge
//! parts are stored row-major and flattened; any symmetry is the business of
//! whoever generates the noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub node: Vec<f64>,
    pub edge: Option<Vec<f64>>,
}

impl SystemState {
    pub fn single(node: Vec<f64>) -> Self {
        Self { node, edge: None }
    }

    pub fn graph(node: Vec<f64>, edge: Vec<f64>) -> Self {
        Self {
            node,
            edge: Some(edge),
        }
    }

    /// A state of the same shape with every entry zero.
    pub fn zeros_like(other: &SystemState) -> Self {
        Self {
            node: vec![0.0; other.node.len()],
            edge: other.edge.as_ref().map(|e| vec![0.0; e.len()]),
        }
    }

    /// Number of components: 1 for a flat state, 2 for a node/edge pair.
    pub fn components(&self) -> u64 {
        if self.edge.is_some() {
            2
        } else {
            1
        }
    }

    /// Total number of scalar entries over all components.
    pub fn dim(&self) -> usize {
        self.node.len() + self.edge.as_ref().map_or(0, Vec::len)
    }

    pub fn edge_slice(&self) -> &[f64] {
        self.edge.as_deref().unwrap_or(&[])
    }

    pub fn is_finite(&self) -> bool {
        self.node.iter().chain(self.edge_slice()).all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &SystemState) -> bool {
        self.node.len() == other.node.len()
            && match (&self.edge, &other.edge) {
                (None, None) => true,
                (Some(a), Some(b)) => a.len() == b.len(),
                _ => false,
            }
    }

    pub(crate) fn check_shape(&self, other: &SystemState, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: expected node {} / edge {:?}, got node {} / edge {:?}",
                self.node.len(),
                self.edge.as_ref().map(Vec::len),
                other.node.len(),
                other.edge.as_ref().map(Vec::len),
            )))
        }
    }

    /// Euclidean norm over all components.
    pub fn norm(&self) -> f64 {
        self.node
            .iter()
            .chain(self.edge_slice())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Entry-wise combination `f(self_i, other_i)` over matching shapes.
    pub(crate) fn zip_with(
        &self,
        other: &SystemState,
        mut f: impl FnMut(f64, f64) -> f64,
    ) -> SystemState {
        let node = self.node.iter().zip(&other.node).map(|(&a, &b)| f(a, b)).collect();
        let edge = match (&self.edge, &other.edge) {
            (Some(a), Some(b)) => Some(a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()),
            _ => None,
        };
        SystemState { node, edge }
    }
}

/// Squared Euclidean distance between two equally sized slices.
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_queries() {
        let s = SystemState::graph(vec![1.0, 2.0], vec![0.0; 4]);
        assert_eq!(s.components(), 2);
        assert_eq!(s.dim(), 6);
        assert!(s.same_shape(&SystemState::zeros_like(&s)));
        assert!(!s.same_shape(&SystemState::single(vec![1.0, 2.0])));
        assert!(s.check_shape(&SystemState::single(vec![0.0; 2]), "x").is_err());
    }

    #[test]
    fn norm_and_finiteness() {
        let s = SystemState::graph(vec![3.0], vec![4.0]);
        assert_eq!(s.norm(), 5.0);
        assert!(s.is_finite());
        let bad = SystemState::single(vec![f64::NAN]);
        assert!(!bad.is_finite());
    }
}
