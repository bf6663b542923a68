//! The drift-field contract and NFE instrumentation.

use crate::error::{Error, Result};
use crate::state::SystemState;

/// A deterministic drift `f(state, t)` returning a vector of the state's shape.
pub trait DriftField: Send + Sync {
    fn eval(&self, state: &SystemState, t: f64) -> Result<SystemState>;
}

impl<F> DriftField for F
where
    F: Fn(&SystemState, f64) -> Result<SystemState> + Send + Sync,
{
    fn eval(&self, state: &SystemState, t: f64) -> Result<SystemState> {
        self(state, t)
    }
}

/// Wraps a field and counts evaluations per component.
///
/// A call on a node/edge pair counts as two evaluations, matching the
/// separate node and edge networks of a graph model.
pub struct CountedDrift<'a> {
    field: &'a dyn DriftField,
    evals: u64,
}

impl<'a> CountedDrift<'a> {
    pub fn new(field: &'a dyn DriftField) -> Self {
        Self { field, evals: 0 }
    }

    pub fn eval(&mut self, state: &SystemState, t: f64) -> Result<SystemState> {
        let out = self.field.eval(state, t)?;
        state.check_shape(&out, "drift output")?;
        if !out.is_finite() {
            return Err(Error::NonFinite { step: None });
        }
        self.evals += state.components();
        Ok(out)
    }

    pub fn eval_count(&self) -> u64 {
        self.evals
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(s: &SystemState, _t: f64) -> Result<SystemState> {
        Ok(SystemState {
            node: s.node.iter().map(|v| -v).collect(),
            edge: s.edge.as_ref().map(|e| e.iter().map(|v| -v).collect()),
        })
    }

    #[test]
    fn counts_per_component() {
        let mut f = CountedDrift::new(&decay);
        f.eval(&SystemState::single(vec![1.0]), 0.0).unwrap();
        assert_eq!(f.eval_count(), 1);
        f.eval(&SystemState::graph(vec![1.0], vec![2.0]), 0.0).unwrap();
        assert_eq!(f.eval_count(), 3);
    }

    #[test]
    fn deterministic() {
        let mut f = CountedDrift::new(&decay);
        let s = SystemState::graph(vec![0.3, -1.0], vec![2.0; 4]);
        assert_eq!(f.eval(&s, 0.4).unwrap(), f.eval(&s, 0.4).unwrap());
    }

    #[test]
    fn wrong_shape_rejected() {
        let bad = |_: &SystemState, _: f64| Ok(SystemState::single(vec![0.0; 3]));
        let mut f = CountedDrift::new(&bad);
        assert!(matches!(
            f.eval(&SystemState::single(vec![0.0]), 0.0),
            Err(Error::Shape(_))
        ));
    }
}
