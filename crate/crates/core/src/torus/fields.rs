use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use super::{GridSpec, Point};
use crate::error::{MfgError, Result};

/// Scalar grid function at one time level, stored in flat node order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Field(Vec<f64>);

impl Field {
    pub fn zeros(n_nodes: usize) -> Self {
        Field(vec![0.0; n_nodes])
    }

    pub fn constant(n_nodes: usize, value: f64) -> Self {
        Field(vec![value; n_nodes])
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(Point) -> f64) -> Self {
        Field((0..grid.n_nodes()).map(|i| f(grid.node(i))).collect())
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.0)
    }
}

impl From<Vec<f64>> for Field {
    fn from(v: Vec<f64>) -> Self {
        Field(v)
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &x| if x.is_nan() { f64::NAN } else { a.max(x.abs()) })
}

/// Scalar grid function on every time level `0..=n_time`, stored level-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    n_nodes: usize,
    values: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(n_nodes: usize, n_levels: usize) -> Self {
        SpaceTimeField {
            n_nodes,
            values: vec![0.0; n_nodes * n_levels],
        }
    }

    /// Copies `level` onto every one of `n_levels` levels.
    pub fn broadcast(level: &[f64], n_levels: usize) -> Self {
        let mut values = Vec::with_capacity(level.len() * n_levels);
        for _ in 0..n_levels {
            values.extend_from_slice(level);
        }
        SpaceTimeField {
            n_nodes: level.len(),
            values,
        }
    }

    pub fn from_levels(levels: &[Field]) -> Result<Self> {
        let n_nodes = levels.first().map(|l| l.len()).unwrap_or(0);
        if levels.iter().any(|l| l.len() != n_nodes) {
            return Err(MfgError::Dimension("levels of unequal length".into()));
        }
        let mut values = Vec::with_capacity(n_nodes * levels.len());
        for l in levels {
            values.extend_from_slice(l);
        }
        Ok(SpaceTimeField { n_nodes, values })
    }

    pub fn from_flat(n_nodes: usize, values: Vec<f64>) -> Result<Self> {
        if n_nodes == 0 || !values.len().is_multiple_of(n_nodes) {
            return Err(MfgError::Dimension(format!(
                "{} values do not split into levels of {n_nodes} nodes",
                values.len()
            )));
        }
        Ok(SpaceTimeField { n_nodes, values })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_levels(&self) -> usize {
        self.values.len().checked_div(self.n_nodes).unwrap_or(0)
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.values[k * self.n_nodes..(k + 1) * self.n_nodes]
    }

    pub fn level_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.values[k * self.n_nodes..(k + 1) * self.n_nodes]
    }

    pub fn levels(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n_nodes.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, k: usize, node: usize) -> f64 {
        self.values[k * self.n_nodes + node]
    }

    /// `max |self - other|` over all levels and nodes.
    pub fn sup_distance(&self, other: &SpaceTimeField) -> f64 {
        debug_assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0f64, |a, (x, y)| {
                let d = (x - y).abs();
                if d.is_nan() {
                    f64::NAN
                } else {
                    a.max(d)
                }
            })
    }

    pub fn sup_norm(&self) -> f64 {
        sup_norm(&self.values)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self + alpha * (other - self)`.
    pub fn lerp(&self, other: &SpaceTimeField, alpha: f64) -> SpaceTimeField {
        SpaceTimeField {
            n_nodes: self.n_nodes,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + alpha * (b - a))
                .collect(),
        }
    }
}

/// Vector grid function at one time level: one component per space dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftField {
    components: Vec<Field>,
}

impl DriftField {
    pub fn zeros(dim: usize, n_nodes: usize) -> Self {
        DriftField {
            components: (0..dim).map(|_| Field::zeros(n_nodes)).collect(),
        }
    }

    pub fn from_components(components: Vec<Field>) -> Result<Self> {
        if components.is_empty() || components.len() > 2 {
            return Err(MfgError::Dimension(format!(
                "drift with {} components",
                components.len()
            )));
        }
        if components.iter().any(|c| c.len() != components[0].len()) {
            return Err(MfgError::Dimension("drift components of unequal length".into()));
        }
        Ok(DriftField { components })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.components[0].len()
    }

    pub fn component(&self, axis: usize) -> &Field {
        &self.components[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut Field {
        &mut self.components[axis]
    }

    pub fn components(&self) -> &[Field] {
        &self.components
    }

    /// Vector at a node; the unused second component is zero in 1D.
    pub fn at(&self, node: usize) -> [f64; 2] {
        let mut v = [0.0; 2];
        for (a, c) in self.components.iter().enumerate() {
            v[a] = c[node];
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_time_layout() {
        let a = Field::from(vec![1.0, 2.0, 3.0]);
        let b = Field::from(vec![4.0, 5.0, 6.0]);
        let st = SpaceTimeField::from_levels(&[a.clone(), b]).unwrap();
        assert_eq!(st.n_levels(), 2);
        assert_eq!(st.level(1), &[4.0, 5.0, 6.0]);
        assert_eq!(st.get(1, 2), 6.0);
        let bc = SpaceTimeField::broadcast(&a, 3);
        assert_eq!(bc.n_levels(), 3);
        assert_eq!(bc.level(2), &a[..]);
        assert_eq!(st.sup_distance(&SpaceTimeField::broadcast(&a, 2)), 3.0);
        assert!(SpaceTimeField::from_flat(3, vec![0.0; 7]).is_err());
        let mid = bc.lerp(&SpaceTimeField::zeros(3, 3), 0.5);
        assert_eq!(mid.level(0), &[0.5, 1.0, 1.5]);
    }

    #[test]
    fn drift_components() {
        let d = DriftField::from_components(vec![Field::constant(4, 1.0), Field::constant(4, 2.0)])
            .unwrap();
        assert_eq!(d.at(3), [1.0, 2.0]);
        assert!(DriftField::from_components(vec![Field::zeros(3), Field::zeros(4)]).is_err());
    }
}
