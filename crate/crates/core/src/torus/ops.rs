//! Central-difference operators with periodic wrap.

use serde::{Deserialize, Serialize};

use super::{DriftField, Field, GridSpec};
use crate::error::{MfgError, Result};
use crate::sparse::SparseOperator;

/// Discrete Laplacian stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stencil {
    /// `(v[i+1] - 2 v[i] + v[i-1]) / h^2` per axis.
    #[default]
    Compact,
    /// Two composed central differences, `(v[i+2] - 2 v[i] + v[i-2]) / (4 h^2)` per axis.
    Composed,
}

impl Stencil {
    pub(crate) fn taps(self, h: f64) -> [(isize, f64); 3] {
        match self {
            Stencil::Compact => {
                let c = 1.0 / (h * h);
                [(-1, c), (0, -2.0 * c), (1, c)]
            }
            Stencil::Composed => {
                let c = 1.0 / (4.0 * h * h);
                [(-2, c), (0, -2.0 * c), (2, c)]
            }
        }
    }
}

pub(crate) fn central_taps(h: f64) -> [(isize, f64); 2] {
    let c = 0.5 / h;
    [(-1, -c), (1, c)]
}

/// `out += sum_taps c * v[shift(node, axis, offset)]`.
pub(crate) fn add_axis_stencil(
    grid: &GridSpec,
    axis: usize,
    taps: &[(isize, f64)],
    v: &[f64],
    out: &mut [f64],
) {
    let n = grid.n_space();
    let ni = n as isize;
    let rows = grid.n_rows();
    if axis == 0 {
        for j in 0..rows {
            let base = j * n;
            let row = &v[base..base + n];
            let orow = &mut out[base..base + n];
            for (i, o) in orow.iter_mut().enumerate() {
                let mut s = 0.0;
                for &(off, c) in taps {
                    s += c * row[(i as isize + off).rem_euclid(ni) as usize];
                }
                *o += s;
            }
        }
    } else {
        for j in 0..rows {
            let orow = &mut out[j * n..(j + 1) * n];
            for &(off, c) in taps {
                let jj = (j as isize + off).rem_euclid(ni) as usize;
                let src = &v[jj * n..(jj + 1) * n];
                for (o, s) in orow.iter_mut().zip(src) {
                    *o += c * s;
                }
            }
        }
    }
}

fn check_len(grid: &GridSpec, v: &[f64]) -> Result<()> {
    if v.len() != grid.n_nodes() {
        return Err(MfgError::Dimension(format!(
            "field of length {} on a grid with {} nodes",
            v.len(),
            grid.n_nodes()
        )));
    }
    Ok(())
}

/// Central difference along `axis` (0 or 1).
pub fn derivative(grid: &GridSpec, v: &[f64], axis: usize) -> Result<Field> {
    check_len(grid, v)?;
    if axis >= grid.dim() {
        return Err(MfgError::Dimension(format!(
            "derivative along axis {axis} on a {}D grid",
            grid.dim()
        )));
    }
    let mut out = Field::zeros(v.len());
    add_axis_stencil(grid, axis, &central_taps(grid.h()), v, &mut out);
    Ok(out)
}

pub fn d1(grid: &GridSpec, v: &[f64]) -> Result<Field> {
    derivative(grid, v, 0)
}

pub fn d2(grid: &GridSpec, v: &[f64]) -> Result<Field> {
    derivative(grid, v, 1)
}

/// Discrete gradient `(D1 v, D2 v)`.
pub fn grad_h(grid: &GridSpec, v: &[f64]) -> Result<DriftField> {
    let comps = (0..grid.dim())
        .map(|a| derivative(grid, v, a))
        .collect::<Result<Vec<_>>>()?;
    DriftField::from_components(comps)
}

/// Discrete divergence of the product `v p`: `sum_a D_a (v * p_a)`.
pub fn div_h(grid: &GridSpec, v: &[f64], p: &DriftField) -> Result<Field> {
    check_len(grid, v)?;
    if p.dim() != grid.dim() || p.n_nodes() != v.len() {
        return Err(MfgError::Dimension(format!(
            "drift with {} components of length {} on a {}D grid with {} nodes",
            p.dim(),
            p.n_nodes(),
            grid.dim(),
            grid.n_nodes()
        )));
    }
    let taps = central_taps(grid.h());
    let mut out = Field::zeros(v.len());
    let mut prod = vec![0.0; v.len()];
    for a in 0..grid.dim() {
        for ((w, x), y) in prod.iter_mut().zip(v).zip(p.component(a).iter()) {
            *w = x * y;
        }
        add_axis_stencil(grid, a, &taps, &prod, &mut out);
    }
    Ok(out)
}

/// Discrete Laplacian with the chosen stencil.
pub fn laplace_h(grid: &GridSpec, v: &[f64], stencil: Stencil) -> Result<Field> {
    check_len(grid, v)?;
    let taps = stencil.taps(grid.h());
    let mut out = Field::zeros(v.len());
    for a in 0..grid.dim() {
        add_axis_stencil(grid, a, &taps, v, &mut out);
    }
    Ok(out)
}

fn stencil_matrix(grid: &GridSpec, per_axis: &[(usize, &[(isize, f64)])]) -> SparseOperator {
    let n = grid.n_nodes();
    let mut trip = Vec::new();
    for r in 0..n {
        for &(axis, taps) in per_axis {
            for &(off, c) in taps {
                trip.push((r, grid.shifted(r, axis, off), c));
            }
        }
    }
    SparseOperator::from_triplets(n, trip)
}

/// Assembled matrix of the central difference along `axis`.
pub fn derivative_matrix(grid: &GridSpec, axis: usize) -> Result<SparseOperator> {
    if axis >= grid.dim() {
        return Err(MfgError::Dimension(format!(
            "derivative along axis {axis} on a {}D grid",
            grid.dim()
        )));
    }
    let taps = central_taps(grid.h());
    Ok(stencil_matrix(grid, &[(axis, &taps)]))
}

pub fn laplace_matrix(grid: &GridSpec, stencil: Stencil) -> SparseOperator {
    let taps = stencil.taps(grid.h());
    let per_axis: Vec<(usize, &[(isize, f64)])> = (0..grid.dim()).map(|a| (a, &taps[..])).collect();
    stencil_matrix(grid, &per_axis)
}
