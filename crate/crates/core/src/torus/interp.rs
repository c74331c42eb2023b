//! Piecewise-linear (tensor-product) interpolation on the periodic grid.

use super::{project_coord, GridSpec, Point};

/// At most `2^dim` `(flat node, weight)` pairs with positive weights summing to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpWeights {
    entries: [(usize, f64); 4],
    len: usize,
}

impl InterpWeights {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries[..self.len].iter().copied()
    }

    fn push(&mut self, node: usize, w: f64) {
        if w > 0.0 {
            self.entries[self.len] = (node, w);
            self.len += 1;
        }
    }
}

/// Cell containing a coordinate: left node index and fractional offset in `[0, 1)`.
/// Points on a grid line belong to the cell on their right.
#[inline]
pub(crate) fn locate(coord: f64, n: usize) -> (usize, f64) {
    let s = project_coord(coord) * n as f64;
    let base = s.floor();
    let frac = s - base;
    let i = base as usize;
    if i >= n {
        (0, 0.0)
    } else {
        (i, frac)
    }
}

/// Interpolation weights of the node values at `x` (projected onto the torus).
pub fn interp_weights(x: Point, grid: &GridSpec) -> InterpWeights {
    let n = grid.n_space();
    let mut w = InterpWeights {
        entries: [(0, 0.0); 4],
        len: 0,
    };
    let (i0, fx) = locate(x[0], n);
    let i1 = if i0 + 1 == n { 0 } else { i0 + 1 };
    if grid.dim() == 1 {
        w.push(i0, 1.0 - fx);
        w.push(i1, fx);
        return w;
    }
    let (j0, fy) = locate(x[1], n);
    let j1 = if j0 + 1 == n { 0 } else { j0 + 1 };
    w.push(grid.flat(i0, j0), (1.0 - fx) * (1.0 - fy));
    w.push(grid.flat(i1, j0), fx * (1.0 - fy));
    w.push(grid.flat(i0, j1), (1.0 - fx) * fy);
    w.push(grid.flat(i1, j1), fx * fy);
    w
}

/// Value at `x` of the piecewise-linear interpolant of the node values `v`.
pub fn interp(v: &[f64], x: Point, grid: &GridSpec) -> f64 {
    interp_weights(x, grid).iter().map(|(i, w)| w * v[i]).sum()
}
