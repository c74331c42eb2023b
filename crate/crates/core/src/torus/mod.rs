//! Uniform periodic grids on the unit torus in one or two dimensions.
//!
//! Nodes are flattened as `i + j * n_space` (the second index is always zero
//! in 1D). Time levels run from `0` to `n_time` inclusive.

mod fields;
mod interp;
pub(crate) mod ops;

pub use fields::{DriftField, Field, SpaceTimeField};
pub use interp::{interp, interp_weights, InterpWeights};
pub use ops::{
    d1, d2, derivative, derivative_matrix, div_h, grad_h, laplace_h, laplace_matrix, Stencil,
};

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};

/// A point of the torus. In 1D the second coordinate is unused and kept at zero.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    dim: usize,
    n_space: usize,
    h: f64,
    n_time: usize,
    dt: f64,
    horizon: f64,
}

impl GridSpec {
    pub fn new(dim: usize, n_space: usize, n_time: usize, horizon: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(MfgError::param("dim", format!("must be 1 or 2, got {dim}")));
        }
        if n_space < 3 {
            return Err(MfgError::param("n_space", format!("must be >= 3, got {n_space}")));
        }
        if n_time < 1 {
            return Err(MfgError::param("n_time", "must be >= 1"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(MfgError::param("horizon", format!("must be positive, got {horizon}")));
        }
        Ok(GridSpec {
            dim,
            n_space,
            h: 1.0 / n_space as f64,
            n_time,
            dt: horizon / n_time as f64,
            horizon,
        })
    }

    /// Builds a grid whose step is the closest to `dt` that divides the horizon
    /// evenly: `n_time = max(1, round(horizon / dt))`.
    pub fn with_time_step(dim: usize, n_space: usize, horizon: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(MfgError::param("dt", format!("must be positive, got {dt}")));
        }
        let n_time = ((horizon / dt).round() as usize).max(1);
        Self::new(dim, n_space, n_time, horizon)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_nodes(&self) -> usize {
        self.n_space.pow(self.dim as u32)
    }

    pub fn n_levels(&self) -> usize {
        self.n_time + 1
    }

    /// Number of rows along the second axis (1 in 1D).
    pub(crate) fn n_rows(&self) -> usize {
        if self.dim == 2 {
            self.n_space
        } else {
            1
        }
    }

    /// Quadrature weight of one node, `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn flat(&self, i: usize, j: usize) -> usize {
        i + j * self.n_space
    }

    pub fn indices(&self, flat: usize) -> (usize, usize) {
        (flat % self.n_space, flat / self.n_space)
    }

    pub fn node(&self, flat: usize) -> Point {
        let (i, j) = self.indices(flat);
        [i as f64 * self.h, j as f64 * self.h]
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Flat index of the node `offset` steps away along `axis`, wrapping periodically.
    pub fn shifted(&self, flat: usize, axis: usize, offset: isize) -> usize {
        let n = self.n_space as isize;
        let (i, j) = self.indices(flat);
        let (i, j) = (i as isize, j as isize);
        match axis {
            0 => self.flat((i + offset).rem_euclid(n) as usize, j as usize),
            _ => self.flat(i as usize, (j + offset).rem_euclid(n) as usize),
        }
    }

    /// Same spatial resolution and horizon, different number of time steps.
    pub fn with_n_time(&self, n_time: usize) -> Result<Self> {
        Self::new(self.dim, self.n_space, n_time, self.horizon)
    }
}

/// Periodic index operator: `((i + n) mod n, (j + n) mod n)` for any integers.
pub fn wrap_index(i: i64, j: i64, n: usize) -> (usize, usize) {
    let n = n as i64;
    (i.rem_euclid(n) as usize, j.rem_euclid(n) as usize)
}

/// Periodic projection `z - floor(z)` applied componentwise; every output
/// coordinate lies in `[0, 1)`.
pub fn periodic_project(z: &[f64]) -> Result<Point> {
    if z.is_empty() || z.len() > 2 {
        return Err(MfgError::Dimension(format!("point of dimension {}", z.len())));
    }
    let mut out = [0.0; 2];
    for (o, &c) in out.iter_mut().zip(z) {
        if !c.is_finite() {
            return Err(MfgError::Domain(format!("non-finite coordinate {c}")));
        }
        *o = project_coord(c);
    }
    Ok(out)
}

#[inline]
pub(crate) fn project_coord(c: f64) -> f64 {
    let r = c - c.floor();
    // c slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}
