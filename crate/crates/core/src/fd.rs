//! Implicit finite-difference linearized Newton step.
//!
//! Backward: `D^k U^k = U^{k+1} + dt (W^{k+1} M^{k+1} + B^{k+1})`.
//! Forward: `(D^k)^T M^{k+1} = M^k + dt (Z^k U^k + C^{k+1})`, with
//! `D^k = I - dt nu L_h + dt sum_a Q_a D_a`.

use serde::{Deserialize, Serialize};

use crate::banded::BandedLu;
use crate::error::{MfgError, Result};
use crate::exec::Execution;
use crate::problem::MfgProblem;
use crate::sl::{fp_tensor, linearize, ZForm, ZOperator};
use crate::sparse::SparseOperator;
use crate::torus::{grad_h, laplace_matrix, DriftField, GridSpec, SpaceTimeField, Stencil};

/// Difference used for the drift term `Q_a D_a`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftStencil {
    #[default]
    Central,
    /// First-order upwind: backward difference where `q > 0`, forward where `q < 0`.
    Upwind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FdOptions {
    pub stencil: Stencil,
    pub drift_stencil: DriftStencil,
    pub z_form: ZForm,
}

/// `D = I - dt nu L_h + dt sum_a diag(q_a) D_a`.
pub fn build_marching_matrix(
    q: &DriftField,
    grid: &GridSpec,
    nu: f64,
    stencil: Stencil,
    drift_stencil: DriftStencil,
) -> SparseOperator {
    let n = grid.n_nodes();
    let dt = grid.dt();
    let h = grid.h();
    let mut trips = Vec::with_capacity(n * (1 + 4 * grid.dim()));
    for r in 0..n {
        trips.push((r, r, 1.0));
    }
    let lap = laplace_matrix(grid, stencil);
    for r in 0..n {
        for (c, v) in lap.row(r) {
            trips.push((r, c, -dt * nu * v));
        }
    }
    for a in 0..grid.dim() {
        let qa = q.component(a);
        for r in 0..n {
            let v = dt * qa[r];
            let (next, prev) = (grid.shifted(r, a, 1), grid.shifted(r, a, -1));
            match drift_stencil {
                DriftStencil::Central => {
                    trips.push((r, next, 0.5 * v / h));
                    trips.push((r, prev, -0.5 * v / h));
                }
                DriftStencil::Upwind if v > 0.0 => {
                    trips.push((r, r, v / h));
                    trips.push((r, prev, -v / h));
                }
                DriftStencil::Upwind => {
                    trips.push((r, next, v / h));
                    trips.push((r, r, -v / h));
                }
            }
        }
    }
    SparseOperator::from_triplets(n, trips)
}

/// Central-difference gradient of every level.
pub fn fd_drift(u: &SpaceTimeField, grid: &GridSpec) -> Result<Vec<DriftField>> {
    u.levels().map(|l| grad_h(grid, l)).collect()
}

#[derive(Debug, Clone)]
pub struct FdSystem {
    pub(crate) grid: GridSpec,
    /// `D^k`, `k = 0..N_t`, with cached factorizations.
    pub(crate) marching: Vec<SparseOperator>,
    pub(crate) lu: Vec<BandedLu>,
    /// `W^{k+1}`, `B^{k+1}` stored at index `k`.
    pub(crate) w: Vec<Vec<f64>>,
    pub(crate) b: Vec<Vec<f64>>,
    /// `Z^k` and `C^{k+1}` stored at index `k`.
    pub(crate) z: Vec<ZOperator>,
    pub(crate) c: Vec<Vec<f64>>,
    pub(crate) terminal: Vec<f64>,
    pub(crate) initial: Vec<f64>,
}

impl FdSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        problem: &MfgProblem,
        grid: &GridSpec,
        u_prev: &SpaceTimeField,
        m_prev: &SpaceTimeField,
        terminal: &[f64],
        initial: &[f64],
        opts: &FdOptions,
        exec: Execution,
    ) -> Result<Self> {
        if !u_prev.is_finite() || !m_prev.is_finite() {
            return Err(MfgError::Domain("previous iterate is not finite".into()));
        }
        let nt = grid.n_time();
        let levels = exec.try_map(nt, |k| -> Result<_> {
            let p = grad_h(grid, u_prev.level(k))?;
            let m_next = m_prev.level(k + 1);
            let lin = linearize(problem, grid, m_next, &p);
            let d = build_marching_matrix(&lin.velocity, grid, problem.nu, opts.stencil, opts.drift_stencil);
            let lu = BandedLu::factor(&d)?;
            let z = ZOperator::new(grid, fp_tensor(problem, grid, m_next, &p), opts.z_form);
            let mut c = vec![0.0; grid.n_nodes()];
            z.apply(u_prev.level(k), &mut c);
            c.iter_mut().for_each(|v| *v = -*v);
            Ok((d, lu, lin.w, lin.b, z, c))
        })?;
        let mut sys = FdSystem {
            grid: *grid,
            marching: Vec::with_capacity(nt),
            lu: Vec::with_capacity(nt),
            w: Vec::with_capacity(nt),
            b: Vec::with_capacity(nt),
            z: Vec::with_capacity(nt),
            c: Vec::with_capacity(nt),
            terminal: terminal.to_vec(),
            initial: initial.to_vec(),
        };
        for (d, lu, w, b, z, c) in levels {
            sys.marching.push(d);
            sys.lu.push(lu);
            sys.w.push(w);
            sys.b.push(b);
            sys.z.push(z);
            sys.c.push(c);
        }
        Ok(sys)
    }

    pub fn marching_matrix(&self, k: usize) -> &SparseOperator {
        &self.marching[k]
    }

    /// Drops the coupling blocks `W` and `Z`, leaving two independent marches.
    pub fn decoupled(mut self) -> Self {
        self.w.iter_mut().for_each(|w| w.iter_mut().for_each(|v| *v = 0.0));
        let grid = self.grid;
        self.z.iter_mut().for_each(|z| *z = ZOperator::zero(&grid));
        self
    }

    /// Residuals of the HJB row `k` and the FP row `k + 1`, divided by `dt`.
    pub(crate) fn level_residual(&self, u: &SpaceTimeField, m: &SpaceTimeField, k: usize) -> (Vec<f64>, Vec<f64>) {
        let dt = self.grid.dt();
        let n = self.grid.n_nodes();
        let d = &self.marching[k];
        let (mut hjb, mut fp, mut zu) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        d.apply(u.level(k), &mut hjb);
        d.apply_transpose(m.level(k + 1), &mut fp);
        self.z[k].apply(u.level(k), &mut zu);
        let (uk1, mk, mk1) = (u.level(k + 1), m.level(k), m.level(k + 1));
        for r in 0..n {
            hjb[r] = (hjb[r] - uk1[r]) / dt - self.w[k][r] * mk1[r] - self.b[k][r];
            fp[r] = (fp[r] - mk[r]) / dt - zu[r] - self.c[k][r];
        }
        (hjb, fp)
    }

    pub(crate) fn backward(&self, m: &SpaceTimeField, u: &mut SpaceTimeField) {
        let nt = self.grid.n_time();
        let dt = self.grid.dt();
        u.level_mut(nt).copy_from_slice(&self.terminal);
        let mut rhs = self.terminal.clone();
        for k in (0..nt).rev() {
            let mk = m.level(k + 1);
            for r in 0..rhs.len() {
                rhs[r] += dt * (self.w[k][r] * mk[r] + self.b[k][r]);
            }
            self.lu[k].solve(&mut rhs);
            u.level_mut(k).copy_from_slice(&rhs);
        }
    }

    pub(crate) fn forward(&self, u: &SpaceTimeField, m: &mut SpaceTimeField) {
        let nt = self.grid.n_time();
        let dt = self.grid.dt();
        m.level_mut(0).copy_from_slice(&self.initial);
        let mut rhs = self.initial.clone();
        let mut zu = vec![0.0; rhs.len()];
        for k in 0..nt {
            self.z[k].apply(u.level(k), &mut zu);
            for r in 0..rhs.len() {
                rhs[r] += dt * (zu[r] + self.c[k][r]);
            }
            self.lu[k].solve_transpose(&mut rhs);
            m.level_mut(k + 1).copy_from_slice(&rhs);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::Field;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn marching_matrix_examples() {
        let g = GridSpec::new(1, 4, 10, 1.0).unwrap();
        let q = DriftField::zeros(1, 4);
        let d = build_marching_matrix(&q, &g, 0.0, Stencil::Compact, DriftStencil::Central);
        assert!(d.max_abs_diff(&SparseOperator::identity(4)) < 1e-15);
        let d = build_marching_matrix(&q, &g, 1.0, Stencil::Compact, DriftStencil::Central);
        assert!((d.get(0, 0) - 4.2).abs() < 1e-12);
        assert!((d.get(0, 1) + 1.6).abs() < 1e-12 && (d.get(0, 3) + 1.6).abs() < 1e-12);
        assert_eq!(d.get(0, 2), 0.0);
    }

    #[test]
    fn marching_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dim in [1, 2] {
            for ds in [DriftStencil::Central, DriftStencil::Upwind] {
                let g = GridSpec::new(dim, 8, 5, 1.0).unwrap();
                let n = g.n_nodes();
                let comps = (0..dim)
                    .map(|_| Field::from((0..n).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<_>>()))
                    .collect();
                let q = DriftField::from_components(comps).unwrap();
                let d = build_marching_matrix(&q, &g, 0.3, Stencil::Compact, ds);
                assert!(d.row_sums().iter().all(|s| (s - 1.0).abs() < 1e-12));
            }
        }
    }

    #[test]
    fn upwind_is_an_m_matrix() {
        let g = GridSpec::new(1, 16, 4, 1.0).unwrap();
        let q = DriftField::from_components(vec![Field::from((0..16).map(|i| if i % 2 == 0 { 30.0 } else { -30.0 }).collect::<Vec<_>>())]).unwrap();
        let d = build_marching_matrix(&q, &g, 1e-3, Stencil::Compact, DriftStencil::Upwind);
        for r in 0..16 {
            for (c, v) in d.row(r) {
                assert!(if r == c { v > 0.0 } else { v <= 0.0 });
            }
        }
    }

    #[test]
    fn drift_of_constant_is_zero() {
        let g = GridSpec::new(2, 5, 3, 1.0).unwrap();
        let u = SpaceTimeField::broadcast(&[2.0; 25], 4);
        let q = fd_drift(&u, &g).unwrap();
        assert_eq!(q.len(), 4);
        assert!(q.iter().all(|d| d.components().iter().all(|c| c.iter().all(|&v| v == 0.0))));
    }
}
