//! Block Gauss-Seidel for the coupled forward-backward systems, and a dense
//! direct solve used as an oracle on small instances.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::fd::FdSystem;
use crate::sl::SlSystem;
use crate::sparse::SparseOperator;
use crate::torus::{GridSpec, SpaceTimeField};

/// Unknowns per field above which [`dense_solve`] refuses to assemble.
pub const DENSE_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Sl,
    Fd,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Sl => "sl",
            Scheme::Fd => "fd",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = MfgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sl" => Ok(Scheme::Sl),
            "fd" => Ok(Scheme::Fd),
            _ => Err(MfgError::config("scheme", format!("expected `sl` or `fd`, got `{s}`"))),
        }
    }
}

/// Linearized system of one Newton step, kept as per-level blocks.
#[derive(Debug, Clone)]
pub enum NewtonLinearSystem {
    Sl(SlSystem),
    Fd(FdSystem),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sweeps: usize,
    pub final_delta_u: f64,
    pub final_delta_m: f64,
    pub converged: bool,
}

/// How successive forward-backward sweeps are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceleration {
    /// `M <- M + w (G(M) - M)` with the fixed `relaxation`; `w = 1` is plain Gauss-Seidel.
    None,
    /// The relaxation factor is chosen each sweep to minimize the next residual.
    #[default]
    MinimalResidual,
    /// Restarted GMRES on `M - G(M) = 0`, one sweep per Krylov vector.
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    pub delta: f64,
    pub max_sweeps: usize,
    /// Fixed under-relaxation of the density update, used with `Acceleration::None`.
    pub relaxation: f64,
    pub acceleration: Acceleration,
    /// Krylov vectors kept between GMRES restarts.
    pub restart: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            delta: 1e-4,
            max_sweeps: 500,
            relaxation: 1.0,
            acceleration: Acceleration::MinimalResidual,
            restart: 20,
        }
    }
}

impl SweepOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) {
            return Err(MfgError::param("gs_delta", "must be positive"));
        }
        if self.max_sweeps == 0 {
            return Err(MfgError::param("max_sweeps", "must be at least 1"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(MfgError::param("relaxation", "must lie in (0, 1]"));
        }
        if self.restart == 0 {
            return Err(MfgError::param("restart", "must be at least 1"));
        }
        Ok(())
    }
}

impl NewtonLinearSystem {
    pub fn scheme(&self) -> Scheme {
        match self {
            NewtonLinearSystem::Sl(_) => Scheme::Sl,
            NewtonLinearSystem::Fd(_) => Scheme::Fd,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        match self {
            NewtonLinearSystem::Sl(s) => &s.grid,
            NewtonLinearSystem::Fd(s) => &s.grid,
        }
    }

    /// `U` on all levels for a given `M`.
    pub fn backward(&self, m: &SpaceTimeField, u: &mut SpaceTimeField) {
        match self {
            NewtonLinearSystem::Sl(s) => s.backward(m, u),
            NewtonLinearSystem::Fd(s) => s.backward(m, u),
        }
    }

    /// `M` on all levels for a given `U`.
    pub fn forward(&self, u: &SpaceTimeField, m: &mut SpaceTimeField) {
        match self {
            NewtonLinearSystem::Sl(s) => s.forward(u, m),
            NewtonLinearSystem::Fd(s) => s.forward(u, m),
        }
    }

    /// HJB residual of row `k` and FP residual of row `k + 1`, both divided by `dt`.
    pub fn level_residual(&self, u: &SpaceTimeField, m: &SpaceTimeField, k: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            NewtonLinearSystem::Sl(s) => s.level_residual(u, m, k),
            NewtonLinearSystem::Fd(s) => s.level_residual(u, m, k),
        }
    }

    fn terminal_initial(&self) -> (&[f64], &[f64]) {
        match self {
            NewtonLinearSystem::Sl(s) => (&s.terminal, &s.initial),
            NewtonLinearSystem::Fd(s) => (&s.terminal, &s.initial),
        }
    }

    /// Sup norm of the block-system residual at `(u, m)`.
    pub fn residual(&self, u: &SpaceTimeField, m: &SpaceTimeField) -> f64 {
        let mut x = u.as_slice().to_vec();
        x.extend_from_slice(m.as_slice());
        let (blocks, rhs) = self.blocks();
        let ax = blocks.apply_to(&x);
        ax.iter().zip(&rhs).map(|(a, r)| (a - r).abs()).fold(0.0, f64::max)
    }

    /// Sparse block rows of the full system in the unknown order
    /// `[U^0..U^{N_t}, M^0..M^{N_t}]`.
    fn blocks(&self) -> (BlockRows, Vec<f64>) {
        let grid = self.grid();
        let n = grid.n_nodes();
        let nt = grid.n_time();
        let dt = grid.dt();
        let ui = |k: usize| k * n;
        let mi = |k: usize| (nt + 1 + k) * n;
        let mut rows = BlockRows::new(2 * (nt + 1) * n);
        let mut rhs = vec![0.0; 2 * (nt + 1) * n];
        let (terminal, initial) = self.terminal_initial();
        let id = SparseOperator::identity(n);
        rows.add(ui(nt), ui(nt), &id, 1.0);
        rhs[ui(nt)..ui(nt) + n].copy_from_slice(terminal);
        rows.add(mi(0), mi(0), &id, 1.0);
        rhs[mi(0)..mi(0) + n].copy_from_slice(initial);
        match self {
            NewtonLinearSystem::Sl(s) => {
                for k in 0..nt {
                    let a = s.transport(k).to_sparse();
                    rows.add(ui(k), ui(k), &id, 1.0);
                    rows.add(ui(k), ui(k + 1), &a, -1.0);
                    rows.add(ui(k), mi(k), &SparseOperator::diagonal(&s.w[k]), -dt);
                    for r in 0..n {
                        rhs[ui(k) + r] = dt * s.b[k][r];
                    }
                    rows.add(mi(k + 1), mi(k + 1), &id, 1.0);
                    rows.add(mi(k + 1), mi(k), &a.transpose(), -1.0);
                    rows.add(mi(k + 1), ui(k + 1), &s.z[k].to_sparse(), -dt);
                    for r in 0..n {
                        rhs[mi(k + 1) + r] = dt * s.c[k][r];
                    }
                }
            }
            NewtonLinearSystem::Fd(s) => {
                for k in 0..nt {
                    let d = &s.marching[k];
                    rows.add(ui(k), ui(k), d, 1.0);
                    rows.add(ui(k), ui(k + 1), &id, -1.0);
                    rows.add(ui(k), mi(k + 1), &SparseOperator::diagonal(&s.w[k]), -dt);
                    for r in 0..n {
                        rhs[ui(k) + r] = dt * s.b[k][r];
                    }
                    rows.add(mi(k + 1), mi(k + 1), &d.transpose(), 1.0);
                    rows.add(mi(k + 1), mi(k), &id, -1.0);
                    rows.add(mi(k + 1), ui(k), &s.z[k].to_sparse(), -dt);
                    for r in 0..n {
                        rhs[mi(k + 1) + r] = dt * s.c[k][r];
                    }
                }
            }
        }
        (rows, rhs)
    }

    /// The full block matrix and right-hand side, assembled densely.
    pub fn assemble_dense(&self) -> Result<(DMatrix<f64>, DVector<f64>)> {
        let grid = self.grid();
        let per_field = grid.n_levels() * grid.n_nodes();
        if per_field > DENSE_LIMIT {
            return Err(MfgError::TooLarge { unknowns: per_field, limit: DENSE_LIMIT });
        }
        let (rows, rhs) = self.blocks();
        let size = 2 * per_field;
        let mut a = DMatrix::zeros(size, size);
        for (r, row) in rows.rows.iter().enumerate() {
            for &(c, v) in row {
                a[(r, c)] += v;
            }
        }
        Ok((a, DVector::from_vec(rhs)))
    }
}

struct BlockRows {
    rows: Vec<Vec<(usize, f64)>>,
}

impl BlockRows {
    fn new(size: usize) -> Self {
        BlockRows { rows: vec![Vec::new(); size] }
    }

    fn add(&mut self, row0: usize, col0: usize, block: &SparseOperator, scale: f64) {
        for r in 0..block.order() {
            for (c, v) in block.row(r) {
                self.rows[row0 + r].push((col0 + c, scale * v));
            }
        }
    }

    fn apply_to(&self, x: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|row| row.iter().map(|&(c, v)| v * x[c]).sum()).collect()
    }
}

/// Alternates a backward march for `U` (holding `M`) and a forward march
/// for `M` (holding `U`) until one more plain sweep would change both `U`
/// and `M` by less than `delta` in sup norm.
///
/// One sweep is the affine map `G(M) = forward(backward(M))`. Plain
/// Gauss-Seidel iterates `M <- G(M)`; the relaxed variants take
/// `M <- M + w (G(M) - M)`. Because `G` is affine, `G` at the relaxed point is
/// the same combination of known sweeps, so every iteration costs one sweep.
pub fn forward_backward_sweeps(
    system: &NewtonLinearSystem,
    m_init: &SpaceTimeField,
    opts: &SweepOptions,
) -> (SpaceTimeField, SpaceTimeField, SweepReport) {
    if opts.acceleration == Acceleration::Gmres {
        return gmres_sweeps(system, m_init, opts);
    }
    let grid = system.grid();
    let (n, levels) = (grid.n_nodes(), grid.n_levels());
    let mut m = m_init.clone();
    let mut u = SpaceTimeField::zeros(n, levels);
    let mut gm = SpaceTimeField::zeros(n, levels);
    system.backward(&m, &mut u);
    system.forward(&u, &mut gm);
    let mut u_next = SpaceTimeField::zeros(n, levels);
    let mut g_next = SpaceTimeField::zeros(n, levels);
    let mut report = SweepReport {
        sweeps: 1,
        final_delta_u: f64::INFINITY,
        final_delta_m: gm.sup_distance(&m),
        converged: false,
    };
    while report.sweeps < opts.max_sweeps {
        // sweep from G(M): u_next = U(G(M)), g_next = G(G(M))
        system.backward(&gm, &mut u_next);
        system.forward(&u_next, &mut g_next);
        report.sweeps += 1;
        let omega = match opts.acceleration {
            Acceleration::MinimalResidual => minimal_residual_factor(m.as_slice(), gm.as_slice(), g_next.as_slice()),
            _ => opts.relaxation,
        };
        let mut du: f64 = 0.0;
        for (x, y) in u.as_mut_slice().iter_mut().zip(u_next.as_slice()) {
            let step = omega * (y - *x);
            du = du.max(step.abs());
            *x += step;
        }
        let mut dm: f64 = 0.0;
        for ((x, g), gg) in m.as_mut_slice().iter_mut().zip(gm.as_mut_slice()).zip(g_next.as_slice()) {
            *x += omega * (*g - *x);
            *g += omega * (gg - *g);
            dm = dm.max((*g - *x).abs());
        }
        report.final_delta_u = du;
        report.final_delta_m = dm;
        if !(du.is_finite() && dm.is_finite()) {
            break;
        }
        if du < opts.delta && dm < opts.delta {
            report.converged = true;
            break;
        }
    }
    (u, m, report)
}

/// `w = <r, v> / <v, v>` with `r = G(M) - M` and `v = r - (G(G(M)) - G(M))`,
/// the factor minimizing the Euclidean norm of the next residual.
fn minimal_residual_factor(m: &[f64], gm: &[f64], ggm: &[f64]) -> f64 {
    let (mut rv, mut vv) = (0.0, 0.0);
    for i in 0..m.len() {
        let r = gm[i] - m[i];
        let v = r - (ggm[i] - gm[i]);
        rv += r * v;
        vv += v * v;
    }
    let w = rv / vv;
    if w.is_finite() && w > 0.0 {
        w
    } else {
        1.0
    }
}

/// `G(M)` together with the intermediate `U = backward(M)`.
fn sweep(system: &NewtonLinearSystem, m: &SpaceTimeField, u: &mut SpaceTimeField, gm: &mut SpaceTimeField) {
    system.backward(m, u);
    system.forward(u, gm);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Restarted GMRES for `(I - L) M = G(0)`, where `L M = G(M) - G(0)`.
///
/// The returned pair is `(backward(M), G(M))`, so the forward equation holds
/// exactly and the reported deltas are those of one plain sweep from `M`.
fn gmres_sweeps(
    system: &NewtonLinearSystem,
    m_init: &SpaceTimeField,
    opts: &SweepOptions,
) -> (SpaceTimeField, SpaceTimeField, SweepReport) {
    let grid = system.grid();
    let (n, levels) = (grid.n_nodes(), grid.n_levels());
    let len = n * levels;
    let mut u = SpaceTimeField::zeros(n, levels);
    let mut gm = SpaceTimeField::zeros(n, levels);
    let mut g0 = SpaceTimeField::zeros(n, levels);
    sweep(system, &SpaceTimeField::zeros(n, levels), &mut u, &mut g0);
    let mut x = m_init.clone();
    sweep(system, &x, &mut u, &mut gm);
    let mut report = SweepReport { sweeps: 2, final_delta_u: f64::INFINITY, final_delta_m: f64::INFINITY, converged: false };
    let mut u_check = SpaceTimeField::zeros(n, levels);
    let mut scratch = SpaceTimeField::zeros(n, levels);
    let mut gv = SpaceTimeField::zeros(n, levels);
    let sqrt_len = (len as f64).sqrt();
    let mut m_target = opts.delta;
    loop {
        // here u = backward(x) and gm = G(x)
        let r: Vec<f64> = gm.as_slice().iter().zip(x.as_slice()).map(|(g, m)| g - m).collect();
        report.final_delta_m = r.iter().fold(0.0, |a: f64, v| a.max(v.abs()));
        system.backward(&gm, &mut u_check);
        report.final_delta_u = u_check.sup_distance(&u);
        if report.final_delta_m < opts.delta {
            if report.final_delta_u < opts.delta {
                report.converged = true;
                break;
            }
            // the density change is small enough but its effect on U is not
            m_target = m_target.min(report.final_delta_m) * (opts.delta / report.final_delta_u).min(0.5);
        }
        if !report.final_delta_m.is_finite() || report.sweeps >= opts.max_sweeps {
            break;
        }
        let beta = dot(&r, &r).sqrt();
        log::debug!("gmres restart after {} sweeps: residual sup {:.3e}, l2 {:.3e}", report.sweeps, report.final_delta_m, beta);
        let restart = opts.restart.min(opts.max_sweeps.saturating_sub(report.sweeps + 1)).max(1);
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut raw: Vec<Vec<f64>> = Vec::with_capacity(restart);
        let mut rot: Vec<(f64, f64)> = Vec::with_capacity(restart);
        let mut g = vec![beta];
        for j in 0..restart {
            scratch.as_mut_slice().copy_from_slice(&basis[j]);
            sweep(system, &scratch, &mut u_check, &mut gv);
            report.sweeps += 1;
            // w = v - L v = v - (G(v) - G(0))
            let mut w: Vec<f64> = basis[j]
                .iter()
                .zip(gv.as_slice())
                .zip(g0.as_slice())
                .map(|((v, gvi), g0i)| v - (gvi - g0i))
                .collect();
            let mut col = Vec::with_capacity(j + 2);
            for b in &basis {
                let hij = dot(&w, b);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= hij * bi);
                col.push(hij);
            }
            let norm = dot(&w, &w).sqrt();
            col.push(norm);
            raw.push(col.clone());
            for (i, &(c, s)) in rot.iter().enumerate() {
                let (a, b) = (col[i], col[i + 1]);
                col[i] = c * a + s * b;
                col[i + 1] = -s * a + c * b;
            }
            let den = col[j].hypot(col[j + 1]);
            let (c, s) = if den == 0.0 { (1.0, 0.0) } else { (col[j] / den, col[j + 1] / den) };
            col[j] = den;
            col[j + 1] = 0.0;
            rot.push((c, s));
            g.push(-s * g[j]);
            g[j] *= c;
            hess.push(col);
            let est = g[j + 1].abs();
            if norm <= 1e-14 * beta || !est.is_finite() {
                break;
            }
            basis.push(w.iter().map(|v| v / norm).collect());
            // the 2-norm bounds the sup norm from above, and from below after scaling
            if est < m_target {
                break;
            }
            if est < m_target * sqrt_len {
                let y = back_substitute(&hess, &g);
                if residual_sup(&basis, &raw, &y, beta) < m_target {
                    break;
                }
            }
        }
        let y = back_substitute(&hess, &g);
        for (yi, b) in y.iter().zip(&basis) {
            x.as_mut_slice().iter_mut().zip(b).for_each(|(xi, bi)| *xi += yi * bi);
        }
        sweep(system, &x, &mut u, &mut gm);
        report.sweeps += 1;
    }
    (u, gm, report)
}

/// Solves the rotated upper-triangular least-squares system.
fn back_substitute(hess: &[Vec<f64>], g: &[f64]) -> Vec<f64> {
    let k = hess.len();
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut acc = g[i];
        for j in i + 1..k {
            acc -= hess[j][i] * y[j];
        }
        y[i] = if hess[i][i] != 0.0 { acc / hess[i][i] } else { 0.0 };
    }
    y
}

/// Sup norm of `V (beta e1 - H y)`, the residual of the current GMRES
/// iterate, from the unrotated Hessenberg columns.
fn residual_sup(basis: &[Vec<f64>], raw: &[Vec<f64>], y: &[f64], beta: f64) -> f64 {
    let mut coeff = vec![0.0; raw.len() + 1];
    coeff[0] = beta;
    for (col, yj) in raw.iter().zip(y) {
        for (c, h) in coeff.iter_mut().zip(col) {
            *c -= h * yj;
        }
    }
    let mut r = vec![0.0; basis[0].len()];
    for (c, b) in coeff.iter().zip(basis) {
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri += c * bi);
    }
    r.iter().fold(0.0, |a: f64, v| a.max(v.abs()))
}

#[derive(Debug, Clone)]
pub struct DenseSolution {
    pub u: SpaceTimeField,
    pub m: SpaceTimeField,
    pub sigma_min: f64,
}

/// Direct solve of the assembled block system; reports the smallest singular value.
pub fn dense_solve(system: &NewtonLinearSystem) -> Result<DenseSolution> {
    let (a, b) = system.assemble_dense()?;
    let sv = a.clone().singular_values();
    let sigma_max = sv.max();
    let sigma_min = sv.min();
    if !(sigma_min > sigma_max * 1e-13) {
        return Err(MfgError::Singular(format!(
            "block matrix is rank deficient (sigma_min = {sigma_min:.3e}, sigma_max = {sigma_max:.3e})"
        )));
    }
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| MfgError::Singular("LU factorization of the block matrix failed".into()))?;
    let grid = system.grid();
    let per_field = grid.n_levels() * grid.n_nodes();
    let n = grid.n_nodes();
    let u = SpaceTimeField::from_flat(n, x.as_slice()[..per_field].to_vec())?;
    let m = SpaceTimeField::from_flat(n, x.as_slice()[per_field..].to_vec())?;
    Ok(DenseSolution { u, m, sigma_min })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Execution;
    use crate::fd::FdOptions;
    use crate::problem::{builtin_problem, ProblemId};
    use crate::sl::SlOptions;

    fn tiny(scheme: Scheme, decoupled: bool) -> (NewtonLinearSystem, SpaceTimeField) {
        let p = builtin_problem(ProblemId::Test2a);
        let g = GridSpec::new(1, 4, 2, 0.01).unwrap();
        let u = SpaceTimeField::broadcast(&p.terminal_cost(&g).unwrap(), 3);
        let m0 = p.initial_density(&g, false).unwrap();
        let m = SpaceTimeField::broadcast(&m0, 3);
        let sys = match scheme {
            Scheme::Sl => {
                let s = SlSystem::assemble(&p, &g, &u, &m, u.level(2), &m0, &SlOptions::default(), Execution::Sequential).unwrap();
                NewtonLinearSystem::Sl(if decoupled { s.decoupled() } else { s })
            }
            Scheme::Fd => {
                let s = FdSystem::assemble(&p, &g, &u, &m, u.level(2), &m0, &FdOptions::default(), Execution::Sequential).unwrap();
                NewtonLinearSystem::Fd(if decoupled { s.decoupled() } else { s })
            }
        };
        (sys, m)
    }

    #[test]
    fn decoupled_system_needs_one_plain_sweep() {
        for scheme in [Scheme::Sl, Scheme::Fd] {
            let (sys, m) = tiny(scheme, true);
            let plain = SweepOptions { acceleration: Acceleration::None, ..Default::default() };
            let (u, m1, rep) = forward_backward_sweeps(&sys, &m, &plain);
            assert!(rep.converged);
            assert_eq!(rep.sweeps, 2);
            assert!(sys.residual(&u, &m1) < 1e-10);
            let (u, m2, rep) = forward_backward_sweeps(&sys, &m, &SweepOptions::default());
            assert!(rep.converged);
            assert!(sys.residual(&u, &m2) < 1e-10);
        }
    }

    #[test]
    fn sweeps_match_dense_oracle() {
        for scheme in [Scheme::Sl, Scheme::Fd] {
            let (sys, m) = tiny(scheme, false);
            let opts = SweepOptions::default();
            let (u, m, rep) = forward_backward_sweeps(&sys, &m, &opts);
            assert!(rep.converged, "{scheme}: {rep:?}");
            let dense = dense_solve(&sys).unwrap();
            assert!(dense.sigma_min > 0.0);
            assert!(u.sup_distance(&dense.u) < 10.0 * opts.delta, "{scheme}");
            assert!(m.sup_distance(&dense.m) < 10.0 * opts.delta, "{scheme}");
            assert!(sys.residual(&dense.u, &dense.m) < 1e-9);
        }
    }

    #[test]
    fn accelerations_agree() {
        for scheme in [Scheme::Sl, Scheme::Fd] {
            let (sys, m) = tiny(scheme, false);
            let delta = 1e-10;
            let (ua, ma, ra) = forward_backward_sweeps(&sys, &m, &SweepOptions { delta, ..Default::default() });
            assert!(ra.converged, "{scheme}: {ra:?}");
            let variants = [
                (Acceleration::None, 1.0),
                (Acceleration::None, 0.7),
                (Acceleration::Gmres, 1.0),
            ];
            for (acceleration, relaxation) in variants {
                let opts = SweepOptions { delta, relaxation, acceleration, ..Default::default() };
                let (u, mm, r) = forward_backward_sweeps(&sys, &m, &opts);
                assert!(r.converged, "{scheme} {acceleration:?} {relaxation}: {r:?}");
                assert!(u.sup_distance(&ua) < 1e-8 && mm.sup_distance(&ma) < 1e-8);
            }
        }
    }

    #[test]
    fn dense_guard() {
        let p = builtin_problem(ProblemId::Test2a);
        let g = GridSpec::new(1, 100, 60, 0.01).unwrap();
        let u = SpaceTimeField::zeros(100, 61);
        let m = SpaceTimeField::broadcast(&vec![1.0; 100], 61);
        let s = SlSystem::assemble(&p, &g, &u, &m, u.level(60), m.level(0), &SlOptions::default(), Execution::Sequential).unwrap();
        assert!(matches!(dense_solve(&NewtonLinearSystem::Sl(s)), Err(MfgError::TooLarge { .. })));
    }

    #[test]
    fn sweep_options_validation() {
        assert!(SweepOptions::default().validate().is_ok());
        assert!(SweepOptions { delta: 0.0, ..Default::default() }.validate().is_err());
        assert!(SweepOptions { relaxation: 1.5, ..Default::default() }.validate().is_err());
        assert_eq!("fd".parse::<Scheme>().unwrap(), Scheme::Fd);
        assert!("xx".parse::<Scheme>().is_err());
    }
}
