//! Semi-Lagrangian linearized Newton step.
//!
//! The backward march is `U^k = A^k U^{k+1} + dt (W^k M^k + B^k)` and the
//! forward march `M^{k+1} = (A^k)^T M^k + dt (Z^{k+1} U^{k+1} + C^{k+1})`,
//! where `A^k` averages interpolation weights over the characteristic feet.

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::exec::Execution;
use crate::problem::MfgProblem;
use crate::sparse::SparseOperator;
use crate::torus::ops::{add_axis_stencil, central_taps};
use crate::torus::{
    derivative_matrix, interp_weights, periodic_project, DriftField, Field, GridSpec, Point,
    SpaceTimeField,
};

/// Discretization of `Z V = div(m H_pp D V)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZForm {
    /// `sum_a D_a (c_ab D_b V)`; conserves mass exactly.
    #[default]
    Divergence,
    /// `sum_ab c_ab D_a D_b V + (D_a c_ab) D_b V`.
    ProductRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlOptions {
    pub z_form: ZForm,
    /// Mollifier width in units of `h`; zero selects the plain central gradient.
    pub eps_factor: f64,
}

impl Default for SlOptions {
    fn default() -> Self {
        SlOptions { z_form: ZForm::Divergence, eps_factor: 1.5 }
    }
}

/// The `2 dim` points `x + dt drift ± sigma sqrt(dim dt) e_a`, projected onto the torus.
///
/// The noise offset makes the foot average reproduce `nu Δ` in any dimension
/// (`sigma^2 = 2 nu`).
pub fn characteristic_feet(x: Point, drift: [f64; 2], dt: f64, sigma: f64, dim: usize) -> Vec<Point> {
    let s = noise_offset(dt, sigma, dim);
    let mut feet = Vec::with_capacity(2 * dim);
    for a in 0..dim {
        for sign in [1.0, -1.0] {
            let mut y = [x[0] + dt * drift[0], x[1] + dt * drift[1]];
            y[a] += sign * s;
            let y = periodic_project(&y[..dim]).expect("finite foot");
            feet.push(y);
        }
    }
    feet
}

fn noise_offset(dt: f64, sigma: f64, dim: usize) -> f64 {
    sigma * (dim as f64 * dt).sqrt()
}

/// Transport operator `A(q)` applied matrix-free; feet move against the velocity `q`.
#[derive(Debug, Clone, Copy)]
pub struct Transport<'a> {
    grid: &'a GridSpec,
    velocity: &'a DriftField,
    dt: f64,
    offset: f64,
}

impl<'a> Transport<'a> {
    pub fn new(grid: &'a GridSpec, velocity: &'a DriftField, dt: f64, sigma: f64) -> Self {
        Transport { grid, velocity, dt, offset: noise_offset(dt, sigma, grid.dim()) }
    }

    #[inline]
    fn for_each_weight(&self, r: usize, mut f: impl FnMut(usize, f64)) {
        let dim = self.grid.dim();
        let x = self.grid.node(r);
        let q = self.velocity.at(r);
        let base = [x[0] - self.dt * q[0], x[1] - self.dt * q[1]];
        let scale = 0.5 / dim as f64;
        for a in 0..dim {
            for sign in [1.0, -1.0] {
                let mut y = base;
                y[a] += sign * self.offset;
                for (s, w) in interp_weights(y, self.grid).iter() {
                    f(s, scale * w);
                }
            }
        }
    }

    /// `out = A v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            self.for_each_weight(r, |s, w| acc += w * v[s]);
            *o = acc;
        }
    }

    /// `out = A^T v`.
    pub fn apply_transpose(&self, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &vr) in v.iter().enumerate() {
            self.for_each_weight(r, |s, w| out[s] += w * vr);
        }
    }

    pub fn to_sparse(&self) -> SparseOperator {
        let n = self.grid.n_nodes();
        let rows = (0..n)
            .map(|r| {
                let mut row = Vec::with_capacity(8);
                self.for_each_weight(r, |s, w| row.push((s, w)));
                row
            })
            .collect();
        SparseOperator::from_rows(rows)
    }
}

/// Assembled `A(q)` for the velocity field `velocity`.
pub fn build_transport(velocity: &DriftField, grid: &GridSpec, dt: f64, sigma: f64) -> SparseOperator {
    Transport::new(grid, velocity, dt, sigma).to_sparse()
}

/// `Z V = div_h(c D_h V)` with a symmetric per-node tensor `c = (c11, c12, c22)`.
#[derive(Debug, Clone)]
pub struct ZOperator {
    grid: GridSpec,
    coeff: Vec<[f64; 3]>,
    form: ZForm,
    // sum_a D_a c_ab, used by the product-rule form
    drift: Vec<[f64; 2]>,
}

impl ZOperator {
    pub fn new(grid: &GridSpec, coeff: Vec<[f64; 3]>, form: ZForm) -> Self {
        let n = grid.n_nodes();
        let mut drift = Vec::new();
        if form == ZForm::ProductRule {
            let taps = central_taps(grid.h());
            let comp = |idx: usize| coeff.iter().map(|c| c[idx]).collect::<Vec<_>>();
            let (c11, c12, c22) = (comp(0), comp(1), comp(2));
            let mut e0 = vec![0.0; n];
            let mut e1 = vec![0.0; n];
            add_axis_stencil(grid, 0, &taps, &c11, &mut e0);
            if grid.dim() == 2 {
                add_axis_stencil(grid, 1, &taps, &c12, &mut e0);
                add_axis_stencil(grid, 0, &taps, &c12, &mut e1);
                add_axis_stencil(grid, 1, &taps, &c22, &mut e1);
            }
            drift = e0.into_iter().zip(e1).map(|(a, b)| [a, b]).collect();
        }
        ZOperator { grid: *grid, coeff, form, drift }
    }

    pub fn isotropic(grid: &GridSpec, c: &[f64], form: ZForm) -> Self {
        Self::new(grid, c.iter().map(|&v| [v, 0.0, v]).collect(), form)
    }

    pub fn zero(grid: &GridSpec) -> Self {
        Self::new(grid, vec![[0.0; 3]; grid.n_nodes()], ZForm::Divergence)
    }

    pub fn form(&self) -> ZForm {
        self.form
    }

    /// `out = Z v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        let grid = &self.grid;
        let n = grid.n_nodes();
        let taps = central_taps(grid.h());
        let two_d = grid.dim() == 2;
        let mut g0 = vec![0.0; n];
        add_axis_stencil(grid, 0, &taps, v, &mut g0);
        let mut g1 = vec![0.0; if two_d { n } else { 0 }];
        if two_d {
            add_axis_stencil(grid, 1, &taps, v, &mut g1);
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        match self.form {
            ZForm::Divergence => {
                let mut f0 = vec![0.0; n];
                if two_d {
                    let mut f1 = vec![0.0; n];
                    for r in 0..n {
                        let c = self.coeff[r];
                        f0[r] = c[0] * g0[r] + c[1] * g1[r];
                        f1[r] = c[1] * g0[r] + c[2] * g1[r];
                    }
                    add_axis_stencil(grid, 1, &taps, &f1, out);
                } else {
                    for r in 0..n {
                        f0[r] = self.coeff[r][0] * g0[r];
                    }
                }
                add_axis_stencil(grid, 0, &taps, &f0, out);
            }
            ZForm::ProductRule => {
                let mut d00 = vec![0.0; n];
                add_axis_stencil(grid, 0, &taps, &g0, &mut d00);
                if two_d {
                    let mut d01 = vec![0.0; n];
                    let mut d11 = vec![0.0; n];
                    add_axis_stencil(grid, 0, &taps, &g1, &mut d01);
                    add_axis_stencil(grid, 1, &taps, &g1, &mut d11);
                    for r in 0..n {
                        let c = self.coeff[r];
                        let e = self.drift[r];
                        out[r] = c[0] * d00[r] + 2.0 * c[1] * d01[r] + c[2] * d11[r]
                            + e[0] * g0[r]
                            + e[1] * g1[r];
                    }
                } else {
                    for r in 0..n {
                        out[r] = self.coeff[r][0] * d00[r] + self.drift[r][0] * g0[r];
                    }
                }
            }
        }
    }

    pub fn to_sparse(&self) -> SparseOperator {
        let grid = &self.grid;
        let n = grid.n_nodes();
        let dim = grid.dim();
        let d: Vec<SparseOperator> = (0..dim)
            .map(|a| derivative_matrix(grid, a).expect("axis within dim"))
            .collect();
        let entry = |a: usize, b: usize| -> Vec<f64> {
            let idx = match (a, b) {
                (0, 0) => 0,
                (1, 1) => 2,
                _ => 1,
            };
            self.coeff.iter().map(|c| c[idx]).collect()
        };
        let mut z = SparseOperator::from_triplets(n, std::iter::empty());
        for a in 0..dim {
            for b in 0..dim {
                let c = entry(a, b);
                let term = match self.form {
                    ZForm::Divergence => d[a].matmul(&d[b].left_scaled(&c)),
                    ZForm::ProductRule => d[a].matmul(&d[b]).left_scaled(&c),
                };
                z = z.add_scaled(1.0, &term);
            }
            if self.form == ZForm::ProductRule {
                let e: Vec<f64> = self.drift.iter().map(|e| e[a]).collect();
                z = z.add_scaled(1.0, &d[a].left_scaled(&e));
            }
        }
        z
    }
}

/// Per-node linearization data at one time level.
pub(crate) struct Linearization {
    /// Velocity `D_pH(x, m, p)`.
    pub velocity: DriftField,
    /// `F'(m) - ∂_m H`.
    pub w: Vec<f64>,
    /// `q·p - H(x, m, p) + F(m) - w m`.
    pub b: Vec<f64>,
}

pub(crate) fn linearize(problem: &MfgProblem, grid: &GridSpec, m_prev: &[f64], p: &DriftField) -> Linearization {
    let n = grid.n_nodes();
    let dim = grid.dim();
    let ham = &problem.hamiltonian;
    let mut vel = DriftField::zeros(dim, n);
    let mut w = vec![0.0; n];
    let mut b = vec![0.0; n];
    for r in 0..n {
        let x = grid.node(r);
        let m = m_prev[r];
        let pr = p.at(r);
        let q = ham.grad_p(x, m, pr);
        for a in 0..dim {
            vel.component_mut(a)[r] = q[a];
        }
        let wr = problem.coupling.f_prime(x, m) - ham.dm(x, m, pr);
        w[r] = wr;
        b[r] = q[0] * pr[0] + q[1] * pr[1] - ham.eval(x, m, pr) + problem.coupling.f(x, m) - wr * m;
    }
    Linearization { velocity: vel, w, b }
}

/// Coefficient tensor `m H_pp(x, m, p)` of the linearized Fokker-Planck coupling.
pub(crate) fn fp_tensor(problem: &MfgProblem, grid: &GridSpec, m_prev: &[f64], p: &DriftField) -> Vec<[f64; 3]> {
    (0..grid.n_nodes())
        .map(|r| {
            let m = m_prev[r];
            let hs = problem.hamiltonian.hess_pp(grid.node(r), m, p.at(r));
            [m * hs[0][0], m * hs[0][1], m * hs[1][1]]
        })
        .collect()
}

/// `(W^k, B^k)` for the velocity induced by the momentum `p` at density `m_prev`.
pub fn build_coupling_blocks(
    m_prev: &[f64],
    p: &DriftField,
    problem: &MfgProblem,
    grid: &GridSpec,
) -> Result<(SparseOperator, Field)> {
    check_finite(m_prev, "m_prev")?;
    let lin = linearize(problem, grid, m_prev, p);
    Ok((SparseOperator::diagonal(&lin.w), Field::from(lin.b)))
}

/// `(Z, C)` with `Z V = div_h(m_prev H_pp D_h V)` and `C = -Z u_prev`.
pub fn build_fp_blocks(
    m_prev: &[f64],
    u_prev: &[f64],
    p: &DriftField,
    problem: &MfgProblem,
    grid: &GridSpec,
    form: ZForm,
) -> (ZOperator, Field) {
    let z = ZOperator::new(grid, fp_tensor(problem, grid, m_prev, p), form);
    let mut c = vec![0.0; grid.n_nodes()];
    z.apply(u_prev, &mut c);
    c.iter_mut().for_each(|v| *v = -*v);
    (z, Field::from(c))
}

fn check_finite(v: &[f64], name: &str) -> Result<()> {
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(MfgError::Domain(format!("{name} is not finite at node {i}")));
    }
    Ok(())
}

/// One-sided 1D taps of the first-moment normalized Gaussian derivative.
fn derivative_kernel(eps: f64, h: f64) -> Vec<(isize, f64)> {
    let radius = ((4.0 * eps / h).ceil() as isize).max(1);
    // exponents relative to the nearest node so small eps does not underflow
    let g = |t: isize| (-((t * t - 1) as f64) * h * h / (2.0 * eps * eps)).exp();
    let moment: f64 = (1..=radius).map(|t| 2.0 * (t * t) as f64 * g(t)).sum::<f64>() * h;
    let mut taps: Vec<(isize, f64)> = (-radius..=radius)
        .filter(|&t| t != 0)
        .map(|t| (t, t as f64 * g(t) / moment))
        .collect();
    let mean = taps.iter().map(|t| t.1).sum::<f64>() / (2 * radius + 1) as f64;
    taps.iter_mut().for_each(|t| t.1 -= mean);
    taps.push((0, -mean));
    taps
}

fn smoothing_kernel(eps: f64, h: f64) -> Vec<(isize, f64)> {
    let radius = ((4.0 * eps / h).ceil() as isize).max(1);
    let g = |t: isize| (-((t * t) as f64) * h * h / (2.0 * eps * eps)).exp();
    let total: f64 = (-radius..=radius).map(g).sum();
    (-radius..=radius).map(|t| (t, g(t) / total)).collect()
}

/// Gradient of one level convolved with the derivative of a Gaussian of width `eps`.
pub(crate) fn mollified_gradient(grid: &GridSpec, v: &[f64], eps: f64) -> DriftField {
    let h = grid.h();
    let n = grid.n_nodes();
    let dk = derivative_kernel(eps, h);
    let mut comps = Vec::with_capacity(grid.dim());
    if grid.dim() == 1 {
        let mut out = vec![0.0; n];
        add_axis_stencil(grid, 0, &dk, v, &mut out);
        comps.push(Field::from(out));
    } else {
        let sk = smoothing_kernel(eps, h);
        for a in 0..2 {
            let mut tmp = vec![0.0; n];
            add_axis_stencil(grid, a, &dk, v, &mut tmp);
            let mut out = vec![0.0; n];
            add_axis_stencil(grid, 1 - a, &sk, &tmp, &mut out);
            comps.push(Field::from(out));
        }
    }
    DriftField::from_components(comps).expect("consistent components")
}

/// `D rho_eps * u` on every level.
pub fn mollified_drift(u: &SpaceTimeField, eps: f64, grid: &GridSpec) -> Result<Vec<DriftField>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(MfgError::param("eps", format!("must be positive, got {eps}")));
    }
    Ok(u.levels().map(|l| mollified_gradient(grid, l, eps)).collect())
}

/// Assembled semi-Lagrangian linear system for one Newton step.
#[derive(Debug, Clone)]
pub struct SlSystem {
    pub(crate) grid: GridSpec,
    pub(crate) sigma: f64,
    /// `q^k`, `k = 0..=N_t`.
    pub(crate) velocity: Vec<DriftField>,
    /// `W^k`, `B^k`, `k = 0..N_t`.
    pub(crate) w: Vec<Vec<f64>>,
    pub(crate) b: Vec<Vec<f64>>,
    /// `Z^{k+1}`, `C^{k+1}` stored at index `k`.
    pub(crate) z: Vec<ZOperator>,
    pub(crate) c: Vec<Vec<f64>>,
    pub(crate) terminal: Vec<f64>,
    pub(crate) initial: Vec<f64>,
}

/// Momentum `p^k` used by the SL scheme on every level.
pub fn sl_momentum(u: &SpaceTimeField, grid: &GridSpec, opts: &SlOptions, exec: Execution) -> Vec<DriftField> {
    exec.map(u.n_levels(), |k| {
        if opts.eps_factor > 0.0 {
            mollified_gradient(grid, u.level(k), opts.eps_factor * grid.h())
        } else {
            crate::torus::grad_h(grid, u.level(k)).expect("field on grid")
        }
    })
}

impl SlSystem {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        problem: &MfgProblem,
        grid: &GridSpec,
        u_prev: &SpaceTimeField,
        m_prev: &SpaceTimeField,
        terminal: &[f64],
        initial: &[f64],
        opts: &SlOptions,
        exec: Execution,
    ) -> Result<Self> {
        if !u_prev.is_finite() || !m_prev.is_finite() {
            return Err(MfgError::Domain("previous iterate is not finite".into()));
        }
        let nt = grid.n_time();
        let p = sl_momentum(u_prev, grid, opts, exec);
        let lin = exec.map(nt + 1, |k| linearize(problem, grid, m_prev.level(k), &p[k]));
        let fp = exec.map(nt, |k| {
            build_fp_blocks(m_prev.level(k + 1), u_prev.level(k + 1), &p[k + 1], problem, grid, opts.z_form)
        });
        let mut velocity = Vec::with_capacity(nt + 1);
        let mut w = Vec::with_capacity(nt);
        let mut b = Vec::with_capacity(nt);
        for (k, l) in lin.into_iter().enumerate() {
            velocity.push(l.velocity);
            if k < nt {
                w.push(l.w);
                b.push(l.b);
            }
        }
        let (z, c) = fp.into_iter().map(|(z, c)| (z, c.into_vec())).unzip();
        Ok(SlSystem {
            grid: *grid,
            sigma: problem.sigma(),
            velocity,
            w,
            b,
            z,
            c,
            terminal: terminal.to_vec(),
            initial: initial.to_vec(),
        })
    }

    pub fn transport(&self, k: usize) -> Transport<'_> {
        Transport::new(&self.grid, &self.velocity[k], self.grid.dt(), self.sigma)
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
        let a = self.transport(k);
        let (mut hjb, mut fp, mut zu) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        a.apply(u.level(k + 1), &mut hjb);
        a.apply_transpose(m.level(k), &mut fp);
        self.z[k].apply(u.level(k + 1), &mut zu);
        let (uk, mk, mk1) = (u.level(k), m.level(k), m.level(k + 1));
        for r in 0..n {
            hjb[r] = (uk[r] - hjb[r]) / dt - self.w[k][r] * mk[r] - self.b[k][r];
            fp[r] = (mk1[r] - fp[r]) / dt - zu[r] - self.c[k][r];
        }
        (hjb, fp)
    }

    pub(crate) fn backward(&self, m: &SpaceTimeField, u: &mut SpaceTimeField) {
        let nt = self.grid.n_time();
        let dt = self.grid.dt();
        u.level_mut(nt).copy_from_slice(&self.terminal);
        let mut next = self.terminal.clone();
        for k in (0..nt).rev() {
            let out = u.level_mut(k);
            self.transport(k).apply(&next, out);
            let mk = m.level(k);
            for r in 0..out.len() {
                out[r] += dt * (self.w[k][r] * mk[r] + self.b[k][r]);
            }
            next.copy_from_slice(out);
        }
    }

    pub(crate) fn forward(&self, u: &SpaceTimeField, m: &mut SpaceTimeField) {
        let nt = self.grid.n_time();
        let dt = self.grid.dt();
        let n = self.grid.n_nodes();
        m.level_mut(0).copy_from_slice(&self.initial);
        let mut prev = self.initial.clone();
        let mut zu = vec![0.0; n];
        for k in 0..nt {
            let out = m.level_mut(k + 1);
            self.transport(k).apply_transpose(&prev, out);
            self.z[k].apply(u.level(k + 1), &mut zu);
            for r in 0..n {
                out[r] += dt * (zu[r] + self.c[k][r]);
            }
            prev.copy_from_slice(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin_problem, ProblemId};
    use crate::torus::{div_h, grad_h, laplace_matrix, Stencil};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_drift(grid: &GridSpec, rng: &mut ChaCha8Rng, scale: f64) -> DriftField {
        let comps = (0..grid.dim())
            .map(|_| Field::from((0..grid.n_nodes()).map(|_| rng.gen_range(-scale..scale)).collect::<Vec<_>>()))
            .collect();
        DriftField::from_components(comps).unwrap()
    }

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn feet_examples() {
        let s = 0.1f64.sqrt();
        let feet = characteristic_feet([0.5, 0.0], [0.0, 0.0], 0.01, s, 1);
        let d = 0.01f64.sqrt() * s;
        assert!((feet[0][0] - (0.5 + d)).abs() < 1e-15 && (feet[1][0] - (0.5 - d)).abs() < 1e-15);
        let feet = characteristic_feet([0.3, 0.0], [0.0, 0.0], 0.01, 0.0, 1);
        assert!(feet.iter().all(|y| (y[0] - 0.3).abs() < 1e-15));
        let feet = characteristic_feet([0.98, 0.5], [5.0, 0.0], 0.01, 0.0, 2);
        assert_eq!(feet.len(), 4);
        assert!(feet.iter().all(|y| (y[0] - 0.03).abs() < 1e-12 && (y[1] - 0.5).abs() < 1e-15));
    }

    #[test]
    fn transport_identity_and_stochastic_rows() {
        let g = GridSpec::new(2, 8, 4, 1.0).unwrap();
        let a = build_transport(&DriftField::zeros(2, 64), &g, 0.01, 0.0);
        assert!(a.max_abs_diff(&SparseOperator::identity(64)) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_drift(&g, &mut rng, 20.0);
        let a = build_transport(&q, &g, 0.013, 0.7);
        assert!(a.row_sums().iter().all(|s| (s - 1.0).abs() < 1e-12));
        assert!(a.min_value() >= 0.0);
        assert!((0..64).all(|r| a.row(r).count() <= 16));
    }

    #[test]
    fn transport_adjoint_matches_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in [1, 2] {
            let g = GridSpec::new(dim, 8, 4, 1.0).unwrap();
            let n = g.n_nodes();
            let q = random_drift(&g, &mut rng, 10.0);
            let t = Transport::new(&g, &q, 0.02, 0.5);
            let a = t.to_sparse();
            let (f, v) = (random_vec(n, &mut rng), random_vec(n, &mut rng));
            let mut af = vec![0.0; n];
            let mut atv = vec![0.0; n];
            t.apply(&f, &mut af);
            t.apply_transpose(&v, &mut atv);
            let lhs: f64 = af.iter().zip(&v).map(|(a, b)| a * b).sum();
            let rhs: f64 = f.iter().zip(&atv).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-13);
            let mut af2 = vec![0.0; n];
            a.apply(&f, &mut af2);
            assert!(af.iter().zip(&af2).all(|(x, y)| (x - y).abs() < 1e-14));
        }
    }

    #[test]
    fn quadrature_reproduces_generator() {
        // (1/2d) sum phi(y) = phi + dt (nu Δphi - q·Dphi) + O(dt^2) for quadratic phi
        let nu: f64 = 0.3;
        let sigma = (2.0 * nu).sqrt();
        let q = [0.7, -0.4];
        let x = [0.4, 0.6];
        let phi = |y: Point| 1.0 + 2.0 * y[0] - y[1] + 3.0 * y[0] * y[0] + y[0] * y[1] - 2.0 * y[1] * y[1];
        let lap = 6.0 - 4.0;
        let grad = [2.0 + 6.0 * x[0] + x[1], -1.0 + x[0] - 4.0 * x[1]];
        let res = |dt: f64| {
            let feet = characteristic_feet(x, [-q[0], -q[1]], dt, sigma, 2);
            let avg = feet.iter().map(|&y| phi(y)).sum::<f64>() / 4.0;
            (avg - phi(x) - dt * (nu * lap - q[0] * grad[0] - q[1] * grad[1])).abs()
        };
        let order = (res(1e-2) / res(5e-3)).log2();
        assert!(order > 1.7, "order {order}");
    }

    #[test]
    fn coupling_blocks_examples() {
        let g = GridSpec::new(1, 8, 4, 1.0).unwrap();
        let mut p = builtin_problem(ProblemId::Test2a);
        p.hamiltonian = crate::problem::Hamiltonian::quadratic(crate::problem::spatial(|_| 0.0));
        let m = vec![1.5; 8];
        let (w, b) = build_coupling_blocks(&m, &DriftField::zeros(1, 8), &p, &g).unwrap();
        assert_eq!(w.get(3, 3), 3.0);
        assert!(b.iter().all(|&v| (v + 2.25).abs() < 1e-14));

        let t1 = builtin_problem(ProblemId::Test1);
        let m = vec![2.0; 8];
        let (w, b) = build_coupling_blocks(&m, &DriftField::zeros(1, 8), &t1, &g).unwrap();
        for r in 0..8 {
            assert_eq!(w.get(r, r), 4.0);
            assert!((b[r] + 3.0 * (t1.m0)(g.node(r))).abs() < 1e-12);
        }
        assert!(build_coupling_blocks(&[f64::NAN; 8], &DriftField::zeros(1, 8), &t1, &g).is_err());
    }

    #[test]
    fn z_operator_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = GridSpec::new(2, 8, 2, 1.0).unwrap();
        let n = g.n_nodes();
        let m: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let v = random_vec(n, &mut rng);
        let z = ZOperator::isotropic(&g, &m, ZForm::Divergence);
        let mut zv = vec![0.0; n];
        z.apply(&v, &mut zv);
        let gv = grad_h(&g, &v).unwrap();
        let flux = DriftField::from_components(
            gv.components().iter().map(|c| Field::from(c.iter().zip(&m).map(|(a, b)| a * b).collect::<Vec<_>>())).collect(),
        )
        .unwrap();
        let ones = vec![1.0; n];
        let direct = div_h(&g, &ones, &flux).unwrap();
        assert!(zv.iter().zip(direct.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
        assert!(zv.iter().sum::<f64>().abs() < 1e-10);
        let zs = z.to_sparse();
        let mut zv2 = vec![0.0; n];
        zs.apply(&v, &mut zv2);
        assert!(zv.iter().zip(&zv2).all(|(a, b)| (a - b).abs() < 1e-10));

        let zc = ZOperator::isotropic(&g, &vec![2.5; n], ZForm::Divergence).to_sparse();
        let lap = laplace_matrix(&g, Stencil::Composed).scaled(2.5);
        assert!(zc.max_abs_diff(&lap) < 1e-9);

        let zp = ZOperator::new(&g, (0..n).map(|i| [m[i], 0.3 * m[i], 0.5 + m[i]]).collect(), ZForm::ProductRule);
        let mut a = vec![0.0; n];
        zp.apply(&v, &mut a);
        let mut b = vec![0.0; n];
        zp.to_sparse().apply(&v, &mut b);
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-9));
    }

    #[test]
    fn z_forms_agree_to_second_order() {
        let diff = |n: usize| {
            let g = GridSpec::new(1, n, 2, 1.0).unwrap();
            let c: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (2.0 * PI * g.node(i)[0]).sin()).collect();
            let v: Vec<f64> = (0..n).map(|i| (2.0 * PI * g.node(i)[0]).cos()).collect();
            let mut a = vec![0.0; n];
            let mut b = vec![0.0; n];
            ZOperator::isotropic(&g, &c, ZForm::Divergence).apply(&v, &mut a);
            ZOperator::isotropic(&g, &c, ZForm::ProductRule).apply(&v, &mut b);
            a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
        };
        let ratio = diff(32) / diff(64);
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn fp_blocks_zero_density() {
        let g = GridSpec::new(1, 8, 2, 1.0).unwrap();
        let p = builtin_problem(ProblemId::Test2a);
        let u: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let (z, c) = build_fp_blocks(&[0.0; 8], &u, &DriftField::zeros(1, 8), &p, &g, ZForm::Divergence);
        assert_eq!(z.to_sparse().max_abs_diff(&SparseOperator::from_triplets(8, std::iter::empty())), 0.0);
        assert!(c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mollified_drift_properties() {
        let n = 100;
        let g = GridSpec::new(1, n, 1, 1.0).unwrap();
        let eps = 2.0 * g.h();
        let u = SpaceTimeField::broadcast(&vec![3.7; n], 2);
        let q = mollified_drift(&u, eps, &g).unwrap();
        assert!(q[0].component(0).iter().all(|v| v.abs() < 1e-12));
        assert!(mollified_drift(&u, 0.0, &g).is_err());

        let s: Vec<f64> = (0..n).map(|i| (2.0 * PI * g.node(i)[0]).sin()).collect();
        let q = mollified_gradient(&g, &s, eps);
        let factor = 2.0 * PI * (-2.0 * PI * PI * eps * eps).exp();
        for i in 0..n {
            let exact = factor * (2.0 * PI * g.node(i)[0]).cos();
            assert!((q.component(0)[i] - exact).abs() < 0.02 * factor);
        }

        // vanishing width recovers the central difference
        let q = mollified_gradient(&g, &s, 1e-3 * g.h());
        let c = grad_h(&g, &s).unwrap();
        assert!(q.component(0).iter().zip(c.component(0).iter()).all(|(a, b)| (a - b).abs() < 1e-12));

        let g2 = GridSpec::new(2, 32, 1, 1.0).unwrap();
        let v: Vec<f64> = (0..g2.n_nodes()).map(|r| (2.0 * PI * g2.node(r)[1]).sin()).collect();
        let q = mollified_gradient(&g2, &v, 2.0 * g2.h());
        assert!(q.component(0).iter().all(|x| x.abs() < 1e-12));
        let eps2 = 2.0 * g2.h();
        let factor = 2.0 * PI * (-2.0 * PI * PI * eps2 * eps2).exp();
        let err = (0..g2.n_nodes())
            .map(|r| (q.component(1)[r] - factor * (2.0 * PI * g2.node(r)[1]).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.02 * factor, "{err}");
    }

    proptest! {
        #[test]
        fn rows_stochastic_for_any_drift(seed in 0u64..1000, sigma in 0.0f64..1.0, dt in 1e-4f64..0.1) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = GridSpec::new(1 + (seed % 2) as usize, 6, 2, 1.0).unwrap();
            let q = random_drift(&g, &mut rng, 50.0);
            let a = build_transport(&q, &g, dt, sigma);
            prop_assert!(a.row_sums().iter().all(|s| (s - 1.0).abs() < 1e-12));
            prop_assert!(a.min_value() >= 0.0);
        }
    }
}
