//! Outer Newton loops: local iterations, and a globalized variant with an
//! Armijo line search on the squared residual norm.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::exec::Execution;
use crate::fd::{FdOptions, FdSystem};
use crate::linear::{forward_backward_sweeps, NewtonLinearSystem, Scheme, SweepOptions, SweepReport};
use crate::problem::MfgProblem;
use crate::sl::{SlOptions, SlSystem};
use crate::torus::ops::{add_axis_stencil, central_taps};
use crate::torus::{grad_h, laplace_h, GridSpec, SpaceTimeField, Stencil};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Globalization {
    Off,
    /// Local Newton first; on failure restart from the initial guess with line search.
    #[default]
    OnFallback,
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    /// `u = G` and `m = m0` on every level.
    #[default]
    Data,
    /// `u = 0`, `m = m0`.
    ZeroU,
    /// `u = G`, `m = 1`.
    UniformM,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BreakdownRule {
    /// Density below the floor is a breakdown by itself.
    NegativeDensity,
    /// Density below the floor together with a failed or non-contracting next step.
    #[default]
    NegativeAndDegraded,
}

/// Residual operators of the merit function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeritKind {
    /// Residual of the scheme being solved; vanishes at its discrete solution.
    #[default]
    Scheme,
    /// Finite-difference residual shared by both schemes, comparable across them.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NewtonConfig {
    pub scheme: Scheme,
    pub tolerance: f64,
    pub max_newton_iters: usize,
    pub globalization: Globalization,
    pub beta: f64,
    pub c: f64,
    pub max_line_search: usize,
    pub merit: MeritKind,
    pub sweeps: SweepOptions,
    pub breakdown_tol: f64,
    pub breakdown_rule: BreakdownRule,
    pub initial_guess: InitialGuess,
    pub normalize_m0: bool,
    pub sl: SlOptions,
    pub fd: FdOptions,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            scheme: Scheme::Sl,
            tolerance: 1e-4,
            max_newton_iters: 50,
            globalization: Globalization::OnFallback,
            beta: 0.5,
            c: 1.0 / 3.0,
            max_line_search: 40,
            merit: MeritKind::default(),
            sweeps: SweepOptions::default(),
            breakdown_tol: 1e-8,
            breakdown_rule: BreakdownRule::default(),
            initial_guess: InitialGuess::Data,
            normalize_m0: false,
            sl: SlOptions::default(),
            fd: FdOptions::default(),
            exec: Execution::default(),
        }
    }
}

impl NewtonConfig {
    pub fn with_scheme(scheme: Scheme) -> Self {
        NewtonConfig { scheme, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(MfgError::param("tolerance", "must be positive"));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(MfgError::param("beta", "must lie in (0, 1)"));
        }
        if !(self.c > 0.0 && self.c < 0.5) {
            return Err(MfgError::param("c", "must lie in (0, 1/2)"));
        }
        if self.max_newton_iters == 0 {
            return Err(MfgError::param("max_newton_iters", "must be at least 1"));
        }
        if !(self.breakdown_tol >= 0.0) {
            return Err(MfgError::param("breakdown_tol", "must be nonnegative"));
        }
        if !(self.sl.eps_factor >= 0.0) {
            return Err(MfgError::param("eps_factor", "must be nonnegative"));
        }
        self.sweeps.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    BreakdownNegativeDensity,
    MaxIters,
    LinearSolverFailure,
    LineSearchFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Local,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineSearch {
    pub theta_old: f64,
    pub theta_new: f64,
    pub trials: usize,
}

impl LineSearch {
    /// The sufficient-decrease test `theta_new <= theta_old - 2 c alpha theta_old`.
    pub fn armijo_holds(theta_new: f64, theta_old: f64, alpha: f64, c: f64) -> bool {
        theta_new <= theta_old - 2.0 * c * alpha * theta_old
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Sup-norm change of `u` and `m` over this iteration.
    pub e_u: f64,
    pub e_m: f64,
    /// Sup norm of the Newton direction (equal to the change when `alpha = 1`).
    pub d_u: f64,
    pub d_m: f64,
    pub merit: f64,
    pub alpha: f64,
    pub sweeps: usize,
    pub min_density: f64,
    /// Largest relative deviation of the total mass of a level from level 0.
    pub mass_drift: f64,
    pub wall_time: f64,
    pub line_search: Option<LineSearch>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonHistory {
    pub scheme: Scheme,
    pub mode: Mode,
    pub records: Vec<IterationRecord>,
    pub status: Status,
    pub initial_merit: f64,
    /// Set when a negative density below the floor was observed.
    pub negative_density_seen: bool,
    /// The failed local attempt that triggered the fallback, if any.
    pub fallback_from: Option<Box<NewtonHistory>>,
    pub message: Option<String>,
}

impl NewtonHistory {
    fn new(scheme: Scheme, mode: Mode, initial_merit: f64) -> Self {
        NewtonHistory {
            scheme,
            mode,
            records: Vec::new(),
            status: Status::MaxIters,
            initial_merit,
            negative_density_seen: false,
            fallback_from: None,
            message: None,
        }
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn converged(&self) -> bool {
        self.status == Status::Converged
    }

    pub fn total_wall_time(&self) -> f64 {
        let own: f64 = self.records.iter().map(|r| r.wall_time).sum();
        own + self.fallback_from.as_ref().map_or(0.0, |h| h.total_wall_time())
    }

    pub fn errors(&self, field: ErrorField) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| match field {
                ErrorField::U => r.e_u,
                ErrorField::M => r.e_m,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonRun {
    pub u: SpaceTimeField,
    pub m: SpaceTimeField,
    pub history: NewtonHistory,
}

/// Fixed data of a discretized problem: grid, terminal cost and initial density.
#[derive(Debug, Clone)]
pub struct Discretization<'a> {
    pub problem: &'a MfgProblem,
    pub grid: GridSpec,
    pub terminal: Vec<f64>,
    pub initial: Vec<f64>,
}

impl<'a> Discretization<'a> {
    pub fn new(problem: &'a MfgProblem, grid: GridSpec, normalize_m0: bool) -> Result<Self> {
        problem.validate()?;
        if grid.dim() != problem.dim {
            return Err(MfgError::Dimension(format!(
                "problem `{}` is {}D but the grid is {}D",
                problem.name,
                problem.dim,
                grid.dim()
            )));
        }
        let terminal = problem.terminal_cost(&grid)?.into_vec();
        let initial = problem.initial_density(&grid, normalize_m0)?.into_vec();
        Ok(Discretization { problem, grid, terminal, initial })
    }

    /// Threshold below which a density value counts as a breakdown.
    fn density_floor(&self, tol: f64) -> f64 {
        let min0 = self.initial.iter().cloned().fold(f64::INFINITY, f64::min);
        min0.min(0.0) - tol
    }
}

pub fn initial_guess(disc: &Discretization, kind: InitialGuess) -> (SpaceTimeField, SpaceTimeField) {
    let levels = disc.grid.n_levels();
    let n = disc.grid.n_nodes();
    let u = match kind {
        InitialGuess::ZeroU => SpaceTimeField::zeros(n, levels),
        _ => SpaceTimeField::broadcast(&disc.terminal, levels),
    };
    let m = match kind {
        InitialGuess::UniformM => SpaceTimeField::broadcast(&vec![1.0; n], levels),
        _ => SpaceTimeField::broadcast(&disc.initial, levels),
    };
    (u, m)
}

/// Linear system of one Newton step linearized at `(u, m)`.
pub fn assemble_step(
    disc: &Discretization,
    u: &SpaceTimeField,
    m: &SpaceTimeField,
    config: &NewtonConfig,
) -> Result<NewtonLinearSystem> {
    let (p, g) = (disc.problem, &disc.grid);
    Ok(match config.scheme {
        Scheme::Sl => NewtonLinearSystem::Sl(SlSystem::assemble(
            p, g, u, m, &disc.terminal, &disc.initial, &config.sl, config.exec,
        )?),
        Scheme::Fd => NewtonLinearSystem::Fd(FdSystem::assemble(
            p, g, u, m, &disc.terminal, &disc.initial, &config.fd, config.exec,
        )?),
    })
}

/// One Newton step from `(u, m)`; the density iterate warm-starts the sweeps.
pub fn newton_step(
    disc: &Discretization,
    u: &SpaceTimeField,
    m: &SpaceTimeField,
    config: &NewtonConfig,
) -> Result<(SpaceTimeField, SpaceTimeField, SweepReport)> {
    let sys = assemble_step(disc, u, m, config)?;
    let (u_new, m_new, report) = forward_backward_sweeps(&sys, m, &config.sweeps);
    if !report.converged {
        return Err(MfgError::NonConvergence {
            sweeps: report.sweeps,
            last_change: report.final_delta_u.max(report.final_delta_m),
        });
    }
    Ok((u_new, m_new, report))
}

/// Sup norm of the scheme's nonlinear residual at `(u, m)`: the linear system
/// linearized at `(u, m)` evaluated at the same point.
pub fn scheme_residual(disc: &Discretization, u: &SpaceTimeField, m: &SpaceTimeField, config: &NewtonConfig) -> Result<f64> {
    Ok(assemble_step(disc, u, m, config)?.residual(u, m))
}

/// Half the weighted squared residual of the finite-difference discretization
/// of the MFG system, including terminal and initial mismatch.
pub fn merit(disc: &Discretization, u: &SpaceTimeField, m: &SpaceTimeField, exec: Execution) -> f64 {
    if !u.is_finite() || !m.is_finite() {
        return f64::INFINITY;
    }
    let grid = &disc.grid;
    let (dt, vol) = (grid.dt(), grid.cell_volume());
    let n = grid.n_nodes();
    let interior = exec.sum(grid.n_time(), |k| {
        let (hjb, fp) = level_residuals(disc, u, m, k);
        let s: f64 = hjb.iter().chain(&fp).map(|r| r * r).sum();
        s * vol * dt
    });
    let terminal: f64 = (0..n).map(|r| (u.get(grid.n_time(), r) - disc.terminal[r]).powi(2)).sum::<f64>() * vol;
    let initial: f64 = (0..n).map(|r| (m.get(0, r) - disc.initial[r]).powi(2)).sum::<f64>() * vol;
    0.5 * (interior + terminal + initial)
}

/// Same weighting as [`merit`], with the residual rows of the scheme
/// linearized at `(u, m)`, which at that point is the scheme's nonlinear residual.
pub fn scheme_merit(disc: &Discretization, u: &SpaceTimeField, m: &SpaceTimeField, config: &NewtonConfig) -> f64 {
    if !u.is_finite() || !m.is_finite() {
        return f64::INFINITY;
    }
    let Ok(sys) = assemble_step(disc, u, m, config) else {
        return f64::INFINITY;
    };
    let grid = &disc.grid;
    let (dt, vol) = (grid.dt(), grid.cell_volume());
    let n = grid.n_nodes();
    let interior = config.exec.sum(grid.n_time(), |k| {
        let (hjb, fp) = sys.level_residual(u, m, k);
        hjb.iter().chain(&fp).map(|r| r * r).sum::<f64>() * vol * dt
    });
    let terminal: f64 = (0..n).map(|r| (u.get(grid.n_time(), r) - disc.terminal[r]).powi(2)).sum::<f64>() * vol;
    let initial: f64 = (0..n).map(|r| (m.get(0, r) - disc.initial[r]).powi(2)).sum::<f64>() * vol;
    0.5 * (interior + terminal + initial)
}

/// Merit function selected by `config.merit`.
pub fn configured_merit(disc: &Discretization, u: &SpaceTimeField, m: &SpaceTimeField, config: &NewtonConfig) -> f64 {
    match config.merit {
        MeritKind::Scheme => scheme_merit(disc, u, m, config),
        MeritKind::FiniteDifference => merit(disc, u, m, config.exec),
    }
}

/// HJB and FP residuals between levels `k` and `k + 1`.
pub fn level_residuals(disc: &Discretization, u: &SpaceTimeField, m: &SpaceTimeField, k: usize) -> (Vec<f64>, Vec<f64>) {
    let grid = &disc.grid;
    let p = disc.problem;
    let n = grid.n_nodes();
    let dt = grid.dt();
    let (uk, uk1, mk, mk1) = (u.level(k), u.level(k + 1), m.level(k), m.level(k + 1));
    let du = grad_h(grid, uk).expect("field on grid");
    let lu = laplace_h(grid, uk, Stencil::Compact).expect("field on grid");
    let lm = laplace_h(grid, mk1, Stencil::Compact).expect("field on grid");
    let mut hjb = vec![0.0; n];
    let mut flux: Vec<Vec<f64>> = vec![vec![0.0; n]; grid.dim()];
    for r in 0..n {
        let x = grid.node(r);
        let pr = du.at(r);
        hjb[r] = -(uk1[r] - uk[r]) / dt - p.nu * lu[r] + p.hamiltonian.eval(x, mk1[r], pr) - p.coupling.f(x, mk1[r]);
        let b = p.hamiltonian.grad_p(x, mk1[r], pr);
        for (a, f) in flux.iter_mut().enumerate() {
            f[r] = mk1[r] * b[a];
        }
    }
    let mut div = vec![0.0; n];
    let taps = central_taps(grid.h());
    for (a, f) in flux.iter().enumerate() {
        add_axis_stencil(grid, a, &taps, f, &mut div);
    }
    let fp = (0..n).map(|r| (mk1[r] - mk[r]) / dt - p.nu * lm[r] - div[r]).collect();
    (hjb, fp)
}

fn min_density(m: &SpaceTimeField) -> f64 {
    m.min()
}

/// Largest `|mass_k - mass_0|` over time levels, relative to the L1 norm of level 0.
pub fn mass_drift(m: &SpaceTimeField, grid: &GridSpec) -> f64 {
    let vol = grid.cell_volume();
    let scale = m.level(0).iter().map(|v| v.abs()).sum::<f64>() * vol;
    let mass0 = m.level(0).iter().sum::<f64>() * vol;
    let drift = m
        .levels()
        .map(|l| (l.iter().sum::<f64>() * vol - mass0).abs())
        .fold(0.0, f64::max);
    if scale > 0.0 {
        drift / scale
    } else {
        drift
    }
}

/// Algorithm without globalization: full Newton steps until both changes fall below tolerance.
pub fn local_newton(disc: &Discretization, config: &NewtonConfig) -> Result<NewtonRun> {
    config.validate()?;
    let (u0, m0) = initial_guess(disc, config.initial_guess);
    Ok(local_from(disc, config, u0, m0))
}

fn local_from(disc: &Discretization, config: &NewtonConfig, mut u: SpaceTimeField, mut m: SpaceTimeField) -> NewtonRun {
    let floor = disc.density_floor(config.breakdown_tol);
    let theta0 = configured_merit(disc, &u, &m, config);
    let mut hist = NewtonHistory::new(config.scheme, Mode::Local, theta0);
    let mut negative_at: Option<usize> = None;
    hist.status = Status::MaxIters;
    for it in 1..=config.max_newton_iters {
        let start = Instant::now();
        let step = newton_step(disc, &u, &m, config);
        let (u_new, m_new, rep) = match step {
            Ok(s) => s,
            Err(e) => {
                hist.status = if negative_at.is_some() {
                    Status::BreakdownNegativeDensity
                } else {
                    Status::LinearSolverFailure
                };
                hist.message = Some(e.to_string());
                break;
            }
        };
        let e_u = u_new.sup_distance(&u);
        let e_m = m_new.sup_distance(&m);
        let min_m = min_density(&m_new);
        u = u_new;
        m = m_new;
        let theta = configured_merit(disc, &u, &m, config);
        hist.records.push(IterationRecord {
            iteration: it,
            e_u,
            e_m,
            d_u: e_u,
            d_m: e_m,
            merit: theta,
            alpha: 1.0,
            sweeps: rep.sweeps,
            min_density: min_m,
            mass_drift: mass_drift(&m, &disc.grid),
            wall_time: start.elapsed().as_secs_f64(),
            line_search: None,
        });
        log::debug!("{} local it {it}: E(u) {e_u:.3e} E(m) {e_m:.3e} sweeps {} min m {min_m:.3e}", config.scheme, rep.sweeps);
        if !(e_u.is_finite() && e_m.is_finite()) {
            hist.status = if negative_at.is_some() {
                Status::BreakdownNegativeDensity
            } else {
                Status::LinearSolverFailure
            };
            hist.message = Some("iterate is not finite".into());
            break;
        }
        if e_u < config.tolerance && e_m < config.tolerance {
            hist.status = Status::Converged;
            break;
        }
        if min_m < floor {
            hist.negative_density_seen = true;
            let degraded = match negative_at {
                _ if config.breakdown_rule == BreakdownRule::NegativeDensity => true,
                Some(_) => {
                    let n = hist.records.len();
                    n >= 2 && {
                        let (a, b) = (&hist.records[n - 2], &hist.records[n - 1]);
                        b.e_u.max(b.e_m) >= a.e_u.max(a.e_m)
                    }
                }
                None => false,
            };
            negative_at.get_or_insert(it);
            if degraded {
                hist.status = Status::BreakdownNegativeDensity;
                hist.message = Some(format!("density {min_m:.3e} below floor {floor:.3e}"));
                break;
            }
        } else {
            negative_at = None;
        }
    }
    NewtonRun { u, m, history: hist }
}

/// Newton with Armijo backtracking on the merit function.
pub fn global_newton(disc: &Discretization, config: &NewtonConfig) -> Result<NewtonRun> {
    config.validate()?;
    let (u0, m0) = initial_guess(disc, config.initial_guess);
    Ok(global_from(disc, config, u0, m0))
}

fn global_from(disc: &Discretization, config: &NewtonConfig, mut u: SpaceTimeField, mut m: SpaceTimeField) -> NewtonRun {
    let mut theta = configured_merit(disc, &u, &m, config);
    let mut hist = NewtonHistory::new(config.scheme, Mode::Global, theta);
    hist.status = Status::MaxIters;
    let floor = disc.density_floor(config.breakdown_tol);
    for it in 1..=config.max_newton_iters {
        let start = Instant::now();
        let (u_dir, m_dir, rep) = match newton_step(disc, &u, &m, config) {
            Ok(s) => s,
            Err(e) => {
                hist.status = Status::LinearSolverFailure;
                hist.message = Some(e.to_string());
                break;
            }
        };
        let d_u = u_dir.sup_distance(&u);
        let d_m = m_dir.sup_distance(&m);
        let mut alpha = 1.0;
        let mut trials = 0;
        let accepted = loop {
            trials += 1;
            let u_try = u.lerp(&u_dir, alpha);
            let m_try = m.lerp(&m_dir, alpha);
            let theta_try = configured_merit(disc, &u_try, &m_try, config);
            if LineSearch::armijo_holds(theta_try, theta, alpha, config.c) {
                break Some((u_try, m_try, theta_try));
            }
            if trials > config.max_line_search {
                break None;
            }
            alpha *= config.beta;
        };
        let Some((u_new, m_new, theta_new)) = accepted else {
            hist.status = Status::LineSearchFailure;
            hist.message = Some(format!("no step length above beta^{} satisfied the Armijo test", config.max_line_search));
            break;
        };
        let e_u = u_new.sup_distance(&u);
        let e_m = m_new.sup_distance(&m);
        let min_m = min_density(&m_new);
        if min_m < floor {
            hist.negative_density_seen = true;
        }
        hist.records.push(IterationRecord {
            iteration: it,
            e_u,
            e_m,
            d_u,
            d_m,
            merit: theta_new,
            alpha,
            sweeps: rep.sweeps,
            min_density: min_m,
            mass_drift: mass_drift(&m_new, &disc.grid),
            wall_time: start.elapsed().as_secs_f64(),
            line_search: Some(LineSearch { theta_old: theta, theta_new, trials }),
        });
        log::debug!("{} global it {it}: alpha {alpha} theta {theta_new:.3e} |d| {:.3e}", config.scheme, d_u.max(d_m));
        u = u_new;
        m = m_new;
        theta = theta_new;
        // the direction norm equals the local-Newton change when alpha = 1
        if d_u < config.tolerance && d_m < config.tolerance {
            hist.status = Status::Converged;
            break;
        }
    }
    NewtonRun { u, m, history: hist }
}

/// Runs the configured globalization policy.
pub fn solve(disc: &Discretization, config: &NewtonConfig) -> Result<NewtonRun> {
    config.validate()?;
    match config.globalization {
        Globalization::Off => local_newton(disc, config),
        Globalization::Always => global_newton(disc, config),
        Globalization::OnFallback => {
            let local = local_newton(disc, config)?;
            if local.history.converged() {
                return Ok(local);
            }
            log::info!(
                "local {} Newton ended with {:?}; restarting with line search",
                config.scheme,
                local.history.status
            );
            let mut global = global_newton(disc, config)?;
            global.history.fallback_from = Some(Box::new(local.history));
            Ok(global)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorField {
    U,
    M,
}

/// Least-squares slope of `log E^{n+1}` against `log E^n`.
pub fn rate_fit_errors(errors: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = errors
        .windows(2)
        .filter(|w| w[0] > 0.0 && w[1] > 0.0 && w[0].is_finite() && w[1].is_finite())
        .map(|w| (w[0].ln(), w[1].ln()))
        .collect();
    if pts.len() < 2 || errors.len() < 3 {
        return Err(MfgError::InsufficientData(format!(
            "rate fit needs at least 3 positive errors, got {}",
            errors.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(MfgError::InsufficientData("errors are constant".into()));
    }
    Ok(sxy / sxx)
}

pub fn rate_fit(history: &NewtonHistory, field: ErrorField) -> Result<f64> {
    rate_fit_errors(&history.errors(field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{builtin_problem, manufactured_stationary, ProblemId};

    #[test]
    fn rate_fit_synthetic() {
        let mut q = vec![0.5f64];
        for _ in 0..4 {
            let l = *q.last().unwrap();
            q.push(l * l);
        }
        assert!((rate_fit_errors(&q).unwrap() - 2.0).abs() < 1e-10);
        let lin: Vec<f64> = (0..6).map(|i| 0.5f64.powi(i)).collect();
        assert!((rate_fit_errors(&lin).unwrap() - 1.0).abs() < 1e-10);
        assert!(rate_fit_errors(&[0.1, 0.01]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(NewtonConfig::default().validate().is_ok());
        assert!(NewtonConfig { c: 0.5, ..Default::default() }.validate().is_err());
        assert!(NewtonConfig { beta: 1.0, ..Default::default() }.validate().is_err());
        assert!(NewtonConfig { tolerance: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn initial_guess_broadcasts_data() {
        let p = builtin_problem(ProblemId::Test1);
        let disc = Discretization::new(&p, GridSpec::new(1, 20, 4, p.horizon).unwrap(), false).unwrap();
        let (u, m) = initial_guess(&disc, InitialGuess::Data);
        assert_eq!(u.sup_norm(), 0.0);
        for k in 0..5 {
            assert_eq!(m.level(k), &disc.initial[..]);
        }
        let (_, m) = initial_guess(&disc, InitialGuess::UniformM);
        assert!(m.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn merit_scales_quadratically_and_vanishes_on_boundary_data() {
        let p = builtin_problem(ProblemId::Test2a);
        let disc = Discretization::new(&p, GridSpec::new(1, 16, 8, p.horizon).unwrap(), false).unwrap();
        let (u, m) = initial_guess(&disc, InitialGuess::Data);
        let th = merit(&disc, &u, &m, Execution::Sequential);
        assert!(th > 0.0);
        let mut interior = 0.0;
        for k in 0..8 {
            let (a, b) = level_residuals(&disc, &u, &m, k);
            interior += a.iter().chain(&b).map(|r| r * r).sum::<f64>();
        }
        interior *= disc.grid.h() * disc.grid.dt();
        assert!((th - 0.5 * interior).abs() < 1e-9 * th);
    }

    #[test]
    fn newton_converges_to_manufactured_stationary_solution() {
        // arbitrates the sign conventions of both schemes
        let mf = manufactured_stationary(1, 0.05, 0.2, 0.05);
        for scheme in [Scheme::Sl, Scheme::Fd] {
            let n = 64;
            let h = 1.0 / n as f64;
            let dt = if scheme == Scheme::Sl { 0.5 * h.powf(1.5) } else { h / 4.0 };
            let grid = GridSpec::with_time_step(1, n, mf.problem.horizon, dt).unwrap();
            let disc = Discretization::new(&mf.problem, grid, false).unwrap();
            let mut cfg = NewtonConfig::with_scheme(scheme);
            cfg.globalization = Globalization::Off;
            let run = solve(&disc, &cfg).unwrap();
            assert!(run.history.converged(), "{scheme}: {:?}", run.history.status);
            let mut err_u: f64 = 0.0;
            let mut err_m: f64 = 0.0;
            for k in 0..grid.n_levels() {
                for r in 0..n {
                    let x = grid.node(r);
                    err_u = err_u.max((run.u.get(k, r) - (mf.u)(x)).abs());
                    err_m = err_m.max((run.m.get(k, r) - (mf.m)(x)).abs());
                }
            }
            assert!(err_u < 2e-2 && err_m < 2e-2, "{scheme}: {err_u} {err_m}");
        }
    }

    #[test]
    fn scheme_merit_vanishes_at_the_discrete_solution() {
        let p = builtin_problem(ProblemId::Test2a);
        for scheme in [Scheme::Sl, Scheme::Fd] {
            let grid = GridSpec::new(1, 32, 8, p.horizon).unwrap();
            let disc = Discretization::new(&p, grid, false).unwrap();
            let cfg = NewtonConfig { tolerance: 1e-8, ..NewtonConfig::with_scheme(scheme) };
            let run = solve(&disc, &cfg).unwrap();
            assert!(run.history.converged());
            let th = scheme_merit(&disc, &run.u, &run.m, &cfg);
            let bound = (10.0 * cfg.tolerance).powi(2) * p.horizon;
            assert!(th < bound, "{scheme}: {th:e}");
            let (u0, m0) = initial_guess(&disc, InitialGuess::Data);
            assert!(scheme_merit(&disc, &u0, &m0, &cfg) > 1.0);
            let fd = NewtonConfig { merit: MeritKind::FiniteDifference, ..cfg };
            assert_eq!(configured_merit(&disc, &u0, &m0, &fd), merit(&disc, &u0, &m0, cfg.exec));
        }
    }
}
