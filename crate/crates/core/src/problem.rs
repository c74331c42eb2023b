//! MFG problem data: Hamiltonian, coupling, initial density, terminal cost.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::expr::{Env, Expr, Var};
use crate::torus::{Field, GridSpec, Point};

pub type SpatialFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
/// A function of position and density, `(x, m) -> value`.
pub type LocalFn = Arc<dyn Fn(Point, f64) -> f64 + Send + Sync>;

pub fn spatial(f: impl Fn(Point) -> f64 + Send + Sync + 'static) -> SpatialFn {
    Arc::new(f)
}

pub fn local(f: impl Fn(Point, f64) -> f64 + Send + Sync + 'static) -> LocalFn {
    Arc::new(f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    SeparableQuadratic,
    NonseparableCongestion,
    Custom,
}

#[derive(Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Hamiltonian {
    /// `H = coeff |p|^2 - V(x)`.
    Separable { coeff: f64, potential: SpatialFn },
    /// `H = |p|^2 / (2 (1 + alpha m)^gamma)` with `m` clamped at zero.
    Congestion { gamma: f64, alpha: f64 },
    /// Closed-form `H(x, m, p)` with symbolic derivatives.
    Custom {
        source: String,
        h: Expr,
        grad: [Expr; 2],
        hess: [[Expr; 2]; 2],
        dm: Expr,
    },
}

impl fmt::Debug for Hamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hamiltonian::Separable { coeff, .. } => write!(f, "Separable {{ coeff: {coeff} }}"),
            Hamiltonian::Congestion { gamma, alpha } => {
                write!(f, "Congestion {{ gamma: {gamma}, alpha: {alpha} }}")
            }
            Hamiltonian::Custom { source, .. } => write!(f, "Custom({source})"),
        }
    }
}

fn env(x: Point, m: f64, p: [f64; 2]) -> Env {
    Env { x, m, p }
}

impl Hamiltonian {
    pub fn quadratic(potential: SpatialFn) -> Self {
        Hamiltonian::Separable { coeff: 0.5, potential }
    }

    pub fn congestion(gamma: f64) -> Self {
        Hamiltonian::Congestion { gamma, alpha: 4.0 }
    }

    pub fn from_expr(source: &str) -> Result<Self> {
        let h = Expr::parse(source)?;
        let g1 = h.derivative(Var::P1);
        let g2 = h.derivative(Var::P2);
        let hess = [
            [g1.derivative(Var::P1), g1.derivative(Var::P2)],
            [g2.derivative(Var::P1), g2.derivative(Var::P2)],
        ];
        let dm = h.derivative(Var::M);
        Ok(Hamiltonian::Custom {
            source: source.to_string(),
            h,
            grad: [g1, g2],
            hess,
            dm,
        })
    }

    pub fn kind(&self) -> HamiltonianKind {
        match self {
            Hamiltonian::Separable { .. } => HamiltonianKind::SeparableQuadratic,
            Hamiltonian::Congestion { .. } => HamiltonianKind::NonseparableCongestion,
            Hamiltonian::Custom { .. } => HamiltonianKind::Custom,
        }
    }

    /// True when `H` depends on the density.
    pub fn depends_on_m(&self) -> bool {
        match self {
            Hamiltonian::Separable { .. } => false,
            Hamiltonian::Congestion { .. } => true,
            Hamiltonian::Custom { h, .. } => h.depends_on(Var::M),
        }
    }

    pub fn potential(&self, x: Point) -> f64 {
        match self {
            Hamiltonian::Separable { potential, .. } => potential(x),
            _ => 0.0,
        }
    }

    fn congestion_factor(gamma: f64, alpha: f64, m: f64) -> f64 {
        (1.0 + alpha * m.max(0.0)).powf(-gamma)
    }

    pub fn eval(&self, x: Point, m: f64, p: [f64; 2]) -> f64 {
        let p2 = p[0] * p[0] + p[1] * p[1];
        match self {
            Hamiltonian::Separable { coeff, potential } => coeff * p2 - potential(x),
            Hamiltonian::Congestion { gamma, alpha } => {
                0.5 * p2 * Self::congestion_factor(*gamma, *alpha, m)
            }
            Hamiltonian::Custom { h, .. } => h.eval(&env(x, m, p)),
        }
    }

    pub fn grad_p(&self, x: Point, m: f64, p: [f64; 2]) -> [f64; 2] {
        match self {
            Hamiltonian::Separable { coeff, .. } => [2.0 * coeff * p[0], 2.0 * coeff * p[1]],
            Hamiltonian::Congestion { gamma, alpha } => {
                let c = Self::congestion_factor(*gamma, *alpha, m);
                [c * p[0], c * p[1]]
            }
            Hamiltonian::Custom { grad, .. } => {
                let e = env(x, m, p);
                [grad[0].eval(&e), grad[1].eval(&e)]
            }
        }
    }

    pub fn hess_pp(&self, x: Point, m: f64, p: [f64; 2]) -> [[f64; 2]; 2] {
        match self {
            Hamiltonian::Separable { coeff, .. } => [[2.0 * coeff, 0.0], [0.0, 2.0 * coeff]],
            Hamiltonian::Congestion { gamma, alpha } => {
                let c = Self::congestion_factor(*gamma, *alpha, m);
                [[c, 0.0], [0.0, c]]
            }
            Hamiltonian::Custom { hess, .. } => {
                let e = env(x, m, p);
                [
                    [hess[0][0].eval(&e), hess[0][1].eval(&e)],
                    [hess[1][0].eval(&e), hess[1][1].eval(&e)],
                ]
            }
        }
    }

    /// Partial derivative of `H` with respect to `m`.
    pub fn dm(&self, x: Point, m: f64, p: [f64; 2]) -> f64 {
        match self {
            Hamiltonian::Separable { .. } => 0.0,
            Hamiltonian::Congestion { gamma, alpha } => {
                if m <= 0.0 {
                    return 0.0;
                }
                let p2 = p[0] * p[0] + p[1] * p[1];
                -0.5 * p2 * gamma * alpha * (1.0 + alpha * m).powf(-gamma - 1.0)
            }
            Hamiltonian::Custom { dm, .. } => dm.eval(&env(x, m, p)),
        }
    }
}

/// Local coupling `F(x, m)` and its derivative in `m`.
#[derive(Clone)]
pub struct Coupling {
    pub label: String,
    f: LocalFn,
    f_prime: LocalFn,
    /// Whether `F' > 0` holds on `m >= 0`.
    pub monotone: bool,
}

impl fmt::Debug for Coupling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Coupling({}, monotone: {})", self.label, self.monotone)
    }
}

impl Coupling {
    pub fn new(label: &str, f: LocalFn, f_prime: LocalFn, monotone: bool) -> Self {
        Coupling { label: label.to_string(), f, f_prime, monotone }
    }

    pub fn zero() -> Self {
        Coupling::new("0", local(|_, _| 0.0), local(|_, _| 0.0), false)
    }

    pub fn square() -> Self {
        Coupling::new("m^2", local(|_, m| m * m), local(|_, m| 2.0 * m), false)
    }

    pub fn linear(zeta: f64) -> Self {
        Coupling::new(
            &format!("{zeta}*m"),
            local(|_, m| m).scaled(zeta),
            local(move |_, _| zeta),
            zeta > 0.0,
        )
    }

    pub fn from_expr(source: &str) -> Result<Self> {
        let f = Expr::parse(source)?;
        for v in [Var::P1, Var::P2] {
            if f.depends_on(v) {
                return Err(MfgError::Expression(format!(
                    "coupling `{source}` may not depend on p"
                )));
            }
        }
        let df = f.derivative(Var::M);
        let ev = move |e: &Expr| {
            let e = e.clone();
            local(move |x, m| e.eval(&Env { x, m, p: [0.0; 2] }))
        };
        Ok(Coupling::new(source, ev(&f), ev(&df), false))
    }

    pub fn f(&self, x: Point, m: f64) -> f64 {
        (self.f)(x, m)
    }

    pub fn f_prime(&self, x: Point, m: f64) -> f64 {
        (self.f_prime)(x, m)
    }
}

trait Scaled {
    fn scaled(self, s: f64) -> LocalFn;
}

impl Scaled for LocalFn {
    fn scaled(self, s: f64) -> LocalFn {
        local(move |x, m| s * self(x, m))
    }
}

#[derive(Clone)]
pub struct MfgProblem {
    pub name: String,
    pub dim: usize,
    pub nu: f64,
    pub horizon: f64,
    pub hamiltonian: Hamiltonian,
    pub coupling: Coupling,
    pub m0: SpatialFn,
    pub terminal_g: SpatialFn,
}

impl fmt::Debug for MfgProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MfgProblem")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("nu", &self.nu)
            .field("horizon", &self.horizon)
            .field("hamiltonian", &self.hamiltonian)
            .field("coupling", &self.coupling)
            .finish()
    }
}

impl MfgProblem {
    pub fn sigma(&self) -> f64 {
        (2.0 * self.nu).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(MfgError::param("dim", format!("must be 1 or 2, got {}", self.dim)));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(MfgError::param("nu", format!("must be positive, got {}", self.nu)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(MfgError::param("horizon", format!("must be positive, got {}", self.horizon)));
        }
        Ok(())
    }

    /// Samples `m0`, optionally shifted to be nonnegative and scaled to unit mass.
    pub fn initial_density(&self, grid: &GridSpec, normalize: bool) -> Result<Field> {
        let mut m = sample(&*self.m0, grid)?;
        if normalize {
            let min = m.iter().cloned().fold(f64::INFINITY, f64::min);
            if min < 0.0 {
                m.iter_mut().for_each(|v| *v -= min);
            }
            let mass: f64 = m.iter().sum::<f64>() * grid.cell_volume();
            if mass <= 0.0 {
                return Err(MfgError::Domain("initial density has zero mass".into()));
            }
            m.iter_mut().for_each(|v| *v /= mass);
        }
        Ok(m)
    }

    pub fn terminal_cost(&self, grid: &GridSpec) -> Result<Field> {
        sample(&*self.terminal_g, grid)
    }
}

/// Evaluates `f` at every node; a non-finite value is a domain error.
pub fn sample(f: &dyn Fn(Point) -> f64, grid: &GridSpec) -> Result<Field> {
    let mut out = Vec::with_capacity(grid.n_nodes());
    for r in 0..grid.n_nodes() {
        let x = grid.node(r);
        let v = f(x);
        if !v.is_finite() {
            let (i, j) = grid.indices(r);
            return Err(MfgError::Domain(format!(
                "non-finite sample {v} at node ({i}, {j}), x = ({}, {})",
                x[0], x[1]
            )));
        }
        out.push(v);
    }
    Ok(Field::from(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemId {
    Test1,
    Test2a,
    Test2b,
    Test3,
    Test4,
}

impl ProblemId {
    pub const ALL: [ProblemId; 5] = [
        ProblemId::Test1,
        ProblemId::Test2a,
        ProblemId::Test2b,
        ProblemId::Test3,
        ProblemId::Test4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProblemId::Test1 => "test1",
            ProblemId::Test2a => "test2a",
            ProblemId::Test2b => "test2b",
            ProblemId::Test3 => "test3",
            ProblemId::Test4 => "test4",
        }
    }
}

impl fmt::Display for ProblemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProblemId {
    type Err = MfgError;

    fn from_str(s: &str) -> Result<Self> {
        ProblemId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| MfgError::config("problem", format!("unknown problem id `{s}`")))
    }
}

fn test1_m0(x: Point) -> f64 {
    if (0.25..=0.75).contains(&x[0]) {
        let s = (2.0 * PI * (x[0] - 0.25)).sin();
        4.0 * s * s
    } else {
        0.0
    }
}

fn test2_potential(x: Point) -> f64 {
    200.0 * (2.0 * PI * x[0]).cos() - 10.0 * (4.0 * PI * x[0]).cos()
}

pub fn builtin_problem(id: ProblemId) -> MfgProblem {
    match id {
        ProblemId::Test1 => MfgProblem {
            name: id.to_string(),
            dim: 1,
            nu: 0.05,
            horizon: 0.05,
            hamiltonian: Hamiltonian::quadratic(spatial(|_| 0.0)),
            coupling: Coupling::new(
                "4*min(4,m) - 3*m0(x)",
                local(|x, m| 4.0 * m.min(4.0) - 3.0 * test1_m0(x)),
                // zero at the kink m = 4
                local(|_, m| if m < 4.0 { 4.0 } else { 0.0 }),
                false,
            ),
            m0: spatial(test1_m0),
            terminal_g: spatial(|_| 0.0),
        },
        ProblemId::Test2a | ProblemId::Test2b => MfgProblem {
            name: id.to_string(),
            dim: 1,
            nu: if id == ProblemId::Test2a { 0.4 } else { 0.02 },
            horizon: 0.01,
            hamiltonian: Hamiltonian::quadratic(spatial(test2_potential)),
            coupling: Coupling::square(),
            m0: spatial(|x| 1.0 + 0.5 * (2.0 * PI * x[0]).cos()),
            terminal_g: spatial(|x| (4.0 * PI * x[0]).sin() + 0.1 * (10.0 * PI * x[0]).cos()),
        },
        ProblemId::Test3 => MfgProblem {
            name: id.to_string(),
            dim: 1,
            nu: 0.05,
            horizon: 1.0,
            hamiltonian: Hamiltonian::congestion(1.5),
            coupling: Coupling::linear(1.0),
            m0: spatial(|x| if (0.375..=0.625).contains(&x[0]) { 4.0 } else { 0.0 }),
            terminal_g: spatial(|x| {
                let a = x[0] - 0.3;
                let b = x[0] - 0.7;
                10.0 * (a * a).min(b * b)
            }),
        },
        ProblemId::Test4 => MfgProblem {
            name: id.to_string(),
            dim: 2,
            nu: 0.4,
            horizon: 1.0,
            hamiltonian: Hamiltonian::Separable {
                coeff: 1.0,
                potential: spatial(|x| {
                    -((2.0 * PI * x[0]).sin() + (2.0 * PI * x[1]).sin() + (4.0 * PI * x[0]).cos())
                }),
            },
            coupling: Coupling::square(),
            m0: spatial(|x| 1.0 + 12.0 * (2.0 * PI * x[0]).cos() + 12.0 * (2.0 * PI * x[1]).cos()),
            terminal_g: spatial(|x| (2.0 * PI * x[0]).cos() + (2.0 * PI * x[1]).cos()),
        },
    }
}

/// Stationary solution `(u*, m*)` of a quadratic MFG with `F = m^2`.
///
/// `u*(x) = a Σ_axes cos(2π x_a)`, `m* = exp(-u*/ν) / Z`, and the potential
/// is chosen so the HJB equation holds. With `G = u*` and `m0 = m*` the
/// time-dependent system is solved by `(u*, m*)` at every time.
#[derive(Clone)]
pub struct Manufactured {
    pub problem: MfgProblem,
    pub u: SpatialFn,
    pub m: SpatialFn,
}

pub fn manufactured_stationary(dim: usize, amplitude: f64, nu: f64, horizon: f64) -> Manufactured {
    let a = amplitude;
    let axes = dim.min(2);
    let u = move |x: Point| (0..axes).map(|k| a * (2.0 * PI * x[k]).cos()).sum::<f64>();
    // periodic trapezoid rule is spectrally accurate
    let n = 2048;
    let z1: f64 = (0..n)
        .map(|i| (-a * (2.0 * PI * i as f64 / n as f64).cos() / nu).exp())
        .sum::<f64>()
        / n as f64;
    let z = z1.powi(axes as i32);
    let m = move |x: Point| (-u(x) / nu).exp() / z;
    let potential = move |x: Point| {
        let mut lap = 0.0;
        let mut grad2 = 0.0;
        for k in 0..axes {
            let w = 2.0 * PI;
            lap += -a * w * w * (w * x[k]).cos();
            let g = -a * w * (w * x[k]).sin();
            grad2 += g * g;
        }
        let mm = m(x);
        // H = |p|^2/2 - V, so -νΔu + |Du|^2/2 - V = F(m*)
        -nu * lap + 0.5 * grad2 - mm * mm
    };
    Manufactured {
        problem: MfgProblem {
            name: "stationary".into(),
            dim,
            nu,
            horizon,
            hamiltonian: Hamiltonian::quadratic(spatial(potential)),
            coupling: Coupling::square(),
            m0: spatial(m),
            terminal_g: spatial(u),
        },
        u: spatial(u),
        m: spatial(m),
    }
}
