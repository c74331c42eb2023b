//! Operator property battery: interpolation, transport, difference operators
//! and the noise quadrature, checked on seeded random data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sl::{characteristic_feet, Transport, ZForm, ZOperator};
use crate::sparse::SparseOperator;
use crate::torus::{
    d1, d2, derivative_matrix, div_h, grad_h, interp, interp_weights, laplace_h, laplace_matrix, DriftField, Field,
    GridSpec, Point, Stencil,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    AtMost(f64),
    AtLeast(f64),
    Within(f64, f64),
}

impl Bound {
    pub fn holds(self, value: f64) -> bool {
        match self {
            Bound::AtMost(t) => value <= t,
            Bound::AtLeast(t) => value >= t,
            Bound::Within(lo, hi) => value >= lo && value <= hi,
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::AtMost(t) => write!(f, "<= {t:.1e}"),
            Bound::AtLeast(t) => write!(f, ">= {t}"),
            Bound::Within(lo, hi) => write!(f, "in [{lo}, {hi}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropCheck {
    pub name: String,
    pub value: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl PropCheck {
    fn new(name: &str, value: f64, bound: Bound) -> Self {
        PropCheck { name: name.to_string(), value, bound, passed: value.is_finite() && bound.holds(value) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropReport {
    pub seed: u64,
    pub checks: Vec<PropCheck>,
}

impl PropReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn grids() -> [GridSpec; 2] {
    [GridSpec::new(1, 32, 4, 1.0).expect("grid"), GridSpec::new(2, 12, 4, 1.0).expect("grid")]
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, spread: f64) -> Point {
    let mut x = [0.0; 2];
    for c in x.iter_mut().take(dim) {
        *c = rng.gen_range(-spread..1.0 + spread);
    }
    x
}

fn random_field(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_drift(rng: &mut ChaCha8Rng, grid: &GridSpec, scale: f64) -> DriftField {
    let comps = (0..grid.dim())
        .map(|_| Field::from((0..grid.n_nodes()).map(|_| rng.gen_range(-scale..scale)).collect::<Vec<_>>()))
        .collect();
    DriftField::from_components(comps).expect("drift")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn sup(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// `|<A x, y> - <x, B y>|` relative to the sizes of both sides.
fn adjoint_gap(ax: &[f64], y: &[f64], x: &[f64], by: &[f64]) -> f64 {
    let scale = norm(ax) * norm(y) + norm(x) * norm(by);
    if scale == 0.0 {
        0.0
    } else {
        (dot(ax, y) - dot(x, by)).abs() / scale
    }
}

fn apply(op: &SparseOperator, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    op.apply(x, &mut out);
    out
}

pub fn interpolation_partition_of_unity(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for grid in [GridSpec::new(1, 17, 1, 1.0).expect("grid"), GridSpec::new(2, 13, 1, 1.0).expect("grid")] {
        for _ in 0..2000 {
            let x = random_point(rng, grid.dim(), 2.0);
            let s: f64 = interp_weights(x, &grid).iter().map(|(_, w)| w).sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    worst
}

/// Largest row-sum defect and most negative entry of random transport matrices.
pub fn transport_rows(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (mut defect, mut min): (f64, f64) = (0.0, 0.0);
    for grid in grids() {
        let q = random_drift(rng, &grid, 2.0);
        let a = Transport::new(&grid, &q, 0.01, (2.0f64 * 0.3).sqrt()).to_sparse();
        defect = a.row_sums().iter().fold(defect, |m, s| m.max((s - 1.0).abs()));
        min = min.min(a.min_value());
    }
    (defect, -min)
}

pub fn adjoint_identities(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for grid in grids() {
        let n = grid.n_nodes();
        let x = random_field(rng, n);
        let y = random_field(rng, n);

        let q = random_drift(rng, &grid, 2.0);
        let t = Transport::new(&grid, &q, 0.01, 0.8);
        let (mut ax, mut aty) = (vec![0.0; n], vec![0.0; n]);
        t.apply(&x, &mut ax);
        t.apply_transpose(&y, &mut aty);
        worst = worst.max(adjoint_gap(&ax, &y, &x, &aty));
        let sparse = t.to_sparse();
        worst = worst.max(sup(&ax.iter().zip(apply(&sparse, &x)).map(|(a, b)| a - b).collect::<Vec<_>>()));
        worst = worst.max(adjoint_gap(&ax, &y, &x, &apply(&sparse.transpose(), &y)));

        // central differences are skew-adjoint, the Laplacians self-adjoint
        for axis in 0..grid.dim() {
            let d = derivative_matrix(&grid, axis).expect("axis");
            let neg: Vec<f64> = apply(&d, &y).iter().map(|v| -v).collect();
            worst = worst.max(adjoint_gap(&apply(&d, &x), &y, &x, &neg));
        }
        for stencil in [Stencil::Compact, Stencil::Composed] {
            let l = laplace_matrix(&grid, stencil);
            worst = worst.max(adjoint_gap(&apply(&l, &x), &y, &x, &apply(&l, &y)));
        }

        // <div(m p), phi> = -<m p, grad phi>
        let p = random_drift(rng, &grid, 1.0);
        let div = div_h(&grid, &x, &p).expect("div");
        let g = grad_h(&grid, &y).expect("grad");
        let flux: Vec<f64> = (0..n).map(|r| (0..grid.dim()).map(|a| x[r] * p.component(a)[r] * g.component(a)[r]).sum()).collect();
        let lhs = dot(&div, &y);
        let rhs = -flux.iter().sum::<f64>();
        worst = worst.max((lhs - rhs).abs() / (norm(&div) * norm(&y) + sup(&flux) * n as f64));

        let coeff: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                let a: f64 = rng.gen_range(0.1..2.0);
                let c: f64 = rng.gen_range(0.1..2.0);
                [a, 0.3 * (a * c).sqrt(), c]
            })
            .collect();
        let z = ZOperator::new(&grid, coeff, ZForm::Divergence);
        let (mut zx, mut zy) = (vec![0.0; n], vec![0.0; n]);
        z.apply(&x, &mut zx);
        z.apply(&y, &mut zy);
        worst = worst.max(adjoint_gap(&zx, &y, &x, &zy));
    }
    worst
}

/// Node sum of each conservative difference operator, scaled by its natural size.
pub fn zero_sums(rng: &mut ChaCha8Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for grid in grids() {
        let n = grid.n_nodes();
        let h = grid.h();
        let v = random_field(rng, n);
        let size = n as f64 * sup(&v);
        let mut ops: Vec<(Vec<f64>, f64)> = vec![(d1(&grid, &v).expect("d1").to_vec(), size / h)];
        if grid.dim() == 2 {
            ops.push((d2(&grid, &v).expect("d2").to_vec(), size / h));
        }
        for stencil in [Stencil::Compact, Stencil::Composed] {
            ops.push((laplace_h(&grid, &v, stencil).expect("laplace").to_vec(), size / (h * h)));
        }
        let p = random_drift(rng, &grid, 1.0);
        ops.push((div_h(&grid, &v, &p).expect("div").to_vec(), size / h));
        for (out, scale) in ops {
            worst = worst.max(out.iter().sum::<f64>().abs() / scale);
        }
    }
    worst
}

/// Ratio of sup interpolation errors of a smooth function at `h` and `h / 2`.
pub fn interpolation_order(rng: &mut ChaCha8Rng) -> f64 {
    let f = |x: Point| (2.0 * std::f64::consts::PI * x[0]).sin() * (2.0 * std::f64::consts::PI * x[1]).cos()
        + 0.3 * (4.0 * std::f64::consts::PI * x[0]).cos();
    let points: Vec<Point> = (0..2000).map(|_| random_point(rng, 2, 0.0)).collect();
    let err = |n: usize| {
        let grid = GridSpec::new(2, n, 1, 1.0).expect("grid");
        let v: Vec<f64> = (0..grid.n_nodes()).map(|r| f(grid.node(r))).collect();
        points.iter().fold(0.0, |m: f64, &x| m.max((interp(&v, x, &grid) - f(x)).abs()))
    };
    err(16) / err(32)
}

/// Observed order of the noise quadrature reproducing the generator on a quadratic.
pub fn quadrature_order(rng: &mut ChaCha8Rng) -> f64 {
    let nu: f64 = 0.3;
    let sigma = (2.0 * nu).sqrt();
    let q = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let x = [0.4, 0.6];
    let c: [f64; 6] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
    let phi = |y: Point| c[0] + c[1] * y[0] + c[2] * y[1] + c[3] * y[0] * y[0] + c[4] * y[0] * y[1] + c[5] * y[1] * y[1];
    let lap = 2.0 * c[3] + 2.0 * c[5];
    let grad = [c[1] + 2.0 * c[3] * x[0] + c[4] * x[1], c[2] + c[4] * x[0] + 2.0 * c[5] * x[1]];
    let res = |dt: f64| {
        let feet = characteristic_feet(x, [-q[0], -q[1]], dt, sigma, 2);
        let avg = feet.iter().map(|&y| phi(y)).sum::<f64>() / feet.len() as f64;
        (avg - phi(x) - dt * (nu * lap - q[0] * grad[0] - q[1] * grad[1])).abs()
    };
    (res(1e-2) / res(5e-3)).log2()
}

pub fn run_props(seed: u64) -> PropReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (row_defect, negativity) = transport_rows(&mut rng);
    let checks = vec![
        PropCheck::new("interpolation_partition_of_unity", interpolation_partition_of_unity(&mut rng), Bound::AtMost(1e-14)),
        PropCheck::new("transport_row_sums", row_defect, Bound::AtMost(1e-12)),
        PropCheck::new("transport_nonnegative", negativity, Bound::AtMost(0.0)),
        PropCheck::new("adjoint_identities", adjoint_identities(&mut rng), Bound::AtMost(1e-13)),
        PropCheck::new("difference_operator_zero_sums", zero_sums(&mut rng), Bound::AtMost(1e-12)),
        PropCheck::new("interpolation_error_ratio", interpolation_order(&mut rng), Bound::Within(3.2, 4.8)),
        PropCheck::new("quadrature_order", quadrature_order(&mut rng), Bound::AtLeast(1.7)),
    ];
    PropReport { seed, checks }
}
