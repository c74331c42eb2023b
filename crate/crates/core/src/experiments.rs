//! Experiment harness: run configuration, benchmark runs with CSV/JSON
//! artifacts, self-convergence studies and scheme comparisons.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{MfgError, Result};
use crate::exec::Execution;
use crate::expr::{Env, Expr, Var};
use crate::linear::Scheme;
use crate::newton::{rate_fit, solve, Discretization, ErrorField, NewtonConfig, NewtonHistory, NewtonRun, Status};
use crate::problem::{builtin_problem, spatial, Coupling, Hamiltonian, MfgProblem, ProblemId};
use crate::torus::{interp, GridSpec, SpaceTimeField};

/// Column header of the field files.
pub const FIELDS_HEADER: &str = "k,i,j,x1,x2,value";

/// A problem given inline as expressions in `x`, `y`, `m`, `p`, `p2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub dim: usize,
    pub nu: f64,
    pub horizon: f64,
    /// `H(x, m, p)`.
    pub hamiltonian: String,
    /// `F(x, m)`.
    pub coupling: String,
    pub m0: String,
    pub terminal: String,
}

fn default_name() -> String {
    "inline".into()
}

impl ProblemSpec {
    pub fn to_problem(&self) -> Result<MfgProblem> {
        let spatial_expr = |field: &str, src: &str| -> Result<_> {
            let e = Expr::parse(src).map_err(|err| MfgError::config(field, err.to_string()))?;
            if [Var::M, Var::P1, Var::P2].into_iter().any(|v| e.depends_on(v)) {
                return Err(MfgError::config(field, "may depend on x and y only"));
            }
            Ok(spatial(move |x| e.eval(&Env { x, m: 0.0, p: [0.0; 2] })))
        };
        let problem = MfgProblem {
            name: self.name.clone(),
            dim: self.dim,
            nu: self.nu,
            horizon: self.horizon,
            hamiltonian: Hamiltonian::from_expr(&self.hamiltonian)
                .map_err(|e| MfgError::config("problem.hamiltonian", e.to_string()))?,
            coupling: Coupling::from_expr(&self.coupling).map_err(|e| MfgError::config("problem.coupling", e.to_string()))?,
            m0: spatial_expr("problem.m0", &self.m0)?,
            terminal_g: spatial_expr("problem.terminal", &self.terminal)?,
        };
        problem.validate()?;
        Ok(problem)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSource {
    Builtin(ProblemId),
    Inline(ProblemSpec),
}

impl ProblemSource {
    pub fn to_problem(&self) -> Result<MfgProblem> {
        match self {
            ProblemSource::Builtin(id) => Ok(builtin_problem(*id)),
            ProblemSource::Inline(spec) => spec.to_problem(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ProblemSource::Builtin(id) => id.to_string(),
            ProblemSource::Inline(spec) => spec.name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DtRule {
    /// `h^{3/2}/2` for the semi-Lagrangian scheme, `h/4` for finite differences.
    #[serde(rename = "auto")]
    Auto,
    #[serde(rename = "h^1.5/2")]
    HThreeHalvesHalf,
    #[serde(rename = "h/4")]
    HQuarter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DtPolicy {
    Explicit(f64),
    Rule(DtRule),
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy::Rule(DtRule::Auto)
    }
}

impl DtPolicy {
    pub fn target(self, scheme: Scheme, h: f64) -> f64 {
        match self {
            DtPolicy::Explicit(dt) => dt,
            DtPolicy::Rule(DtRule::HThreeHalvesHalf) => 0.5 * h.powf(1.5),
            DtPolicy::Rule(DtRule::HQuarter) => h / 4.0,
            DtPolicy::Rule(DtRule::Auto) => match scheme {
                Scheme::Sl => 0.5 * h.powf(1.5),
                Scheme::Fd => h / 4.0,
            },
        }
    }
}

impl std::str::FromStr for DtPolicy {
    type Err = MfgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(DtPolicy::Rule(DtRule::Auto)),
            "h^1.5/2" => Ok(DtPolicy::Rule(DtRule::HThreeHalvesHalf)),
            "h/4" => Ok(DtPolicy::Rule(DtRule::HQuarter)),
            _ => s
                .parse::<f64>()
                .map(DtPolicy::Explicit)
                .map_err(|_| MfgError::config("dt", format!("expected auto, h^1.5/2, h/4 or a number, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSource,
    pub n_space: usize,
    #[serde(default)]
    pub dt: DtPolicy,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Seed for the randomized property checks; runs themselves are deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub parallel: Option<bool>,
    #[serde(default)]
    pub newton: NewtonConfig,
}

impl RunConfig {
    pub fn new(problem: ProblemId, scheme: Scheme, n_space: usize) -> Self {
        RunConfig {
            problem: ProblemSource::Builtin(problem),
            n_space,
            dt: DtPolicy::default(),
            output: None,
            seed: 0,
            parallel: None,
            newton: NewtonConfig::with_scheme(scheme),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("bytes {}..{}", s.start, s.end)).unwrap_or_else(|| "config".into());
            MfgError::config(&field, e.message().to_string())
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn execution(&self) -> Execution {
        match self.parallel {
            Some(true) => Execution::Parallel,
            Some(false) => Execution::Sequential,
            None => Execution::default(),
        }
    }

    pub fn grid(&self, problem: &MfgProblem) -> Result<GridSpec> {
        if self.n_space < 3 {
            return Err(MfgError::config("n_space", format!("must be at least 3, got {}", self.n_space)));
        }
        let h = 1.0 / self.n_space as f64;
        let dt = self.dt.target(self.newton.scheme, h);
        if !(dt.is_finite() && dt > 0.0) {
            return Err(MfgError::config("dt", format!("must be positive, got {dt}")));
        }
        GridSpec::with_time_step(problem.dim, self.n_space, problem.horizon, dt)
    }

    pub fn validate(&self) -> Result<()> {
        let problem = self.problem.to_problem()?;
        self.grid(&problem)?;
        self.newton.validate()
    }
}

/// Resolved settings and timings, enough to repeat a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub config: RunConfig,
    pub problem: String,
    pub dim: usize,
    pub h: f64,
    pub dt: f64,
    pub n_time: usize,
    pub nu: f64,
    pub horizon: f64,
    pub execution: Execution,
    pub version: String,
    pub parallel_feature: bool,
    pub solve_seconds: f64,
    pub status: Status,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub grid: GridSpec,
    pub run: NewtonRun,
    pub solve_seconds: f64,
}

/// Solves the configured problem without touching the disk.
pub fn execute(config: &RunConfig) -> Result<RunOutcome> {
    let problem = config.problem.to_problem()?;
    let grid = config.grid(&problem)?;
    let mut newton = config.newton;
    newton.exec = config.execution();
    newton.validate()?;
    let disc = Discretization::new(&problem, grid, newton.normalize_m0)?;
    let start = Instant::now();
    let run = solve(&disc, &newton)?;
    Ok(RunOutcome { grid, run, solve_seconds: start.elapsed().as_secs_f64() })
}

/// Solves and writes `fields_u.csv`, `fields_m.csv`, `history.json` and `meta.json` to `dir`.
pub fn run(config: &RunConfig, dir: &Path) -> Result<RunOutcome> {
    let outcome = execute(config)?;
    write_artifacts(config, &outcome, dir)?;
    Ok(outcome)
}

pub fn write_artifacts(config: &RunConfig, outcome: &RunOutcome, dir: &Path) -> Result<()> {
    let problem = config.problem.to_problem()?;
    fs::create_dir_all(dir)?;
    let grid = &outcome.grid;
    write_fields_csv(&dir.join("fields_u.csv"), grid, &outcome.run.u)?;
    write_fields_csv(&dir.join("fields_m.csv"), grid, &outcome.run.m)?;
    write_json(&dir.join("history.json"), &outcome.run.history)?;
    let mut resolved = config.clone();
    resolved.output = Some(dir.to_path_buf());
    let meta = RunMeta {
        config: resolved,
        problem: config.problem.name(),
        dim: grid.dim(),
        h: grid.h(),
        dt: grid.dt(),
        n_time: grid.n_time(),
        nu: problem.nu,
        horizon: problem.horizon,
        execution: config.execution(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        parallel_feature: cfg!(feature = "parallel"),
        solve_seconds: outcome.solve_seconds,
        status: outcome.run.history.status,
        iterations: outcome.run.history.iterations(),
    };
    write_json(&dir.join("meta.json"), &meta)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| MfgError::Format(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// `%.12e` as in C: mantissa with 12 decimals, signed exponent of at least two digits.
pub fn format_sci(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.12e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

pub fn fields_csv(grid: &GridSpec, field: &SpaceTimeField) -> String {
    let mut out = String::with_capacity(64 * field.as_slice().len() + 32);
    out.push_str(FIELDS_HEADER);
    out.push('\n');
    for (k, level) in field.levels().enumerate() {
        for (r, v) in level.iter().enumerate() {
            let (i, j) = grid.indices(r);
            let x = grid.node(r);
            let _ = writeln!(out, "{k},{i},{j},{},{},{}", format_sci(x[0]), format_sci(x[1]), format_sci(*v));
        }
    }
    out
}

pub fn write_fields_csv(path: &Path, grid: &GridSpec, field: &SpaceTimeField) -> Result<()> {
    fs::write(path, fields_csv(grid, field))?;
    Ok(())
}

/// A field read back from CSV together with the grid shape it implies.
#[derive(Debug, Clone)]
pub struct FieldTable {
    pub dim: usize,
    pub n_space: usize,
    pub field: SpaceTimeField,
}

pub fn parse_fields_csv(text: &str) -> Result<FieldTable> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| MfgError::Format("empty fields file".into()))?;
    if header.trim() != FIELDS_HEADER {
        return Err(MfgError::Format(format!("expected header `{FIELDS_HEADER}`, got `{header}`")));
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(MfgError::Format(format!("line {}: expected 6 columns, got {}", ln + 2, cols.len())));
        }
        let int = |c: usize, name: &str| -> Result<usize> {
            cols[c].trim().parse().map_err(|_| MfgError::Format(format!("line {}: bad `{name}` value `{}`", ln + 2, cols[c])))
        };
        let value: f64 = cols[5]
            .trim()
            .parse()
            .map_err(|_| MfgError::Format(format!("line {}: bad `value` value `{}`", ln + 2, cols[5])))?;
        rows.push((int(0, "k")?, int(1, "i")?, int(2, "j")?, value));
    }
    if rows.is_empty() {
        return Err(MfgError::Format("fields file has no data rows".into()));
    }
    let n_levels = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
    let max_i = rows.iter().map(|r| r.1).max().unwrap_or(0);
    let max_j = rows.iter().map(|r| r.2).max().unwrap_or(0);
    let n_space = max_i + 1;
    let dim = if max_j > 0 { 2 } else { 1 };
    if dim == 2 && max_j != max_i {
        return Err(MfgError::Format(format!("grid is not square: {} by {}", max_i + 1, max_j + 1)));
    }
    let n_nodes = n_space.pow(dim as u32);
    if rows.len() != n_levels * n_nodes {
        return Err(MfgError::Format(format!(
            "expected {} rows for {n_levels} levels of {n_nodes} nodes, got {}",
            n_levels * n_nodes,
            rows.len()
        )));
    }
    let mut values = vec![f64::NAN; n_levels * n_nodes];
    for (k, i, j, v) in rows {
        values[k * n_nodes + i + n_space * j] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(MfgError::Format("duplicate or missing (k, i, j) rows".into()));
    }
    Ok(FieldTable { dim, n_space, field: SpaceTimeField::from_flat(n_nodes, values)? })
}

pub fn read_fields_csv(path: &Path) -> Result<FieldTable> {
    parse_fields_csv(&fs::read_to_string(path)?)
}

/// Samples `field` (on `from`) at the nodes and times of `to`: piecewise
/// linear in time, bilinear in space.
pub fn resample(field: &SpaceTimeField, from: &GridSpec, to: &GridSpec) -> SpaceTimeField {
    let mut out = SpaceTimeField::zeros(to.n_nodes(), to.n_levels());
    for k in 0..to.n_levels() {
        let s = (to.time(k) / from.dt()).clamp(0.0, from.n_time() as f64);
        let k0 = (s.floor() as usize).min(from.n_time());
        let k1 = (k0 + 1).min(from.n_time());
        let w = s - k0 as f64;
        let (l0, l1) = (field.level(k0), field.level(k1));
        for (r, v) in out.level_mut(k).iter_mut().enumerate() {
            let x = to.node(r);
            *v = (1.0 - w) * interp(l0, x, from) + w * interp(l1, x, from);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// A run of the same configuration on a grid refined by `factor`.
    FinestSelf { factor: usize },
    /// Fields files in this crate's CSV schema.
    ExternalFile { u: PathBuf, m: PathBuf },
}

impl Default for Reference {
    fn default() -> Self {
        Reference::FinestSelf { factor: 4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub h: f64,
    pub n_space: usize,
    pub n_time: usize,
    pub error_u: f64,
    pub error_m: f64,
    pub wall_time: f64,
    pub iterations: usize,
    pub status: Status,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub problem: String,
    pub scheme: Scheme,
    pub reference: Reference,
    pub reference_n_space: usize,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("h,n_space,n_time,error_u,error_m,wall_time,iterations,status\n");
        for r in &self.rows {
            let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{status}",
                format_sci(r.h),
                r.n_space,
                r.n_time,
                format_sci(r.error_u),
                format_sci(r.error_m),
                format_sci(r.wall_time),
                r.iterations
            );
        }
        out
    }
}

/// Errors of each grid in `n_list` (coarse to fine) against a reference.
pub fn convergence_study(base: &RunConfig, n_list: &[usize], reference: &Reference) -> Result<ConvergenceTable> {
    if n_list.len() < 2 {
        return Err(MfgError::config("n_list", "needs at least two grids"));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MfgError::config("n_list", "grid sizes must increase (h descending)"));
    }
    let problem = base.problem.to_problem()?;
    let (ref_u, ref_m, ref_grid) = match reference {
        Reference::FinestSelf { factor } => {
            if *factor < 2 {
                return Err(MfgError::config("reference.factor", "must be at least 2"));
            }
            let cfg = RunConfig { n_space: n_list[n_list.len() - 1] * factor, ..base.clone() };
            let out = execute(&cfg)?;
            if !out.run.history.converged() {
                return Err(MfgError::config(
                    "reference",
                    format!("reference run ended with {:?}", out.run.history.status),
                ));
            }
            (out.run.u, out.run.m, out.grid)
        }
        Reference::ExternalFile { u, m } => {
            let tu = read_fields_csv(u)?;
            let tm = read_fields_csv(m)?;
            if tu.dim != problem.dim || tm.dim != problem.dim || tu.n_space != tm.n_space {
                return Err(MfgError::config("reference", "reference files do not match the problem dimension"));
            }
            if tu.field.n_levels() != tm.field.n_levels() || tu.field.n_levels() < 2 {
                return Err(MfgError::config("reference", "reference files have different or too few time levels"));
            }
            let grid = GridSpec::new(problem.dim, tu.n_space, tu.field.n_levels() - 1, problem.horizon)?;
            (tu.field, tm.field, grid)
        }
    };
    let cells: Vec<Result<ConvergenceRow>> = base.execution().map(n_list.len(), |idx| {
        let cfg = RunConfig { n_space: n_list[idx], ..base.clone() };
        let out = execute(&cfg)?;
        let ru = resample(&ref_u, &ref_grid, &out.grid);
        let rm = resample(&ref_m, &ref_grid, &out.grid);
        Ok(ConvergenceRow {
            h: out.grid.h(),
            n_space: n_list[idx],
            n_time: out.grid.n_time(),
            error_u: out.run.u.sup_distance(&ru),
            error_m: out.run.m.sup_distance(&rm),
            wall_time: out.solve_seconds,
            iterations: out.run.history.iterations(),
            status: out.run.history.status,
        })
    });
    Ok(ConvergenceTable {
        problem: base.problem.name(),
        scheme: base.newton.scheme,
        reference: reference.clone(),
        reference_n_space: ref_grid.n_space(),
        rows: cells.into_iter().collect::<Result<_>>()?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeEntry {
    pub scheme: Scheme,
    pub status: Status,
    pub iterations: usize,
    pub n_time: usize,
    pub rate_m: Option<f64>,
    pub rate_u: Option<f64>,
    /// The local iteration (or the fallback's first attempt) stopped on negative density.
    pub local_breakdown: bool,
    pub wall_time: f64,
    pub history: NewtonHistory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub problem: String,
    pub n_space: usize,
    pub entries: Vec<SchemeEntry>,
    /// Schemes left out because the problem is outside their scope.
    pub skipped: Vec<Scheme>,
}

/// Finite differences are offered for Hamiltonians that do not depend on `m`.
pub fn scheme_supported(problem: &MfgProblem, scheme: Scheme) -> bool {
    scheme == Scheme::Sl || !problem.hamiltonian.depends_on_m()
}

/// Runs both schemes on the same problem and grid size.
pub fn compare_schemes(base: &RunConfig) -> Result<ComparisonReport> {
    let problem = base.problem.to_problem()?;
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for scheme in [Scheme::Sl, Scheme::Fd] {
        if !scheme_supported(&problem, scheme) {
            skipped.push(scheme);
            continue;
        }
        let mut cfg = base.clone();
        cfg.newton.scheme = scheme;
        let out = execute(&cfg)?;
        let h = &out.run.history;
        let local_breakdown = h.status == Status::BreakdownNegativeDensity
            || h.fallback_from.as_ref().is_some_and(|f| f.status == Status::BreakdownNegativeDensity);
        entries.push(SchemeEntry {
            scheme,
            status: h.status,
            iterations: h.iterations(),
            n_time: out.grid.n_time(),
            rate_m: rate_fit(h, ErrorField::M).ok(),
            rate_u: rate_fit(h, ErrorField::U).ok(),
            local_breakdown,
            wall_time: out.solve_seconds,
            history: h.clone(),
        });
    }
    Ok(ComparisonReport { problem: base.problem.name(), n_space: base.n_space, entries, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sci_format_matches_c() {
        assert_eq!(format_sci(0.0), "0.000000000000e+00");
        assert_eq!(format_sci(1234.5), "1.234500000000e+03");
        assert_eq!(format_sci(-2.5e-7), "-2.500000000000e-07");
        assert_eq!(format_sci(1e100), "1.000000000000e+100");
        assert_eq!(format_sci(f64::NAN), "nan");
    }

    #[test]
    fn dt_policy_parsing_and_resolution() {
        assert_eq!("auto".parse::<DtPolicy>().unwrap(), DtPolicy::Rule(DtRule::Auto));
        assert_eq!("0.01".parse::<DtPolicy>().unwrap(), DtPolicy::Explicit(0.01));
        assert!("fast".parse::<DtPolicy>().is_err());
        let h = 1.0 / 16.0;
        assert_eq!(DtPolicy::default().target(Scheme::Fd, h), h / 4.0);
        assert_eq!(DtPolicy::default().target(Scheme::Sl, h), 0.5 * h.powf(1.5));
    }

    #[test]
    fn config_from_toml() {
        let cfg = RunConfig::from_toml(
            r#"
            problem = "test2a"
            n_space = 32
            dt = "h/4"
            [newton]
            scheme = "fd"
            tolerance = 1e-5
            [newton.sl]
            eps_factor = 1.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.problem, ProblemSource::Builtin(ProblemId::Test2a));
        assert_eq!(cfg.newton.scheme, Scheme::Fd);
        assert_eq!(cfg.newton.tolerance, 1e-5);
        assert_eq!(cfg.newton.sl.eps_factor, 1.0);
        assert_eq!(cfg.newton.beta, 0.5);
        let grid = cfg.grid(&cfg.problem.to_problem().unwrap()).unwrap();
        assert_eq!(grid.n_time(), 1);

        let err = RunConfig::from_toml("problem = \"test1\"\nn_space = 8\n[newton]\nbeta = 1.5\n").unwrap().validate();
        assert!(matches!(err, Err(MfgError::Parameter { ref name, .. }) if name == "beta"));
        assert!(RunConfig::from_toml("problem = \"test9\"\nn_space = 8\n").is_err());
        assert!(RunConfig::from_toml("problem = \"test1\"\nn_space = 8\nbogus = 1\n").is_err());
    }

    #[test]
    fn inline_problem() {
        let cfg = RunConfig::from_toml(
            r#"
            n_space = 16
            [problem]
            dim = 1
            nu = 0.3
            horizon = 0.1
            hamiltonian = "0.5*p^2 - cos(2*pi*x)"
            coupling = "m"
            m0 = "1 + 0.5*sin(2*pi*x)"
            terminal = "0"
            "#,
        )
        .unwrap();
        let p = cfg.problem.to_problem().unwrap();
        assert_eq!(p.dim, 1);
        assert!((p.hamiltonian.eval([0.0, 0.0], 1.0, [2.0, 0.0]) - 1.0).abs() < 1e-14);
        let bad = ProblemSpec { m0: "m".into(), ..match cfg.problem { ProblemSource::Inline(s) => s, _ => unreachable!() } };
        assert!(bad.to_problem().is_err());
    }

    #[test]
    fn csv_roundtrip_is_stable() {
        let grid = GridSpec::new(2, 4, 2, 1.0).unwrap();
        let vals: Vec<f64> = (0..48).map(|i| (i as f64 * 0.37).sin() / 3.0).collect();
        let f = SpaceTimeField::from_flat(16, vals).unwrap();
        let text = fields_csv(&grid, &f);
        let back = parse_fields_csv(&text).unwrap();
        assert_eq!((back.dim, back.n_space), (2, 4));
        for (a, b) in f.as_slice().iter().zip(back.field.as_slice()) {
            assert!((a - b).abs() <= 5e-13 * a.abs().max(1e-300));
        }
        assert_eq!(fields_csv(&grid, &back.field), text);
    }

    #[test]
    fn csv_errors_name_the_problem() {
        assert!(matches!(parse_fields_csv("a,b\n"), Err(MfgError::Format(_))));
        let e = parse_fields_csv("k,i,j,x1,x2,value\n0,0,0,0,0,zz\n").unwrap_err();
        assert!(e.to_string().contains("value"));
    }

    #[test]
    fn resample_identity_on_same_grid() {
        let grid = GridSpec::new(1, 8, 4, 1.0).unwrap();
        let vals: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let f = SpaceTimeField::from_flat(8, vals).unwrap();
        assert!(resample(&f, &grid, &grid).sup_distance(&f) < 1e-12);
    }
}
