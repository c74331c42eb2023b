use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mfg_newton::experiments::{
    compare_schemes, convergence_study, run, write_json, DtPolicy, ProblemSource, Reference, RunConfig,
};
use mfg_newton::fd::DriftStencil;
use mfg_newton::linear::{Acceleration, Scheme};
use mfg_newton::newton::{rate_fit, BreakdownRule, ErrorField, Globalization, InitialGuess, MeritKind, Status};
use mfg_newton::props::run_props;
use mfg_newton::sl::ZForm;
use mfg_newton::torus::Stencil;
use mfg_newton::{MfgError, ProblemId};

#[derive(Parser)]
#[command(name = "mfg", version, about = "Newton solvers for mean field games on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write fields, history and metadata.
    Run {
        #[command(flatten)]
        setup: Setup,
        /// Output directory (overrides `output` in the config file).
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Errors on a sequence of grids against a reference solution.
    Study {
        #[command(flatten)]
        setup: Setup,
        /// Grid sizes, coarse to fine.
        #[arg(long, value_delimiter = ',', default_values_t = [40, 80, 160])]
        grids: Vec<usize>,
        /// Refinement factor of the self reference.
        #[arg(long, default_value_t = 4)]
        factor: usize,
        /// Reference fields of u and m in this tool's CSV schema, instead of a self reference.
        #[arg(long, requires = "ref_m")]
        ref_u: Option<PathBuf>,
        #[arg(long, requires = "ref_u")]
        ref_m: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Both schemes on the same problem, with rate fits.
    Compare {
        #[command(flatten)]
        setup: Setup,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Operator property battery.
    Props {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Setup {
    /// TOML run configuration; flags below override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Builtin problem: test1, test2a, test2b, test3 or test4.
    #[arg(short, long)]
    problem: Option<ProblemId>,
    #[arg(short, long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Number of nodes per axis.
    #[arg(short, long)]
    n: Option<usize>,
    /// Time step: auto, h^1.5/2, h/4 or a number.
    #[arg(long)]
    dt: Option<DtPolicy>,
    /// Newton stops when both sup-norm changes fall below this.
    #[arg(long, allow_negative_numbers = true)]
    tolerance: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, value_enum)]
    globalization: Option<GlobalizationArg>,
    #[arg(long, value_enum)]
    breakdown_rule: Option<BreakdownArg>,
    /// Residual used by the line search.
    #[arg(long, value_enum)]
    merit: Option<MeritArg>,
    #[arg(long, value_enum)]
    initial_guess: Option<InitialGuessArg>,
    /// Sweep tolerance of the linear solver.
    #[arg(long)]
    gs_delta: Option<f64>,
    #[arg(long, value_enum)]
    acceleration: Option<AccelerationArg>,
    /// Mollifier width of the semi-Lagrangian drift in units of h (0: central gradient).
    #[arg(long)]
    eps_factor: Option<f64>,
    #[arg(long, value_enum)]
    z_form: Option<ZFormArg>,
    #[arg(long, value_enum)]
    stencil: Option<StencilArg>,
    #[arg(long, value_enum)]
    drift_stencil: Option<DriftArg>,
    /// Shift and scale m0 to a probability density.
    #[arg(long)]
    normalize_m0: bool,
    /// Run every loop on the calling thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Sl,
    Fd,
}

#[derive(Clone, Copy, ValueEnum)]
enum GlobalizationArg {
    Off,
    OnFallback,
    Always,
}

#[derive(Clone, Copy, ValueEnum)]
enum BreakdownArg {
    NegativeDensity,
    NegativeAndDegraded,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeritArg {
    Scheme,
    FiniteDifference,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitialGuessArg {
    Data,
    ZeroU,
    UniformM,
}

#[derive(Clone, Copy, ValueEnum)]
enum AccelerationArg {
    None,
    MinimalResidual,
    Gmres,
}

#[derive(Clone, Copy, ValueEnum)]
enum ZFormArg {
    Divergence,
    ProductRule,
}

#[derive(Clone, Copy, ValueEnum)]
enum StencilArg {
    Compact,
    Composed,
}

#[derive(Clone, Copy, ValueEnum)]
enum DriftArg {
    Central,
    Upwind,
}

impl Setup {
    fn resolve(&self) -> Result<RunConfig, MfgError> {
        let mut cfg = match (&self.config, self.problem) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(id)) => RunConfig::new(id, Scheme::Sl, 40),
            (None, None) => {
                return Err(MfgError::Config {
                    field: "problem".into(),
                    reason: "give --problem or --config".into(),
                })
            }
        };
        if let Some(id) = self.problem {
            cfg.problem = ProblemSource::Builtin(id);
        }
        let nc = &mut cfg.newton;
        if let Some(s) = self.scheme {
            nc.scheme = match s {
                SchemeArg::Sl => Scheme::Sl,
                SchemeArg::Fd => Scheme::Fd,
            };
        }
        if let Some(n) = self.n {
            cfg.n_space = n;
        }
        if let Some(dt) = self.dt {
            cfg.dt = dt;
        }
        if let Some(t) = self.tolerance {
            nc.tolerance = t;
        }
        if let Some(k) = self.max_iters {
            nc.max_newton_iters = k;
        }
        if let Some(g) = self.globalization {
            nc.globalization = match g {
                GlobalizationArg::Off => Globalization::Off,
                GlobalizationArg::OnFallback => Globalization::OnFallback,
                GlobalizationArg::Always => Globalization::Always,
            };
        }
        if let Some(b) = self.breakdown_rule {
            nc.breakdown_rule = match b {
                BreakdownArg::NegativeDensity => BreakdownRule::NegativeDensity,
                BreakdownArg::NegativeAndDegraded => BreakdownRule::NegativeAndDegraded,
            };
        }
        if let Some(k) = self.merit {
            nc.merit = match k {
                MeritArg::Scheme => MeritKind::Scheme,
                MeritArg::FiniteDifference => MeritKind::FiniteDifference,
            };
        }
        if let Some(g) = self.initial_guess {
            nc.initial_guess = match g {
                InitialGuessArg::Data => InitialGuess::Data,
                InitialGuessArg::ZeroU => InitialGuess::ZeroU,
                InitialGuessArg::UniformM => InitialGuess::UniformM,
            };
        }
        if let Some(d) = self.gs_delta {
            nc.sweeps.delta = d;
        }
        if let Some(a) = self.acceleration {
            nc.sweeps.acceleration = match a {
                AccelerationArg::None => Acceleration::None,
                AccelerationArg::MinimalResidual => Acceleration::MinimalResidual,
                AccelerationArg::Gmres => Acceleration::Gmres,
            };
        }
        if let Some(e) = self.eps_factor {
            nc.sl.eps_factor = e;
        }
        if let Some(z) = self.z_form {
            let z = match z {
                ZFormArg::Divergence => ZForm::Divergence,
                ZFormArg::ProductRule => ZForm::ProductRule,
            };
            nc.sl.z_form = z;
            nc.fd.z_form = z;
        }
        if let Some(s) = self.stencil {
            nc.fd.stencil = match s {
                StencilArg::Compact => Stencil::Compact,
                StencilArg::Composed => Stencil::Composed,
            };
        }
        if let Some(d) = self.drift_stencil {
            nc.fd.drift_stencil = match d {
                DriftArg::Central => DriftStencil::Central,
                DriftArg::Upwind => DriftStencil::Upwind,
            };
        }
        if self.normalize_m0 {
            nc.normalize_m0 = true;
        }
        if self.sequential {
            cfg.parallel = Some(false);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Failure {
    Validation(String),
    Solver(String),
}

impl From<MfgError> for Failure {
    fn from(e: MfgError) -> Self {
        if e.is_validation() || matches!(e, MfgError::Io(_)) {
            Failure::Validation(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

fn output_dir(flag: &Option<PathBuf>, cfg: &RunConfig, default: &str) -> PathBuf {
    flag.clone().or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from(default))
}

fn status_name(s: Status) -> String {
    serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn cmd_run(setup: &Setup, out: &Option<PathBuf>) -> Result<bool, Failure> {
    let cfg = setup.resolve()?;
    let dir = output_dir(out, &cfg, "out");
    let outcome = run(&cfg, &dir)?;
    let h = &outcome.run.history;
    if let Some(f) = &h.fallback_from {
        println!("local {} Newton: {} after {} iterations", f.scheme, status_name(f.status), f.iterations());
    }
    for r in &h.records {
        println!(
            "{:3}  E(u) {:.3e}  E(m) {:.3e}  merit {:.3e}  alpha {:<6}  sweeps {}",
            r.iteration, r.e_u, r.e_m, r.merit, r.alpha, r.sweeps
        );
    }
    println!(
        "{} {} N={} Nt={}: {} after {} iterations in {:.2}s",
        cfg.problem.name(),
        h.scheme,
        outcome.grid.n_space(),
        outcome.grid.n_time(),
        status_name(h.status),
        h.iterations(),
        outcome.solve_seconds
    );
    if let Ok(p) = rate_fit(h, ErrorField::M) {
        println!("rate fit: m {p:.3}");
    }
    println!("wrote {}", dir.display());
    Ok(h.status == Status::Converged)
}

fn cmd_study(
    setup: &Setup,
    grids: &[usize],
    factor: usize,
    refs: (&Option<PathBuf>, &Option<PathBuf>),
    out: &Option<PathBuf>,
) -> Result<bool, Failure> {
    let cfg = setup.resolve()?;
    let reference = match refs {
        (Some(u), Some(m)) => Reference::ExternalFile { u: u.clone(), m: m.clone() },
        _ => Reference::FinestSelf { factor },
    };
    let table = convergence_study(&cfg, grids, &reference)?;
    let dir = output_dir(out, &cfg, "study");
    std::fs::create_dir_all(&dir).map_err(MfgError::from)?;
    std::fs::write(dir.join("table.csv"), table.to_csv()).map_err(MfgError::from)?;
    write_json(&dir.join("table.json"), &table)?;
    println!("reference N={}", table.reference_n_space);
    println!("{:>10} {:>6} {:>12} {:>12} {:>9} {:>5}  status", "h", "Nt", "E(u)", "E(m)", "time", "iters");
    for r in &table.rows {
        println!(
            "{:>10.4e} {:>6} {:>12.4e} {:>12.4e} {:>8.2}s {:>5}  {}",
            r.h,
            r.n_time,
            r.error_u,
            r.error_m,
            r.wall_time,
            r.iterations,
            status_name(r.status)
        );
    }
    println!("wrote {}", dir.display());
    Ok(table.rows.iter().all(|r| r.status == Status::Converged))
}

fn cmd_compare(setup: &Setup, out: &Option<PathBuf>) -> Result<bool, Failure> {
    let cfg = setup.resolve()?;
    let report = compare_schemes(&cfg)?;
    let dir = output_dir(out, &cfg, "compare");
    std::fs::create_dir_all(&dir).map_err(MfgError::from)?;
    write_json(&dir.join("comparison.json"), &report)?;
    for e in &report.entries {
        let fmt = |p: Option<f64>| p.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!(
            "{}: {} after {} iterations, rate m {} u {}{}",
            e.scheme,
            status_name(e.status),
            e.iterations,
            fmt(e.rate_m),
            fmt(e.rate_u),
            if e.local_breakdown { ", local breakdown" } else { "" }
        );
    }
    for s in &report.skipped {
        println!("{s}: skipped (Hamiltonian depends on m)");
    }
    println!("wrote {}", dir.join("comparison.json").display());
    Ok(report.entries.iter().all(|e| e.status == Status::Converged))
}

fn cmd_props(seed: u64, out: &Option<PathBuf>) -> Result<bool, Failure> {
    let report = run_props(seed);
    for c in &report.checks {
        println!("{:<34} {:>12.4e}  {:<16} {}", c.name, c.value, c.bound.to_string(), if c.passed { "pass" } else { "FAIL" });
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(MfgError::from)?;
        write_json(&Path::new(dir).join("props.json"), &report)?;
    }
    Ok(report.all_passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { setup, out } => cmd_run(setup, out),
        Command::Study { setup, grids, factor, ref_u, ref_m, out } => cmd_study(setup, grids, *factor, (ref_u, ref_m), out),
        Command::Compare { setup, out } => cmd_compare(setup, out),
        Command::Props { seed, out } => cmd_props(*seed, out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(3)
        }
    }
}
