use mfg_newton::experiments::{
    compare_schemes, convergence_study, execute, read_fields_csv, run, ProblemSource, ProblemSpec, Reference, RunConfig,
    FIELDS_HEADER,
};
use mfg_newton::linear::Scheme;
use mfg_newton::newton::{Globalization, LineSearch, Mode, Status};
use mfg_newton::ProblemId;
use proptest::prelude::*;

fn read(path: &std::path::Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::new(ProblemId::Test4, Scheme::Sl, 8);
    let mut cfg = cfg;
    cfg.newton.normalize_m0 = true;
    let out = run(&cfg, dir.path()).unwrap();
    assert!(out.run.history.converged());

    let csv = read(&dir.path().join("fields_m.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(FIELDS_HEADER));
    assert_eq!(lines.count(), 64 * out.grid.n_levels());

    let meta: serde_json::Value = serde_json::from_str(&read(&dir.path().join("meta.json"))).unwrap();
    assert_eq!(meta["dim"], 2);
    assert_eq!(meta["status"], "converged");
    assert_eq!(meta["n_time"], out.grid.n_time());
    assert_eq!(meta["config"]["newton"]["normalize_m0"], true);
    // every default is resolved in meta, so the run can be replayed from it
    let replay: RunConfig = serde_json::from_value(meta["config"].clone()).unwrap();
    let again = execute(&replay).unwrap();
    assert_eq!(again.run.m.as_slice(), out.run.m.as_slice());

    let history: serde_json::Value = serde_json::from_str(&read(&dir.path().join("history.json"))).unwrap();
    assert_eq!(history["records"].as_array().unwrap().len(), out.run.history.iterations());

    let table = read_fields_csv(&dir.path().join("fields_u.csv")).unwrap();
    assert_eq!((table.dim, table.n_space), (2, 8));
    for (a, b) in table.field.as_slice().iter().zip(out.run.u.as_slice()) {
        assert!((a - b).abs() <= 5e-13 * b.abs().max(1e-300));
    }
}

#[test]
fn runs_are_deterministic_across_policies() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (i, dir) in dirs.iter().enumerate() {
        let mut cfg = RunConfig::new(ProblemId::Test2a, Scheme::Fd, 32);
        cfg.parallel = Some(i != 0);
        run(&cfg, dir.path()).unwrap();
    }
    for name in ["fields_u.csv", "fields_m.csv"] {
        let first = read(&dirs[0].path().join(name));
        for d in &dirs[1..] {
            assert_eq!(first, read(&d.path().join(name)), "{name}");
        }
    }
}

#[test]
fn local_and_global_newton_agree() {
    let mut local = RunConfig::new(ProblemId::Test2a, Scheme::Sl, 40);
    local.newton.globalization = Globalization::Off;
    local.newton.tolerance = 1e-8;
    let mut global = local.clone();
    global.newton.globalization = Globalization::Always;
    let a = execute(&local).unwrap();
    let b = execute(&global).unwrap();
    assert!(a.run.history.converged() && b.run.history.converged());
    assert_eq!(b.run.history.mode, Mode::Global);
    assert!(a.run.u.sup_distance(&b.run.u) < 1e-6);
    assert!(a.run.m.sup_distance(&b.run.m) < 1e-6);
}

#[test]
fn global_newton_logs_armijo_steps() {
    let mut cfg = RunConfig::new(ProblemId::Test2b, Scheme::Fd, 80);
    cfg.newton.globalization = Globalization::Always;
    let out = execute(&cfg).unwrap();
    let h = &out.run.history;
    assert!(h.converged());
    assert!(h.records.iter().any(|r| r.alpha < 1.0));
    for r in &h.records {
        let ls = r.line_search.as_ref().unwrap();
        assert!(LineSearch::armijo_holds(ls.theta_new, ls.theta_old, r.alpha, cfg.newton.c));
        assert!(r.merit <= ls.theta_old);
    }
}

#[test]
fn fallback_keeps_local_history() {
    let cfg = RunConfig::new(ProblemId::Test2b, Scheme::Fd, 80);
    let out = execute(&cfg).unwrap();
    let h = &out.run.history;
    assert!(h.converged());
    let local = h.fallback_from.as_ref().expect("local run should break down first");
    assert_eq!(local.status, Status::BreakdownNegativeDensity);
    assert_eq!(local.mode, Mode::Local);
}

#[test]
fn self_reference_study_of_identical_grid_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::new(ProblemId::Test1, Scheme::Sl, 20);
    run(&cfg, dir.path()).unwrap();
    let reference = Reference::ExternalFile { u: dir.path().join("fields_u.csv"), m: dir.path().join("fields_m.csv") };
    let mut coarse = cfg.clone();
    coarse.dt = mfg_newton::experiments::DtPolicy::Explicit(cfg.grid(&cfg.problem.to_problem().unwrap()).unwrap().dt());
    let table = convergence_study(&coarse, &[10, 20], &reference).unwrap();
    let fine = &table.rows[1];
    assert!(fine.error_u < 1e-11 && fine.error_m < 1e-11, "{fine:?}");
    assert!(table.rows[0].error_m > fine.error_m);
    let csv = table.to_csv();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("h,n_space,n_time,error_u,error_m"));
}

#[test]
fn study_rejects_bad_grids() {
    let cfg = RunConfig::new(ProblemId::Test1, Scheme::Sl, 20);
    let r = Reference::FinestSelf { factor: 2 };
    assert!(convergence_study(&cfg, &[40], &r).is_err());
    assert!(convergence_study(&cfg, &[40, 20], &r).is_err());
    assert!(convergence_study(&cfg, &[20, 40], &Reference::FinestSelf { factor: 1 }).is_err());
}

#[test]
fn compare_skips_fd_for_congestion() {
    let mut cfg = RunConfig::new(ProblemId::Test3, Scheme::Sl, 40);
    cfg.newton.tolerance = 1e-3;
    let report = compare_schemes(&cfg).unwrap();
    assert_eq!(report.skipped, vec![Scheme::Fd]);
    assert_eq!(report.entries.len(), 1);
    assert_eq!(report.entries[0].status, Status::Converged);
}

#[test]
fn compare_flags_fd_breakdown() {
    let report = compare_schemes(&RunConfig::new(ProblemId::Test2b, Scheme::Sl, 80)).unwrap();
    let sl = &report.entries[0];
    let fd = &report.entries[1];
    assert_eq!((sl.scheme, fd.scheme), (Scheme::Sl, Scheme::Fd));
    assert!(sl.status == Status::Converged && !sl.local_breakdown);
    assert!(fd.local_breakdown);
}

fn inline(amplitude: f64, nu: f64) -> RunConfig {
    let spec = ProblemSpec {
        name: "inline".into(),
        dim: 1,
        nu,
        horizon: 0.1,
        hamiltonian: "0.5*p^2 - cos(2*pi*x)".into(),
        coupling: "m".into(),
        m0: format!("1 + {amplitude}*sin(2*pi*x)"),
        terminal: "0".into(),
    };
    let mut cfg = RunConfig::new(ProblemId::Test1, Scheme::Sl, 24);
    cfg.problem = ProblemSource::Inline(spec);
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn every_iterate_conserves_mass(amplitude in 0.0f64..0.9, nu in 0.05f64..0.5, fd in any::<bool>()) {
        let mut cfg = inline(amplitude, nu);
        cfg.newton.scheme = if fd { Scheme::Fd } else { Scheme::Sl };
        let out = execute(&cfg).unwrap();
        prop_assert!(out.run.history.converged());
        for r in &out.run.history.records {
            prop_assert!(r.mass_drift < 1e-12, "drift {}", r.mass_drift);
        }
        let mass = out.run.m.level(out.grid.n_time()).iter().sum::<f64>() * out.grid.cell_volume();
        prop_assert!((mass - 1.0).abs() < 1e-12);
    }
}
