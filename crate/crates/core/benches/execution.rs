use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mfg_newton::linear::{forward_backward_sweeps, Scheme};
use mfg_newton::newton::{assemble_step, initial_guess, merit, Discretization, InitialGuess, NewtonConfig};
use mfg_newton::{builtin_problem, Execution, GridSpec, ProblemId};
use std::hint::black_box;

const POLICIES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_case(c: &mut Criterion, id: ProblemId, scheme: Scheme, n: usize, n_time: usize) {
    let problem = builtin_problem(id);
    let grid = GridSpec::new(problem.dim, n, n_time, problem.horizon).unwrap();
    let disc = Discretization::new(&problem, grid, true).unwrap();
    let (u, m) = initial_guess(&disc, InitialGuess::Data);
    let label = format!("{}_{}_n{}", problem.name, scheme.as_str(), n);

    let mut group = c.benchmark_group(label);
    group.sample_size(10);
    for (name, exec) in POLICIES {
        let mut config = NewtonConfig::with_scheme(scheme);
        config.exec = exec;
        group.bench_with_input(BenchmarkId::new("merit", name), &exec, |b, &e| {
            b.iter(|| black_box(merit(&disc, &u, &m, e)))
        });
        group.bench_with_input(BenchmarkId::new("assemble", name), &config, |b, cfg| {
            b.iter(|| black_box(assemble_step(&disc, &u, &m, cfg).unwrap()))
        });
        let system = assemble_step(&disc, &u, &m, &config).unwrap();
        group.bench_with_input(BenchmarkId::new("sweeps", name), &config, |b, cfg| {
            b.iter(|| black_box(forward_backward_sweeps(&system, &m, &cfg.sweeps)))
        });
    }
    group.finish();
}

fn criterion_benchmark(c: &mut Criterion) {
    bench_case(c, ProblemId::Test4, Scheme::Sl, 40, 20);
    bench_case(c, ProblemId::Test4, Scheme::Fd, 40, 20);
    bench_case(c, ProblemId::Test1, Scheme::Sl, 320, 200);
}

criterion_group!(benches, criterion_benchmark);
criterion_main!(benches);
