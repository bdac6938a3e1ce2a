//! Serial against rayon execution for the two data-parallel stages: the
//! witness multistart and whole-system tracing.

use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use rankcurve::exec::Exec;
use rankcurve::penalty::PenaltyProblem;
use rankcurve::poly::{parse_system_file, PolySystem};
use rankcurve::tracer::{self, TraceConfig};
use rankcurve::witness;

fn load(name: &str) -> PolySystem {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(format!("{name}.sys"));
    parse_system_file(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const MODES: [(&str, Exec); 2] = [("serial", Exec::Serial), ("parallel", Exec::Parallel)];

fn multistart(c: &mut Criterion) {
    let mut g = c.benchmark_group("multistart");
    for name in ["cubic", "choi_lam"] {
        let sys = load(name);
        let anchor = vec![0.1; sys.n_vars()];
        let prob = PenaltyProblem::new(sys, anchor.clone(), 1e4).unwrap();
        let radius = witness::default_radius(&anchor);
        for (mode, exec) in MODES {
            g.bench_with_input(BenchmarkId::new(mode, name), &exec, |b, &exec| {
                b.iter(|| witness::multistart_critical_points_with(&prob, 500, radius, 0, exec))
            });
        }
    }
    g.finish();
}

fn trace_all(c: &mut Criterion) {
    let mut g = c.benchmark_group("trace_all");
    g.sample_size(10);
    let sys = load("cubic");
    let cfg = TraceConfig {
        n_points: 100,
        anchor: Some(vec![0.0, -1.0]),
        retube_residual: Some(5e-7),
        ..TraceConfig::default()
    };
    for (mode, exec) in MODES {
        g.bench_with_input(BenchmarkId::new(mode, "cubic"), &exec, |b, &exec| {
            b.iter(|| tracer::trace_all_with(&sys, &cfg, exec).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, multistart, trace_all);
criterion_main!(benches);
