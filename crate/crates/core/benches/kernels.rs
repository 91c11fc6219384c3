use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ellqg::ellfn::ModularParams;
use ellqg::par;
use ellqg::qkz::{torus_quadrature, IntegrandSpec, Kernel};
use ellqg::tensorspace::{CompositionLambda, DynamicalParams, EvaluationPoints, PartitionIndex};
use ellqg::verify::{run_suite, Suite, SuiteConfig};
use ellqg::weightfn::{triangularity_report, w_tilde, TVariables};
use num_complex::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn point(k: usize, radius: f64) -> Complex64 {
    Complex64::from_polar(radius, 0.7 + 1.9 * k as f64)
}

fn paths<F: Fn()>(group: &mut criterion::BenchmarkGroup<'_, criterion::measurement::WallTime>, input: &str, f: F) {
    group.bench_with_input(BenchmarkId::new("parallel", input), &(), |b, _| b.iter(&f));
    group.bench_with_input(BenchmarkId::new("sequential", input), &(), |b, _| {
        b.iter(|| par::with_sequential(&f))
    });
}

fn symmetrization(crit: &mut Criterion) {
    let mp = ModularParams::new(0.5, 3.1, 0.7).unwrap();
    let mut group = crit.benchmark_group("w_tilde");
    for parts in [vec![3, 3], vec![2, 2, 2]] {
        let lambda = CompositionLambda::new(parts.clone()).unwrap();
        let colors: Vec<Vec<usize>> = {
            let mut next = 1;
            parts
                .iter()
                .map(|&m| {
                    let out = (next..next + m).collect();
                    next += m;
                    out
                })
                .collect()
        };
        let i = PartitionIndex::new(colors).unwrap();
        let z = EvaluationPoints::new((0..lambda.n()).map(|k| point(k, 0.8)).collect()).unwrap();
        let mut k = 100;
        let levels = (1..lambda.rank())
            .map(|l| {
                (0..lambda.partial(l))
                    .map(|_| {
                        k += 1;
                        point(k, 0.6)
                    })
                    .collect()
            })
            .collect();
        let t = TVariables::new(levels, &lambda).unwrap();
        let pd = DynamicalParams::new(vec![c(1.3, 0.2); lambda.rank() - 1]);
        let label = format!("{parts:?}");
        paths(&mut group, &label, || {
            black_box(w_tilde(&i, &t, &z, &pd, &mp).unwrap());
        });
    }
    group.finish();
}

fn triangularity(crit: &mut Criterion) {
    let mp = ModularParams::new(0.5, 3.1, 0.7).unwrap();
    let lambda = CompositionLambda::new(vec![1, 2, 1]).unwrap();
    let z = EvaluationPoints::new((0..4).map(|k| point(k, 0.8)).collect()).unwrap();
    let pd = DynamicalParams::new(vec![c(1.3, 0.2), c(0.7, -0.1)]);
    let mut group = crit.benchmark_group("triangularity");
    group.sample_size(20);
    paths(&mut group, "[1, 2, 1]", || {
        black_box(triangularity_report(&lambda, &z, &pd, &mp).unwrap());
    });
    group.finish();
}

fn quadrature(crit: &mut Criterion) {
    let mp = ModularParams::new(0.5, 3.0, 1.0).unwrap();
    let spec = IntegrandSpec::new(
        PartitionIndex::new(vec![vec![1], vec![2]]).unwrap(),
        Kernel::Elliptic { trace_nome: 0.05 },
        DynamicalParams::new(vec![c(1.7, 0.2)]),
        EvaluationPoints::new(vec![c(0.4, 0.1), c(-0.2, 0.35)]).unwrap(),
        mp,
    )
    .unwrap();
    let mut group = crit.benchmark_group("torus_quadrature");
    group.sample_size(10);
    paths(&mut group, "M0=64", || {
        black_box(torus_quadrature(&spec, 64).unwrap());
    });
    group.finish();
}

fn suites(crit: &mut Criterion) {
    let cfg = SuiteConfig::new(
        ModularParams::new(0.5, 3.1, 0.7).unwrap(),
        CompositionLambda::new(vec![1, 1, 1]).unwrap(),
        DynamicalParams::new(vec![c(1.3, 0.2), c(0.7, -0.1)]),
        EvaluationPoints::new(vec![c(0.6, 0.3), c(-0.2, 0.7), c(0.1, -0.8)]).unwrap(),
        0,
    )
    .unwrap();
    let mut group = crit.benchmark_group("verify");
    group.sample_size(10);
    paths(&mut group, "rmat", || {
        black_box(run_suite(Suite::Rmat, &cfg));
    });
    group.finish();
}

criterion_group!(benches, symmetrization, triangularity, quadrature, suites);
criterion_main!(benches);
