use ellqg::ellfn::ModularParams;
use ellqg::gtrep::gt_basis;
use ellqg::par;
use ellqg::tensorspace::{enumerate, CompositionLambda, DynamicalParams, EvaluationPoints, DEFAULT_ENUMERATION_CAP};
use ellqg::verify::{run_suite, Suite, SuiteConfig, SWEEP_SHAPES};
use ellqg::weightfn::triangularity_report;
use ellqg::Complex64;

fn setup(parts: &[usize]) -> (ModularParams, CompositionLambda, DynamicalParams, EvaluationPoints) {
    let mp = ModularParams::new(0.45, 2.7, 0.3).unwrap();
    let lambda = CompositionLambda::new(parts.to_vec()).unwrap();
    let pd = DynamicalParams::new((0..parts.len() - 1).map(|a| Complex64::new(1.2 + 0.3 * a as f64, 0.15)).collect());
    let z = EvaluationPoints::new(
        (0..lambda.n()).map(|k| Complex64::from_polar(0.75 + 0.05 * k as f64, 0.4 + 2.1 * k as f64)).collect(),
    )
    .unwrap();
    (mp, lambda, pd, z)
}

#[test]
fn triangularity_holds_over_the_sweep() {
    for parts in SWEEP_SHAPES {
        let (mp, lambda, pd, z) = setup(parts);
        let rep = triangularity_report(&lambda, &z, &pd, &mp).unwrap();
        assert!(rep.max_off_triangle < 1e-10, "{parts:?}: {}", rep.max_off_triangle);
        assert!(rep.max_diagonal_rel < 1e-9, "{parts:?}: {}", rep.max_diagonal_rel);
    }
}

#[test]
fn gt_basis_rows_are_specializations() {
    let (mp, lambda, pd, z) = setup(&[1, 2]);
    let (labels, m) = gt_basis(&lambda, &z, &pd, &mp).unwrap();
    let all = enumerate(&lambda, DEFAULT_ENUMERATION_CAP).unwrap();
    assert_eq!(labels, all);
    let rows = m.to_rows();
    let scale = rows.iter().flatten().map(|x| x.norm()).fold(0.0, f64::max);
    assert!(scale > 0.0);
    for (a, row) in rows.iter().enumerate() {
        assert!(row[a].norm() > 1e-12 * scale, "diagonal entry {a} vanishes");
    }
    // the matrix is triangular in one of the two orientations
    let upper: f64 = (0..rows.len()).flat_map(|a| (a + 1..rows.len()).map(move |b| (a, b))).map(|(a, b)| rows[a][b].norm()).sum();
    let lower: f64 = (0..rows.len()).flat_map(|a| (0..a).map(move |b| (a, b))).map(|(a, b)| rows[a][b].norm()).sum();
    assert!(upper.min(lower) < 1e-10 * scale, "upper {upper}, lower {lower}");
}

#[test]
fn suites_agree_between_paths() {
    let (mp, lambda, pd, z) = setup(&[1, 1, 1]);
    let cfg = SuiteConfig::new(mp, lambda, pd, z, 11).unwrap();
    let par_report = run_suite(Suite::All, &cfg);
    let seq_report = par::with_sequential(|| run_suite(Suite::All, &cfg));
    assert!(par_report.pass, "{:?}", par_report.checks.iter().filter(|c| !c.pass).collect::<Vec<_>>());
    let ids: Vec<_> = par_report.checks.iter().map(|c| (&c.id, c.residual.to_bits())).collect();
    let seq: Vec<_> = seq_report.checks.iter().map(|c| (&c.id, c.residual.to_bits())).collect();
    assert_eq!(ids, seq);
}
