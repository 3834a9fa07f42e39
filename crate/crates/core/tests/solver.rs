use fracball::fieldspec::{parse_field, parse_vector_field};
use fracball::kernels::getoor_constant;
use fracball::potentials::green_potential;
use fracball::quadrature::{ScalarField, VectorField};
use fracball::solver::{
    apriori_ratio, max_principle_check, picard_step, residual_norm, residual_report, solve, CoefficientBundle,
    DiscreteSolution, Solver, SolverSpec,
};
use fracball::{Error, ProblemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> ProblemParams {
    ProblemParams::new(2, 0.75).unwrap().with_weight(0.5).unwrap()
}

fn small_spec() -> SolverSpec {
    SolverSpec { rings: 8, ring_points: 16, ..SolverSpec::default() }
}

fn drift(p: &ProblemParams) -> CoefficientBundle {
    CoefficientBundle::new(parse_vector_field(&["0.3", "0"], p).unwrap(), parse_field("0.2", p).unwrap()).unwrap()
}

#[test]
fn reduces_to_green_potential_without_coefficients() {
    let p = params();
    let spec = small_spec();
    let f = parse_field("1 + x1", &p).unwrap();
    let sol = solve(&f, &CoefficientBundle::zero(2), &p, &spec).unwrap();
    assert!(sol.converged);
    assert_eq!(sol.tau_path, vec![0.25, 0.5, 0.75, 1.0]);
    for (x, v) in sol.nodes.iter().zip(&sol.values) {
        let g = green_potential(&f, x, &p, &spec.residual_quadrature).unwrap();
        assert!((g - v).abs() <= 1e-3 * g.abs().max(1e-3), "{x:?}: {v} vs {g}");
    }
}

#[test]
fn zero_forcing_gives_zero_solution() {
    let p = params();
    let spec = small_spec();
    let sol = solve(&ScalarField::zero(2), &drift(&p), &p, &spec).unwrap();
    assert!(sol.values.iter().all(|v| *v == 0.0));
    assert_eq!(sol.iterations_per_step, vec![1; 4]);
    let ratio = apriori_ratio(&sol, &ScalarField::zero(2), &p, &spec).unwrap();
    assert_eq!(ratio, 0.0);
}

#[test]
fn coefficient_hypotheses_are_enforced() {
    let p = params();
    let bad = CoefficientBundle::new(VectorField::zero(2), parse_field("-1", &p).unwrap()).unwrap();
    let err = solve(&ScalarField::constant(2, 1.0), &bad, &p, &small_spec()).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)), "{err}");
    let low = ProblemParams::new(2, 0.4).unwrap().with_weight(0.5).unwrap();
    assert!(matches!(
        solve(&ScalarField::constant(2, 1.0), &drift(&low), &low, &small_spec()).unwrap_err(),
        Error::InvalidParams(_)
    ));
}

#[test]
fn picard_step_agrees_with_assembled_operator() {
    let p = params();
    let spec = small_spec();
    let coeffs = drift(&p);
    let f = ScalarField::constant(2, 1.0);
    let zero = DiscreteSolution::zero(&p, &spec);
    let first = picard_step(&zero, &f, &coeffs, 0.7, &p, &spec).unwrap();
    for (x, v) in first.nodes.iter().zip(&first.values) {
        let g = green_potential(&f, x, &p, &spec.quadrature).unwrap();
        assert!((g - v).abs() <= 1e-3 * g, "{v} vs {g}");
    }
    let sol = solve(&f, &coeffs, &p, &spec).unwrap();
    let again = picard_step(&sol, &f, &coeffs, 1.0, &p, &spec).unwrap();
    let change: f64 = sol.values.iter().zip(&again.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(change <= 1e-8, "{change}");
}

#[test]
fn contraction_and_linearity() {
    let p = params();
    let spec = small_spec();
    let solver = Solver::new(&drift(&p), &p, &spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let v1: Vec<f64> = (0..solver.dof()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v2: Vec<f64> = (0..solver.dof()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ratio = solver.contraction_ratio(0.25, &v1, &v2);
        assert!(ratio < 1.0, "{ratio}");
    }
    let f = parse_field("exp(-4*|x|^2)", &p).unwrap();
    let a = solver.solve(&f).unwrap();
    let b = solver.solve(&f.scale(-3.5)).unwrap();
    for (u, v) in a.values.iter().zip(&b.values) {
        assert!((v + 3.5 * u).abs() <= 1e-9, "{u} {v}");
    }
}

#[test]
fn residual_oracle_on_known_pairs() {
    let p = params();
    let spec = small_spec();
    let one = ScalarField::constant(2, 1.0);
    let lambda = getoor_constant(&p);
    let u = ScalarField::new(2, move |x| (1.0 - x[0] * x[0] - x[1] * x[1]).max(0.0).powf(0.75) / lambda);
    let grad = VectorField::new(
        (0..2)
            .map(|k| ScalarField::new(2, move |x: &[f64]| -1.5 / lambda * x[k] * (1.0 - x[0] * x[0] - x[1] * x[1]).powf(-0.25)))
            .collect(),
    )
    .unwrap();
    let exact = DiscreteSolution::sample(&u, &grad, &p, &spec).unwrap();
    let zero_coeffs = CoefficientBundle::zero(2);
    let res = residual_norm(&exact, &one, &zero_coeffs, &p, &spec).unwrap();
    assert!(res <= 1e-2, "{res}");

    let zero = DiscreteSolution::zero(&p, &spec);
    assert_eq!(residual_norm(&zero, &ScalarField::zero(2), &zero_coeffs, &p, &spec).unwrap(), 0.0);
    let report = residual_report(&zero, &one, &zero_coeffs, &p, &spec).unwrap();
    assert!((report.norm - report.forcing_norm).abs() < 1e-14);
    assert_eq!(report.probes_skipped, 0);
}

#[test]
fn apriori_ratio_is_one_without_coefficients() {
    let p = params();
    let spec = small_spec();
    let f = parse_field("exp(-|x|^2)", &p).unwrap();
    let sol = solve(&f, &CoefficientBundle::zero(2), &p, &spec).unwrap();
    let ratio = apriori_ratio(&sol, &f, &p, &spec).unwrap();
    assert!((ratio - 1.0).abs() < 2e-2, "{ratio}");
}

#[test]
fn maximum_principle_on_nonnegative_forcing() {
    let p = params();
    let spec = small_spec();
    let family = vec![
        ScalarField::constant(2, 1.0),
        ScalarField::zero(2),
        parse_field("exp(-20*((x1-0.4)^2 + x2^2))", &p).unwrap(),
    ];
    let report = max_principle_check(&drift(&p), &family, &p, &spec, 1e-3).unwrap();
    assert!(report.passed, "{report:?}");
    assert_eq!(report.cases[1].min_value, 0.0);
    let negative = vec![ScalarField::constant(2, -1.0)];
    assert!(max_principle_check(&drift(&p), &negative, &p, &spec, 1e-3).is_err());
}

#[test]
fn serialization_round_trip() {
    let p = params();
    let spec = small_spec();
    let sol = solve(&ScalarField::constant(2, 1.0).with_label("1"), &drift(&p), &p, &spec).unwrap();
    let back = DiscreteSolution::from_json(&sol.to_json().unwrap()).unwrap();
    assert!(back == sol);
    assert_eq!(sol.provenance.f, "1");
    assert_eq!(sol.provenance.b, vec!["0.3".to_string(), "0".to_string()]);
    assert_eq!(sol.provenance.solver_spec_sha256.len(), 64);
    let csv = sol.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("x1,x2,weight,u,du1,du2"));
    assert_eq!(lines.count(), sol.len());
}

#[test]
fn spec_rejects_unknown_keys() {
    assert!(serde_json::from_str::<SolverSpec>(r#"{"rings": 4, "bogus": 1}"#).is_err());
    let spec: SolverSpec = serde_json::from_str(r#"{"rings": 4}"#).unwrap();
    assert_eq!(spec.rings, 4);
    assert!(SolverSpec { tau_steps: 0, ..SolverSpec::default() }.validate().is_err());
}
