use std::f64::consts::TAU;

use viscolab::elliptic::{assemble, solve_with, viscosity_sweep, Reference, SolverOptions};
use viscolab::experiments::{
    blowup_zero_order, example1, example1_branches, example2, linear_surrogate, BlowupParams,
    Example1Params, Example2Params,
};
use viscolab::expr::FieldExpr;
use viscolab::geometry::{GridFunction, Scheme, TorusGrid};
use viscolab::Pde;

fn surrogate_closed(x: f64) -> f64 {
    // U' + 10 U = 2 + sin x
    0.2 + (10.0 * x.sin() - x.cos()) / 101.0
}

#[test]
fn surrogate_matches_its_closed_form() {
    let grid = TorusGrid::new(1, 64).unwrap();
    let f = FieldExpr::parse("2 + sin(x1)", 1).unwrap();
    let u = linear_surrogate(10.0, &f, grid).unwrap();
    let exact = GridFunction::from_fn(grid, |x| surrogate_closed(x[0]));
    assert!(u.sup_distance(&exact).unwrap() < 1e-9);
}

#[test]
fn branches_solve_the_pointwise_quadratic() {
    let grid = TorusGrid::new(1, 128).unwrap();
    let u = GridFunction::from_fn(grid, |x| surrogate_closed(x[0]));
    let br = example1_branches(&u, 0.1, 0.5);
    let minus = br.minus.as_ref().unwrap();
    for (i, (plus, minus)) in br.plus.iter().zip(minus).enumerate() {
        let x = grid.coords(i)[0];
        let q = 0.1 * (1.0 + 0.5 * x.cos());
        for root in [plus.unwrap(), minus.unwrap()] {
            let back = root + q * root * root / 2.0;
            assert!((back - surrogate_closed(x)).abs() < 1e-12);
        }
    }
}

#[test]
fn negative_beta_opens_nonexistence_intervals() {
    let p = Example1Params {
        beta: -4.0,
        n: 256,
        run_limit: false,
        ..Example1Params::default()
    };
    let res = example1(&p).unwrap();
    let gaps = res.table("nonexistence").unwrap();
    assert!(!gaps.rows.is_empty());
    assert!(!res.assertion("discriminant_positive").unwrap().pass);
    // every reported interval lies where the closed-form discriminant is not positive
    for row in &gaps.rows {
        // intervals may wrap through 0
        let end = if row[1] < row[0] {
            row[1] + TAU
        } else {
            row[1]
        };
        let mid = (0.5 * (row[0] + end)).rem_euclid(TAU);
        let q = -4.0 * (1.0 + 0.5 * mid.cos());
        assert!(
            1.0 + 2.0 * q * surrogate_closed(mid) <= 0.05,
            "interval {row:?}"
        );
    }
}

#[test]
fn example_two_roots_are_found() {
    let p = Example2Params {
        n: 128,
        ..Example2Params::default()
    };
    let res = example2(&p).unwrap();
    assert!(res.passed(), "{}", res.verdict_text());
}

#[test]
fn viscosity_and_characteristics_agree_in_two_dimensions() {
    let pde = Pde::parse(2, &["1", "0.5*sin(x1)"], "2 + 0.5*cos(x2)", "sin(x1 + x2)").unwrap();
    let grid = TorusGrid::new(2, 48).unwrap();
    let rows = viscosity_sweep(
        &pde,
        grid,
        Scheme::Upwind,
        &[0.4, 0.1, 0.025],
        Reference::Characteristics { tol: 1e-8 },
        SolverOptions::default(),
    )
    .unwrap();
    let errors: Vec<f64> = rows.iter().map(|r| r.sup_error.unwrap()).collect();
    assert!(errors.windows(2).all(|w| w[1] < w[0]), "{errors:?}");
    assert!(*errors.last().unwrap() < 0.1, "{errors:?}");
}

#[test]
fn centered_scheme_is_second_order_with_viscosity() {
    let pde = Pde::parse(1, &["1"], "2", "sin(x1)").unwrap();
    let eps = 0.2;
    let exact = |x: f64| ((2.0 + eps) * x.sin() - x.cos()) / ((2.0 + eps) * (2.0 + eps) + 1.0);
    let error = |n: usize, scheme: Scheme| {
        let grid = TorusGrid::new(1, n).unwrap();
        let sys = assemble(&pde, grid, eps, scheme, None).unwrap();
        let u = solve_with(&sys, None, SolverOptions::default()).solution;
        u.sup_distance(&GridFunction::from_fn(grid, |x| exact(x[0])))
            .unwrap()
    };
    let (c64, c128) = (error(64, Scheme::Centered), error(128, Scheme::Centered));
    let (u64_, u128_) = (error(64, Scheme::Upwind), error(128, Scheme::Upwind));
    assert!(c64 / c128 > 3.5, "centered ratio {}", c64 / c128);
    assert!(
        u64_ / u128_ > 1.8 && u64_ / u128_ < 2.3,
        "upwind ratio {}",
        u64_ / u128_
    );
}

#[test]
fn two_dimensional_repeller_blows_up() {
    let p = BlowupParams {
        b: vec!["sin(x1)".into(), "sin(x2)".into()],
        a: vec![0.0, 0.0],
        eps_ladder: vec![0.2, 0.1, 0.05],
        n: 48,
        control_c: Some(2.0),
        ..BlowupParams::default()
    };
    let res = blowup_zero_order(&p).unwrap();
    assert!(res.passed(), "{}", res.verdict_text());
    let at_a = res.table("growth").unwrap().column("u_at_a").unwrap();
    // with f = 1 the constant 1/ε solves the discrete problem exactly
    for (v, eps) in at_a.iter().zip([0.2, 0.1, 0.05]) {
        assert!((v - 1.0 / eps).abs() < 1e-6 / eps);
    }
}

#[test]
fn first_order_limit_at_a_stationary_point() {
    // at a zero of b every route reduces to f/c
    let pde = Pde::parse(1, &["sin(x1)"], "3", "2 + cos(x1)").unwrap();
    let grid = TorusGrid::new(1, 256).unwrap();
    let sys = assemble(&pde, grid, 0.0, Scheme::Upwind, None).unwrap();
    let u = solve_with(&sys, None, SolverOptions::default()).solution;
    assert!((u.values()[0] - 1.0).abs() < 1e-9);
    assert!((u.interpolate(&[TAU / 2.0]) - 1.0 / 3.0).abs() < 1e-9);
}
