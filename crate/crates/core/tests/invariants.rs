use std::f64::consts::TAU;

use proptest::prelude::*;
use viscolab::constants::{compute_constants, r_of_eps, LambdaBox};
use viscolab::elliptic::{assemble, solve_with, SolverOptions};
use viscolab::expr::{FieldExpr, Var};
use viscolab::geometry::{lip_estimate, sample, GridFunction, Scheme, TorusGrid};
use viscolab::Pde;

fn leaf() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("x1".to_string()),
        Just("x2".to_string()),
        Just("lam".to_string()),
        (-3.0f64..3.0).prop_map(|c| format!("({c:.6})")),
    ]
}

/// Smooth expressions in `x1, x2, lam` without singularities on the sample box.
fn smooth_expr() -> impl Strategy<Value = String> {
    leaf().prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} + {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} - {b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a} * {b})")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("cos({a})")),
            inner.clone().prop_map(|a| format!("exp(0.3*sin({a}))")),
            inner.clone().prop_map(|a| format!("({a})^2")),
            inner.prop_map(|a| format!("({a}) / (2 + cos({a}))")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn symbolic_derivative_matches_central_differences(
        src in smooth_expr(),
        x1 in 0.0f64..TAU,
        x2 in 0.0f64..TAU,
        lam in -1.5f64..1.5,
    ) {
        let e = FieldExpr::parse(&src, 2).unwrap();
        let h = 1e-5;
        for (var, k) in [(Var::Axis(0), 0usize), (Var::Axis(1), 1), (Var::Lam, 2)] {
            let d = e.differentiate(var).eval(&[x1, x2], lam).unwrap();
            let at = |s: f64| {
                let mut p = [x1, x2, lam];
                p[k] += s;
                e.eval(&p[..2], p[2]).unwrap()
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let scale = 1.0 + d.abs() + at(0.0).abs();
            prop_assert!((d - fd).abs() <= 1e-5 * scale, "{src}: d/d{var} = {d}, fd = {fd}");
        }
    }

    #[test]
    fn printed_expressions_parse_back(src in smooth_expr(), x1 in 0.0f64..TAU, lam in -1.0f64..1.0) {
        let e = FieldExpr::parse(&src, 2).unwrap();
        let again = FieldExpr::parse(&e.to_string(), 2).unwrap();
        let (a, b) = (e.eval(&[x1, 0.7], lam).unwrap(), again.eval(&[x1, 0.7], lam).unwrap());
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
    }
}

fn trig_coeffs() -> impl Strategy<Value = (f64, f64, f64, f64)> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.0f64..1.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn upwind_systems_are_m_matrices_with_row_sums_c(
        (b0, b1, f1, c_extra) in trig_coeffs(),
        eps in prop_oneof![Just(0.0), 0.01f64..1.0],
        n in 8usize..64,
    ) {
        let pde = Pde::parse(
            1,
            &[&format!("{b0} + {b1}*sin(x1)")],
            &format!("{} + 0.5*cos(x1)", 0.5 + 0.5 + c_extra),
            &format!("{f1}*sin(2*x1)"),
        ).unwrap();
        let grid = TorusGrid::new(1, n).unwrap();
        let sys = assemble(&pde, grid, eps, Scheme::Upwind, None).unwrap();
        prop_assert!(sys.is_m_matrix());
        let ones = vec![1.0; grid.len()];
        let sums = sys.matrix.mul_vec(&ones);
        for (s, c) in sums.iter().zip(sys.c.values()) {
            prop_assert!((s - c).abs() <= 1e-12 * (1.0 + c.abs()) * n as f64);
        }
    }

    #[test]
    fn upwind_solutions_obey_the_maximum_principle(
        (b0, b1, f1, c_extra) in trig_coeffs(),
        f0 in -2.0f64..2.0,
        eps in prop_oneof![Just(0.0), 0.01f64..0.5],
    ) {
        let c_src = format!("{} + 0.4*sin(x1)", 0.9 + c_extra);
        let pde = Pde::parse(
            1,
            &[&format!("{b0} + {b1}*cos(x1)")],
            &c_src,
            &format!("{f0} + {f1}*cos(3*x1)"),
        ).unwrap();
        let grid = TorusGrid::new(1, 96).unwrap();
        let sys = assemble(&pde, grid, eps, Scheme::Upwind, None).unwrap();
        let rep = solve_with(&sys, None, SolverOptions::default());
        prop_assert!(rep.converged);
        let ratio = sys.rhs.zip_with(&sys.c, |f, c| f / c).unwrap();
        prop_assert!(rep.solution.min() >= ratio.min() - 1e-8);
        prop_assert!(rep.solution.max() <= ratio.max() + 1e-8);
    }

    #[test]
    fn constant_coefficient_solves_commute_with_grid_shifts(
        b in -2.0f64..2.0,
        c in 0.5f64..3.0,
        shift in 1isize..40,
        phase in 0.0f64..TAU,
        eps in prop_oneof![Just(0.0), 0.05f64..0.5],
    ) {
        let grid = TorusGrid::new(1, 64).unwrap();
        let f = |s: f64| format!("sin(x1 + {s}) + 0.3*cos(2*(x1 + {s}))");
        let solve = |src: &str| {
            let pde = Pde::parse(1, &[&b.to_string()], &c.to_string(), src).unwrap();
            solve_with(&assemble(&pde, grid, eps, Scheme::Upwind, None).unwrap(), None, SolverOptions::default())
                .solution
        };
        let base = solve(&f(phase));
        // reading f `shift` nodes ahead adds shift·h to the phase
        let moved = solve(&f(phase + shift as f64 * grid.spacing()));
        let gap = moved.sup_distance(&base.shifted(0, shift)).unwrap();
        prop_assert!(gap <= 1e-8, "gap {gap}");
    }

    #[test]
    fn lipschitz_bound_holds_for_linear_solves(
        b1 in -0.9f64..0.9,
        k in 1u32..4,
        eps in prop_oneof![Just(0.0), 0.02f64..0.5],
    ) {
        // b = b1 sin(x1) has b0 = |b1|; c = 3 keeps c0 - b0 > 0
        let pde = Pde::parse(1, &[&format!("{b1}*sin(x1)")], "3", &format!("sin({k}*x1)")).unwrap();
        let rep = compute_constants(&pde, LambdaBox::new(-1.0, 1.0).unwrap(), 64).unwrap();
        let bound = viscolab::constants::lip_bound_linear(&rep, 0.0).unwrap();
        let grid = TorusGrid::new(1, 256).unwrap();
        let sol = solve_with(&assemble(&pde, grid, eps, Scheme::Upwind, None).unwrap(), None, SolverOptions::default());
        prop_assert!(lip_estimate(&sol.solution) <= bound + 10.0 * grid.spacing());
    }

    #[test]
    fn r_of_eps_is_the_small_root(
        beta in 0.0f64..0.2,
        c in 2.0f64..6.0,
        kf in 0.0f64..1.0,
    ) {
        let pde = Pde::parse(1, &[&format!("1 + {beta}*lam*(1 + 0.3*cos(x1))")], &c.to_string(), &format!("1 + {kf}*sin(x1)")).unwrap();
        let rep = compute_constants(&pde, LambdaBox::new(-1.0, 1.0).unwrap(), 64).unwrap();
        prop_assume!(rep.gate_passed());
        let r = r_of_eps(&rep, 0.0).unwrap();
        let d = rep.margin();
        // independent root: solve the quadratic by bisection on [0, d / (2 beta)]
        let q = |x: f64| rep.beta * x * x - d * x + rep.f0;
        let (mut lo, mut hi) = (0.0, if rep.beta > 0.0 { d / (2.0 * rep.beta) } else { 2.0 * rep.f0 / d + 1.0 });
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if q(mid) > 0.0 { lo = mid } else { hi = mid }
        }
        prop_assert!((r - lo).abs() <= 1e-10 * (1.0 + r), "r = {r}, bisection = {lo}");
        prop_assert!(r >= rep.f0 / d - 1e-12);
    }
}

#[test]
fn sampling_uses_the_lambda_field() {
    let grid = TorusGrid::new(1, 16).unwrap();
    let lam = GridFunction::from_fn(grid, |x| x[0]);
    let e = FieldExpr::parse("lam^2 + x1", 1).unwrap();
    let s = sample(&e, grid, Some(&lam)).unwrap();
    for (i, v) in s.values().iter().enumerate() {
        let x = grid.coords(i)[0];
        assert!((v - (x * x + x)).abs() < 1e-12);
    }
}
