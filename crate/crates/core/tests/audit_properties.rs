//! Property tests: the energy budgets close to solver precision for random
//! step and epsilon schedules, under both continuity couplings, and the
//! adaptive stepper honors its acceptance contracts on every step it keeps.

use acflow_core::{
    energy_audit_first_order, energy_audit_second_order, numerical_dissipation,
    run_prescribed, step, CellField, ContinuityVariant, FaceField, FlowState, MacGrid, OrderMode,
    PressureVelocity, SchemeConfig, SolveConfig, Tolerances,
};
use proptest::prelude::*;
use std::f64::consts::PI;

fn initial(grid: &MacGrid) -> (FaceField, CellField) {
    let mut u0 = FaceField::from_fn(
        grid,
        |x, y| (PI * x).sin().powi(2) * (2.0 * PI * y).sin(),
        |x, y| -(2.0 * PI * x).sin() * (PI * y).sin().powi(2),
    );
    u0.project_noslip();
    let p0 = CellField::from_fn(grid, |x, y| (PI * x).cos() * (PI * y).sin());
    (u0, p0)
}

fn forcing(grid: &MacGrid) -> impl Fn(f64) -> FaceField + '_ {
    move |t: f64| {
        FaceField::from_fn(
            grid,
            move |x, y| (1.0 + t).sin() * (2.0 * x + y).cos(),
            move |x, y| (0.5 + t).cos() * (x - 3.0 * y).sin(),
        )
    }
}

fn tight() -> SolveConfig {
    SolveConfig {
        rel_tol: 1e-13,
        ..SolveConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn first_order_budget_closes_for_random_schedules(
        ks in proptest::collection::vec(5e-3..2e-2f64, 6..12),
        eps_seed in proptest::collection::vec(1e-4..1e-2f64, 13),
        ga in any::<bool>(),
    ) {
        let n = ks.len();
        let epss = &eps_seed[..=n];
        let g = MacGrid::unit_square(8);
        let (u0, p0) = initial(&g);
        let f = forcing(&g);
        let variant = if ga { ContinuityVariant::GeometricAverage } else { ContinuityVariant::Min };
        let traj = run_prescribed(
            &u0, &p0, 0.0, &ks, epss,
            OrderMode::First, variant, PressureVelocity::Unfiltered,
            0.02, &tight(), &f,
        ).unwrap();
        let b = energy_audit_first_order(&traj);
        prop_assert!(b.residual_rel <= 1e-9, "budget residual {}", b.residual_rel);
        // dissipation samples stay consistent with the budget's jump terms
        let d = numerical_dissipation(&traj);
        for (i, (s, r)) in b.steps.iter().zip(d.iter()).enumerate() {
            prop_assert!((r.velocity - s.velocity_jump).abs() <= 1e-11 * s.velocity_jump.max(1e-30));
            prop_assert!((r.pressure - s.pressure_jump).abs() <= 1e-11 * s.pressure_jump.max(1e-30));
            prop_assert!((r.eps_up - ks[i] * s.eps_up_jump).abs() <= 1e-11 * s.eps_up_jump.max(1e-30));
            prop_assert!((r.eps_down - ks[i] * s.eps_down_jump).abs() <= 1e-11 * s.eps_down_jump.max(1e-30));
        }
    }

    #[test]
    fn second_order_budget_closes_for_random_epsilon_paths(
        k in 5e-3..2e-2f64,
        eps_seed in proptest::collection::vec(1e-4..1e-2f64, 11),
    ) {
        let n = eps_seed.len() - 1;
        let ks = vec![k; n];
        let g = MacGrid::unit_square(8);
        let (u0, p0) = initial(&g);
        let f = forcing(&g);
        let traj = run_prescribed(
            &u0, &p0, 0.0, &ks, &eps_seed,
            OrderMode::Second, ContinuityVariant::GeometricAverage,
            PressureVelocity::Unfiltered, 0.02, &tight(), &f,
        ).unwrap();
        let b = energy_audit_second_order(&traj);
        prop_assert!(b.residual_rel <= 1e-9, "budget residual {}", b.residual_rel);
    }

    #[test]
    fn adaptive_steps_honor_acceptance_contracts(
        tol_m in 1e-4..1e-2f64,
        tol_c in 1e-2..1e-0f64,
        order_pick in 0u8..3,
    ) {
        let order = match order_pick {
            0 => OrderMode::First,
            1 => OrderMode::Second,
            _ => OrderMode::Variable,
        };
        let g = MacGrid::unit_square(8);
        let (u0, p0) = initial(&g);
        let f = forcing(&g);
        let cfg = SchemeConfig::new(
            order,
            ContinuityVariant::GeometricAverage,
            0.05,
            Tolerances::new(tol_m, tol_c),
        );
        let mut state = FlowState::new(u0, p0, 0.01, 1e-3);
        for _ in 0..6 {
            let rep = step(&mut state, &cfg, &f).unwrap();
            if let Some(e1) = rep.est1 {
                let governing = match order {
                    OrderMode::First => e1,
                    OrderMode::Second => rep.est2.unwrap_or(e1),
                    OrderMode::Variable => rep.est2.map_or(e1, |e2| e2.min(e1)),
                };
                prop_assert!(governing <= tol_m, "accepted step above tolerance");
            }
            prop_assert!(rep.est_c <= tol_c);
            prop_assert!(rep.continuity_residual <= 1e-12);
            prop_assert!(rep.k_proposed >= 0.5 * rep.k_used - 1e-300);
            prop_assert!(rep.k_proposed <= 2.0 * rep.k_used + 1e-300);
        }
    }
}
