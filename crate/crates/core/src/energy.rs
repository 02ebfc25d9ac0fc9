//! Energy audits: both sides of the exact discrete energy equalities,
//! recomputed independently from a recorded trajectory.
//!
//! The first-order scheme satisfies, per step,
//! `E_{n+1} - E_n + jumps + k nu |grad u_{n+1}|^2 = k (f_{n+1}, u_{n+1})`
//! with `E_n = (|u_n|^2 + eps_n |p_n|^2)/2` and nonnegative jump terms that
//! depend on the continuity coupling. The second-order scheme satisfies the
//! analogous equality with the three-level energy `G(n)` and the unfiltered
//! velocity combination `(3 u_{n+1} - 2 u_n + u_{n-1}) / 2` in the viscous
//! and work terms. Both equalities hold to solver precision, independent of
//! mesh size, step size, or how epsilon moves; the audits here verify that
//! rather than assume it.

use crate::controllers::OrderMode;
use crate::grid::grad_norm_sq;
use crate::grid::{CellField, FaceField};
use crate::stepper::{ContinuityVariant, PressureVelocity, Trajectory};

/// One step's contributions to the energy balance.
#[derive(Clone, Copy, Debug)]
pub struct StepBudget {
    pub velocity_jump: f64,
    pub pressure_jump: f64,
    pub eps_up_jump: f64,
    pub eps_down_jump: f64,
    pub viscous: f64,
    pub work: f64,
    /// Local imbalance of this step's equality; roundoff plus solver residual.
    pub residual: f64,
}

/// Both sides of an energy equality over a whole trajectory.
#[derive(Clone, Debug)]
pub struct EnergyBudget {
    pub lhs: f64,
    pub rhs: f64,
    pub residual_abs: f64,
    pub residual_rel: f64,
    pub steps: Vec<StepBudget>,
}

fn budget_from(lhs: f64, rhs: f64, steps: Vec<StepBudget>) -> EnergyBudget {
    let residual_abs = lhs - rhs;
    let residual_rel = residual_abs.abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    EnergyBudget {
        lhs,
        rhs,
        residual_abs,
        residual_rel,
        steps,
    }
}

fn pressure_jumps(
    p_new: &CellField,
    p_old: &CellField,
    eps_new: f64,
    eps_old: f64,
    variant: ContinuityVariant,
) -> (f64, f64, f64) {
    match variant {
        ContinuityVariant::Min => {
            let dp = CellField::lin2(1.0, p_new, -1.0, p_old);
            (
                0.5 * eps_new.min(eps_old) * dp.inner(&dp),
                0.5 * (eps_new - eps_old).max(0.0) * p_new.inner(p_new),
                0.5 * (eps_old - eps_new).max(0.0) * p_old.inner(p_old),
            )
        }
        ContinuityVariant::GeometricAverage => {
            let s = CellField::lin2(eps_new.sqrt(), p_new, -eps_old.sqrt(), p_old);
            (0.5 * s.inner(&s), 0.0, 0.0)
        }
    }
}

/// Audit the first-order equality over the whole trajectory.
pub fn energy_audit_first_order(traj: &Trajectory) -> EnergyBudget {
    assert_eq!(traj.order, OrderMode::First, "first-order audit needs a first-order run");
    assert_eq!(
        traj.pressure_velocity,
        PressureVelocity::Unfiltered,
        "first-order audit needs the unfiltered pressure coupling"
    );
    let n_steps = traj.ks.len();
    let energy = |u: &FaceField, p: &CellField, eps: f64| {
        0.5 * (u.inner(u) + eps * p.inner(p))
    };
    let mut steps = Vec::with_capacity(n_steps);
    let mut lhs_extra = 0.0;
    let mut rhs_extra = 0.0;
    for n in 0..n_steps {
        let k = traj.ks[n];
        let (e_old, e_new) = (traj.epss[n], traj.epss[n + 1]);
        let (u_old, u_new) = (&traj.us[n], &traj.us[n + 1]);
        let (p_old, p_new) = (&traj.ps[n], &traj.ps[n + 1]);
        let du = FaceField::lin2(1.0, u_new, -1.0, u_old);
        let velocity_jump = 0.5 * du.inner(&du);
        let (pressure_jump, eps_up_jump, eps_down_jump) =
            pressure_jumps(p_new, p_old, e_new, e_old, traj.variant);
        let viscous = k * traj.nu * grad_norm_sq(u_new);
        let work = k * traj.fs[n].inner(u_new);
        let residual = energy(u_new, p_new, e_new) - energy(u_old, p_old, e_old)
            + velocity_jump
            + pressure_jump
            + eps_up_jump
            + eps_down_jump
            + viscous
            - work;
        lhs_extra += velocity_jump + pressure_jump + eps_up_jump + eps_down_jump + viscous;
        rhs_extra += work;
        steps.push(StepBudget {
            velocity_jump,
            pressure_jump,
            eps_up_jump,
            eps_down_jump,
            viscous,
            work,
            residual,
        });
    }
    let lhs = energy(&traj.us[n_steps], &traj.ps[n_steps], traj.epss[n_steps]) + lhs_extra;
    let rhs = energy(&traj.us[0], &traj.ps[0], traj.epss[0]) + rhs_extra;
    budget_from(lhs, rhs, steps)
}

/// Three-level kinetic energy `(|u_n|^2 + |2u_n - u_{n-1}|^2 + |u_n - u_{n-1}|^2)/4`.
fn three_level_energy(u_cur: &FaceField, u_prev: &FaceField) -> f64 {
    let two_minus = FaceField::lin2(2.0, u_cur, -1.0, u_prev);
    let diff = FaceField::lin2(1.0, u_cur, -1.0, u_prev);
    0.25 * (u_cur.inner(u_cur) + two_minus.inner(&two_minus) + diff.inner(&diff))
}

/// Audit the second-order equality.
///
/// Requires a constant-step, geometric-average run whose pressure update used
/// the unfiltered velocity; the equality does not hold otherwise. The budget
/// covers steps 1..N, treating the startup state pair as given data.
pub fn energy_audit_second_order(traj: &Trajectory) -> EnergyBudget {
    assert_eq!(traj.order, OrderMode::Second, "second-order audit needs a second-order run");
    assert_eq!(
        traj.variant,
        ContinuityVariant::GeometricAverage,
        "second-order audit needs the geometric-average coupling"
    );
    assert_eq!(
        traj.pressure_velocity,
        PressureVelocity::Unfiltered,
        "second-order audit needs the pressure update from the unfiltered velocity"
    );
    let n_steps = traj.ks.len();
    assert!(n_steps >= 2, "need at least two steps");
    let k = traj.ks[0];
    for &ki in &traj.ks {
        assert!(
            (ki - k).abs() <= 1e-12 * k,
            "second-order audit needs a constant step"
        );
    }
    let mut steps = Vec::with_capacity(n_steps - 1);
    let mut lhs_extra = 0.0;
    let mut rhs_extra = 0.0;
    for n in 1..n_steps {
        let (e_old, e_new) = (traj.epss[n], traj.epss[n + 1]);
        let (u_prev, u_cur, u_new) = (&traj.us[n - 1], &traj.us[n], &traj.us[n + 1]);
        let (p_old, p_new) = (&traj.ps[n], &traj.ps[n + 1]);
        let d2 = FaceField::lin3(1.0, u_new, -2.0, u_cur, 1.0, u_prev);
        let velocity_jump = 0.75 * d2.inner(&d2);
        let (pressure_jump, eps_up_jump, eps_down_jump) =
            pressure_jumps(p_new, p_old, e_new, e_old, ContinuityVariant::GeometricAverage);
        // the unfiltered velocity, reconstructed from the filtered states
        let u_one = FaceField::lin3(1.5, u_new, -1.0, u_cur, 0.5, u_prev);
        let viscous = k * traj.nu * grad_norm_sq(&u_one);
        let work = k * traj.fs[n].inner(&u_one);
        let g_new = three_level_energy(u_new, u_cur) + 0.5 * e_new * p_new.inner(p_new);
        let g_old = three_level_energy(u_cur, u_prev) + 0.5 * e_old * p_old.inner(p_old);
        let residual =
            g_new - g_old + velocity_jump + pressure_jump + viscous - work;
        lhs_extra += velocity_jump + pressure_jump + viscous;
        rhs_extra += work;
        steps.push(StepBudget {
            velocity_jump,
            pressure_jump,
            eps_up_jump,
            eps_down_jump,
            viscous,
            work,
            residual,
        });
    }
    let lhs = three_level_energy(&traj.us[n_steps], &traj.us[n_steps - 1])
        + 0.5 * traj.epss[n_steps] * traj.ps[n_steps].inner(&traj.ps[n_steps])
        + lhs_extra;
    let rhs = three_level_energy(&traj.us[1], &traj.us[0])
        + 0.5 * traj.epss[1] * traj.ps[1].inner(&traj.ps[1])
        + rhs_extra;
    budget_from(lhs, rhs, steps)
}

/// Per-step numerical dissipation rates scaled by `k^2/2`.
#[derive(Clone, Copy, Debug)]
pub struct DissipationSample {
    pub velocity: f64,
    pub pressure: f64,
    pub eps_up: f64,
    pub eps_down: f64,
}

impl DissipationSample {
    pub fn total(&self) -> f64 {
        self.velocity + self.pressure + self.eps_up + self.eps_down
    }
}

/// Numerical dissipation induced per step:
/// `k^2/2` times the squared discrete time derivatives of velocity and
/// (epsilon-weighted) pressure, plus the one-sided epsilon-movement terms.
pub fn numerical_dissipation(traj: &Trajectory) -> Vec<DissipationSample> {
    let mut out = Vec::with_capacity(traj.ks.len());
    for n in 0..traj.ks.len() {
        let k = traj.ks[n];
        let half_k2 = 0.5 * k * k;
        let (e_old, e_new) = (traj.epss[n], traj.epss[n + 1]);
        let du = FaceField::lin2(1.0, &traj.us[n + 1], -1.0, &traj.us[n]);
        let u_rate = du.norm() / k;
        let velocity = half_k2 * u_rate * u_rate;
        let (p_old, p_new) = (&traj.ps[n], &traj.ps[n + 1]);
        let (pressure, eps_up, eps_down) = match traj.variant {
            ContinuityVariant::Min => {
                let dp = CellField::lin2(1.0, p_new, -1.0, p_old);
                let p_rate = dp.norm() / k;
                (
                    half_k2 * e_new.min(e_old) * p_rate * p_rate,
                    half_k2 * ((e_new - e_old).max(0.0) / k) * p_new.inner(p_new),
                    half_k2 * ((e_old - e_new).max(0.0) / k) * p_old.inner(p_old),
                )
            }
            ContinuityVariant::GeometricAverage => {
                let s = CellField::lin2(e_new.sqrt(), p_new, -e_old.sqrt(), p_old);
                let s_rate = s.norm() / k;
                (half_k2 * s_rate * s_rate, 0.0, 0.0)
            }
        };
        out.push(DissipationSample {
            velocity,
            pressure,
            eps_up,
            eps_down,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::MacGrid;
    use crate::linsolve::SolveConfig;
    use crate::stepper::run_prescribed;

    fn initial(grid: &MacGrid) -> (FaceField, CellField) {
        let pi = std::f64::consts::PI;
        let mut u0 = FaceField::from_fn(
            grid,
            |x, y| (pi * x).sin().powi(2) * (2.0 * pi * y).sin(),
            |x, y| -(2.0 * pi * x).sin() * (pi * y).sin().powi(2),
        );
        u0.project_noslip();
        let p0 = CellField::from_fn(grid, |x, y| (pi * x).cos() * (pi * y).sin());
        (u0, p0)
    }

    fn forcing(grid: &MacGrid) -> impl Fn(f64) -> FaceField + '_ {
        move |t: f64| {
            FaceField::from_fn(
                grid,
                move |x, y| (2.0 + t).ln() * (3.0 * x - y).cos(),
                move |x, y| (1.0 + 0.5 * t).sin() * (x + 2.0 * y).sin(),
            )
        }
    }

    // uneven but fixed schedules, scaled into (0.004, 0.02)
    fn wobble_ks(n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 0.012 + 0.008 * ((i as f64 * 2.399).sin() * 0.9))
            .collect()
    }

    fn wobble_eps(n: usize) -> Vec<f64> {
        (0..=n)
            .map(|i| 1e-3 * (1.0 + 0.8 * (i as f64 * 1.618).cos()))
            .collect()
    }

    fn tight_solver() -> SolveConfig {
        SolveConfig {
            rel_tol: 1e-13,
            ..SolveConfig::default()
        }
    }

    #[test]
    fn first_order_budget_closes_min() {
        let g = MacGrid::unit_square(8);
        let (u0, p0) = initial(&g);
        let f = forcing(&g);
        let traj = run_prescribed(
            &u0,
            &p0,
            0.0,
            &wobble_ks(12),
            &wobble_eps(12),
            OrderMode::First,
            ContinuityVariant::Min,
            PressureVelocity::Unfiltered,
            0.05,
            &tight_solver(),
            &f,
        )
        .unwrap();
        let b = energy_audit_first_order(&traj);
        assert!(b.residual_rel <= 1e-10, "relative residual {}", b.residual_rel);
        let sum: f64 = b.steps.iter().map(|s| s.residual).sum();
        assert!((sum - b.residual_abs).abs() <= 1e-10 * b.lhs.abs().max(1.0));
        for s in &b.steps {
            assert!(s.velocity_jump >= 0.0 && s.pressure_jump >= 0.0);
            assert!(s.eps_up_jump >= 0.0 && s.eps_down_jump >= 0.0);
            assert!(s.viscous >= 0.0);
        }
    }

    #[test]
    fn first_order_budget_closes_geometric_average() {
        let g = MacGrid::unit_square(8);
        let (u0, p0) = initial(&g);
        let f = forcing(&g);
        let traj = run_prescribed(
            &u0,
            &p0,
            0.0,
            &wobble_ks(12),
            &wobble_eps(12),
            OrderMode::First,
            ContinuityVariant::GeometricAverage,
            PressureVelocity::Unfiltered,
            0.05,
            &tight_solver(),
            &f,
        )
        .unwrap();
        let b = energy_audit_first_order(&traj);
        assert!(b.residual_rel <= 1e-10, "relative residual {}", b.residual_rel);
        // geometric average has no one-sided epsilon terms
        for s in &b.steps {
            assert_eq!(s.eps_up_jump, 0.0);
            assert_eq!(s.eps_down_jump, 0.0);
        }
    }

    #[test]
    fn second_order_budget_closes() {
        let g = MacGrid::unit_square(8);
        let (u0, p0) = initial(&g);
        let f = forcing(&g);
        let ks = vec![0.01; 14];
        let eps = wobble_eps(14);
        let traj = run_prescribed(
            &u0,
            &p0,
            0.0,
            &ks,
            &eps,
            OrderMode::Second,
            ContinuityVariant::GeometricAverage,
            PressureVelocity::Unfiltered,
            0.05,
            &tight_solver(),
            &f,
        )
        .unwrap();
        let b = energy_audit_second_order(&traj);
        assert!(b.residual_rel <= 1e-10, "relative residual {}", b.residual_rel);
        let sum: f64 = b.steps.iter().map(|s| s.residual).sum();
        assert!((sum - b.residual_abs).abs() <= 1e-10 * b.lhs.abs().max(1.0));
    }

    #[test]
    #[should_panic(expected = "unfiltered")]
    fn second_order_audit_rejects_filtered_pressure() {
        let g = MacGrid::unit_square(8);
        let (u0, p0) = initial(&g);
        let f = forcing(&g);
        let ks = vec![0.01; 4];
        let eps = vec![1e-3; 5];
        let traj = run_prescribed(
            &u0,
            &p0,
            0.0,
            &ks,
            &eps,
            OrderMode::Second,
            ContinuityVariant::GeometricAverage,
            PressureVelocity::Filtered,
            0.05,
            &SolveConfig::default(),
            &f,
        )
        .unwrap();
        let _ = energy_audit_second_order(&traj);
    }

    #[test]
    fn dissipation_matches_budget_jumps_min() {
        let g = MacGrid::unit_square(8);
        let (u0, p0) = initial(&g);
        let f = forcing(&g);
        let ks = wobble_ks(10);
        let eps = wobble_eps(10);
        let traj = run_prescribed(
            &u0,
            &p0,
            0.0,
            &ks,
            &eps,
            OrderMode::First,
            ContinuityVariant::Min,
            PressureVelocity::Unfiltered,
            0.05,
            &tight_solver(),
            &f,
        )
        .unwrap();
        let b = energy_audit_first_order(&traj);
        let d = numerical_dissipation(&traj);
        assert_eq!(b.steps.len(), d.len());
        for (n, (s, r)) in b.steps.iter().zip(d.iter()).enumerate() {
            let k = ks[n];
            // quadratic-rate terms equal the budget jumps; the one-sided
            // epsilon terms carry one extra factor of k
            assert!((r.velocity - s.velocity_jump).abs() <= 1e-12 * s.velocity_jump.max(1e-30));
            assert!((r.pressure - s.pressure_jump).abs() <= 1e-12 * s.pressure_jump.max(1e-30));
            assert!((r.eps_up - k * s.eps_up_jump).abs() <= 1e-12 * s.eps_up_jump.max(1e-30));
            assert!(
                (r.eps_down - k * s.eps_down_jump).abs() <= 1e-12 * s.eps_down_jump.max(1e-30)
            );
        }
    }

    #[test]
    fn dissipation_matches_budget_jumps_geometric_average() {
        let g = MacGrid::unit_square(8);
        let (u0, p0) = initial(&g);
        let f = forcing(&g);
        let ks = wobble_ks(10);
        let eps = wobble_eps(10);
        let traj = run_prescribed(
            &u0,
            &p0,
            0.0,
            &ks,
            &eps,
            OrderMode::First,
            ContinuityVariant::GeometricAverage,
            PressureVelocity::Unfiltered,
            0.05,
            &tight_solver(),
            &f,
        )
        .unwrap();
        let b = energy_audit_first_order(&traj);
        let d = numerical_dissipation(&traj);
        for (s, r) in b.steps.iter().zip(d.iter()) {
            assert!((r.velocity - s.velocity_jump).abs() <= 1e-12 * s.velocity_jump.max(1e-30));
            assert!((r.pressure - s.pressure_jump).abs() <= 1e-12 * s.pressure_jump.max(1e-30));
            assert_eq!(r.eps_up, 0.0);
            assert_eq!(r.eps_down, 0.0);
        }
    }

    #[test]
    fn three_level_polarization_identity() {
        // (3a/2 - 2b + c/2)(3a/2 - b + c/2) telescopes the three-level energy
        // plus three quarters of the squared second difference
        let mut state = 0x2545f4914f6cdd1du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0
        };
        for _ in 0..500 {
            let (a, b, c) = (next(), next(), next());
            let lhs = (1.5 * a - 2.0 * b + 0.5 * c) * (1.5 * a - b + 0.5 * c);
            let g1 = 0.25 * (a * a + (2.0 * a - b).powi(2) + (a - b).powi(2));
            let g0 = 0.25 * (b * b + (2.0 * b - c).powi(2) + (b - c).powi(2));
            let rhs = g1 - g0 + 0.75 * (a - 2.0 * b + c).powi(2);
            assert!(
                (lhs - rhs).abs() <= 1e-13 * (1.0 + lhs.abs()),
                "identity fails: {} vs {}",
                lhs,
                rhs
            );
        }
    }
}
