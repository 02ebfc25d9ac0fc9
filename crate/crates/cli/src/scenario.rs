//! Flow scenarios: the manufactured solution with its analytic forcing, and
//! a qualitative driven rotational flow on the square.

use acflow_core::{CellField, FaceField, MacGrid};
use std::f64::consts::PI;

/// A named problem setup: domain, viscosity, forcing, initial data, and
/// optionally the exact solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Exact solution on the unit square with nu = 1; forcing derived
    /// analytically so errors can be measured at any time.
    Manufactured,
    /// Rotational body force ramped over the first time unit on [-1,1]^2;
    /// no exact solution, diagnostics only.
    Driven,
}

impl Scenario {
    pub fn parse(name: &str) -> Option<Scenario> {
        match name {
            "manufactured" => Some(Scenario::Manufactured),
            "driven" => Some(Scenario::Driven),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Manufactured => "manufactured",
            Scenario::Driven => "driven",
        }
    }

    pub fn grid(&self, nx: usize, ny: usize) -> MacGrid {
        match self {
            Scenario::Manufactured => MacGrid::with_origin(nx, ny, 0.0, 0.0, 1.0, 1.0),
            Scenario::Driven => MacGrid::with_origin(nx, ny, -1.0, -1.0, 2.0, 2.0),
        }
    }

    pub fn nu(&self) -> f64 {
        match self {
            Scenario::Manufactured => 1.0,
            Scenario::Driven => 0.1,
        }
    }

    pub fn t_final(&self) -> f64 {
        match self {
            Scenario::Manufactured => 1.0,
            Scenario::Driven => 2.0,
        }
    }

    pub fn initial(&self, grid: &MacGrid) -> (FaceField, CellField) {
        match self {
            Scenario::Manufactured => {
                // u(x, 0) = 0; p(x, 0) = cos(pi x) sin(pi y)
                let u0 = FaceField::zeros(grid);
                let p0 = CellField::from_fn(grid, |x, y| (PI * x).cos() * (PI * y).sin());
                (u0, p0)
            }
            Scenario::Driven => (FaceField::zeros(grid), CellField::zeros(grid)),
        }
    }

    pub fn forcing(&self, grid: &MacGrid, t: f64) -> FaceField {
        match self {
            Scenario::Manufactured => FaceField::from_fn(
                grid,
                |x, y| mms_force_x(x, y, t, self.nu()),
                |x, y| mms_force_y(x, y, t, self.nu()),
            ),
            Scenario::Driven => {
                let ramp = t.min(1.0);
                FaceField::from_fn(
                    grid,
                    move |x, y| ramp * (-4.0 * y * (1.0 - x * x - y * y)),
                    move |x, y| ramp * (4.0 * x * (1.0 - x * x - y * y)),
                )
            }
        }
    }

    /// Exact fields at time `t`, sampled on the grid; `None` for scenarios
    /// without a closed-form solution.
    pub fn exact(&self, grid: &MacGrid, t: f64) -> Option<(FaceField, CellField)> {
        match self {
            Scenario::Manufactured => {
                let mut u = FaceField::from_fn(grid, |x, y| mms_u1(x, y, t), |x, y| mms_u2(x, y, t));
                // analytic normal traces vanish only up to sin(pi) roundoff
                u.project_noslip();
                let p = CellField::from_fn(grid, |x, y| mms_p(x, y, t));
                Some((u, p))
            }
            Scenario::Driven => None,
        }
    }
}

// exact solution: u = pi sin(t) (sin(2 pi y) sin^2(pi x), -sin(2 pi x) sin^2(pi y)),
// p = cos(t) cos(pi x) sin(pi y); divergence-free with zero boundary trace

pub fn mms_u1(x: f64, y: f64, t: f64) -> f64 {
    PI * t.sin() * (2.0 * PI * y).sin() * (PI * x).sin().powi(2)
}

pub fn mms_u2(x: f64, y: f64, t: f64) -> f64 {
    -PI * t.sin() * (2.0 * PI * x).sin() * (PI * y).sin().powi(2)
}

pub fn mms_p(x: f64, y: f64, t: f64) -> f64 {
    t.cos() * (PI * x).cos() * (PI * y).sin()
}

// spatial partials of the exact velocity, shared by both force components
fn mms_grads(x: f64, y: f64, t: f64) -> (f64, f64, f64, f64) {
    let g = PI * t.sin();
    let du1_dx = g * (2.0 * PI * y).sin() * PI * (2.0 * PI * x).sin();
    let du1_dy = g * 2.0 * PI * (2.0 * PI * y).cos() * (PI * x).sin().powi(2);
    let du2_dx = -g * 2.0 * PI * (2.0 * PI * x).cos() * (PI * y).sin().powi(2);
    let du2_dy = -g * (2.0 * PI * x).sin() * PI * (2.0 * PI * y).sin();
    (du1_dx, du1_dy, du2_dx, du2_dy)
}

fn mms_lap(x: f64, y: f64, t: f64) -> (f64, f64) {
    let g = PI * t.sin();
    let lap1 = 2.0 * PI * PI
        * g
        * (2.0 * PI * y).sin()
        * ((2.0 * PI * x).cos() - 2.0 * (PI * x).sin().powi(2));
    let lap2 = -2.0 * PI * PI
        * g
        * (2.0 * PI * x).sin()
        * ((2.0 * PI * y).cos() - 2.0 * (PI * y).sin().powi(2));
    (lap1, lap2)
}

/// x component of `u_t + (u . grad) u + grad p - nu lap u` for the exact pair.
pub fn mms_force_x(x: f64, y: f64, t: f64, nu: f64) -> f64 {
    let u1 = mms_u1(x, y, t);
    let u2 = mms_u2(x, y, t);
    let ut1 = PI * t.cos() * (2.0 * PI * y).sin() * (PI * x).sin().powi(2);
    let (du1_dx, du1_dy, _, _) = mms_grads(x, y, t);
    let px = -t.cos() * PI * (PI * x).sin() * (PI * y).sin();
    let (lap1, _) = mms_lap(x, y, t);
    ut1 + u1 * du1_dx + u2 * du1_dy + px - nu * lap1
}

/// y component of the same force density.
pub fn mms_force_y(x: f64, y: f64, t: f64, nu: f64) -> f64 {
    let u1 = mms_u1(x, y, t);
    let u2 = mms_u2(x, y, t);
    let ut2 = -PI * t.cos() * (2.0 * PI * x).sin() * (PI * y).sin().powi(2);
    let (_, _, du2_dx, du2_dy) = mms_grads(x, y, t);
    let py = t.cos() * PI * (PI * x).cos() * (PI * y).cos();
    let (_, lap2) = mms_lap(x, y, t);
    ut2 + u1 * du2_dx + u2 * du2_dy + py - nu * lap2
}

#[cfg(test)]
mod tests {
    use super::*;

    // finite differences of the exact fields, for validating every analytic
    // derivative entering the force
    fn fd_force(x: f64, y: f64, t: f64, nu: f64) -> (f64, f64) {
        let dt = 1e-6;
        let dx = 1e-5;
        let dl = 1e-4; // wider step for the second derivatives
        let ut1 = (mms_u1(x, y, t + dt) - mms_u1(x, y, t - dt)) / (2.0 * dt);
        let ut2 = (mms_u2(x, y, t + dt) - mms_u2(x, y, t - dt)) / (2.0 * dt);
        let du1_dx = (mms_u1(x + dx, y, t) - mms_u1(x - dx, y, t)) / (2.0 * dx);
        let du1_dy = (mms_u1(x, y + dx, t) - mms_u1(x, y - dx, t)) / (2.0 * dx);
        let du2_dx = (mms_u2(x + dx, y, t) - mms_u2(x - dx, y, t)) / (2.0 * dx);
        let du2_dy = (mms_u2(x, y + dx, t) - mms_u2(x, y - dx, t)) / (2.0 * dx);
        let px = (mms_p(x + dx, y, t) - mms_p(x - dx, y, t)) / (2.0 * dx);
        let py = (mms_p(x, y + dx, t) - mms_p(x, y - dx, t)) / (2.0 * dx);
        let lap1 = (mms_u1(x + dl, y, t) + mms_u1(x - dl, y, t) + mms_u1(x, y + dl, t)
            + mms_u1(x, y - dl, t)
            - 4.0 * mms_u1(x, y, t))
            / (dl * dl);
        let lap2 = (mms_u2(x + dl, y, t) + mms_u2(x - dl, y, t) + mms_u2(x, y + dl, t)
            + mms_u2(x, y - dl, t)
            - 4.0 * mms_u2(x, y, t))
            / (dl * dl);
        let u1 = mms_u1(x, y, t);
        let u2 = mms_u2(x, y, t);
        (
            ut1 + u1 * du1_dx + u2 * du1_dy + px - nu * lap1,
            ut2 + u1 * du2_dx + u2 * du2_dy + py - nu * lap2,
        )
    }

    #[test]
    fn analytic_force_matches_finite_differences() {
        let nu = 1.0;
        for &t in &[0.0, 0.3, 0.7, 1.0] {
            for i in 1..7 {
                for j in 1..7 {
                    let (x, y) = (i as f64 / 7.0, j as f64 / 7.0);
                    let (fx, fy) = (mms_force_x(x, y, t, nu), mms_force_y(x, y, t, nu));
                    let (gx, gy) = fd_force(x, y, t, nu);
                    assert!(
                        (fx - gx).abs() <= 1e-3 * (1.0 + fx.abs()),
                        "fx mismatch at ({x}, {y}, {t}): {fx} vs {gx}"
                    );
                    assert!(
                        (fy - gy).abs() <= 1e-3 * (1.0 + fy.abs()),
                        "fy mismatch at ({x}, {y}, {t}): {fy} vs {gy}"
                    );
                }
            }
        }
    }

    #[test]
    fn exact_velocity_is_divergence_free_analytically() {
        for &t in &[0.2, 0.9] {
            for i in 1..9 {
                for j in 1..9 {
                    let (x, y) = (i as f64 / 9.0, j as f64 / 9.0);
                    let (du1_dx, _, _, du2_dy) = mms_grads(x, y, t);
                    assert!((du1_dx + du2_dy).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn exact_fields_satisfy_no_slip() {
        let g = MacGrid::unit_square(16);
        let (u, _) = Scenario::Manufactured.exact(&g, 0.5).unwrap();
        assert_eq!(u.boundary_normal_max(), 0.0);
    }

    #[test]
    fn initial_data_conform() {
        for sc in [Scenario::Manufactured, Scenario::Driven] {
            let g = sc.grid(12, 12);
            let (u0, p0) = sc.initial(&g);
            assert_eq!(u0.boundary_normal_max(), 0.0);
            assert_eq!(u0.grid(), p0.grid());
        }
    }

    #[test]
    fn driven_force_ramps_then_saturates() {
        let g = Scenario::Driven.grid(8, 8);
        let f_half = Scenario::Driven.forcing(&g, 0.5);
        let f_one = Scenario::Driven.forcing(&g, 1.0);
        let f_two = Scenario::Driven.forcing(&g, 2.0);
        let half_vs_one = FaceField::lin2(2.0, &f_half, -1.0, &f_one);
        let one_vs_two = FaceField::lin2(1.0, &f_one, -1.0, &f_two);
        assert!(half_vs_one.norm() <= 1e-12 * f_one.norm());
        assert!(one_vs_two.norm() <= 1e-12 * f_one.norm());
    }
}
