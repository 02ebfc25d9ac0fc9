//! One-step advance of the artificially compressed flow equations, with
//! independent adaptivity in the time step and the compression parameter.
//!
//! Each attempted step solves the uncoupled momentum equation
//! `(u1 - u_n)/k + N(u*) u1 - (k/eps) grad div u1 - nu lap u1
//!  = f(t+k) - (eps_hat/eps) grad p_n`
//! with the extrapolated advecting velocity `u* = (1+tau) u_n - tau u_{n-1}`,
//! optionally filters `u1` to second order, updates the pressure
//! algebraically from the divergence, and then accepts or rejects against
//! the momentum and continuity tolerances. The pressure update enforces
//! `(eps_{n+1} p_{n+1} - eps_hat p_n)/k + div u = 0` to roundoff, which is
//! what the energy audits in [`crate::energy`] lean on.

use crate::controllers::{self, OrderMode, StepWindow, Tolerances};
use crate::grid::{divergence, gradient, CellField, FaceField, MacGrid};
use crate::linsolve::{
    assemble_momentum, field_from_dofs, interior_dofs, solve, SolveConfig, SolveError,
};

/// How the discrete continuity equation couples consecutive epsilon values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContinuityVariant {
    /// `eps_hat = sqrt(eps_{n+1} eps_n)`.
    GeometricAverage,
    /// `eps_hat = min(eps_{n+1}, eps_n)`.
    Min,
}

/// Which velocity feeds the divergence in the pressure update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PressureVelocity {
    /// The accepted (possibly filtered) velocity; adaptive-run default.
    Filtered,
    /// The backward-Euler velocity, as the second-order energy identity needs.
    Unfiltered,
}

/// Full configuration of the flow scheme.
#[derive(Clone, Debug)]
pub struct SchemeConfig {
    pub order: OrderMode,
    pub variant: ContinuityVariant,
    pub pressure_velocity: PressureVelocity,
    pub nu: f64,
    pub tol: Tolerances,
    /// Inclusive clamp on every accepted or retried epsilon.
    pub eps_bounds: (f64, f64),
    pub solver: SolveConfig,
    pub retry_budget: usize,
    /// Choose k so the first-order estimator stays in `(tol/10, tol]`:
    /// hold k inside the band, steer toward it from outside, and reject
    /// steps whose first-order estimate exceeds tol even when the
    /// governing order's estimate passes. Keeps consecutive steps close
    /// in size, which the second-difference estimator needs to stay
    /// clean, at the cost of running the second-order modes on smaller
    /// steps than their own estimate would allow.
    pub band_rule: bool,
    pub k_floor: f64,
}

impl SchemeConfig {
    pub fn new(order: OrderMode, variant: ContinuityVariant, nu: f64, tol: Tolerances) -> Self {
        assert!(nu >= 0.0, "viscosity must be nonnegative");
        SchemeConfig {
            order,
            variant,
            pressure_velocity: PressureVelocity::Filtered,
            nu,
            tol,
            eps_bounds: (1e-8, 1e-1),
            solver: SolveConfig::default(),
            retry_budget: 10,
            band_rule: false,
            k_floor: 1e-12,
        }
    }
}

/// Integrator state between steps.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub u_cur: FaceField,
    pub u_prev: FaceField,
    pub p_cur: CellField,
    pub window: StepWindow,
    pub eps_cur: f64,
    pub eps_next: f64,
    pub d2_prev: Option<FaceField>,
    pub step_index: usize,
}

impl FlowState {
    pub fn new(u0: FaceField, p0: CellField, k0: f64, eps0: f64) -> Self {
        assert_eq!(u0.grid(), p0.grid(), "velocity and pressure grids differ");
        assert!(k0 > 0.0 && eps0 > 0.0, "k0 and eps0 must be positive");
        assert!(
            u0.boundary_normal_max() == 0.0,
            "initial velocity must vanish on wall-normal faces"
        );
        FlowState {
            t: 0.0,
            u_prev: u0.clone(),
            u_cur: u0,
            p_cur: p0,
            window: StepWindow::uniform(k0),
            eps_cur: eps0,
            eps_next: eps0,
            d2_prev: None,
            step_index: 0,
        }
    }

    pub fn grid(&self) -> &MacGrid {
        self.u_cur.grid()
    }

    /// Monitored algorithmic energy `norm(u)^2 + eps norm(p)^2`.
    pub fn energy(&self) -> f64 {
        let un = self.u_cur.norm();
        let pn = self.p_cur.norm();
        un * un + self.eps_cur * pn * pn
    }
}

/// Diagnostics for one accepted step.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub t_new: f64,
    pub k_used: f64,
    pub eps_used: f64,
    pub eps_hat: f64,
    pub est1: Option<f64>,
    pub est2: Option<f64>,
    /// Continuity estimator: divergence norm of the estimator velocity.
    pub est_c: f64,
    /// Divergence norm of the velocity actually carried forward.
    pub div_norm: f64,
    /// Relative residual of the discrete continuity equation.
    pub continuity_residual: f64,
    pub rejections: usize,
    pub order_used: u8,
    pub k_proposed: f64,
    pub eps_proposed: f64,
    pub solver_iterations: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum StepError {
    #[error(transparent)]
    Solver(#[from] SolveError),
    #[error("{attempts} consecutive rejections at t = {t}")]
    RetryBudgetExhausted { t: f64, attempts: usize },
    #[error("step size underflow at t = {t}: k = {k:.3e}")]
    StepUnderflow { t: f64, k: f64 },
}

/// Linear extrapolation `(1 + tau) u_cur - tau u_prev` of the advecting velocity.
pub fn extrapolate(u_cur: &FaceField, u_prev: &FaceField, tau: f64) -> FaceField {
    FaceField::lin2(1.0 + tau, u_cur, -tau, u_prev)
}

/// Coupling value for the discrete continuity equation.
///
/// The geometric average returns `eps_next` exactly when both arguments are
/// equal, so a frozen epsilon reduces both variants to the same constant
/// scheme bit for bit.
pub fn epsilon_hat(eps_next: f64, eps_cur: f64, variant: ContinuityVariant) -> f64 {
    assert!(eps_next > 0.0 && eps_cur > 0.0, "epsilon values must be positive");
    match variant {
        ContinuityVariant::Min => eps_next.min(eps_cur),
        ContinuityVariant::GeometricAverage => {
            if eps_next == eps_cur {
                eps_next
            } else {
                (eps_next * eps_cur).sqrt()
            }
        }
    }
}

/// Algebraic pressure update
/// `p_{n+1} = (eps_hat/eps_next) p_n - (k/eps_next) div_u`.
pub fn pressure_update(
    p_cur: &CellField,
    div_u: &CellField,
    eps_next: f64,
    eps_hat: f64,
    k: f64,
) -> CellField {
    CellField::lin2(eps_hat / eps_next, p_cur, -k / eps_next, div_u)
}

/// Relative residual of `(eps_next p_new - eps_hat p_cur)/k + div_u = 0`.
pub fn continuity_residual(
    p_new: &CellField,
    p_cur: &CellField,
    div_u: &CellField,
    eps_next: f64,
    eps_hat: f64,
    k: f64,
) -> f64 {
    let quot = CellField::lin2(eps_next / k, p_new, -eps_hat / k, p_cur);
    let r = CellField::lin2(1.0, &quot, 1.0, div_u);
    let scale = div_u
        .norm()
        .max(eps_next / k * p_new.norm())
        .max(f64::MIN_POSITIVE);
    r.norm() / scale
}

/// Solve the uncoupled momentum system for the backward-Euler velocity.
#[allow(clippy::too_many_arguments)]
pub fn momentum_solve(
    w: &FaceField,
    u_cur: &FaceField,
    p_cur: &CellField,
    f_new: &FaceField,
    k: f64,
    eps: f64,
    eps_hat: f64,
    nu: f64,
    solver: &SolveConfig,
) -> Result<(FaceField, usize), SolveError> {
    let grid = u_cur.grid();
    let a = assemble_momentum(grid, w, k, eps, nu);
    let rhs_field = FaceField::lin3(
        1.0,
        f_new,
        1.0 / k,
        u_cur,
        -eps_hat / eps,
        &gradient(p_cur),
    );
    let rhs = interior_dofs(&rhs_field);
    let x0 = interior_dofs(u_cur);
    let (x, stats) = solve(&a, &rhs, Some(&x0), solver)?;
    Ok((field_from_dofs(grid, &x), stats.iterations))
}

fn clamp_eps(eps: f64, bounds: (f64, f64)) -> f64 {
    eps.max(bounds.0).min(bounds.1)
}

/// Advance the state by one accepted step, retrying internally on rejection.
pub fn step(
    state: &mut FlowState,
    cfg: &SchemeConfig,
    forcing: &dyn Fn(f64) -> FaceField,
) -> Result<StepReport, StepError> {
    let grid = *state.grid();
    let mut k = state.window.k_next;
    let mut eps = clamp_eps(state.eps_next, cfg.eps_bounds);
    let mut rejections = 0usize;

    loop {
        if k < cfg.k_floor {
            return Err(StepError::StepUnderflow { t: state.t, k });
        }
        let tau = k / state.window.k_cur;
        let window = StepWindow::new(k, state.window.k_cur, state.window.k_prev);
        let u_star = if state.step_index == 0 {
            state.u_cur.clone()
        } else {
            extrapolate(&state.u_cur, &state.u_prev, tau)
        };
        let eps_hat = epsilon_hat(eps, state.eps_cur, cfg.variant);
        let f_new = forcing(state.t + k);
        assert_eq!(f_new.grid(), &grid, "forcing sampled on a different grid");
        let (u1, solver_iterations) = momentum_solve(
            &u_star,
            &state.u_cur,
            &state.p_cur,
            &f_new,
            k,
            eps,
            eps_hat,
            cfg.nu,
            &cfg.solver,
        )?;

        // second difference, estimators, filtered candidate
        let (d2, filtered, e1, e2) = if state.step_index >= 1 {
            let (a, b, c) = controllers::second_difference_coeffs(&window);
            let d2 = FaceField::lin3(a, &u1, b, &state.u_cur, c, &state.u_prev);
            let e1 = controllers::est1_from_norm(d2.norm(), &window);
            let e2 = state.d2_prev.as_ref().map(|old| {
                let cw = controllers::est2_weight(&window);
                let diff = FaceField::lin2(cw, &d2, -cw, old);
                controllers::est2_from_norm(diff.norm(), &window)
            });
            let filtered = FaceField::lin2(
                1.0,
                &u1,
                -0.5 * controllers::alpha1(tau),
                &d2,
            );
            (Some(d2), Some(filtered), Some(e1), e2)
        } else {
            (None, None, None, None)
        };

        // velocity feeding the continuity estimator (pre order-selection)
        let u_est: &FaceField = match (cfg.pressure_velocity, &filtered) {
            (PressureVelocity::Filtered, Some(filt))
                if cfg.order != OrderMode::First => filt,
            _ => &u1,
        };
        let est_c = divergence(u_est).norm();

        let governing = match (cfg.order, e1, e2) {
            (_, None, _) => None, // startup: momentum estimator not yet active
            (OrderMode::First, Some(e1), _) => Some(e1),
            (OrderMode::Second, Some(e1), e2) => Some(e2.unwrap_or(e1)),
            (OrderMode::Variable, Some(e1), e2) => Some(e2.map_or(e1, |v| v.min(e1))),
        };
        let momentum_ok = governing.is_none_or(|g| g <= cfg.tol.momentum)
            && (!cfg.band_rule || e1.is_none_or(|v| v <= cfg.tol.momentum));
        let continuity_ok = est_c <= cfg.tol.continuity;

        if !(momentum_ok && continuity_ok) {
            if std::env::var_os("ACFLOW_TRACE_REJECT").is_some() {
                eprintln!(
                    "reject t={:.4} k={:.4e} eps={:.4e} e1={:?} e2={:?} est_c={:.4e} mok={} cok={}",
                    state.t, k, eps, e1, e2, est_c, momentum_ok, continuity_ok
                );
            }
            rejections += 1;
            if rejections > cfg.retry_budget {
                return Err(StepError::RetryBudgetExhausted {
                    t: state.t,
                    attempts: rejections,
                });
            }
            if !momentum_ok {
                let mut k_new = k;
                if governing.is_some_and(|g| g > cfg.tol.momentum) {
                    k_new = match (cfg.order, e2) {
                        (OrderMode::First, _) => {
                            controllers::reject_step_k(k, e1.unwrap(), cfg.tol.momentum, 1)
                        }
                        (OrderMode::Second, Some(e2v)) => {
                            controllers::reject_step_k(k, e2v, cfg.tol.momentum, 2)
                        }
                        (OrderMode::Second, None) => {
                            controllers::reject_step_k(k, e1.unwrap(), cfg.tol.momentum, 1)
                        }
                        (OrderMode::Variable, Some(e2v)) => controllers::reject_step_k(
                            k,
                            e1.unwrap(),
                            cfg.tol.momentum,
                            1,
                        )
                        .max(controllers::reject_step_k(k, e2v, cfg.tol.momentum, 2)),
                        (OrderMode::Variable, None) => {
                            controllers::reject_step_k(k, e1.unwrap(), cfg.tol.momentum, 1)
                        }
                    };
                }
                if cfg.band_rule {
                    if let Some(e1v) = e1 {
                        if e1v > cfg.tol.momentum {
                            k_new = k_new
                                .min(controllers::reject_step_k(k, e1v, cfg.tol.momentum, 1));
                        }
                    }
                }
                k = k_new;
            } else {
                // epsilon moves only once the step size is settled: an
                // oversized k inflates the divergence too, and dropping
                // epsilon alongside the k correction rescales the pressure
                // through a mismatched average, injecting divergence the
                // smaller retry step then amplifies
                eps = clamp_eps(
                    controllers::reject_epsilon(eps, est_c, cfg.tol.continuity),
                    cfg.eps_bounds,
                );
            }
            continue;
        }

        // accepted: choose the carried velocity and the next step size
        let (accepted, order_used, mut k_prop) = match cfg.order {
            OrderMode::First => (
                u1.clone(),
                1u8,
                match e1 {
                    Some(e1v) => controllers::propose_step(k, e1v, cfg.tol.momentum, 1),
                    None => k, // startup keeps k
                },
            ),
            OrderMode::Second => match (&filtered, e2, e1) {
                (Some(filt), Some(e2v), _) => (
                    filt.clone(),
                    2,
                    controllers::propose_step(k, e2v, cfg.tol.momentum, 2),
                ),
                (Some(filt), None, Some(e1v)) => (
                    filt.clone(),
                    2,
                    controllers::propose_step(k, e1v, cfg.tol.momentum, 1),
                ),
                _ => (u1.clone(), 1, k),
            },
            OrderMode::Variable => match (&filtered, e2, e1) {
                (Some(filt), Some(e2v), Some(e1v)) => {
                    let k_be = controllers::propose_step(k, e1v, cfg.tol.momentum, 1);
                    let k_f = controllers::propose_step(k, e2v, cfg.tol.momentum, 2);
                    if k_be > k_f {
                        (u1.clone(), 1, k_be)
                    } else {
                        (filt.clone(), 2, k_f)
                    }
                }
                (Some(filt), None, Some(e1v)) => (
                    filt.clone(),
                    2,
                    controllers::propose_step(k, e1v, cfg.tol.momentum, 1),
                ),
                _ => (u1.clone(), 1, k),
            },
        };
        if cfg.band_rule {
            if let Some(e1v) = e1 {
                // aim at the log-center of the band rather than its upper
                // edge: riding the edge leaves no headroom, so estimator
                // noise turns into rejection storms that jitter the step
                let center = cfg.tol.momentum / 10f64.sqrt();
                k_prop = k_prop.min(controllers::propose_step(k, e1v, center, 1));
            }
        }

        // pressure update from the configured velocity
        let u_press: &FaceField = match cfg.pressure_velocity {
            PressureVelocity::Unfiltered => &u1,
            PressureVelocity::Filtered => &accepted,
        };
        let div_used = divergence(u_press);
        let div_norm = divergence(&accepted).norm();
        let p_new = pressure_update(&state.p_cur, &div_used, eps, eps_hat, k);
        let cont_res = continuity_residual(&p_new, &state.p_cur, &div_used, eps, eps_hat, k);
        // growth is rate-limited below the controller's 2x clamp: raising
        // epsilon rescales the stored pressure through the averaged
        // parameter, and a large jump injects divergence that bounces the
        // next step off the continuity test (a halve-grow limit cycle when
        // it happens against the upper bound)
        let eps_prop = clamp_eps(
            controllers::propose_epsilon(eps, est_c, cfg.tol.continuity).min(1.1 * eps),
            cfg.eps_bounds,
        );

        let report = StepReport {
            t_new: state.t + k,
            k_used: k,
            eps_used: eps,
            eps_hat,
            est1: e1,
            est2: e2,
            est_c,
            div_norm,
            continuity_residual: cont_res,
            rejections,
            order_used,
            k_proposed: k_prop,
            eps_proposed: eps_prop,
            solver_iterations,
        };

        state.u_prev = std::mem::replace(&mut state.u_cur, accepted);
        state.p_cur = p_new;
        state.t += k;
        state.window = state.window.advance(k, k_prop);
        state.eps_cur = eps;
        state.eps_next = eps_prop;
        state.d2_prev = d2;
        state.step_index += 1;
        return Ok(report);
    }
}

/// Recorded trajectory of a prescribed-schedule run, the audit input.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: MacGrid,
    pub nu: f64,
    pub order: OrderMode,
    pub variant: ContinuityVariant,
    pub pressure_velocity: PressureVelocity,
    /// Accepted velocities `u_0 ..= u_N`.
    pub us: Vec<FaceField>,
    /// Pressures `p_0 ..= p_N`.
    pub ps: Vec<CellField>,
    /// Compression parameters `eps_0 ..= eps_N`.
    pub epss: Vec<f64>,
    /// Step sizes `k_1 ..= k_N`.
    pub ks: Vec<f64>,
    /// Forcing samples `f_1 ..= f_N` (at the end of each step).
    pub fs: Vec<FaceField>,
}

/// Run the scheme with prescribed step and epsilon schedules, recording the
/// whole trajectory. No adaptivity: every step is taken as given.
///
/// `epss` carries one more entry than `ks`; `epss[0]` is the initial value
/// entering only the initial energy. The startup step is first order even
/// when `order` is `Second`, matching the adaptive integrator.
#[allow(clippy::too_many_arguments)]
pub fn run_prescribed(
    u0: &FaceField,
    p0: &CellField,
    t0: f64,
    ks: &[f64],
    epss: &[f64],
    order: OrderMode,
    variant: ContinuityVariant,
    pressure_velocity: PressureVelocity,
    nu: f64,
    solver: &SolveConfig,
    forcing: &dyn Fn(f64) -> FaceField,
) -> Result<Trajectory, StepError> {
    assert!(order != OrderMode::Variable, "prescribed runs are first or second order");
    assert_eq!(epss.len(), ks.len() + 1, "need one epsilon per state");
    assert!(!ks.is_empty(), "empty schedule");
    assert!(ks.iter().all(|&k| k > 0.0), "steps must be positive");
    assert!(epss.iter().all(|&e| e > 0.0), "epsilons must be positive");
    let grid = *u0.grid();
    let mut us = vec![u0.clone()];
    let mut ps = vec![p0.clone()];
    let mut fs = Vec::with_capacity(ks.len());
    let mut t = t0;
    for n in 0..ks.len() {
        let k = ks[n];
        let k_prev = if n == 0 { ks[0] } else { ks[n - 1] };
        let tau = k / k_prev;
        let u_cur = &us[n];
        let u_star = if n == 0 {
            u_cur.clone()
        } else {
            extrapolate(u_cur, &us[n - 1], tau)
        };
        let eps = epss[n + 1];
        let eps_hat = epsilon_hat(eps, epss[n], variant);
        let f_new = forcing(t + k);
        let (u1, _iters) = momentum_solve(
            &u_star, u_cur, &ps[n], &f_new, k, eps, eps_hat, nu, solver,
        )?;
        let accepted = if order == OrderMode::Second && n >= 1 {
            let k_pp = if n >= 2 { ks[n - 2] } else { k_prev };
            let w = StepWindow::new(k, k_prev, k_pp);
            let (a, b, c) = controllers::second_difference_coeffs(&w);
            let d2 = FaceField::lin3(a, &u1, b, u_cur, c, &us[n - 1]);
            FaceField::lin2(1.0, &u1, -0.5 * controllers::alpha1(tau), &d2)
        } else {
            u1.clone()
        };
        let u_press = match pressure_velocity {
            PressureVelocity::Unfiltered => &u1,
            PressureVelocity::Filtered => &accepted,
        };
        let p_new = pressure_update(&ps[n], &divergence(u_press), eps, eps_hat, k);
        us.push(accepted);
        ps.push(p_new);
        fs.push(f_new);
        t += k;
    }
    Ok(Trajectory {
        grid,
        nu,
        order,
        variant,
        pressure_velocity,
        us,
        ps,
        epss: epss.to_vec(),
        ks: ks.to_vec(),
        fs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> MacGrid {
        MacGrid::unit_square(8)
    }

    fn smooth_initial(grid: &MacGrid) -> (FaceField, CellField) {
        let mut u0 = FaceField::from_fn(
            grid,
            |x, y| (std::f64::consts::PI * x).sin().powi(2) * (2.0 * std::f64::consts::PI * y).sin(),
            |x, y| -(2.0 * std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin().powi(2),
        );
        u0.project_noslip();
        let p0 = CellField::from_fn(grid, |x, y| (x - 0.5) * y);
        (u0, p0)
    }

    fn steady_forcing(grid: &MacGrid) -> impl Fn(f64) -> FaceField + '_ {
        move |t: f64| {
            FaceField::from_fn(
                grid,
                move |x, y| (1.0 + 0.3 * t.cos()) * (x * (1.0 - x) * y).sin(),
                move |x, y| 0.5 * ((x + y) * (1.0 + t)).cos(),
            )
        }
    }

    #[test]
    fn epsilon_hat_variants() {
        assert_eq!(epsilon_hat(1e-4, 4e-4, ContinuityVariant::Min), 1e-4);
        let ga = epsilon_hat(1e-4, 4e-4, ContinuityVariant::GeometricAverage);
        assert!((ga - 2e-4).abs() < 1e-19);
        // equal arguments short-circuit exactly
        assert_eq!(epsilon_hat(3e-5, 3e-5, ContinuityVariant::GeometricAverage), 3e-5);
    }

    #[test]
    fn extrapolate_equal_steps_is_two_minus_one() {
        let g = small_grid();
        let (u0, _) = smooth_initial(&g);
        let mut u1 = u0.clone();
        u1.scale(2.0);
        let ex = extrapolate(&u1, &u0, 1.0);
        // (1+1)*2u - 1*u = 3u
        let want = 3.0 * u0.norm();
        assert!((ex.norm() - want).abs() < 1e-12 * want);
    }

    #[test]
    fn pressure_update_satisfies_continuity_to_roundoff() {
        let g = small_grid();
        let (u0, p0) = smooth_initial(&g);
        let d = divergence(&u0);
        let (eps, eps_hat, k) = (2e-4, 1.5e-4, 0.01);
        let p1 = pressure_update(&p0, &d, eps, eps_hat, k);
        let res = continuity_residual(&p1, &p0, &d, eps, eps_hat, k);
        assert!(res <= 1e-13, "continuity residual {}", res);
    }

    #[test]
    fn step_accepts_and_advances() {
        let g = small_grid();
        let (u0, p0) = smooth_initial(&g);
        let cfg = SchemeConfig::new(
            OrderMode::Second,
            ContinuityVariant::GeometricAverage,
            0.1,
            Tolerances::new(1e-2, 1e-0),
        );
        let mut state = FlowState::new(u0, p0, 0.01, 1e-3);
        let f = steady_forcing(&g);
        for i in 0..5 {
            let rep = step(&mut state, &cfg, &f).expect("step");
            assert_eq!(rep.rejections, 0, "step {} rejected unexpectedly", i);
            assert!(rep.continuity_residual <= 1e-12);
            assert!(rep.k_proposed >= 0.5 * rep.k_used && rep.k_proposed <= 2.0 * rep.k_used);
            assert!(rep.eps_proposed >= 0.5 * rep.eps_used - 1e-300);
            assert!(rep.eps_proposed <= 2.0 * rep.eps_used + 1e-300);
        }
        assert_eq!(state.step_index, 5);
        assert!(state.t > 0.0);
    }

    #[test]
    fn tiny_continuity_tolerance_drives_eps_to_lower_bound() {
        let g = small_grid();
        let (u0, p0) = smooth_initial(&g);
        let mut cfg = SchemeConfig::new(
            OrderMode::First,
            ContinuityVariant::Min,
            0.1,
            Tolerances::new(1e-1, 1e-30),
        );
        cfg.eps_bounds = (1e-6, 1e-1);
        cfg.retry_budget = 3;
        let mut state = FlowState::new(u0, p0, 0.005, 1e-3);
        let f = steady_forcing(&g);
        let mut eps_seen = Vec::new();
        for _ in 0..12 {
            match step(&mut state, &cfg, &f) {
                Ok(rep) => eps_seen.push(rep.eps_used),
                Err(StepError::RetryBudgetExhausted { .. }) => {
                    // fine: the bound binds and the tolerance is unreachable
                    break;
                }
                Err(e) => panic!("unexpected error {}", e),
            }
        }
        // every retry halves epsilon until the bound binds
        for pair in eps_seen.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-300);
        }
        if let Some(last) = eps_seen.last() {
            assert!(*last >= 1e-6);
        }
    }

    #[test]
    fn prescribed_run_records_full_trajectory() {
        let g = small_grid();
        let (u0, p0) = smooth_initial(&g);
        let ks = [0.01, 0.012, 0.008, 0.011];
        let epss = [1e-3, 8e-4, 1.1e-3, 9e-4, 1e-3];
        let f = steady_forcing(&g);
        let traj = run_prescribed(
            &u0,
            &p0,
            0.0,
            &ks,
            &epss,
            OrderMode::First,
            ContinuityVariant::Min,
            PressureVelocity::Unfiltered,
            0.05,
            &SolveConfig::default(),
            &f,
        )
        .expect("prescribed run");
        assert_eq!(traj.us.len(), 5);
        assert_eq!(traj.ps.len(), 5);
        assert_eq!(traj.fs.len(), 4);
        // every recorded pressure satisfies its continuity relation
        for n in 0..4 {
            let eps = epss[n + 1];
            let eh = epsilon_hat(eps, epss[n], ContinuityVariant::Min);
            let d = divergence(&traj.us[n + 1]);
            let res = continuity_residual(&traj.ps[n + 1], &traj.ps[n], &d, eps, eh, ks[n]);
            assert!(res <= 1e-12, "step {}: residual {}", n, res);
        }
    }

    #[test]
    fn constant_epsilon_reduces_variants_to_identical_trajectories() {
        let g = small_grid();
        let (u0, p0) = smooth_initial(&g);
        let ks = [0.01; 6];
        let epss = [5e-4; 7];
        let f = steady_forcing(&g);
        let run = |variant| {
            run_prescribed(
                &u0,
                &p0,
                0.0,
                &ks,
                &epss,
                OrderMode::Second,
                variant,
                PressureVelocity::Filtered,
                0.05,
                &SolveConfig::default(),
                &f,
            )
            .expect("run")
        };
        let a = run(ContinuityVariant::GeometricAverage);
        let b = run(ContinuityVariant::Min);
        for n in 0..=6 {
            assert_eq!(
                crate::linsolve::interior_dofs(&a.us[n]),
                crate::linsolve::interior_dofs(&b.us[n]),
                "velocities diverge at step {}",
                n
            );
            assert_eq!(a.ps[n].values(), b.ps[n].values(), "pressures diverge at step {}", n);
        }
    }
}
