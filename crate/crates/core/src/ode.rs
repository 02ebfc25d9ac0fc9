//! Backward Euler with a variable-step time filter, for systems `y' = f(t, y)`.
//!
//! This is the scalar-system testbed for the time discretization used by the
//! flow stepper: the implicit first-order step, the one-legged filter that
//! lifts it to second order, the embedded error estimators EST(1)/EST(2),
//! and the accept/reject step controller. Everything here mirrors the flow
//! integrator's startup and windowing rules, so its convergence and
//! estimator-scaling behavior transfers.

use crate::controllers::{
    self, second_difference, OrderMode, StepWindow,
};
use crate::linsolve::gauss_solve;

#[derive(Debug, thiserror::Error)]
pub enum OdeError {
    #[error("nonlinear solve stalled at t = {t}: residual {residual:.3e} after {iterations} iterations")]
    NewtonStall { t: f64, residual: f64, iterations: usize },
    #[error("singular Jacobian in nonlinear solve at t = {t}")]
    SingularJacobian { t: f64 },
    #[error("step size underflow at t = {t}: k = {k:.3e} below floor {floor:.3e}")]
    StepUnderflow { t: f64, k: f64, floor: f64 },
    #[error("{attempts} consecutive rejections at t = {t}")]
    RetryBudgetExhausted { t: f64, attempts: usize },
}

/// One attempted step, rejected attempts included.
#[derive(Clone, Debug)]
pub struct OdeStepRecord {
    /// Time at the end of the attempted step.
    pub t: f64,
    pub k: f64,
    /// Backward-Euler value.
    pub y_pre: Vec<f64>,
    /// Filtered value; equals `y_pre` when the filter was not applied.
    pub y_post: Vec<f64>,
    pub est1: Option<f64>,
    pub est2: Option<f64>,
    pub accepted: bool,
    /// Order of the value the integrator carried forward.
    pub order: u8,
}

#[derive(Clone, Debug)]
pub struct OdeRun {
    pub records: Vec<OdeStepRecord>,
    pub t_final: f64,
    pub y_final: Vec<f64>,
    pub accepted_steps: usize,
    pub rejections: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const NEWTON_MAX: usize = 25;

/// Backward-Euler step: solve `y1 = y + k f(t + k, y1)` by Newton iteration
/// with a forward-difference Jacobian, to residual norm `nonlinear_tol`.
pub fn be_step<F: Fn(f64, &[f64]) -> Vec<f64>>(
    f: &F,
    t: f64,
    y: &[f64],
    k: f64,
    nonlinear_tol: f64,
) -> Result<Vec<f64>, OdeError> {
    assert!(k > 0.0, "step must be positive");
    assert!(nonlinear_tol > 0.0, "nonlinear tolerance must be positive");
    let m = y.len();
    let t_new = t + k;
    let mut z = y.to_vec();
    let residual = |z: &[f64]| -> Vec<f64> {
        let fz = f(t_new, z);
        (0..m).map(|i| z[i] - y[i] - k * fz[i]).collect()
    };
    let mut g = residual(&z);
    let mut gn = norm(&g);
    for _ in 0..NEWTON_MAX {
        if gn <= nonlinear_tol {
            return Ok(z);
        }
        // J = I - k df/dy by forward differences
        let fz = f(t_new, &z);
        let mut jac = vec![vec![0.0f64; m]; m];
        for col in 0..m {
            let h = 1.4901161193847656e-8 * (1.0 + z[col].abs());
            let mut zp = z.clone();
            zp[col] += h;
            let fp = f(t_new, &zp);
            for row in 0..m {
                let dfdy = (fp[row] - fz[row]) / h;
                jac[row][col] = if row == col { 1.0 - k * dfdy } else { -k * dfdy };
            }
        }
        let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let dz = gauss_solve(&mut jac, &mut rhs)
            .ok_or(OdeError::SingularJacobian { t: t_new })?;
        for i in 0..m {
            z[i] += dz[i];
        }
        g = residual(&z);
        gn = norm(&g);
    }
    if gn <= nonlinear_tol {
        Ok(z)
    } else {
        Err(OdeError::NewtonStall { t: t_new, residual: gn, iterations: NEWTON_MAX })
    }
}

/// Apply the second-order filter: returns `(y1 - (alpha1/2) D2, D2)`.
pub fn filter_step(
    y1: &[f64],
    y_cur: &[f64],
    y_prev: &[f64],
    w: &StepWindow,
) -> (Vec<f64>, Vec<f64>) {
    let d2 = second_difference(y1, y_cur, y_prev, w);
    let c = 0.5 * controllers::alpha1(w.tau_next());
    let filtered = y1.iter().zip(&d2).map(|(v, d)| v - c * d).collect();
    (filtered, d2)
}

const DEFAULT_NEWTON_TOL: f64 = 1e-12;

/// Constant-step integration to `t_end` (the last step is shortened to land
/// exactly). `mode` is [`OrderMode::First`] for plain backward Euler or
/// [`OrderMode::Second`] for the filtered method; estimators are recorded in
/// both modes once enough history exists.
pub fn run_fixed<F: Fn(f64, &[f64]) -> Vec<f64>>(
    f: &F,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    k: f64,
    mode: OrderMode,
) -> Result<OdeRun, OdeError> {
    assert!(mode != OrderMode::Variable, "fixed-step runs are first or second order");
    assert!(k > 0.0 && t_end > t0, "need positive step and forward time span");
    let mut records = Vec::new();
    let mut t = t0;
    let mut y_cur = y0.to_vec();
    let mut y_prev: Option<Vec<f64>> = None;
    let mut d2_prev: Option<Vec<f64>> = None;
    let mut window = StepWindow::uniform(k);
    // sub-dust remainders are roundoff from accumulating t, not real steps
    while t_end - t > 1e-10 * k {
        let k_step = k.min(t_end - t);
        window.k_next = k_step;
        let y1 = be_step(f, t, &y_cur, k_step, DEFAULT_NEWTON_TOL)?;
        let (y_post, est1v, est2v, d2, order) = match &y_prev {
            None => (y1.clone(), None, None, None, 1u8),
            Some(yp) => {
                let (filtered, d2) = filter_step(&y1, &y_cur, yp, &window);
                let e1 = controllers::est1(&d2, &window, norm);
                let e2 = d2_prev
                    .as_ref()
                    .map(|old| controllers::est2(&d2, old, &window, norm));
                let order = if mode == OrderMode::Second { 2 } else { 1 };
                (filtered, Some(e1), e2, Some(d2), order)
            }
        };
        let accepted_value = if order == 2 { y_post.clone() } else { y1.clone() };
        records.push(OdeStepRecord {
            t: t + k_step,
            k: k_step,
            y_pre: y1,
            y_post,
            est1: est1v,
            est2: est2v,
            accepted: true,
            order,
        });
        t += k_step;
        y_prev = Some(std::mem::replace(&mut y_cur, accepted_value));
        if let Some(d2) = d2 {
            d2_prev = Some(d2);
        }
        window = window.advance(k_step, k);
    }
    Ok(OdeRun {
        t_final: t,
        y_final: y_cur,
        accepted_steps: records.iter().filter(|r| r.accepted).count(),
        rejections: 0,
        records,
    })
}

const RETRY_BUDGET: usize = 10;

/// Adaptive integration to `t_end` with tolerance `tol` on the momentum
/// estimator of the governing order.
///
/// Step 0 is plain backward Euler accepted as-is; EST(1) governs from step 1
/// and EST(2) joins at step 2. Variable order accepts whichever value
/// proposes the larger next step, preferring the filtered one on ties.
pub fn run_adaptive<F: Fn(f64, &[f64]) -> Vec<f64>>(
    f: &F,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    k0: f64,
    tol: f64,
    mode: OrderMode,
) -> Result<OdeRun, OdeError> {
    assert!(k0 > 0.0 && tol > 0.0 && t_end > t0, "need positive k0, tol, span");
    let floor = 1e-12 * (t_end - t0);
    let mut records = Vec::new();
    let mut t = t0;
    let mut y_cur = y0.to_vec();
    let mut y_prev: Vec<f64>;
    let mut d2_prev: Option<Vec<f64>> = None;
    let mut window = StepWindow::uniform(k0);
    let mut rejections_total = 0usize;

    // startup step, accepted unconditionally
    {
        let k = k0.min(t_end - t0);
        if k < floor {
            return Err(OdeError::StepUnderflow { t, k, floor });
        }
        let y1 = be_step(f, t, &y_cur, k, DEFAULT_NEWTON_TOL)?;
        records.push(OdeStepRecord {
            t: t + k,
            k,
            y_pre: y1.clone(),
            y_post: y1.clone(),
            est1: None,
            est2: None,
            accepted: true,
            order: 1,
        });
        t += k;
        y_prev = std::mem::replace(&mut y_cur, y1);
        window = window.advance(k, k0);
    }

    while t_end - t > floor {
        let mut attempts = 0usize;
        loop {
            let k = window.k_next.min(t_end - t);
            if k < floor {
                return Err(OdeError::StepUnderflow { t, k, floor });
            }
            window.k_next = k;
            let y1 = be_step(f, t, &y_cur, k, DEFAULT_NEWTON_TOL)?;
            let (filtered, d2) = filter_step(&y1, &y_cur, &y_prev, &window);
            let e1 = controllers::est1(&d2, &window, norm);
            let e2 = d2_prev
                .as_ref()
                .map(|old| controllers::est2(&d2, old, &window, norm));
            let governing = match mode {
                OrderMode::First => e1,
                OrderMode::Second => e2.unwrap_or(e1),
                OrderMode::Variable => e2.map_or(e1, |v| v.min(e1)),
            };
            if governing <= tol {
                // accepted: pick value and next step per mode
                let (value, order, k_prop) = match mode {
                    OrderMode::First => {
                        (y1.clone(), 1u8, controllers::propose_step(k, e1, tol, 1))
                    }
                    OrderMode::Second => match e2 {
                        Some(e2v) => {
                            (filtered.clone(), 2, controllers::propose_step(k, e2v, tol, 2))
                        }
                        // startup: only EST(1) exists yet
                        None => (filtered.clone(), 2, controllers::propose_step(k, e1, tol, 1)),
                    },
                    OrderMode::Variable => match e2 {
                        Some(e2v) => {
                            let k_be = controllers::propose_step(k, e1, tol, 1);
                            let k_f = controllers::propose_step(k, e2v, tol, 2);
                            if k_be > k_f {
                                (y1.clone(), 1, k_be)
                            } else {
                                (filtered.clone(), 2, k_f)
                            }
                        }
                        None => (filtered.clone(), 2, controllers::propose_step(k, e1, tol, 1)),
                    },
                };
                records.push(OdeStepRecord {
                    t: t + k,
                    k,
                    y_pre: y1,
                    y_post: filtered,
                    est1: Some(e1),
                    est2: e2,
                    accepted: true,
                    order,
                });
                t += k;
                y_prev = std::mem::replace(&mut y_cur, value);
                d2_prev = Some(d2);
                window = window.advance(k, k_prop);
                break;
            }
            // rejected
            attempts += 1;
            rejections_total += 1;
            records.push(OdeStepRecord {
                t: t + k,
                k,
                y_pre: y1,
                y_post: filtered,
                est1: Some(e1),
                est2: e2,
                accepted: false,
                order: 0,
            });
            if attempts > RETRY_BUDGET {
                return Err(OdeError::RetryBudgetExhausted { t, attempts });
            }
            let k_retry = match mode {
                OrderMode::First => controllers::reject_step_k(k, e1, tol, 1),
                OrderMode::Second => match e2 {
                    Some(e2v) => controllers::reject_step_k(k, e2v, tol, 2),
                    None => controllers::reject_step_k(k, e1, tol, 1),
                },
                OrderMode::Variable => {
                    let r1 = controllers::reject_step_k(k, e1, tol, 1);
                    match e2 {
                        Some(e2v) => r1.max(controllers::reject_step_k(k, e2v, tol, 2)),
                        None => r1,
                    }
                }
            };
            window.k_next = k_retry;
        }
    }

    Ok(OdeRun {
        t_final: t,
        y_final: y_cur,
        accepted_steps: records.iter().filter(|r| r.accepted).count(),
        rejections: rejections_total,
        records,
    })
}
