//! Step-size and compression-parameter controllers.
//!
//! The time step k and the compression parameter epsilon are adapted
//! independently: k answers to the local momentum error estimators EST(1)
//! and EST(2) built from variable-step second differences, epsilon answers
//! to the continuity residual norm(div u). All proposals are safety-factored
//! and clamped to the [0.5, 2.0] ratio band; a rejected step may shrink both
//! but never grow either.

/// Step-size window around the step being taken: `k_next` is the candidate
/// step k_{n+1}, `k_cur` the last accepted step k_n, `k_prev` the one before.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepWindow {
    pub k_next: f64,
    pub k_cur: f64,
    pub k_prev: f64,
}

impl StepWindow {
    pub fn new(k_next: f64, k_cur: f64, k_prev: f64) -> Self {
        assert!(
            k_next > 0.0 && k_cur > 0.0 && k_prev > 0.0,
            "step sizes must be positive"
        );
        StepWindow { k_next, k_cur, k_prev }
    }

    /// Equal-step window, the startup configuration.
    pub fn uniform(k: f64) -> Self {
        StepWindow::new(k, k, k)
    }

    /// Step ratio tau_{n+1} = k_{n+1} / k_n.
    pub fn tau_next(&self) -> f64 {
        self.k_next / self.k_cur
    }

    /// Step ratio tau_n = k_n / k_{n-1}.
    pub fn tau_cur(&self) -> f64 {
        self.k_cur / self.k_prev
    }

    /// Slide the window after an accepted step of size `k_used`, making
    /// `k_new` the next candidate.
    pub fn advance(&self, k_used: f64, k_new: f64) -> StepWindow {
        StepWindow::new(k_new, k_used, self.k_cur)
    }
}

/// Accuracy targets: `momentum` bounds EST(1)/EST(2), `continuity` bounds
/// the divergence norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    pub momentum: f64,
    pub continuity: f64,
}

impl Tolerances {
    pub fn new(momentum: f64, continuity: f64) -> Self {
        assert!(momentum > 0.0 && continuity > 0.0, "tolerances must be positive");
        Tolerances { momentum, continuity }
    }
}

/// Estimator values gathered on one attempted step. `est2` is absent until
/// two second differences exist.
#[derive(Clone, Copy, Debug)]
pub struct EstimatorBundle {
    pub est1: Option<f64>,
    pub est2: Option<f64>,
    pub est_c: f64,
}

/// Which approximation the integrator accepts each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderMode {
    /// Accept the backward-Euler value, adapt on EST(1).
    First,
    /// Accept the filtered value, adapt on EST(2).
    Second,
    /// Accept whichever order proposes the larger next step (tie: second).
    Variable,
}

/// Filter weight alpha_1(tau) = tau (1 + tau) / (1 + 2 tau).
///
/// Equals 2/3 at equal steps, where the filter multiplier alpha_1/2 is 1/3.
pub fn alpha1(tau: f64) -> f64 {
    assert!(tau > 0.0 && tau.is_finite(), "step ratio must be positive");
    tau * (1.0 + tau) / (1.0 + 2.0 * tau)
}

/// Second-estimator weight alpha_2(tau_n, tau_{n+1}).
pub fn alpha2(tau_cur: f64, tau_next: f64) -> f64 {
    assert!(tau_cur > 0.0 && tau_next > 0.0, "step ratios must be positive");
    let num = tau_cur
        * (tau_next * tau_cur + tau_cur + 1.0)
        * (4.0 * tau_next.powi(3) + 5.0 * tau_next.powi(2) + tau_next);
    let den = 3.0
        * (tau_cur * tau_next.powi(2) + 4.0 * tau_cur * tau_next + 2.0 * tau_next + tau_cur + 1.0);
    num / den
}

/// Variable-step second difference
/// `(2 k_cur / (k_cur + k_next)) v_new - 2 v_cur + (2 k_next / (k_cur + k_next)) v_prev`.
///
/// Annihilates linear-in-time data; on samples of t^2 it returns
/// `2 k_cur k_next` in every component.
pub fn second_difference(v_new: &[f64], v_cur: &[f64], v_prev: &[f64], w: &StepWindow) -> Vec<f64> {
    assert_eq!(v_new.len(), v_cur.len(), "state dimensions differ");
    assert_eq!(v_new.len(), v_prev.len(), "state dimensions differ");
    let (a, b, c) = second_difference_coeffs(w);
    v_new
        .iter()
        .zip(v_cur)
        .zip(v_prev)
        .map(|((n, cu), p)| a * n + b * cu + c * p)
        .collect()
}

/// Coefficients `(a, b, c)` of the second difference `a v_new + b v_cur + c v_prev`.
pub fn second_difference_coeffs(w: &StepWindow) -> (f64, f64, f64) {
    let s = w.k_cur + w.k_next;
    (2.0 * w.k_cur / s, -2.0, 2.0 * w.k_next / s)
}

/// First-order local error estimator EST(1) = (alpha_1/2) norm(D2).
pub fn est1(d2: &[f64], w: &StepWindow, norm: impl Fn(&[f64]) -> f64) -> f64 {
    est1_from_norm(norm(d2), w)
}

/// EST(1) from a precomputed second-difference norm.
pub fn est1_from_norm(d2_norm: f64, w: &StepWindow) -> f64 {
    0.5 * alpha1(w.tau_next()) * d2_norm
}

/// Weight `3 k_prev / (k_next + k_cur + k_prev)` applied to both second
/// differences inside EST(2).
pub fn est2_weight(w: &StepWindow) -> f64 {
    3.0 * w.k_prev / (w.k_next + w.k_cur + w.k_prev)
}

/// Second-order local error estimator
/// EST(2) = (alpha_2/6) norm(c D2_new - c D2_old) with c = [`est2_weight`].
pub fn est2(d2_new: &[f64], d2_old: &[f64], w: &StepWindow, norm: impl Fn(&[f64]) -> f64) -> f64 {
    assert_eq!(d2_new.len(), d2_old.len(), "state dimensions differ");
    let c = est2_weight(w);
    let diff: Vec<f64> = d2_new
        .iter()
        .zip(d2_old)
        .map(|(n, o)| c * n - c * o)
        .collect();
    est2_from_norm(norm(&diff), w)
}

/// EST(2) from the precomputed norm of the weighted difference of second
/// differences.
pub fn est2_from_norm(weighted_diff_norm: f64, w: &StepWindow) -> f64 {
    alpha2(w.tau_cur(), w.tau_next()) / 6.0 * weighted_diff_norm
}

/// Next-step proposal after an accepted step:
/// `k_new = clamp(0.9 k (tol/est)^(1/(order+1)), 0.5 k, 2 k)`.
///
/// A vanishing estimator saturates the upper clamp.
pub fn propose_step(k: f64, est: f64, tol: f64, order: u8) -> f64 {
    assert!(k > 0.0 && tol > 0.0, "step and tolerance must be positive");
    assert!(est >= 0.0, "estimator must be nonnegative");
    assert!(order == 1 || order == 2, "order must be 1 or 2");
    let expo = 1.0 / (order as f64 + 1.0);
    let raw = 0.9 * k * (tol / est).powf(expo);
    raw.min(2.0 * k).max(0.5 * k)
}

/// Next-epsilon proposal after an accepted step:
/// `eps_new = clamp(0.9 eps (tol_c/est_c), 0.5 eps, 2 eps)`.
pub fn propose_epsilon(eps: f64, est_c: f64, tol_c: f64) -> f64 {
    assert!(eps > 0.0 && tol_c > 0.0, "epsilon and tolerance must be positive");
    assert!(est_c >= 0.0, "estimator must be nonnegative");
    let raw = 0.9 * eps * (tol_c / est_c);
    raw.min(2.0 * eps).max(0.5 * eps)
}

/// Retry step size after a rejection. Shrinks only when the momentum
/// estimator actually failed; never exceeds the rejected `k`.
pub fn reject_step_k(k: f64, est: f64, tol: f64, order: u8) -> f64 {
    assert!(k > 0.0 && tol > 0.0, "step and tolerance must be positive");
    assert!(order == 1 || order == 2, "order must be 1 or 2");
    if est <= tol {
        return k;
    }
    let expo = 1.0 / (order as f64 + 1.0);
    let raw = 0.9 * k * (tol / est).powf(expo);
    raw.min(k).max(0.5 * k)
}

/// Retry epsilon after a rejection. Shrinks only when the continuity
/// estimator actually failed; never below half the rejected value.
pub fn reject_epsilon(eps: f64, est_c: f64, tol_c: f64) -> f64 {
    assert!(eps > 0.0 && tol_c > 0.0, "epsilon and tolerance must be positive");
    if est_c <= tol_c {
        return eps;
    }
    (0.9 * eps * (tol_c / est_c)).max(0.5 * eps)
}

/// Combined rejection update for one attempted step.
pub fn reject_step(
    k: f64,
    est: f64,
    eps: f64,
    est_c: f64,
    tol: &Tolerances,
    order: u8,
) -> (f64, f64) {
    (
        reject_step_k(k, est, tol.momentum, order),
        reject_epsilon(eps, est_c, tol.continuity),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l2(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn alpha1_hand_values() {
        assert!((alpha1(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((alpha1(2.0) - 6.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn alpha2_hand_values() {
        // equal steps: 1*(1+1+1)*(4+5+1) / (3*(1+4+2+1+1)) = 30/27
        assert!((alpha2(1.0, 1.0) - 10.0 / 9.0).abs() < 1e-15);
        // doubling step: 1*(2+1+1)*(32+20+2) / (3*(4+8+4+1+1)) = 216/54
        assert!((alpha2(1.0, 2.0) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn second_difference_annihilates_linears() {
        let w = StepWindow::new(0.3, 0.2, 0.5);
        // samples of y = 2 + 5t at t-0.2, t, t+0.3
        let t = 1.7;
        let d2 = second_difference(
            &[2.0 + 5.0 * (t + 0.3)],
            &[2.0 + 5.0 * t],
            &[2.0 + 5.0 * (t - 0.2)],
            &w,
        );
        assert!(d2[0].abs() < 1e-13);
    }

    #[test]
    fn second_difference_of_quadratic_is_2_kcur_knext() {
        for (kn, kc) in [(0.1, 0.1), (0.05, 0.2), (0.013, 0.007)] {
            let w = StepWindow::new(kn, kc, 0.3);
            let t = 0.9;
            let sq = |s: f64| s * s;
            let d2 = second_difference(&[sq(t + kn)], &[sq(t)], &[sq(t - kc)], &w);
            let expect = 2.0 * kc * kn;
            assert!(
                (d2[0] - expect).abs() < 1e-12,
                "kn={} kc={} got {} want {}",
                kn,
                kc,
                d2[0],
                expect
            );
        }
    }

    #[test]
    fn est1_equal_steps_is_third_of_d2_norm() {
        let w = StepWindow::uniform(0.05);
        let d2 = [3.0, -4.0]; // norm 5
        let e = est1(&d2, &w, l2);
        assert!((e - 5.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn est2_equal_steps_weight_is_ten_over_54() {
        let w = StepWindow::uniform(0.05);
        let d2n = [3.0, -4.0];
        let d2o = [0.0, 1.0];
        // weight c = 3k/3k = 1, diff = (3,-5), norm = sqrt(34)
        let e = est2(&d2n, &d2o, &w, l2);
        assert!((e - 10.0 / 54.0 * 34.0f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn propose_step_hand_values() {
        let tol = 1e-4;
        assert!((propose_step(0.1, tol, tol, 1) - 0.09).abs() < 1e-15);
        // est = 4 tol, order 1: raw 0.045 hits the lower clamp 0.05
        assert!((propose_step(0.1, 4.0 * tol, tol, 1) - 0.05).abs() < 1e-15);
        // est = tol/1000, order 2: raw 0.9 hits the upper clamp 0.2
        assert!((propose_step(0.1, tol / 1000.0, tol, 2) - 0.2).abs() < 1e-15);
        // vanishing estimator saturates the upper clamp
        assert!((propose_step(0.1, 0.0, tol, 1) - 0.2).abs() < 1e-15);
        assert!((propose_step(0.1, 0.0, tol, 2) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn propose_epsilon_hand_values() {
        let tol_c = 1e-5;
        // est_c = 2 tol_c: raw 4.5e-4 clamps up to 5e-4
        assert!((propose_epsilon(1e-3, 2.0 * tol_c, tol_c) - 5e-4).abs() < 1e-18);
        // est_c = tol_c/100: raw 9e-2 clamps down to 2e-3
        assert!((propose_epsilon(1e-3, tol_c / 100.0, tol_c) - 2e-3).abs() < 1e-18);
        // est_c = 0.9 tol_c: exactly 1e-3, no clamp
        assert!((propose_epsilon(1e-3, 0.9 * tol_c, tol_c) - 1e-3).abs() < 1e-18);
        assert!((propose_epsilon(1e-3, 0.0, tol_c) - 2e-3).abs() < 1e-18);
    }

    #[test]
    fn reject_hand_values() {
        let tol = 1e-4;
        // est = 16 tol, order 1: raw 0.225 k, floor at 0.5 k
        assert!((reject_step_k(0.1, 16.0 * tol, tol, 1) - 0.05).abs() < 1e-15);
        // est = 1.1 tol: 0.9/sqrt(1.1) k
        let want = 0.9 / 1.1f64.sqrt() * 0.1;
        assert!((reject_step_k(0.1, 1.1 * tol, tol, 1) - want).abs() < 1e-15);
        // momentum fine: k untouched even if called
        assert_eq!(reject_step_k(0.1, 0.5 * tol, tol, 1), 0.1);
        // continuity fine: eps untouched
        assert_eq!(reject_epsilon(1e-3, 0.5e-5, 1e-5), 1e-3);
        // continuity violated by 4x: 0.225 eps floors at 0.5 eps
        assert!((reject_epsilon(1e-3, 4e-5, 1e-5) - 5e-4).abs() < 1e-18);
    }

    #[test]
    fn window_advance_slides_history() {
        let w = StepWindow::new(0.2, 0.1, 0.05);
        let w2 = w.advance(0.2, 0.4);
        assert_eq!(w2, StepWindow::new(0.4, 0.2, 0.1));
        assert!((w2.tau_cur() - 2.0).abs() < 1e-15);
        assert!((w2.tau_next() - 2.0).abs() < 1e-15);
    }

    mod clamp_properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn proposals_stay_in_band(
                k in 1e-8f64..1e2,
                est in 0.0f64..1e3,
                tol in 1e-12f64..1e0,
                order in 1u8..3,
            ) {
                let k_new = propose_step(k, est, tol, order);
                prop_assert!(k_new >= 0.5 * k - 1e-300);
                prop_assert!(k_new <= 2.0 * k + 1e-300);
            }

            #[test]
            fn epsilon_proposals_stay_in_band(
                eps in 1e-10f64..1e0,
                est_c in 0.0f64..1e3,
                tol_c in 1e-14f64..1e0,
            ) {
                let e = propose_epsilon(eps, est_c, tol_c);
                prop_assert!(e >= 0.5 * eps - 1e-300);
                prop_assert!(e <= 2.0 * eps + 1e-300);
            }

            #[test]
            fn proposal_monotone_nonincreasing_in_estimator(
                k in 1e-6f64..1e1,
                tol in 1e-10f64..1e-1,
                a in 1e-12f64..1e2,
                bump in 1.0f64..1e3,
                order in 1u8..3,
            ) {
                let lo = propose_step(k, a, tol, order);
                let hi = propose_step(k, a * bump, tol, order);
                prop_assert!(hi <= lo + 1e-15 * k);
            }

            #[test]
            fn rejection_never_grows(
                k in 1e-6f64..1e1,
                eps in 1e-8f64..1e-1,
                est in 0.0f64..1e3,
                est_c in 0.0f64..1e3,
                tol_m in 1e-10f64..1e-1,
                tol_c in 1e-10f64..1e-1,
                order in 1u8..3,
            ) {
                let t = Tolerances::new(tol_m, tol_c);
                let (k2, e2) = reject_step(k, est, eps, est_c, &t, order);
                prop_assert!(k2 <= k);
                prop_assert!(k2 >= 0.5 * k - 1e-300);
                prop_assert!(e2 <= eps);
                prop_assert!(e2 >= 0.5 * eps - 1e-300);
            }
        }
    }
}
