//! Golden-section oracle for the one-dimensional prox problems.
//!
//! Minimizes `h(c) = γ'·l(c; y) + ½(c − a)²` without using any closed form
//! or Newton step. Candidates are compared through `h(c₁) − h(c₂)` evaluated
//! in a cancellation-free form, so the bracket keeps shrinking well below
//! the `√ε` limit of comparing raw function values.

use crate::error::{invalid, Result};
use crate::losses::LossKind;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section minimizer of the scalar prox objective, run until the
/// bracket width is at most `tol`.
pub fn brute_force_prox_1d(loss: LossKind, a: f64, y: f64, gamma_p: f64, tol: f64) -> Result<f64> {
    let (lo, hi) = bracket(loss, a, y, gamma_p)?;
    brute_force_prox_1d_in(loss, a, y, gamma_p, tol, lo, hi)
}

/// As [`brute_force_prox_1d`] on a caller-supplied bracket.
pub fn brute_force_prox_1d_in(
    loss: LossKind,
    a: f64,
    y: f64,
    gamma_p: f64,
    tol: f64,
    mut lo: f64,
    mut hi: f64,
) -> Result<f64> {
    if !(tol > 0.0) || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return invalid(format!("bad bracket [{lo}, {hi}] or tolerance {tol}"));
    }
    let diff = |c1: f64, c2: f64| objective_difference(loss, a, y, gamma_p, c1, c2);
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    while hi - lo > tol {
        let width = hi - lo;
        if diff(c, d) <= 0.0 {
            hi = d;
            d = c;
            c = hi - INV_PHI * (hi - lo);
        } else {
            lo = c;
            c = d;
            d = lo + INV_PHI * (hi - lo);
        }
        if hi - lo >= width {
            // interval stopped shrinking at floating-point resolution
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Interval guaranteed to contain the minimizer, from a bound on the loss
/// subgradient: `c* = a − γ'·l'(c*)` with `|l'| ≤ 1` for hinge and logistic,
/// and `c*` between `a` and `y` for the squared loss.
fn bracket(loss: LossKind, a: f64, y: f64, gamma_p: f64) -> Result<(f64, f64)> {
    if !(gamma_p > 0.0) || !a.is_finite() || !y.is_finite() || !gamma_p.is_finite() {
        return invalid(format!("cannot bracket a = {a}, y = {y}, γ' = {gamma_p}"));
    }
    let (lo, hi) = match loss {
        LossKind::Hinge | LossKind::Logistic => (a - gamma_p, a + gamma_p),
        LossKind::Squared => (a.min(y), a.max(y)),
    };
    let pad = 1e-3 * (1.0 + (hi - lo));
    Ok((lo - pad, hi + pad))
}

/// `h(c₁) − h(c₂)` for `h(c) = γ'·l(c; y) + ½(c − a)²`.
pub fn objective_difference(loss: LossKind, a: f64, y: f64, gamma_p: f64, c1: f64, c2: f64) -> f64 {
    let quad = 0.5 * (c1 - c2) * ((c1 - a) + (c2 - a));
    gamma_p * loss_difference(loss, y, c1, c2) + quad
}

fn loss_difference(loss: LossKind, y: f64, c1: f64, c2: f64) -> f64 {
    match loss {
        LossKind::Squared => 0.5 * (c1 - c2) * ((c1 - y) + (c2 - y)),
        LossKind::Hinge => {
            let (m1, m2) = (1.0 - y * c1, 1.0 - y * c2);
            match (m1 > 0.0, m2 > 0.0) {
                (true, true) => -y * (c1 - c2),
                (false, false) => 0.0,
                (true, false) => m1,
                (false, true) => -m2,
            }
        }
        LossKind::Logistic => {
            // log(1 + e^{u1}) − log(1 + e^{u2}) with u = −y·c
            let (u1, u2) = (-y * c1, -y * c2);
            let du = u1 - u2;
            if u2 > 0.0 {
                (du.exp_m1() / (1.0 + (-u2).exp())).ln_1p()
            } else {
                let e2 = u2.exp();
                (e2 * du.exp_m1() / (1.0 + e2)).ln_1p()
            }
        }
    }
}
