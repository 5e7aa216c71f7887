//! Losses of linear models and their proximal operators.
//!
//! Every loss here depends on the iterate only through the inner product
//! `a = <x, X>`, so its proximal operator reduces to a one-dimensional
//! problem: with `γ' = γ‖X‖²`, find `c` minimizing `γ'·l(c; y) + ½(c − a)²`,
//! then move `x` along `X` by `(c − a)/‖X‖²`. The routines `prox_*` solve the
//! scalar problem; [`prox_term`] lifts it back to the full space and folds in
//! the L2 regularizer.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::ProblemSpec;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Hinge,
    Logistic,
    Squared,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Hinge, LossKind::Logistic, LossKind::Squared];

    pub fn is_smooth(self) -> bool {
        !matches!(self, LossKind::Hinge)
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, LossKind::Squared)
    }

    /// Upper bound on the second derivative of the scalar loss, `None` for
    /// the non-smooth hinge.
    pub fn curvature_bound(self) -> Option<f64> {
        match self {
            LossKind::Hinge => None,
            LossKind::Logistic => Some(0.25),
            LossKind::Squared => Some(1.0),
        }
    }

    pub fn value(self, a: f64, y: f64) -> f64 {
        match self {
            LossKind::Hinge => (1.0 - y * a).max(0.0),
            LossKind::Logistic => softplus(-y * a),
            LossKind::Squared => 0.5 * (a - y) * (a - y),
        }
    }

    /// Scalar derivative `κ` so that `κ·X` is a subgradient of the loss at a
    /// point with `<x, X> = a`. The hinge kink (`y·a = 1`) returns 0.
    pub fn derivative(self, a: f64, y: f64) -> f64 {
        match self {
            LossKind::Hinge => {
                if y * a < 1.0 {
                    -y
                } else {
                    0.0
                }
            }
            LossKind::Logistic => -y * logistic_weight(y * a),
            LossKind::Squared => a - y,
        }
    }

    pub fn prox(self, a: f64, y: f64, gamma_p: f64) -> Result<ProxResult> {
        match self {
            LossKind::Hinge => prox_hinge(a, y, gamma_p),
            LossKind::Logistic => prox_logistic(a, y, gamma_p, NewtonOptions::default()),
            LossKind::Squared => prox_squared(a, y, gamma_p),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::Hinge => "hinge",
            LossKind::Logistic => "logistic",
            LossKind::Squared => "squared",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hinge" => Ok(LossKind::Hinge),
            "logistic" => Ok(LossKind::Logistic),
            "squared" | "square" => Ok(LossKind::Squared),
            other => invalid(format!("unknown loss kind `{other}`")),
        }
    }
}

pub fn loss_value(kind: LossKind, a: f64, y: f64) -> f64 {
    kind.value(a, y)
}

pub fn loss_subgradient(kind: LossKind, a: f64, y: f64) -> f64 {
    kind.derivative(a, y)
}

/// `log(1 + e^t)` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + e^t)`, evaluated without overflow.
pub(crate) fn logistic_weight(t: f64) -> f64 {
    if t >= 0.0 {
        let e = (-t).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + t.exp())
    }
}

/// Solution of the scalar prox problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxResult {
    /// Optimal inner product `<x⁺, X>`.
    pub c: f64,
    /// Loss derivative at `c`, i.e. `(a − c)/γ'`.
    pub nu: f64,
    /// Newton iterations (0 for closed forms).
    pub iterations: u32,
}

fn check_gamma(gamma_p: f64) -> Result<()> {
    if gamma_p > 0.0 && gamma_p.is_finite() {
        Ok(())
    } else {
        invalid(format!(
            "scaled step γ' must be positive and finite, got {gamma_p}"
        ))
    }
}

pub fn prox_hinge(a: f64, y: f64, gamma_p: f64) -> Result<ProxResult> {
    check_gamma(gamma_p)?;
    let s = (1.0 - y * a) / gamma_p;
    // full-space prox is z − γ·y·ν·X
    let nu = if s >= 1.0 {
        -1.0
    } else if s <= 0.0 {
        0.0
    } else {
        -s
    };
    Ok(ProxResult {
        c: a - gamma_p * y * nu,
        nu: y * nu,
        iterations: 0,
    })
}

pub fn prox_squared(a: f64, y: f64, gamma_p: f64) -> Result<ProxResult> {
    check_gamma(gamma_p)?;
    let c = (a + gamma_p * y) / (1.0 + gamma_p);
    Ok(ProxResult {
        c,
        nu: c - y,
        iterations: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop once `|φ(c)| ≤ tol`.
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 40,
        }
    }
}

/// Scalar logistic prox by safeguarded Newton iteration.
///
/// Solves `φ(c) = γ'·s(c) + c − a = 0` with `s(c) = −y/(1 + e^{y c})`.
/// The root lies between `a` and `a + γ'y` because `s` takes values strictly
/// between `0` and `−y`; that interval is the initial bracket. Iteration
/// starts at `c = 0` (or the bracket midpoint if 0 is outside the bracket);
/// a Newton step that leaves the current bracket is replaced by bisection.
pub fn prox_logistic(a: f64, y: f64, gamma_p: f64, opts: NewtonOptions) -> Result<ProxResult> {
    Ok(prox_logistic_traced(a, y, gamma_p, opts)?.0)
}

/// As [`prox_logistic`], also returning the number of bisection fallbacks.
pub fn prox_logistic_traced(
    a: f64,
    y: f64,
    gamma_p: f64,
    opts: NewtonOptions,
) -> Result<(ProxResult, u32)> {
    check_gamma(gamma_p)?;
    let (mut lo, mut hi) = if y > 0.0 {
        (a, a + gamma_p * y)
    } else {
        (a + gamma_p * y, a)
    };
    let mut c = if lo <= 0.0 && 0.0 <= hi {
        0.0
    } else {
        0.5 * (lo + hi)
    };
    let mut bisections = 0;
    for iteration in 0..=opts.max_iter {
        let p = logistic_weight(y * c);
        let s = -y * p;
        let phi = gamma_p * s + c - a;
        if phi.abs() <= opts.tol {
            // one free polishing step; kept only if it stays in the bracket
            let polished = c - phi / (1.0 + gamma_p * p * (1.0 - p));
            let c = if polished >= lo && polished <= hi {
                polished
            } else {
                c
            };
            return Ok((
                ProxResult {
                    c,
                    nu: -y * logistic_weight(y * c),
                    iterations: iteration,
                },
                bisections,
            ));
        }
        if iteration == opts.max_iter {
            break;
        }
        if phi < 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        // φ'(c) = 1 − γ'·y·s − γ'·s², i.e. 1 + γ'·p(1 − p)
        let dphi = 1.0 + gamma_p * p * (1.0 - p);
        let newton = c - phi / dphi;
        c = if newton >= lo && newton <= hi {
            newton
        } else {
            bisections += 1;
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * c.abs().max(1.0) {
            // bracket exhausted at machine precision
            let p = logistic_weight(y * c);
            return Ok((
                ProxResult {
                    c,
                    nu: -y * p,
                    iterations: iteration + 1,
                },
                bisections,
            ));
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        lo,
        hi,
    })
}

/// Prox of `γ·F_j` at `z`, where `F_j(x) = l(<x, X_j>; y_j) + (μ/2)‖x‖²`.
///
/// Uses `prox_{γF}(z) = prox_{ργ·l}(ρz)` with `ρ = 1/(1 + μγ)`.
pub fn prox_term(spec: &ProblemSpec, j: usize, z: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; z.len()];
    prox_term_into(spec, j, z, gamma, &mut out)?;
    Ok(out)
}

/// As [`prox_term`], writing into `out` and returning the scalar solution
/// (`nu` is the loss derivative at the result).
pub fn prox_term_into(
    spec: &ProblemSpec,
    j: usize,
    z: &[f64],
    gamma: f64,
    out: &mut [f64],
) -> Result<ProxResult> {
    let ds = spec.dataset();
    if z.len() != ds.dim() {
        return Err(Error::DimensionMismatch {
            expected: ds.dim(),
            actual: z.len(),
        });
    }
    if !(gamma > 0.0) {
        return invalid(format!("step size must be positive, got {gamma}"));
    }
    let rho = 1.0 / (1.0 + spec.mu() * gamma);
    for (o, zi) in out.iter_mut().zip(z) {
        *o = rho * zi;
    }
    let row = ds.row(j);
    let y = ds.label(j);
    let norm_sq = row.sq_norm();
    if norm_sq == 0.0 {
        return Ok(ProxResult {
            c: 0.0,
            nu: spec.loss().derivative(0.0, y),
            iterations: 0,
        });
    }
    let a = row.dot(out);
    let res = spec.loss().prox(a, y, rho * gamma * norm_sq)?;
    row.axpy(-(a - res.c) / norm_sq, out);
    Ok(res)
}
