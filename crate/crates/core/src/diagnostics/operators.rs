//! Prox-operator checks: oracle agreement, the strengthened firm
//! nonexpansiveness and g-bound inequalities, and the Moreau identity.

use rand::{Rng, RngExt};

use super::oracle::brute_force_prox_1d;
use super::synthetic::{log_uniform, normal, normal_vec, random_term, rng};
use super::CheckReport;
use crate::error::Result;
use crate::linalg::{dist_sq, dot};
use crate::losses::{prox_hinge, prox_logistic, prox_squared, prox_term, LossKind, NewtonOptions};

/// Largest `|c − c_oracle|` over random `(a, y, γ')` with
/// `γ' ∈ [1e-6, 1e3]` log-uniform, against the golden-section oracle.
pub fn check_prox_oracle(
    loss: LossKind,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<CheckReport> {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let gamma_p = log_uniform(&mut r, 1e-6, 1e3);
        let a = 3.0 * normal(&mut r);
        let y = match loss {
            LossKind::Squared => 3.0 * normal(&mut r),
            _ => pm_one(&mut r),
        };
        let c = loss.prox(a, y, gamma_p)?.c;
        let oracle = brute_force_prox_1d(loss, a, y, gamma_p, 1e-12)?;
        worst = worst.max((c - oracle).abs());
    }
    let mut report = CheckReport::new(format!("prox_oracle_{loss}"))
        .metric("samples", samples as f64)
        .metric("max_abs_error", worst);
    report.require(worst <= tol);
    Ok(report)
}

/// Newton iteration counts for logistic prox problems with `γ' ≤ 10` and
/// moderate `a`: median at most 3, maximum at most 12.
pub fn check_newton_iterations(samples: usize, seed: u64) -> Result<CheckReport> {
    let mut r = rng(seed);
    let mut counts = Vec::with_capacity(samples);
    for _ in 0..samples {
        let gamma_p = log_uniform(&mut r, 1e-3, 10.0);
        let a = 2.0 * normal(&mut r);
        let y = pm_one(&mut r);
        counts.push(prox_logistic(a, y, gamma_p, NewtonOptions::default())?.iterations);
    }
    counts.sort_unstable();
    let median = counts[counts.len() / 2];
    let max = *counts.last().unwrap_or(&0);
    let mut report = CheckReport::new("newton_iterations")
        .metric("median", median as f64)
        .metric("max", max as f64);
    report.require(median <= 3 && max <= 12);
    Ok(report)
}

fn pm_one<R: Rng>(r: &mut R) -> f64 {
    if r.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Over random folded terms and point pairs, with `p` the prox and
/// `g(x) = (x − p(x))/γ`:
/// `<x−y, p(x)−p(y)> ≥ (1+μγ)‖p(x)−p(y)‖²`,
/// `<g(x)−g(y), x−y> ≥ γ(1 + 1/(Lγ))‖g(x)−g(y)‖²` and
/// `g(x) = ∇F(p(x))`, the latter two for smooth losses only.
pub fn check_operator_inequalities(
    losses: &[LossKind],
    samples: usize,
    seed: u64,
) -> Result<CheckReport> {
    let mut r = rng(seed);
    let mut firm = 0.0f64;
    let mut gbound = 0.0f64;
    let mut optimality = 0.0f64;
    let dim = 5;
    for s in 0..samples {
        let loss = losses[s % losses.len()];
        let spec = random_term(&mut r, loss, dim)?;
        let gamma = log_uniform(&mut r, 1e-3, 1e2);
        let spread = log_uniform(&mut r, 0.1, 10.0);
        let x = normal_vec(&mut r, dim, spread);
        let y = normal_vec(&mut r, dim, spread);
        let px = prox_term(&spec, 0, &x, gamma)?;
        let py = prox_term(&spec, 0, &y, gamma)?;
        let dxy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let dp: Vec<f64> = px.iter().zip(&py).map(|(a, b)| a - b).collect();
        let lhs = dot(&dxy, &dp);
        let rhs = (1.0 + spec.mu() * gamma) * dot(&dp, &dp);
        firm = firm.max(rhs - lhs);
        if let Some(l) = spec.lipschitz() {
            let gx: Vec<f64> = x.iter().zip(&px).map(|(a, b)| (a - b) / gamma).collect();
            let gy: Vec<f64> = y.iter().zip(&py).map(|(a, b)| (a - b) / gamma).collect();
            let dg: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
            let lhs = dot(&dg, &dxy);
            let rhs = gamma * (1.0 + 1.0 / (l * gamma)) * dot(&dg, &dg);
            gbound = gbound.max(rhs - lhs);
            let grad = spec.term_subgradient(0, &px);
            optimality = optimality.max(dist_sq(&gx, &grad).sqrt());
        }
    }
    let mut report = CheckReport::new("operator_inequalities")
        .metric("samples", samples as f64)
        .metric("firm_violation", firm)
        .metric("gbound_violation", gbound)
        .metric("optimality_error", optimality);
    report.require(firm <= 1e-9 && gbound <= 1e-9 && optimality <= 1e-8);
    Ok(report)
}

/// A function with closed-form (or independently computed) prox of both
/// itself and its Fenchel conjugate.
pub trait ConjugatePair: Send + Sync {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    /// `prox_{t f}(x)`
    fn prox(&self, x: &[f64], t: f64) -> Vec<f64>;
    /// `prox_{t f*}(x)`
    fn prox_conjugate(&self, x: &[f64], t: f64) -> Vec<f64>;
}

/// `f(x) = (α/2)‖x‖²`, `f*(v) = ‖v‖²/(2α)`.
pub struct ScaledQuadratic {
    pub alpha: f64,
    pub dim: usize,
}

impl ConjugatePair for ScaledQuadratic {
    fn name(&self) -> String {
        format!("quadratic_{}", self.alpha)
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn prox(&self, x: &[f64], t: f64) -> Vec<f64> {
        x.iter().map(|v| v / (1.0 + t * self.alpha)).collect()
    }
    fn prox_conjugate(&self, x: &[f64], t: f64) -> Vec<f64> {
        x.iter()
            .map(|v| self.alpha * v / (self.alpha + t))
            .collect()
    }
}

/// `f = 0`, `f*` the indicator of `{0}`.
pub struct Zero {
    pub dim: usize,
}

impl ConjugatePair for Zero {
    fn name(&self) -> String {
        "zero".into()
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn prox(&self, x: &[f64], _t: f64) -> Vec<f64> {
        x.to_vec()
    }
    fn prox_conjugate(&self, x: &[f64], _t: f64) -> Vec<f64> {
        vec![0.0; x.len()]
    }
}

/// Scalar hinge `f(c) = max(0, 1 − yc)`. Its conjugate is `f*(v) = yv` on
/// the segment between `0` and `−y`, so the conjugate prox is a shift
/// followed by projection onto that segment.
pub struct Hinge1d {
    pub y: f64,
}

impl ConjugatePair for Hinge1d {
    fn name(&self) -> String {
        format!("hinge_y{}", self.y)
    }
    fn dim(&self) -> usize {
        1
    }
    fn prox(&self, x: &[f64], t: f64) -> Vec<f64> {
        vec![prox_hinge(x[0], self.y, t).expect("t > 0").c]
    }
    fn prox_conjugate(&self, x: &[f64], t: f64) -> Vec<f64> {
        let (lo, hi) = if self.y > 0.0 {
            (-1.0, 0.0)
        } else {
            (0.0, 1.0)
        };
        vec![(x[0] - t * self.y).clamp(lo, hi)]
    }
}

/// Scalar squared loss `f(c) = ½(c − y)²`, `f*(v) = ½v² + yv`.
pub struct Squared1d {
    pub y: f64,
}

impl ConjugatePair for Squared1d {
    fn name(&self) -> String {
        format!("squared_y{}", self.y)
    }
    fn dim(&self) -> usize {
        1
    }
    fn prox(&self, x: &[f64], t: f64) -> Vec<f64> {
        vec![prox_squared(x[0], self.y, t).expect("t > 0").c]
    }
    fn prox_conjugate(&self, x: &[f64], t: f64) -> Vec<f64> {
        vec![(x[0] - t * self.y) / (1.0 + t)]
    }
}

/// Scalar logistic `f(c) = log(1 + e^{−c})` with conjugate
/// `f*(v) = (−v)log(−v) + (1+v)log(1+v)` on `[−1, 0]`. The conjugate prox
/// solves `t·log((1+v)/(−v)) + v − u = 0` by bisection.
pub struct Logistic1d;

impl ConjugatePair for Logistic1d {
    fn name(&self) -> String {
        "logistic".into()
    }
    fn dim(&self) -> usize {
        1
    }
    fn prox(&self, x: &[f64], t: f64) -> Vec<f64> {
        let opts = NewtonOptions {
            tol: 1e-14,
            max_iter: 200,
        };
        vec![prox_logistic(x[0], 1.0, t, opts).expect("t > 0").c]
    }
    fn prox_conjugate(&self, x: &[f64], t: f64) -> Vec<f64> {
        let u = x[0];
        let h = |v: f64| t * ((1.0 + v).ln() - (-v).ln()) + v - u;
        let (mut lo, mut hi) = (-1.0f64, 0.0f64);
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        vec![0.5 * (lo + hi)]
    }
}

pub fn known_conjugate_suite() -> Vec<Box<dyn ConjugatePair>> {
    vec![
        Box::new(ScaledQuadratic { alpha: 1.0, dim: 3 }),
        Box::new(ScaledQuadratic {
            alpha: 0.25,
            dim: 4,
        }),
        Box::new(ScaledQuadratic { alpha: 7.0, dim: 2 }),
        Box::new(Zero { dim: 3 }),
        Box::new(Hinge1d { y: 1.0 }),
        Box::new(Hinge1d { y: -1.0 }),
        Box::new(Squared1d { y: 0.7 }),
        Box::new(Logistic1d),
    ]
}

/// Checks `p_{γf}(x) = x − γ p_{(1/γ)f*}(x/γ)` and
/// `p_{(1/γ)f*}(x/γ) = (x − p_{γf}(x))/γ` on random points.
pub fn check_moreau(
    pair: &dyn ConjugatePair,
    gamma: f64,
    samples: usize,
    seed: u64,
) -> CheckReport {
    let mut r = rng(seed);
    let mut identity = 0.0f64;
    let mut gconj = 0.0f64;
    for _ in 0..samples {
        let x = normal_vec(&mut r, pair.dim(), 2.0);
        let p = pair.prox(&x, gamma);
        let scaled: Vec<f64> = x.iter().map(|v| v / gamma).collect();
        let q = pair.prox_conjugate(&scaled, 1.0 / gamma);
        for k in 0..x.len() {
            identity = identity.max((p[k] - (x[k] - gamma * q[k])).abs());
            gconj = gconj.max((q[k] - (x[k] - p[k]) / gamma).abs());
        }
    }
    let mut report = CheckReport::new(format!("moreau_{}", pair.name()))
        .metric("gamma", gamma)
        .metric("identity_residual", identity)
        .metric("gconj_residual", gconj);
    report.require(identity <= 1e-10 && gconj <= 1e-10);
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_conjugate_quadratic_halves() {
        let q = ScaledQuadratic { alpha: 1.0, dim: 2 };
        assert_eq!(q.prox(&[2.0, -4.0], 1.0), vec![1.0, -2.0]);
        assert_eq!(q.prox_conjugate(&[2.0, -4.0], 1.0), vec![1.0, -2.0]);
        assert!(check_moreau(&q, 1.0, 10, 1).passed);
    }

    #[test]
    fn zero_function_is_identity() {
        let z = Zero { dim: 2 };
        assert_eq!(z.prox(&[1.5, 2.0], 1.0), vec![1.5, 2.0]);
        assert!(check_moreau(&z, 1.0, 10, 1).passed);
    }

    #[test]
    fn hinge_pair_residual() {
        let rep = check_moreau(&Hinge1d { y: 1.0 }, 1.0, 100, 3);
        assert!(rep.passed, "{rep}");
    }

    #[test]
    fn whole_suite_at_several_steps() {
        for pair in known_conjugate_suite() {
            for gamma in [0.5, 1.0, 2.0] {
                let rep = check_moreau(pair.as_ref(), gamma, 50, 11);
                assert!(rep.passed, "{rep}");
            }
        }
    }

    #[test]
    fn small_oracle_and_inequality_runs() {
        for loss in LossKind::ALL {
            assert!(check_prox_oracle(loss, 200, 5, 1e-8).unwrap().passed);
        }
        let rep = check_operator_inequalities(&LossKind::ALL, 300, 2).unwrap();
        assert!(rep.passed, "{rep}");
    }
}
