//! Numerical checks of the solver against independent references: a
//! brute-force prox oracle, operator inequalities, the Moreau identity,
//! Lyapunov descent and the resulting rates.

pub mod lyapunov;
pub mod operators;
pub mod oracle;
pub mod reference;
pub mod scaling;
pub mod suite;
pub mod synthetic;

use std::fmt;

use serde::Serialize;

pub use lyapunov::{
    check_chained_rate, check_descent, check_nonsmooth_rate, lyapunov, LyapunovSample,
};
pub use operators::{
    check_moreau, check_newton_iterations, check_operator_inequalities, check_prox_oracle,
    known_conjugate_suite, ConjugatePair,
};
pub use oracle::brute_force_prox_1d;
pub use reference::{solve_reference, ReferenceSolution};
pub use suite::{run_suite, SuiteSize};

/// Outcome of one check, with named metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub passed: bool,
    pub metrics: Vec<(String, f64)>,
    pub detail: String,
}

impl CheckReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: true,
            metrics: Vec::new(),
            detail: String::new(),
        }
    }

    pub fn metric(mut self, key: impl Into<String>, value: f64) -> Self {
        self.metrics.push((key.into(), value));
        self
    }

    pub fn push(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.push((key.into(), value));
    }

    pub fn require(&mut self, ok: bool) {
        self.passed &= ok;
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }

    /// `check=<name> passed=<bool> key=value ...` on one line.
    pub fn key_values(&self) -> String {
        let mut s = format!("check={} passed={}", self.name, self.passed);
        for (k, v) in &self.metrics {
            s.push_str(&format!(" {k}={v:e}"));
        }
        s
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{status}] {}", self.name)?;
        if !self.detail.is_empty() {
            write!(f, ": {}", self.detail)?;
        }
        for (k, v) in &self.metrics {
            write!(f, "\n    {k} = {v:.6e}")?;
        }
        Ok(())
    }
}

/// Sample mean and standard error of the mean.
pub(crate) fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_line() {
        let mut r = CheckReport::new("demo").metric("ratio", 0.5);
        r.require(false);
        assert_eq!(r.key_values(), "check=demo passed=false ratio=5e-1");
        assert_eq!(r.get("ratio"), Some(0.5));
        assert!(r.to_string().starts_with("[FAIL] demo"));
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
