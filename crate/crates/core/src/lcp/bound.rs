//! Relative equilibrium-shift bound for a perturbed LCP.
//!
//! With `eps_M = ||dM|| / ||M||`, `eps_q = ||dq|| / ||q||`,
//! `eta = eps_M beta(M) ||M||` and `eps = max(eps_M ||M||, eps_q ||q||)`,
//! the shift of the solution is bounded by
//! `mu = 2 eps beta(M) / (1 - eta)` whenever `eta < 1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::beta::{beta_of, BetaEstimate, BetaOptions};
use super::linalg::{mat_norm_inf, norm_inf};
use super::{LcpError, LcpInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBound {
    pub beta: f64,
    pub eta: f64,
    pub epsilon_m: f64,
    pub epsilon_q: f64,
    pub epsilon: f64,
    /// Absent when `eta >= 1`.
    pub mu: Option<f64>,
    pub beta_is_lower_bound: bool,
    pub norm_m: f64,
    pub norm_q: f64,
    pub norm: String,
}

impl PerturbationBound {
    /// `eta` recomputed from the stored fields.
    pub fn eta_recomputed(&self) -> f64 {
        self.epsilon_m * self.beta * self.norm_m
    }

    /// `beta / (1 - eta) * (||dM|| + ||dq|| / ||x*||)`, the relative-shift
    /// bound that follows from `||x* - x*_D|| <= beta(M + dM) ||dM x* + dq||`
    /// when `||dq||` keeps its division by `||x*||`. It agrees with `mu` up
    /// to the factor `2 max(a, b) >= a + b` only when `||x*|| >= 1`; `mu`
    /// itself can be exceeded when `||x*|| < 1`. Absent when `eta >= 1` or
    /// `x* = 0`.
    pub fn residual_bound(&self, x_norm: f64) -> Option<f64> {
        if self.eta >= 1.0 || x_norm <= 0.0 {
            return None;
        }
        let dm = self.epsilon_m * self.norm_m;
        let dq = self.epsilon_q * self.norm_q;
        Some(self.beta / (1.0 - self.eta) * (dm + dq / x_norm))
    }
}

fn relative(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

pub fn perturbation_bound(
    nominal: &LcpInstance,
    delta_m: &DMatrix<f64>,
    delta_q: &DVector<f64>,
    opts: &BetaOptions,
) -> Result<PerturbationBound, LcpError> {
    let beta = beta_of(&nominal.m, opts)?;
    perturbation_bound_with_beta(nominal, delta_m, delta_q, &beta)
}

/// Same as [`perturbation_bound`] with a precomputed `beta(M)`.
pub fn perturbation_bound_with_beta(
    nominal: &LcpInstance,
    delta_m: &DMatrix<f64>,
    delta_q: &DVector<f64>,
    beta: &BetaEstimate,
) -> Result<PerturbationBound, LcpError> {
    let n = nominal.dim();
    if delta_m.nrows() != n || delta_m.ncols() != n || delta_q.len() != n {
        return Err(LcpError::Malformed(format!(
            "perturbation is {}x{} / {}, instance is {n}",
            delta_m.nrows(),
            delta_m.ncols(),
            delta_q.len()
        )));
    }
    let norm_m = mat_norm_inf(&nominal.m);
    let norm_q = norm_inf(nominal.q.as_slice());
    let epsilon_m = relative(mat_norm_inf(delta_m), norm_m);
    let epsilon_q = relative(norm_inf(delta_q.as_slice()), norm_q);
    let scaled = |e: f64, norm: f64| if e == 0.0 { 0.0 } else { e * norm };
    let eta = scaled(epsilon_m, beta.beta * norm_m);
    let epsilon = scaled(epsilon_m, norm_m).max(scaled(epsilon_q, norm_q));
    let mut bound = PerturbationBound {
        beta: beta.beta,
        eta,
        epsilon_m,
        epsilon_q,
        epsilon,
        mu: None,
        beta_is_lower_bound: beta.is_lower_bound,
        norm_m,
        norm_q,
        norm: "infinity".into(),
    };
    if eta < 1.0 {
        bound.mu = Some(2.0 * epsilon * beta.beta / (1.0 - eta));
        Ok(bound)
    } else {
        Err(LcpError::EtaExceedsOne { eta, bound: Box::new(bound) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(m: f64, q: f64) -> LcpInstance {
        LcpInstance::unlabeled(DMatrix::from_element(1, 1, m), DVector::from_element(1, q)).unwrap()
    }

    #[test]
    fn zero_perturbation() {
        let inst = scalar(2.0, -1.0);
        let b = perturbation_bound(&inst, &DMatrix::zeros(1, 1), &DVector::zeros(1), &BetaOptions::default()).unwrap();
        assert_eq!((b.epsilon_m, b.epsilon_q, b.eta, b.mu), (0.0, 0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn scalar_formula_chain() {
        // eps_M = 0.2 / 2 = 0.1, beta = 1/2, eta = 0.1 * 0.5 * 2 = 0.1,
        // eps = max(0.2, 0) = 0.2, mu = 2 * 0.2 * 0.5 / 0.9
        let inst = scalar(2.0, -1.0);
        let b = perturbation_bound(&inst, &DMatrix::from_element(1, 1, 0.2), &DVector::zeros(1), &BetaOptions::default())
            .unwrap();
        assert!((b.epsilon_m - 0.1).abs() < 1e-15);
        assert!((b.beta - 0.5).abs() < 1e-15);
        assert!((b.eta - 0.1).abs() < 1e-15);
        assert!((b.epsilon - 0.2).abs() < 1e-15);
        assert!((b.mu.unwrap() - 0.2 / 0.9).abs() < 1e-15);
        assert!((b.eta_recomputed() - b.eta).abs() <= 1e-12 * b.eta);
    }

    #[test]
    fn residual_bound_keeps_the_norm_of_x() {
        // x* = 1/2; dq = 0.1 gives x*_D = 0.45, relative shift 0.1.
        // mu = 2 * 0.1 * 0.5 = 0.1 is attained; the residual form gives
        // 0.5 * (0 + 0.1 / 0.5) = 0.1 as well.
        let inst = scalar(2.0, -1.0);
        let b = perturbation_bound(&inst, &DMatrix::zeros(1, 1), &DVector::from_element(1, 0.1), &BetaOptions::default())
            .unwrap();
        assert!((b.mu.unwrap() - 0.1).abs() < 1e-15);
        assert!((b.residual_bound(0.5).unwrap() - 0.1).abs() < 1e-15);
        // Scaling the problem down by 10 leaves the relative shift at 0.1
        // but divides mu by 10; only the residual form still covers it.
        let small = scalar(2.0, -0.1);
        let b = perturbation_bound(&small, &DMatrix::zeros(1, 1), &DVector::from_element(1, 0.01), &BetaOptions::default())
            .unwrap();
        assert!(b.mu.unwrap() < 0.1);
        assert!((b.residual_bound(0.05).unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn large_eta_is_an_error_with_partial_report() {
        let inst = scalar(2.0, -1.0);
        let err = perturbation_bound(&inst, &DMatrix::from_element(1, 1, 4.0), &DVector::zeros(1), &BetaOptions::default())
            .unwrap_err();
        match err {
            LcpError::EtaExceedsOne { eta, bound } => {
                assert!(eta >= 1.0);
                assert_eq!(bound.mu, None);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
