//! Schedule-optimality measures: the Hamiltonian-maximization gap C over a
//! candidate set of inner-loop settings, and the first-order stationary
//! condition (FOSC) baseline on the input.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inner_max::{pgd_perturb, AdvBatch, PgdInit};
use crate::models::{self, Params, Wrt};
use crate::scalar::Real;

/// Searchable inner-loop settings G: pairs of (K, alpha).
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet<T = f64> {
    pairs: Vec<(usize, T)>,
}

impl<T: Real> CandidateSet<T> {
    pub fn new(pairs: Vec<(usize, T)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::contract("candidate set must be non-empty"));
        }
        if pairs
            .iter()
            .any(|&(k, a)| k == 0 || !(a > T::zero() && a.is_finite()))
        {
            return Err(Error::contract(
                "candidates need K >= 1 and finite alpha > 0",
            ));
        }
        Ok(CandidateSet { pairs })
    }

    /// Budget-sharing grid: alpha = tau / K for each listed K.
    pub fn budget_grid(ks: &[usize], tau: T) -> Result<Self> {
        if !(tau > T::zero() && tau.is_finite()) {
            return Err(Error::contract(format!("tau must be finite and > 0, got {tau}")));
        }
        Self::new(
            ks.iter()
                .map(|&k| (k, tau / T::of_usize(k.max(1))))
                .collect(),
        )
    }

    /// The default search grid: K in {1, 2, 5, 10, 20, 40} at alpha = tau/K.
    pub fn default_grid(tau: T) -> Self {
        Self::budget_grid(&[1, 2, 5, 10, 20, 40], tau).expect("static grid is valid")
    }

    pub fn pairs(&self) -> &[(usize, T)] {
        &self.pairs
    }
}

/// Surrogate evaluation of one candidate: run the inner maximizer from the
/// clean probe inputs, then score `|grad_theta loss(adv)|^2 - gamma K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEval<T = f64> {
    pub k: usize,
    pub alpha: T,
    pub grad_norm_sq: T,
    pub surrogate: T,
}

/// Result of a criterion evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport<T = f64> {
    pub gamma: T,
    pub current: (usize, T),
    pub candidates: Vec<CandidateEval<T>>,
    /// Index (into `candidates`) of the surrogate argmax; ties resolve to the
    /// lowest index.
    pub best_index: usize,
    /// `max(surrogates) - surrogate(current)`, always >= 0.
    pub c_value: T,
}

impl<T: Real> CriterionReport<T> {
    pub fn best(&self) -> &CandidateEval<T> {
        &self.candidates[self.best_index]
    }
}

/// Evaluates the greedy optimality gap of `current` against the candidate set
/// on a clean probe batch. The current setting joins the set if absent, so
/// the gap is exactly zero when `current` is the argmax. Candidates evaluate
/// independently (in parallel) and deterministically.
pub fn criterion_c<T: Real>(
    params: &Params<T>,
    probe: &AdvBatch<T>,
    current: (usize, T),
    g: &CandidateSet<T>,
    gamma: T,
) -> Result<CriterionReport<T>> {
    if !(gamma >= T::zero() && gamma.is_finite()) {
        return Err(Error::contract(format!(
            "gamma must be finite and >= 0, got {gamma}"
        )));
    }
    let mut pairs = g.pairs().to_vec();
    let current_index = match pairs.iter().position(|&(k, a)| k == current.0 && a == current.1) {
        Some(i) => i,
        None => {
            pairs.push(current);
            pairs.len() - 1
        }
    };

    let evals: Vec<Result<CandidateEval<T>>> = pairs
        .par_iter()
        .map(|&(k, alpha)| {
            let outcome = pgd_perturb(params, probe, alpha, k, PgdInit::Clean)?;
            let (_, grads) = models::loss_and_grads(
                params,
                outcome.batch.x(),
                outcome.batch.labels(),
                Wrt::ParamsOnly,
            )?;
            let grad_norm_sq = grads.params.expect("parameter gradients requested").norm_sq();
            Ok(CandidateEval {
                k,
                alpha,
                grad_norm_sq,
                surrogate: grad_norm_sq - gamma * T::of_usize(k),
            })
        })
        .collect();

    let mut candidates = Vec::with_capacity(evals.len());
    for e in evals {
        candidates.push(e?);
    }
    let mut best_index = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.surrogate > candidates[best_index].surrogate {
            best_index = i;
        }
    }
    let c_value = candidates[best_index].surrogate - candidates[current_index].surrogate;
    Ok(CriterionReport {
        gamma,
        current,
        candidates,
        best_index,
        c_value,
    })
}

/// First-order stationary condition measure on one example:
/// `eps * |g|_1 - <x - x0, g>`. The l1 norm is the dual of the
/// infinity-ball, which zeroes the measure at the box-constrained maximizer.
/// Non-negative whenever `|x - x0|_inf <= eps`.
pub fn fosc<T: Real>(x: &[T], x0: &[T], grad_x: &[T], eps: T) -> T {
    assert_eq!(x.len(), x0.len(), "fosc operands must share a dimension");
    assert_eq!(x.len(), grad_x.len(), "fosc operands must share a dimension");
    let mut l1 = T::zero();
    let mut inner = T::zero();
    for i in 0..x.len() {
        l1 += grad_x[i].abs();
        inner += (x[i] - x0[i]) * grad_x[i];
    }
    eps * l1 - inner
}
