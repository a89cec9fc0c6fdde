//! Posterior tracking over hypotheses, maintained in log space.

use crate::error::{Error, Result};
use crate::instance::Instance;

/// A probability vector over hypotheses plus the cumulative log-likelihood
/// it was renormalized from.
#[derive(Clone, Debug)]
pub struct PosteriorState {
    log_prior: Vec<f64>,
    log_lik: Vec<f64>,
    probs: Vec<f64>,
}

impl PosteriorState {
    pub fn from_prior(prior: &[f64]) -> Self {
        let log_prior: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
        let mut state = PosteriorState {
            log_prior,
            log_lik: vec![0.0; prior.len()],
            probs: prior.to_vec(),
        };
        state.renormalize();
        state
    }

    fn renormalize(&mut self) {
        let weights: Vec<f64> = self
            .log_prior
            .iter()
            .zip(&self.log_lik)
            .map(|(lp, ll)| lp + ll)
            .collect();
        let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            // All-zero likelihood would divide by zero below; callers treat
            // this as a numerical error through `update`.
            return;
        }
        let mut total = 0.0;
        for (p, w) in self.probs.iter_mut().zip(&weights) {
            *p = (w - max).exp();
            total += *p;
        }
        for p in self.probs.iter_mut() {
            *p /= total;
        }
    }

    /// Bayes update after observing `outcome` from `action`, in log space.
    pub fn update(&mut self, inst: &Instance, action: usize, outcome: f64) -> Result<()> {
        let mut any_finite = false;
        for (h, ll) in self.log_lik.iter_mut().enumerate() {
            *ll += inst.log_density(h, action, outcome);
            if (*ll + self.log_prior[h]).is_finite() {
                any_finite = true;
            }
        }
        if !any_finite {
            return Err(Error::Numerical(
                "all hypotheses assign zero likelihood to the observed outcome".into(),
            ));
        }
        self.renormalize();
        Ok(())
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, h: usize) -> f64 {
        self.probs[h]
    }

    pub fn log_likelihood(&self, h: usize) -> f64 {
        self.log_lik[h]
    }

    /// Argmax hypothesis, ties to the lowest index.
    pub fn map_hypothesis(&self) -> usize {
        let mut best = 0;
        let mut best_p = f64::NEG_INFINITY;
        for (h, &p) in self.probs.iter().enumerate() {
            if p > best_p {
                best_p = p;
                best = h;
            }
        }
        best
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Recompute the vector from scratch; used by invariants that check the
    /// stored probabilities against the log weights.
    pub fn recomputed_probs(&self) -> Vec<f64> {
        let mut clone = self.clone();
        clone.renormalize();
        clone.probs
    }
}
