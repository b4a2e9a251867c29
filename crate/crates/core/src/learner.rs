//! Online output-layer adaptation by recursive least squares with a
//! forgetting factor.
//!
//! Two weight vectors are kept: `learned` is adapted from delayed
//! input/output pairs, `control` drives the feedforward output and receives
//! a copy of `learned` after each update.

use crate::error::{Error, Result};

/// Default forgetting factor, `1 - 1e-6`.
pub const DEFAULT_FORGETTING: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerState {
    dim: usize,
    control: Vec<f64>,
    learned: Vec<f64>,
    /// Row-major `dim x dim` inverse-correlation estimate.
    p: Vec<f64>,
    learning_rate: f64,
    forgetting: f64,
    // Scratch for `P x`.
    px: Vec<f64>,
}

/// Zero weights and `P = I / alpha`, sized for `reservoir_dim + horizon`.
pub fn rls_init(reservoir_dim: usize, horizon: usize, learning_rate: f64, forgetting: f64) -> Result<LearnerState> {
    if !(learning_rate.is_finite() && learning_rate > 0.0) {
        return Err(Error::invalid(
            "learner.learning_rate",
            format!("must be > 0, got {learning_rate}"),
        ));
    }
    if !(forgetting > 0.0 && forgetting <= 1.0) {
        return Err(Error::invalid(
            "learner.forgetting_factor",
            format!("must lie in (0, 1], got {forgetting}"),
        ));
    }
    let dim = reservoir_dim + horizon;
    if dim == 0 {
        return Err(Error::invalid("learner.horizon", "regressor dimension must be >= 1"));
    }
    let mut p = vec![0.0; dim * dim];
    for i in 0..dim {
        p[i * dim + i] = 1.0 / learning_rate;
    }
    Ok(LearnerState {
        dim,
        control: vec![0.0; dim],
        learned: vec![0.0; dim],
        p,
        learning_rate,
        forgetting,
        px: vec![0.0; dim],
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LearnerState {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn control_weights(&self) -> &[f64] {
        &self.control
    }

    pub fn learned_weights(&self) -> &[f64] {
        &self.learned
    }

    /// Entry `(i, j)` of `P`.
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.dim + j]
    }

    pub fn p_matrix(&self) -> &[f64] {
        &self.p
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn forgetting(&self) -> f64 {
        self.forgetting
    }

    fn mat_vec(p: &[f64], dim: usize, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&p[i * dim..(i + 1) * dim], x);
        }
    }

    /// One RLS step on `regressor -> target`; returns the a-priori error
    /// `w . regressor - target`.
    ///
    /// Order: `P_k` from `P_{k-1}`, then the error, then `w -= e P_k x`.
    pub fn update(&mut self, regressor: &[f64], target: f64) -> Result<f64> {
        if regressor.len() != self.dim {
            return Err(Error::Dimension {
                context: "rls regressor",
                expected: self.dim,
                got: regressor.len(),
            });
        }
        if !target.is_finite() {
            return Err(Error::LearnerDiverged {
                reason: format!("non-finite target {target}"),
            });
        }
        let n = self.dim;
        let lambda = self.forgetting;

        Self::mat_vec(&self.p, n, regressor, &mut self.px);
        let quad = dot(regressor, &self.px);
        let denom = lambda * (lambda + quad);
        if !(denom.is_finite() && denom > 0.0) {
            return Err(Error::LearnerDiverged {
                reason: format!("gain denominator {denom:e}"),
            });
        }
        // P is symmetric, so P x x^T P = (P x)(P x)^T; fill the upper
        // triangle and mirror it so P stays exactly symmetric.
        for i in 0..n {
            let pxi = self.px[i] / denom;
            for j in i..n {
                let v = self.p[i * n + j] / lambda - pxi * self.px[j];
                self.p[i * n + j] = v;
                self.p[j * n + i] = v;
            }
        }

        let err = dot(&self.learned, regressor) - target;
        // P_k x = P_{k-1} x / (lambda + x^T P_{k-1} x).
        let scale = 1.0 / (lambda + quad);
        for (w, px) in self.learned.iter_mut().zip(&self.px) {
            *w -= err * px * scale;
        }
        if !err.is_finite() || self.learned.iter().any(|w| !w.is_finite()) {
            return Err(Error::LearnerDiverged {
                reason: format!("non-finite weights after error {err}"),
            });
        }
        Ok(err)
    }

    /// Copies the learned weights into the control weights.
    pub fn sync_weights(&mut self) {
        self.control.copy_from_slice(&self.learned);
    }

    /// Feedforward output of the control weights on an extended state.
    pub fn control_output(&self, extended: &[f64]) -> f64 {
        dot(&self.control, extended)
    }
}

/// Functional form of [`LearnerState::update`].
pub fn rls_update(state: &LearnerState, regressor: &[f64], target: f64) -> Result<LearnerState> {
    let mut next = state.clone();
    next.update(regressor, target)?;
    Ok(next)
}

/// Functional form of [`LearnerState::sync_weights`].
pub fn sync_weights(state: &LearnerState) -> LearnerState {
    let mut next = state.clone();
    next.sync_weights();
    next
}
