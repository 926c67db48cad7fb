//! Editing strategies for a linear associative memory `W k = v`.
//!
//! Every editor mutates an [`EditorState`] one batch at a time and reports a
//! [`StepResult`]. Steppers never touch the state on error, so a failed step
//! can be retried or inspected.

mod conflict;
mod corrected;
mod latest;
mod linear;

pub use conflict::{conflict_resolve_step, conflict_system_matrix};
pub use corrected::{error_corrected_step, uncorrected_step};
pub use latest::{
    mem_latest_delta_form1, mem_latest_delta_form2, memorize_latest_broken_step,
    memorize_latest_step, broken_system_matrix, memorize_latest_system_matrix,
};
pub use linear::{
    memit_step, naive_step, naive_step_with, naive_system_matrix, ote_update, se_step,
    se_system_matrix,
};

use crate::knowledge::{KnowledgeError, PreservedSet};
use crate::linalg::{svd, LinalgError, Matrix};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EditError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Knowledge(#[from] KnowledgeError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Mutable editing trajectory: current weights plus the accumulated history
/// every stepper needs.
#[derive(Debug, Clone)]
pub struct EditorState {
    /// Weights before any edit, d_out x d_in.
    pub w0: Matrix,
    /// Current weights.
    pub w: Matrix,
    /// `w - w0`, accumulated from applied deltas.
    pub cum_delta: Matrix,
    /// `K0 K0ᵀ + Σ_τ K_τ K_τᵀ` over all batches stepped so far.
    pub gram_acc: Matrix,
    /// `Σ_τ K_τ K_τᵀ` over stepped batches only, excluding the preserved
    /// gram. Satisfies `gram_acc = preserved.gram + past_keys_gram`.
    pub past_keys_gram: Matrix,
    /// Accumulated correction debt left by regularized deltas; zero until an
    /// error-corrected stepper runs.
    pub err_acc: Matrix,
    /// Number of batches stepped.
    pub step: usize,
}

impl EditorState {
    pub fn new(w0: Matrix, preserved: &PreservedSet) -> Result<Self, EditError> {
        if w0.cols() != preserved.keys.rows() || w0.rows() != preserved.values.rows() {
            return Err(EditError::InvalidInput(format!(
                "weights are {}x{} but preserved knowledge is {}-in / {}-out",
                w0.rows(),
                w0.cols(),
                preserved.keys.rows(),
                preserved.values.rows()
            )));
        }
        let (d_out, d_in) = (w0.rows(), w0.cols());
        Ok(Self {
            w: w0.clone(),
            cum_delta: Matrix::zeros(d_out, d_in),
            gram_acc: preserved.gram.clone(),
            past_keys_gram: Matrix::zeros(d_in, d_in),
            err_acc: Matrix::zeros(d_out, d_in),
            step: 0,
            w0,
        })
    }
}

/// What one step did to the weights.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Delta produced by the solve, before any regularizer.
    pub delta_raw: Matrix,
    /// Delta actually added to the weights.
    pub delta_applied: Matrix,
    /// `‖V_t − W K_t‖_F` before the step.
    pub residual_before: f64,
    /// Same norm after the step.
    pub residual_after: f64,
}

/// Post-solve delta shaping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizerSpec {
    /// Pass the delta through unchanged.
    Identity,
    /// Clip the delta's singular values at the current weights' largest one.
    Prune,
    /// Keep the `ceil(rho · d_out · d_in)` largest-magnitude entries, zero
    /// the rest. Ties keep the earlier entry in row-major order.
    Rect { rho: f64 },
}

/// Applies `spec` to `delta`. `w_current` supplies the singular-value cap
/// for [`RegularizerSpec::Prune`].
pub fn apply_regularizer(
    spec: RegularizerSpec,
    delta: &Matrix,
    w_current: &Matrix,
) -> Result<Matrix, EditError> {
    match spec {
        RegularizerSpec::Identity => Ok(delta.clone()),
        RegularizerSpec::Prune => {
            let cap = svd(w_current)?.s.first().copied().unwrap_or(0.0);
            let dec = svd(delta)?;
            let k = dec.s.len();
            let mut us = dec.u;
            for j in 0..k {
                let s = dec.s[j].min(cap);
                for i in 0..us.rows() {
                    us.set(i, j, us.get(i, j) * s);
                }
            }
            Ok(us.matmul(&dec.vt))
        }
        RegularizerSpec::Rect { rho } => {
            if !rho.is_finite() || !(0.0..=1.0).contains(&rho) {
                return Err(EditError::InvalidInput(format!(
                    "rect density must be in [0, 1], got {rho}"
                )));
            }
            let total = delta.rows() * delta.cols();
            let keep = ((rho * total as f64).ceil() as usize).min(total);
            let mut order: Vec<usize> = (0..total).collect();
            order.sort_by(|&a, &b| {
                let (ma, mb) = (delta.data()[a].abs(), delta.data()[b].abs());
                mb.partial_cmp(&ma).unwrap().then(a.cmp(&b))
            });
            let mut out = Matrix::zeros(delta.rows(), delta.cols());
            let cols = delta.cols();
            for &flat in &order[..keep] {
                out.set(flat / cols, flat % cols, delta.data()[flat]);
            }
            Ok(out)
        }
    }
}

/// Shared short-circuit: an empty batch edits nothing but still counts as a
/// step.
pub(crate) fn empty_step(state: &mut EditorState) -> StepResult {
    state.step += 1;
    let zero = Matrix::zeros(state.w.rows(), state.w.cols());
    StepResult {
        delta_raw: zero.clone(),
        delta_applied: zero,
        residual_before: 0.0,
        residual_after: 0.0,
    }
}

/// Shared tail: applies a delta and advances the bookkeeping.
pub(crate) fn commit_step(state: &mut EditorState, delta_applied: &Matrix, batch_gram: &Matrix) {
    state.w = state.w.add(delta_applied);
    state.cum_delta = state.cum_delta.add(delta_applied);
    state.gram_acc = state.gram_acc.add(batch_gram);
    state.past_keys_gram = state.past_keys_gram.add(batch_gram);
    state.step += 1;
}

/// Debug-build check of the accumulator invariant
/// `gram_acc = preserved.gram + past_keys_gram`.
pub(crate) fn check_state_tracks(state: &EditorState, preserved: &PreservedSet) {
    if cfg!(debug_assertions) {
        let expect = preserved.gram.add(&state.past_keys_gram);
        let err = crate::linalg::rel_err(&state.gram_acc, &expect).unwrap_or(f64::INFINITY);
        debug_assert!(
            err <= 1e-9,
            "gram accumulator drifted from preserved + past keys: {err:.3e}"
        );
    }
}
