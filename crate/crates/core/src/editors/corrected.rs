//! Error-corrected sequential editing: regularized deltas leave a correction
//! debt that the next solve repays, keeping the trajectory glued to the
//! unregularized one.

use super::{
    apply_regularizer, check_state_tracks, empty_step, EditError, EditorState, RegularizerSpec,
    StepResult,
};
use crate::knowledge::{EditBatch, PreservedSet};
use crate::linalg::{frob_norm, gram, solve_right};

/// One error-corrected step.
///
/// `C_t = C_{t−1} + K_t K_tᵀ`
/// `Δ_t = ((V_t − W_{t−1} K_t) K_tᵀ − E_{t−1}) C_t⁻¹`
/// applied delta: `R(Δ_t)`; new debt: `E_t = (R(Δ_t) − Δ_t) C_t`
///
/// With the identity regularizer the debt stays exactly zero and the step
/// reduces to the plain accumulated-gram solve.
pub fn error_corrected_step(
    state: &mut EditorState,
    preserved: &PreservedSet,
    batch: &EditBatch,
    spec: RegularizerSpec,
) -> Result<StepResult, EditError> {
    step_impl(state, preserved, batch, spec, true)
}

/// Ablation of [`error_corrected_step`] that applies the same regularizer
/// but never records the debt, so regularization losses compound silently.
pub fn uncorrected_step(
    state: &mut EditorState,
    preserved: &PreservedSet,
    batch: &EditBatch,
    spec: RegularizerSpec,
) -> Result<StepResult, EditError> {
    step_impl(state, preserved, batch, spec, false)
}

fn step_impl(
    state: &mut EditorState,
    preserved: &PreservedSet,
    batch: &EditBatch,
    spec: RegularizerSpec,
    track_error: bool,
) -> Result<StepResult, EditError> {
    check_state_tracks(state, preserved);
    if batch.is_empty() {
        return Ok(empty_step(state));
    }
    let batch_gram = gram(batch.keys());
    let c_next = state.gram_acc.add(&batch_gram);
    let r = batch.values().sub(&state.w.matmul(batch.keys()));
    let mut rhs = r.matmul(&batch.keys().transpose());
    if track_error {
        rhs = rhs.sub(&state.err_acc);
    }
    let delta_raw = solve_right(&c_next, &rhs, 0.0)?;
    let delta_applied = apply_regularizer(spec, &delta_raw, &state.w)?;

    let residual_before = frob_norm(&r);
    let w_next = state.w.add(&delta_applied);
    let residual_after = frob_norm(&batch.values().sub(&w_next.matmul(batch.keys())));

    if track_error {
        state.err_acc = delta_applied.sub(&delta_raw).matmul(&c_next);
    }
    state.w = w_next;
    state.cum_delta = state.cum_delta.add(&delta_applied);
    state.gram_acc = c_next;
    state.past_keys_gram = state.past_keys_gram.add(&batch_gram);
    state.step += 1;
    Ok(StepResult {
        delta_raw,
        delta_applied,
        residual_before,
        residual_after,
    })
}
