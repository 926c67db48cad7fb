//! Memoryless editors: each step fits the preserved set and the newest batch
//! only, deliberately dropping every earlier edit.

use super::{check_state_tracks, commit_step, empty_step, EditError, EditorState, StepResult};
use crate::knowledge::{EditBatch, PreservedSet};
use crate::linalg::{frob_norm, gram, solve_right, Matrix};

/// System matrix shared by both delta forms: `K0 K0ᵀ + K_t K_tᵀ`.
pub fn memorize_latest_system_matrix(preserved: &PreservedSet, batch: &EditBatch) -> Matrix {
    preserved.gram.add(&gram(batch.keys()))
}

/// Recursive form of the memoryless delta. Subtracts the residual the
/// previous batch would still produce, undoing its memorization:
///
/// `Δ_t · (K0 K0ᵀ + K_t K_tᵀ) = R_t K_tᵀ − (V_{t−1} − W_{t−1} K_{t−1}) K_{t−1}ᵀ`
///
/// Defined from the second step on, once a previous batch exists.
pub fn mem_latest_delta_form1(
    w_prev: &Matrix,
    preserved: &PreservedSet,
    batch: &EditBatch,
    batch_prev: &EditBatch,
) -> Result<Matrix, EditError> {
    let system = memorize_latest_system_matrix(preserved, batch);
    let r = batch.values().sub(&w_prev.matmul(batch.keys()));
    let r_prev = batch_prev.values().sub(&w_prev.matmul(batch_prev.keys()));
    let rhs = r
        .matmul(&batch.keys().transpose())
        .sub(&r_prev.matmul(&batch_prev.keys().transpose()));
    Ok(solve_right(&system, &rhs, 0.0)?)
}

/// Anchored form of the memoryless delta. Pulls the weights back toward the
/// preserved targets instead of referencing the previous batch:
///
/// `Δ_t · (K0 K0ᵀ + K_t K_tᵀ) = R_t K_tᵀ + (V0 − W_{t−1} K0) K0ᵀ`
///
/// Both forms coincide whenever `W_{t−1}` solved the previous step exactly.
pub fn mem_latest_delta_form2(
    w_prev: &Matrix,
    preserved: &PreservedSet,
    batch: &EditBatch,
) -> Result<Matrix, EditError> {
    let system = memorize_latest_system_matrix(preserved, batch);
    let r = batch.values().sub(&w_prev.matmul(batch.keys()));
    let drift = preserved.values.sub(&w_prev.matmul(&preserved.keys));
    let rhs = r
        .matmul(&batch.keys().transpose())
        .add(&drift.matmul(&preserved.keys.transpose()));
    Ok(solve_right(&system, &rhs, 0.0)?)
}

/// One memoryless step using the anchored form. `batch_prev` must mirror the
/// sequential history: `None` on the first step, the previous batch after.
pub fn memorize_latest_step(
    state: &mut EditorState,
    preserved: &PreservedSet,
    batch: &EditBatch,
    batch_prev: Option<&EditBatch>,
) -> Result<StepResult, EditError> {
    match (state.step, batch_prev) {
        (0, Some(_)) => {
            return Err(EditError::InvalidInput(
                "first step cannot have a previous batch".into(),
            ))
        }
        (s, None) if s > 0 => {
            return Err(EditError::InvalidInput(format!(
                "step {s} requires the previous batch"
            )))
        }
        _ => {}
    }
    check_state_tracks(state, preserved);
    if batch.is_empty() {
        return Ok(empty_step(state));
    }
    let delta = mem_latest_delta_form2(&state.w, preserved, batch)?;
    finish(state, batch, delta)
}

/// System matrix of the truncated variant: `K_t K_tᵀ · p + I`.
pub fn broken_system_matrix(batch: &EditBatch, p: &Matrix) -> Matrix {
    gram(batch.keys()).matmul(p).add_ridge(1.0)
}

/// Truncated memoryless step:
///
/// `Δ_t = R_t K_tᵀ p (K_t K_tᵀ p + I)⁻¹`
///
/// Keeps neither the earlier edits nor the preserved gram in the system, so
/// its weights drift away from every anchored trajectory; kept as a
/// comparison arm.
pub fn memorize_latest_broken_step(
    state: &mut EditorState,
    preserved: &PreservedSet,
    batch: &EditBatch,
    p: &Matrix,
) -> Result<StepResult, EditError> {
    check_state_tracks(state, preserved);
    if batch.is_empty() {
        return Ok(empty_step(state));
    }
    let system = broken_system_matrix(batch, p);
    let r = batch.values().sub(&state.w.matmul(batch.keys()));
    let rhs = r.matmul(&batch.keys().transpose()).matmul(p);
    let delta = solve_right(&system, &rhs, 0.0)?;
    finish(state, batch, delta)
}

fn finish(
    state: &mut EditorState,
    batch: &EditBatch,
    delta: Matrix,
) -> Result<StepResult, EditError> {
    let residual_before = frob_norm(&batch.values().sub(&state.w.matmul(batch.keys())));
    let w_next = state.w.add(&delta);
    let residual_after = frob_norm(&batch.values().sub(&w_next.matmul(batch.keys())));
    commit_step(state, &delta, &gram(batch.keys()));
    Ok(StepResult {
        delta_raw: delta.clone(),
        delta_applied: delta,
        residual_before,
        residual_after,
    })
}
