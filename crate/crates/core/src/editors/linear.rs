//! Closed-form least-squares editors over the full key history.

use super::{
    apply_regularizer, check_state_tracks, commit_step, empty_step, EditError, EditorState,
    RegularizerSpec, StepResult,
};
use crate::knowledge::{EditBatch, PreservedSet};
use crate::linalg::{frob_norm, gram, solve_right, Matrix};

/// Total delta that edits all `batches` against `w0` in one shot:
///
/// `Δ · (G·p + λI) = (Σ_τ (V_τ − w0 K_τ) K_τᵀ) · p`,
/// `G = K0 K0ᵀ + Σ_τ K_τ K_τᵀ`.
///
/// The sequential editors below land on `w0 + Δ` when run over the same
/// batches with the same projector and ridge; this single-solve form is the
/// reference they are measured against.
pub fn ote_update(
    w0: &Matrix,
    preserved: &PreservedSet,
    batches: &[EditBatch],
    p: &Matrix,
    lambda: f64,
) -> Result<Matrix, EditError> {
    let mut g = preserved.gram.clone();
    let mut rhs = Matrix::zeros(w0.rows(), w0.cols());
    for b in batches {
        g = g.add(&gram(b.keys()));
        let r = b.values().sub(&w0.matmul(b.keys()));
        rhs = rhs.add(&r.matmul(&b.keys().transpose()));
    }
    Ok(solve_right(&g.matmul(p), &rhs.matmul(p), lambda)?)
}

/// System matrix of [`se_step`] at the state's current position:
/// `(gram_acc + K_t K_tᵀ) · p + λI`.
pub fn se_system_matrix(state: &EditorState, batch: &EditBatch, p: &Matrix, lambda: f64) -> Matrix {
    state
        .gram_acc
        .add(&gram(batch.keys()))
        .matmul(p)
        .add_ridge(lambda)
}

/// One sequential editing step: the delta solves against every key seen so
/// far (preserved and previously edited), so earlier edits are not forgotten.
///
/// `Δ_t · ((K0 K0ᵀ + Σ_{τ≤t} K_τ K_τᵀ) · p + λI) = (V_t − W_{t−1} K_t) K_tᵀ · p`
pub fn se_step(
    state: &mut EditorState,
    preserved: &PreservedSet,
    batch: &EditBatch,
    p: &Matrix,
    lambda: f64,
) -> Result<StepResult, EditError> {
    check_state_tracks(state, preserved);
    if batch.is_empty() {
        return Ok(empty_step(state));
    }
    let system = se_system_matrix(state, batch, p, lambda);
    let r = batch.values().sub(&state.w.matmul(batch.keys()));
    let rhs = r.matmul(&batch.keys().transpose()).matmul(p);
    let delta = solve_right(&system, &rhs, 0.0)?;
    finish_plain(state, batch, delta)
}

/// [`se_step`] specialised to no projector and no ridge; the historical
/// grams are reused directly instead of being multiplied by an identity.
pub fn memit_step(
    state: &mut EditorState,
    preserved: &PreservedSet,
    batch: &EditBatch,
) -> Result<StepResult, EditError> {
    check_state_tracks(state, preserved);
    if batch.is_empty() {
        return Ok(empty_step(state));
    }
    let system = state.gram_acc.add(&gram(batch.keys()));
    let r = batch.values().sub(&state.w.matmul(batch.keys()));
    let rhs = r.matmul(&batch.keys().transpose());
    let delta = solve_right(&system, &rhs, 0.0)?;
    finish_plain(state, batch, delta)
}

/// System matrix of [`naive_step`]: `(K0 K0ᵀ + K_t K_tᵀ) · p + λI`.
pub fn naive_system_matrix(
    preserved: &PreservedSet,
    batch: &EditBatch,
    p: &Matrix,
    lambda: f64,
) -> Matrix {
    preserved
        .gram
        .add(&gram(batch.keys()))
        .matmul(p)
        .add_ridge(lambda)
}

/// Degraded sequential step that forgets prior edits: the system matrix
/// counts only the preserved keys and the current batch, as if `W_{t−1}`
/// still satisfied the original preservation constraints alone.
pub fn naive_step(
    state: &mut EditorState,
    preserved: &PreservedSet,
    batch: &EditBatch,
    p: &Matrix,
    lambda: f64,
) -> Result<StepResult, EditError> {
    naive_step_with(state, preserved, batch, p, lambda, RegularizerSpec::Identity)
}

/// [`naive_step`] with a regularizer applied to the solved delta. No error
/// accounting happens; the shaped delta is applied as-is.
pub fn naive_step_with(
    state: &mut EditorState,
    preserved: &PreservedSet,
    batch: &EditBatch,
    p: &Matrix,
    lambda: f64,
    spec: RegularizerSpec,
) -> Result<StepResult, EditError> {
    if batch.is_empty() {
        return Ok(empty_step(state));
    }
    let system = naive_system_matrix(preserved, batch, p, lambda);
    let r = batch.values().sub(&state.w.matmul(batch.keys()));
    let rhs = r.matmul(&batch.keys().transpose()).matmul(p);
    let delta_raw = solve_right(&system, &rhs, 0.0)?;
    let delta_applied = apply_regularizer(spec, &delta_raw, &state.w)?;

    let residual_before = frob_norm(&r);
    let w_next = state.w.add(&delta_applied);
    let residual_after = frob_norm(&batch.values().sub(&w_next.matmul(batch.keys())));
    commit_step(state, &delta_applied, &gram(batch.keys()));
    Ok(StepResult {
        delta_raw,
        delta_applied,
        residual_before,
        residual_after,
    })
}

fn finish_plain(
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
