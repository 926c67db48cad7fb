//! Conflict-aware sequential editing against a knowledge store.
//!
//! The store holds everything the weights must keep answering correctly,
//! preserved knowledge and committed edits alike; callers seed it with the
//! preserved columns before the first step. Ids edited twice are resolved by
//! policy before solving; the update both retargets the re-edited keys and
//! releases their stale stored values, so the weights land on the exact fit
//! of the store as committed.

use super::{commit_step, empty_step, EditError, EditorState, StepResult};
use crate::knowledge::{
    commit, partition_overlap, EditBatch, KnowledgeStore, OverlapPartition, ResolvePolicy,
};
use crate::linalg::{frob_norm, gram, solve_right, Matrix};

/// System matrix for a conflict-resolving step, built from the store as it
/// stands before the commit:
///
/// `K_store K_storeᵀ + K_t K_tᵀ − K_ov K_ovᵀ`
///
/// Subtracting the overlap gram cancels the double count between the store
/// and the incoming batch, so every key direction is constrained once.
pub fn conflict_system_matrix(
    store: &KnowledgeStore,
    batch: &EditBatch,
    partition: &OverlapPartition,
) -> Matrix {
    let (k_store, _) = store.stack();
    gram(&k_store)
        .add(&gram(batch.keys()))
        .sub(&gram(partition.resolved_overlap.keys()))
}

/// One conflict-resolving step. Solves
///
/// `Δ_t · A = (V_t* − W K_t) K_tᵀ − (V_ov^old − W K_ov) K_ovᵀ`
///
/// where `V_t*` carries the post-policy targets, `V_ov^old` the values the
/// overlap ids held in the store, and `A` is [`conflict_system_matrix`].
/// The batch is then committed to the store. With no overlap both
/// correction terms are exactly zero and the step is the plain sequential
/// solve over store plus batch.
pub fn conflict_resolve_step(
    state: &mut EditorState,
    store: &mut KnowledgeStore,
    batch: &EditBatch,
    policy: ResolvePolicy,
) -> Result<StepResult, EditError> {
    if batch.is_empty() {
        return Ok(empty_step(state));
    }
    let partition = partition_overlap(store, batch, policy)?;
    let system = conflict_system_matrix(store, batch, &partition);

    // batch targets after policy resolution, in batch column order
    let mut v_target = batch.values().clone();
    for j in 0..batch.len() {
        let id = &batch.ids()[j];
        if let Some((_, stored_value)) = store.get(id) {
            if policy == ResolvePolicy::TakeOld {
                for i in 0..v_target.rows() {
                    v_target.set(i, j, stored_value[i]);
                }
            }
        }
    }

    let r = v_target.sub(&state.w.matmul(batch.keys()));
    let k_ov = partition.resolved_overlap.keys();
    let stale = partition
        .prior_values
        .sub(&state.w.matmul(k_ov))
        .matmul(&k_ov.transpose());
    let rhs = r.matmul(&batch.keys().transpose()).sub(&stale);
    let delta = solve_right(&system, &rhs, 0.0)?;

    let residual_before = frob_norm(&r);
    let w_next = state.w.add(&delta);
    let residual_after = frob_norm(&v_target.sub(&w_next.matmul(batch.keys())));

    commit(store, &partition)?;
    commit_step(state, &delta, &gram(batch.keys()));
    Ok(StepResult {
        delta_raw: delta.clone(),
        delta_applied: delta,
        residual_before,
        residual_after,
    })
}
