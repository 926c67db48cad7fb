//! Experiment drivers: editor specifications, alignment modes, and per-step
//! drift metrics against the one-shot batch reference.

use super::{gen::Instance, HarnessError};
use crate::editors::{
    broken_system_matrix, conflict_resolve_step, conflict_system_matrix, error_corrected_step,
    memit_step, memorize_latest_broken_step, memorize_latest_step, memorize_latest_system_matrix,
    naive_step, naive_step_with, naive_system_matrix, ote_update, se_step, se_system_matrix,
    uncorrected_step, EditError, EditorState, RegularizerSpec,
};
use crate::knowledge::{
    partition_overlap, EditBatch, KnowledgeStore, PreservedSet, ResolvePolicy,
};
use crate::linalg::{
    frob_norm, gram, nullspace_projector, rel_err, svd, Matrix, DEFAULT_RANK_TOL,
};
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Projector fed to the solvers that accept one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorChoice {
    Identity,
    /// Projector onto the null space of the preserved keys.
    Nullspace,
}

impl ProjectorChoice {
    pub fn build(self, preserved: &PreservedSet) -> Result<Matrix, HarnessError> {
        match self {
            ProjectorChoice::Identity => Ok(Matrix::identity(preserved.keys.rows())),
            ProjectorChoice::Nullspace => nullspace_projector(&preserved.keys, DEFAULT_RANK_TOL)
                .map_err(|e| HarnessError::Edit(e.into())),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProjectorChoice::Identity => "identity",
            ProjectorChoice::Nullspace => "nullspace",
        }
    }
}

/// Which update rule drives the run.
#[derive(Debug, Clone, PartialEq)]
pub enum EditorKind {
    /// Accumulated-gram solve, no projector, no ridge.
    Memit,
    /// Accumulated-gram solve through the null-space projector, unit ridge.
    AlphaEdit,
    /// Error-corrected stepping with singular-value clipping.
    Prune,
    /// Error-corrected stepping keeping a fraction of delta entries.
    Rect { rho: f64 },
    /// Memoryless: fits preserved set plus newest batch only.
    MemorizeLatest,
    /// Truncated memoryless variant that drops the preserved gram.
    MemorizeLatestBroken,
    /// Store-backed editing with overlap resolution.
    Conflict { policy: ResolvePolicy },
}

impl EditorKind {
    fn regularizer(&self) -> RegularizerSpec {
        match self {
            EditorKind::Prune => RegularizerSpec::Prune,
            EditorKind::Rect { rho } => RegularizerSpec::Rect { rho: *rho },
            _ => RegularizerSpec::Identity,
        }
    }

    fn default_projector(&self) -> ProjectorChoice {
        match self {
            EditorKind::AlphaEdit | EditorKind::MemorizeLatestBroken => ProjectorChoice::Nullspace,
            _ => ProjectorChoice::Identity,
        }
    }

    fn default_lambda(&self) -> f64 {
        match self {
            EditorKind::AlphaEdit | EditorKind::MemorizeLatestBroken => 1.0,
            _ => 0.0,
        }
    }

    fn default_label(&self) -> String {
        match self {
            EditorKind::Memit => "memit".into(),
            EditorKind::AlphaEdit => "alphaedit".into(),
            EditorKind::Prune => "prune".into(),
            EditorKind::Rect { rho } => format!("rect({rho})"),
            EditorKind::MemorizeLatest => "memorize_latest".into(),
            EditorKind::MemorizeLatestBroken => "memorize_latest_broken".into(),
            EditorKind::Conflict { .. } => "conflict".into(),
        }
    }
}

/// A fully parameterized editor arm. `projector` and `lambda` are honoured
/// by the accumulated-gram family (and the projector by the truncated
/// memoryless variant); the other editors fix them structurally.
#[derive(Debug, Clone, PartialEq)]
pub struct EditorSpec {
    pub kind: EditorKind,
    pub projector: ProjectorChoice,
    pub lambda: f64,
    /// Name written to the `editor` metrics column.
    pub label: String,
}

impl EditorSpec {
    pub fn new(kind: EditorKind) -> Self {
        let projector = kind.default_projector();
        let lambda = kind.default_lambda();
        let label = kind.default_label();
        Self {
            kind,
            projector,
            lambda,
            label,
        }
    }
}

/// Which trajectory discipline the run follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    /// Full bookkeeping: accumulated grams plus error correction.
    Aligned,
    /// Regularized stepping without the correction debt.
    NoErrCorrection,
    /// Single-batch solves that forget prior edits.
    NotAligned,
}

impl AlignmentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AlignmentMode::Aligned => "aligned",
            AlignmentMode::NoErrCorrection => "no_err_correction",
            AlignmentMode::NotAligned => "not_aligned",
        }
    }
}

/// One metrics row per (editor, step).
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub editor: String,
    /// rel_err of (cumulative delta + this step's raw delta) against the
    /// one-shot batch solution over batches 1..step.
    pub dev_from_ote: f64,
    /// `‖W_t K0 − V0‖_F / ‖V0‖_F`
    pub preserved_residual: f64,
    /// Post-step batch fit, relative to the batch value norm.
    pub edit_residual: f64,
    /// `σ_max / σ_min` of the step's system matrix.
    pub gram_cond_estimate: f64,
    /// `σ_max(W_t)` after the step.
    pub w_max_singular: f64,
}

/// Store holding the preserved columns under reserved ids, the starting
/// point for conflict-resolving runs.
pub fn seed_conflict_store(preserved: &PreservedSet) -> KnowledgeStore {
    let d_in = preserved.keys.rows();
    let d_out = preserved.values.rows();
    let mut store = KnowledgeStore::new(d_in, d_out);
    for j in 0..preserved.keys.cols() {
        let key: Vec<f64> = (0..d_in).map(|i| preserved.keys.get(i, j)).collect();
        let value: Vec<f64> = (0..d_out).map(|i| preserved.values.get(i, j)).collect();
        store
            .insert(&format!("preserved/{j}"), key, value)
            .expect("preserved columns match store dimensions");
    }
    store
}

fn step_err(step: usize) -> impl Fn(EditError) -> HarnessError {
    move |source| HarnessError::Step { step, source }
}

/// Runs `spec` over the instance's batches and returns the per-step metrics.
pub fn run_experiment(
    instance: &Instance,
    spec: &EditorSpec,
    mode: AlignmentMode,
) -> Result<Vec<MetricsRecord>, HarnessError> {
    run_experiment_full(instance, spec, mode).map(|(records, _)| records)
}

/// [`run_experiment`] exposing the final editor state for invariant checks.
pub fn run_experiment_full(
    instance: &Instance,
    spec: &EditorSpec,
    mode: AlignmentMode,
) -> Result<(Vec<MetricsRecord>, EditorState), HarnessError> {
    let task_editor = matches!(
        spec.kind,
        EditorKind::MemorizeLatest | EditorKind::MemorizeLatestBroken | EditorKind::Conflict { .. }
    );
    if task_editor && mode != AlignmentMode::Aligned {
        return Err(HarnessError::Config(format!(
            "editor {} defines no {} trajectory",
            spec.label,
            mode.as_str()
        )));
    }

    let preserved = &instance.preserved;
    let p = spec.projector.build(preserved)?;
    let identity = Matrix::identity(instance.w0.cols());
    // the batch reference the drift metric is measured against
    let (ref_p, ref_lambda): (&Matrix, f64) = match spec.kind {
        EditorKind::Memit | EditorKind::AlphaEdit => (&p, spec.lambda),
        _ => (&identity, 0.0),
    };
    let reg = spec.kind.regularizer();
    let mut state = EditorState::new(instance.w0.clone(), preserved)?;
    let mut store = match spec.kind {
        EditorKind::Conflict { .. } => Some(seed_conflict_store(preserved)),
        _ => None,
    };

    let mut records = Vec::with_capacity(instance.batches.len());
    for (i, batch) in instance.batches.iter().enumerate() {
        let step = i + 1;
        let system = build_system(&state, preserved, batch, spec, mode, &p, &identity, store.as_ref())
            .map_err(step_err(step))?;
        let cum_prev = state.cum_delta.clone();

        let result = match (&spec.kind, mode) {
            (EditorKind::Memit, AlignmentMode::Aligned)
                if spec.projector == ProjectorChoice::Identity && spec.lambda == 0.0 =>
            {
                memit_step(&mut state, preserved, batch)
            }
            (
                EditorKind::Memit | EditorKind::AlphaEdit,
                AlignmentMode::Aligned | AlignmentMode::NoErrCorrection,
            ) => se_step(&mut state, preserved, batch, &p, spec.lambda),
            (EditorKind::Memit | EditorKind::AlphaEdit, AlignmentMode::NotAligned) => {
                naive_step(&mut state, preserved, batch, &p, spec.lambda)
            }
            (EditorKind::Prune | EditorKind::Rect { .. }, AlignmentMode::Aligned) => {
                error_corrected_step(&mut state, preserved, batch, reg)
            }
            (EditorKind::Prune | EditorKind::Rect { .. }, AlignmentMode::NoErrCorrection) => {
                uncorrected_step(&mut state, preserved, batch, reg)
            }
            (EditorKind::Prune | EditorKind::Rect { .. }, AlignmentMode::NotAligned) => {
                naive_step_with(&mut state, preserved, batch, &identity, 0.0, reg)
            }
            (EditorKind::MemorizeLatest, _) => {
                let prev = if i == 0 {
                    None
                } else {
                    Some(&instance.batches[i - 1])
                };
                memorize_latest_step(&mut state, preserved, batch, prev)
            }
            (EditorKind::MemorizeLatestBroken, _) => {
                memorize_latest_broken_step(&mut state, preserved, batch, &p)
            }
            (EditorKind::Conflict { policy }, _) => conflict_resolve_step(
                &mut state,
                store.as_mut().expect("conflict store seeded"),
                batch,
                *policy,
            ),
        }
        .map_err(step_err(step))?;

        let reference = ote_update(
            &instance.w0,
            preserved,
            &instance.batches[..=i],
            ref_p,
            ref_lambda,
        )
        .map_err(step_err(step))?;
        let dev_from_ote = rel_err(&cum_prev.add(&result.delta_raw), &reference)
            .map_err(|e| step_err(step)(e.into()))?;

        let sys = svd(&system).map_err(|e| step_err(step)(e.into()))?;
        let smax = sys.s.first().copied().unwrap_or(0.0);
        let smin = sys.s.last().copied().unwrap_or(0.0);
        let gram_cond_estimate = smax / smin.max(1e-300);
        let w_dec = svd(&state.w).map_err(|e| step_err(step)(e.into()))?;

        let preserved_residual = frob_norm(&state.w.matmul(&preserved.keys).sub(&preserved.values))
            / frob_norm(&preserved.values).max(1e-30);
        let edit_residual = result.residual_after / frob_norm(batch.values()).max(1e-30);

        records.push(MetricsRecord {
            step,
            editor: spec.label.clone(),
            dev_from_ote,
            preserved_residual,
            edit_residual,
            gram_cond_estimate,
            w_max_singular: w_dec.s.first().copied().unwrap_or(0.0),
        });
    }
    Ok((records, state))
}

/// The system matrix the step about to run will factorize, for conditioning
/// diagnostics. Mirrors the dispatch in [`run_experiment_full`].
#[allow(clippy::too_many_arguments)]
fn build_system(
    state: &EditorState,
    preserved: &PreservedSet,
    batch: &EditBatch,
    spec: &EditorSpec,
    mode: AlignmentMode,
    p: &Matrix,
    identity: &Matrix,
    store: Option<&KnowledgeStore>,
) -> Result<Matrix, EditError> {
    Ok(match (&spec.kind, mode) {
        (EditorKind::Memit, AlignmentMode::Aligned)
            if spec.projector == ProjectorChoice::Identity && spec.lambda == 0.0 =>
        {
            state.gram_acc.add(&gram(batch.keys()))
        }
        (
            EditorKind::Memit | EditorKind::AlphaEdit,
            AlignmentMode::Aligned | AlignmentMode::NoErrCorrection,
        ) => se_system_matrix(state, batch, p, spec.lambda),
        (EditorKind::Memit | EditorKind::AlphaEdit, AlignmentMode::NotAligned) => {
            naive_system_matrix(preserved, batch, p, spec.lambda)
        }
        (
            EditorKind::Prune | EditorKind::Rect { .. },
            AlignmentMode::Aligned | AlignmentMode::NoErrCorrection,
        ) => state.gram_acc.add(&gram(batch.keys())),
        (EditorKind::Prune | EditorKind::Rect { .. }, AlignmentMode::NotAligned) => {
            naive_system_matrix(preserved, batch, identity, 0.0)
        }
        (EditorKind::MemorizeLatest, _) => memorize_latest_system_matrix(preserved, batch),
        (EditorKind::MemorizeLatestBroken, _) => broken_system_matrix(batch, p),
        (EditorKind::Conflict { policy }, _) => {
            let store = store.expect("conflict store seeded");
            let partition = partition_overlap(store, batch, *policy)?;
            conflict_system_matrix(store, batch, &partition)
        }
    })
}

/// One labelled (editor, alignment) pairing for side-by-side runs.
#[derive(Debug, Clone)]
pub struct ArmSpec {
    pub editor: EditorSpec,
    pub alignment: AlignmentMode,
    pub label: String,
}

impl ArmSpec {
    pub fn new(editor: EditorSpec, alignment: AlignmentMode) -> Self {
        let label = format!("{}:{}", editor.label, alignment.as_str());
        Self {
            editor,
            alignment,
            label,
        }
    }
}

/// Comparison row: the drift metrics of one arm at one step.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRow {
    pub arm: String,
    pub step: usize,
    pub dev_from_ote: f64,
    pub preserved_residual: f64,
}

/// Runs each arm over the same instance and returns rows ordered by
/// (arm position, step). Arms are independent, so they run in parallel when
/// the `parallel` feature is on; the output order is identical either way.
pub fn compare_arms(
    instance: &Instance,
    arms: &[ArmSpec],
) -> Result<Vec<ComparisonRow>, HarnessError> {
    if arms.len() < 2 {
        return Err(HarnessError::Config(format!(
            "comparison needs at least two arms, got {}",
            arms.len()
        )));
    }
    #[cfg(feature = "parallel")]
    let results: Vec<Result<Vec<MetricsRecord>, HarnessError>> = arms
        .par_iter()
        .map(|arm| run_experiment(instance, &arm.editor, arm.alignment))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<Vec<MetricsRecord>, HarnessError>> = arms
        .iter()
        .map(|arm| run_experiment(instance, &arm.editor, arm.alignment))
        .collect();

    let mut rows = Vec::new();
    for (arm, result) in arms.iter().zip(results) {
        for record in result? {
            rows.push(ComparisonRow {
                arm: arm.label.clone(),
                step: record.step,
                dev_from_ote: record.dev_from_ote,
                preserved_residual: record.preserved_residual,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::gen::{gen_instance, InstanceConfig};

    fn default_instance() -> Instance {
        gen_instance(&InstanceConfig::default()).unwrap()
    }

    #[test]
    fn memit_aligned_tracks_the_batch_reference() {
        let inst = default_instance();
        let records = run_experiment(
            &inst,
            &EditorSpec::new(EditorKind::Memit),
            AlignmentMode::Aligned,
        )
        .unwrap();
        assert_eq!(records.len(), 20);
        for r in &records {
            assert!(r.dev_from_ote <= 1e-6, "step {}: dev {}", r.step, r.dev_from_ote);
            // the step is a least-squares tradeoff over all history, not an
            // interpolation of the batch, so the fit is good but not exact
            assert!(r.edit_residual < 1.0, "step {}: edit {}", r.step, r.edit_residual);
        }
    }

    #[test]
    fn zero_perturbation_keeps_all_drift_metrics_at_zero() {
        let inst = gen_instance(&InstanceConfig {
            value_perturbation: 0.0,
            ..InstanceConfig::default()
        })
        .unwrap();
        for kind in [EditorKind::Memit, EditorKind::AlphaEdit, EditorKind::MemorizeLatest] {
            let records =
                run_experiment(&inst, &EditorSpec::new(kind), AlignmentMode::Aligned).unwrap();
            for r in &records {
                assert!(r.dev_from_ote <= 1e-10);
                assert!(r.preserved_residual <= 1e-10);
                assert!(r.edit_residual <= 1e-10);
            }
        }
    }

    #[test]
    fn metrics_are_finite_and_non_negative() {
        let inst = default_instance();
        let specs = [
            (EditorSpec::new(EditorKind::Memit), AlignmentMode::NotAligned),
            (EditorSpec::new(EditorKind::AlphaEdit), AlignmentMode::Aligned),
            (EditorSpec::new(EditorKind::Rect { rho: 0.2 }), AlignmentMode::NoErrCorrection),
            (EditorSpec::new(EditorKind::MemorizeLatestBroken), AlignmentMode::Aligned),
        ];
        for (spec, mode) in specs {
            for r in run_experiment(&inst, &spec, mode).unwrap() {
                for v in [
                    r.dev_from_ote,
                    r.preserved_residual,
                    r.edit_residual,
                    r.gram_cond_estimate,
                    r.w_max_singular,
                ] {
                    assert!(v.is_finite() && v >= 0.0, "bad metric {v} at step {}", r.step);
                }
            }
        }
    }

    #[test]
    fn task_editors_reject_other_alignments() {
        let inst = default_instance();
        for kind in [
            EditorKind::MemorizeLatest,
            EditorKind::MemorizeLatestBroken,
            EditorKind::Conflict {
                policy: ResolvePolicy::TakeNew,
            },
        ] {
            let res = run_experiment(&inst, &EditorSpec::new(kind), AlignmentMode::NotAligned);
            assert!(matches!(res, Err(HarnessError::Config(_))));
        }
    }

    #[test]
    fn compare_arms_needs_two_and_is_deterministic() {
        let inst = default_instance();
        let arm = ArmSpec::new(EditorSpec::new(EditorKind::Memit), AlignmentMode::Aligned);
        assert!(compare_arms(&inst, std::slice::from_ref(&arm)).is_err());

        let rows = compare_arms(&inst, &[arm.clone(), arm.clone()]).unwrap();
        assert_eq!(rows.len(), 40);
        for (a, b) in rows[..20].iter().zip(&rows[20..]) {
            assert_eq!(a.step, b.step);
            assert_eq!(a.dev_from_ote.to_bits(), b.dev_from_ote.to_bits());
            assert_eq!(a.preserved_residual.to_bits(), b.preserved_residual.to_bits());
        }
    }

    #[test]
    fn empty_batch_list_gives_empty_table() {
        let mut inst = default_instance();
        inst.batches.clear();
        let arms = [
            ArmSpec::new(EditorSpec::new(EditorKind::Memit), AlignmentMode::Aligned),
            ArmSpec::new(EditorSpec::new(EditorKind::AlphaEdit), AlignmentMode::Aligned),
        ];
        assert!(compare_arms(&inst, &arms).unwrap().is_empty());
    }

    #[test]
    fn conflict_arm_runs_with_overlap() {
        let inst = gen_instance(&InstanceConfig {
            overlap_fraction: 0.5,
            ..InstanceConfig::default()
        })
        .unwrap();
        let spec = EditorSpec::new(EditorKind::Conflict {
            policy: ResolvePolicy::TakeNew,
        });
        let records = run_experiment(&inst, &spec, AlignmentMode::Aligned).unwrap();
        assert_eq!(records.len(), 20);
        for r in &records {
            // resolved targets are fit in the least-squares sense alongside
            // the whole committed store
            assert!(r.edit_residual < 1.0, "step {}: edit {}", r.step, r.edit_residual);
        }
    }
}
