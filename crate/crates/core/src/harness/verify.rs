//! Self-check suite: re-derives the central identities on freshly generated
//! instances and reports one row per invariant.

use super::gen::{gen_instance, Instance, InstanceConfig};
use super::oracle::oracle_ols;
use super::HarnessError;
use crate::editors::{
    error_corrected_step, mem_latest_delta_form1, mem_latest_delta_form2, memorize_latest_step,
    naive_step, ote_update, se_step, se_system_matrix, EditError, EditorState, RegularizerSpec,
};
use crate::harness::experiment::seed_conflict_store;
use crate::knowledge::ResolvePolicy;
use crate::linalg::{
    frob_norm, nullspace_projector, rel_err, LinalgError, Matrix, DEFAULT_RANK_TOL,
};

/// Deliberate defect wired into the suite to prove it can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultInjection {
    /// Replace the history-aware solver with the single-batch one; the
    /// equivalence check must then report a failure.
    DropHistory,
}

/// Outcome of one invariant across all trials.
#[derive(Debug, Clone)]
pub struct InvariantReport {
    pub name: &'static str,
    pub passed: bool,
    /// Largest relative error observed across trials (0 when nothing
    /// completed, e.g. every combination was asserted singular).
    pub worst: f64,
    pub detail: String,
}

/// Runs every invariant over `trials` instances seeded `seed + i` and returns
/// the reports in a fixed order. `fault` deliberately breaks the equivalence
/// check so its failure path stays honest.
pub fn run_verification(
    seed: u64,
    trials: usize,
    fault: Option<FaultInjection>,
) -> Result<Vec<InvariantReport>, HarnessError> {
    if trials == 0 {
        return Err(HarnessError::Config("trials must be at least 1".into()));
    }
    Ok(vec![
        check_ote_se(seed, trials, fault),
        check_oracle_triangle(seed, trials),
        check_alignment(seed, trials),
        check_latest_forms(seed, trials),
        check_conflict(seed, trials),
        check_stationarity(seed, trials),
    ])
}

fn trial_config(seed: u64, i: usize) -> InstanceConfig {
    InstanceConfig {
        seed: seed.wrapping_add(i as u64),
        ..InstanceConfig::default()
    }
}

fn fail(name: &'static str, worst: f64, detail: String) -> InvariantReport {
    InvariantReport {
        name,
        passed: false,
        worst,
        detail,
    }
}

enum ComboOutcome {
    Completed(f64),
    /// The factorization aborted on a singular system, which the combination
    /// is expected to do when the projected gram cannot reach full rank.
    Singular,
    Unexpected(String),
}

fn run_se_vs_reference(
    inst: &Instance,
    p: &Matrix,
    lambda: f64,
    drop_history: bool,
) -> ComboOutcome {
    let mut state = match EditorState::new(inst.w0.clone(), &inst.preserved) {
        Ok(s) => s,
        Err(e) => return ComboOutcome::Unexpected(e.to_string()),
    };
    let mut worst = 0.0f64;
    for (i, batch) in inst.batches.iter().enumerate() {
        let stepped = if drop_history {
            naive_step(&mut state, &inst.preserved, batch, p, lambda)
        } else {
            se_step(&mut state, &inst.preserved, batch, p, lambda)
        };
        match stepped {
            Ok(_) => {}
            Err(EditError::Linalg(LinalgError::SingularMatrix { .. })) => {
                return ComboOutcome::Singular
            }
            Err(e) => return ComboOutcome::Unexpected(e.to_string()),
        }
        let reference = match ote_update(&inst.w0, &inst.preserved, &inst.batches[..=i], p, lambda)
        {
            Ok(m) => m,
            Err(e) => {
                // the reference factorizes the same matrix the step just
                // solved, so it cannot fail once the step succeeded
                return ComboOutcome::Unexpected(format!(
                    "reference solve failed after step {} succeeded: {e}",
                    i + 1
                ));
            }
        };
        let dev = rel_err(&state.cum_delta, &reference).unwrap_or(f64::INFINITY);
        worst = worst.max(dev);
    }
    ComboOutcome::Completed(worst)
}

/// Sequential stepping lands on the one-shot batch solution for every
/// projector/ridge combination, on a full-rank and a rank-deficient instance.
/// Combinations whose system cannot be full rank must abort as singular.
fn check_ote_se(seed: u64, trials: usize, fault: Option<FaultInjection>) -> InvariantReport {
    const NAME: &str = "ote-se-equivalence";
    let drop_history = matches!(fault, Some(FaultInjection::DropHistory));
    let mut worst = 0.0f64;
    let (mut completed, mut singular) = (0usize, 0usize);
    for i in 0..trials {
        let base = trial_config(seed, i);
        let configs = [
            base.clone(),
            InstanceConfig {
                n_preserved: 8,
                n_steps: 8,
                ..base
            },
        ];
        for cfg in &configs {
            let inst = match gen_instance(cfg) {
                Ok(inst) => inst,
                Err(e) => return fail(NAME, worst, format!("seed {}: {e}", cfg.seed)),
            };
            let identity = Matrix::identity(cfg.d_in);
            let null_p = match nullspace_projector(&inst.preserved.keys, DEFAULT_RANK_TOL) {
                Ok(p) => p,
                Err(e) => return fail(NAME, worst, format!("seed {}: projector: {e}", cfg.seed)),
            };
            for (p, p_name) in [(&identity, "identity"), (&null_p, "nullspace")] {
                for lambda in [0.0, 0.1, 1.0] {
                    match run_se_vs_reference(&inst, p, lambda, drop_history) {
                        ComboOutcome::Completed(dev) => {
                            completed += 1;
                            worst = worst.max(dev);
                            if dev > 1e-6 {
                                return fail(
                                    NAME,
                                    worst,
                                    format!(
                                        "seed {} m={} projector={p_name} lambda={lambda}: \
                                         dev {dev:.3e} exceeds 1e-6",
                                        cfg.seed, cfg.n_preserved
                                    ),
                                );
                            }
                        }
                        ComboOutcome::Singular => singular += 1,
                        ComboOutcome::Unexpected(msg) => {
                            return fail(
                                NAME,
                                worst,
                                format!(
                                    "seed {} m={} projector={p_name} lambda={lambda}: {msg}",
                                    cfg.seed, cfg.n_preserved
                                ),
                            )
                        }
                    }
                }
            }
        }
    }
    InvariantReport {
        name: NAME,
        passed: true,
        worst,
        detail: format!("{completed} combos converged, {singular} asserted singular"),
    }
}

/// The one-shot solver, the SVD pseudo-inverse oracle, and the summed
/// sequential deltas agree pairwise for each ridge.
fn check_oracle_triangle(seed: u64, trials: usize) -> InvariantReport {
    const NAME: &str = "oracle-triangle";
    let mut worst = 0.0f64;
    for i in 0..trials {
        let cfg = trial_config(seed, i);
        let inst = match gen_instance(&cfg) {
            Ok(inst) => inst,
            Err(e) => return fail(NAME, worst, format!("seed {}: {e}", cfg.seed)),
        };
        let identity = Matrix::identity(cfg.d_in);
        let mut key_parts: Vec<&Matrix> = vec![&inst.preserved.keys];
        let mut value_parts: Vec<&Matrix> = vec![&inst.preserved.values];
        for b in &inst.batches {
            key_parts.push(b.keys());
            value_parts.push(b.values());
        }
        let k_all = Matrix::hstack(&key_parts);
        let v_all = Matrix::hstack(&value_parts);

        for lambda in [0.0, 0.1, 1.0] {
            let closed =
                match ote_update(&inst.w0, &inst.preserved, &inst.batches, &identity, lambda) {
                    Ok(m) => m,
                    Err(e) => {
                        return fail(NAME, worst, format!("seed {} lambda={lambda}: {e}", cfg.seed))
                    }
                };
            let pinv = match oracle_ols(&inst.w0, &k_all, &v_all, lambda) {
                Ok(m) => m,
                Err(e) => {
                    return fail(
                        NAME,
                        worst,
                        format!("seed {} lambda={lambda}: oracle: {e}", cfg.seed),
                    )
                }
            };
            let summed = match run_se_vs_reference(&inst, &identity, lambda, false) {
                ComboOutcome::Completed(_) => {
                    // rerun to keep this function simple: the trajectory is
                    // deterministic, so rebuilding the state is exact
                    let mut state = EditorState::new(inst.w0.clone(), &inst.preserved)
                        .expect("shapes validated by the generator");
                    for batch in &inst.batches {
                        se_step(&mut state, &inst.preserved, batch, &identity, lambda)
                            .expect("combo completed above");
                    }
                    state.cum_delta
                }
                ComboOutcome::Singular => {
                    return fail(
                        NAME,
                        worst,
                        format!(
                            "seed {} lambda={lambda}: unexpectedly singular on a full-rank instance",
                            cfg.seed
                        ),
                    )
                }
                ComboOutcome::Unexpected(msg) => {
                    return fail(NAME, worst, format!("seed {} lambda={lambda}: {msg}", cfg.seed))
                }
            };
            for (a, b, pair) in [
                (&closed, &pinv, "closed-vs-pinv"),
                (&summed, &closed, "summed-vs-closed"),
                (&summed, &pinv, "summed-vs-pinv"),
            ] {
                let dev = rel_err(a, b).unwrap_or(f64::INFINITY);
                worst = worst.max(dev);
                if dev > 1e-6 {
                    return fail(
                        NAME,
                        worst,
                        format!(
                            "seed {} lambda={lambda} {pair}: dev {dev:.3e} exceeds 1e-6",
                            cfg.seed
                        ),
                    );
                }
            }
        }
    }
    InvariantReport {
        name: NAME,
        passed: true,
        worst,
        detail: format!("3 routes agree for 3 ridges over {trials} trials"),
    }
}

/// Error-corrected stepping stays aligned with the plain one-shot reference
/// for every regularizer: before applying the shaped delta, the raw solve
/// plus the accumulated weights equals the reference exactly.
fn check_alignment(seed: u64, trials: usize) -> InvariantReport {
    const NAME: &str = "alg1-alignment";
    let regs = [
        (RegularizerSpec::Identity, "identity"),
        (RegularizerSpec::Prune, "prune"),
        (RegularizerSpec::Rect { rho: 0.8 }, "rect(0.8)"),
        (RegularizerSpec::Rect { rho: 0.2 }, "rect(0.2)"),
        (RegularizerSpec::Rect { rho: 0.0 }, "rect(0)"),
    ];
    let mut worst = 0.0f64;
    for i in 0..trials {
        let cfg = trial_config(seed, i);
        let inst = match gen_instance(&cfg) {
            Ok(inst) => inst,
            Err(e) => return fail(NAME, worst, format!("seed {}: {e}", cfg.seed)),
        };
        let identity = Matrix::identity(cfg.d_in);
        for (reg, reg_name) in regs {
            let mut state = match EditorState::new(inst.w0.clone(), &inst.preserved) {
                Ok(s) => s,
                Err(e) => return fail(NAME, worst, format!("seed {}: {e}", cfg.seed)),
            };
            for (t, batch) in inst.batches.iter().enumerate() {
                let cum_prev = state.cum_delta.clone();
                let result = match error_corrected_step(&mut state, &inst.preserved, batch, reg) {
                    Ok(r) => r,
                    Err(e) => {
                        return fail(
                            NAME,
                            worst,
                            format!("seed {} reg={reg_name} step {}: {e}", cfg.seed, t + 1),
                        )
                    }
                };
                let reference = match ote_update(
                    &inst.w0,
                    &inst.preserved,
                    &inst.batches[..=t],
                    &identity,
                    0.0,
                ) {
                    Ok(m) => m,
                    Err(e) => {
                        return fail(
                            NAME,
                            worst,
                            format!("seed {} reg={reg_name} step {}: {e}", cfg.seed, t + 1),
                        )
                    }
                };
                let dev = rel_err(&cum_prev.add(&result.delta_raw), &reference)
                    .unwrap_or(f64::INFINITY);
                worst = worst.max(dev);
                if dev > 1e-6 {
                    return fail(
                        NAME,
                        worst,
                        format!(
                            "seed {} reg={reg_name} step {}: dev {dev:.3e} exceeds 1e-6",
                            cfg.seed,
                            t + 1
                        ),
                    );
                }
            }
        }
    }
    InvariantReport {
        name: NAME,
        passed: true,
        worst,
        detail: format!("5 regularizers aligned over {trials} trials"),
    }
}

/// The recursive and anchored memoryless deltas coincide from the second
/// step on.
fn check_latest_forms(seed: u64, trials: usize) -> InvariantReport {
    const NAME: &str = "memorize-latest-forms";
    let mut worst = 0.0f64;
    for i in 0..trials {
        let cfg = trial_config(seed, i);
        let inst = match gen_instance(&cfg) {
            Ok(inst) => inst,
            Err(e) => return fail(NAME, worst, format!("seed {}: {e}", cfg.seed)),
        };
        let mut state = match EditorState::new(inst.w0.clone(), &inst.preserved) {
            Ok(s) => s,
            Err(e) => return fail(NAME, worst, format!("seed {}: {e}", cfg.seed)),
        };
        for (t, batch) in inst.batches.iter().enumerate() {
            if t > 0 {
                let prev = &inst.batches[t - 1];
                let recursive = mem_latest_delta_form1(&state.w, &inst.preserved, batch, prev);
                let anchored = mem_latest_delta_form2(&state.w, &inst.preserved, batch);
                match (recursive, anchored) {
                    (Ok(a), Ok(b)) => {
                        let dev = rel_err(&a, &b).unwrap_or(f64::INFINITY);
                        worst = worst.max(dev);
                        if dev > 1e-6 {
                            return fail(
                                NAME,
                                worst,
                                format!(
                                    "seed {} step {}: forms differ by {dev:.3e}",
                                    cfg.seed,
                                    t + 1
                                ),
                            );
                        }
                    }
                    (Err(e), _) | (_, Err(e)) => {
                        return fail(NAME, worst, format!("seed {} step {}: {e}", cfg.seed, t + 1))
                    }
                }
            }
            let prev = if t == 0 { None } else { Some(&inst.batches[t - 1]) };
            if let Err(e) = memorize_latest_step(&mut state, &inst.preserved, batch, prev) {
                return fail(NAME, worst, format!("seed {} step {}: {e}", cfg.seed, t + 1));
            }
        }
    }
    InvariantReport {
        name: NAME,
        passed: true,
        worst,
        detail: format!("forms agree from step 2 on over {trials} trials"),
    }
}

/// After a full conflict-resolving run, the weights are exactly the
/// least-squares fit of the committed store, checked against the
/// pseudo-inverse oracle.
fn check_conflict(seed: u64, trials: usize) -> InvariantReport {
    const NAME: &str = "conflict-brute-force";
    let mut worst = 0.0f64;
    for i in 0..trials {
        let cfg = InstanceConfig {
            overlap_fraction: 0.5,
            ..trial_config(seed, i)
        };
        let inst = match gen_instance(&cfg) {
            Ok(inst) => inst,
            Err(e) => return fail(NAME, worst, format!("seed {}: {e}", cfg.seed)),
        };
        let mut state = match EditorState::new(inst.w0.clone(), &inst.preserved) {
            Ok(s) => s,
            Err(e) => return fail(NAME, worst, format!("seed {}: {e}", cfg.seed)),
        };
        let mut store = seed_conflict_store(&inst.preserved);
        for (t, batch) in inst.batches.iter().enumerate() {
            if let Err(e) = crate::editors::conflict_resolve_step(
                &mut state,
                &mut store,
                batch,
                ResolvePolicy::TakeNew,
            ) {
                return fail(NAME, worst, format!("seed {} step {}: {e}", cfg.seed, t + 1));
            }
        }
        let (k_store, v_store) = store.stack();
        let direct = match oracle_ols(&inst.w0, &k_store, &v_store, 0.0) {
            Ok(m) => m,
            Err(e) => return fail(NAME, worst, format!("seed {}: oracle: {e}", cfg.seed)),
        };
        let dev = rel_err(&state.w, &inst.w0.add(&direct)).unwrap_or(f64::INFINITY);
        worst = worst.max(dev);
        if dev > 1e-6 {
            return fail(
                NAME,
                worst,
                format!("seed {}: final weights deviate by {dev:.3e}", cfg.seed),
            );
        }
    }
    InvariantReport {
        name: NAME,
        passed: true,
        worst,
        detail: format!("final weights match the store fit over {trials} trials"),
    }
}

/// Every raw delta satisfies the normal equation it was solved from:
/// `Δ · A = rhs` up to factorization roundoff.
fn check_stationarity(seed: u64, trials: usize) -> InvariantReport {
    const NAME: &str = "stationarity";
    let mut worst = 0.0f64;
    for i in 0..trials {
        let cfg = trial_config(seed, i);
        let inst = match gen_instance(&cfg) {
            Ok(inst) => inst,
            Err(e) => return fail(NAME, worst, format!("seed {}: {e}", cfg.seed)),
        };
        let identity = Matrix::identity(cfg.d_in);
        let null_p = match nullspace_projector(&inst.preserved.keys, DEFAULT_RANK_TOL) {
            Ok(p) => p,
            Err(e) => return fail(NAME, worst, format!("seed {}: projector: {e}", cfg.seed)),
        };
        for (p, lambda, arm) in [(&identity, 0.0, "plain"), (&null_p, 1.0, "projected")] {
            let mut state = match EditorState::new(inst.w0.clone(), &inst.preserved) {
                Ok(s) => s,
                Err(e) => return fail(NAME, worst, format!("seed {}: {e}", cfg.seed)),
            };
            for (t, batch) in inst.batches.iter().enumerate() {
                let system = se_system_matrix(&state, batch, p, lambda);
                let r = batch.values().sub(&state.w.matmul(batch.keys()));
                let rhs = r.matmul(&batch.keys().transpose()).matmul(p);
                let result = match se_step(&mut state, &inst.preserved, batch, p, lambda) {
                    Ok(r) => r,
                    Err(e) => {
                        return fail(
                            NAME,
                            worst,
                            format!("seed {} {arm} step {}: {e}", cfg.seed, t + 1),
                        )
                    }
                };
                let res = frob_norm(&result.delta_raw.matmul(&system).sub(&rhs))
                    / frob_norm(&rhs).max(1e-30);
                worst = worst.max(res);
                if res > 1e-8 {
                    return fail(
                        NAME,
                        worst,
                        format!(
                            "seed {} {arm} step {}: residual {res:.3e} exceeds 1e-8",
                            cfg.seed,
                            t + 1
                        ),
                    );
                }
            }
        }
    }
    InvariantReport {
        name: NAME,
        passed: true,
        worst,
        detail: format!("normal equations hold over {trials} trials"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_run_passes_every_invariant() {
        let reports = run_verification(7, 2, None).unwrap();
        assert_eq!(reports.len(), 6);
        for r in &reports {
            assert!(r.passed, "{} failed: {}", r.name, r.detail);
        }
    }

    #[test]
    fn injected_fault_fails_the_equivalence_check_only() {
        let reports = run_verification(7, 1, Some(FaultInjection::DropHistory)).unwrap();
        let broken = reports.iter().find(|r| r.name == "ote-se-equivalence").unwrap();
        assert!(!broken.passed, "fault injection must surface in the report");
        for r in reports.iter().filter(|r| r.name != "ote-se-equivalence") {
            assert!(r.passed, "{} should be unaffected by the fault", r.name);
        }
    }

    #[test]
    fn zero_trials_is_a_config_error() {
        assert!(matches!(
            run_verification(7, 0, None),
            Err(HarnessError::Config(_))
        ));
    }
}
