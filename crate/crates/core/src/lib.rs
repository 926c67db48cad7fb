//! Matrix-level simulator for sequential knowledge editing.
//!
//! A linear associative memory is a weight matrix `W: d_out x d_in` that maps
//! key vectors to value vectors, `W k = v`. Editing inserts new (K, V)
//! associations while preserving a reference set (K0, V0). This crate
//! implements the editor update rules at the matrix level, a small dense
//! linear-algebra kernel tuned for their numeric contracts, a knowledge store
//! with conflict resolution, and a seeded experiment harness that measures how
//! far each sequential editor drifts from the joint one-shot solution.
//!
//! Modules:
//! - [`linalg`]: dense matrices, Gram products, right-sided linear solves,
//!   SVD, null-space projectors.
//! - [`knowledge`]: edit batches, the preserved set, an insertion-ordered
//!   knowledge store, and overlap partitioning.
//! - [`editors`]: the update rules (joint, sequential, naive, post-processed,
//!   conflict-resolving) and weight regularizers.
//! - [`harness`]: instance generation, an independent least-squares oracle,
//!   experiment drivers, and the invariant verification suite.
//!
//! With the default `parallel` feature the compute kernels and experiment
//! drivers use rayon; parallelism is restricted to per-element and per-task
//! maps so results are bit-identical to the sequential fallback.

pub mod editors;
pub mod harness;
pub mod knowledge;
pub mod linalg;

/// Installs a global thread pool capped at `n` threads.
///
/// Call once, before any parallel work. Returns false if a pool was already
/// installed (the existing pool stays). Without the `parallel` feature this
/// is a no-op returning true.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> bool {
    true
}
