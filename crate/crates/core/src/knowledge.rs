//! Keyed knowledge: batches of (id, key, value) triples, the preserved set,
//! and an insertion-ordered store with overlap partitioning.
//!
//! The store is the ground truth for "what should the memory currently
//! return". Batches arriving over time may re-edit ids that are already
//! stored; `partition_overlap` splits a batch against the store so editors
//! can treat re-edited, fresh, and untouched knowledge differently.

use crate::linalg::{gram, Matrix};
use indexmap::IndexMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("batch ids must be distinct, duplicate: {0}")]
    DuplicateId(String),
    #[error("{what}: expected {expected} columns, got {got}")]
    ColumnMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("dimension mismatch: store holds {store}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        store: usize,
        got: usize,
    },
}

/// One editing request: `n` id-labelled key/value column pairs.
#[derive(Debug, Clone)]
pub struct EditBatch {
    ids: Vec<String>,
    /// d_in x n
    keys: Matrix,
    /// d_out x n
    values: Matrix,
}

impl EditBatch {
    pub fn new(ids: Vec<String>, keys: Matrix, values: Matrix) -> Result<Self, KnowledgeError> {
        if keys.cols() != ids.len() {
            return Err(KnowledgeError::ColumnMismatch {
                what: "keys",
                expected: ids.len(),
                got: keys.cols(),
            });
        }
        if values.cols() != ids.len() {
            return Err(KnowledgeError::ColumnMismatch {
                what: "values",
                expected: ids.len(),
                got: values.cols(),
            });
        }
        let mut seen = std::collections::HashSet::with_capacity(ids.len());
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(KnowledgeError::DuplicateId(id.clone()));
            }
        }
        Ok(Self { ids, keys, values })
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn keys(&self) -> &Matrix {
        &self.keys
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Column `j` as (id, key, value).
    pub fn column(&self, j: usize) -> (&str, Vec<f64>, Vec<f64>) {
        (
            &self.ids[j],
            (0..self.keys.rows()).map(|i| self.keys.get(i, j)).collect(),
            (0..self.values.rows()).map(|i| self.values.get(i, j)).collect(),
        )
    }
}

/// Knowledge that every editor must keep intact: `K0`, its target values
/// `V0`, and the cached gram `K0 K0ᵀ` reused by every step.
#[derive(Debug, Clone)]
pub struct PreservedSet {
    /// d_in x m
    pub keys: Matrix,
    /// d_out x m
    pub values: Matrix,
    /// d_in x d_in, equals `keys · keysᵀ`
    pub gram: Matrix,
}

impl PreservedSet {
    pub fn new(keys: Matrix, values: Matrix) -> Result<Self, KnowledgeError> {
        if keys.cols() != values.cols() {
            return Err(KnowledgeError::ColumnMismatch {
                what: "preserved values",
                expected: keys.cols(),
                got: values.cols(),
            });
        }
        let gram = gram(&keys);
        Ok(Self { keys, values, gram })
    }
}

/// Insertion-ordered map of id -> (key, value).
///
/// Re-inserting an existing id overwrites its value in place and keeps its
/// position, so `stack` is reproducible across arbitrary edit histories.
#[derive(Debug, Clone)]
pub struct KnowledgeStore {
    entries: IndexMap<String, (Vec<f64>, Vec<f64>)>,
    d_in: usize,
    d_out: usize,
}

impl KnowledgeStore {
    pub fn new(d_in: usize, d_out: usize) -> Self {
        Self {
            entries: IndexMap::new(),
            d_in,
            d_out,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<(&[f64], &[f64])> {
        self.entries.get(id).map(|(k, v)| (k.as_slice(), v.as_slice()))
    }

    pub fn insert(
        &mut self,
        id: &str,
        key: Vec<f64>,
        value: Vec<f64>,
    ) -> Result<(), KnowledgeError> {
        if key.len() != self.d_in {
            return Err(KnowledgeError::DimensionMismatch {
                what: "key",
                store: self.d_in,
                got: key.len(),
            });
        }
        if value.len() != self.d_out {
            return Err(KnowledgeError::DimensionMismatch {
                what: "value",
                store: self.d_out,
                got: value.len(),
            });
        }
        self.entries.insert(id.to_string(), (key, value));
        Ok(())
    }

    /// All stored keys and values as column-stacked matrices, insertion order.
    pub fn stack(&self) -> (Matrix, Matrix) {
        let n = self.entries.len();
        let mut keys = Matrix::zeros(self.d_in, n);
        let mut values = Matrix::zeros(self.d_out, n);
        for (j, (k, v)) in self.entries.values().enumerate() {
            for i in 0..self.d_in {
                keys.set(i, j, k[i]);
            }
            for i in 0..self.d_out {
                values.set(i, j, v[i]);
            }
        }
        (keys, values)
    }
}

/// How to resolve a batch column whose id is already stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolvePolicy {
    /// The incoming value wins.
    TakeNew,
    /// The stored value wins; the incoming one is discarded.
    TakeOld,
}

/// A batch split against a store.
///
/// `resolved_overlap` carries the post-policy values for re-edited ids, in
/// batch order; `prior_values` are the values those ids held in the store
/// before this batch, column-parallel to it. `new_only` is the rest of the
/// batch, in batch order. `old_only` is everything stored that the batch
/// does not touch, in store order.
#[derive(Debug, Clone)]
pub struct OverlapPartition {
    pub resolved_overlap: EditBatch,
    /// d_out x |overlap|, the store's values for the overlap ids pre-commit
    pub prior_values: Matrix,
    pub new_only: EditBatch,
    pub old_only: EditBatch,
}

/// Splits `batch` against `store` and applies `policy` to the overlap.
///
/// Key vectors for an id shared by store and batch are expected to be
/// identical (an id names a fixed key direction); the overlap keys are taken
/// from the batch.
pub fn partition_overlap(
    store: &KnowledgeStore,
    batch: &EditBatch,
    policy: ResolvePolicy,
) -> Result<OverlapPartition, KnowledgeError> {
    let d_in = batch.keys().rows();
    let d_out = batch.values().rows();

    let mut ov_ids = Vec::new();
    let mut ov_keys = Vec::new();
    let mut ov_vals = Vec::new();
    let mut prior_vals = Vec::new();
    let mut new_ids = Vec::new();
    let mut new_keys = Vec::new();
    let mut new_vals = Vec::new();

    for j in 0..batch.len() {
        let (id, key, value) = batch.column(j);
        match store.get(id) {
            Some((stored_key, stored_value)) => {
                debug_assert!(
                    key.iter().zip(stored_key).all(|(a, b)| a == b),
                    "id {id} changed its key vector"
                );
                let resolved = match policy {
                    ResolvePolicy::TakeNew => value.clone(),
                    ResolvePolicy::TakeOld => stored_value.to_vec(),
                };
                ov_ids.push(id.to_string());
                ov_keys.push(key);
                ov_vals.push(resolved);
                prior_vals.push(stored_value.to_vec());
            }
            None => {
                new_ids.push(id.to_string());
                new_keys.push(key);
                new_vals.push(value);
            }
        }
    }

    let mut old_ids = Vec::new();
    let mut old_keys = Vec::new();
    let mut old_vals = Vec::new();
    for (id, (k, v)) in &store.entries {
        if !ov_ids.iter().any(|o| o == id) {
            old_ids.push(id.clone());
            old_keys.push(k.clone());
            old_vals.push(v.clone());
        }
    }

    Ok(OverlapPartition {
        resolved_overlap: EditBatch::new(
            ov_ids,
            columns_to_matrix(d_in, &ov_keys),
            columns_to_matrix(d_out, &ov_vals),
        )?,
        prior_values: columns_to_matrix(d_out, &prior_vals),
        new_only: EditBatch::new(
            new_ids,
            columns_to_matrix(d_in, &new_keys),
            columns_to_matrix(d_out, &new_vals),
        )?,
        old_only: EditBatch::new(
            old_ids,
            columns_to_matrix(d_in, &old_keys),
            columns_to_matrix(d_out, &old_vals),
        )?,
    })
}

/// Writes a partition back: overlap values replace in place, new entries
/// append in batch order, untouched entries stay bit-identical.
pub fn commit(store: &mut KnowledgeStore, partition: &OverlapPartition) -> Result<(), KnowledgeError> {
    for j in 0..partition.resolved_overlap.len() {
        let (id, key, value) = partition.resolved_overlap.column(j);
        store.insert(id, key, value)?;
    }
    for j in 0..partition.new_only.len() {
        let (id, key, value) = partition.new_only.column(j);
        store.insert(id, key, value)?;
    }
    Ok(())
}

fn columns_to_matrix(rows: usize, cols: &[Vec<f64>]) -> Matrix {
    let mut m = Matrix::zeros(rows, cols.len());
    for (j, col) in cols.iter().enumerate() {
        for i in 0..rows {
            m.set(i, j, col[i]);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(ids: &[&str], d_in: usize, d_out: usize, salt: f64) -> EditBatch {
        let n = ids.len();
        EditBatch::new(
            ids.iter().map(|s| s.to_string()).collect(),
            Matrix::from_fn(d_in, n, |i, j| (i as f64) + (j as f64) * 0.5 + salt),
            Matrix::from_fn(d_out, n, |i, j| (i as f64) - (j as f64) * 0.25 + salt * 2.0),
        )
        .unwrap()
    }

    fn seeded_store() -> KnowledgeStore {
        let mut store = KnowledgeStore::new(3, 2);
        let b = batch(&["a", "b", "c"], 3, 2, 0.0);
        for j in 0..b.len() {
            let (id, k, v) = b.column(j);
            store.insert(id, k, v).unwrap();
        }
        store
    }

    #[test]
    fn batch_rejects_duplicates_and_bad_shapes() {
        let err = EditBatch::new(
            vec!["x".into(), "x".into()],
            Matrix::zeros(3, 2),
            Matrix::zeros(2, 2),
        );
        assert!(matches!(err, Err(KnowledgeError::DuplicateId(_))));
        let err = EditBatch::new(vec!["x".into()], Matrix::zeros(3, 2), Matrix::zeros(2, 1));
        assert!(matches!(err, Err(KnowledgeError::ColumnMismatch { .. })));
    }

    #[test]
    fn preserved_set_caches_gram() {
        let keys = Matrix::from_fn(3, 2, |i, j| (i + j) as f64);
        let p = PreservedSet::new(keys.clone(), Matrix::zeros(2, 2)).unwrap();
        assert_eq!(p.gram, gram(&keys));
    }

    #[test]
    fn store_overwrite_keeps_position() {
        let mut store = seeded_store();
        store.insert("b", vec![9.0, 9.0, 9.0], vec![7.0, 7.0]).unwrap();
        let ids: Vec<&str> = store.entries.keys().map(|s| s.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(store.get("b").unwrap().1, &[7.0, 7.0]);
    }

    #[test]
    fn partition_splits_by_membership() {
        let store = seeded_store();
        // shared ids reuse the stored key columns
        let mut keys = Matrix::zeros(3, 3);
        let mut values = Matrix::zeros(2, 3);
        for (j, id) in ["b", "c", "d"].iter().enumerate() {
            let key = store
                .get(id)
                .map(|(k, _)| k.to_vec())
                .unwrap_or_else(|| vec![1.0, 2.0, 3.0]);
            for i in 0..3 {
                keys.set(i, j, key[i]);
            }
            for i in 0..2 {
                values.set(i, j, 10.0 + j as f64 + i as f64);
            }
        }
        let b = EditBatch::new(vec!["b".into(), "c".into(), "d".into()], keys, values).unwrap();

        let part = partition_overlap(&store, &b, ResolvePolicy::TakeNew).unwrap();
        assert_eq!(part.resolved_overlap.ids(), &["b".to_string(), "c".to_string()]);
        assert_eq!(part.new_only.ids(), &["d".to_string()]);
        assert_eq!(part.old_only.ids(), &["a".to_string()]);
        // TakeNew: resolved values are the batch's
        assert_eq!(part.resolved_overlap.values().get(0, 0), 10.0);
        // prior values are the store's, column-parallel to the overlap
        assert_eq!(
            part.prior_values.get(0, 0),
            store.get("b").unwrap().1[0]
        );

        let part_old = partition_overlap(&store, &b, ResolvePolicy::TakeOld).unwrap();
        assert_eq!(
            part_old.resolved_overlap.values().get(0, 0),
            store.get("b").unwrap().1[0]
        );
    }

    #[test]
    fn commit_is_idempotent_under_take_new() {
        let mut store = seeded_store();
        let b = batch(&["c", "d"], 3, 2, 3.0);
        // align c's key with the stored one to honour the shared-id convention
        let stored_key = store.get("c").unwrap().0.to_vec();
        let mut keys = b.keys().clone();
        for i in 0..3 {
            keys.set(i, 0, stored_key[i]);
        }
        let b = EditBatch::new(b.ids().to_vec(), keys, b.values().clone()).unwrap();

        let part = partition_overlap(&store, &b, ResolvePolicy::TakeNew).unwrap();
        commit(&mut store, &part).unwrap();
        let (k1, v1) = store.stack();

        let part2 = partition_overlap(&store, &b, ResolvePolicy::TakeNew).unwrap();
        assert!(part2.new_only.is_empty());
        commit(&mut store, &part2).unwrap();
        let (k2, v2) = store.stack();
        assert_eq!(k1, k2);
        assert_eq!(v1, v2);

        let ids: Vec<&str> = store.entries.keys().map(|s| s.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c", "d"]);
    }

    #[test]
    fn stack_matches_insertion_order() {
        let store = seeded_store();
        let (k, v) = store.stack();
        assert_eq!((k.rows(), k.cols()), (3, 3));
        assert_eq!((v.rows(), v.cols()), (2, 3));
        let (ka, va) = store.get("a").unwrap();
        for i in 0..3 {
            assert_eq!(k.get(i, 0), ka[i]);
        }
        for i in 0..2 {
            assert_eq!(v.get(i, 0), va[i]);
        }
        let empty = KnowledgeStore::new(4, 2);
        let (ke, ve) = empty.stack();
        assert_eq!((ke.rows(), ke.cols()), (4, 0));
        assert_eq!((ve.rows(), ve.cols()), (2, 0));
    }
}
