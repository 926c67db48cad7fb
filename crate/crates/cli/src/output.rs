//! Report emission. Every file is written whole to a temp name in the target
//! directory, then renamed into place, so readers never see a partial file.

use seqedit_core::harness::{ComparisonRow, MetricsRecord};
use serde::Serialize;
use std::fs;
use std::io;
use std::path::Path;

pub const METRICS_HEADER: &str =
    "step,editor,dev_from_ote,preserved_residual,edit_residual,gram_cond_estimate,w_max_singular";
pub const ABLATION_HEADER: &str = "arm,step,dev_from_ote,preserved_residual";

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(dir) = dir {
        fs::create_dir_all(dir)?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?
        .to_string_lossy();
    let tmp = path.with_file_name(format!(".{file_name}.tmp-{}", std::process::id()));
    fs::write(&tmp, bytes)?;
    match fs::rename(&tmp, path) {
        Ok(()) => Ok(()),
        Err(e) => {
            let _ = fs::remove_file(&tmp);
            Err(e)
        }
    }
}

/// 17 significant digits: enough for exact f64 round-trips, so reruns are
/// byte-comparable.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.step,
            r.editor,
            fmt_float(r.dev_from_ote),
            fmt_float(r.preserved_residual),
            fmt_float(r.edit_residual),
            fmt_float(r.gram_cond_estimate),
            fmt_float(r.w_max_singular),
        ));
    }
    out
}

pub fn ablation_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::with_capacity(48 * (rows.len() + 1));
    out.push_str(ABLATION_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.arm,
            r.step,
            fmt_float(r.dev_from_ote),
            fmt_float(r.preserved_residual),
        ));
    }
    out
}

#[derive(Serialize)]
pub struct Summary<'a> {
    pub editor: &'a str,
    pub alignment: &'a str,
    pub n_steps: usize,
    #[serde(rename = "final")]
    pub final_record: &'a MetricsRecord,
    pub invariants: SummaryInvariants,
}

#[derive(Serialize)]
pub struct SummaryInvariants {
    /// Every emitted metric is finite and non-negative.
    pub all_metrics_finite: bool,
    /// `w − w0` agrees with the accumulated deltas within 1e-10 relative.
    pub cum_delta_consistent: bool,
}

pub fn summary_json(summary: &Summary) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(summary).expect("summary serializes");
    bytes.push(b'\n');
    bytes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_17_significant_digits() {
        assert_eq!(fmt_float(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        let v = 3.141592653589793e-7;
        let txt = fmt_float(v);
        assert_eq!(txt.parse::<f64>().unwrap(), v, "format must round-trip");
    }

    #[test]
    fn csv_rows_use_unix_line_endings() {
        let records = vec![MetricsRecord {
            step: 1,
            editor: "memit".into(),
            dev_from_ote: 0.0,
            preserved_residual: 0.5,
            edit_residual: 0.25,
            gram_cond_estimate: 10.0,
            w_max_singular: 2.0,
        }];
        let csv = metrics_csv(&records);
        assert!(csv.starts_with(METRICS_HEADER));
        assert!(!csv.contains('\r'));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn atomic_write_replaces_the_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested").join("out.csv");
        write_atomic(&path, b"first\n").unwrap();
        write_atomic(&path, b"second\n").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"second\n");
        let left: Vec<_> = fs::read_dir(path.parent().unwrap())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(left.len(), 1, "no temp files may remain: {left:?}");
    }
}
