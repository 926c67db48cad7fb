//! Config file schemas and their translation into harness types.
//!
//! Parsing is strict: unknown keys are rejected so a typo cannot silently
//! fall back to a default.

use seqedit_core::harness::{AlignmentMode, ArmSpec, EditorKind, EditorSpec, InstanceConfig, ProjectorChoice};
use seqedit_core::knowledge::ResolvePolicy;
use serde::Deserialize;
use std::path::PathBuf;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub instance: InstanceConfig,
    pub editor: String,
    #[serde(default)]
    pub regularizer: Option<RegularizerConfig>,
    #[serde(default)]
    pub projector: Option<String>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub alignment: Option<String>,
    #[serde(default)]
    pub resolve_policy: Option<String>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerConfig {
    pub kind: String,
    #[serde(default)]
    pub rect_rho: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateConfig {
    #[serde(default)]
    pub instance: InstanceConfig,
    pub arms: Vec<ArmConfig>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmConfig {
    pub editor: String,
    #[serde(default)]
    pub regularizer: Option<RegularizerConfig>,
    #[serde(default)]
    pub projector: Option<String>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub alignment: Option<String>,
    #[serde(default)]
    pub resolve_policy: Option<String>,
    /// Overrides the generated `editor:alignment` arm name.
    #[serde(default)]
    pub label: Option<String>,
}

impl RunConfig {
    pub fn resolve(&self) -> Result<(EditorSpec, AlignmentMode), String> {
        resolve_editor(
            &self.editor,
            self.regularizer.as_ref(),
            self.projector.as_deref(),
            self.lambda,
            self.alignment.as_deref(),
            self.resolve_policy.as_deref(),
        )
    }
}

impl ArmConfig {
    pub fn resolve(&self) -> Result<ArmSpec, String> {
        let (spec, mode) = resolve_editor(
            &self.editor,
            self.regularizer.as_ref(),
            self.projector.as_deref(),
            self.lambda,
            self.alignment.as_deref(),
            self.resolve_policy.as_deref(),
        )?;
        let mut arm = ArmSpec::new(spec, mode);
        if let Some(label) = &self.label {
            arm.label = label.clone();
        }
        Ok(arm)
    }
}

fn resolve_editor(
    editor: &str,
    regularizer: Option<&RegularizerConfig>,
    projector: Option<&str>,
    lambda: Option<f64>,
    alignment: Option<&str>,
    resolve_policy: Option<&str>,
) -> Result<(EditorSpec, AlignmentMode), String> {
    let policy = match resolve_policy {
        None | Some("take_new") => ResolvePolicy::TakeNew,
        Some("take_old") => ResolvePolicy::TakeOld,
        Some(other) => {
            return Err(format!(
                "unknown resolve_policy {other:?} (expected take_new or take_old)"
            ))
        }
    };

    let kind = match editor {
        "memit" => EditorKind::Memit,
        "alphaedit" => EditorKind::AlphaEdit,
        "prune" => EditorKind::Prune,
        "rect" => {
            let reg = regularizer
                .ok_or("editor \"rect\" requires a regularizer with kind \"rect\" and rect_rho")?;
            if reg.kind != "rect" {
                return Err(format!(
                    "editor \"rect\" requires regularizer kind \"rect\", got {:?}",
                    reg.kind
                ));
            }
            let rho = reg.rect_rho.ok_or("regularizer kind \"rect\" requires rect_rho")?;
            if !rho.is_finite() || !(0.0..=1.0).contains(&rho) {
                return Err(format!("rect_rho must be in [0, 1], got {rho}"));
            }
            EditorKind::Rect { rho }
        }
        "memorize_latest" => EditorKind::MemorizeLatest,
        "memorize_latest_broken" => EditorKind::MemorizeLatestBroken,
        "conflict" => EditorKind::Conflict { policy },
        other => {
            return Err(format!(
                "unknown editor {other:?} (expected one of memit, alphaedit, prune, rect, \
                 memorize_latest, memorize_latest_broken, conflict)"
            ))
        }
    };

    // a declared regularizer must restate the editor's own kind, and
    // rect_rho travels only with the rect kind
    if let Some(reg) = regularizer {
        let expected = match editor {
            "rect" => "rect",
            "prune" => "prune",
            _ => "identity",
        };
        if reg.kind != expected {
            return Err(format!(
                "regularizer kind {:?} does not match editor {editor:?} (expected {expected:?})",
                reg.kind
            ));
        }
        if reg.kind != "rect" && reg.rect_rho.is_some() {
            return Err(format!(
                "rect_rho is only valid with regularizer kind \"rect\", got kind {:?}",
                reg.kind
            ));
        }
    }

    let mut spec = EditorSpec::new(kind);

    if let Some(p) = projector {
        let allowed = matches!(
            spec.kind,
            EditorKind::Memit | EditorKind::AlphaEdit | EditorKind::MemorizeLatestBroken
        );
        if !allowed {
            return Err(format!("editor {editor:?} fixes its projector; remove the projector key"));
        }
        spec.projector = match p {
            "identity" => ProjectorChoice::Identity,
            "nullspace" => ProjectorChoice::Nullspace,
            other => {
                return Err(format!(
                    "unknown projector {other:?} (expected identity or nullspace)"
                ))
            }
        };
    }

    if let Some(l) = lambda {
        if !matches!(spec.kind, EditorKind::Memit | EditorKind::AlphaEdit) {
            return Err(format!("editor {editor:?} fixes its ridge; remove the lambda key"));
        }
        if !l.is_finite() || l < 0.0 {
            return Err(format!("lambda must be finite and non-negative, got {l}"));
        }
        spec.lambda = l;
    }

    if resolve_policy.is_some() && !matches!(spec.kind, EditorKind::Conflict { .. }) {
        return Err(format!(
            "resolve_policy only applies to the conflict editor, not {editor:?}"
        ));
    }

    let mode = match alignment {
        None | Some("aligned") => AlignmentMode::Aligned,
        Some("no_err_correction") => AlignmentMode::NoErrCorrection,
        Some("not_aligned") => AlignmentMode::NotAligned,
        Some(other) => {
            return Err(format!(
                "unknown alignment {other:?} (expected aligned, no_err_correction, or not_aligned)"
            ))
        }
    };

    Ok((spec, mode))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_run(json: &str) -> Result<RunConfig, serde_json::Error> {
        serde_json::from_str(json)
    }

    #[test]
    fn minimal_run_config_uses_defaults() {
        let cfg = parse_run(r#"{"editor": "memit", "output_dir": "/tmp/x"}"#).unwrap();
        assert_eq!(cfg.instance, InstanceConfig::default());
        let (spec, mode) = cfg.resolve().unwrap();
        assert_eq!(spec.label, "memit");
        assert_eq!(spec.lambda, 0.0);
        assert_eq!(spec.projector, ProjectorChoice::Identity);
        assert_eq!(mode, AlignmentMode::Aligned);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_run(r#"{"editor": "memit", "output_dir": "/tmp/x", "editr": 1}"#).is_err());
        assert!(parse_run(
            r#"{"editor": "rect", "output_dir": "/tmp/x",
                "regularizer": {"kind": "rect", "rect_rho": 0.5, "extra": 1}}"#
        )
        .is_err());
    }

    #[test]
    fn rect_requires_rho_and_rejects_it_elsewhere() {
        let ok = parse_run(
            r#"{"editor": "rect", "output_dir": "/t",
                "regularizer": {"kind": "rect", "rect_rho": 0.2}}"#,
        )
        .unwrap();
        let (spec, _) = ok.resolve().unwrap();
        assert_eq!(spec.label, "rect(0.2)");

        let missing = parse_run(
            r#"{"editor": "rect", "output_dir": "/t", "regularizer": {"kind": "rect"}}"#,
        )
        .unwrap();
        assert!(missing.resolve().is_err());

        let stray = parse_run(
            r#"{"editor": "prune", "output_dir": "/t",
                "regularizer": {"kind": "prune", "rect_rho": 0.2}}"#,
        )
        .unwrap();
        assert!(stray.resolve().is_err());
    }

    #[test]
    fn projector_and_lambda_are_gated_per_editor() {
        let ok = parse_run(
            r#"{"editor": "memit", "output_dir": "/t", "projector": "nullspace", "lambda": 0.5}"#,
        )
        .unwrap();
        let (spec, _) = ok.resolve().unwrap();
        assert_eq!(spec.projector, ProjectorChoice::Nullspace);
        assert_eq!(spec.lambda, 0.5);

        let bad = parse_run(
            r#"{"editor": "memorize_latest", "output_dir": "/t", "lambda": 0.5}"#,
        )
        .unwrap();
        assert!(bad.resolve().is_err());

        let neg = parse_run(r#"{"editor": "memit", "output_dir": "/t", "lambda": -1.0}"#).unwrap();
        assert!(neg.resolve().is_err());
    }

    #[test]
    fn resolve_policy_feeds_the_conflict_editor_only() {
        let ok = parse_run(
            r#"{"editor": "conflict", "output_dir": "/t", "resolve_policy": "take_old"}"#,
        )
        .unwrap();
        let (spec, _) = ok.resolve().unwrap();
        assert_eq!(
            spec.kind,
            EditorKind::Conflict {
                policy: ResolvePolicy::TakeOld
            }
        );

        let bad = parse_run(
            r#"{"editor": "memit", "output_dir": "/t", "resolve_policy": "take_old"}"#,
        )
        .unwrap();
        assert!(bad.resolve().is_err());
    }

    #[test]
    fn arm_config_builds_labels() {
        let arm: ArmConfig = serde_json::from_str(
            r#"{"editor": "memit", "alignment": "not_aligned"}"#,
        )
        .unwrap();
        assert_eq!(arm.resolve().unwrap().label, "memit:not_aligned");

        let named: ArmConfig = serde_json::from_str(
            r#"{"editor": "memit", "label": "baseline"}"#,
        )
        .unwrap();
        assert_eq!(named.resolve().unwrap().label, "baseline");
    }
}
