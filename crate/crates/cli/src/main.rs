//! `seqedit`: run sequential-editing experiments, verify the engine's
//! identities, and compare editor arms on a shared instance.

mod config;
mod output;

use clap::{Parser, Subcommand};
use config::{AblateConfig, RunConfig};
use seqedit_core::harness::{
    compare_arms, gen_instance, run_experiment_full, run_verification, ArmSpec, FaultInjection,
    HarnessError,
};
use seqedit_core::linalg::rel_err;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "seqedit", about = "Sequential knowledge-editing simulator", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one editor over a generated instance and write metrics.csv + summary.json
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-derive the engine's identities on fresh instances and print a report
    Verify {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Deliberately break a checked path (supported: drop-history)
        #[arg(long, value_name = "NAME")]
        inject_fault: Option<String>,
    },
    /// Run several arms over one instance and write ablation.csv
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
}

// 0 success, 1 invariant violation, 2 config error, 3 numerical failure
const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

fn main() -> ExitCode {
    if let Ok(v) = std::env::var("SEQEDIT_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                seqedit_core::configure_threads(n);
            }
            _ => {
                eprintln!("config error: SEQEDIT_THREADS must be a positive integer, got {v:?}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }

    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify {
            seed,
            trials,
            inject_fault,
        } => cmd_verify(seed, trials, inject_fault.as_deref()),
        Command::Ablate { config } => cmd_ablate(&config),
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
}

fn harness_exit(err: &HarnessError) -> u8 {
    match err {
        HarnessError::Config(_) => EXIT_CONFIG,
        HarnessError::Step { .. } | HarnessError::Edit(_) => EXIT_NUMERICAL,
    }
}

fn cmd_run(config_path: &Path) -> ExitCode {
    let cfg: RunConfig = match read_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let (spec, mode) = match cfg.resolve() {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let instance = match gen_instance(&cfg.instance) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let (records, state) = match run_experiment_full(&instance, &spec, mode) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("run failed: {e}");
            return ExitCode::from(harness_exit(&e));
        }
    };

    let metrics_path = cfg.output_dir.join("metrics.csv");
    if let Err(e) = output::write_atomic(&metrics_path, output::metrics_csv(&records).as_bytes()) {
        eprintln!("config error: cannot write {}: {e}", metrics_path.display());
        return ExitCode::from(EXIT_CONFIG);
    }

    let all_metrics_finite = records.iter().all(|r| {
        [
            r.dev_from_ote,
            r.preserved_residual,
            r.edit_residual,
            r.gram_cond_estimate,
            r.w_max_singular,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0)
    });
    let cum_delta_consistent = rel_err(&state.w.sub(&state.w0), &state.cum_delta)
        .map(|e| e <= 1e-10)
        .unwrap_or(false);
    let final_record = records.last().expect("n_steps >= 1 yields records");
    let summary = output::Summary {
        editor: &spec.label,
        alignment: mode.as_str(),
        n_steps: records.len(),
        final_record,
        invariants: output::SummaryInvariants {
            all_metrics_finite,
            cum_delta_consistent,
        },
    };
    let summary_path = cfg.output_dir.join("summary.json");
    if let Err(e) = output::write_atomic(&summary_path, &output::summary_json(&summary)) {
        eprintln!("config error: cannot write {}: {e}", summary_path.display());
        return ExitCode::from(EXIT_CONFIG);
    }

    println!(
        "wrote {} ({} steps) and {}",
        metrics_path.display(),
        records.len(),
        summary_path.display()
    );
    ExitCode::SUCCESS
}

fn cmd_verify(seed: u64, trials: usize, inject_fault: Option<&str>) -> ExitCode {
    let fault = match inject_fault {
        None => None,
        Some("drop-history") => Some(FaultInjection::DropHistory),
        Some(other) => {
            eprintln!("config error: unknown fault {other:?} (supported: drop-history)");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let reports = match run_verification(seed, trials, fault) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let name_width = reports.iter().map(|r| r.name.len()).max().unwrap_or(0);
    let mut failed = false;
    for r in &reports {
        let status = if r.passed { "ok  " } else { "FAIL" };
        println!(
            "{status} {:<name_width$}  worst {:.3e}  {}",
            r.name, r.worst, r.detail
        );
        failed |= !r.passed;
    }
    if failed {
        for r in reports.iter().filter(|r| !r.passed) {
            eprintln!("invariant {} violated (base seed {seed}): {}", r.name, r.detail);
        }
        return ExitCode::from(EXIT_VERIFY_FAILED);
    }
    println!("all {} invariants hold over {} trials (base seed {seed})", reports.len(), trials);
    ExitCode::SUCCESS
}

fn cmd_ablate(config_path: &Path) -> ExitCode {
    let cfg: AblateConfig = match read_config(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut arms: Vec<ArmSpec> = Vec::with_capacity(cfg.arms.len());
    for (i, arm) in cfg.arms.iter().enumerate() {
        match arm.resolve() {
            Ok(a) => arms.push(a),
            Err(e) => {
                eprintln!("config error: arm {i}: {e}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    let instance = match gen_instance(&cfg.instance) {
        Ok(i) => i,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let rows = match compare_arms(&instance, &arms) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("ablation failed: {e}");
            return ExitCode::from(harness_exit(&e));
        }
    };
    let path = cfg.output_dir.join("ablation.csv");
    if let Err(e) = output::write_atomic(&path, output::ablation_csv(&rows).as_bytes()) {
        eprintln!("config error: cannot write {}: {e}", path.display());
        return ExitCode::from(EXIT_CONFIG);
    }
    println!("wrote {} ({} rows, {} arms)", path.display(), rows.len(), arms.len());
    ExitCode::SUCCESS
}
