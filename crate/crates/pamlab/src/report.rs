//! Merge run manifests into one comparison report: per-run file tables,
//! verdict summaries (dichotomy classifications, oracle agreements,
//! closed-form comparisons), and cross-run agreement checks for sweeps
//! that share a configuration shape.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::experiment::{read_manifest, RunManifest};

/// Build the report text for a list of manifest files. Missing result
/// files are named in the report rather than failing the merge.
pub fn emit_report(manifest_paths: &[std::path::PathBuf]) -> Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "# experiment comparison report");
    let _ = writeln!(s, "runs = {}", manifest_paths.len());
    let mut sweeps: Vec<(String, Vec<BTreeMap<String, String>>)> = Vec::new();

    for path in manifest_paths {
        let manifest = match read_manifest(path) {
            Ok(m) => m,
            Err(e) => {
                let _ = writeln!(s, "\n## {} — UNREADABLE ({e})", path.display());
                continue;
            }
        };
        let _ = writeln!(s, "\n## run {}", manifest.out_dir.display());
        let _ = writeln!(s, "config_hash = {}", manifest.config_hash);
        let _ = writeln!(s, "code_version = {}", manifest.code_version);
        if let Some(stage) = &manifest.failed_stage {
            let _ = writeln!(s, "FAILED at stage: {stage}");
        }
        for (name, digest) in &manifest.files {
            let exists = manifest.out_dir.join(name).exists();
            let _ = writeln!(
                s,
                "file {name} {} {}",
                &digest[..16.min(digest.len())],
                if exists { "" } else { "MISSING" }
            );
        }
        append_verdicts(&mut s, &manifest);
        if let Some(rows) = load_csv(&manifest, "sweep.csv") {
            sweeps.push((manifest.config_hash.clone(), rows));
        }
    }

    cross_run_agreement(&mut s, &sweeps);
    Ok(s)
}

/// Per-run verdict lines, each carrying the claim being checked.
fn append_verdicts(s: &mut String, manifest: &RunManifest) {
    if let Ok(text) = std::fs::read_to_string(manifest.out_dir.join("dichotomy.txt")) {
        let mut claim = String::new();
        let mut predicted = String::new();
        let mut consistent = String::new();
        for line in text.lines() {
            if let Some(v) = line.strip_prefix("claim = ") {
                claim = v.to_string();
            }
            if let Some(v) = line.strip_prefix("predicted_regime = ") {
                predicted = v.to_string();
            }
            if let Some(v) = line.strip_prefix("consistent = ") {
                consistent = v.to_string();
            }
        }
        let _ = writeln!(
            s,
            "verdict dichotomy: predicted={predicted} consistent={consistent} [{claim}]"
        );
    }
    if let Some(rows) = load_csv(manifest, "lambda0_summary.csv") {
        for r in rows {
            let _ = writeln!(
                s,
                "verdict lambda0: closed_form={} extrapolated={} rel_err={} \
                 [finite-volume oracle vs the kappa=0 closed form]",
                r.get("closed_form").map_or("?", |v| v),
                r.get("tail_extrapolated").map_or("?", |v| v),
                r.get("rel_err").map_or("?", |v| v),
            );
        }
    }
    if let Some(rows) = load_csv(manifest, "oracle_check.csv") {
        let worst = rows
            .iter()
            .filter_map(|r| r.get("sigma_off").and_then(|v| v.parse::<f64>().ok()))
            .fold(0.0f64, f64::max);
        let _ = writeln!(
            s,
            "verdict oracle-check: worst_sigma_off={worst:.3} over {} times \
             [ensemble estimate vs exact joint master equation]",
            rows.len()
        );
    }
    if let Some(rows) = load_csv(manifest, "green.csv") {
        for r in rows {
            if r.get("method").map(|m| m == "fourier").unwrap_or(false) {
                let _ = writeln!(
                    s,
                    "verdict green: {}={} rel_agreement={} [Fourier vs time-domain route]",
                    r.get("quantity").map_or("?", |v| v),
                    r.get("value").map_or("?", |v| v),
                    r.get("rel_agreement").map_or("?", |v| v),
                );
            }
        }
    }
}

/// Compare exponents across runs whose sweeps share the same
/// `(model, d, p, kappa)` keys (e.g. two seeds of one experiment).
fn cross_run_agreement(s: &mut String, sweeps: &[(String, Vec<BTreeMap<String, String>>)]) {
    if sweeps.len() < 2 {
        return;
    }
    let _ = writeln!(s, "\n## cross-run agreement (sweeps)");
    for i in 0..sweeps.len() {
        for j in i + 1..sweeps.len() {
            for row_a in &sweeps[i].1 {
                let key = |r: &BTreeMap<String, String>| {
                    (
                        r.get("model").cloned(),
                        r.get("d").cloned(),
                        r.get("p").cloned(),
                        r.get("kappa").cloned(),
                    )
                };
                if let Some(row_b) = sweeps[j].1.iter().find(|rb| key(rb) == key(row_a)) {
                    let parse = |r: &BTreeMap<String, String>, k: &str| {
                        r.get(k).and_then(|v| v.parse::<f64>().ok())
                    };
                    if let (Some(la), Some(ea), Some(lb), Some(eb)) = (
                        parse(row_a, "lambda_hat"),
                        parse(row_a, "stderr"),
                        parse(row_b, "lambda_hat"),
                        parse(row_b, "stderr"),
                    ) {
                        let combined = (ea * ea + eb * eb).sqrt();
                        let sigmas = if combined > 0.0 {
                            (la - lb).abs() / combined
                        } else {
                            0.0
                        };
                        let _ = writeln!(
                            s,
                            "kappa={} p={}: runs {}..{} differ by {sigmas:.2} combined stderr",
                            row_a.get("kappa").map_or("?", |v| v),
                            row_a.get("p").map_or("?", |v| v),
                            &sweeps[i].0[..8],
                            &sweeps[j].0[..8],
                        );
                    }
                }
            }
        }
    }
}

fn load_csv(manifest: &RunManifest, name: &str) -> Option<Vec<BTreeMap<String, String>>> {
    let text = std::fs::read_to_string(manifest.out_dir.join(name)).ok()?;
    parse_csv(&text)
}

fn parse_csv(text: &str) -> Option<Vec<BTreeMap<String, String>>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next()?.split(',').collect();
    Some(
        lines
            .map(|line| {
                header
                    .iter()
                    .zip(line.split(','))
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect()
            })
            .collect(),
    )
}

/// Convenience: report over manifests found in a list of run directories.
pub fn emit_report_for_dirs(dirs: &[std::path::PathBuf]) -> Result<String> {
    let paths: Vec<std::path::PathBuf> = dirs
        .iter()
        .map(|d| {
            if d.ends_with("manifest.txt") || d.extension().is_some() {
                d.clone()
            } else {
                d.join("manifest.txt")
            }
        })
        .collect();
    emit_report(&paths)
}

/// True when the path looks like a manifest file rather than a directory.
pub fn is_manifest_path(p: &Path) -> bool {
    p.file_name().is_some_and(|n| n == "manifest.txt")
}
