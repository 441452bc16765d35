//! Experiment orchestration: dispatch a validated configuration to the
//! owning module, persist CSVs with canonical number formatting, and
//! record a run manifest (config hash, code version, stage seeds, file
//! digests).
//!
//! Reruns with an identical configuration produce byte-identical result
//! files; only the manifest timestamps differ. Nothing is written outside
//! the configured output directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::catalysts::CatalystKind;
use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::lattice::{
    green_function, green_function_time_domain, green_star, green_star_time_domain, KernelSpec,
};
use crate::lyapunov::{dichotomy_check, extrapolate_power_tail, kappa_sweep, FitOpts};
use crate::moments::{annealed_moment, closed_form_lambda0, exact_moment_small, isrw_lambda0_series};
use crate::polaron::{solve_variational, GridConfig};
use crate::seeding::seed_fingerprint;

/// Ten significant digits for human-facing CSVs.
pub fn fmt_csv(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.9e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Seventeen significant digits for manifests.
pub fn fmt_manifest(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn fmt_ext(v: ExtReal) -> String {
    match v {
        ExtReal::Finite(x) => fmt_csv(x),
        ExtReal::Infinite => "inf".into(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// What a completed (or partially completed) run produced.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config_hash: String,
    pub code_version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub stage_seeds: Vec<(String, u64)>,
    /// `(relative file name, sha256 hex)` of every produced file.
    pub files: Vec<(String, String)>,
    /// Set when the run aborted; names the failing stage.
    pub failed_stage: Option<String>,
    pub out_dir: PathBuf,
}

impl RunManifest {
    pub fn digest_of(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d.as_str())
    }
}

/// Collects produced files under the output directory and digests them.
struct FileSink {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl FileSink {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(FileSink {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content)?;
        self.files.push((name.to_string(), sha256_hex(content.as_bytes())));
        Ok(())
    }
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Run the configured experiment, writing result CSVs, a plot script, the
/// canonical configuration and a manifest into the output directory.
///
/// On a mid-run failure the manifest is still written, recording the
/// partial outputs and the failing stage, and the error is returned.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest> {
    config.validate()?;
    let out_dir = PathBuf::from(&config.run.out_dir);
    let mut sink = FileSink::new(&out_dir)?;
    let canonical = config.to_toml();
    sink.write("config.toml", &canonical)?;
    let started = unix_now();
    let mut stage_seeds = vec![("master".to_string(), config.run.seed)];
    for r in 0..config.run.n_reps.min(3) as u64 {
        stage_seeds.push((
            format!("path-{r}"),
            seed_fingerprint(config.run.seed, "path", r),
        ));
    }

    let result = dispatch(config, &mut sink);
    let failed_stage = result
        .as_ref()
        .err()
        .map(|e| format!("{}: {e}", config.experiment.kind.as_str()));

    sink.write("plot.py", &plot_script())?;
    let manifest = RunManifest {
        config_hash: sha256_hex(canonical.as_bytes()),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: unix_now(),
        stage_seeds,
        files: sink.files.clone(),
        failed_stage,
        out_dir: out_dir.clone(),
    };
    std::fs::write(out_dir.join("manifest.txt"), render_manifest(&manifest))?;
    result.map(|()| manifest)
}

fn dispatch(config: &ExperimentConfig, sink: &mut FileSink) -> Result<()> {
    match config.experiment.kind {
        ExperimentKind::Green => run_green(config, sink),
        ExperimentKind::Lambda0 => run_lambda0(config, sink),
        ExperimentKind::Moments => run_moments(config, sink),
        ExperimentKind::Sweep => run_sweep(config, sink, false),
        ExperimentKind::Dichotomy => run_sweep(config, sink, true),
        ExperimentKind::Polaron => run_polaron(config, sink),
        ExperimentKind::OracleCheck => run_oracle_check(config, sink),
    }
}

fn render_manifest(m: &RunManifest) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "config_hash = {}", m.config_hash);
    let _ = writeln!(s, "code_version = {}", m.code_version);
    let _ = writeln!(s, "started_unix = {}", m.started_unix);
    let _ = writeln!(s, "finished_unix = {}", m.finished_unix);
    for (label, seed) in &m.stage_seeds {
        let _ = writeln!(s, "stage_seed.{label} = {seed}");
    }
    if let Some(stage) = &m.failed_stage {
        let _ = writeln!(s, "failed_stage = {stage}");
    }
    for (name, digest) in &m.files {
        let _ = writeln!(s, "file = {name} {digest}");
    }
    s
}

/// Parse a manifest written by [`run_experiment`].
pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path)?;
    let dir = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut m = RunManifest {
        config_hash: String::new(),
        code_version: String::new(),
        started_unix: 0,
        finished_unix: 0,
        stage_seeds: Vec::new(),
        files: Vec::new(),
        failed_stage: None,
        out_dir: dir,
    };
    for line in text.lines() {
        let Some((key, value)) = line.split_once(" = ") else {
            continue;
        };
        match key {
            "config_hash" => m.config_hash = value.to_string(),
            "code_version" => m.code_version = value.to_string(),
            "started_unix" => m.started_unix = value.parse().unwrap_or(0),
            "finished_unix" => m.finished_unix = value.parse().unwrap_or(0),
            "failed_stage" => m.failed_stage = Some(value.to_string()),
            "file" => {
                if let Some((name, digest)) = value.rsplit_once(' ') {
                    m.files.push((name.to_string(), digest.to_string()));
                }
            }
            _ => {
                if let Some(label) = key.strip_prefix("stage_seed.") {
                    m.stage_seeds
                        .push((label.to_string(), value.parse().unwrap_or(0)));
                }
            }
        }
    }
    Ok(m)
}

// ---------------------------------------------------------------------------
// Experiment kinds
// ---------------------------------------------------------------------------

fn run_green(config: &ExperimentConfig, sink: &mut FileSink) -> Result<()> {
    let d = config.lattice.d;
    let kernel = KernelSpec::simple_random_walk(d);
    let mut csv = String::from("d,quantity,method,value,rel_agreement\n");
    let gf = green_function(d, &kernel)?;
    let gt = green_function_time_domain(d)?;
    let agree = match (gf, gt) {
        (ExtReal::Finite(a), ExtReal::Finite(b)) => fmt_csv((a - b).abs() / b.abs()),
        _ => "0.0".into(),
    };
    let _ = writeln!(csv, "{d},g_d,fourier,{},{agree}", fmt_ext(gf));
    let _ = writeln!(csv, "{d},g_d,time-domain,{},{agree}", fmt_ext(gt));
    let gs = green_star(d, &kernel)?;
    let gst = green_star_time_domain(d, 1e4)?;
    let agree_s = match (gs, gst) {
        (ExtReal::Finite(a), ExtReal::Finite(b)) => fmt_csv((a - b).abs() / b.abs()),
        _ => "0.0".into(),
    };
    let _ = writeln!(csv, "{d},g_d_star,fourier,{},{agree_s}", fmt_ext(gs));
    let _ = writeln!(csv, "{d},g_d_star,time-domain,{},{agree_s}", fmt_ext(gst));
    sink.write("green.csv", &csv)
}

fn run_lambda0(config: &ExperimentConfig, sink: &mut FileSink) -> Result<()> {
    if config.catalyst_kind() != CatalystKind::Isrw {
        return Err(Error::invalid("the lambda0 oracle applies to ISRW only"));
    }
    let mut params = config.model_params()?;
    params.kappa = 0.0;
    let lattice = config.lattice_spec()?;
    let grid: Vec<f64> = config.run.t_grid.iter().copied().filter(|&t| t > 0.0).collect();
    if grid.len() < 2 {
        return Err(Error::invalid("lambda0 needs a time grid with >= 2 positive times"));
    }
    let series = isrw_lambda0_series(&params, &lattice, &grid)?;
    let mut csv = String::from("t,lambda_p_t\n");
    for (t, v) in grid.iter().zip(&series) {
        let _ = writeln!(csv, "{},{}", fmt_csv(*t), fmt_csv(*v));
    }
    sink.write("lambda0.csv", &csv)?;

    let d = config.lattice.d;
    let kernel = KernelSpec::simple_random_walk(d);
    let closed = match green_function(d, &kernel)? {
        ExtReal::Finite(g) => closed_form_lambda0(&params, g)?,
        ExtReal::Infinite => ExtReal::Infinite,
    };
    // finite-volume tail exponent: the heat-kernel tail integrates to
    // t^{1 - d/2}
    let exponent = d as f64 / 2.0 - 1.0;
    let (extrapolated, rel) = if exponent > 0.0 && closed.is_finite() {
        let half = grid.len() / 2;
        let (lam, _) = extrapolate_power_tail(&grid[half..], &series[half..], exponent)?;
        let cf = closed.expect_finite("checked");
        (
            ExtReal::Finite(lam),
            fmt_csv((lam - cf).abs() / cf.abs()),
        )
    } else {
        (ExtReal::Infinite, "inf".into())
    };
    let mut summary =
        String::from("d,side,p,gamma,rho,closed_form,tail_extrapolated,rel_err\n");
    let _ = writeln!(
        summary,
        "{d},{},{},{},{},{},{},{rel}",
        lattice.side(),
        params.p,
        fmt_csv(params.gamma),
        fmt_csv(params.rho),
        fmt_ext(closed),
        fmt_ext(extrapolated),
    );
    sink.write("lambda0_summary.csv", &summary)
}

fn run_moments(config: &ExperimentConfig, sink: &mut FileSink) -> Result<()> {
    let model = config.catalyst_model()?;
    let params = config.model_params()?;
    let lattice = config.lattice_spec()?;
    let series = annealed_moment(
        &model,
        &params,
        &lattice,
        &config.run.t_grid,
        config.run.n_reps,
        config.estimator(),
        config.run.seed,
    )?;
    let mut csv = String::from("t,log_moment,stderr,n_reps\n");
    for ((t, lm), se) in series
        .times()
        .iter()
        .zip(series.log_moments())
        .zip(series.stderrs())
    {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt_csv(*t),
            fmt_csv(*lm),
            fmt_csv(*se),
            series.n_reps()
        );
    }
    sink.write("moments.csv", &csv)
}

fn run_sweep(config: &ExperimentConfig, sink: &mut FileSink, classify: bool) -> Result<()> {
    let model = config.catalyst_model()?;
    let params = config.model_params()?;
    let lattice = config.lattice_spec()?;
    let fit = FitOpts {
        burn_in: (config.run.fit_burn_in > 0.0).then_some(config.run.fit_burn_in),
    };
    let estimates = kappa_sweep(
        &model,
        &params,
        &lattice,
        &config.run.kappa_list,
        &config.run.t_grid,
        config.run.n_reps,
        config.estimator(),
        config.run.seed,
        fit,
    )?;
    let mut csv =
        String::from("model,d,L,p,kappa,lambda_hat,stderr,t_min,t_max,drift_flag\n");
    for e in &estimates {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            config.model.kind,
            lattice.d(),
            lattice.side(),
            e.p,
            fmt_csv(e.kappa),
            fmt_ext(e.lambda),
            fmt_csv(e.stderr),
            fmt_csv(e.window.0),
            fmt_csv(e.window.1),
            e.drift_flag
        );
    }
    sink.write("sweep.csv", &csv)?;

    if classify {
        let kernel = KernelSpec::simple_random_walk(lattice.d());
        let report = dichotomy_check(
            config.catalyst_kind(),
            lattice.d(),
            &kernel,
            &estimates,
            params.gamma,
            params.rho,
        )?;
        let mut txt = String::new();
        let _ = writeln!(txt, "catalyst = {}", report.kind.as_str());
        let _ = writeln!(txt, "dimension = {}", report.d);
        let _ = writeln!(txt, "predicted_regime = {}", report.predicted.as_str());
        let _ = writeln!(txt, "claim = {}", report.claim);
        let _ = writeln!(txt, "consistent = {}", report.consistent);
        for row in &report.rows {
            let _ = writeln!(
                txt,
                "row: kappa={} p={} lambda={} stderr={} in_band={} note={}",
                fmt_csv(row.kappa),
                row.p,
                fmt_ext(row.lambda),
                fmt_csv(row.stderr),
                row.in_band.map_or("n/a".to_string(), |b| b.to_string()),
                row.note
            );
        }
        sink.write("dichotomy.txt", &txt)?;
    }
    Ok(())
}

fn run_polaron(_config: &ExperimentConfig, sink: &mut FileSink) -> Result<()> {
    let mut summary =
        String::from("d,p_d,converged,sweeps,n,r_max,coulomb,gradient\n");
    for d in [3usize, 5] {
        let grid = GridConfig::default();
        let sol = solve_variational(d, grid)?;
        let _ = writeln!(
            summary,
            "{d},{},{},{},{},{},{},{}",
            fmt_csv(sol.p_d),
            sol.converged,
            sol.sweeps,
            grid.n,
            fmt_csv(grid.r_max),
            fmt_csv(sol.functional.coulomb),
            fmt_csv(sol.functional.gradient)
        );
        let mut profile = String::from("r,f_r\n");
        for (r, f) in sol.profile.radii().iter().zip(sol.profile.values()) {
            let _ = writeln!(profile, "{},{}", fmt_csv(*r), fmt_csv(*f));
        }
        sink.write(&format!("polaron_profile_d{d}.csv"), &profile)?;
    }
    sink.write("polaron_summary.csv", &summary)
}

fn run_oracle_check(config: &ExperimentConfig, sink: &mut FileSink) -> Result<()> {
    let model = config.catalyst_model()?;
    let params = config.model_params()?;
    let lattice = config.lattice_spec()?;
    let series = annealed_moment(
        &model,
        &params,
        &lattice,
        &config.run.t_grid,
        config.run.n_reps,
        config.estimator(),
        config.run.seed,
    )?;
    let mut csv = String::from("t,exact_log_moment,mc_log_moment,stderr,sigma_off\n");
    for ((t, lm), se) in series
        .times()
        .iter()
        .zip(series.log_moments())
        .zip(series.stderrs())
    {
        let exact = exact_moment_small(&model, &params, &lattice, *t, None)?;
        let sig = if *se > 0.0 {
            (lm - exact).abs() / se
        } else {
            0.0
        };
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            fmt_csv(*t),
            fmt_csv(exact),
            fmt_csv(*lm),
            fmt_csv(*se),
            fmt_csv(sig)
        );
    }
    sink.write("oracle_check.csv", &csv)
}

/// A generic matplotlib script that renders whichever result CSVs are
/// present next to it (exponent-vs-kappa curves, moment series, oracle
/// series, polaron profiles).
fn plot_script() -> String {
    r#"#!/usr/bin/env python3
"""Render the result CSVs in this directory."""
import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def rows(name):
    path = os.path.join(HERE, name)
    if not os.path.exists(path):
        return []
    with open(path) as fh:
        return list(csv.DictReader(fh))


def save(fig, name):
    fig.savefig(os.path.join(HERE, name), dpi=150, bbox_inches="tight")
    print("wrote", name)


sweep = rows("sweep.csv")
if sweep:
    fig, ax = plt.subplots()
    by_p = {}
    for r in sweep:
        by_p.setdefault(r["p"], []).append(r)
    for p, rs in sorted(by_p.items()):
        ks = [float(r["kappa"]) for r in rs]
        ls = [float(r["lambda_hat"]) for r in rs]
        es = [float(r["stderr"]) for r in rs]
        ax.errorbar(ks, ls, yerr=es, marker="o", capsize=3, label=f"p = {p}")
    ax.set_xlabel("kappa")
    ax.set_ylabel("lambda_p(kappa)")
    ax.legend()
    save(fig, "sweep.png")

moments = rows("moments.csv")
if moments:
    fig, ax = plt.subplots()
    ts = [float(r["t"]) for r in moments if float(r["t"]) > 0]
    ys = [float(r["log_moment"]) / float(r["t"]) for r in moments if float(r["t"]) > 0]
    ax.plot(ts, ys, marker="o")
    ax.set_xlabel("t")
    ax.set_ylabel("log E[u^p] / t")
    save(fig, "moments.png")

lam0 = rows("lambda0.csv")
if lam0:
    fig, ax = plt.subplots()
    ax.plot([float(r["t"]) for r in lam0], [float(r["lambda_p_t"]) for r in lam0], marker="o")
    for s in rows("lambda0_summary.csv"):
        if s["closed_form"] not in ("inf", "nan"):
            ax.axhline(float(s["closed_form"]), ls="--", color="k", label="closed form")
            ax.legend()
    ax.set_xlabel("t")
    ax.set_ylabel("Lambda_p(t)")
    save(fig, "lambda0.png")

for d in (3, 5):
    prof = rows(f"polaron_profile_d{d}.csv")
    if prof:
        fig, ax = plt.subplots()
        ax.plot([float(r["r"]) for r in prof], [float(r["f_r"]) for r in prof])
        ax.set_xlabel("r")
        ax.set_ylabel("f(r)")
        ax.set_title(f"maximizer profile, d = {d}")
        save(fig, f"polaron_d{d}.png")

oc = rows("oracle_check.csv")
if oc:
    fig, ax = plt.subplots()
    ts = [float(r["t"]) for r in oc]
    ax.errorbar(ts, [float(r["mc_log_moment"]) for r in oc],
                yerr=[float(r["stderr"]) for r in oc], marker="o", label="Monte Carlo")
    ax.plot(ts, [float(r["exact_log_moment"]) for r in oc], "k--", label="exact")
    ax.set_xlabel("t")
    ax.set_ylabel("log E[u^p]")
    ax.legend()
    save(fig, "oracle_check.png")
"#
    .to_string()
}
