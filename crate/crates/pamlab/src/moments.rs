//! Annealed moments `E[u(0,t)^p]` over catalyst ensembles, exact
//! small-system and `kappa = 0` oracles, and the closed form the latter
//! converges to.
//!
//! Two Monte Carlo estimators are provided and cross-check each other:
//!
//! * `pde-ensemble` — one PDE integration per sampled path, averaging
//!   `u(0,t)^p` in the log domain;
//! * `fk-dual` — per path, the product of `p` independent Feynman-Kac
//!   walks, an unbiased sample of `u(0,t)^p` conditional on the path.
//!
//! Replica seeds derive from the master seed and the replica index only,
//! so the same catalyst paths are reused across kappa values (common
//! random numbers) and replica sets can grow without reshuffling. All
//! reductions happen in replica order, making results bit-reproducible.

use rayon::prelude::*;

use crate::catalysts::{sample_path, CatalystKind, CatalystModel};
use crate::error::{Error, Result};
use crate::ext::ExtReal;
use crate::lattice::{laplacian_table, LatticeSpec};
use crate::reactant::{fk_walk_logs, integrate_pde, ModelParams};
use crate::seeding::seed_fingerprint;

/// Which Monte Carlo estimator backs a moment series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    PdeEnsemble,
    FkDual,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::PdeEnsemble => "pde-ensemble",
            Estimator::FkDual => "fk-dual",
        }
    }
}

/// Where a series came from: estimator, seed, lattice and parameters.
#[derive(Debug, Clone)]
pub struct Provenance {
    pub estimator: &'static str,
    pub master_seed: u64,
    pub model: String,
    pub d: usize,
    pub side: usize,
    pub params: ModelParams,
}

/// Log-domain estimates of `E[u(0,t)^p]` on a time grid with jackknife
/// standard errors.
#[derive(Debug, Clone)]
pub struct MomentSeries {
    p: u32,
    times: Vec<f64>,
    log_moment: Vec<f64>,
    stderr: Vec<f64>,
    n_reps: usize,
    degenerate: bool,
    provenance: Provenance,
}

impl MomentSeries {
    /// Assemble a series from explicit parts (synthetic inputs, loaders).
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn from_parts(
        p: u32,
        times: Vec<f64>,
        log_moment: Vec<f64>,
        stderr: Vec<f64>,
        n_reps: usize,
        provenance: Provenance,
    ) -> Self {
        assert_eq!(times.len(), log_moment.len());
        assert_eq!(times.len(), stderr.len());
        MomentSeries {
            p,
            times,
            log_moment,
            stderr,
            n_reps,
            degenerate: false,
            provenance,
        }
    }

    /// Wrap deterministic (zero-error) values, e.g. from an exact oracle.
    pub fn deterministic(
        p: u32,
        times: Vec<f64>,
        log_moment: Vec<f64>,
        provenance: Provenance,
    ) -> Result<Self> {
        if times.len() != log_moment.len() {
            return Err(Error::SizeMismatch {
                expected: times.len(),
                got: log_moment.len(),
            });
        }
        let n = times.len();
        Ok(MomentSeries {
            p,
            times,
            log_moment,
            stderr: vec![0.0; n],
            n_reps: 1,
            degenerate: false,
            provenance,
        })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn log_moments(&self) -> &[f64] {
        &self.log_moment
    }

    pub fn stderrs(&self) -> &[f64] {
        &self.stderr
    }

    pub fn n_reps(&self) -> usize {
        self.n_reps
    }

    /// True when every replica produced the identical sample at some time
    /// (zero-variance degenerate ensemble, e.g. `gamma = 0`).
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Finite-time exponent `Lambda_p(t) = log E[u^p] / (p t)` with its
    /// propagated standard error, skipping `t = 0`.
    pub fn lambda_points(&self) -> Vec<(f64, f64, f64)> {
        self.times
            .iter()
            .zip(self.log_moment.iter().zip(&self.stderr))
            .filter(|(&t, _)| t > 0.0)
            .map(|(&t, (&lm, &se))| {
                let pt = self.p as f64 * t;
                (t, lm / pt, se / pt)
            })
            .collect()
    }
}

/// Estimate `log E[u(0,t)^p]` on `t_grid` from `n_reps` independent
/// catalyst paths.
pub fn annealed_moment(
    model: &CatalystModel,
    params: &ModelParams,
    lattice: &LatticeSpec,
    t_grid: &[f64],
    n_reps: usize,
    estimator: Estimator,
    master_seed: u64,
) -> Result<MomentSeries> {
    let mut out = moment_ensemble(
        model,
        params,
        &[(params.kappa, params.p)],
        lattice,
        t_grid,
        n_reps,
        estimator,
        master_seed,
    )?;
    Ok(out.remove(0))
}

/// Shared-path ensemble over several `(kappa, p)` variants: each replica
/// draws one catalyst path and evaluates every variant on it, which gives
/// common random numbers across kappa and across moment orders.
#[allow(clippy::too_many_arguments)]
pub fn moment_ensemble(
    model: &CatalystModel,
    base: &ModelParams,
    variants: &[(f64, u32)],
    lattice: &LatticeSpec,
    t_grid: &[f64],
    n_reps: usize,
    estimator: Estimator,
    master_seed: u64,
) -> Result<Vec<MomentSeries>> {
    if n_reps < 2 {
        return Err(Error::invalid("moment ensembles need n_reps >= 2"));
    }
    if t_grid.is_empty() {
        return Err(Error::invalid("empty time grid"));
    }
    for w in t_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid("time grid must be strictly increasing"));
        }
    }
    if t_grid[0] < 0.0 {
        return Err(Error::invalid("time grid must start at t >= 0"));
    }
    if (model.rho() - base.rho).abs() > 1e-12 {
        return Err(Error::ConfigMismatch(
            "params.rho differs from the catalyst density".into(),
        ));
    }
    if variants.is_empty() {
        return Err(Error::invalid("no (kappa, p) variants requested"));
    }
    for &(kappa, p) in variants {
        if !(kappa >= 0.0) || p < 1 {
            return Err(Error::invalid("variants need kappa >= 0 and p >= 1"));
        }
    }
    let horizon = *t_grid.last().expect("non-empty grid");
    let n_times = t_grid.len();
    let n_var = variants.len();

    // distinct kappas, preserving first-appearance order
    let mut kappas: Vec<f64> = Vec::new();
    for &(k, _) in variants {
        if !kappas.iter().any(|&x| x == k) {
            kappas.push(k);
        }
    }
    let max_p_per_kappa: Vec<u32> = kappas
        .iter()
        .map(|&k| {
            variants
                .iter()
                .filter(|&&(vk, _)| vk == k)
                .map(|&(_, p)| p)
                .max()
                .expect("kappa came from variants")
        })
        .collect();

    // per replica: a (variant, time) matrix of log samples of u(0,t)^p
    let replica_samples: Vec<Result<Vec<f64>>> = (0..n_reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let path_seed = seed_fingerprint(master_seed, "path", r as u64);
            let path = sample_path(model, lattice, horizon.max(1e-12), path_seed)?;
            let mut mat = vec![0.0; n_var * n_times];
            for (ki, &kappa) in kappas.iter().enumerate() {
                let kp = ModelParams {
                    kappa,
                    ..*base
                };
                match estimator {
                    Estimator::PdeEnsemble => {
                        let snaps = integrate_pde(&path, &kp, lattice, t_grid)?;
                        for (ti, snap) in snaps.iter().enumerate() {
                            let log_u = snap.log_value(0);
                            for (vi, &(vk, p)) in variants.iter().enumerate() {
                                if vk == kappa {
                                    mat[vi * n_times + ti] = p as f64 * log_u;
                                }
                            }
                        }
                    }
                    Estimator::FkDual => {
                        let max_p = max_p_per_kappa[ki] as usize;
                        for (ti, &t) in t_grid.iter().enumerate() {
                            let walk_seed = seed_fingerprint(
                                master_seed,
                                &format!("walk-k{ki}-t{ti}"),
                                r as u64,
                            );
                            let logs =
                                fk_walk_logs(&path, &kp, lattice, t, max_p, walk_seed)?;
                            for (vi, &(vk, p)) in variants.iter().enumerate() {
                                if vk == kappa {
                                    mat[vi * n_times + ti] =
                                        logs[..p as usize].iter().sum();
                                }
                            }
                        }
                    }
                }
            }
            Ok(mat)
        })
        .collect();

    let mut matrices = Vec::with_capacity(n_reps);
    for m in replica_samples {
        matrices.push(m?);
    }

    let mut series = Vec::with_capacity(n_var);
    for (vi, &(kappa, p)) in variants.iter().enumerate() {
        let mut log_moment = Vec::with_capacity(n_times);
        let mut stderr = Vec::with_capacity(n_times);
        let mut degenerate = false;
        for ti in 0..n_times {
            let samples: Vec<f64> = matrices.iter().map(|m| m[vi * n_times + ti]).collect();
            let (lm, se, degen) = log_mean_with_jackknife(&samples);
            log_moment.push(lm);
            stderr.push(se);
            degenerate |= degen;
        }
        series.push(MomentSeries {
            p,
            times: t_grid.to_vec(),
            log_moment,
            stderr,
            n_reps,
            degenerate,
            provenance: Provenance {
                estimator: estimator.as_str(),
                master_seed,
                model: format!("{} rho={}", model.kind().as_str(), model.rho()),
                d: lattice.d(),
                side: lattice.side(),
                params: ModelParams {
                    kappa,
                    p,
                    ..*base
                },
            },
        });
    }
    Ok(series)
}

/// `log((1/n) sum e^{x_i})` with a leave-one-out jackknife standard error
/// of the log, computed in shifted exponentials so no sample overflows.
pub(crate) fn log_mean_with_jackknife(samples: &[f64]) -> (f64, f64, bool) {
    let n = samples.len();
    let m = samples.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let ws: Vec<f64> = samples.iter().map(|&x| (x - m).exp()).collect();
    let total: f64 = ws.iter().sum();
    let log_mean = m + (total / n as f64).ln();
    let degenerate = samples.iter().all(|&x| x == samples[0]);
    if n < 2 || degenerate {
        return (log_mean, 0.0, degenerate);
    }
    let mut theta = Vec::with_capacity(n);
    let mut theta_sum = 0.0;
    for &w in &ws {
        let rest = (total - w).max(0.0);
        let t = if rest > 0.0 {
            m + (rest / (n as f64 - 1.0)).ln()
        } else {
            f64::NEG_INFINITY
        };
        theta.push(t);
        theta_sum += t;
    }
    let theta_bar = theta_sum / n as f64;
    if !theta_bar.is_finite() {
        // one sample carries all the mass: error bar is unbounded
        return (log_mean, f64::INFINITY, false);
    }
    let var =
        theta.iter().map(|&t| (t - theta_bar) * (t - theta_bar)).sum::<f64>() * (n as f64 - 1.0)
            / n as f64;
    (log_mean, var.sqrt(), false)
}

// ---------------------------------------------------------------------------
// Exact finite-system oracle (joint master equation)
// ---------------------------------------------------------------------------

/// Exact `log E[u(0,t)^p]` on a small torus by integrating the joint
/// forward equation on (catalyst configurations) x (p walk positions):
///
/// ```text
///   dv/dt = [ L_cat + kappa sum_q Lap_q + gamma sum_q eta(x_q) - p delta ] v,
/// ```
///
/// `v_0 = 1`, answer `log sum_eta pi(eta) v_t(eta, 0, ..., 0)` with `pi`
/// the product initial law. SEP is exact; ISRW is admitted with a per-site
/// occupancy cap (`isrw_cap`, default 3), a documented approximation whose
/// adequacy is checked by doubling the cap. The voter model is excluded
/// (non-reversible, so this forward representation does not apply).
pub fn exact_moment_small(
    model: &CatalystModel,
    params: &ModelParams,
    lattice: &LatticeSpec,
    t: f64,
    isrw_cap: Option<u32>,
) -> Result<f64> {
    const BUDGET: usize = 1_000_000;
    if !(t >= 0.0) {
        return Err(Error::invalid("time must be >= 0"));
    }
    if (model.rho() - params.rho).abs() > 1e-12 {
        return Err(Error::ConfigMismatch(
            "params.rho differs from the catalyst density".into(),
        ));
    }
    let sites = lattice.sites();
    let p = params.p as usize;

    let (base, site_pmf): (u64, Vec<f64>) = match model.kind() {
        CatalystKind::Sep => {
            let rho = model.rho();
            (2, vec![1.0 - rho, rho])
        }
        CatalystKind::Isrw => {
            let cap = isrw_cap.unwrap_or(3);
            let rho = model.rho();
            // Poisson(rho) truncated to [0, cap], renormalized
            let mut pmf = Vec::with_capacity(cap as usize + 1);
            let mut term = (-rho).exp();
            let mut total = 0.0;
            for k in 0..=cap {
                pmf.push(term);
                total += term;
                term *= rho / (k + 1) as f64;
            }
            for v in &mut pmf {
                *v /= total;
            }
            ((cap + 1) as u64, pmf)
        }
        CatalystKind::Svm => {
            return Err(Error::invalid(
                "exact_moment_small does not support the voter model",
            ))
        }
    };

    let cat_states = (base as f64).powi(sites as i32);
    let walk_states = (sites as f64).powi(p as i32);
    let total_states = cat_states * walk_states;
    if !(total_states <= BUDGET as f64) {
        return Err(Error::StateSpaceBudget {
            states: total_states as usize,
            budget: BUDGET,
        });
    }
    let n_cat = cat_states as usize;
    let n_walk = walk_states as usize;
    let n = n_cat * n_walk;

    let gen = build_joint_generator(model, params, lattice, base as u32, n_cat, n_walk)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let v = gen.expmv(t, vec![1.0; n]);

    // sum over catalyst configurations with all walks at the origin
    let mut acc = 0.0;
    for c in 0..n_cat {
        let mut pi = 1.0;
        let mut rem = c as u64;
        for _ in 0..sites {
            pi *= site_pmf[(rem % base) as usize];
            rem /= base;
        }
        acc += pi * v.values[c * n_walk];
    }
    Ok(acc.ln() + v.log_scale)
}

/// Sparse joint generator plus diagonal, with a uniformized matrix
/// exponential. Off-diagonal entries are nonnegative by construction, so
/// the Taylor series of the shifted operator has no cancellation.
pub(crate) struct JointGenerator {
    n: usize,
    row_ptr: Vec<u32>,
    cols: Vec<u32>,
    rates: Vec<f64>,
    diag: Vec<f64>,
}

pub(crate) struct ScaledVector {
    pub values: Vec<f64>,
    pub log_scale: f64,
}

impl JointGenerator {
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn n(&self) -> usize {
        self.n
    }

    /// Dense copy of the full matrix (diagonal included); test oracles
    /// diagonalize this independently.
    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn to_dense(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            m[i * self.n + i] = self.diag[i];
            for e in self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize {
                m[i * self.n + self.cols[e] as usize] += self.rates[e];
            }
        }
        m
    }

    /// `exp(tA) v` by uniformization: with `c = max diag`, `B = A - cI`
    /// has nonpositive diagonal, and `e^{tB} v` is summed as a positive
    /// Poisson-weighted series of powers of `I + B/Lambda`; the factor
    /// `e^{ct}` is returned as a log scale.
    pub(crate) fn expmv(&self, t: f64, v: Vec<f64>) -> ScaledVector {
        let c = self.diag.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lambda = self
            .diag
            .iter()
            .fold(0.0f64, |a, &b| a.max(c - b));
        let mut values = v;
        if lambda == 0.0 {
            // no off-diagonal transitions: pure scaling
            return ScaledVector {
                values,
                log_scale: c * t,
            };
        }
        let steps = (lambda * t / 200.0).ceil().max(1.0) as usize;
        let tau = t / steps as f64;
        let lt = lambda * tau;
        let k_max = (lt + 12.0 * lt.sqrt() + 25.0).ceil() as usize;
        let mut z = vec![0.0; self.n];
        for _ in 0..steps {
            let mut acc = vec![0.0; self.n];
            let mut w = (-lt).exp();
            for (a, &x) in acc.iter_mut().zip(values.iter()) {
                *a = w * x;
            }
            for k in 1..=k_max {
                // z = (I + B/Lambda) values
                self.apply_p(&values, &mut z, c, lambda);
                std::mem::swap(&mut values, &mut z);
                w *= lt / k as f64;
                for (a, &x) in acc.iter_mut().zip(values.iter()) {
                    *a += w * x;
                }
            }
            values = acc;
        }
        ScaledVector {
            values,
            log_scale: c * t,
        }
    }

    fn apply_p(&self, x: &[f64], out: &mut [f64], c: f64, lambda: f64) {
        for i in 0..self.n {
            let mut acc = (1.0 + (self.diag[i] - c) / lambda) * x[i];
            for e in self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize {
                acc += self.rates[e] / lambda * x[self.cols[e] as usize];
            }
            out[i] = acc;
        }
    }
}

/// Rows are source states: `A[s, s']` is the rate of jumping to `s'`.
pub(crate) fn build_joint_generator(
    model: &CatalystModel,
    params: &ModelParams,
    lattice: &LatticeSpec,
    base: u32,
    n_cat: usize,
    n_walk: usize,
) -> Result<JointGenerator> {
    let sites = lattice.sites();
    let p = params.p as usize;
    let n = n_cat * n_walk;
    let cap = base - 1; // max per-site value (1 for SEP)
    let d = lattice.d();
    let two_d = 2 * d;
    let neighbor = lattice.neighbor_table();

    // site-value decode tables: value of site j in catalyst config c
    let pow_site: Vec<u64> = (0..sites).map(|j| (base as u64).pow(j as u32)).collect();
    let pow_walk: Vec<usize> = (0..p).map(|q| sites.pow(q as u32)).collect();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut rates = Vec::new();
    let mut diag = vec![0.0; n];

    // unordered bonds for SEP: (x, x+z) over half-space offsets
    let sep_bonds: Vec<(Vec<u32>, f64)> = match model.kind() {
        CatalystKind::Sep => {
            let kernel = model.kernel().expect("SEP has a kernel");
            kernel
                .entries()
                .iter()
                .filter(|(z, w)| *w > 0.0 && half_space_offset(z))
                .map(|(z, w)| (lattice.shift_table(z).expect("validated"), *w))
                .collect()
        }
        _ => Vec::new(),
    };

    row_ptr.push(0u32);
    let mut site_vals = vec![0u32; sites];
    for s in 0..n {
        let c_idx = s / n_walk;
        let w_idx = s % n_walk;
        let mut rem = c_idx as u64;
        for j in 0..sites {
            site_vals[j] = (rem % base as u64) as u32;
            rem /= base as u64;
        }
        let mut out_rate = 0.0;

        match model.kind() {
            CatalystKind::Sep => {
                for (shift, w) in &sep_bonds {
                    for x in 0..sites {
                        let y = shift[x] as usize;
                        if site_vals[x] != site_vals[y] {
                            // swap flips both bits: c' = c +- pow(x) -+ pow(y)
                            let (hi, lo) = if site_vals[x] == 1 { (x, y) } else { (y, x) };
                            let c_new =
                                c_idx as u64 - pow_site[hi] + pow_site[lo];
                            cols.push((c_new as usize * n_walk + w_idx) as u32);
                            rates.push(*w);
                            out_rate += w;
                        }
                    }
                }
            }
            CatalystKind::Isrw => {
                let jump = 1.0 / two_d as f64;
                for x in 0..sites {
                    let cnt = site_vals[x];
                    if cnt == 0 {
                        continue;
                    }
                    for dir in 0..two_d {
                        let y = neighbor[x * two_d + dir] as usize;
                        if site_vals[y] >= cap {
                            continue; // truncation: move suppressed at the cap
                        }
                        let rate = cnt as f64 * jump;
                        let c_new = c_idx as u64 - pow_site[x] + pow_site[y];
                        cols.push((c_new as usize * n_walk + w_idx) as u32);
                        rates.push(rate);
                        out_rate += rate;
                    }
                }
            }
            CatalystKind::Svm => unreachable!("rejected earlier"),
        }

        // walk moves: each walk steps to each neighbor at rate kappa
        if params.kappa > 0.0 {
            for q in 0..p {
                let pos = (w_idx / pow_walk[q]) % sites;
                for dir in 0..two_d {
                    let y = neighbor[pos * two_d + dir] as usize;
                    let w_new =
                        (w_idx as i64 + (y as i64 - pos as i64) * pow_walk[q] as i64) as usize;
                    cols.push((c_idx * n_walk + w_new) as u32);
                    rates.push(params.kappa);
                    out_rate += params.kappa;
                }
            }
        }

        // diagonal: -total out rate + potential
        let mut potential = 0.0;
        for q in 0..p {
            let pos = (w_idx / pow_walk[q]) % sites;
            potential += site_vals[pos] as f64;
        }
        diag[s] = -out_rate + params.gamma * potential - params.p as f64 * params.delta;
        row_ptr.push(cols.len() as u32);
    }

    Ok(JointGenerator {
        n,
        row_ptr,
        cols,
        rates,
        diag,
    })
}

fn half_space_offset(z: &[i64]) -> bool {
    for &c in z {
        if c > 0 {
            return true;
        }
        if c < 0 {
            return false;
        }
    }
    false
}

// ---------------------------------------------------------------------------
// kappa = 0 oracle for ISRW (Poissonization) and its closed-form limit
// ---------------------------------------------------------------------------

/// Exact finite-volume `Lambda_p(t)` at `kappa = 0` for the ISRW catalyst.
///
/// For a Poisson field of independent walks,
/// `E[exp(p gamma int_0^t xi(0,s) ds)] = exp(rho sum_x (v_t(x) - 1))`
/// where `v` solves the one-walk tilted equation
/// `dv/dt = (Lap/2d) v + p gamma 1_{x=0} v`, `v_0 = 1`, on the torus.
/// Returns `rho sum_x (v_t(x) - 1) / (p t)`.
pub fn isrw_lambda0_oracle(params: &ModelParams, lattice: &LatticeSpec, t: f64) -> Result<f64> {
    Ok(isrw_lambda0_series(params, lattice, &[t])?[0])
}

/// [`isrw_lambda0_oracle`] evaluated along an increasing grid in one sweep.
pub fn isrw_lambda0_series(
    params: &ModelParams,
    lattice: &LatticeSpec,
    t_grid: &[f64],
) -> Result<Vec<f64>> {
    if params.kappa != 0.0 {
        return Err(Error::invalid(
            "the Poissonization oracle requires kappa = 0",
        ));
    }
    for w in t_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid("time grid must be strictly increasing"));
        }
    }
    if t_grid.is_empty() || t_grid[0] <= 0.0 {
        return Err(Error::invalid("grid times must be positive"));
    }
    let n = lattice.sites();
    let d = lattice.d();
    let table = lattice.neighbor_table();
    let pg = params.p as f64 * params.gamma;
    let inv_2d = 1.0 / (2.0 * d as f64);
    let rhs = |v: &[f64], out: &mut [f64], lap: &mut [f64]| {
        laplacian_table(v, &table, d, lap);
        for i in 0..n {
            out[i] = inv_2d * lap[i];
        }
        out[0] += pg * v[0];
    };
    let mut v = vec![1.0; n];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut lap = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let h_target = 0.05 / (1.0f64).max(pg);
    let mut out = Vec::with_capacity(t_grid.len());
    let mut t_cur = 0.0;
    for &t in t_grid {
        let m = ((t - t_cur) / h_target).ceil().max(1.0) as usize;
        let h = (t - t_cur) / m as f64;
        for _ in 0..m {
            rhs(&v, &mut k1, &mut lap);
            for i in 0..n {
                tmp[i] = v[i] + 0.5 * h * k1[i];
            }
            rhs(&tmp, &mut k2, &mut lap);
            for i in 0..n {
                tmp[i] = v[i] + 0.5 * h * k2[i];
            }
            rhs(&tmp, &mut k3, &mut lap);
            for i in 0..n {
                tmp[i] = v[i] + h * k3[i];
            }
            rhs(&tmp, &mut k4, &mut lap);
            for i in 0..n {
                v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        t_cur = t;
        let sum: f64 = v.iter().map(|&x| x - 1.0).sum();
        if !sum.is_finite() {
            return Err(Error::NumericalBlowup {
                t,
                h,
                detail: "tilted mass diverged beyond f64 range".into(),
            });
        }
        out.push(params.rho * sum / (params.p as f64 * t));
    }
    Ok(out)
}

/// The `t -> inf, L -> inf` limit of the oracle:
/// `lambda_p(0) = rho gamma (1/G_d) / ((1/G_d) - p gamma)` when
/// `p gamma < 1/G_d`, else divergent (the moment grows faster than
/// exponentially and no finite exponent exists).
pub fn closed_form_lambda0(params: &ModelParams, g_d: f64) -> Result<ExtReal> {
    if !(g_d.is_finite() && g_d > 0.0) {
        return Err(Error::MissingConstant(
            "closed form needs a finite positive G_d".into(),
        ));
    }
    let inv_g = 1.0 / g_d;
    let pg = params.p as f64 * params.gamma;
    if pg >= inv_g {
        return Ok(ExtReal::Infinite);
    }
    Ok(ExtReal::Finite(
        params.rho * params.gamma * inv_g / (inv_g - pg),
    ))
}
