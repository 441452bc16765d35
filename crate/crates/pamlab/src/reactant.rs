//! The reactant field `u`: solve `du/dt = kappa Lap u + (gamma xi - delta) u`
//! with `u(.,0) = 1` along a fixed catalyst path, and estimate `u(0,t)` by
//! the Feynman-Kac dual
//!
//! ```text
//!   u(x,t) = E_x[ exp( gamma int_0^t xi(X(s), t-s) ds - delta t ) ],
//! ```
//!
//! where `X` is a rate-`2 d kappa` simple random walk. The walk reads the
//! field at the reversed time `t - s` by direct event-log lookup, so the
//! estimator needs no reversibility of the catalyst and is valid for the
//! voter model as well.
//!
//! Growth can be super-exponential (recurrent ISRW regimes), so the field
//! is stored as per-site mantissas with one shared log-offset, and all
//! downstream statistics consume log-values.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::catalysts::CatalystPath;
use crate::error::{Error, Result};
use crate::lattice::{laplacian_table, LatticeSpec};

/// The parameter vector of the reactant equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Diffusion constant `kappa >= 0` (walk step rate `2 d kappa`).
    pub kappa: f64,
    /// Coupling constant `gamma >= 0`.
    pub gamma: f64,
    /// Catalyst density (must match the catalyst model in use).
    pub rho: f64,
    /// Death rate `delta >= 0`; equivalent to multiplying by `e^{-delta t}`.
    pub delta: f64,
    /// Moment order `p >= 1`.
    pub p: u32,
}

impl ModelParams {
    pub fn new(kappa: f64, gamma: f64, rho: f64, delta: f64, p: u32) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::invalid("kappa must be finite and >= 0"));
        }
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::invalid("gamma must be finite and >= 0"));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid("rho must be finite and > 0"));
        }
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::invalid("delta must be finite and >= 0"));
        }
        if p < 1 {
            return Err(Error::invalid("moment order p must be >= 1"));
        }
        Ok(ModelParams {
            kappa,
            gamma,
            rho,
            delta,
            p,
        })
    }
}

/// The reactant field at one time: `u(x) = mantissa(x) * exp(log_offset)`.
///
/// After each renormalization the largest mantissa lies in `[1/2, 2]`; the
/// offset changes only by multiples of `ln 2`, so rescaling is exact.
#[derive(Debug, Clone)]
pub struct ReactantField {
    mantissa: Vec<f64>,
    log_offset: f64,
    time: f64,
}

impl ReactantField {
    fn flat(sites: usize, time: f64) -> Self {
        ReactantField {
            mantissa: vec![1.0; sites],
            log_offset: 0.0,
            time,
        }
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn log_offset(&self) -> f64 {
        self.log_offset
    }

    pub fn mantissas(&self) -> &[f64] {
        &self.mantissa
    }

    /// `u(x)` in linear scale (may overflow to `inf` for extreme offsets;
    /// prefer [`ReactantField::log_value`]).
    pub fn value(&self, site: usize) -> f64 {
        self.mantissa[site] * self.log_offset.exp()
    }

    /// `log u(x)`.
    pub fn log_value(&self, site: usize) -> f64 {
        self.mantissa[site].ln() + self.log_offset
    }

    pub fn log_values(&self) -> Vec<f64> {
        (0..self.mantissa.len())
            .map(|i| self.log_value(i))
            .collect()
    }

    /// Snapshot export: one `site,log_u` row per site.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> crate::error::Result<()> {
        writeln!(w, "site,log_u")?;
        for i in 0..self.mantissa.len() {
            writeln!(w, "{i},{:.9e}", self.log_value(i))?;
        }
        Ok(())
    }

    /// Scale by an exact power of two so the max mantissa returns to
    /// `[1/2, 2]`. Applied whenever the max leaves `[2^-16, 2^16]`.
    fn renormalize(&mut self) {
        let max = self
            .mantissa
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()));
        if max == 0.0 || !max.is_finite() {
            return; // blow-up is reported by the integrator
        }
        if (6.1e-5..=1.6e4).contains(&max) {
            return; // still inside [2^-16, 2^16] with slack
        }
        let k = max.log2().round() as i32;
        let scale = 2.0f64.powi(-k);
        for v in &mut self.mantissa {
            *v *= scale;
        }
        self.log_offset += k as f64 * std::f64::consts::LN_2;
    }
}

/// Integrator options; `h_max = None` uses the default step bound
/// `0.1 / max(gamma * xi_max, 2 d kappa, 1)` with `xi_max` the realized
/// maximum of the field along the path.
#[derive(Debug, Clone, Copy, Default)]
pub struct PdeOpts {
    pub h_max: Option<f64>,
}

/// Integrate the reactant equation along `path`, returning a snapshot at
/// each requested output time.
///
/// Between consecutive catalyst events the field `xi` is constant and the
/// flow is advanced by second-order Strang splitting: an exact reaction
/// half-step `u <- u exp((gamma xi - delta) h / 2)`, a fourth-order
/// explicit (RK4) diffusion step of `du/dt = kappa Lap u`, and another
/// reaction half-step, with substeps `h <= min(event gap, h_max)`.
pub fn integrate_pde(
    path: &CatalystPath,
    params: &ModelParams,
    lattice: &LatticeSpec,
    out_times: &[f64],
) -> Result<Vec<ReactantField>> {
    integrate_pde_opts(path, params, lattice, out_times, PdeOpts::default())
}

/// [`integrate_pde`] with explicit options (step-size studies).
pub fn integrate_pde_opts(
    path: &CatalystPath,
    params: &ModelParams,
    lattice: &LatticeSpec,
    out_times: &[f64],
    opts: PdeOpts,
) -> Result<Vec<ReactantField>> {
    let n = lattice.sites();
    if path.lattice() != lattice {
        return Err(Error::ConfigMismatch(
            "path lattice differs from the integration lattice".into(),
        ));
    }
    let t0 = path.start_time();
    for w in out_times.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::invalid("output times must be strictly increasing"));
        }
    }
    if let (Some(&first), Some(&last)) = (out_times.first(), out_times.last()) {
        if first < t0 || last > path.horizon() {
            return Err(Error::TimeOutOfRange {
                t: if first < t0 { first } else { last },
                lo: t0,
                hi: path.horizon(),
            });
        }
    }

    let xi_max = path.max_value() as f64;
    let h_max = opts.h_max.unwrap_or_else(|| {
        0.1 / (params.gamma * xi_max)
            .max(2.0 * lattice.d() as f64 * params.kappa)
            .max(1.0)
    });
    if !(h_max > 0.0) {
        return Err(Error::invalid("h_max must be positive"));
    }

    let table = lattice.neighbor_table();
    let mut xi: Vec<u32> = path.initial().occupancy.values();
    let mut field = ReactantField::flat(n, t0);
    let mut snapshots = Vec::with_capacity(out_times.len());
    let mut out_iter = out_times.iter().peekable();
    let mut ev_iter = path.events().iter().peekable();
    let mut reaction = ReactionTable::new(params.gamma, params.delta);
    let mut scratch = Scratch::new(n);
    let mut t = t0;

    // snapshots requested at the start time
    while let Some(&&ot) = out_iter.peek() {
        if ot > t {
            break;
        }
        let mut snap = field.clone();
        snap.time = ot;
        snapshots.push(snap);
        out_iter.next();
    }

    loop {
        let next_event = ev_iter.peek().map(|e| e.time);
        let next_out = out_iter.peek().map(|&&ot| ot);
        let stop = match (next_event, next_out) {
            (Some(te), Some(to)) => te.min(to),
            (Some(te), None) => te,
            (None, Some(to)) => to,
            (None, None) => break,
        };
        if stop > t {
            advance_interval(
                &mut field,
                &xi,
                params,
                lattice.d(),
                &table,
                stop - t,
                h_max,
                &mut reaction,
                &mut scratch,
            )
            .map_err(|detail| Error::NumericalBlowup {
                t,
                h: h_max,
                detail,
            })?;
            t = stop;
            field.time = t;
        }
        if let Some(&&ot) = out_iter.peek() {
            if ot <= t {
                let mut snap = field.clone();
                snap.time = ot;
                snapshots.push(snap);
                out_iter.next();
                continue;
            }
        }
        if let Some(ev) = ev_iter.peek() {
            if ev.time <= t {
                for &(site, val) in &ev.changes {
                    xi[site as usize] = val;
                }
                ev_iter.next();
            }
        }
    }
    Ok(snapshots)
}

/// Memoized per-count reaction factors `exp((gamma c - delta) h / 2)` for
/// the current substep size.
struct ReactionTable {
    gamma: f64,
    delta: f64,
    half_h: f64,
    factors: Vec<f64>,
}

impl ReactionTable {
    fn new(gamma: f64, delta: f64) -> Self {
        ReactionTable {
            gamma,
            delta,
            half_h: f64::NAN,
            factors: Vec::new(),
        }
    }

    fn set_half_step(&mut self, half_h: f64, max_count: u32) {
        if self.half_h == half_h && self.factors.len() > max_count as usize {
            return;
        }
        self.half_h = half_h;
        self.factors.clear();
        for c in 0..=max_count {
            self.factors
                .push(((self.gamma * c as f64 - self.delta) * half_h).exp());
        }
    }

    #[inline]
    fn factor(&self, count: u32) -> f64 {
        self.factors[count as usize]
    }
}

struct Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn advance_interval(
    field: &mut ReactantField,
    xi: &[u32],
    params: &ModelParams,
    d: usize,
    table: &[u32],
    gap: f64,
    h_max: f64,
    reaction: &mut ReactionTable,
    scratch: &mut Scratch,
) -> std::result::Result<(), String> {
    let m = (gap / h_max).ceil().max(1.0) as usize;
    let h = gap / m as f64;
    let max_count = xi.iter().copied().max().unwrap_or(0);
    reaction.set_half_step(0.5 * h, max_count);
    let kappa = params.kappa;
    for _ in 0..m {
        for (u, &c) in field.mantissa.iter_mut().zip(xi) {
            *u *= reaction.factor(c);
        }
        if kappa > 0.0 {
            rk4_diffusion(&mut field.mantissa, kappa, h, d, table, scratch);
        }
        for (u, &c) in field.mantissa.iter_mut().zip(xi) {
            *u *= reaction.factor(c);
        }
        field.renormalize();
    }
    let max = field.mantissa.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if !max.is_finite() {
        return Err(format!(
            "non-finite field after interval of {gap} with {m} substeps"
        ));
    }
    Ok(())
}

fn rk4_diffusion(
    u: &mut [f64],
    kappa: f64,
    h: f64,
    d: usize,
    table: &[u32],
    scratch: &mut Scratch,
) {
    let n = u.len();
    let Scratch { k1, k2, k3, k4, tmp } = scratch;
    laplacian_table(u, table, d, k1);
    for i in 0..n {
        tmp[i] = u[i] + 0.5 * h * kappa * k1[i];
    }
    laplacian_table(tmp, table, d, k2);
    for i in 0..n {
        tmp[i] = u[i] + 0.5 * h * kappa * k2[i];
    }
    laplacian_table(tmp, table, d, k3);
    for i in 0..n {
        tmp[i] = u[i] + h * kappa * k3[i];
    }
    laplacian_table(tmp, table, d, k4);
    for i in 0..n {
        u[i] += h * kappa / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

// ---------------------------------------------------------------------------
// Feynman-Kac dual
// ---------------------------------------------------------------------------

/// Monte Carlo output of the Feynman-Kac estimator at `(0, t)`.
#[derive(Debug, Clone)]
pub struct FkEstimate {
    /// `log` of the sample mean of `exp(gamma I - delta t)` over walks.
    pub log_mean: f64,
    /// Standard error of `log_mean` (delta method on the log).
    pub log_stderr: f64,
    /// `log` of one unbiased sample of `u(0,t)^p` (product over the first
    /// `p` independent walks), conditional on the path.
    pub log_moment_sample: f64,
    pub n_walks: usize,
}

/// Estimate `u(0,t)` from `n_walks` independent rate-`2 d kappa` walks,
/// each accumulating `gamma int_0^t xi(X(s), t-s) ds` exactly along the
/// piecewise-constant field and walk trajectory.
pub fn fk_estimate(
    path: &CatalystPath,
    params: &ModelParams,
    lattice: &LatticeSpec,
    t: f64,
    n_walks: usize,
    seed: u64,
) -> Result<FkEstimate> {
    if n_walks < 1 {
        return Err(Error::invalid("fk_estimate needs at least one walk"));
    }
    if path.lattice() != lattice {
        return Err(Error::ConfigMismatch(
            "path lattice differs from the walk lattice".into(),
        ));
    }
    let t0 = path.start_time();
    if !(t >= t0 && t <= path.horizon()) {
        return Err(Error::TimeOutOfRange {
            t,
            lo: t0,
            hi: path.horizon(),
        });
    }
    let total = n_walks.max(params.p as usize);
    let logs = fk_walk_logs(path, params, lattice, t, total, seed)?;
    let log_moment_sample = logs[..params.p as usize].iter().sum();
    let logs = &logs[..n_walks];
    // shifted-exponential mean and delta-method error on the log
    let m = logs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let ws: Vec<f64> = logs.iter().map(|&l| (l - m).exp()).collect();
    let mean_w = ws.iter().sum::<f64>() / n_walks as f64;
    let log_mean = m + mean_w.ln();
    let log_stderr = if n_walks > 1 {
        let var_w = ws
            .iter()
            .map(|&w| (w - mean_w) * (w - mean_w))
            .sum::<f64>()
            / (n_walks as f64 - 1.0);
        (var_w / n_walks as f64).sqrt() / mean_w
    } else {
        0.0
    };
    Ok(FkEstimate {
        log_mean,
        log_stderr,
        log_moment_sample,
        n_walks,
    })
}

/// Per-walk log weights `gamma I_w - delta t` for `n` independent walks
/// (the building block shared by [`fk_estimate`] and the moment
/// ensembles: summing the first `p` gives one unbiased `log` sample of
/// `u(0,t)^p`).
pub(crate) fn fk_walk_logs(
    path: &CatalystPath,
    params: &ModelParams,
    lattice: &LatticeSpec,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let t0 = path.start_time();
    if !(t >= t0 && t <= path.horizon()) {
        return Err(Error::TimeOutOfRange {
            t,
            lo: t0,
            hi: path.horizon(),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut logs = Vec::with_capacity(n);
    for _ in 0..n {
        let integral = fk_walk_integral(path, params, lattice, t, &mut rng)?;
        logs.push(params.gamma * integral - params.delta * t);
    }
    Ok(logs)
}

/// One walk from the origin: exact `int_0^t xi(X(s), t-s) ds`.
fn fk_walk_integral(
    path: &CatalystPath,
    params: &ModelParams,
    lattice: &LatticeSpec,
    t: f64,
    rng: &mut ChaCha12Rng,
) -> Result<f64> {
    let rate = 2.0 * lattice.d() as f64 * params.kappa;
    let two_d = 2 * lattice.d();
    let t0 = path.start_time();
    let mut pos = 0usize;
    let mut s = 0.0;
    let mut integral = 0.0;
    loop {
        let jump = if rate > 0.0 {
            s - (1.0 - rng.gen::<f64>()).ln() / rate
        } else {
            f64::INFINITY
        };
        let seg_end = jump.min(t);
        // xi(pos, t - s') for s' in [s, seg_end) sweeps the reversed
        // window [t - seg_end, t - s] (shifted by the path start time)
        integral += path.integrate_site(pos, t0 + (t - seg_end), t0 + (t - s))?;
        if jump >= t {
            return Ok(integral);
        }
        s = jump;
        let dir = rng.gen_range(0..two_d);
        pos = lattice.neighbor(pos, dir / 2, if dir % 2 == 0 { 1 } else { -1 });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalysts::{
        evolve, sample_path, CatalystModel, CatalystState, Occupancy, SvmStart,
    };
    use crate::lattice::KernelSpec;
    use approx::assert_relative_eq;

    fn srw(d: usize) -> KernelSpec {
        KernelSpec::simple_random_walk(d)
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(-0.1, 1.0, 1.0, 0.0, 1).is_err());
        assert!(ModelParams::new(0.1, 1.0, 1.0, 0.0, 0).is_err());
        assert!(ModelParams::new(0.1, 0.0, 1.0, 0.3, 2).is_ok());
    }

    #[test]
    fn zero_coupling_keeps_flat_field_exactly() {
        let lat = LatticeSpec::new(1, 12).unwrap();
        let model = CatalystModel::isrw(1.0).unwrap();
        let path = sample_path(&model, &lat, 3.0, 7).unwrap();
        let params = ModelParams::new(0.8, 0.0, 1.0, 0.0, 1).unwrap();
        let snaps = integrate_pde(&path, &params, &lat, &[0.0, 1.0, 3.0]).unwrap();
        for snap in snaps {
            for x in 0..lat.sites() {
                assert_eq!(snap.log_value(x), 0.0, "u must stay exactly 1");
            }
        }
    }

    #[test]
    fn kappa_zero_matches_event_log_formula() {
        let lat = LatticeSpec::new(1, 10).unwrap();
        let model = CatalystModel::sep(0.5, srw(1)).unwrap();
        let path = sample_path(&model, &lat, 5.0, 3).unwrap();
        let params = ModelParams::new(0.0, 0.7, 0.5, 0.2, 1).unwrap();
        let snaps = integrate_pde(&path, &params, &lat, &[2.0, 5.0]).unwrap();
        for snap in &snaps {
            let t = snap.time();
            for x in 0..lat.sites() {
                let exact =
                    params.gamma * path.integrate_site(x, 0.0, t).unwrap() - params.delta * t;
                let got = snap.log_value(x);
                assert!(
                    (got - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                    "site {x} t {t}: integrator {got} vs event-log {exact}"
                );
            }
        }
    }

    #[test]
    fn frozen_full_field_grows_uniformly() {
        // all-occupied SEP configuration: stirring produces no events and
        // xi = 1 everywhere, so u = e^{(gamma - delta) t} for all x
        let lat = LatticeSpec::new(2, 4).unwrap();
        let model = CatalystModel::sep(0.5, srw(2)).unwrap();
        let ones = CatalystState {
            occupancy: Occupancy::Bits(vec![1; lat.sites()]),
            clock: 0.0,
        };
        let path = evolve(&ones, &model, &lat, 2.0, 9).unwrap();
        assert!(path.events().is_empty());
        let params = ModelParams::new(0.6, 0.9, 0.5, 0.1, 1).unwrap();
        let snaps = integrate_pde(&path, &params, &lat, &[2.0]).unwrap();
        let want = (params.gamma - params.delta) * 2.0;
        for x in 0..lat.sites() {
            assert_relative_eq!(snaps[0].log_value(x), want, max_relative = 1e-9);
        }
    }

    #[test]
    fn positivity_and_pathwise_bound_sep() {
        let lat = LatticeSpec::new(1, 16).unwrap();
        let model = CatalystModel::sep(0.5, srw(1)).unwrap();
        let path = sample_path(&model, &lat, 4.0, 11).unwrap();
        let params = ModelParams::new(0.5, 0.8, 0.5, 0.0, 1).unwrap();
        let snaps = integrate_pde(&path, &params, &lat, &[1.0, 2.5, 4.0]).unwrap();
        for snap in &snaps {
            let bound = params.gamma * snap.time();
            for x in 0..lat.sites() {
                assert!(snap.mantissas()[x] > 0.0, "mantissas must stay positive");
                assert!(
                    snap.log_value(x) <= bound + 1e-9 * bound.abs().max(1.0),
                    "xi <= 1 implies log u <= gamma t"
                );
            }
        }
    }

    #[test]
    fn death_rate_is_exact_exponential_tilt() {
        let lat = LatticeSpec::new(1, 12).unwrap();
        let model = CatalystModel::isrw(1.0).unwrap();
        let path = sample_path(&model, &lat, 3.0, 13).unwrap();
        let base = ModelParams::new(0.4, 0.6, 1.0, 0.0, 1).unwrap();
        let tilted = ModelParams::new(0.4, 0.6, 1.0, 0.35, 1).unwrap();
        let s0 = integrate_pde(&path, &base, &lat, &[3.0]).unwrap();
        let s1 = integrate_pde(&path, &tilted, &lat, &[3.0]).unwrap();
        for x in 0..lat.sites() {
            let want = s0[0].log_value(x) - 0.35 * 3.0;
            let got = s1[0].log_value(x);
            assert!(
                (got - want).abs() <= 1e-12 * want.abs().max(1.0),
                "delta transform must be exact: {got} vs {want}"
            );
        }
    }

    #[test]
    fn splitting_second_order_in_h() {
        // frozen nonuniform field: every substep halves exactly with h_max,
        // so the Strang order is measurable by Richardson triples
        let lat = LatticeSpec::new(1, 14).unwrap();
        let state = sample_path(&CatalystModel::isrw(1.2).unwrap(), &lat, 1.0, 21)
            .unwrap()
            .final_state()
            .clone();
        let state = CatalystState {
            clock: 0.0,
            ..state
        };
        let path =
            crate::catalysts::CatalystPath::frozen(crate::catalysts::CatalystKind::Isrw, &lat, &state, 2.0)
                .unwrap();
        let params = ModelParams::new(0.7, 0.5, 1.2, 0.0, 1).unwrap();
        let log_u = |h: f64| {
            integrate_pde_opts(&path, &params, &lat, &[2.0], PdeOpts { h_max: Some(h) })
                .unwrap()[0]
                .log_value(0)
        };
        let (u1, u2, u4) = (log_u(0.04), log_u(0.02), log_u(0.01));
        let order = ((u1 - u2).abs() / (u2 - u4).abs()).log2();
        assert!(
            order >= 1.9,
            "splitting convergence order {order} below 1.9 ({u1} {u2} {u4})"
        );
    }

    #[test]
    fn splitting_improves_under_halving_with_events() {
        // on an event-broken path the substep sizes are gap-quantized, so
        // only monotone improvement is asserted here
        let lat = LatticeSpec::new(1, 14).unwrap();
        let model = CatalystModel::isrw(1.2).unwrap();
        let path = sample_path(&model, &lat, 2.0, 21).unwrap();
        let params = ModelParams::new(0.7, 0.5, 1.2, 0.0, 1).unwrap();
        let log_u = |h: f64| {
            integrate_pde_opts(&path, &params, &lat, &[2.0], PdeOpts { h_max: Some(h) })
                .unwrap()[0]
                .log_value(0)
        };
        let (u1, u2, u4) = (log_u(0.04), log_u(0.02), log_u(0.01));
        assert!(
            (u2 - u4).abs() < 0.7 * (u1 - u2).abs(),
            "halving h_max must shrink the change: {u1} {u2} {u4}"
        );
    }

    #[test]
    fn fk_kappa_zero_is_deterministic_site_integral() {
        let lat = LatticeSpec::new(1, 10).unwrap();
        let model = CatalystModel::svm(0.5, srw(1), SvmStart::Product).unwrap();
        let path = sample_path(&model, &lat, 3.0, 5).unwrap();
        let params = ModelParams::new(0.0, 0.9, 0.5, 0.1, 2).unwrap();
        let est = fk_estimate(&path, &params, &lat, 3.0, 50, 8).unwrap();
        let exact = params.gamma * path.integrate_site(0, 0.0, 3.0).unwrap() - 0.1 * 3.0;
        assert_relative_eq!(est.log_mean, exact, max_relative = 1e-12);
        assert_eq!(est.log_stderr, 0.0);
        assert_relative_eq!(est.log_moment_sample, 2.0 * exact, max_relative = 1e-12);
    }

    #[test]
    fn fk_zero_coupling_has_zero_variance() {
        let lat = LatticeSpec::new(1, 8).unwrap();
        let model = CatalystModel::sep(0.4, srw(1)).unwrap();
        let path = sample_path(&model, &lat, 2.0, 2).unwrap();
        let params = ModelParams::new(0.5, 0.0, 0.4, 0.3, 1).unwrap();
        let est = fk_estimate(&path, &params, &lat, 2.0, 200, 4).unwrap();
        assert_relative_eq!(est.log_mean, -0.3 * 2.0, max_relative = 1e-14);
        assert_eq!(est.log_stderr, 0.0);
    }

    #[test]
    fn fk_agrees_with_pde_on_random_configs() {
        // the PDE solve is the exact oracle for the inner expectation
        use rand::Rng;
        let mut cfg_rng = crate::seeding::stream_rng(77, "fk-vs-pde", 0);
        let lat = LatticeSpec::new(1, 12).unwrap();
        let mut disagreements = 0;
        let n_cfg = 20;
        for c in 0..n_cfg {
            let kappa = 0.2 + 0.8 * cfg_rng.gen::<f64>();
            let gamma = 0.2 + 0.6 * cfg_rng.gen::<f64>();
            let model = CatalystModel::isrw(1.0).unwrap();
            let path = sample_path(&model, &lat, 2.0, 1000 + c).unwrap();
            let params = ModelParams::new(kappa, gamma, 1.0, 0.0, 1).unwrap();
            let pde = integrate_pde(&path, &params, &lat, &[2.0]).unwrap()[0].log_value(0);
            let fk = fk_estimate(&path, &params, &lat, 2.0, 10_000, 2000 + c).unwrap();
            if (fk.log_mean - pde).abs() > 3.0 * fk.log_stderr.max(1e-12) {
                disagreements += 1;
            }
        }
        assert!(
            disagreements <= 1,
            "{disagreements}/{n_cfg} configs disagree beyond 3 sigma"
        );
    }

    #[test]
    fn snapshot_csv_export() {
        let lat = LatticeSpec::new(1, 6).unwrap();
        let model = CatalystModel::sep(0.5, srw(1)).unwrap();
        let path = sample_path(&model, &lat, 1.0, 1).unwrap();
        let params = ModelParams::new(0.2, 0.4, 0.5, 0.0, 1).unwrap();
        let snap = &integrate_pde(&path, &params, &lat, &[1.0]).unwrap()[0];
        let mut buf = Vec::new();
        snap.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("site,log_u\n"));
        assert_eq!(text.lines().count(), 1 + lat.sites());
    }

    #[test]
    fn fk_rejects_time_beyond_horizon() {
        let lat = LatticeSpec::new(1, 8).unwrap();
        let model = CatalystModel::sep(0.5, srw(1)).unwrap();
        let path = sample_path(&model, &lat, 1.0, 1).unwrap();
        let params = ModelParams::new(0.1, 0.1, 0.5, 0.0, 1).unwrap();
        assert!(fk_estimate(&path, &params, &lat, 1.5, 10, 1).is_err());
    }
}
