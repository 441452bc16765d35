//! The three catalyst dynamics as exact event-driven simulations, each
//! realization exposed as a queryable space-time field `xi(x, s)`.
//!
//! * **ISRW** — every particle is an independent rate-1 simple random walk;
//!   site occupancies are unbounded counts, started from a Poisson(rho)
//!   product field.
//! * **SEP** — unordered bonds `{x,y}` fire at rate `p(x,y)` and swap the
//!   endpoint states (stirring; the swap happens whether or not the
//!   occupancies differ, which is pathwise equivalent for symmetric
//!   kernels), started from Bernoulli(rho).
//! * **SVM** — site `y` rings at rate 1 and adopts the opinion of a
//!   neighbor `x` drawn with probability `p(x,y)`, started from
//!   Bernoulli(rho) or from a burned-in approximation of the equilibrium.
//!
//! All three have a state-independent total event rate (particle count,
//! `sites/2`, and `sites` respectively), so the simulation draws one
//! homogeneous exponential clock and thins: clock draws are consumed
//! identically for a given seed whether or not an event changes the state,
//! and only state-changing events enter the log.

use arrayvec::ArrayVec;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::lattice::{KernelSpec, LatticeSpec};

/// Which interacting particle system drives the medium.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalystKind {
    Isrw,
    Sep,
    Svm,
}

impl CatalystKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CatalystKind::Isrw => "isrw",
            CatalystKind::Sep => "sep",
            CatalystKind::Svm => "svm",
        }
    }
}

/// Starting measure for the voter model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SvmStart {
    /// Bernoulli(rho) product measure (the default; the Lyapunov limits
    /// are the same for both choices).
    Product,
    /// Product measure evolved for `burn_time` before time zero, as an
    /// approximation of the equilibrium with the same density.
    BurnedIn { burn_time: f64 },
}

/// A catalyst dynamics with its density and (for SEP/SVM) walk kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalystModel {
    kind: CatalystKind,
    rho: f64,
    kernel: Option<KernelSpec>,
    svm_start: SvmStart,
}

impl CatalystModel {
    /// Poisson field of independent walks, density `rho > 0` (mean
    /// particles per site). The particles are rate-1 simple random walks;
    /// no kernel choice applies.
    pub fn isrw(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::invalid("ISRW density must satisfy 0 < rho < inf"));
        }
        Ok(CatalystModel {
            kind: CatalystKind::Isrw,
            rho,
            kernel: None,
            svm_start: SvmStart::Product,
        })
    }

    /// Symmetric exclusion with `rho` in (0,1) and a symmetric kernel.
    pub fn sep(rho: f64, kernel: KernelSpec) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::invalid("SEP density must satisfy rho in (0,1)"));
        }
        Ok(CatalystModel {
            kind: CatalystKind::Sep,
            rho,
            kernel: Some(kernel),
            svm_start: SvmStart::Product,
        })
    }

    /// Symmetric voter model with `rho` in (0,1), a symmetric kernel and a
    /// choice of starting measure.
    pub fn svm(rho: f64, kernel: KernelSpec, start: SvmStart) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::invalid("SVM density must satisfy rho in (0,1)"));
        }
        if let SvmStart::BurnedIn { burn_time } = start {
            if !(burn_time >= 0.0) {
                return Err(Error::invalid("SVM burn-in time must be >= 0"));
            }
        }
        Ok(CatalystModel {
            kind: CatalystKind::Svm,
            rho,
            kernel: Some(kernel),
            svm_start: start,
        })
    }

    pub fn kind(&self) -> CatalystKind {
        self.kind
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn kernel(&self) -> Option<&KernelSpec> {
        self.kernel.as_ref()
    }

    pub fn svm_start(&self) -> SvmStart {
        self.svm_start
    }

    /// Pathwise upper bound on the field value: 1 for SEP/SVM, none for
    /// ISRW (occupancies are unbounded).
    pub fn field_bound(&self) -> Option<u32> {
        match self.kind {
            CatalystKind::Isrw => None,
            _ => Some(1),
        }
    }
}

/// Site occupancies of one catalyst configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum Occupancy {
    /// Per-site particle counts plus the particle list (site per particle).
    Counts { counts: Vec<u32>, particles: Vec<u32> },
    /// Per-site bits (SEP occupancies or SVM opinions).
    Bits(Vec<u8>),
}

impl Occupancy {
    pub fn value(&self, site: usize) -> u32 {
        match self {
            Occupancy::Counts { counts, .. } => counts[site],
            Occupancy::Bits(b) => b[site] as u32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Occupancy::Counts { counts, .. } => counts.len(),
            Occupancy::Bits(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Total mass (particle count or number of ones).
    pub fn total(&self) -> u64 {
        match self {
            Occupancy::Counts { counts, .. } => counts.iter().map(|&c| c as u64).sum(),
            Occupancy::Bits(b) => b.iter().map(|&v| v as u64).sum(),
        }
    }

    /// Per-site values as counts, regardless of representation.
    pub fn values(&self) -> Vec<u32> {
        match self {
            Occupancy::Counts { counts, .. } => counts.clone(),
            Occupancy::Bits(b) => b.iter().map(|&v| v as u32).collect(),
        }
    }
}

/// A catalyst configuration together with its clock.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalystState {
    pub occupancy: Occupancy,
    pub clock: f64,
}

impl CatalystState {
    /// ISRW state with explicit per-site counts (clock 0). The particle
    /// list is site-major.
    pub fn isrw_from_counts(counts: Vec<u32>, lattice: &LatticeSpec) -> Result<Self> {
        if counts.len() != lattice.sites() {
            return Err(Error::SizeMismatch {
                expected: lattice.sites(),
                got: counts.len(),
            });
        }
        let mut particles = Vec::new();
        for (site, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                particles.push(site as u32);
            }
        }
        Ok(CatalystState {
            occupancy: Occupancy::Counts { counts, particles },
            clock: 0.0,
        })
    }
}

/// One state change: `(site, new value)` pairs, at most two per event.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub time: f64,
    pub changes: ArrayVec<(u32, u32), 2>,
}

/// One realization of `xi` on `[t0, horizon]`: initial configuration,
/// time-ordered log of state-changing events, and per-site change tracks
/// with cumulative time integrals for `O(log k)` queries.
#[derive(Debug, Clone)]
pub struct CatalystPath {
    kind: CatalystKind,
    lattice: LatticeSpec,
    rho: f64,
    seed: u64,
    initial: CatalystState,
    final_state: CatalystState,
    events: Vec<Event>,
    t0: f64,
    horizon: f64,
    // CSR-style per-site tracks: track i covers [starts[i], starts[i+1])
    starts: Vec<u32>,
    times: Vec<f64>,
    values: Vec<u32>,
    cums: Vec<f64>,
    max_value: u32,
}

impl CatalystPath {
    pub fn kind(&self) -> CatalystKind {
        self.kind
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn initial(&self) -> &CatalystState {
        &self.initial
    }

    pub fn final_state(&self) -> &CatalystState {
        &self.final_state
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn start_time(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Largest field value realized anywhere along the path.
    pub fn max_value(&self) -> u32 {
        self.max_value
    }

    /// Field value `xi(x, s)`; piecewise constant in `s`, right-continuous.
    pub fn query(&self, site: usize, s: f64) -> Result<u32> {
        let i = self.locate(site, s)?;
        Ok(self.values[i])
    }

    fn locate(&self, site: usize, s: f64) -> Result<usize> {
        if site >= self.lattice.sites() {
            return Err(Error::invalid("site index out of range"));
        }
        if !(s >= self.t0 && s <= self.horizon) {
            return Err(Error::TimeOutOfRange {
                t: s,
                lo: self.t0,
                hi: self.horizon,
            });
        }
        let lo = self.starts[site] as usize;
        let hi = self.starts[site + 1] as usize;
        // last change time <= s; k >= 1 because every track opens at t0
        let k = self.times[lo..hi].partition_point(|&t| t <= s);
        Ok(lo + k - 1)
    }

    /// Exact `int_a^b xi(x, s) ds` along the piecewise-constant track.
    pub fn integrate_site(&self, site: usize, a: f64, b: f64) -> Result<f64> {
        if b < a {
            return Err(Error::invalid("integration bounds must satisfy a <= b"));
        }
        Ok(self.antiderivative(site, b)? - self.antiderivative(site, a)?)
    }

    fn antiderivative(&self, site: usize, s: f64) -> Result<f64> {
        let i = self.locate(site, s)?;
        Ok(self.cums[i] + self.values[i] as f64 * (s - self.times[i]))
    }

    /// Re-apply the event log to the initial occupancy; confirms the log
    /// reproduces the final state (used by tests and the binary reader).
    pub fn replay_final_occupancy(&self) -> Occupancy {
        let mut occ = self.initial.occupancy.clone();
        for ev in &self.events {
            apply_changes(&mut occ, &ev.changes);
        }
        occ
    }
}

fn apply_changes(occ: &mut Occupancy, changes: &ArrayVec<(u32, u32), 2>) {
    match occ {
        Occupancy::Counts { counts, .. } => {
            for &(site, val) in changes {
                counts[site as usize] = val;
            }
        }
        Occupancy::Bits(bits) => {
            for &(site, val) in changes {
                bits[site as usize] = val as u8;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Sampling and evolution
// ---------------------------------------------------------------------------

/// Draw the initial configuration: i.i.d. Poisson(rho) counts for ISRW,
/// i.i.d. Bernoulli(rho) bits for SEP/SVM. Deterministic given the seed.
pub fn sample_initial(model: &CatalystModel, lattice: &LatticeSpec, seed: u64) -> CatalystState {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    sample_initial_rng(model, lattice, &mut rng)
}

fn sample_initial_rng(
    model: &CatalystModel,
    lattice: &LatticeSpec,
    rng: &mut ChaCha12Rng,
) -> CatalystState {
    let n = lattice.sites();
    match model.kind {
        CatalystKind::Isrw => {
            use rand_distr::{Distribution, Poisson};
            let pois = Poisson::new(model.rho).expect("rho validated positive");
            let counts: Vec<u32> = (0..n).map(|_| pois.sample(rng) as u32).collect();
            CatalystState::isrw_from_counts(counts, lattice).expect("lengths match")
        }
        CatalystKind::Sep | CatalystKind::Svm => {
            let bits: Vec<u8> = (0..n)
                .map(|_| u8::from(rng.gen::<f64>() < model.rho))
                .collect();
            CatalystState {
                occupancy: Occupancy::Bits(bits),
                clock: 0.0,
            }
        }
    }
}

/// Precomputed tables for drawing a kernel offset and applying it.
struct KernelSampler {
    cum: Vec<f64>,
    tables: Vec<Vec<u32>>,
}

impl KernelSampler {
    fn new(kernel: &KernelSpec, lattice: &LatticeSpec) -> Self {
        let mut cum = Vec::new();
        let mut tables = Vec::new();
        let mut acc = 0.0;
        for (z, w) in kernel.entries() {
            if *w <= 0.0 {
                continue;
            }
            acc += w;
            cum.push(acc);
            tables.push(lattice.shift_table(z).expect("validated offset"));
        }
        if let Some(last) = cum.last_mut() {
            *last = 1.0; // absorb rounding so a draw never falls off the end
        }
        KernelSampler { cum, tables }
    }

    fn draw(&self, u: f64) -> &[u32] {
        let k = self.cum.partition_point(|&c| c < u);
        &self.tables[k.min(self.tables.len() - 1)]
    }
}

/// Evolve a state for `dt`, returning the path segment on
/// `[state.clock, state.clock + dt]`. Exact continuous-time simulation;
/// deterministic given the seed.
pub fn evolve(
    state: &CatalystState,
    model: &CatalystModel,
    lattice: &LatticeSpec,
    dt: f64,
    seed: u64,
) -> Result<CatalystPath> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    evolve_rng(state, model, lattice, dt, seed, &mut rng)
}

fn evolve_rng(
    state: &CatalystState,
    model: &CatalystModel,
    lattice: &LatticeSpec,
    dt: f64,
    seed: u64,
    rng: &mut ChaCha12Rng,
) -> Result<CatalystPath> {
    if !(dt > 0.0) {
        return Err(Error::invalid("evolution duration must be positive"));
    }
    let n = lattice.sites();
    if state.occupancy.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            got: state.occupancy.len(),
        });
    }
    let t0 = state.clock;
    let horizon = t0 + dt;
    let mut occ = state.occupancy.clone();
    let mut events: Vec<Event> = Vec::new();

    match (&mut occ, model.kind) {
        (Occupancy::Counts { counts, particles }, CatalystKind::Isrw) => {
            let table = lattice.neighbor_table();
            let two_d = 2 * lattice.d();
            let rate = particles.len() as f64;
            if rate > 0.0 {
                let mut t = t0;
                loop {
                    t += exp_variate(rng) / rate;
                    if t > horizon {
                        break;
                    }
                    let pi = rng.gen_range(0..particles.len());
                    let from = particles[pi] as usize;
                    let dir = rng.gen_range(0..two_d);
                    let to = table[from * two_d + dir] as usize;
                    counts[from] -= 1;
                    counts[to] += 1;
                    particles[pi] = to as u32;
                    let mut changes = ArrayVec::new();
                    changes.push((from as u32, counts[from]));
                    changes.push((to as u32, counts[to]));
                    events.push(Event { time: t, changes });
                }
            }
        }
        (Occupancy::Bits(bits), CatalystKind::Sep) => {
            let kernel = model
                .kernel()
                .ok_or_else(|| Error::invalid("SEP requires a kernel"))?;
            let sampler = KernelSampler::new(kernel, lattice);
            // every unordered bond {x, x+z} fires at rate q(z): total rate
            // sites/2, bond drawn as (uniform site, offset ~ q)
            let rate = n as f64 / 2.0;
            let mut t = t0;
            loop {
                t += exp_variate(rng) / rate;
                if t > horizon {
                    break;
                }
                let x = rng.gen_range(0..n);
                let y = sampler.draw(rng.gen::<f64>())[x] as usize;
                if bits[x] != bits[y] {
                    bits.swap(x, y);
                    let mut changes = ArrayVec::new();
                    changes.push((x as u32, bits[x] as u32));
                    changes.push((y as u32, bits[y] as u32));
                    events.push(Event { time: t, changes });
                }
            }
        }
        (Occupancy::Bits(bits), CatalystKind::Svm) => {
            let kernel = model
                .kernel()
                .ok_or_else(|| Error::invalid("SVM requires a kernel"))?;
            let sampler = KernelSampler::new(kernel, lattice);
            // site y rings at rate sum_x p(x,y) = 1 and adopts a neighbor
            let rate = n as f64;
            let mut t = t0;
            loop {
                t += exp_variate(rng) / rate;
                if t > horizon {
                    break;
                }
                let y = rng.gen_range(0..n);
                let x = sampler.draw(rng.gen::<f64>())[y] as usize;
                if bits[y] != bits[x] {
                    bits[y] = bits[x];
                    let mut changes = ArrayVec::new();
                    changes.push((y as u32, bits[y] as u32));
                    events.push(Event { time: t, changes });
                }
            }
        }
        _ => {
            return Err(Error::invalid(
                "occupancy representation does not match the model kind",
            ))
        }
    }

    Ok(assemble_path(PathParts {
        kind: model.kind,
        lattice: lattice.clone(),
        rho: model.rho,
        seed,
        initial: state.clone(),
        final_state: CatalystState {
            occupancy: occ,
            clock: horizon,
        },
        events,
        t0,
        horizon,
    }))
}

impl CatalystPath {
    /// A degenerate path that holds `state` frozen on
    /// `[state.clock, state.clock + dt]` (no events). Useful for
    /// integrator studies against a static field.
    pub fn frozen(
        kind: CatalystKind,
        lattice: &LatticeSpec,
        state: &CatalystState,
        dt: f64,
    ) -> Result<CatalystPath> {
        if !(dt > 0.0) {
            return Err(Error::invalid("frozen path duration must be positive"));
        }
        if state.occupancy.len() != lattice.sites() {
            return Err(Error::SizeMismatch {
                expected: lattice.sites(),
                got: state.occupancy.len(),
            });
        }
        Ok(assemble_path(PathParts {
            kind,
            lattice: lattice.clone(),
            rho: 1.0,
            seed: 0,
            initial: state.clone(),
            final_state: CatalystState {
                occupancy: state.occupancy.clone(),
                clock: state.clock + dt,
            },
            events: Vec::new(),
            t0: state.clock,
            horizon: state.clock + dt,
        }))
    }
}

/// Sample an initial configuration and evolve it to the horizon (applying
/// the SVM burn-in first when configured). The path clock starts at 0.
pub fn sample_path(
    model: &CatalystModel,
    lattice: &LatticeSpec,
    horizon: f64,
    seed: u64,
) -> Result<CatalystPath> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut init = sample_initial_rng(model, lattice, &mut rng);
    if model.kind == CatalystKind::Svm {
        if let SvmStart::BurnedIn { burn_time } = model.svm_start {
            if burn_time > 0.0 {
                let burned = evolve_rng(&init, model, lattice, burn_time, seed, &mut rng)?;
                init = CatalystState {
                    occupancy: burned.final_state.occupancy.clone(),
                    clock: 0.0,
                };
            }
        }
    }
    evolve_rng(&init, model, lattice, horizon, seed, &mut rng)
}

struct PathParts {
    kind: CatalystKind,
    lattice: LatticeSpec,
    rho: f64,
    seed: u64,
    initial: CatalystState,
    final_state: CatalystState,
    events: Vec<Event>,
    t0: f64,
    horizon: f64,
}

fn assemble_path(parts: PathParts) -> CatalystPath {
    let PathParts {
        kind,
        lattice,
        rho,
        seed,
        initial,
        final_state,
        events,
        t0,
        horizon,
    } = parts;
    let n = lattice.sites();
    // two-pass CSR build of per-site change tracks
    let mut per_site = vec![1u32; n]; // opening entry at t0
    for ev in &events {
        for &(site, _) in &ev.changes {
            per_site[site as usize] += 1;
        }
    }
    let mut starts = vec![0u32; n + 1];
    for i in 0..n {
        starts[i + 1] = starts[i] + per_site[i];
    }
    let total = starts[n] as usize;
    let mut times = vec![0.0; total];
    let mut values = vec![0u32; total];
    let mut cums = vec![0.0; total];
    let mut fill = starts.clone();
    let mut max_value = 0u32;
    for site in 0..n {
        let v = initial.occupancy.value(site);
        max_value = max_value.max(v);
        let at = fill[site] as usize;
        times[at] = t0;
        values[at] = v;
        cums[at] = 0.0;
        fill[site] += 1;
    }
    for ev in &events {
        for &(site, val) in &ev.changes {
            max_value = max_value.max(val);
            let s = site as usize;
            let at = fill[s] as usize;
            let prev = at - 1;
            times[at] = ev.time;
            values[at] = val;
            cums[at] = cums[prev] + values[prev] as f64 * (ev.time - times[prev]);
            fill[s] += 1;
        }
    }
    CatalystPath {
        kind,
        lattice,
        rho,
        seed,
        initial,
        final_state,
        events,
        t0,
        horizon,
        starts,
        times,
        values,
        cums,
        max_value,
    }
}

fn exp_variate(rng: &mut ChaCha12Rng) -> f64 {
    // inverse CDF on (0,1]; 1-u avoids ln(0)
    -(1.0 - rng.gen::<f64>()).ln()
}

// ---------------------------------------------------------------------------
// Stationarity diagnostics
// ---------------------------------------------------------------------------

/// One-time marginal statistics of the field over independent replicas.
#[derive(Debug, Clone)]
pub struct StationaritySummary {
    /// Mean occupancy over sites and replicas at time `t`.
    pub mean: f64,
    /// Standard error of the mean over replicas.
    pub stderr: f64,
    /// The stationary target (the density rho).
    pub expected: f64,
    pub n_reps: usize,
    /// Pooled per-site value histogram at time `t` (value, count).
    pub histogram: Vec<(u32, u64)>,
}

/// Estimate the one-time marginals of the field at time `t` from `n`
/// replicas. For ISRW and SEP the product measure is stationary; for SVM
/// the density is a conserved expectation.
pub fn stationarity_check(
    model: &CatalystModel,
    lattice: &LatticeSpec,
    t: f64,
    n: usize,
    seed: u64,
) -> Result<StationaritySummary> {
    if n < 100 {
        return Err(Error::invalid("stationarity check needs >= 100 replicas"));
    }
    let sites = lattice.sites() as f64;
    let mut replica_means = Vec::with_capacity(n);
    let mut hist: std::collections::BTreeMap<u32, u64> = Default::default();
    for r in 0..n {
        let rep_seed = crate::seeding::seed_fingerprint(seed, "stationarity", r as u64);
        let state = if t > 0.0 {
            let path = sample_path(model, lattice, t, rep_seed)?;
            path.final_state().clone()
        } else {
            sample_initial(model, lattice, rep_seed)
        };
        let mut sum = 0u64;
        for site in 0..lattice.sites() {
            let v = state.occupancy.value(site);
            sum += v as u64;
            *hist.entry(v).or_insert(0) += 1;
        }
        replica_means.push(sum as f64 / sites);
    }
    let mean = replica_means.iter().sum::<f64>() / n as f64;
    let var = replica_means
        .iter()
        .map(|m| (m - mean) * (m - mean))
        .sum::<f64>()
        / (n as f64 - 1.0);
    Ok(StationaritySummary {
        mean,
        stderr: (var / n as f64).sqrt(),
        expected: model.rho,
        n_reps: n,
        histogram: hist.into_iter().collect(),
    })
}

// ---------------------------------------------------------------------------
// Binary path dump
// ---------------------------------------------------------------------------

const DUMP_MAGIC: &[u8; 8] = b"PAMPATH1";

impl CatalystPath {
    /// Versioned binary dump: header (model kind, d, L, rho, seed, t0,
    /// horizon), initial occupancy, then the event records. Intended for
    /// replay and cross-implementation diffing.
    pub fn write_binary<W: std::io::Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&[match self.kind {
            CatalystKind::Isrw => 0u8,
            CatalystKind::Sep => 1,
            CatalystKind::Svm => 2,
        }])?;
        w.write_all(&(self.lattice.d() as u16).to_le_bytes())?;
        w.write_all(&(self.lattice.side() as u32).to_le_bytes())?;
        w.write_all(&self.rho.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&self.t0.to_le_bytes())?;
        w.write_all(&self.horizon.to_le_bytes())?;
        match &self.initial.occupancy {
            Occupancy::Counts { counts, .. } => {
                for &c in counts {
                    w.write_all(&c.to_le_bytes())?;
                }
            }
            Occupancy::Bits(bits) => w.write_all(bits)?,
        }
        w.write_all(&(self.events.len() as u64).to_le_bytes())?;
        for ev in &self.events {
            w.write_all(&ev.time.to_le_bytes())?;
            w.write_all(&[ev.changes.len() as u8])?;
            for &(site, val) in &ev.changes {
                w.write_all(&site.to_le_bytes())?;
                w.write_all(&val.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Read a dump written by [`CatalystPath::write_binary`], rebuilding
    /// the query tracks and final state by replay.
    pub fn read_binary<R: std::io::Read>(r: &mut R) -> Result<CatalystPath> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::invalid("not a catalyst path dump"));
        }
        let kind = match read_u8(r)? {
            0 => CatalystKind::Isrw,
            1 => CatalystKind::Sep,
            2 => CatalystKind::Svm,
            k => return Err(Error::invalid(format!("unknown model kind {k}"))),
        };
        let d = read_u16(r)? as usize;
        let side = read_u32(r)? as usize;
        let rho = read_f64(r)?;
        let seed = read_u64(r)?;
        let t0 = read_f64(r)?;
        let horizon = read_f64(r)?;
        let lattice = LatticeSpec::new(d, side)?;
        let n = lattice.sites();
        let occupancy = match kind {
            CatalystKind::Isrw => {
                let mut counts = vec![0u32; n];
                for c in counts.iter_mut() {
                    *c = read_u32(r)?;
                }
                CatalystState::isrw_from_counts(counts, &lattice)?.occupancy
            }
            _ => {
                let mut bits = vec![0u8; n];
                r.read_exact(&mut bits)?;
                Occupancy::Bits(bits)
            }
        };
        let initial = CatalystState {
            occupancy,
            clock: t0,
        };
        let n_events = read_u64(r)? as usize;
        let mut events = Vec::with_capacity(n_events);
        let mut last_t = t0;
        for _ in 0..n_events {
            let time = read_f64(r)?;
            if time <= last_t {
                return Err(Error::invalid("event times must be strictly increasing"));
            }
            last_t = time;
            let m = read_u8(r)? as usize;
            if m > 2 {
                return Err(Error::invalid("event touches more than two sites"));
            }
            let mut changes = ArrayVec::new();
            for _ in 0..m {
                let site = read_u32(r)?;
                let val = read_u32(r)?;
                if site as usize >= n {
                    return Err(Error::invalid("event site out of range"));
                }
                changes.push((site, val));
            }
            events.push(Event { time, changes });
        }
        let mut final_occ = initial.occupancy.clone();
        for ev in &events {
            apply_changes(&mut final_occ, &ev.changes);
        }
        // a replayed dump does not track the particle list; rebuild it
        // from counts so the final state is self-consistent
        let final_occ = match final_occ {
            Occupancy::Counts { counts, .. } => {
                CatalystState::isrw_from_counts(counts, &lattice)?.occupancy
            }
            bits => bits,
        };
        Ok(assemble_path(PathParts {
            kind,
            lattice,
            rho,
            seed,
            initial,
            final_state: CatalystState {
                occupancy: final_occ,
                clock: horizon,
            },
            events,
            t0,
            horizon,
        }))
    }
}

fn read_u8<R: std::io::Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16<R: std::io::Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: std::io::Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: std::io::Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: std::io::Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn srw(d: usize) -> KernelSpec {
        KernelSpec::simple_random_walk(d)
    }

    fn drop_particles(occ: &Occupancy) -> Occupancy {
        match occ {
            Occupancy::Counts { counts, .. } => Occupancy::Counts {
                counts: counts.clone(),
                particles: vec![],
            },
            bits => bits.clone(),
        }
    }

    #[test]
    fn density_ranges_enforced() {
        assert!(CatalystModel::isrw(0.0).is_err());
        assert!(CatalystModel::isrw(2.5).is_ok());
        assert!(CatalystModel::sep(1.0, srw(1)).is_err());
        assert!(CatalystModel::sep(0.5, srw(1)).is_ok());
        assert!(CatalystModel::svm(1.2, srw(2), SvmStart::Product).is_err());
    }

    #[test]
    fn initial_is_seed_deterministic() {
        let lat = LatticeSpec::new(1, 50).unwrap();
        let model = CatalystModel::isrw(2.0).unwrap();
        let a = sample_initial(&model, &lat, 99);
        let b = sample_initial(&model, &lat, 99);
        assert_eq!(a, b);
        let c = sample_initial(&model, &lat, 100);
        assert_ne!(a, c);
    }

    #[test]
    fn sparse_bernoulli_density() {
        // rho = 0.001 on 100 sites: expected occupied = 0.1 per replica
        let lat = LatticeSpec::new(1, 100).unwrap();
        let model = CatalystModel::sep(0.001, srw(1)).unwrap();
        let mut occupied = 0u64;
        let reps = 2000;
        for r in 0..reps {
            occupied += sample_initial(&model, &lat, r).occupancy.total();
        }
        let per_rep = occupied as f64 / reps as f64;
        // Binomial(100, 0.001): mean 0.1, sd of the replicate mean ~ 0.007
        assert!(
            (per_rep - 0.1).abs() < 0.025,
            "expected ~0.1 occupied sites per replica, got {per_rep}"
        );
    }

    #[test]
    fn isrw_poisson_mean() {
        let lat = LatticeSpec::new(1, 100).unwrap();
        let model = CatalystModel::isrw(2.0).unwrap();
        let n = 10_000usize;
        let mut sum = 0u64;
        for r in 0..n {
            sum += sample_initial(&model, &lat, r as u64).occupancy.total();
        }
        let mean = sum as f64 / (n * 100) as f64;
        let se = (2.0f64 / (n * 100) as f64).sqrt();
        assert!(
            (mean - 2.0).abs() < 3.0 * se,
            "mean {mean} outside 3 se ({se}) of 2"
        );
    }

    #[test]
    fn sep_conserves_particles() {
        let lat = LatticeSpec::new(2, 8).unwrap();
        let model = CatalystModel::sep(0.4, srw(2)).unwrap();
        let init = sample_initial(&model, &lat, 7);
        let before = init.occupancy.total();
        let path = evolve(&init, &model, &lat, 5.0, 8).unwrap();
        assert_eq!(path.final_state().occupancy.total(), before);
    }

    #[test]
    fn isrw_conserves_particles() {
        let lat = LatticeSpec::new(1, 30).unwrap();
        let model = CatalystModel::isrw(1.5).unwrap();
        let init = sample_initial(&model, &lat, 3);
        let before = init.occupancy.total();
        let path = evolve(&init, &model, &lat, 4.0, 4).unwrap();
        assert_eq!(path.final_state().occupancy.total(), before);
    }

    #[test]
    fn svm_consensus_absorbing() {
        let lat = LatticeSpec::new(1, 10).unwrap();
        let model = CatalystModel::svm(0.5, srw(1), SvmStart::Product).unwrap();
        let ones = CatalystState {
            occupancy: Occupancy::Bits(vec![1; lat.sites()]),
            clock: 0.0,
        };
        let path = evolve(&ones, &model, &lat, 20.0, 1).unwrap();
        assert!(path.events().is_empty(), "consensus must never change");
        assert_eq!(path.final_state().occupancy, ones.occupancy);
    }

    #[test]
    fn event_log_replay_matches_final_state() {
        let lat = LatticeSpec::new(1, 20).unwrap();
        for model in [
            CatalystModel::isrw(1.0).unwrap(),
            CatalystModel::sep(0.5, srw(1)).unwrap(),
            CatalystModel::svm(0.5, srw(1), SvmStart::Product).unwrap(),
        ] {
            let path = sample_path(&model, &lat, 6.0, 11).unwrap();
            assert_eq!(
                drop_particles(&path.replay_final_occupancy()),
                drop_particles(&path.final_state().occupancy),
                "replay must reproduce the final state for {:?}",
                model.kind()
            );
            for w in path.events().windows(2) {
                assert!(w[0].time < w[1].time, "event times strictly increasing");
            }
        }
    }

    #[test]
    fn replay_determinism() {
        let lat = LatticeSpec::new(2, 6).unwrap();
        let model = CatalystModel::sep(0.3, srw(2)).unwrap();
        let a = sample_path(&model, &lat, 3.0, 5).unwrap();
        let b = sample_path(&model, &lat, 3.0, 5).unwrap();
        assert_eq!(a.events(), b.events());
    }

    #[test]
    fn query_boundaries_and_rejection() {
        let lat = LatticeSpec::new(1, 12).unwrap();
        let model = CatalystModel::sep(0.5, srw(1)).unwrap();
        let path = sample_path(&model, &lat, 2.0, 21).unwrap();
        for x in 0..lat.sites() {
            assert_eq!(
                path.query(x, 0.0).unwrap(),
                path.initial().occupancy.value(x)
            );
            assert_eq!(
                path.query(x, 2.0).unwrap(),
                path.final_state().occupancy.value(x)
            );
        }
        assert!(path.query(0, 2.0001).is_err());
        assert!(path.query(0, -0.1).is_err());
    }

    #[test]
    fn query_matches_full_replay_oracle() {
        use rand::Rng;
        let lat = LatticeSpec::new(1, 25).unwrap();
        let model = CatalystModel::isrw(1.0).unwrap();
        let path = sample_path(&model, &lat, 5.0, 17).unwrap();
        let mut rng = crate::seeding::stream_rng(3, "query-oracle", 0);
        let mut pairs: Vec<(usize, f64)> = (0..10_000)
            .map(|_| (rng.gen_range(0..lat.sites()), rng.gen::<f64>() * 5.0))
            .collect();
        pairs.sort_by(|a, b| a.1.total_cmp(&b.1));
        // naive forward replay
        let mut occ = path.initial().occupancy.clone();
        let mut ev_idx = 0;
        for (site, s) in pairs {
            while ev_idx < path.events().len() && path.events()[ev_idx].time <= s {
                apply_changes(&mut occ, &path.events()[ev_idx].changes);
                ev_idx += 1;
            }
            assert_eq!(path.query(site, s).unwrap(), occ.value(site));
        }
    }

    #[test]
    fn integrate_site_matches_riemann_sum() {
        let lat = LatticeSpec::new(1, 15).unwrap();
        let model = CatalystModel::sep(0.5, srw(1)).unwrap();
        let path = sample_path(&model, &lat, 4.0, 2).unwrap();
        for site in [0usize, 7] {
            let (a, b) = (0.7, 3.3);
            let n = 400_000;
            let h = (b - a) / n as f64;
            let mut riemann = 0.0;
            for i in 0..n {
                riemann += path.query(site, a + (i as f64 + 0.5) * h).unwrap() as f64;
            }
            riemann *= h;
            let exact = path.integrate_site(site, a, b).unwrap();
            assert!(
                (riemann - exact).abs() < 1e-4,
                "site {site}: riemann {riemann} vs exact {exact}"
            );
        }
    }

    #[test]
    fn stationarity_sep() {
        let lat = LatticeSpec::new(1, 50).unwrap();
        let model = CatalystModel::sep(0.5, srw(1)).unwrap();
        let s = stationarity_check(&model, &lat, 10.0, 400, 123).unwrap();
        assert!(
            (s.mean - 0.5).abs() < 3.0 * s.stderr,
            "SEP mean {} +- {} vs 0.5",
            s.mean,
            s.stderr
        );
    }

    #[test]
    fn stationarity_at_zero_is_exact_sample_mean() {
        let lat = LatticeSpec::new(1, 40).unwrap();
        let model = CatalystModel::sep(0.3, srw(1)).unwrap();
        let s = stationarity_check(&model, &lat, 0.0, 150, 5).unwrap();
        let mut manual = 0.0;
        for r in 0..150u64 {
            let st = sample_initial(
                &model,
                &lat,
                crate::seeding::seed_fingerprint(5, "stationarity", r),
            );
            manual += st.occupancy.total() as f64 / lat.sites() as f64;
        }
        assert_eq!(s.mean, manual / 150.0);
    }

    #[test]
    fn isrw_counts_stay_poisson() {
        // chi-square of per-site counts at t=3 against Poisson(1), 1% level
        let lat = LatticeSpec::new(1, 50).unwrap();
        let model = CatalystModel::isrw(1.0).unwrap();
        let s = stationarity_check(&model, &lat, 3.0, 200, 77).unwrap();
        let total: u64 = s.histogram.iter().map(|&(_, c)| c).sum();
        // pool counts >= 4
        let mut obs = [0f64; 5];
        for &(v, c) in &s.histogram {
            obs[(v as usize).min(4)] += c as f64;
        }
        let mut pmf = [0f64; 5];
        let mut term = (-1.0f64).exp(); // Poisson(1) pmf at 0
        let mut acc = 0.0;
        for k in 0..4 {
            pmf[k] = term;
            acc += term;
            term /= (k + 1) as f64;
        }
        pmf[4] = 1.0 - acc;
        let chi2: f64 = obs
            .iter()
            .zip(&pmf)
            .map(|(o, p)| {
                let e = p * total as f64;
                (o - e) * (o - e) / e
            })
            .sum();
        // df = 4, 1% critical value
        assert!(chi2 < 13.2767, "chi-square {chi2} rejects Poisson(1)");
    }

    #[test]
    fn isrw_tagged_particle_marginal() {
        // one tagged particle; empirical distribution at t vs the exact
        // torus kernel, chi-square at the 1% level
        let lat = LatticeSpec::new(1, 15).unwrap();
        let model = CatalystModel::isrw(0.5).unwrap();
        let mut counts0 = vec![0u32; lat.sites()];
        counts0[0] = 1;
        let t = 2.5;
        let n = 30_000;
        let mut occ = vec![0u64; lat.sites()];
        for r in 0..n {
            let init = CatalystState::isrw_from_counts(counts0.clone(), &lat).unwrap();
            let path = evolve(&init, &model, &lat, t, r as u64).unwrap();
            for site in 0..lat.sites() {
                if path.final_state().occupancy.value(site) == 1 {
                    occ[site] += 1;
                    break;
                }
            }
        }
        let kernel = crate::lattice::torus_heat_kernel(t, &lat).unwrap();
        let chi2: f64 = occ
            .iter()
            .zip(&kernel)
            .map(|(&o, &p)| {
                let e = p * n as f64;
                (o as f64 - e) * (o as f64 - e) / e
            })
            .sum();
        // df = 14; 1% critical value 29.141
        assert!(chi2 < 29.141, "tagged-particle chi-square {chi2}");
    }

    #[test]
    fn svm_reaches_consensus_on_small_torus() {
        // soft absorption bound: d=1, L=6, by t = 10 L^2
        let lat = LatticeSpec::new(1, 6).unwrap();
        let model = CatalystModel::svm(0.5, srw(1), SvmStart::Product).unwrap();
        let t = 10.0 * 36.0;
        let n = 300;
        let mut absorbed = 0;
        for r in 0..n {
            let path = sample_path(&model, &lat, t, 1000 + r).unwrap();
            let total = path.final_state().occupancy.total();
            if total == 0 || total == lat.sites() as u64 {
                absorbed += 1;
            }
        }
        let frac = absorbed as f64 / n as f64;
        assert!(frac >= 0.99, "only {frac} of SVM runs reached consensus");
    }

    #[test]
    fn svm_burn_in_start() {
        let lat = LatticeSpec::new(1, 12).unwrap();
        let model =
            CatalystModel::svm(0.5, srw(1), SvmStart::BurnedIn { burn_time: 144.0 }).unwrap();
        let path = sample_path(&model, &lat, 1.0, 9).unwrap();
        assert_eq!(path.start_time(), 0.0);
        assert_eq!(path.horizon(), 1.0);
    }

    #[test]
    fn binary_dump_roundtrip() {
        let lat = LatticeSpec::new(1, 16).unwrap();
        for model in [
            CatalystModel::isrw(1.2).unwrap(),
            CatalystModel::sep(0.5, srw(1)).unwrap(),
        ] {
            let path = sample_path(&model, &lat, 3.0, 42).unwrap();
            let mut buf = Vec::new();
            path.write_binary(&mut buf).unwrap();
            let back = CatalystPath::read_binary(&mut buf.as_slice()).unwrap();
            assert_eq!(back.events(), path.events());
            assert_eq!(
                back.final_state().occupancy.total(),
                path.final_state().occupancy.total()
            );
            for x in (0..lat.sites()).step_by(3) {
                for s in [0.0, 1.1, 2.9] {
                    assert_eq!(back.query(x, s).unwrap(), path.query(x, s).unwrap());
                }
            }
        }
    }
}
