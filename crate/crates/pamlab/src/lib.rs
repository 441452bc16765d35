//! Simulation and numerical-optimization laboratory for the lattice heat
//! equation with a time-dependent catalytic random medium (the parabolic
//! Anderson model)
//!
//! ```text
//!     du/dt = kappa * Lap u + gamma * xi(x,t) * u,      u(.,0) = 1,
//! ```
//!
//! on a d-dimensional torus, driven by one of three catalyst dynamics:
//!
//! * **ISRW** — a Poisson field of independent rate-1 simple random walks,
//! * **SEP**  — the symmetric exclusion process (stirring representation),
//! * **SVM**  — the symmetric voter model.
//!
//! The crate estimates annealed Lyapunov exponents
//! `lambda_p = lim_t (1/pt) log E[u(0,t)^p]`, detects intermittency
//! (`lambda_p > lambda_{p-1}`), classifies the weakly/strongly catalytic
//! regimes, and evaluates the closed-form and asymptotic constants these
//! limits involve: lattice Green constants `G_d`, `G_d^*` and the
//! polaron-type variational constants `P_3`, `P_5`.
//!
//! # Layout
//!
//! * [`lattice`] — torus geometry, walk kernels, heat kernel at the origin,
//!   Green constants by Fourier and time-domain quadrature.
//! * [`catalysts`] — exact event-driven simulation of the three media,
//!   queryable space-time paths.
//! * [`reactant`] — Strang-split PDE integrator along a catalyst path and
//!   the Feynman-Kac dual estimator.
//! * [`moments`] — annealed moment ensembles, exact small-system oracles,
//!   the kappa=0 closed form.
//! * [`lyapunov`] — exponent extraction, kappa sweeps, intermittency gaps,
//!   dichotomy classification, large-kappa scaling constants.
//! * [`polaron`] — radial variational solver for `P_3`/`P_5` and the
//!   Brownian double-integral functional it limits.
//! * [`config`], [`experiment`], [`report`] — experiment configuration,
//!   orchestration, persistence and reporting; see the `pamlab` binary.
//!
//! Every stochastic routine takes an explicit seed and is bit-reproducible
//! for a fixed build: identical inputs give identical outputs, including
//! ensemble reductions (replica results are combined in replica order).

pub mod catalysts;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod ext;
pub mod lattice;
pub mod lyapunov;
pub mod moments;
pub mod polaron;
pub mod reactant;
pub mod report;
pub mod seeding;

pub use error::{Error, Result};
pub use ext::ExtReal;
