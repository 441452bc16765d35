//! Regime classification for the three catalysts: divergent vs weakly
//! catalytic (walk catalyst), maximal vs strictly-between (exclusion and
//! voter catalysts), compared against the predicted dichotomy.
//!
//! ```sh
//! cargo run --release --example dichotomy
//! ```

use pamlab::catalysts::{CatalystKind, CatalystModel, SvmStart};
use pamlab::lattice::{KernelSpec, LatticeSpec};
use pamlab::lyapunov::{dichotomy_check, kappa_sweep, predicted_regime, FitOpts};
use pamlab::moments::Estimator;
use pamlab::reactant::ModelParams;

fn main() {
    // predictions across the parameter space
    println!("predicted regimes:");
    for (kind, d, gamma) in [
        (CatalystKind::Isrw, 2, 0.1),
        (CatalystKind::Isrw, 3, 0.2),
        (CatalystKind::Isrw, 3, 0.7),
        (CatalystKind::Sep, 1, 0.5),
        (CatalystKind::Sep, 3, 0.5),
        (CatalystKind::Svm, 2, 0.5),
        (CatalystKind::Svm, 5, 0.5),
    ] {
        let kernel = KernelSpec::simple_random_walk(d);
        let regime = predicted_regime(kind, d, &kernel, 1, gamma).unwrap();
        println!("  {:4} d={d} gamma={gamma}: {}", kind.as_str(), regime.as_str());
    }

    // a measured sweep checked against its prediction: SEP d=3 transient
    let d = 3;
    let lattice = LatticeSpec::new(d, 14).unwrap();
    let kernel = KernelSpec::simple_random_walk(d);
    let model = CatalystModel::sep(0.5, kernel.clone()).unwrap();
    let template = ModelParams::new(0.0, 0.5, 0.5, 0.0, 1).unwrap();
    let estimates = kappa_sweep(
        &model,
        &template,
        &lattice,
        &[0.0, 0.5],
        &(1..=8).map(|i| i as f64).collect::<Vec<_>>(),
        800,
        Estimator::FkDual,
        77,
        FitOpts { burn_in: Some(1.0) },
    )
    .unwrap();
    let report = dichotomy_check(CatalystKind::Sep, d, &kernel, &estimates, 0.5, 0.5).unwrap();
    println!("\nSEP d=3 sweep vs prediction '{}':", report.predicted.as_str());
    println!("claim: {}", report.claim);
    for row in &report.rows {
        println!(
            "  kappa={:.1}: lambda = {} +- {:.4}, in band: {:?} ({})",
            row.kappa, row.lambda, row.stderr, row.in_band, row.note
        );
    }
    println!("consistent = {}", report.consistent);

    // voter model in a recurrent dimension: trend toward gamma
    let lattice2 = LatticeSpec::new(2, 20).unwrap();
    let kernel2 = KernelSpec::simple_random_walk(2);
    let model2 = CatalystModel::svm(0.5, kernel2.clone(), SvmStart::Product).unwrap();
    let est2 = kappa_sweep(
        &model2,
        &template,
        &lattice2,
        &[0.0],
        &(1..=8).map(|i| 2.5 * i as f64).collect::<Vec<_>>(),
        800,
        Estimator::FkDual,
        78,
        FitOpts { burn_in: Some(2.0) },
    )
    .unwrap();
    let report2 = dichotomy_check(CatalystKind::Svm, 2, &kernel2, &est2, 0.5, 0.5).unwrap();
    println!("\nSVM d=2: predicted '{}' — {}", report2.predicted.as_str(), report2.claim);
    for row in &report2.rows {
        println!("  lambda = {} ({})", row.lambda, row.note);
    }
}
