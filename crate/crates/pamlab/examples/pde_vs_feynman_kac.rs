//! Solve the reactant equation along one catalyst path and cross-check
//! the Feynman-Kac dual estimator against it at the origin.
//!
//! ```sh
//! cargo run --release --example pde_vs_feynman_kac
//! ```

use pamlab::catalysts::{sample_path, CatalystModel};
use pamlab::lattice::LatticeSpec;
use pamlab::reactant::{fk_estimate, integrate_pde, ModelParams};

fn main() {
    let lattice = LatticeSpec::new(1, 24).unwrap();
    let model = CatalystModel::isrw(1.0).unwrap();
    let path = sample_path(&model, &lattice, 4.0, 11).unwrap();
    let params = ModelParams::new(0.5, 0.3, 1.0, 0.0, 2).unwrap();

    let snaps = integrate_pde(&path, &params, &lattice, &[1.0, 2.0, 4.0]).unwrap();
    println!("{:>6} {:>14} {:>14} {:>14} {:>8}", "t", "log u(0,t) pde", "fk estimate", "fk stderr", "sigma");
    for snap in &snaps {
        let t = snap.time();
        let fk = fk_estimate(&path, &params, &lattice, t, 20_000, 99).unwrap();
        let sig = (fk.log_mean - snap.log_value(0)).abs() / fk.log_stderr.max(1e-300);
        println!(
            "{t:>6.1} {:>14.6} {:>14.6} {:>14.6} {sig:>8.2}",
            snap.log_value(0),
            fk.log_mean,
            fk.log_stderr
        );
    }
    println!(
        "\none unbiased log sample of u(0,4)^2 via two independent walks: {:.6}",
        fk_estimate(&path, &params, &lattice, 4.0, 2, 1).unwrap().log_moment_sample
    );
}
