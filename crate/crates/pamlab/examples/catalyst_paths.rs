//! Sample and inspect the three catalyst dynamics.
//!
//! Draws one realization of each medium, queries the space-time field,
//! verifies event-log replay, round-trips the binary dump, and prints
//! stationarity summaries.
//!
//! ```sh
//! cargo run --release --example catalyst_paths
//! ```

use pamlab::catalysts::{
    sample_path, stationarity_check, CatalystModel, CatalystPath, SvmStart,
};
use pamlab::lattice::{KernelSpec, LatticeSpec};

fn main() {
    let lattice = LatticeSpec::new(1, 40).unwrap();
    let kernel = KernelSpec::simple_random_walk(1);
    let models = [
        ("ISRW", CatalystModel::isrw(1.0).unwrap()),
        ("SEP", CatalystModel::sep(0.5, kernel.clone()).unwrap()),
        (
            "SVM",
            CatalystModel::svm(0.5, kernel, SvmStart::Product).unwrap(),
        ),
    ];
    for (name, model) in &models {
        let path = sample_path(model, &lattice, 10.0, 42).unwrap();
        println!(
            "{name}: {} state-changing events on [0, 10], max field value {}",
            path.events().len(),
            path.max_value()
        );
        println!(
            "  xi(0, t) at t = 0, 5, 10: {} {} {}",
            path.query(0, 0.0).unwrap(),
            path.query(0, 5.0).unwrap(),
            path.query(0, 10.0).unwrap()
        );
        println!(
            "  time integral of xi(0, .) over [0, 10]: {:.4}",
            path.integrate_site(0, 0.0, 10.0).unwrap()
        );

        // binary dump round trip
        let mut buf = Vec::new();
        path.write_binary(&mut buf).unwrap();
        let back = CatalystPath::read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(back.events(), path.events());
        println!("  dump round trip: {} bytes, events identical", buf.len());

        let summary = stationarity_check(model, &lattice, 5.0, 200, 7).unwrap();
        println!(
            "  occupancy at t=5: {:.4} +- {:.4} (target {})",
            summary.mean, summary.stderr, summary.expected
        );
    }
}
