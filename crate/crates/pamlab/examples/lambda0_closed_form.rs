//! The immobile-reactant exponent for the walk catalyst: finite-volume
//! oracle vs the closed form
//! `lambda_p(0) = rho gamma (1/G_d) / ((1/G_d) - p gamma)`.
//!
//! The finite-volume series converges like `t^{-1/2}` in d = 3, so the
//! tail is extrapolated with that exact exponent.
//!
//! ```sh
//! cargo run --release --example lambda0_closed_form
//! ```

use pamlab::lattice::{green_function, KernelSpec, LatticeSpec};
use pamlab::lyapunov::extrapolate_power_tail;
use pamlab::moments::{closed_form_lambda0, isrw_lambda0_series};
use pamlab::reactant::ModelParams;

fn main() {
    let lattice = LatticeSpec::new(3, 21).unwrap();
    let g3 = green_function(3, &KernelSpec::simple_random_walk(3))
        .unwrap()
        .expect_finite("d = 3 is transient");
    println!("G_3 = {g3:.8}");
    let ts: Vec<f64> = (1..=10).map(|i| 20.0 * i as f64).collect();
    for p in [1u32, 2] {
        let params = ModelParams::new(0.0, 0.2, 1.0, 0.0, p).unwrap();
        let series = isrw_lambda0_series(&params, &lattice, &ts).unwrap();
        println!("\np = {p}: Lambda_p(t) on L = 21");
        for (t, v) in ts.iter().zip(&series) {
            println!("  t = {t:>5.0}: {v:.6}");
        }
        let half = ts.len() / 2;
        let (lam, c) = extrapolate_power_tail(&ts[half..], &series[half..], 0.5).unwrap();
        let closed = closed_form_lambda0(&params, g3)
            .unwrap()
            .expect_finite("subcritical at p gamma = 0.2 p");
        println!("  sqrt-tail extrapolation: {lam:.6} (coefficient {c:.3})");
        println!(
            "  closed form:             {closed:.6} (rel diff {:.2e})",
            (lam - closed).abs() / closed
        );
    }

    // supercritical coupling: the finite exponent ceases to exist
    let params = ModelParams::new(0.0, 0.7, 1.0, 0.0, 1).unwrap();
    println!(
        "\ngamma = 0.7 (p gamma > 1/G_3): closed form = {}",
        closed_form_lambda0(&params, g3).unwrap()
    );
    let vals = isrw_lambda0_series(&params, &lattice, &[200.0, 400.0]).unwrap();
    println!(
        "finite-volume oracle keeps growing: Lambda(200) = {:.2}, Lambda(400) = {:.2}",
        vals[0], vals[1]
    );
}
