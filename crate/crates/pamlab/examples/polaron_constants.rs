//! The variational constants P_3 and P_5 that govern the large-kappa
//! scaling corrections, plus a Monte Carlo look at the Brownian
//! double-integral functional whose double limit is `4 sqrt(pi) P_3`.
//!
//! ```sh
//! cargo run --release --example polaron_constants
//! ```

use pamlab::polaron::{
    functional_value, solve_variational, theta_estimate, GridConfig, RadialProfile,
};

fn main() {
    for d in [3usize, 5] {
        let sol = solve_variational(d, GridConfig::default()).unwrap();
        println!(
            "P_{d} = {:.6e} (converged = {}, {} sweeps)",
            sol.p_d, sol.converged, sol.sweeps
        );
        println!(
            "  maximizer: a = {:.4e}, b = {:.4e}, a - b = {:.4e}, non-increasing = {}",
            sol.functional.coulomb,
            sol.functional.gradient,
            sol.functional.value,
            sol.profile.is_non_increasing()
        );
        let trial = RadialProfile::gaussian(d, 1600, 30.0, 1.0).unwrap();
        let j = functional_value(&trial).unwrap().scale_free();
        println!("  best Gaussian trial: {:.6e} (dominated)", j);
    }

    // the Brownian functional at desk scale: dominated by the short-range
    // diagonal (~ sqrt(2) t / alpha), far above the alpha -> inf limit
    let p3 = solve_variational(3, GridConfig::default()).unwrap().p_d;
    let limit = 4.0 * std::f64::consts::PI.sqrt() * p3;
    println!("\n4 sqrt(pi) P_3 = {limit:.4e} (the t -> inf, alpha -> inf limit)");
    for (t, alpha) in [(1.0, 1.0), (5.0, 1.0)] {
        let est = theta_estimate(t, alpha, 2000, 100, 9).unwrap();
        println!(
            "theta({t}; {alpha}) = {:.4} +- {:.4} with 2000 paths (high-variance, qualitative)",
            est.value, est.stderr
        );
    }
}
