//! Lattice Green constants by two independent routes.
//!
//! Computes `G_d = int p_t(0,0) dt` (Fourier quadrature with a dyadic
//! shell mesh vs time-domain integration of the Bessel factorization) and
//! the second moment `G_d^* = int t p_t(0,0) dt` where it is finite.
//!
//! ```sh
//! cargo run --release --example green_constants
//! ```

use pamlab::lattice::{
    green_function, green_function_time_domain, green_star, green_star_time_domain, KernelSpec,
};

fn main() {
    println!("{:>3} {:>16} {:>16} {:>12}", "d", "fourier", "time-domain", "rel diff");
    for d in 1..=5 {
        let kernel = KernelSpec::simple_random_walk(d);
        let fourier = green_function(d, &kernel).unwrap();
        let time = green_function_time_domain(d).unwrap();
        let rel = match (fourier.finite(), time.finite()) {
            (Some(a), Some(b)) => format!("{:.2e}", (a - b).abs() / b),
            _ => "-".into(),
        };
        println!("{d:>3} {fourier:>16} {time:>16} {rel:>12}");
    }
    println!("\nG_d^* (finite for d >= 5):");
    for d in 3..=5 {
        let kernel = KernelSpec::simple_random_walk(d);
        let fourier = green_star(d, &kernel).unwrap();
        let time = green_star_time_domain(d, 1e4).unwrap();
        println!("  d={d}: fourier {fourier}, time-domain {time}");
    }
}
