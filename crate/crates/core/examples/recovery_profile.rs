//! The phase-field energy of the optimal transversal profile approaches the
//! length of the jump set, here one unit per transversal.
//!
//!     cargo run --release --example recovery_profile

use medial_sdf::diffjet::Jet2;
use medial_sdf::geometry::{profile, profile_slope};
use medial_sdf::loss::at_loss;

fn main() {
    println!("{:>8} {:>12} {:>12}", "eps", "energy", "1 + b/2eps");
    for eps in [1e-1, 3e-2, 1e-2, 3e-3, 1e-3] {
        let b = eps * eps;
        let half = 40.0 * eps;
        let n = 200_000;
        let h = 2.0 * half / n as f64;
        let jets: Vec<Jet2> = (0..n)
            .map(|i| {
                let x: f64 = -half + (i as f64 + 0.5) * h;
                let mut j = Jet2::constant(1, profile(x.abs(), eps, b));
                j.grad[0] = profile_slope(x.abs(), eps, b) * x.signum();
                j
            })
            .collect();
        let e = at_loss(&jets, &vec![h; n], eps);
        println!("{eps:>8.0e} {e:>12.6} {:>12.6}", 1.0 + b / (2.0 * eps));
    }
}
