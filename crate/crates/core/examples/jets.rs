//! Value, gradient and Hessian of a random SIREN at one point, next to
//! central differences.
//!
//!     cargo run --release --example jets

use medial_sdf::diffjet::sym_pairs;
use medial_sdf::nets::{SdfArch, SdfNetwork};

fn main() -> medial_sdf::Result<()> {
    let net = SdfNetwork::init(SdfArch { width: 32, depth: 3, ..SdfArch::reference(2) }, 7)?;
    let x = [0.3, -0.2];
    let jet = net.forward(&x)?;
    let f = |y: [f64; 2]| net.eval(&y);

    let h = 1e-5;
    let gx = (f([x[0] + h, x[1]]) - f([x[0] - h, x[1]])) / (2.0 * h);
    let gy = (f([x[0], x[1] + h]) - f([x[0], x[1] - h])) / (2.0 * h);
    println!("value     {:+.10}", jet.value);
    println!("gradient  {:+.8} {:+.8}", jet.grad[0], jet.grad[1]);
    println!("  differences {:+.8} {:+.8}", gx, gy);

    let h = 1e-4;
    for (p, &(i, k)) in sym_pairs(2).iter().enumerate() {
        let at = |si: f64, sk: f64| {
            let mut y = x;
            y[i] += si * h;
            y[k] += sk * h;
            f(y)
        };
        let fd = if i == k {
            (at(1.0, 0.0) - 2.0 * f(x) + at(-1.0, 0.0)) / (h * h)
        } else {
            (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h)
        };
        println!("d2/dx{i}dx{k}  {:+.6}  differences {:+.6}", jet.hess[p], fd);
    }
    Ok(())
}
