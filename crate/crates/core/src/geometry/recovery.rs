//! Recovery pair `(φ^ε, v^ε)`: the exact SDF mollified near the medial axis
//! and the Ambrosio–Tortorelli profile across it.

use std::f64::consts::PI;

use super::AnalyticShape;
use crate::{Error, Result};

fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (1.0 / (r2 - 1.0)).exp()
    } else {
        0.0
    }
}

/// Composite Simpson rule on `[a, b]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => unreachable!("dimension checked by caller"),
    }
}

/// Normalization `C_d` of the standard mollifier so that it integrates to 1.
pub fn mollifier_constant(dim: usize) -> Result<f64> {
    if !(1..=3).contains(&dim) {
        return Err(Error::Dimension(format!("mollifier in dimension {dim}")));
    }
    let radial = simpson(|r| r.powi(dim as i32 - 1) * bump(r * r), 0.0, 1.0, 20_000);
    Ok(1.0 / (sphere_area(dim) * radial))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryParams {
    pub dim: usize,
    pub eps: f64,
    /// Tube radius `b_ε` around the medial axis.
    pub b: f64,
    pub c_d: f64,
}

impl RecoveryParams {
    /// Defaults to `b_ε = ε²`.
    pub fn new(dim: usize, eps: f64) -> Result<Self> {
        Self::with_tube(dim, eps, eps * eps)
    }

    pub fn with_tube(dim: usize, eps: f64, b: f64) -> Result<Self> {
        if !(eps > 0.0 && b > 0.0 && b < eps) {
            return Err(Error::InvalidArgument(format!(
                "recovery needs 0 < b < ε, got ε = {eps}, b = {b}"
            )));
        }
        Ok(RecoveryParams {
            dim,
            eps,
            b,
            c_d: mollifier_constant(dim)?,
        })
    }

    /// Scaled mollifier `ρ^b(y)`.
    pub fn rho(&self, y: &[f64]) -> f64 {
        let r2: f64 = y.iter().map(|v| v * v).sum::<f64>() / (self.b * self.b);
        self.c_d * bump(r2) / self.b.powi(self.dim as i32)
    }
}

/// Profile value as a function of the distance to the medial axis.
pub fn profile(dist: f64, eps: f64, b: f64) -> f64 {
    if dist <= b {
        0.0
    } else {
        1.0 - ((b - dist) / (2.0 * eps)).exp()
    }
}

/// Derivative of [`profile`] with respect to the distance.
pub fn profile_slope(dist: f64, eps: f64, b: f64) -> f64 {
    if dist <= b {
        0.0
    } else {
        ((b - dist) / (2.0 * eps)).exp() / (2.0 * eps)
    }
}

pub struct Recovery {
    pub shape: AnalyticShape,
    pub params: RecoveryParams,
    radial_nodes: usize,
    angular_nodes: usize,
}

impl Recovery {
    pub fn new(shape: AnalyticShape, params: RecoveryParams) -> Result<Self> {
        if shape.dim() != params.dim {
            return Err(Error::Dimension(format!(
                "{} is {}D but the recovery parameters are {}D",
                shape.name(),
                shape.dim(),
                params.dim
            )));
        }
        Ok(Recovery {
            shape,
            params,
            radial_nodes: 64,
            angular_nodes: 48,
        })
    }

    pub fn v(&self, x: &[f64]) -> f64 {
        profile(self.shape.medial_distance(x), self.params.eps, self.params.b)
    }

    /// `|∇v|`; the medial distance has unit gradient almost everywhere.
    pub fn v_grad_norm(&self, x: &[f64]) -> f64 {
        profile_slope(self.shape.medial_distance(x), self.params.eps, self.params.b)
    }

    /// Mollified SDF inside the `2b` tube, exact SDF elsewhere.
    pub fn phi(&self, x: &[f64]) -> f64 {
        let b = self.params.b;
        if self.shape.medial_distance(x) > 2.0 * b {
            return self.shape.sgndist(x);
        }
        self.convolve(x)
    }

    /// `∫ ρ^b(y) sgndist(x − y) dy` in polar coordinates: Simpson in the
    /// radius, midpoint rule in the angle (and in cos θ for 3D).
    fn convolve(&self, x: &[f64]) -> f64 {
        let p = &self.params;
        let na = self.angular_nodes;
        let dirs: Vec<Vec<f64>> = match p.dim {
            2 => (0..na)
                .map(|k| {
                    let t = 2.0 * PI * (k as f64 + 0.5) / na as f64;
                    vec![t.cos(), t.sin()]
                })
                .collect(),
            3 => {
                let nz = na / 2;
                (0..nz)
                    .flat_map(|i| {
                        let z = -1.0 + 2.0 * (i as f64 + 0.5) / nz as f64;
                        let s = (1.0 - z * z).sqrt();
                        (0..na).map(move |k| {
                            let t = 2.0 * PI * (k as f64 + 0.5) / na as f64;
                            vec![s * t.cos(), s * t.sin(), z]
                        })
                    })
                    .collect()
            }
            _ => vec![vec![1.0], vec![-1.0]],
        };
        let weight = sphere_area(p.dim) / dirs.len() as f64;
        let shell = |r: f64| -> f64 {
            if r == 0.0 || r >= p.b {
                return 0.0;
            }
            let mean: f64 = dirs
                .iter()
                .map(|d| {
                    let y: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi - r * di).collect();
                    self.shape.sgndist(&y)
                })
                .sum::<f64>();
            weight * mean * r.powi(p.dim as i32 - 1) * p.rho(&[r])
        };
        simpson(shell, 0.0, p.b, self.radial_nodes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mollifier_integrates_to_one() {
        // independent check on a Cartesian grid in 2D
        let p = RecoveryParams::with_tube(2, 1.0, 0.5).unwrap();
        let n = 800;
        let h = 2.0 * p.b / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                let y = [-p.b + (i as f64 + 0.5) * h, -p.b + (j as f64 + 0.5) * h];
                s += p.rho(&y) * h * h;
            }
        }
        assert!((s - 1.0).abs() < 1e-4, "{s}");
        // 1D closed-ish form: C_1 ≈ 1 / 0.443993816
        let c1 = mollifier_constant(1).unwrap();
        assert!((1.0 / c1 - 0.443_993_816_168_079_4).abs() < 1e-8);
    }

    #[test]
    fn profile_values() {
        let r = Recovery::new(
            AnalyticShape::by_name("square").unwrap(),
            RecoveryParams::new(2, 1e-3).unwrap(),
        )
        .unwrap();
        assert_eq!(r.v(&[0.1, 0.1]), 0.0);
        assert!((r.v(&[0.3, 0.0]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn phi_is_exact_away_from_tube_and_smoothed_on_axis() {
        let shape = AnalyticShape::by_name("square").unwrap();
        let r = Recovery::new(shape.clone(), RecoveryParams::with_tube(2, 0.2, 0.05).unwrap()).unwrap();
        let x = [0.3, 0.05];
        assert_eq!(r.phi(&x), shape.sgndist(&x));
        // inside a convex shape the SDF is convex, so averaging raises it
        let d = [0.2, 0.2];
        let m = r.phi(&d);
        assert!(m > shape.sgndist(&d) && m < shape.sgndist(&d) + 0.05);
        let c = Recovery::new(
            AnalyticShape::Circle { radius: 0.5 },
            RecoveryParams::with_tube(2, 0.2, 0.05).unwrap(),
        )
        .unwrap();
        let x = [0.04, 0.0];
        // ‖x‖ is convex, so the average lies above it
        assert!(c.phi(&x) > c.shape.sgndist(&x));
    }

    #[test]
    fn rejects_tube_wider_than_eps() {
        assert!(RecoveryParams::with_tube(2, 1e-2, 0.1).is_err());
    }
}
