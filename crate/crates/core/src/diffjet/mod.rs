//! Second-order jets and the reverse-mode tape built on top of them.
//!
//! A [`Jet2`] bundles the value, spatial gradient and spatial Hessian of a
//! scalar field at one point. Networks are evaluated on whole batches at once
//! through [`JetBatch`] and [`Tape`]; the per-point functions in this module
//! define the propagation rules and serve as the reference for the batched
//! engine.

mod batch;
mod tape;

pub use batch::{channel_count, JetBatch, Order};
pub use tape::{NodeId, Op, Tape, UnitMap};

use ndarray::{ArrayView1, ArrayView2};

use crate::{Error, Result};

/// Upper-triangle index pairs `(i, j)`, `i <= j`, in canonical storage order.
pub fn sym_pairs(dim: usize) -> &'static [(usize, usize)] {
    match dim {
        1 => &[(0, 0)],
        2 => &[(0, 0), (0, 1), (1, 1)],
        3 => &[(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)],
        _ => panic!("unsupported spatial dimension {dim}"),
    }
}

/// Position of the entry `(i, j)` in canonical upper-triangle storage.
pub fn sym_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    sym_pairs(dim)
        .iter()
        .position(|&p| p == (i, j))
        .expect("index in range")
}

/// Value, gradient and Hessian of a scalar field at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub dim: usize,
    pub value: f64,
    pub grad: [f64; 3],
    /// Upper triangle of the Hessian, ordered as [`sym_pairs`].
    pub hess: [f64; 6],
}

impl Jet2 {
    pub fn constant(dim: usize, value: f64) -> Self {
        assert!((1..=3).contains(&dim));
        Jet2 {
            dim,
            value,
            grad: [0.0; 3],
            hess: [0.0; 6],
        }
    }

    /// Identity seed for coordinate `axis` at value `x`.
    pub fn variable(dim: usize, axis: usize, x: f64) -> Self {
        let mut j = Self::constant(dim, x);
        j.grad[axis] = 1.0;
        j
    }

    /// Identity seeds for every coordinate of `point`.
    pub fn seed(point: &[f64]) -> Vec<Jet2> {
        let dim = point.len();
        point
            .iter()
            .enumerate()
            .map(|(i, &x)| Jet2::variable(dim, i, x))
            .collect()
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad[..self.dim]
    }

    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        self.hess[sym_index(self.dim, i, j)]
    }

    /// Full symmetric Hessian, zero-padded to 3×3.
    pub fn hess_matrix(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for (s, &(i, j)) in sym_pairs(self.dim).iter().enumerate() {
            m[i][j] = self.hess[s];
            m[j][i] = self.hess[s];
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad().iter().all(|g| g.is_finite())
            && self.hess[..sym_pairs(self.dim).len()]
                .iter()
                .all(|h| h.is_finite())
    }

    /// Compose with a scalar function given as `[f, f', f'']` at `self.value`.
    fn chain(&self, f: [f64; 3]) -> Jet2 {
        let mut out = Jet2::constant(self.dim, f[0]);
        for i in 0..self.dim {
            out.grad[i] = f[1] * self.grad[i];
        }
        for (s, &(i, j)) in sym_pairs(self.dim).iter().enumerate() {
            out.hess[s] = f[1] * self.hess[s] + f[2] * self.grad[i] * self.grad[j];
        }
        out
    }
}

/// Pointwise scalar nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    /// `sin(omega * u)`
    Sine { omega: f64 },
    /// `e^{δu} / (1 + e^{δu})`
    Sigmoid { delta: f64 },
    /// `u²`
    Square,
}

impl Activation {
    /// `[f, f', f'', f''']` at `u`.
    pub fn derivatives(&self, u: f64) -> [f64; 4] {
        match *self {
            Activation::Sine { omega } => {
                let (s, c) = (omega * u).sin_cos();
                let w2 = omega * omega;
                [s, omega * c, -w2 * s, -w2 * omega * c]
            }
            Activation::Sigmoid { delta } => {
                let s = logistic(delta * u);
                let p = s * (1.0 - s);
                [
                    s,
                    delta * p,
                    delta * delta * p * (1.0 - 2.0 * s),
                    delta * delta * delta * p * (1.0 - 6.0 * s + 6.0 * s * s),
                ]
            }
            Activation::Square => [u * u, 2.0 * u, 2.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Activation::Sine { omega } if !(omega > 0.0) => Err(Error::InvalidArgument(format!(
                "sine frequency must be positive, got {omega}"
            ))),
            Activation::Sigmoid { delta } if !(delta > 0.0) => Err(Error::InvalidArgument(
                format!("sigmoid slope must be positive, got {delta}"),
            )),
            _ => Ok(()),
        }
    }
}

/// Numerically stable logistic function.
pub fn logistic(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

pub fn jet_activation(kind: Activation, input: &Jet2) -> Jet2 {
    let [f0, f1, f2, _] = kind.derivatives(input.value);
    input.chain([f0, f1, f2])
}

/// Leibniz rule for the product of two jets.
pub fn jet_product(a: &Jet2, b: &Jet2) -> Jet2 {
    assert_eq!(a.dim, b.dim);
    let mut out = Jet2::constant(a.dim, a.value * b.value);
    for i in 0..a.dim {
        out.grad[i] = a.value * b.grad[i] + b.value * a.grad[i];
    }
    for (s, &(i, j)) in sym_pairs(a.dim).iter().enumerate() {
        out.hess[s] = a.value * b.hess[s]
            + b.value * a.hess[s]
            + a.grad[i] * b.grad[j]
            + a.grad[j] * b.grad[i];
    }
    out
}

/// `out_k = Σ_j W_kj in_j + b_k`, applied channel by channel.
pub fn jet_affine(
    w: ArrayView2<'_, f64>,
    b: ArrayView1<'_, f64>,
    input: &[Jet2],
) -> Result<Vec<Jet2>> {
    if w.ncols() != input.len() || w.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "affine map {}x{} (bias {}) applied to {} inputs",
            w.nrows(),
            w.ncols(),
            b.len(),
            input.len()
        )));
    }
    let dim = input.first().map_or(1, |j| j.dim);
    if input.iter().any(|j| j.dim != dim) {
        return Err(Error::Dimension("mixed jet dimensions".into()));
    }
    let nh = sym_pairs(dim).len();
    Ok(w.outer_iter()
        .zip(b.iter())
        .map(|(row, &bias)| {
            let mut out = Jet2::constant(dim, bias);
            for (&wkj, jet) in row.iter().zip(input) {
                out.value += wkj * jet.value;
                for i in 0..dim {
                    out.grad[i] += wkj * jet.grad[i];
                }
                for s in 0..nh {
                    out.hess[s] += wkj * jet.hess[s];
                }
            }
            out
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array1, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_identity_keeps_jets() {
        let x = Jet2::seed(&[0.3, -0.7, 0.1]);
        let w = Array2::<f64>::eye(3);
        let b = Array1::<f64>::zeros(3);
        let out = jet_affine(w.view(), b.view(), &x).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn affine_scalar() {
        let x = [Jet2::variable(1, 0, 1.5)];
        let out = jet_affine(arr2(&[[2.5]]).view(), arr1(&[0.0]).view(), &x).unwrap();
        assert_eq!(out[0].value, 3.75);
        assert_eq!(out[0].grad[0], 2.5);
        assert_eq!(out[0].hess[0], 0.0);
    }

    #[test]
    fn affine_rejects_mismatch() {
        let x = Jet2::seed(&[0.3, -0.7]);
        let w = Array2::<f64>::zeros((2, 3));
        let b = Array1::<f64>::zeros(2);
        assert!(matches!(
            jet_affine(w.view(), b.view(), &x),
            Err(Error::Dimension(_))
        ));
    }

    /// Affine layer followed by a nonlinear probe, checked against central
    /// differences of the plain map.
    #[test]
    fn affine_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = Array2::from_shape_fn((8, 3), |_| rng.gen_range(-1.0..1.0));
        let b = Array1::from_shape_fn(8, |_| rng.gen_range(-1.0..1.0));
        // inputs: x_i and x_i^2 style jets via a fixed nonlinear pre-map
        let plain = |p: &[f64]| -> Vec<f64> {
            let pre: Vec<f64> = p.iter().map(|v| (2.0 * v).sin()).collect();
            (0..8)
                .map(|k| b[k] + (0..3).map(|j| w[[k, j]] * pre[j]).sum::<f64>())
                .collect()
        };
        let x = [0.2, -0.4, 0.6];
        let seeds = Jet2::seed(&x);
        let pre: Vec<Jet2> = seeds
            .iter()
            .map(|j| jet_activation(Activation::Sine { omega: 2.0 }, j))
            .collect();
        let out = jet_affine(w.view(), b.view(), &pre).unwrap();
        let h = 1e-5;
        for k in 0..8 {
            for i in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (plain(&xp)[k] - plain(&xm)[k]) / (2.0 * h);
                assert!((fd - out[k].grad[i]).abs() <= 1e-9 * fd.abs().max(1.0));
                for j in 0..3 {
                    let f = |di: f64, dj: f64| {
                        let mut y = x;
                        y[i] += di;
                        y[j] += dj;
                        plain(&y)[k]
                    };
                    let hfd = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
                    let rel = (hfd - out[k].hess_at(i, j)).abs() / hfd.abs().max(1.0);
                    assert!(rel < 1e-5, "hess {k} {i}{j}: {hfd} vs {}", out[k].hess_at(i, j));
                }
            }
        }
    }

    #[test]
    fn sine_of_seed() {
        let w = 3.0;
        let x = 0.4;
        let out = jet_activation(Activation::Sine { omega: w }, &Jet2::variable(1, 0, x));
        assert_eq!(out.value, (w * x).sin());
        assert_eq!(out.grad[0], w * (w * x).cos());
        assert_eq!(out.hess[0], -w * w * (w * x).sin());
    }

    #[test]
    fn sigmoid_half_at_zero() {
        let out = jet_activation(Activation::Sigmoid { delta: 0.1 }, &Jet2::variable(2, 0, 0.0));
        assert_eq!(out.value, 0.5);
        assert!((out.grad[0] - 0.025).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_derivatives_match_fd() {
        let act = Activation::Sigmoid { delta: 0.7 };
        let h = 1e-4;
        for &u in &[-3.0, -0.2, 0.0, 1.3, 5.0] {
            let d = act.derivatives(u);
            let dp = act.derivatives(u + h);
            let dm = act.derivatives(u - h);
            for k in 0..3 {
                let fd = (dp[k] - dm[k]) / (2.0 * h);
                assert!((fd - d[k + 1]).abs() < 1e-7, "order {k} at {u}");
            }
        }
    }

    #[test]
    fn product_square() {
        let u = Jet2::variable(1, 0, 2.0);
        let sq = jet_product(&u, &u);
        assert_eq!((sq.value, sq.grad[0], sq.hess[0]), (4.0, 4.0, 2.0));
        assert_eq!(sq, jet_activation(Activation::Square, &u));
    }

    #[test]
    fn hessian_storage_is_symmetric() {
        let seeds = Jet2::seed(&[0.5, 0.25, -0.125]);
        let a = jet_activation(Activation::Sine { omega: 1.7 }, &seeds[0]);
        let b = jet_activation(Activation::Sine { omega: 0.3 }, &seeds[2]);
        let p = jet_product(&a, &b);
        let m = p.hess_matrix();
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[i][j] - m[j][i]).abs() <= 1e-12);
            }
        }
        assert!(p.hess_at(0, 2) != 0.0);
        assert_eq!(p.hess_at(0, 2), p.hess_at(2, 0));
    }

    #[test]
    fn invalid_activation_parameters() {
        assert!(Activation::Sine { omega: 0.0 }.validate().is_err());
        assert!(Activation::Sigmoid { delta: -1.0 }.validate().is_err());
        assert!(Activation::Square.validate().is_ok());
    }
}
