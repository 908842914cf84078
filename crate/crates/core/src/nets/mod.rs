//! Network architectures for the distance field and the phase field.

mod checkpoint;
mod phase;
mod sdf;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, MAGIC};
pub use phase::{PfArch, PhaseFieldNetwork};
pub use sdf::{SdfArch, SdfNetwork};

use ndarray::{ArrayView1, ArrayView2};
use rand::Rng;

/// Location of a dense layer `y = W x + b` inside a flat parameter vector.
/// `W` is stored row-major (`rows × cols`) and immediately followed by `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Linear {
    pub w: usize,
    pub b: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Linear {
    pub fn alloc(next: &mut usize, rows: usize, cols: usize) -> Self {
        let w = *next;
        let b = w + rows * cols;
        *next = b + rows;
        Linear { w, b, rows, cols }
    }

    pub fn weights<'p>(&self, params: &'p [f64]) -> ArrayView2<'p, f64> {
        ArrayView2::from_shape((self.rows, self.cols), &params[self.w..self.b]).expect("layout")
    }

    pub fn bias<'p>(&self, params: &'p [f64]) -> ArrayView1<'p, f64> {
        ArrayView1::from(&params[self.b..self.b + self.rows])
    }

    /// Plain evaluation of `W x + b`.
    pub fn apply(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|k| {
                let row = &params[self.w + k * self.cols..self.w + (k + 1) * self.cols];
                params[self.b + k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn fill_uniform(&self, params: &mut [f64], rng: &mut impl Rng, w_limit: f64, b_limit: f64) {
        for p in &mut params[self.w..self.b] {
            *p = rng.gen_range(-w_limit..=w_limit);
        }
        for p in &mut params[self.b..self.b + self.rows] {
            *p = if b_limit > 0.0 {
                rng.gen_range(-b_limit..=b_limit)
            } else {
                0.0
            };
        }
    }
}

/// SIREN weight bound for a layer with input width `fan_in`.
pub(crate) fn siren_limit(fan_in: usize, first: bool, omega: f64) -> f64 {
    if first {
        1.0 / fan_in as f64
    } else {
        (6.0 / fan_in as f64).sqrt() / omega
    }
}
