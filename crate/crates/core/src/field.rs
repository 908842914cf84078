//! Common interface over everything that can be evaluated as a scalar field:
//! trained networks, analytic shapes, grids and closures.

use crate::diffjet::Order;
use crate::geometry::AnalyticShape;
use crate::nets::{PhaseFieldNetwork, SdfNetwork};

/// Step of the central differences used by [`ScalarField::gradient`]'s
/// default implementation.
pub const FD_STEP: f64 = 1e-6;

pub trait ScalarField: Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn values(&self, points: &[f64]) -> Vec<f64> {
        points.chunks_exact(self.dim()).map(|x| self.value(x)).collect()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        (0..x.len())
            .map(|k| {
                y[k] = x[k] + FD_STEP;
                let p = self.value(&y);
                y[k] = x[k] - FD_STEP;
                let m = self.value(&y);
                y[k] = x[k];
                (p - m) / (2.0 * FD_STEP)
            })
            .collect()
    }

    /// Values and gradients, `dim` gradient entries per point.
    fn values_gradients(&self, points: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let v = self.values(points);
        let g = points.chunks_exact(self.dim()).flat_map(|x| self.gradient(x)).collect();
        (v, g)
    }
}

const CHUNK: usize = 4096;

impl ScalarField for SdfNetwork {
    fn dim(&self) -> usize {
        SdfNetwork::dim(self)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn values(&self, points: &[f64]) -> Vec<f64> {
        SdfNetwork::values(self, points)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).map(|j| j.grad().to_vec()).unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }
    fn values_gradients(&self, points: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = SdfNetwork::dim(self);
        let mut v = Vec::with_capacity(points.len() / d);
        let mut g = Vec::with_capacity(points.len());
        for c in points.chunks(CHUNK * d) {
            for j in self.forward_batch(c, Order::First).expect("consistent layout") {
                v.push(j.value);
                g.extend_from_slice(j.grad());
            }
        }
        (v, g)
    }
}

impl ScalarField for PhaseFieldNetwork {
    fn dim(&self) -> usize {
        PhaseFieldNetwork::dim(self)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x)
    }
    fn values(&self, points: &[f64]) -> Vec<f64> {
        PhaseFieldNetwork::values(self, points)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).map(|(_, g)| g).unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }
}

impl ScalarField for AnalyticShape {
    fn dim(&self) -> usize {
        AnalyticShape::dim(self)
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.sgndist(x)
    }
}

/// `sign · inner`, used to apply the global sign alignment.
pub struct Signed<'a, F: ?Sized> {
    pub inner: &'a F,
    pub sign: f64,
}

impl<F: ScalarField + ?Sized> ScalarField for Signed<'_, F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.sign * self.inner.value(x)
    }
    fn values(&self, points: &[f64]) -> Vec<f64> {
        self.inner.values(points).into_iter().map(|v| self.sign * v).collect()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.inner.gradient(x).into_iter().map(|v| self.sign * v).collect()
    }
    fn values_gradients(&self, points: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (v, g) = self.inner.values_gradients(points);
        (
            v.into_iter().map(|v| self.sign * v).collect(),
            g.into_iter().map(|v| self.sign * v).collect(),
        )
    }
}

/// Closure-backed field with finite-difference gradients.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> ScalarField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}
