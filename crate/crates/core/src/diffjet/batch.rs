use ndarray::Array2;

use super::{sym_pairs, Jet2};

/// Highest derivative order carried by a batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    First,
    Second,
}

pub fn channel_count(dim: usize, order: Order) -> usize {
    match order {
        Order::Value => 1,
        Order::First => 1 + dim,
        Order::Second => 1 + dim + sym_pairs(dim).len(),
    }
}

/// Jets of `units` scalar fields evaluated at `batch` points.
///
/// Storage is one row per unit; within a row the columns are grouped by
/// channel (value, then gradient components, then the Hessian upper triangle),
/// each group holding `batch` contiguous samples. An affine layer is then a
/// single matrix product over all channels.
#[derive(Clone, Debug, PartialEq)]
pub struct JetBatch {
    pub(crate) dim: usize,
    pub(crate) order: Order,
    pub(crate) batch: usize,
    pub(crate) data: Array2<f64>,
}

impl JetBatch {
    pub fn zeros(dim: usize, order: Order, units: usize, batch: usize) -> Self {
        JetBatch {
            dim,
            order,
            batch,
            data: Array2::zeros((units, channel_count(dim, order) * batch)),
        }
    }

    /// Identity seeds for a batch of points given as rows of `dim` coordinates.
    pub fn seed(points: &[f64], dim: usize, order: Order) -> Self {
        assert!(dim > 0 && points.len() % dim == 0);
        let batch = points.len() / dim;
        let mut out = Self::zeros(dim, order, dim, batch);
        for (b, p) in points.chunks_exact(dim).enumerate() {
            for i in 0..dim {
                out.data[[i, b]] = p[i];
                if order >= Order::First {
                    out.data[[i, (1 + i) * batch + b]] = 1.0;
                }
            }
        }
        out
    }

    pub fn from_raw(dim: usize, order: Order, batch: usize, data: Array2<f64>) -> Self {
        assert_eq!(data.ncols(), channel_count(dim, order) * batch);
        JetBatch {
            dim,
            order,
            batch,
            data,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn order(&self) -> Order {
        self.order
    }
    pub fn batch(&self) -> usize {
        self.batch
    }
    pub fn units(&self) -> usize {
        self.data.nrows()
    }
    pub fn channels(&self) -> usize {
        channel_count(self.dim, self.order)
    }
    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    pub fn value(&self, unit: usize, sample: usize) -> f64 {
        self.data[[unit, sample]]
    }

    pub fn grad(&self, unit: usize, axis: usize, sample: usize) -> f64 {
        debug_assert!(self.order >= Order::First);
        self.data[[unit, (1 + axis) * self.batch + sample]]
    }

    /// Canonical Hessian entry `s` (see [`sym_pairs`]).
    pub fn hess(&self, unit: usize, s: usize, sample: usize) -> f64 {
        debug_assert!(self.order == Order::Second);
        self.data[[unit, (1 + self.dim + s) * self.batch + sample]]
    }

    /// Values of one unit over the batch.
    pub fn values(&self, unit: usize) -> &[f64] {
        let row = self.data.row(unit).to_slice().expect("standard layout");
        &row[..self.batch]
    }

    pub fn jet(&self, unit: usize, sample: usize) -> Jet2 {
        let mut j = Jet2::constant(self.dim, self.value(unit, sample));
        if self.order >= Order::First {
            for i in 0..self.dim {
                j.grad[i] = self.grad(unit, i, sample);
            }
        }
        if self.order == Order::Second {
            for s in 0..sym_pairs(self.dim).len() {
                j.hess[s] = self.hess(unit, s, sample);
            }
        }
        j
    }

    pub fn set_jet(&mut self, unit: usize, sample: usize, jet: &Jet2) {
        let batch = self.batch;
        self.data[[unit, sample]] = jet.value;
        if self.order >= Order::First {
            for i in 0..self.dim {
                self.data[[unit, (1 + i) * batch + sample]] = jet.grad[i];
            }
        }
        if self.order == Order::Second {
            for s in 0..sym_pairs(self.dim).len() {
                self.data[[unit, (1 + self.dim + s) * batch + sample]] = jet.hess[s];
            }
        }
    }

    /// First non-finite entry as `(unit, column)`.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .indexed_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(idx, _)| idx)
    }

    pub(crate) fn same_shape(&self, other: &JetBatch) -> bool {
        self.dim == other.dim
            && self.order == other.order
            && self.batch == other.batch
            && self.data.dim() == other.data.dim()
    }
}
