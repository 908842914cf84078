use ndarray::ArrayView1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{siren_limit, Linear};
use crate::diffjet::{Activation, Jet2, JetBatch, NodeId, Order, Tape, UnitMap};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SdfArch {
    pub dim: usize,
    pub width: usize,
    /// Number of hidden layers.
    pub depth: usize,
    /// Frequency of the first hidden layer; later layers use 1.
    pub omega0: f64,
}

impl SdfArch {
    /// 256 units, 4 hidden layers in 2D and 8 in 3D.
    pub fn reference(dim: usize) -> Self {
        SdfArch {
            dim,
            width: 256,
            depth: if dim == 2 { 4 } else { 8 },
            omega0: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) || self.width == 0 || self.depth == 0 || !(self.omega0 > 0.0)
        {
            return Err(Error::InvalidArgument(format!("bad SDF architecture {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct QuadLayer {
    lin: Linear,
    a: usize,
    c: usize,
}

/// MLP whose hidden layers compute `sin(ω (a ⊙ u + c ⊙ u²))` with `u = W h + b`,
/// followed by a linear scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct SdfNetwork {
    arch: SdfArch,
    params: Vec<f64>,
    hidden: Vec<QuadLayer>,
    out: Linear,
}

impl SdfNetwork {
    /// Zero-filled network with the given architecture.
    pub fn zeros(arch: SdfArch) -> Result<Self> {
        arch.validate()?;
        let mut next = 0;
        let hidden = (0..arch.depth)
            .map(|l| {
                let cols = if l == 0 { arch.dim } else { arch.width };
                let lin = Linear::alloc(&mut next, arch.width, cols);
                let a = next;
                let c = a + arch.width;
                next = c + arch.width;
                QuadLayer { lin, a, c }
            })
            .collect();
        let out = Linear::alloc(&mut next, 1, arch.width);
        Ok(SdfNetwork {
            arch,
            params: vec![0.0; next],
            hidden,
            out,
        })
    }

    /// SIREN-style initialization; `a ≡ 1`, `c ≡ 0`.
    pub fn init(arch: SdfArch, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..net.hidden.len() {
            let layer = net.hidden[l];
            let fan_in = layer.lin.cols;
            let omega = net.layer_frequency(l);
            let w = siren_limit(fan_in, l == 0, omega);
            layer
                .lin
                .fill_uniform(&mut net.params, &mut rng, w, 1.0 / (fan_in as f64).sqrt());
            net.params[layer.a..layer.a + arch.width].fill(1.0);
            net.params[layer.c..layer.c + arch.width].fill(0.0);
        }
        let out = net.out;
        out.fill_uniform(&mut net.params, &mut rng, siren_limit(arch.width, false, 1.0), 0.0);
        Ok(net)
    }

    pub fn arch(&self) -> &SdfArch {
        &self.arch
    }
    pub fn dim(&self) -> usize {
        self.arch.dim
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }
    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    /// Set every quadratic coefficient `c` (and optionally `a`).
    pub fn set_quadratic(&mut self, a: f64, c: f64) {
        for layer in self.hidden.clone() {
            let n = self.arch.width;
            self.params[layer.a..layer.a + n].fill(a);
            self.params[layer.c..layer.c + n].fill(c);
        }
    }

    /// Offset of the scalar output bias.
    pub fn output_bias_index(&self) -> usize {
        self.out.b
    }

    fn layer_frequency(&self, l: usize) -> f64 {
        if l == 0 {
            self.arch.omega0
        } else {
            1.0
        }
    }

    /// Record the batched jet computation for `points` (row-major, `dim` per point).
    pub fn tape(&self, points: &[f64], order: Order) -> Result<(Tape<'_>, NodeId)> {
        let p = &self.params[..];
        let mut t = Tape::new(p.len());
        let mut h = t.input(JetBatch::seed(points, self.arch.dim, order));
        for (l, layer) in self.hidden.iter().enumerate() {
            let u = t.affine(
                h,
                layer.lin.weights(p),
                layer.lin.bias(p),
                layer.lin.w,
                layer.lin.b,
            )?;
            let n = self.arch.width;
            let z = t.map(
                u,
                UnitMap::Quadratic {
                    a: ArrayView1::from(&p[layer.a..layer.a + n]),
                    c: ArrayView1::from(&p[layer.c..layer.c + n]),
                    a_off: layer.a,
                    c_off: layer.c,
                },
            );
            h = t.activation(
                z,
                Activation::Sine {
                    omega: self.layer_frequency(l),
                },
            );
        }
        let out = t.affine(h, self.out.weights(p), self.out.bias(p), self.out.w, self.out.b)?;
        Ok((t, out))
    }

    /// `(φ, ∇φ, D²φ)` at one point.
    pub fn forward(&self, x: &[f64]) -> Result<Jet2> {
        let (t, out) = self.tape(x, Order::Second)?;
        Ok(t.value(out).jet(0, 0))
    }

    /// Jets at many points.
    pub fn forward_batch(&self, points: &[f64], order: Order) -> Result<Vec<Jet2>> {
        let (t, out) = self.tape(points, order)?;
        let y = t.value(out);
        Ok((0..y.batch()).map(|s| y.jet(0, s)).collect())
    }

    /// Values at many points, evaluated in chunks.
    pub fn values(&self, points: &[f64]) -> Vec<f64> {
        let chunk = 4096 * self.arch.dim;
        points
            .chunks(chunk)
            .flat_map(|c| {
                let (t, out) = self.tape(c, Order::Value).expect("consistent layout");
                t.value(out).values(0).to_vec()
            })
            .collect()
    }

    /// Scalar forward pass without jets.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let p = &self.params;
        let mut h = x.to_vec();
        for (l, layer) in self.hidden.iter().enumerate() {
            let omega = self.layer_frequency(l);
            h = layer
                .lin
                .apply(p, &h)
                .into_iter()
                .enumerate()
                .map(|(k, u)| (omega * (p[layer.a + k] * u + p[layer.c + k] * u * u)).sin())
                .collect();
        }
        self.out.apply(p, &h)[0]
    }
}
