use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{siren_limit, Linear};
use crate::diffjet::{logistic, Activation, JetBatch, NodeId, Order, Tape};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PfArch {
    pub dim: usize,
    pub width: usize,
    pub blocks: usize,
    /// Frequency of the input embedding.
    pub omega0: f64,
    /// Slope of the output sigmoid.
    pub delta: f64,
    /// Initial value of the output head bias.
    pub head_bias: f64,
}

impl PfArch {
    /// 4 blocks of 64 units in 2D, 6 blocks of 128 units in 3D.
    pub fn reference(dim: usize) -> Self {
        let (blocks, width) = if dim == 2 { (4, 64) } else { (6, 128) };
        PfArch {
            dim,
            width,
            blocks,
            omega0: 30.0,
            delta: 0.1,
            head_bias: 30.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim)
            || self.width == 0
            || !(self.omega0 > 0.0)
            || !(self.delta > 0.0)
            || !self.head_bias.is_finite()
        {
            return Err(Error::InvalidArgument(format!(
                "bad phase-field architecture {self:?}"
            )));
        }
        Ok(())
    }
}

/// SIREN ResNet: `h₀ = sin(ω₀(W x + b))`, blocks
/// `h ← h + sin(W₂ sin(W₁ h + b₁) + b₂)`, head `v = σ_δ(wᵀh + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseFieldNetwork {
    arch: PfArch,
    params: Vec<f64>,
    embed: Linear,
    blocks: Vec<(Linear, Linear)>,
    head: Linear,
}

impl PhaseFieldNetwork {
    pub fn zeros(arch: PfArch) -> Result<Self> {
        arch.validate()?;
        let mut next = 0;
        let embed = Linear::alloc(&mut next, arch.width, arch.dim);
        let blocks = (0..arch.blocks)
            .map(|_| {
                (
                    Linear::alloc(&mut next, arch.width, arch.width),
                    Linear::alloc(&mut next, arch.width, arch.width),
                )
            })
            .collect();
        let head = Linear::alloc(&mut next, 1, arch.width);
        Ok(PhaseFieldNetwork {
            arch,
            params: vec![0.0; next],
            embed,
            blocks,
            head,
        })
    }

    pub fn init(arch: PfArch, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bias = |n: usize| 1.0 / (n as f64).sqrt();
        net.embed.fill_uniform(
            &mut net.params,
            &mut rng,
            siren_limit(arch.dim, true, arch.omega0),
            bias(arch.dim),
        );
        for (l1, l2) in net.blocks.clone() {
            for l in [l1, l2] {
                l.fill_uniform(
                    &mut net.params,
                    &mut rng,
                    siren_limit(arch.width, false, 1.0),
                    bias(arch.width),
                );
            }
        }
        let head = net.head;
        head.fill_uniform(
            &mut net.params,
            &mut rng,
            siren_limit(arch.width, false, 1.0),
            0.0,
        );
        net.params[head.b] = arch.head_bias;
        Ok(net)
    }

    pub fn arch(&self) -> &PfArch {
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

    /// Zero the output head so that `v ≡ σ(0) = 1/2`.
    pub fn zero_head(&mut self) {
        let h = self.head;
        self.params[h.w..h.b + h.rows].fill(0.0);
    }

    /// Zero every residual branch weight and bias.
    pub fn zero_blocks(&mut self) {
        for (l1, l2) in self.blocks.clone() {
            for l in [l1, l2] {
                self.params[l.w..l.b + l.rows].fill(0.0);
            }
        }
    }

    pub fn tape(&self, points: &[f64], order: Order) -> Result<(Tape<'_>, NodeId)> {
        let p = &self.params[..];
        let mut t = Tape::new(p.len());
        let x = t.input(JetBatch::seed(points, self.arch.dim, order));
        let e = t.affine(x, self.embed.weights(p), self.embed.bias(p), self.embed.w, self.embed.b)?;
        let mut h = t.activation(
            e,
            Activation::Sine {
                omega: self.arch.omega0,
            },
        );
        for (l1, l2) in &self.blocks {
            let u1 = t.affine(h, l1.weights(p), l1.bias(p), l1.w, l1.b)?;
            let s1 = t.activation(u1, Activation::Sine { omega: 1.0 });
            let u2 = t.affine(s1, l2.weights(p), l2.bias(p), l2.w, l2.b)?;
            let s2 = t.activation(u2, Activation::Sine { omega: 1.0 });
            h = t.add(h, s2)?;
        }
        let r = t.affine(h, self.head.weights(p), self.head.bias(p), self.head.w, self.head.b)?;
        let v = t.activation(
            r,
            Activation::Sigmoid {
                delta: self.arch.delta,
            },
        );
        Ok((t, v))
    }

    /// `(v, ∇v)` at one point.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (t, out) = self.tape(x, Order::First)?;
        let j = t.value(out).jet(0, 0);
        Ok((j.value, j.grad().to_vec()))
    }

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
        let mut h: Vec<f64> = self
            .embed
            .apply(p, x)
            .iter()
            .map(|u| (self.arch.omega0 * u).sin())
            .collect();
        for (l1, l2) in &self.blocks {
            let s1: Vec<f64> = l1.apply(p, &h).iter().map(|u| u.sin()).collect();
            let s2 = l2.apply(p, &s1);
            for (hk, u) in h.iter_mut().zip(s2) {
                *hk += u.sin();
            }
        }
        logistic(self.arch.delta * self.head.apply(p, &h)[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small(dim: usize) -> PfArch {
        PfArch {
            dim,
            width: 8,
            blocks: 2,
            omega0: 3.0,
            delta: 0.1,
            head_bias: 0.0,
        }
    }

    #[test]
    fn zero_head_gives_one_half() {
        let mut net = PhaseFieldNetwork::init(small(2), 3).unwrap();
        net.zero_head();
        for x in [[0.0, 0.0], [1.1, -0.4], [-5.0, 3.0]] {
            assert_eq!(net.eval(&x), 0.5);
            assert_eq!(net.forward(&x).unwrap().0, 0.5);
        }
    }

    #[test]
    fn zero_blocks_reduce_to_embedding_head() {
        let mut net = PhaseFieldNetwork::init(small(2), 4).unwrap();
        net.zero_blocks();
        let x = [0.2, 0.9];
        let p = net.params();
        let h: Vec<f64> = net.embed.apply(p, &x).iter().map(|u| (3.0 * u).sin()).collect();
        let v = logistic(0.1 * net.head.apply(p, &h)[0]);
        assert_eq!(net.eval(&x), v);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let dim = 2 + trial % 2;
            let net = PhaseFieldNetwork::init(
                PfArch {
                    head_bias: 2.0,
                    ..small(dim)
                },
                trial as u64,
            )
            .unwrap();
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.2..1.2)).collect();
            let (v, g) = net.forward(&x).unwrap();
            assert!((v - net.eval(&x)).abs() < 1e-15);
            for i in 0..dim {
                let h = 1e-5;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (net.eval(&xp) - net.eval(&xm)) / (2.0 * h);
                assert!((fd - g[i]).abs() / fd.abs().max(1e-3) < 1e-5, "{fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn head_bias_sets_initial_level() {
        let arch = PfArch {
            head_bias: 30.0,
            ..small(2)
        };
        let mut net = PhaseFieldNetwork::init(arch, 0).unwrap();
        let head = net.head;
        net.params_mut()[head.w..head.b].fill(0.0);
        assert!((net.eval(&[0.0, 0.0]) - logistic(3.0)).abs() < 1e-15);
    }
}
