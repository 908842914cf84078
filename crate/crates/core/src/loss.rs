//! Loss terms evaluated by weighted Monte-Carlo quadrature.
//!
//! Every term is a weighted sum over samples. The `*_acc` variants also add
//! `scale · ∂term/∂jet` into an adjoint buffer so that the caller can seed
//! reverse accumulation through the networks.

use crate::diffjet::{sym_pairs, Jet2};
use crate::{Error, Result};

/// Sample points in Ω with their quadrature weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadratureBatch {
    pub dim: usize,
    /// Row-major, `dim` coordinates per point.
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureBatch {
    pub fn len(&self) -> usize {
        self.weights.len()
    }
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Weights `(γ_HO, γ_AT, γ_recon, γ_eik, γ_exp)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gammas {
    pub ho: f64,
    pub at: f64,
    pub recon: f64,
    pub eik: f64,
    pub exp: f64,
}

impl Gammas {
    pub fn new(v: [f64; 5]) -> Self {
        Gammas {
            ho: v[0],
            at: v[1],
            recon: v[2],
            eik: v[3],
            exp: v[4],
        }
    }
    pub fn to_array(self) -> [f64; 5] {
        [self.ho, self.at, self.recon, self.eik, self.exp]
    }
    pub fn lerp(self, other: Gammas, t: f64) -> Gammas {
        let (a, b) = (self.to_array(), other.to_array());
        Gammas::new(std::array::from_fn(|i| a[i] + t * (b[i] - a[i])))
    }
}

/// Phase-field width ε, exponent weights α and the γ schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct LossSchedule {
    pub eps: f64,
    pub alpha: [f64; 3],
    pub gamma_phase1: Gammas,
    pub gamma_final: Gammas,
    /// First epoch of joint training.
    pub phase2_start: usize,
    /// First epoch with a frozen phase field.
    pub phase3_start: usize,
    pub epochs: usize,
}

impl LossSchedule {
    pub fn reference(dim: usize) -> Self {
        let (eps, g1, gf) = if dim == 2 {
            (1e-3, [10.0, 0.2, 10.0, 0.1, 100.0], [10.0, 0.2, 10.0, 0.1, 1.0])
        } else {
            (1e-4, [1.0, 0.02, 0.01, 0.05, 500.0], [2.5, 0.2, 0.5, 0.2, 200.0])
        };
        LossSchedule {
            eps,
            alpha: [100.0, 100.0, 10.0],
            gamma_phase1: Gammas::new(g1),
            gamma_final: Gammas::new(gf),
            phase2_start: 5,
            phase3_start: 20,
            epochs: 30,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.eps) {
            return Err(Error::InvalidArgument(format!("ε must be positive, got {}", self.eps)));
        }
        if !self.alpha.iter().all(|&a| positive(a)) {
            return Err(Error::InvalidArgument("α must be positive".into()));
        }
        for g in [self.gamma_phase1, self.gamma_final] {
            if !g.to_array().iter().all(|&v| positive(v)) {
                return Err(Error::InvalidArgument(format!("γ must be positive: {g:?}")));
            }
        }
        if !(self.phase2_start <= self.phase3_start && self.phase3_start <= self.epochs) || self.epochs == 0 {
            return Err(Error::InvalidArgument(format!(
                "phase boundaries {} / {} / {} out of order",
                self.phase2_start, self.phase3_start, self.epochs
            )));
        }
        Ok(())
    }

    /// γ at a (possibly fractional) epoch: phase-1 values, then linear
    /// interpolation across phase 2, then the final values.
    pub fn gammas(&self, epoch: f64) -> Gammas {
        let (p2, p3) = (self.phase2_start as f64, self.phase3_start as f64);
        if epoch < p2 {
            self.gamma_phase1
        } else if epoch < p3 {
            self.gamma_phase1.lerp(self.gamma_final, (epoch - p2) / (p3 - p2))
        } else {
            self.gamma_final
        }
    }
}

fn check_len(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!("{what}: {a} samples vs {b} weights")));
    }
    Ok(())
}

/// `(1/ε) Σ wᵢ (‖∇φ‖² − 1)²`
pub fn eikonal_loss(jets: &[Jet2], weights: &[f64], eps: f64) -> f64 {
    eikonal_acc(jets, weights, eps, None)
}

pub fn eikonal_acc(jets: &[Jet2], weights: &[f64], eps: f64, adj: Option<(&mut [Jet2], f64)>) -> f64 {
    let mut total = 0.0;
    let mut adj = adj;
    for (s, (j, &w)) in jets.iter().zip(weights).enumerate() {
        let n2: f64 = j.grad().iter().map(|g| g * g).sum();
        let r = n2 - 1.0;
        total += w * r * r / eps;
        if let Some((a, scale)) = adj.as_mut() {
            let c = *scale * 4.0 * w * r / eps;
            for i in 0..j.dim {
                a[s].grad[i] += c * j.grad[i];
            }
        }
    }
    total
}

/// `Σ wᵢ [vᵢ² ‖D²φ ∇φ‖² + ε² ‖D²φ‖²_F]`; `pf = None` means `v ≡ 1`.
pub fn ho_loss(jets: &[Jet2], pf: Option<&[Jet2]>, weights: &[f64], eps: f64) -> f64 {
    ho_acc(jets, pf, weights, eps, 1.0, None, None)
}

/// `eps2_scale` multiplies the isotropic term (0 switches it off, as for the
/// point-cloud evaluation of the normal term).
pub fn ho_acc(
    jets: &[Jet2],
    pf: Option<&[Jet2]>,
    weights: &[f64],
    eps: f64,
    eps2_scale: f64,
    mut adj_phi: Option<(&mut [Jet2], f64)>,
    mut adj_v: Option<(&mut [Jet2], f64)>,
) -> f64 {
    let mut total = 0.0;
    let e2 = eps * eps * eps2_scale;
    for (s, (j, &w)) in jets.iter().zip(weights).enumerate() {
        let d = j.dim;
        let h = j.hess_matrix();
        let g = &j.grad;
        let mut r = [0.0; 3];
        for i in 0..d {
            r[i] = (0..d).map(|k| h[i][k] * g[k]).sum();
        }
        let r2: f64 = r[..d].iter().map(|x| x * x).sum();
        let fro: f64 = (0..d).flat_map(|i| (0..d).map(move |k| (i, k))).map(|(i, k)| h[i][k] * h[i][k]).sum();
        let v = pf.map_or(1.0, |p| p[s].value);
        total += w * (v * v * r2 + e2 * fro);
        if let Some((a, scale)) = adj_phi.as_mut() {
            let c = *scale * w;
            for k in 0..d {
                let hr: f64 = (0..d).map(|i| h[k][i] * r[i]).sum();
                a[s].grad[k] += c * 2.0 * v * v * hr;
            }
            for (p, &(i, k)) in sym_pairs(d).iter().enumerate() {
                let (dn, df) = if i == k {
                    (2.0 * r[i] * g[i], 2.0 * h[i][i])
                } else {
                    (2.0 * (r[i] * g[k] + r[k] * g[i]), 4.0 * h[i][k])
                };
                a[s].hess[p] += c * (v * v * dn + e2 * df);
            }
        }
        if let Some((a, scale)) = adj_v.as_mut() {
            a[s].value += *scale * w * 2.0 * v * r2;
        }
    }
    total
}

/// `Σ wᵢ [ε ‖∇v‖² + (v − 1)² / (4ε)]`
pub fn at_loss(pf: &[Jet2], weights: &[f64], eps: f64) -> f64 {
    at_acc(pf, weights, eps, None)
}

pub fn at_acc(pf: &[Jet2], weights: &[f64], eps: f64, mut adj: Option<(&mut [Jet2], f64)>) -> f64 {
    let mut total = 0.0;
    for (s, (j, &w)) in pf.iter().zip(weights).enumerate() {
        let g2: f64 = j.grad().iter().map(|g| g * g).sum();
        let dv = j.value - 1.0;
        total += w * (eps * g2 + dv * dv / (4.0 * eps));
        if let Some((a, scale)) = adj.as_mut() {
            let c = *scale * w;
            a[s].value += c * dv / (2.0 * eps);
            for i in 0..j.dim {
                a[s].grad[i] += c * 2.0 * eps * j.grad[i];
            }
        }
    }
    total
}

/// `(1/ε²) Σ w_s φ(p_s)²`
pub fn recon_loss(phi: &[f64], weights: &[f64], eps: f64) -> Result<f64> {
    if phi.is_empty() {
        return Err(Error::InvalidArgument("empty point cloud".into()));
    }
    check_len("reconstruction", phi.len(), weights.len())?;
    Ok(recon_acc(phi, weights, eps, None))
}

pub fn recon_acc(phi: &[f64], weights: &[f64], eps: f64, mut adj: Option<(&mut [Jet2], f64)>) -> f64 {
    let inv = 1.0 / (eps * eps);
    let mut total = 0.0;
    for (s, (&p, &w)) in phi.iter().zip(weights).enumerate() {
        total += w * p * p * inv;
        if let Some((a, scale)) = adj.as_mut() {
            a[s].value += *scale * 2.0 * w * p * inv;
        }
    }
    total
}

/// `Σ_p Σᵢ wᵢ exp(−α_p |φᵢ|^p)`, `p = 1, 2, 3`.
pub fn exp_loss(phi: &[f64], weights: &[f64], alpha: [f64; 3]) -> f64 {
    exp_acc(phi, weights, alpha, None)
}

pub fn exp_acc(phi: &[f64], weights: &[f64], alpha: [f64; 3], mut adj: Option<(&mut [Jet2], f64)>) -> f64 {
    let mut total = 0.0;
    for (s, (&p, &w)) in phi.iter().zip(weights).enumerate() {
        let a = p.abs();
        let e1 = (-alpha[0] * a).exp();
        let e2 = (-alpha[1] * a * a).exp();
        let e3 = (-alpha[2] * a * a * a).exp();
        total += w * (e1 + e2 + e3);
        if let Some((adj, scale)) = adj.as_mut() {
            // d/dφ of exp(−α|φ|^p) = −α p |φ|^{p−1} sign(φ) exp(…)
            let sgn = if p > 0.0 {
                1.0
            } else if p < 0.0 {
                -1.0
            } else {
                0.0
            };
            let d = -(alpha[0] * e1 + 2.0 * alpha[1] * a * e2 + 3.0 * alpha[2] * a * a * e3) * sgn;
            adj[s].value += *scale * w * d;
        }
    }
    total
}

/// γ-weighted loss terms of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub ho: f64,
    pub at: f64,
    pub recon: f64,
    pub eik: f64,
    pub exp: f64,
    /// Normal-direction second-order term on the point cloud (phase 3 only).
    pub pc_ho: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.ho + self.at + self.recon + self.eik + self.exp + self.pc_ho
    }

    pub fn terms(&self) -> [(&'static str, f64); 6] {
        [
            ("ho", self.ho),
            ("at", self.at),
            ("recon", self.recon),
            ("eik", self.eik),
            ("exp", self.exp),
            ("pc_ho", self.pc_ho),
        ]
    }

    pub fn terms_mut(&mut self) -> [(&'static str, &mut f64); 6] {
        [
            ("ho", &mut self.ho),
            ("at", &mut self.at),
            ("recon", &mut self.recon),
            ("eik", &mut self.eik),
            ("exp", &mut self.exp),
            ("pc_ho", &mut self.pc_ho),
        ]
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.terms().iter().find(|(_, v)| !v.is_finite()) {
            Some((name, _)) => Err(Error::NonFiniteLoss(name)),
            None => Ok(()),
        }
    }
}

/// Network outputs for one training step.
pub struct LossInputs<'a> {
    /// Second-order SDF jets at the volume samples.
    pub vol_sdf: &'a [Jet2],
    /// First-order phase-field jets at the volume samples; `None` for `v ≡ 1`.
    pub vol_pf: Option<&'a [Jet2]>,
    pub vol_weights: &'a [f64],
    /// SDF jets at the surface samples (second order when `pc_ho` is set).
    pub surf_sdf: &'a [Jet2],
    /// Phase field at the surface samples, used by the point-cloud term.
    pub surf_pf: Option<&'a [Jet2]>,
    pub surf_weights: &'a [f64],
    pub pc_ho: bool,
}

/// Adjoints of the total loss with respect to each network output.
#[derive(Debug)]
pub struct LossAdjoints {
    pub vol_sdf: Vec<Jet2>,
    pub vol_pf: Option<Vec<Jet2>>,
    pub surf_sdf: Vec<Jet2>,
    pub surf_pf: Option<Vec<Jet2>>,
}

fn zero_like(j: &[Jet2]) -> Vec<Jet2> {
    j.iter().map(|x| Jet2::constant(x.dim, 0.0)).collect()
}

/// `γ_HO L_HO + γ_AT L_AT + γ_recon L_recon + γ_eik L_eik + γ_exp L_exp`
/// (plus the point-cloud normal term when enabled).
pub fn total_loss(
    inp: &LossInputs<'_>,
    gammas: Gammas,
    eps: f64,
    alpha: [f64; 3],
    with_grads: bool,
) -> Result<(LossBreakdown, Option<LossAdjoints>)> {
    check_len("volume", inp.vol_sdf.len(), inp.vol_weights.len())?;
    check_len("surface", inp.surf_sdf.len(), inp.surf_weights.len())?;
    if inp.surf_sdf.is_empty() {
        return Err(Error::InvalidArgument("empty point cloud".into()));
    }
    let mut adj = with_grads.then(|| LossAdjoints {
        vol_sdf: zero_like(inp.vol_sdf),
        vol_pf: inp.vol_pf.map(zero_like),
        surf_sdf: zero_like(inp.surf_sdf),
        surf_pf: inp.surf_pf.map(zero_like),
    });
    let phi: Vec<f64> = inp.vol_sdf.iter().map(|j| j.value).collect();
    let surf_phi: Vec<f64> = inp.surf_sdf.iter().map(|j| j.value).collect();
    let mut out = LossBreakdown::default();

    macro_rules! sdf_adj {
        ($field:ident, $g:expr) => {
            adj.as_mut().map(|a| (a.$field.as_mut_slice(), $g))
        };
    }

    out.eik = gammas.eik * eikonal_acc(inp.vol_sdf, inp.vol_weights, eps, sdf_adj!(vol_sdf, gammas.eik));
    out.exp = gammas.exp * exp_acc(&phi, inp.vol_weights, alpha, sdf_adj!(vol_sdf, gammas.exp));
    out.recon = gammas.recon * recon_acc(&surf_phi, inp.surf_weights, eps, sdf_adj!(surf_sdf, gammas.recon));
    {
        let (a_phi, a_v) = match adj.as_mut() {
            Some(a) => (
                Some((a.vol_sdf.as_mut_slice(), gammas.ho)),
                a.vol_pf.as_mut().map(|v| (v.as_mut_slice(), gammas.ho)),
            ),
            None => (None, None),
        };
        out.ho = gammas.ho * ho_acc(inp.vol_sdf, inp.vol_pf, inp.vol_weights, eps, 1.0, a_phi, a_v);
    }
    if let Some(pf) = inp.vol_pf {
        let a_v = adj
            .as_mut()
            .and_then(|a| a.vol_pf.as_mut().map(|v| (v.as_mut_slice(), gammas.at)));
        out.at = gammas.at * at_acc(pf, inp.vol_weights, eps, a_v);
    }
    if inp.pc_ho {
        let (a_phi, a_v) = match adj.as_mut() {
            Some(a) => (
                Some((a.surf_sdf.as_mut_slice(), gammas.ho)),
                a.surf_pf.as_mut().map(|v| (v.as_mut_slice(), gammas.ho)),
            ),
            None => (None, None),
        };
        out.pc_ho = gammas.ho * ho_acc(inp.surf_sdf, inp.surf_pf, inp.surf_weights, eps, 0.0, a_phi, a_v);
    }
    out.check_finite()?;
    Ok((out, adj))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_jet(dim: usize, grad: &[f64], x: &[f64]) -> Jet2 {
        let mut j = Jet2::constant(dim, grad.iter().zip(x).map(|(g, v)| g * v).sum());
        j.grad[..dim].copy_from_slice(grad);
        j
    }

    /// Jet of ‖x‖ − r at x.
    fn radial_jet(x: &[f64], r: f64) -> Jet2 {
        let d = x.len();
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut j = Jet2::constant(d, n - r);
        for i in 0..d {
            j.grad[i] = x[i] / n;
        }
        for (s, &(i, k)) in sym_pairs(d).iter().enumerate() {
            let delta = if i == k { 1.0 } else { 0.0 };
            j.hess[s] = (delta - x[i] * x[k] / (n * n)) / n;
        }
        j
    }

    #[test]
    fn eikonal_examples() {
        let e = [0.6, 0.8];
        let jets: Vec<Jet2> = (0..5).map(|i| linear_jet(2, &e, &[i as f64, 1.0])).collect();
        assert!(eikonal_loss(&jets, &[0.2; 5], 1e-3).abs() < 1e-9);
        let zero = vec![Jet2::constant(2, 0.0); 4];
        let l = eikonal_loss(&zero, &[1.44; 4], 1e-3);
        assert!((l - 5.76e3).abs() < 1e-9);
        let j = linear_jet(2, &[2.0, 0.0], &[0.3, 0.1]);
        assert!((eikonal_loss(&[j], &[1.0], 1e-3) - 9000.0).abs() < 1e-8);
    }

    #[test]
    fn ho_examples() {
        let eps = 1e-3;
        let pts = [[0.5, 0.2], [-0.7, 0.9], [0.3, -0.3]];
        let jets: Vec<Jet2> = pts.iter().map(|p| radial_jet(p, 1.0)).collect();
        let w = [0.3, 0.2, 0.5];
        let v: Vec<Jet2> = (0..3).map(|i| Jet2::constant(2, 0.1 + 0.3 * i as f64)).collect();
        let iso: f64 = jets
            .iter()
            .zip(&w)
            .map(|(j, w)| {
                let h = j.hess_matrix();
                w * eps * eps * (h[0][0].powi(2) + 2.0 * h[0][1].powi(2) + h[1][1].powi(2))
            })
            .sum();
        assert!((ho_loss(&jets, Some(&v), &w, eps) - iso).abs() < 1e-20);
        let zero_v = vec![Jet2::constant(2, 0.0); 3];
        assert!((ho_loss(&jets, Some(&zero_v), &w, eps) - iso).abs() < 1e-20);
        // ½‖x‖² at (1, 0): D²φ = I, ∇φ = x
        let mut j = Jet2::constant(2, 0.5);
        j.grad[0] = 1.0;
        j.hess[0] = 1.0;
        j.hess[2] = 1.0;
        assert_eq!(ho_loss(&[j], None, &[1.0], 0.0), 1.0);
    }

    #[test]
    fn at_examples() {
        let eps = 1e-2;
        let ones = vec![Jet2::constant(2, 1.0); 3];
        assert_eq!(at_loss(&ones, &[1.0; 3], eps), 0.0);
        let zeros = vec![Jet2::constant(2, 0.0); 4];
        let l = at_loss(&zeros, &[1.44; 4], eps);
        assert!((l - 5.76 / (4.0 * eps)).abs() < 1e-9);
    }

    #[test]
    fn recon_examples() {
        assert_eq!(recon_loss(&[0.0; 3], &[1.0; 3], 1e-3).unwrap(), 0.0);
        let l = recon_loss(&[0.2; 4], &[0.5; 4], 1e-1).unwrap();
        assert!((l - 0.04 * 2.0 / 0.01).abs() < 1e-12);
        assert!(recon_loss(&[], &[], 1e-3).is_err());
        // circle of radius 0.4 under its own SDF
        let phi: Vec<f64> = (0..100)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 100.0;
                let (x, y) = (0.4 * t.cos(), 0.4 * t.sin());
                (x * x + y * y).sqrt() - 0.4
            })
            .collect();
        assert!(recon_loss(&phi, &[0.025; 100], 1e-3).unwrap() < 1e-20);
    }

    #[test]
    fn exp_examples() {
        let a = [100.0, 100.0, 10.0];
        assert!((exp_loss(&[0.0; 4], &[1.44; 4], a) - 3.0 * 5.76).abs() < 1e-12);
        assert!(exp_loss(&[1e3, -1e3], &[1.0, 1.0], a) < 1e-300);
        let l = exp_loss(&[1.0], &[1.0], a);
        let expect = 2.0 * (-100.0f64).exp() + (-10.0f64).exp();
        assert!((l - expect).abs() < 1e-18);
        assert!((l - 4.54e-5).abs() < 1e-7);
    }

    #[test]
    fn schedule_interpolation() {
        let s = LossSchedule::reference(2);
        s.validate().unwrap();
        assert_eq!(s.gammas(0.0).to_array(), [10.0, 0.2, 10.0, 0.1, 100.0]);
        assert_eq!(s.gammas(29.0).to_array(), [10.0, 0.2, 10.0, 0.1, 1.0]);
        assert!((s.gammas(12.5).exp - 50.5).abs() < 1e-12);
        let s3 = LossSchedule::reference(3);
        let mut prev = s3.gammas(5.0).to_array();
        for e in 6..=20 {
            let g = s3.gammas(e as f64).to_array();
            for k in 0..5 {
                let up = s3.gamma_final.to_array()[k] >= s3.gamma_phase1.to_array()[k];
                assert!(if up { g[k] >= prev[k] } else { g[k] <= prev[k] });
            }
            prev = g;
        }
    }

    #[test]
    fn schedule_validation() {
        let mut s = LossSchedule::reference(2);
        s.eps = 0.0;
        assert!(s.validate().is_err());
        let mut s = LossSchedule::reference(2);
        s.gamma_final.at = 0.0;
        assert!(s.validate().is_err());
        let mut s = LossSchedule::reference(3);
        s.phase3_start = 40;
        assert!(s.validate().is_err());
    }

    fn inputs_fixture() -> (Vec<Jet2>, Vec<Jet2>, Vec<f64>, Vec<Jet2>, Vec<f64>) {
        let pts = [[0.5, 0.2], [-0.7, 0.9], [0.3, -0.3]];
        let vol: Vec<Jet2> = pts.iter().map(|p| radial_jet(p, 0.6)).collect();
        let pf: Vec<Jet2> = (0..3)
            .map(|i| {
                let mut j = Jet2::constant(2, 0.3 + 0.2 * i as f64);
                j.grad[0] = 0.1 * i as f64;
                j.grad[1] = -0.2;
                j
            })
            .collect();
        let surf: Vec<Jet2> = [[0.6, 0.01], [0.0, -0.59]].iter().map(|p| radial_jet(p, 0.6)).collect();
        (vol, pf, vec![0.4, 0.3, 0.5], surf, vec![1.2, 2.0])
    }

    #[test]
    fn total_loss_linearity() {
        let (vol, pf, w, surf, sw) = inputs_fixture();
        let inp = LossInputs {
            vol_sdf: &vol,
            vol_pf: Some(&pf),
            vol_weights: &w,
            surf_sdf: &surf,
            surf_pf: None,
            surf_weights: &sw,
            pc_ho: false,
        };
        let (zero, _) = total_loss(&inp, Gammas::new([0.0; 5]), 1e-2, [100.0, 100.0, 10.0], false).unwrap();
        assert_eq!(zero.total(), 0.0);
        let (only, _) = total_loss(&inp, Gammas::new([0.0, 0.0, 0.0, 3.0, 0.0]), 1e-2, [1.0; 3], false).unwrap();
        assert!((only.total() - 3.0 * eikonal_loss(&vol, &w, 1e-2)).abs() < 1e-12);
        let unit = LossBreakdown {
            ho: 10.0,
            at: 0.2,
            recon: 10.0,
            eik: 0.1,
            exp: 100.0,
            pc_ho: 0.0,
        };
        assert!((unit.total() - 120.3).abs() < 1e-12);
    }

    #[test]
    fn non_finite_term_is_named() {
        let (mut vol, pf, w, surf, sw) = inputs_fixture();
        vol[1].grad[0] = f64::INFINITY;
        let inp = LossInputs {
            vol_sdf: &vol,
            vol_pf: Some(&pf),
            vol_weights: &w,
            surf_sdf: &surf,
            surf_pf: None,
            surf_weights: &sw,
            pc_ho: false,
        };
        match total_loss(&inp, Gammas::new([1.0; 5]), 1e-2, [1.0; 3], false) {
            Err(Error::NonFiniteLoss(name)) => assert_eq!(name, "ho"),
            other => panic!("{other:?}"),
        }
    }

    /// Adjoints of every term against central differences in the jet entries.
    #[test]
    fn adjoints_match_finite_differences() {
        let (vol, pf, w, surf, sw) = inputs_fixture();
        let g = Gammas::new([1.3, 0.7, 0.9, 1.1, 2.0]);
        let (eps, alpha) = (0.05, [3.0, 2.0, 1.5]);
        let eval = |vol: &[Jet2], pf: &[Jet2], surf: &[Jet2]| {
            let inp = LossInputs {
                vol_sdf: vol,
                vol_pf: Some(pf),
                vol_weights: &w,
                surf_sdf: surf,
                surf_pf: Some(pf[..2].as_ref()),
                surf_weights: &sw,
                pc_ho: true,
            };
            total_loss(&inp, g, eps, alpha, true).unwrap()
        };
        let (_, adj) = eval(&vol, &pf, &surf);
        let adj = adj.unwrap();
        let h = 1e-6;
        let fd = |f: &dyn Fn(f64) -> f64| (f(h) - f(-h)) / (2.0 * h);
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * b.abs().max(1.0);
        for s in 0..3 {
            let (volr, pfr, surfr, evalr) = (&vol, &pf, &surf, &eval);
            let perturb = |field: usize, idx: usize| {
                move |t: f64| {
                    let mut v = volr.clone();
                    match field {
                        0 => v[s].value += t,
                        1 => v[s].grad[idx] += t,
                        _ => v[s].hess[idx] += t,
                    }
                    evalr(&v, pfr, surfr).0.total()
                }
            };
            assert!(close(adj.vol_sdf[s].value, fd(&perturb(0, 0))));
            for i in 0..2 {
                assert!(close(adj.vol_sdf[s].grad[i], fd(&perturb(1, i))));
            }
            for p in 0..3 {
                assert!(close(adj.vol_sdf[s].hess[p], fd(&perturb(2, p))));
            }
            let pv = |t: f64| {
                let mut p = pf.clone();
                p[s].value += t;
                eval(&vol, &p, &surf).0.total()
            };
            let vp = adj.vol_pf.as_ref().unwrap()[s].value + if s < 2 { adj.surf_pf.as_ref().unwrap()[s].value } else { 0.0 };
            assert!(close(vp, fd(&pv)));
        }
        for s in 0..2 {
            let sv = |t: f64| {
                let mut v = surf.clone();
                v[s].value += t;
                eval(&vol, &pf, &v).0.total()
            };
            assert!(close(adj.surf_sdf[s].value, fd(&sv)));
            for p in 0..3 {
                let sh = |t: f64| {
                    let mut v = surf.clone();
                    v[s].hess[p] += t;
                    eval(&vol, &pf, &v).0.total()
                };
                assert!(close(adj.surf_sdf[s].hess[p], fd(&sh)));
            }
        }
    }

    #[test]
    fn terms_are_even_in_phi() {
        let (vol, pf, w, surf, sw) = inputs_fixture();
        let neg = |j: &[Jet2]| -> Vec<Jet2> {
            j.iter()
                .map(|x| {
                    let mut y = *x;
                    y.value = -y.value;
                    y.grad.iter_mut().for_each(|g| *g = -*g);
                    y.hess.iter_mut().for_each(|h| *h = -*h);
                    y
                })
                .collect()
        };
        let (nv, ns) = (neg(&vol), neg(&surf));
        let run = |v: &[Jet2], s: &[Jet2]| {
            let inp = LossInputs {
                vol_sdf: v,
                vol_pf: Some(&pf),
                vol_weights: &w,
                surf_sdf: s,
                surf_pf: Some(&pf[..2]),
                surf_weights: &sw,
                pc_ho: true,
            };
            total_loss(&inp, Gammas::new([1.0; 5]), 1e-2, [100.0, 100.0, 10.0], false).unwrap().0
        };
        assert_eq!(run(&vol, &surf), run(&nv, &ns));
    }
}
