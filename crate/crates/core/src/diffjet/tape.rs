use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};

use super::{sym_pairs, Activation, JetBatch, Order};
use crate::{Error, Result};

pub type NodeId = usize;

/// Elementwise map applied unit by unit.
#[derive(Clone, Debug)]
pub enum UnitMap<'p> {
    Act(Activation),
    /// `z = a_k u + c_k u²` with learned per-unit coefficients.
    Quadratic {
        a: ArrayView1<'p, f64>,
        c: ArrayView1<'p, f64>,
        a_off: usize,
        c_off: usize,
    },
}

impl UnitMap<'_> {
    #[inline]
    fn derivatives(&self, unit: usize, u: f64) -> [f64; 4] {
        match self {
            UnitMap::Act(act) => act.derivatives(u),
            UnitMap::Quadratic { a, c, .. } => {
                let (a, c) = (a[unit], c[unit]);
                [a * u + c * u * u, a + 2.0 * c * u, 2.0 * c, 0.0]
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Op<'p> {
    Input,
    Affine {
        input: NodeId,
        w: ArrayView2<'p, f64>,
        b: ArrayView1<'p, f64>,
        w_off: usize,
        b_off: usize,
    },
    Map {
        input: NodeId,
        map: UnitMap<'p>,
    },
    Add(NodeId, NodeId),
    Product(NodeId, NodeId),
}

impl Op<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Affine { .. } => "affine",
            Op::Map {
                map: UnitMap::Quadratic { .. },
                ..
            } => "quadratic",
            Op::Map {
                map: UnitMap::Act(Activation::Sine { .. }),
                ..
            } => "sine",
            Op::Map {
                map: UnitMap::Act(Activation::Sigmoid { .. }),
                ..
            } => "sigmoid",
            Op::Map {
                map: UnitMap::Act(Activation::Square),
                ..
            } => "square",
            Op::Add(..) => "add",
            Op::Product(..) => "product",
        }
    }
}

/// Record of a batched jet computation, replayable forward and
/// differentiable in reverse with respect to the parameters it references.
///
/// Parameters are addressed by offsets into one flat vector of length
/// `n_params`; [`Tape::backward`] returns the gradient in that layout.
pub struct Tape<'p> {
    ops: Vec<Op<'p>>,
    values: Vec<JetBatch>,
    n_params: usize,
}

impl<'p> Tape<'p> {
    pub fn new(n_params: usize) -> Self {
        Tape {
            ops: Vec::new(),
            values: Vec::new(),
            n_params,
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn op(&self, node: NodeId) -> &Op<'p> {
        &self.ops[node]
    }

    pub fn value(&self, node: NodeId) -> &JetBatch {
        &self.values[node]
    }

    pub fn input(&mut self, seed: JetBatch) -> NodeId {
        self.push(Op::Input, seed)
    }

    pub fn affine(
        &mut self,
        input: NodeId,
        w: ArrayView2<'p, f64>,
        b: ArrayView1<'p, f64>,
        w_off: usize,
        b_off: usize,
    ) -> Result<NodeId> {
        let out = affine_forward(&self.values[input], &w, &b)?;
        Ok(self.push(
            Op::Affine {
                input,
                w,
                b,
                w_off,
                b_off,
            },
            out,
        ))
    }

    pub fn map(&mut self, input: NodeId, map: UnitMap<'p>) -> NodeId {
        let out = map_forward(&self.values[input], &map);
        self.push(Op::Map { input, map }, out)
    }

    pub fn activation(&mut self, input: NodeId, act: Activation) -> NodeId {
        self.map(input, UnitMap::Act(act))
    }

    pub fn add(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let out = add_forward(&self.values[lhs], &self.values[rhs])?;
        Ok(self.push(Op::Add(lhs, rhs), out))
    }

    pub fn product(&mut self, lhs: NodeId, rhs: NodeId) -> Result<NodeId> {
        let out = product_forward(&self.values[lhs], &self.values[rhs])?;
        Ok(self.push(Op::Product(lhs, rhs), out))
    }

    fn push(&mut self, op: Op<'p>, value: JetBatch) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        self.ops.len() - 1
    }

    /// First node whose recorded value holds a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<(NodeId, &'static str)> {
        self.values
            .iter()
            .position(|v| v.first_non_finite().is_some())
            .map(|n| (n, self.ops[n].name()))
    }

    /// Recompute every node from the recorded operations, starting from
    /// `inputs` (one batch per `Input` node, in recording order).
    pub fn replay(&self, inputs: &[JetBatch]) -> Result<Vec<JetBatch>> {
        let mut values: Vec<JetBatch> = Vec::with_capacity(self.ops.len());
        let mut next_input = inputs.iter();
        for op in &self.ops {
            let v = match op {
                Op::Input => next_input
                    .next()
                    .ok_or_else(|| Error::InvalidArgument("too few replay inputs".into()))?
                    .clone(),
                Op::Affine { input, w, b, .. } => affine_forward(&values[*input], w, b)?,
                Op::Map { input, map } => map_forward(&values[*input], map),
                Op::Add(l, r) => add_forward(&values[*l], &values[*r])?,
                Op::Product(l, r) => product_forward(&values[*l], &values[*r])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Reverse accumulation from `output`, seeded with the adjoint `seed`
    /// (same shape as the output batch). Returns the parameter gradient.
    pub fn backward(&self, output: NodeId, seed: &JetBatch) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.n_params];
        self.backward_into(output, seed, &mut grads)?;
        Ok(grads)
    }

    /// As [`Tape::backward`], accumulating into `grads`.
    pub fn backward_into(&self, output: NodeId, seed: &JetBatch, grads: &mut [f64]) -> Result<()> {
        if !seed.same_shape(&self.values[output]) {
            return Err(Error::Dimension(format!(
                "seed shape {:?} does not match node {output} shape {:?}",
                seed.data.dim(),
                self.values[output].data.dim()
            )));
        }
        if grads.len() != self.n_params {
            return Err(Error::Dimension("gradient buffer length".into()));
        }
        let mut adjoints: Vec<Option<Array2<f64>>> = vec![None; output + 1];
        adjoints[output] = Some(seed.data.clone());

        for node in (0..=output).rev() {
            let Some(adj) = adjoints[node].take() else {
                continue;
            };
            if adj.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    node,
                    op: self.ops[node].name(),
                });
            }
            match &self.ops[node] {
                Op::Input => {}
                Op::Affine {
                    input,
                    w,
                    b,
                    w_off,
                    b_off,
                } => {
                    let x = &self.values[*input];
                    let (rows, cols) = w.dim();
                    let mut gw = ArrayViewMut2::from_shape(
                        (rows, cols),
                        &mut grads[*w_off..*w_off + rows * cols],
                    )
                    .expect("weight slot");
                    general_mat_mul(1.0, &adj, &x.data.t(), 1.0, &mut gw);
                    let nb = x.batch;
                    for (k, row) in adj.outer_iter().enumerate() {
                        grads[*b_off + k] += row.iter().take(nb).sum::<f64>();
                    }
                    debug_assert_eq!(b.len(), rows);
                    if !matches!(self.ops[*input], Op::Input) {
                        let target = adjoint_slot(&mut adjoints, *input, x);
                        general_mat_mul(1.0, &w.t(), &adj, 1.0, target);
                    }
                }
                Op::Map { input, map } => {
                    let x = &self.values[*input];
                    let mut param_acc = None;
                    let target = adjoint_slot(&mut adjoints, *input, x);
                    map_backward(x, map, &adj, target, &mut param_acc);
                    if let (Some((ga, gc)), UnitMap::Quadratic { a_off, c_off, .. }) =
                        (param_acc, map)
                    {
                        for (k, (va, vc)) in ga.iter().zip(gc.iter()).enumerate() {
                            grads[a_off + k] += va;
                            grads[c_off + k] += vc;
                        }
                    }
                }
                Op::Add(l, r) => {
                    for side in [*l, *r] {
                        let x = &self.values[side];
                        *adjoint_slot(&mut adjoints, side, x) += &adj;
                    }
                }
                Op::Product(l, r) => {
                    let (a, b) = (&self.values[*l], &self.values[*r]);
                    let (ga, gb) = product_backward(a, b, &adj);
                    *adjoint_slot(&mut adjoints, *l, a) += &ga;
                    *adjoint_slot(&mut adjoints, *r, b) += &gb;
                }
            }
        }
        Ok(())
    }
}

fn adjoint_slot<'a>(
    adjoints: &'a mut [Option<Array2<f64>>],
    node: NodeId,
    like: &JetBatch,
) -> &'a mut Array2<f64> {
    adjoints[node].get_or_insert_with(|| Array2::zeros(like.data.dim()))
}

fn affine_forward(x: &JetBatch, w: &ArrayView2<'_, f64>, b: &ArrayView1<'_, f64>) -> Result<JetBatch> {
    if w.ncols() != x.units() || w.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "affine map {}x{} (bias {}) applied to {} units",
            w.nrows(),
            w.ncols(),
            b.len(),
            x.units()
        )));
    }
    let mut data = w.dot(&x.data);
    let nb = x.batch;
    for (mut row, &bias) in data.outer_iter_mut().zip(b.iter()) {
        row.iter_mut().take(nb).for_each(|v| *v += bias);
    }
    Ok(JetBatch::from_raw(x.dim, x.order, nb, data))
}

fn map_forward(x: &JetBatch, map: &UnitMap<'_>) -> JetBatch {
    let (d, order, nb) = (x.dim, x.order, x.batch);
    let pairs = sym_pairs(d);
    let mut out = JetBatch::zeros(d, order, x.units(), nb);
    for (k, (xin, mut xout)) in x
        .data
        .outer_iter()
        .zip(out.data.outer_iter_mut())
        .enumerate()
    {
        let xin = xin.to_slice().expect("standard layout");
        let xout = xout.as_slice_mut().expect("standard layout");
        for b in 0..nb {
            let f = map.derivatives(k, xin[b]);
            xout[b] = f[0];
            if order >= Order::First {
                for i in 0..d {
                    let c = (1 + i) * nb + b;
                    xout[c] = f[1] * xin[c];
                }
            }
            if order == Order::Second {
                for (s, &(i, j)) in pairs.iter().enumerate() {
                    let c = (1 + d + s) * nb + b;
                    let gi = xin[(1 + i) * nb + b];
                    let gj = xin[(1 + j) * nb + b];
                    xout[c] = f[1] * xin[c] + f[2] * gi * gj;
                }
            }
        }
    }
    out
}

/// Reverse rule for `y = f(u)` applied to jets. With `A` the adjoint of `y`:
///
/// ```text
/// ū   = f' A_v + f'' (Σ A_g·g + Σ A_h·h) + f''' Σ A_h g_i g_j
/// ḡ_k = f' A_g_k + f'' Σ_s A_h_s ∂(g_i g_j)/∂g_k
/// h̄   = f' A_h
/// ```
fn map_backward(
    x: &JetBatch,
    map: &UnitMap<'_>,
    adj: &Array2<f64>,
    target: &mut Array2<f64>,
    param_acc: &mut Option<(Vec<f64>, Vec<f64>)>,
) {
    let (d, order, nb) = (x.dim, x.order, x.batch);
    let pairs = sym_pairs(d);
    let quadratic = matches!(map, UnitMap::Quadratic { .. });
    let mut ga = vec![0.0; if quadratic { x.units() } else { 0 }];
    let mut gc = ga.clone();
    for (k, ((xin, arow), mut trow)) in x
        .data
        .outer_iter()
        .zip(adj.outer_iter())
        .zip(target.outer_iter_mut())
        .enumerate()
    {
        let xin = xin.to_slice().expect("standard layout");
        let arow = arow.to_slice().expect("standard layout");
        let trow = trow.as_slice_mut().expect("standard layout");
        let (mut sa, mut sc) = (0.0, 0.0);
        for b in 0..nb {
            let u = xin[b];
            let f = map.derivatives(k, u);
            let av = arow[b];
            let mut s_ag = 0.0;
            let mut s_ah = 0.0;
            let mut s_agg = 0.0;
            if order >= Order::First {
                for i in 0..d {
                    let c = (1 + i) * nb + b;
                    s_ag += arow[c] * xin[c];
                    trow[c] += f[1] * arow[c];
                }
            }
            if order == Order::Second {
                for (s, &(i, j)) in pairs.iter().enumerate() {
                    let c = (1 + d + s) * nb + b;
                    let ci = (1 + i) * nb + b;
                    let cj = (1 + j) * nb + b;
                    let ah = arow[c];
                    let (gi, gj) = (xin[ci], xin[cj]);
                    s_ah += ah * xin[c];
                    s_agg += ah * gi * gj;
                    trow[ci] += f[2] * ah * gj;
                    trow[cj] += f[2] * ah * gi;
                    trow[c] += f[1] * ah;
                }
            }
            trow[b] += f[1] * av + f[2] * (s_ag + s_ah) + f[3] * s_agg;
            if quadratic {
                // ∂(f, f', f'')/∂a = (u, 1, 0), ∂/∂c = (u², 2u, 2)
                sa += av * u + s_ag + s_ah;
                sc += av * u * u + 2.0 * u * (s_ag + s_ah) + 2.0 * s_agg;
            }
        }
        if quadratic {
            ga[k] = sa;
            gc[k] = sc;
        }
    }
    if quadratic {
        *param_acc = Some((ga, gc));
    }
}

fn add_forward(a: &JetBatch, b: &JetBatch) -> Result<JetBatch> {
    if !a.same_shape(b) {
        return Err(Error::Dimension("residual add of mismatched batches".into()));
    }
    Ok(JetBatch::from_raw(a.dim, a.order, a.batch, &a.data + &b.data))
}

fn product_forward(a: &JetBatch, b: &JetBatch) -> Result<JetBatch> {
    if !a.same_shape(b) {
        return Err(Error::Dimension("product of mismatched batches".into()));
    }
    let (d, order, nb) = (a.dim, a.order, a.batch);
    let pairs = sym_pairs(d);
    let mut out = JetBatch::zeros(d, order, a.units(), nb);
    for ((ra, rb), mut ro) in a
        .data
        .outer_iter()
        .zip(b.data.outer_iter())
        .zip(out.data.outer_iter_mut())
    {
        let (ra, rb) = (ra.to_slice().unwrap(), rb.to_slice().unwrap());
        let ro = ro.as_slice_mut().unwrap();
        for s in 0..nb {
            let (av, bv) = (ra[s], rb[s]);
            ro[s] = av * bv;
            if order >= Order::First {
                for i in 0..d {
                    let c = (1 + i) * nb + s;
                    ro[c] = av * rb[c] + bv * ra[c];
                }
            }
            if order == Order::Second {
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    let c = (1 + d + p) * nb + s;
                    let (ci, cj) = ((1 + i) * nb + s, (1 + j) * nb + s);
                    ro[c] = av * rb[c] + bv * ra[c] + ra[ci] * rb[cj] + ra[cj] * rb[ci];
                }
            }
        }
    }
    Ok(out)
}

fn product_backward(a: &JetBatch, b: &JetBatch, adj: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (d, order, nb) = (a.dim, a.order, a.batch);
    let pairs = sym_pairs(d);
    let mut ga = Array2::zeros(a.data.dim());
    let mut gb = Array2::zeros(b.data.dim());
    for k in 0..a.units() {
        let ra = a.data.index_axis(Axis(0), k);
        let rb = b.data.index_axis(Axis(0), k);
        let ry = adj.index_axis(Axis(0), k);
        let (ra, rb, ry) = (
            ra.to_slice().unwrap(),
            rb.to_slice().unwrap(),
            ry.to_slice().unwrap(),
        );
        let mut row_a = ga.index_axis_mut(Axis(0), k);
        let oa = row_a.as_slice_mut().unwrap();
        let mut row_b = gb.index_axis_mut(Axis(0), k);
        let ob = row_b.as_slice_mut().unwrap();
        for s in 0..nb {
            let (av, bv) = (ra[s], rb[s]);
            oa[s] += ry[s] * bv;
            ob[s] += ry[s] * av;
            if order >= Order::First {
                for i in 0..d {
                    let c = (1 + i) * nb + s;
                    oa[s] += ry[c] * rb[c];
                    ob[s] += ry[c] * ra[c];
                    oa[c] += ry[c] * bv;
                    ob[c] += ry[c] * av;
                }
            }
            if order == Order::Second {
                for (p, &(i, j)) in pairs.iter().enumerate() {
                    let c = (1 + d + p) * nb + s;
                    let (ci, cj) = ((1 + i) * nb + s, (1 + j) * nb + s);
                    let y = ry[c];
                    oa[s] += y * rb[c];
                    ob[s] += y * ra[c];
                    oa[c] += y * bv;
                    ob[c] += y * av;
                    oa[ci] += y * rb[cj];
                    oa[cj] += y * rb[ci];
                    ob[cj] += y * ra[ci];
                    ob[ci] += y * ra[cj];
                }
            }
        }
    }
    (ga, gb)
}
