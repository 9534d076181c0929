//! Minimal reverse-mode automatic differentiation over `ndarray` tensors.
//!
//! A [`Graph`] is a tape of operations built during a forward pass;
//! [`Graph::backward`] walks it in reverse and accumulates gradients for
//! every parameter node. Parameters live outside the graph in a
//! [`Params`] store so one parameter set can serve many forward passes.
//!
//! The op set is exactly what the networks and losses here need:
//! convolution / transposed convolution (GEMM-backed, see [`conv`]),
//! leaky ReLU, tanh, sigmoid, dropout, channel concatenation, elementwise
//! add, affine maps, natural log, and mean / L1 / MSE reductions.

pub mod conv;

use ndarray::{ArrayD, ArrayViewD, Ix4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Index of a parameter in a [`Params`] store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Index of a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Named parameter tensors plus their gradient accumulators.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub tensors: Vec<ArrayD<f32>>,
    pub names: Vec<String>,
}

impl Params {
    pub fn add(&mut self, name: impl Into<String>, t: ArrayD<f32>) -> ParamId {
        self.tensors.push(t);
        self.names.push(name.into());
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }
}

/// Per-parameter gradients produced by [`Graph::backward`].
pub type Gradients = Vec<Option<ArrayD<f32>>>;

enum Op {
    /// Constant input or a detached value.
    Leaf,
    /// Reference to `Params` tensor; grads flow into `Gradients`.
    Param(ParamId),
    Conv2d { x: NodeId, w: NodeId, b: Option<NodeId>, stride: usize, pad: usize },
    ConvT2d { x: NodeId, w: NodeId, b: Option<NodeId>, stride: usize, pad: usize },
    LeakyRelu { x: NodeId, alpha: f32 },
    Tanh { x: NodeId },
    Sigmoid { x: NodeId },
    /// Inverted dropout; `mask` entries are `0` or `1/(1-rate)`.
    Dropout { x: NodeId, mask: ArrayD<f32> },
    /// Concatenation along the channel axis (axis 1).
    ConcatC { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    /// `k·x + c` elementwise.
    Affine { x: NodeId, k: f32, #[allow(dead_code)] c: f32 },
    Ln { x: NodeId },
    Mean { x: NodeId },
    /// Mean absolute difference.
    L1 { a: NodeId, b: NodeId },
    /// Mean squared difference.
    Mse { a: NodeId, b: NodeId },
    /// Scalar sum of previously reduced scalars: `Σ kᵢ·xᵢ`.
    WeightedSum { xs: Vec<(NodeId, f32)> },
    /// 2×2 max pooling, stride 2; `argmax` flattens the chosen source
    /// index for each output element.
    MaxPool2 { x: NodeId, argmax: Vec<usize> },
    /// Per-channel `kᶜ·x + cᶜ` on an `(N, C, H, W)` tensor.
    ChannelAffine { x: NodeId, k: Vec<f32> },
}

struct Node {
    op: Op,
    value: ArrayD<f32>,
}

/// A forward tape. Build ops against it, then call [`Graph::backward`].
pub struct Graph<'p> {
    params: &'p Params,
    nodes: Vec<Node>,
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p Params) -> Self {
        Self { params, nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: ArrayD<f32>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &ArrayD<f32> {
        &self.nodes[id.0].value
    }

    /// Scalar value of a reduction node.
    pub fn scalar(&self, id: NodeId) -> f32 {
        let v = self.value(id);
        debug_assert_eq!(v.len(), 1);
        v.iter().copied().next().unwrap_or(0.0)
    }

    pub fn input(&mut self, value: ArrayD<f32>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        let value = self.params.tensors[id.0].clone();
        self.push(Op::Param(id), value)
    }

    fn v4(&self, id: NodeId) -> ndarray::ArrayView4<'_, f32> {
        self.nodes[id.0]
            .value
            .view()
            .into_dimensionality::<Ix4>()
            .expect("expected 4-D activation")
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> NodeId {
        let bias_vec = b.map(|bid| self.nodes[bid.0].value.iter().copied().collect::<Vec<f32>>());
        let y = conv::conv2d(&self.v4(x), &self.v4(w), bias_vec.as_deref(), stride, pad);
        self.push(Op::Conv2d { x, w, b, stride, pad }, y.into_dyn())
    }

    pub fn conv_transpose2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
        pad: usize,
    ) -> NodeId {
        let bias_vec = b.map(|bid| self.nodes[bid.0].value.iter().copied().collect::<Vec<f32>>());
        let y = conv::conv_transpose2d(&self.v4(x), &self.v4(w), bias_vec.as_deref(), stride, pad);
        self.push(Op::ConvT2d { x, w, b, stride, pad }, y.into_dyn())
    }

    pub fn leaky_relu(&mut self, x: NodeId, alpha: f32) -> NodeId {
        let y = self.nodes[x.0].value.mapv(|v| if v >= 0.0 { v } else { alpha * v });
        self.push(Op::LeakyRelu { x, alpha }, y)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let y = self.nodes[x.0].value.mapv(f32::tanh);
        self.push(Op::Tanh { x }, y)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let y = self.nodes[x.0].value.mapv(|v| 1.0 / (1.0 + (-v).exp()));
        self.push(Op::Sigmoid { x }, y)
    }

    /// Inverted dropout with the given keep-probability complement
    /// (`rate` is the drop probability). Mask is drawn from `rng` so the
    /// caller controls determinism; pass `rate = 0` to disable.
    pub fn dropout(&mut self, x: NodeId, rate: f32, rng: &mut ChaCha8Rng) -> NodeId {
        if rate == 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let mask = self.nodes[x.0]
            .value
            .mapv(|_| if rng.gen::<f32>() < keep { 1.0 / keep } else { 0.0 });
        let y = &self.nodes[x.0].value * &mask;
        self.push(Op::Dropout { x, mask }, y)
    }

    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let av = self.v4(a);
        let bv = self.v4(b);
        let y = ndarray::concatenate(ndarray::Axis(1), &[av, bv])
            .expect("concat shape mismatch");
        self.push(Op::ConcatC { a, b }, y.into_dyn())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let y = &self.nodes[a.0].value + &self.nodes[b.0].value;
        self.push(Op::Add { a, b }, y)
    }

    /// Elementwise `k·x + c`.
    pub fn affine(&mut self, x: NodeId, k: f32, c: f32) -> NodeId {
        let y = self.nodes[x.0].value.mapv(|v| k * v + c);
        self.push(Op::Affine { x, k, c }, y)
    }

    pub fn ln(&mut self, x: NodeId) -> NodeId {
        let y = self.nodes[x.0].value.mapv(f32::ln);
        self.push(Op::Ln { x }, y)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let m = self.nodes[x.0].value.mean().unwrap_or(0.0);
        self.push(Op::Mean { x }, ndarray::arr0(m).into_dyn())
    }

    pub fn l1(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let d = (&self.nodes[a.0].value - &self.nodes[b.0].value).mapv(f32::abs);
        let m = d.mean().unwrap_or(0.0);
        self.push(Op::L1 { a, b }, ndarray::arr0(m).into_dyn())
    }

    pub fn mse(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let d = &self.nodes[a.0].value - &self.nodes[b.0].value;
        let m = d.mapv(|v| v * v).mean().unwrap_or(0.0);
        self.push(Op::Mse { a, b }, ndarray::arr0(m).into_dyn())
    }

    /// 2×2 max pooling with stride 2 (floor semantics on odd sizes).
    pub fn max_pool2(&mut self, x: NodeId) -> NodeId {
        let xv = self.v4(x);
        let (n, c, h, w) = xv.dim();
        let (oh, ow) = (h / 2, w / 2);
        let mut out = ndarray::Array4::<f32>::zeros((n, c, oh, ow));
        let mut argmax = vec![0usize; n * c * oh * ow];
        let mut oi = 0usize;
        for ni in 0..n {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f32::NEG_INFINITY;
                        let mut best_idx = 0usize;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let (iy, ix) = (2 * oy + dy, 2 * ox + dx);
                                let v = xv[[ni, ci, iy, ix]];
                                if v > best {
                                    best = v;
                                    best_idx = ((ni * c + ci) * h + iy) * w + ix;
                                }
                            }
                        }
                        out[[ni, ci, oy, ox]] = best;
                        argmax[oi] = best_idx;
                        oi += 1;
                    }
                }
            }
        }
        self.push(Op::MaxPool2 { x, argmax }, out.into_dyn())
    }

    /// Per-channel affine `kᶜ·x + cᶜ` on `(N, C, H, W)`.
    pub fn channel_affine(&mut self, x: NodeId, k: &[f32], c: &[f32]) -> NodeId {
        let xv = self.v4(x);
        let mut y = xv.to_owned();
        for ci in 0..y.dim().1 {
            y.slice_mut(ndarray::s![.., ci, .., ..])
                .mapv_inplace(|v| k[ci] * v + c[ci]);
        }
        self.push(Op::ChannelAffine { x, k: k.to_vec() }, y.into_dyn())
    }

    /// `Σ kᵢ · xᵢ` over scalar nodes.
    pub fn weighted_sum(&mut self, xs: &[(NodeId, f32)]) -> NodeId {
        let s: f32 = xs.iter().map(|&(id, k)| self.scalar(id) * k).sum();
        self.push(Op::WeightedSum { xs: xs.to_vec() }, ndarray::arr0(s).into_dyn())
    }

    /// Reverse pass from a scalar `loss` node; returns one gradient slot
    /// per parameter in the store (None where the parameter is unused).
    pub fn backward(&self, loss: NodeId) -> Gradients {
        let mut grads: Vec<Option<ArrayD<f32>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(ndarray::arr0(1.0f32).into_dyn());
        let mut param_grads: Gradients = vec![None; self.params.len()];

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param(pid) => accumulate(&mut param_grads[pid.0], &g),
                Op::Conv2d { x, w, b, stride, pad } => {
                    let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                    let dx = conv::conv2d_grad_x(
                        &g4,
                        &self.v4(*w),
                        self.v4(*x).dim(),
                        *stride,
                        *pad,
                    );
                    let dw = conv::conv2d_grad_w(
                        &g4,
                        &self.v4(*x),
                        self.v4(*w).dim(),
                        *stride,
                        *pad,
                    );
                    accumulate(&mut grads[x.0], &dx.into_dyn());
                    accumulate(&mut grads[w.0], &dw.into_dyn());
                    if let Some(b) = b {
                        let db = conv::conv2d_grad_b(&g4);
                        let shape = self.nodes[b.0].value.raw_dim();
                        accumulate(
                            &mut grads[b.0],
                            &ArrayD::from_shape_vec(shape, db).unwrap(),
                        );
                    }
                }
                Op::ConvT2d { x, w, b, stride, pad } => {
                    let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                    let dx = conv::conv_transpose2d_grad_x(&g4, &self.v4(*w), *stride, *pad);
                    let dw = conv::conv_transpose2d_grad_w(
                        &g4,
                        &self.v4(*x),
                        self.v4(*w).dim(),
                        *stride,
                        *pad,
                    );
                    accumulate(&mut grads[x.0], &dx.into_dyn());
                    accumulate(&mut grads[w.0], &dw.into_dyn());
                    if let Some(b) = b {
                        let db = conv::conv2d_grad_b(&g4);
                        let shape = self.nodes[b.0].value.raw_dim();
                        accumulate(
                            &mut grads[b.0],
                            &ArrayD::from_shape_vec(shape, db).unwrap(),
                        );
                    }
                }
                Op::LeakyRelu { x, alpha } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = ndarray::Zip::from(&g)
                        .and(xv)
                        .map_collect(|&go, &xi| if xi >= 0.0 { go } else { go * alpha });
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Tanh { x } => {
                    let yv = &self.nodes[i].value;
                    let dx = ndarray::Zip::from(&g)
                        .and(yv)
                        .map_collect(|&go, &y| go * (1.0 - y * y));
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Sigmoid { x } => {
                    let yv = &self.nodes[i].value;
                    let dx = ndarray::Zip::from(&g)
                        .and(yv)
                        .map_collect(|&go, &y| go * y * (1.0 - y));
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Dropout { x, mask } => {
                    accumulate(&mut grads[x.0], &(&g * mask));
                }
                Op::ConcatC { a, b } => {
                    let ca = self.v4(*a).dim().1;
                    let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                    let ga = g4.slice(ndarray::s![.., ..ca, .., ..]).to_owned();
                    let gb = g4.slice(ndarray::s![.., ca.., .., ..]).to_owned();
                    accumulate(&mut grads[a.0], &ga.into_dyn());
                    accumulate(&mut grads[b.0], &gb.into_dyn());
                }
                Op::Add { a, b } => {
                    accumulate(&mut grads[a.0], &g);
                    accumulate(&mut grads[b.0], &g);
                }
                Op::Affine { x, k, .. } => {
                    accumulate(&mut grads[x.0], &g.mapv(|v| v * k));
                }
                Op::Ln { x } => {
                    let xv = &self.nodes[x.0].value;
                    let dx = ndarray::Zip::from(&g).and(xv).map_collect(|&go, &xi| go / xi);
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::Mean { x } => {
                    let n = self.nodes[x.0].value.len() as f32;
                    let go = g.iter().next().copied().unwrap_or(0.0);
                    let dx = self.nodes[x.0].value.mapv(|_| go / n);
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::L1 { a, b } => {
                    let go = g.iter().next().copied().unwrap_or(0.0);
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let n = av.len() as f32;
                    let da = ndarray::Zip::from(av)
                        .and(bv)
                        .map_collect(|&x, &y| go * (x - y).signum() / n);
                    let db = da.mapv(|v| -v);
                    accumulate(&mut grads[a.0], &da);
                    accumulate(&mut grads[b.0], &db);
                }
                Op::Mse { a, b } => {
                    let go = g.iter().next().copied().unwrap_or(0.0);
                    let av = &self.nodes[a.0].value;
                    let bv = &self.nodes[b.0].value;
                    let n = av.len() as f32;
                    let da = ndarray::Zip::from(av)
                        .and(bv)
                        .map_collect(|&x, &y| go * 2.0 * (x - y) / n);
                    let db = da.mapv(|v| -v);
                    accumulate(&mut grads[a.0], &da);
                    accumulate(&mut grads[b.0], &db);
                }
                Op::MaxPool2 { x, argmax } => {
                    let mut dx = ArrayD::zeros(self.nodes[x.0].value.raw_dim());
                    let dxs = dx.as_slice_mut().expect("contiguous");
                    for (&src, &go) in argmax.iter().zip(g.iter()) {
                        dxs[src] += go;
                    }
                    accumulate(&mut grads[x.0], &dx);
                }
                Op::ChannelAffine { x, k } => {
                    let g4 = g.view().into_dimensionality::<Ix4>().unwrap();
                    let mut dx = g4.to_owned();
                    for ci in 0..dx.dim().1 {
                        dx.slice_mut(ndarray::s![.., ci, .., ..])
                            .mapv_inplace(|v| v * k[ci]);
                    }
                    accumulate(&mut grads[x.0], &dx.into_dyn());
                }
                Op::WeightedSum { xs } => {
                    let go = g.iter().next().copied().unwrap_or(0.0);
                    for &(id, k) in xs {
                        accumulate(
                            &mut grads[id.0],
                            &ndarray::arr0(go * k).into_dyn(),
                        );
                    }
                }
            }
        }
        param_grads
    }
}

fn accumulate(slot: &mut Option<ArrayD<f32>>, g: &ArrayD<f32>) {
    match slot {
        Some(existing) => *existing += g,
        None => *slot = Some(g.clone()),
    }
}

/// Draws `N(0, std)` initial weights deterministically (Box–Muller over
/// ChaCha8 uniforms).
pub fn normal_init(rng: &mut ChaCha8Rng, shape: &[usize], std: f32) -> ArrayD<f32> {
    use rand_distr::{Distribution, Normal};
    let n = Normal::new(0.0f32, std).expect("valid std");
    ArrayD::from_shape_fn(ndarray::IxDyn(shape), |_| n.sample(rng))
}

/// Borrow a 4-D view of a dynamic tensor.
pub fn as4(t: &ArrayD<f32>) -> ndarray::ArrayView4<'_, f32> {
    t.view().into_dimensionality::<Ix4>().expect("expected 4-D tensor")
}

/// Leaked helper so tests can read activations easily.
pub fn to_vec(v: ArrayViewD<f32>) -> Vec<f32> {
    v.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr0;
    use rand::SeedableRng;

    fn fd_check(
        params: &mut Params,
        pid: ParamId,
        loss_of: impl Fn(&Params) -> f32,
        analytic: &ArrayD<f32>,
        tol: f32,
    ) {
        let eps = 1e-3;
        let idxs: Vec<_> = analytic.indexed_iter().map(|(i, _)| i).collect();
        for idx in idxs.iter().take(6) {
            let orig = params.tensors[pid.0][idx];
            params.tensors[pid.0][idx] = orig + eps;
            let lp = loss_of(params);
            params.tensors[pid.0][idx] = orig - eps;
            let lm = loss_of(params);
            params.tensors[pid.0][idx] = orig;
            let fd = (lp - lm) / (2.0 * eps);
            let an = analytic[idx];
            assert!(
                (fd - an).abs() < tol,
                "fd {fd} vs analytic {an} at {idx:?}"
            );
        }
    }

    #[test]
    fn scalar_chain_matches_finite_difference() {
        // loss = mean( tanh(k·p + c)² ) via mse against zero
        let mut params = Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pid = params.add("p", normal_init(&mut rng, &[2, 3], 1.0));
        let run = |ps: &Params| -> (f32, Gradients) {
            let mut g = Graph::new(ps);
            let p = g.param(pid);
            let a = g.affine(p, 0.7, 0.1);
            let t = g.tanh(a);
            let zero = g.input(ArrayD::zeros(ndarray::IxDyn(&[2, 3])));
            let loss = g.mse(t, zero);
            let grads = g.backward(loss);
            (g.scalar(loss), grads)
        };
        let (_, grads) = run(&params);
        let analytic = grads[pid.0].clone().unwrap();
        fd_check(&mut params, pid, |ps| run(ps).0, &analytic, 1e-3);
    }

    #[test]
    fn activations_match_finite_difference() {
        let mut params = Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pid = params.add("p", normal_init(&mut rng, &[3, 4], 1.0));
        let run = |ps: &Params| -> (f32, Gradients) {
            let mut g = Graph::new(ps);
            let p = g.param(pid);
            let lr = g.leaky_relu(p, 0.2);
            let s = g.sigmoid(lr);
            let one = g.input(ArrayD::ones(ndarray::IxDyn(&[3, 4])));
            let a = g.add(s, one);
            let l = g.ln(a);
            let loss = g.mean(l);
            let grads = g.backward(loss);
            (g.scalar(loss), grads)
        };
        let (_, grads) = run(&params);
        let analytic = grads[pid.0].clone().unwrap();
        fd_check(&mut params, pid, |ps| run(ps).0, &analytic, 1e-3);
    }

    #[test]
    fn conv_and_concat_graph_matches_finite_difference() {
        let mut params = Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w1 = params.add("w1", normal_init(&mut rng, &[3, 2, 4, 4], 0.3));
        let b1 = params.add("b1", ArrayD::zeros(ndarray::IxDyn(&[3])));
        let wt = params.add("wt", normal_init(&mut rng, &[3, 2, 4, 4], 0.3));
        let x_in = normal_init(&mut rng, &[1, 2, 8, 8], 1.0);
        let run = |ps: &Params| -> (f32, Gradients) {
            let mut g = Graph::new(ps);
            let x = g.input(x_in.clone());
            let w1n = g.param(w1);
            let b1n = g.param(b1);
            let c1 = g.conv2d(x, w1n, Some(b1n), 2, 1); // (1,3,4,4)
            let act = g.leaky_relu(c1, 0.2);
            let wtn = g.param(wt);
            let up = g.conv_transpose2d(act, wtn, None, 2, 1); // (1,2,8,8)
            let cat = g.concat_channels(up, x); // (1,4,8,8)
            let loss = g.mean(cat);
            let grads = g.backward(loss);
            (g.scalar(loss), grads)
        };
        let (_, grads) = run(&params);
        for pid in [w1, b1, wt] {
            let analytic = grads[pid.0].clone().unwrap();
            fd_check(&mut params, pid, |ps| run(ps).0, &analytic, 1e-3);
        }
    }

    #[test]
    fn l1_grad_matches_finite_difference() {
        let mut params = Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pid = params.add("p", normal_init(&mut rng, &[4, 4], 1.0));
        let target = normal_init(&mut rng, &[4, 4], 1.0);
        let run = |ps: &Params| -> (f32, Gradients) {
            let mut g = Graph::new(ps);
            let p = g.param(pid);
            let t = g.input(target.clone());
            let loss = g.l1(p, t);
            let grads = g.backward(loss);
            (g.scalar(loss), grads)
        };
        let (_, grads) = run(&params);
        let analytic = grads[pid.0].clone().unwrap();
        fd_check(&mut params, pid, |ps| run(ps).0, &analytic, 1e-3);
    }

    #[test]
    fn dropout_scales_and_masks() {
        let params = Params::default();
        let mut g = Graph::new(&params);
        let x = g.input(ArrayD::ones(ndarray::IxDyn(&[1000])));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = g.dropout(x, 0.7, &mut rng);
        let vals: Vec<f32> = g.value(d).iter().copied().collect();
        let kept = vals.iter().filter(|&&v| v > 0.0).count();
        // keep probability 0.3, scaled to 1/0.3
        assert!((200..400).contains(&kept), "kept {kept}");
        for v in vals {
            assert!(v == 0.0 || (v - 1.0 / 0.3).abs() < 1e-5);
        }
        // determinism under the same seed
        let mut g2 = Graph::new(&params);
        let x2 = g2.input(ArrayD::ones(ndarray::IxDyn(&[1000])));
        let mut rng2 = ChaCha8Rng::seed_from_u64(5);
        let d2 = g2.dropout(x2, 0.7, &mut rng2);
        assert_eq!(g.value(d), g2.value(d2));
    }

    #[test]
    fn weighted_sum_combines_scalars() {
        let params = Params::default();
        let mut g = Graph::new(&params);
        let a = g.input(arr0(2.0f32).into_dyn());
        let b = g.input(arr0(3.0f32).into_dyn());
        let s = g.weighted_sum(&[(a, 1.0), (b, 20.0)]);
        assert_eq!(g.scalar(s), 62.0);
    }

    #[test]
    fn pool_and_channel_affine_match_finite_difference() {
        let mut params = Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pid = params.add("p", normal_init(&mut rng, &[1, 2, 6, 6], 1.0));
        let run = |ps: &Params| -> (f32, Gradients) {
            let mut g = Graph::new(ps);
            let p = g.param(pid);
            let a = g.channel_affine(p, &[2.0, -0.5], &[0.1, 0.3]);
            let m = g.max_pool2(a);
            let loss = g.mean(m);
            let grads = g.backward(loss);
            (g.scalar(loss), grads)
        };
        let (_, grads) = run(&params);
        let analytic = grads[pid.0].clone().unwrap();
        fd_check(&mut params, pid, |ps| run(ps).0, &analytic, 1e-3);
    }

    #[test]
    fn unused_params_have_no_gradient() {
        let mut params = Params::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let used = params.add("used", normal_init(&mut rng, &[2], 1.0));
        let unused = params.add("unused", normal_init(&mut rng, &[2], 1.0));
        let mut g = Graph::new(&params);
        let p = g.param(used);
        let loss = g.mean(p);
        let grads = g.backward(loss);
        assert!(grads[used.0].is_some());
        assert!(grads[unused.0].is_none());
    }
}
