//! Reverse-mode automatic differentiation over dense feature matrices.
//!
//! Every operation appends a node whose inputs already exist, so node
//! order is a topological order and the backward sweep is a single
//! reverse pass. Sparse structure enters only through [`KernelMap`]s and
//! row gathers; the tape itself knows nothing about coordinates.

use std::collections::BTreeMap;
use std::sync::Arc;

use rustc_hash::FxHashMap;

use super::coords::CoordSet;
use super::kernel::{Kernel, KernelMap};
use super::matrix::{axpy, dot, Matrix};
use super::params::ParamStore;
use crate::codec::entropy::{laplace_mass_grad, RATE_FLOOR};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(String),
    Conv { x: NodeId, w: NodeId, b: NodeId, map: Arc<KernelMap> },
    Linear { x: NodeId, w: NodeId, b: NodeId },
    Relu(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    Concat(Vec<NodeId>),
    Gather { x: NodeId, idx: Vec<u32> },
    Clamp { x: NodeId, lo: f64, hi: f64 },
    RowTransform { x: NodeId, m: [[f64; 3]; 3], scale: f64 },
    MeanSquare { a: NodeId, b: NodeId },
    MatchedMse { a: NodeId, b: NodeId, pairs: Vec<(u32, u32)> },
    Bce { logits: NodeId, labels: Vec<f64> },
    LaplaceRate { v: NodeId, mu: NodeId, log_b: NodeId },
    WeightedSum(Vec<(NodeId, f64)>),
    Max(NodeId, NodeId),
    Dot { x: NodeId, c: Matrix },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Gradients keyed by parameter name, flattened like the parameter data.
pub type Gradients = BTreeMap<String, Vec<f64>>;

/// Which parameters receive gradients.
#[derive(Clone, Debug, Default)]
pub enum GradMode {
    #[default]
    All,
    /// No gradients anywhere (inference).
    Off,
    /// Parameters whose names start with any listed prefix are frozen.
    Frozen(Vec<String>),
    /// Only parameters whose names start with a listed prefix train.
    Only(Vec<String>),
}

impl GradMode {
    pub fn trains(&self, name: &str) -> bool {
        match self {
            GradMode::All => true,
            GradMode::Off => false,
            GradMode::Frozen(p) => !p.iter().any(|x| name.starts_with(x.as_str())),
            GradMode::Only(p) => p.iter().any(|x| name.starts_with(x.as_str())),
        }
    }
}

type MapKey = (usize, usize, Kernel);

/// The tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    mode: GradMode,
    params: FxHashMap<String, NodeId>,
    maps: FxHashMap<MapKey, Arc<KernelMap>>,
    // Holds coordinate sets alive so map-cache keys (addresses) stay unique.
    pinned: Vec<Arc<CoordSet>>,
}

fn shape_err(what: &str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape(format!("{what}: {}x{} vs {}x{}", a.rows, a.cols, b.rows, b.cols))
}

impl Graph {
    pub fn new(mode: GradMode) -> Self {
        Self { mode, ..Default::default() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.item()
    }

    pub fn needs_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Names of all parameters touched so far.
    pub fn used_params(&self) -> Vec<String> {
        let mut v: Vec<String> = self.params.keys().cloned().collect();
        v.sort();
        v
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, needs_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn ng(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|i| self.nodes[i.0].needs_grad)
    }

    pub fn constant(&mut self, m: Matrix) -> NodeId {
        self.push(m, Op::Constant, false)
    }

    /// Leaf node for a stored parameter; repeated requests share one node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<NodeId> {
        if let Some(&id) = self.params.get(name) {
            return Ok(id);
        }
        let t = store.get(name)?;
        let (rows, cols) = match t.shape.as_slice() {
            [n] => (1, *n),
            [vol, cin, cout] => (vol * cin, *cout),
            [r, c] => (*r, *c),
            s => return Err(Error::Shape(format!("unsupported parameter rank {s:?} for '{name}'"))),
        };
        let needs = self.mode.trains(name);
        let id = self.push(Matrix::from_vec(rows, cols, t.data.clone()), Op::Param(name.to_string()), needs);
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    /// Cached kernel map between two coordinate sets.
    pub fn kernel_map(&mut self, kernel: Kernel, input: &Arc<CoordSet>, output: &Arc<CoordSet>) -> Result<Arc<KernelMap>> {
        let key = (Arc::as_ptr(input) as usize, Arc::as_ptr(output) as usize, kernel);
        if let Some(m) = self.maps.get(&key) {
            return Ok(m.clone());
        }
        let m = Arc::new(KernelMap::build(kernel, input, output)?);
        self.pinned.push(input.clone());
        self.pinned.push(output.clone());
        self.maps.insert(key, m.clone());
        Ok(m)
    }

    /// Sparse convolution `out[i] = b + Σ_(j,k) x[j] · W[k]`.
    pub fn conv(&mut self, x: NodeId, w: NodeId, b: NodeId, map: Arc<KernelMap>) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        let cin = xv.cols;
        let cout = wv.cols;
        let vol = map.kernel.volume();
        if wv.rows != vol * cin || bv.cols != cout || xv.rows != map.n_in {
            return Err(Error::Shape(format!(
                "conv: input {}x{}, weight {}x{} (kernel volume {vol}), bias {}, map n_in {}",
                xv.rows, cin, wv.rows, wv.cols, bv.cols, map.n_in
            )));
        }
        let mut out = Matrix::zeros(map.n_out, cout);
        for i in 0..map.n_out {
            let o = out.row_mut(i);
            o.copy_from_slice(&bv.data);
            for e in map.row(i) {
                let xr = xv.row(e.input as usize);
                let wk = &wv.data[e.tap as usize * cin * cout..(e.tap as usize + 1) * cin * cout];
                for (ci, &a) in xr.iter().enumerate() {
                    if a != 0.0 {
                        axpy(o, a, &wk[ci * cout..(ci + 1) * cout]);
                    }
                }
            }
        }
        let needs = self.ng(&[x, w, b]);
        Ok(self.push(out, Op::Conv { x, w, b, map }, needs))
    }

    /// Dense `x · W + b` (1×1×1 convolution).
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if wv.rows != xv.cols || bv.cols != wv.cols {
            return Err(Error::Shape(format!(
                "linear: input {}x{}, weight {}x{}, bias {}",
                xv.rows, xv.cols, wv.rows, wv.cols, bv.cols
            )));
        }
        let cout = wv.cols;
        let mut out = Matrix::zeros(xv.rows, cout);
        for i in 0..xv.rows {
            let o = out.row_mut(i);
            o.copy_from_slice(&bv.data);
            for (ci, &a) in xv.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy(o, a, wv.row(ci));
                }
            }
        }
        let needs = self.ng(&[x, w, b]);
        Ok(self.push(out, Op::Linear { x, w, b }, needs))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut v = self.value(x).clone();
        for a in &mut v.data {
            if *a < 0.0 {
                *a = 0.0;
            }
        }
        let needs = self.ng(&[x]);
        self.push(v, Op::Relu(x), needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if (av.rows, av.cols) != (bv.rows, bv.cols) {
            return Err(shape_err("add", av, bv));
        }
        let mut v = av.clone();
        v.add_assign(bv);
        let needs = self.ng(&[a, b]);
        Ok(self.push(v, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if (av.rows, av.cols) != (bv.rows, bv.cols) {
            return Err(shape_err("sub", av, bv));
        }
        let mut v = av.clone();
        for (x, y) in v.data.iter_mut().zip(&bv.data) {
            *x -= y;
        }
        let needs = self.ng(&[a, b]);
        Ok(self.push(v, Op::Sub(a, b), needs))
    }

    pub fn scale(&mut self, x: NodeId, s: f64) -> NodeId {
        let mut v = self.value(x).clone();
        for a in &mut v.data {
            *a *= s;
        }
        let needs = self.ng(&[x]);
        self.push(v, Op::Scale(x, s), needs)
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let rows = self.value(parts[0]).rows;
        if parts.iter().any(|p| self.value(*p).rows != rows) {
            return Err(Error::Shape("concat: row counts differ".into()));
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut off = 0;
            for p in parts {
                let r = self.value(*p).row(i);
                out.row_mut(i)[off..off + r.len()].copy_from_slice(r);
                off += r.len();
            }
        }
        let needs = self.ng(parts);
        Ok(self.push(out, Op::Concat(parts.to_vec()), needs))
    }

    /// Row gather: output row `r` is input row `idx[r]`.
    pub fn gather(&mut self, x: NodeId, idx: Vec<u32>) -> NodeId {
        let xv = self.value(x);
        let mut out = Matrix::zeros(idx.len(), xv.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(xv.row(i as usize));
        }
        let needs = self.ng(&[x]);
        self.push(out, Op::Gather { x, idx }, needs)
    }

    /// Elementwise clamp; the gradient passes only strictly inside `(lo, hi)`.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let mut v = self.value(x).clone();
        for a in &mut v.data {
            *a = a.clamp(lo, hi);
        }
        let needs = self.ng(&[x]);
        self.push(v, Op::Clamp { x, lo, hi }, needs)
    }

    /// Per-row `scale · M · row` for 3-channel rows (color space changes).
    pub fn row_transform(&mut self, x: NodeId, m: [[f64; 3]; 3], scale: f64) -> Result<NodeId> {
        let xv = self.value(x);
        if xv.cols != 3 {
            return Err(Error::Shape(format!("row_transform expects 3 columns, got {}", xv.cols)));
        }
        let v = Matrix::from_vec(xv.rows, 3, transform_rows(&xv.data, &m, scale));
        let needs = self.ng(&[x]);
        Ok(self.push(v, Op::RowTransform { x, m, scale }, needs))
    }

    /// Mean over all elements of `(a - b)^2`.
    pub fn mean_square(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if (av.rows, av.cols) != (bv.rows, bv.cols) {
            return Err(shape_err("mean_square", av, bv));
        }
        let n = av.data.len().max(1) as f64;
        let s: f64 = av.data.iter().zip(&bv.data).map(|(x, y)| (x - y) * (x - y)).sum();
        let needs = self.ng(&[a, b]);
        Ok(self.push(Matrix::scalar(s / n), Op::MeanSquare { a, b }, needs))
    }

    /// Mean over `(i, j)` pairs and channels of `(a[i] - b[j])^2`.
    pub fn matched_mse(&mut self, a: NodeId, b: NodeId, pairs: Vec<(u32, u32)>) -> Result<NodeId> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols != bv.cols {
            return Err(shape_err("matched_mse", av, bv));
        }
        let n = (pairs.len() * av.cols).max(1) as f64;
        let mut s = 0.0;
        for &(i, j) in &pairs {
            for (x, y) in av.row(i as usize).iter().zip(bv.row(j as usize)) {
                s += (x - y) * (x - y);
            }
        }
        let needs = self.ng(&[a, b]);
        Ok(self.push(Matrix::scalar(s / n), Op::MatchedMse { a, b, pairs }, needs))
    }

    /// Mean binary cross-entropy with logits (natural log).
    pub fn bce(&mut self, logits: NodeId, labels: Vec<f64>) -> Result<NodeId> {
        let lv = self.value(logits);
        if lv.cols != 1 || lv.rows != labels.len() {
            return Err(Error::Shape(format!("bce: logits {}x{}, {} labels", lv.rows, lv.cols, labels.len())));
        }
        let n = labels.len().max(1) as f64;
        let s: f64 = lv.data.iter().zip(&labels).map(|(&l, &y)| bce_term(l, y)).sum();
        let needs = self.ng(&[logits]);
        Ok(self.push(Matrix::scalar(s / n), Op::Bce { logits, labels }, needs))
    }

    /// Total bits of `v` under per-column discretized Laplace models.
    pub fn laplace_rate(&mut self, v: NodeId, mu: NodeId, log_b: NodeId) -> Result<NodeId> {
        let (vv, mv, bv) = (self.value(v), self.value(mu), self.value(log_b));
        if mv.cols != vv.cols || bv.cols != vv.cols || mv.rows != 1 || bv.rows != 1 {
            return Err(Error::Shape(format!("laplace_rate: values {}x{}, mu {}x{}, log_b {}x{}", vv.rows, vv.cols, mv.rows, mv.cols, bv.rows, bv.cols)));
        }
        let c = vv.cols;
        let mut bits = 0.0;
        for (k, &x) in vv.data.iter().enumerate() {
            let (p, _, _) = laplace_mass_grad(x, mv.data[k % c], bv.data[k % c].exp());
            bits -= p.max(RATE_FLOOR).log2();
        }
        let needs = self.ng(&[v, mu, log_b]);
        Ok(self.push(Matrix::scalar(bits), Op::LaplaceRate { v, mu, log_b }, needs))
    }

    /// `Σ w_i · s_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(NodeId, f64)]) -> NodeId {
        let s = terms.iter().map(|(id, w)| w * self.scalar(*id)).sum();
        let ids: Vec<NodeId> = terms.iter().map(|t| t.0).collect();
        let needs = self.ng(&ids);
        self.push(Matrix::scalar(s), Op::WeightedSum(terms.to_vec()), needs)
    }

    /// Larger of two scalars; ties route the gradient to `a`.
    pub fn max(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.scalar(a).max(self.scalar(b));
        let needs = self.ng(&[a, b]);
        self.push(Matrix::scalar(v), Op::Max(a, b), needs)
    }

    /// `Σ x ⊙ c` for a constant `c` of the same shape.
    pub fn dot_const(&mut self, x: NodeId, c: Matrix) -> Result<NodeId> {
        let xv = self.value(x);
        if (xv.rows, xv.cols) != (c.rows, c.cols) {
            return Err(shape_err("dot_const", xv, &c));
        }
        let s = dot(&xv.data, &c.data);
        let needs = self.ng(&[x]);
        Ok(self.push(Matrix::scalar(s), Op::Dot { x, c }, needs))
    }

    /// Reverse sweep from a scalar node. Every parameter in `store` gets an
    /// entry; parameters the loss does not depend on (or that are frozen)
    /// get zeros.
    pub fn backward(&self, loss: NodeId, store: &ParamStore) -> Result<Gradients> {
        if self.value(loss).data.len() != 1 {
            return Err(Error::Shape("backward requires a scalar loss".into()));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));
        let mut out = Gradients::new();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(name) => {
                    out.insert(name.clone(), g.data);
                }
                Op::Conv { x, w, b, map } => self.back_conv(&mut grads, &g, *x, *w, *b, map),
                Op::Linear { x, w, b } => self.back_linear(&mut grads, &g, *x, *w, *b),
                Op::Relu(x) => {
                    let mut gx = g;
                    for (d, &v) in gx.data.iter_mut().zip(&node.value.data) {
                        if v <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    self.accum(&mut grads, *x, gx);
                }
                Op::Add(a, b) => {
                    self.accum(&mut grads, *a, g.clone());
                    self.accum(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    let mut neg = g.clone();
                    neg.data.iter_mut().for_each(|v| *v = -*v);
                    self.accum(&mut grads, *a, g);
                    self.accum(&mut grads, *b, neg);
                }
                Op::Scale(x, s) => {
                    let mut gx = g;
                    gx.data.iter_mut().for_each(|v| *v *= s);
                    self.accum(&mut grads, *x, gx);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let cols = self.value(*p).cols;
                        if self.nodes[p.0].needs_grad {
                            let mut gp = Matrix::zeros(g.rows, cols);
                            for i in 0..g.rows {
                                gp.row_mut(i).copy_from_slice(&g.row(i)[off..off + cols]);
                            }
                            self.accum(&mut grads, *p, gp);
                        }
                        off += cols;
                    }
                }
                Op::Gather { x, idx } => {
                    let xv = self.value(*x);
                    let mut gx = Matrix::zeros(xv.rows, xv.cols);
                    for (r, &i) in idx.iter().enumerate() {
                        let src = g.row(r);
                        for (d, s) in gx.row_mut(i as usize).iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                    self.accum(&mut grads, *x, gx);
                }
                Op::Clamp { x, lo, hi } => {
                    let xv = self.value(*x);
                    let mut gx = g;
                    for (d, &v) in gx.data.iter_mut().zip(&xv.data) {
                        if v <= *lo || v >= *hi {
                            *d = 0.0;
                        }
                    }
                    self.accum(&mut grads, *x, gx);
                }
                Op::RowTransform { x, m, scale } => {
                    let mt = [
                        [m[0][0], m[1][0], m[2][0]],
                        [m[0][1], m[1][1], m[2][1]],
                        [m[0][2], m[1][2], m[2][2]],
                    ];
                    let gx = Matrix::from_vec(g.rows, 3, transform_rows(&g.data, &mt, *scale));
                    self.accum(&mut grads, *x, gx);
                }
                Op::MeanSquare { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let k = 2.0 * g.item() / av.data.len().max(1) as f64;
                    let d: Vec<f64> = av.data.iter().zip(&bv.data).map(|(x, y)| k * (x - y)).collect();
                    let ga = Matrix::from_vec(av.rows, av.cols, d);
                    if self.nodes[b.0].needs_grad {
                        let mut gb = ga.clone();
                        gb.data.iter_mut().for_each(|v| *v = -*v);
                        self.accum(&mut grads, *b, gb);
                    }
                    self.accum(&mut grads, *a, ga);
                }
                Op::MatchedMse { a, b, pairs } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let k = 2.0 * g.item() / (pairs.len() * av.cols).max(1) as f64;
                    let mut ga = Matrix::zeros(av.rows, av.cols);
                    let mut gb = Matrix::zeros(bv.rows, bv.cols);
                    for &(i, j) in pairs {
                        let (ar, br) = (av.row(i as usize), bv.row(j as usize));
                        for c in 0..av.cols {
                            let d = k * (ar[c] - br[c]);
                            ga.row_mut(i as usize)[c] += d;
                            gb.row_mut(j as usize)[c] -= d;
                        }
                    }
                    self.accum(&mut grads, *a, ga);
                    self.accum(&mut grads, *b, gb);
                }
                Op::Bce { logits, labels } => {
                    let lv = self.value(*logits);
                    let k = g.item() / labels.len().max(1) as f64;
                    let d = lv.data.iter().zip(labels).map(|(&l, &y)| k * (sigmoid(l) - y)).collect();
                    self.accum(&mut grads, *logits, Matrix::from_vec(lv.rows, 1, d));
                }
                Op::LaplaceRate { v, mu, log_b } => self.back_rate(&mut grads, g.item(), *v, *mu, *log_b),
                Op::WeightedSum(terms) => {
                    for (id, w) in terms {
                        self.accum(&mut grads, *id, Matrix::scalar(w * g.item()));
                    }
                }
                Op::Max(a, b) => {
                    let target = if self.scalar(*a) >= self.scalar(*b) { *a } else { *b };
                    self.accum(&mut grads, target, g);
                }
                Op::Dot { x, c } => {
                    let mut gx = c.clone();
                    let s = g.item();
                    gx.data.iter_mut().for_each(|v| *v *= s);
                    self.accum(&mut grads, *x, gx);
                }
            }
        }

        for (name, t) in store.iter() {
            out.entry(name.clone()).or_insert_with(|| vec![0.0; t.len()]);
        }
        Ok(out)
    }

    fn accum(&self, grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        match &mut grads[id.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    fn back_conv(&self, grads: &mut [Option<Matrix>], g: &Matrix, x: NodeId, w: NodeId, b: NodeId, map: &KernelMap) {
        let (xv, wv) = (self.value(x), self.value(w));
        let (cin, cout) = (xv.cols, wv.cols);
        let want_x = self.nodes[x.0].needs_grad;
        let want_w = self.nodes[w.0].needs_grad;
        let mut gx = want_x.then(|| Matrix::zeros(xv.rows, cin));
        let mut gw = want_w.then(|| Matrix::zeros(wv.rows, cout));
        for i in 0..map.n_out {
            let go = g.row(i);
            for e in map.row(i) {
                let j = e.input as usize;
                let base = e.tap as usize * cin;
                if let Some(gx) = gx.as_mut() {
                    let gr = gx.row_mut(j);
                    for (ci, d) in gr.iter_mut().enumerate() {
                        *d += dot(wv.row(base + ci), go);
                    }
                }
                if let Some(gw) = gw.as_mut() {
                    for (ci, &a) in xv.row(j).iter().enumerate() {
                        if a != 0.0 {
                            axpy(gw.row_mut(base + ci), a, go);
                        }
                    }
                }
            }
        }
        if self.nodes[b.0].needs_grad {
            grads_bias(self, grads, g, b);
        }
        if let Some(gx) = gx {
            self.accum(grads, x, gx);
        }
        if let Some(gw) = gw {
            self.accum(grads, w, gw);
        }
    }

    fn back_linear(&self, grads: &mut [Option<Matrix>], g: &Matrix, x: NodeId, w: NodeId, b: NodeId) {
        let (xv, wv) = (self.value(x), self.value(w));
        if self.nodes[x.0].needs_grad {
            let mut gx = Matrix::zeros(xv.rows, xv.cols);
            for i in 0..xv.rows {
                let go = g.row(i);
                for (ci, d) in gx.row_mut(i).iter_mut().enumerate() {
                    *d = dot(wv.row(ci), go);
                }
            }
            self.accum(grads, x, gx);
        }
        if self.nodes[w.0].needs_grad {
            let mut gw = Matrix::zeros(wv.rows, wv.cols);
            for i in 0..xv.rows {
                let go = g.row(i);
                for (ci, &a) in xv.row(i).iter().enumerate() {
                    if a != 0.0 {
                        axpy(gw.row_mut(ci), a, go);
                    }
                }
            }
            self.accum(grads, w, gw);
        }
        if self.nodes[b.0].needs_grad {
            grads_bias(self, grads, g, b);
        }
    }

    fn back_rate(&self, grads: &mut [Option<Matrix>], gs: f64, v: NodeId, mu: NodeId, log_b: NodeId) {
        let (vv, mv, bv) = (self.value(v), self.value(mu), self.value(log_b));
        let c = vv.cols;
        let mut gv = Matrix::zeros(vv.rows, c);
        let mut gmu = Matrix::zeros(1, c);
        let mut glb = Matrix::zeros(1, c);
        let inv_ln2 = std::f64::consts::LOG2_E;
        for (k, &x) in vv.data.iter().enumerate() {
            let ch = k % c;
            let scale = bv.data[ch].exp();
            let (p, dp_dx, dp_db) = laplace_mass_grad(x, mv.data[ch], scale);
            if p < RATE_FLOOR {
                continue;
            }
            // bits = -log2 p
            let dbits_dp = -inv_ln2 / p;
            gv.data[k] = gs * dbits_dp * dp_dx;
            gmu.data[ch] -= gs * dbits_dp * dp_dx;
            glb.data[ch] += gs * dbits_dp * dp_db * scale;
        }
        self.accum(grads, v, gv);
        self.accum(grads, mu, gmu);
        self.accum(grads, log_b, glb);
    }
}

fn grads_bias(graph: &Graph, grads: &mut [Option<Matrix>], g: &Matrix, b: NodeId) {
    let mut gb = Matrix::zeros(1, g.cols);
    for i in 0..g.rows {
        for (d, s) in gb.data.iter_mut().zip(g.row(i)) {
            *d += s;
        }
    }
    graph.accum(grads, b, gb);
}

fn transform_rows(data: &[f64], m: &[[f64; 3]; 3], scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for (src, dst) in data.chunks_exact(3).zip(out.chunks_exact_mut(3)) {
        for r in 0..3 {
            dst[r] = scale * (m[r][0] * src[0] + m[r][1] * src[1] + m[r][2] * src[2]);
        }
    }
    out
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln σ(l) + (1-y) ln(1-σ(l))]` in the overflow-free form.
#[inline]
pub(crate) fn bce_term(l: f64, y: f64) -> f64 {
    l.max(0.0) - l * y + (-l.abs()).exp().ln_1p()
}
