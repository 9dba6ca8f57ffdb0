//! The recording tape: forward ops append nodes, `backward` replays them.
//!
//! A tape owns every intermediate value of one forward pass, so a fresh tape
//! per training step is the intended usage. Nodes only reference earlier
//! nodes, which makes reverse insertion order a valid reverse topological
//! order. Tapes are single-threaded by design; independent tapes may run on
//! separate threads.

use super::kernels;
use super::{ConvGeom, Scalar, Tensor};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Running statistics of one batch-norm layer. Lives with the model
/// parameters, outside the tape; training-mode forwards update it in place.
#[derive(Debug, Clone, PartialEq)]
pub struct BnState<E: Scalar> {
    pub mean: Vec<E>,
    pub var: Vec<E>,
}

impl<E: Scalar> BnState<E> {
    pub fn new(channels: usize) -> Self {
        BnState { mean: vec![E::ZERO; channels], var: vec![E::ONE; channels] }
    }
}

/// Batch of dense label targets for the weighted cross-entropy loss.
#[derive(Debug, Clone)]
pub struct WceTargets {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl WceTargets {
    pub fn from_masks(masks: &[crate::mask::LabelMask]) -> Result<Self> {
        let first = masks
            .first()
            .ok_or_else(|| Error::data("empty target batch"))?;
        let (h, w) = (first.height, first.width);
        let mut data = Vec::with_capacity(masks.len() * h * w);
        for m in masks {
            if m.height != h || m.width != w {
                return Err(Error::data("target masks disagree on size"));
            }
            data.extend_from_slice(&m.data);
        }
        Ok(WceTargets { batch: masks.len(), height: h, width: w, data })
    }
}

enum Op<E: Scalar> {
    Leaf,
    Relu { x: Var },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, c: E },
    SumAll { x: Var },
    Conv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Deconv { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    AvgPool { x: Var, stride: usize },
    BatchNorm { x: Var, gamma: Var, beta: Var, mean: Vec<E>, var: Vec<E>, batch_stats: bool },
    Crop { x: Var, oy: usize, ox: usize },
    Wce { logits: Var, probs: Tensor<E>, targets: WceTargets, weights: Vec<E>, ignore: Option<u8>, count: usize },
}

struct Node<E: Scalar> {
    value: Tensor<E>,
    grad: Option<Tensor<E>>,
    requires: bool,
    op: Op<E>,
}

pub struct Tape<E: Scalar> {
    nodes: Vec<Node<E>>,
}

impl<E: Scalar> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Scalar> Tape<E> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<E>, requires: bool, op: Op<E>) -> Var {
        self.nodes.push(Node { value, grad: None, requires, op });
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor<E>, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<E>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.max(E::ZERO));
        let requires = self.requires(x);
        self.push(value, requires, Op::Relu { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape != self.value(b).shape {
            return Err(Error::config(format!(
                "add requires identical shapes, got {:?} and {:?}",
                self.value(a).shape,
                self.value(b).shape
            )));
        }
        let mut value = self.value(a).clone();
        for (v, &u) in value.data.iter_mut().zip(&self.value(b).data) {
            *v += u;
        }
        let requires = self.requires(a) || self.requires(b);
        Ok(self.push(value, requires, Op::Add { a, b }))
    }

    /// Left fold of element-wise sums.
    pub fn add_many(&mut self, vars: &[Var]) -> Result<Var> {
        let mut it = vars.iter();
        let mut acc = *it
            .next()
            .ok_or_else(|| Error::internal("add_many over empty list"))?;
        for &v in it {
            acc = self.add(acc, v)?;
        }
        Ok(acc)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape != self.value(b).shape {
            return Err(Error::config("mul requires identical shapes"));
        }
        let mut value = self.value(a).clone();
        for (v, &u) in value.data.iter_mut().zip(&self.value(b).data) {
            *v = *v * u;
        }
        let requires = self.requires(a) || self.requires(b);
        Ok(self.push(value, requires, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = E::from_f64(c);
        let value = self.value(x).map(|v| v * c);
        let requires = self.requires(x);
        self.push(value, requires, Op::Scale { x, c })
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: E = self.value(x).data.iter().copied().sum();
        let requires = self.requires(x);
        self.push(Tensor::scalar(s), requires, Op::SumAll { x })
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, geom: ConvGeom) -> Result<Var> {
        let bias_data = b.map(|bv| self.value(bv).data.clone());
        let value =
            kernels::conv2d_forward(self.value(x), self.value(w), bias_data.as_deref(), geom)?;
        let requires =
            self.requires(x) || self.requires(w) || b.is_some_and(|bv| self.requires(bv));
        Ok(self.push(value, requires, Op::Conv { x, w, b, geom }))
    }

    pub fn conv2d_transpose(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
        output_padding: usize,
    ) -> Result<Var> {
        let bias_data = b.map(|bv| self.value(bv).data.clone());
        let value = kernels::deconv2d_forward(
            self.value(x),
            self.value(w),
            bias_data.as_deref(),
            geom,
            output_padding,
        )?;
        let requires =
            self.requires(x) || self.requires(w) || b.is_some_and(|bv| self.requires(bv));
        Ok(self.push(value, requires, Op::Deconv { x, w, b, geom }))
    }

    pub fn avg_pool3(&mut self, x: Var, stride: usize) -> Result<Var> {
        let value = kernels::avg_pool3_forward(self.value(x), stride)?;
        let requires = self.requires(x);
        Ok(self.push(value, requires, Op::AvgPool { x, stride }))
    }

    /// Batch normalization in training mode: normalizes with batch statistics
    /// and folds them into the running `state` at momentum 0.1.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &mut BnState<E>,
    ) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape;
        self.check_bn_channels(x, gamma, beta, state.mean.len())?;
        if n * h * w == 0 {
            return Err(Error::config("batch norm over an empty batch"));
        }
        let m = (n * h * w) as f64;
        let (mean, var) = {
            let xv = self.value(x);
            let mut mean = vec![E::ZERO; c];
            let mut var = vec![E::ZERO; c];
            for bn in 0..n {
                for ch in 0..c {
                    let plane = &xv.data[((bn * c + ch) * h * w)..((bn * c + ch + 1) * h * w)];
                    mean[ch] += plane.iter().copied().sum();
                }
            }
            for v in mean.iter_mut() {
                *v = *v / E::from_f64(m);
            }
            for bn in 0..n {
                for ch in 0..c {
                    let plane = &xv.data[((bn * c + ch) * h * w)..((bn * c + ch + 1) * h * w)];
                    let mu = mean[ch];
                    var[ch] += plane.iter().map(|&v| (v - mu) * (v - mu)).sum();
                }
            }
            for v in var.iter_mut() {
                *v = *v / E::from_f64(m);
            }
            let mom = E::from_f64(BN_MOMENTUM);
            let keep = E::from_f64(1.0 - BN_MOMENTUM);
            for ch in 0..c {
                state.mean[ch] = keep * state.mean[ch] + mom * mean[ch];
                state.var[ch] = keep * state.var[ch] + mom * var[ch];
            }
            (mean, var)
        };
        self.batch_norm_with_stats(x, gamma, beta, mean, var, true)
    }

    /// Batch normalization in inference mode: reads the running statistics
    /// without touching them.
    pub fn batch_norm_infer(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &BnState<E>,
    ) -> Result<Var> {
        self.check_bn_channels(x, gamma, beta, state.mean.len())?;
        self.batch_norm_with_stats(x, gamma, beta, state.mean.clone(), state.var.clone(), false)
    }

    fn check_bn_channels(&self, x: Var, gamma: Var, beta: Var, state_len: usize) -> Result<()> {
        let c = self.value(x).shape[1];
        if self.value(gamma).len() != c || self.value(beta).len() != c || state_len != c {
            return Err(Error::config(format!(
                "batch norm channel mismatch: input has {c} channels, gamma {}, beta {}, state {}",
                self.value(gamma).len(),
                self.value(beta).len(),
                state_len
            )));
        }
        Ok(())
    }

    fn batch_norm_with_stats(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<E>,
        var: Vec<E>,
        batch_stats: bool,
    ) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape;
        let eps = E::from_f64(BN_EPS);
        let mut value = Tensor::zeros([n, c, h, w]);
        {
            let xv = self.value(x);
            let g = self.value(gamma);
            let bt = self.value(beta);
            for bn in 0..n {
                for ch in 0..c {
                    let inv = E::ONE / (var[ch] + eps).sqrt();
                    let (mu, ga, be) = (mean[ch], g.data[ch], bt.data[ch]);
                    let src = &xv.data[((bn * c + ch) * h * w)..((bn * c + ch + 1) * h * w)];
                    let dst =
                        &mut value.data[((bn * c + ch) * h * w)..((bn * c + ch + 1) * h * w)];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = (s - mu) * inv * ga + be;
                    }
                }
            }
        }
        let requires = self.requires(x) || self.requires(gamma) || self.requires(beta);
        Ok(self.push(value, requires, Op::BatchNorm { x, gamma, beta, mean, var, batch_stats }))
    }

    /// Centered spatial crop to (th, tw). Offsets must be integral, i.e. the
    /// size difference must be even on both axes.
    pub fn central_crop(&mut self, x: Var, th: usize, tw: usize) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape;
        if th > h || tw > w {
            return Err(Error::config(format!(
                "crop target {th}x{tw} exceeds source {h}x{w}"
            )));
        }
        if (h - th) % 2 != 0 || (w - tw) % 2 != 0 {
            return Err(Error::config(format!(
                "crop offsets must be centered: source {h}x{w} and target {th}x{tw} differ by an odd margin"
            )));
        }
        let (oy, ox) = ((h - th) / 2, (w - tw) / 2);
        let mut value = Tensor::zeros([n, c, th, tw]);
        {
            let xv = self.value(x);
            for bn in 0..n {
                for ch in 0..c {
                    for y in 0..th {
                        let src = ((bn * c + ch) * h + (y + oy)) * w + ox;
                        let dst = ((bn * c + ch) * th + y) * tw;
                        value.data[dst..dst + tw]
                            .copy_from_slice(&xv.data[src..src + tw]);
                    }
                }
            }
        }
        let requires = self.requires(x);
        Ok(self.push(value, requires, Op::Crop { x, oy, ox }))
    }

    /// Weighted softmax cross-entropy, averaged over non-ignored pixels:
    /// loss = mean_p w[t_p] * (-ln softmax(logits_p)[t_p]).
    pub fn wce_loss(
        &mut self,
        logits: Var,
        targets: &WceTargets,
        class_weights: &[E],
        ignore: Option<u8>,
    ) -> Result<Var> {
        let [n, c, h, w] = self.value(logits).shape;
        if targets.batch != n || targets.height != h || targets.width != w {
            return Err(Error::config(format!(
                "targets {}x{}x{} do not match logits {n}x{h}x{w}",
                targets.batch, targets.height, targets.width
            )));
        }
        if class_weights.len() != c {
            return Err(Error::config(format!(
                "{} class weights for {c} classes",
                class_weights.len()
            )));
        }
        let lv = self.value(logits);
        let mut probs = Tensor::zeros([n, c, h, w]);
        let mut loss = 0.0f64;
        let mut count = 0usize;
        let plane = h * w;
        for bn in 0..n {
            for y in 0..h {
                for x in 0..w {
                    let t = targets.data[(bn * h + y) * w + x];
                    let ignored = ignore == Some(t);
                    if !ignored && t as usize >= c {
                        return Err(Error::data(format!(
                            "label {t} out of range 0..{c} at image {bn}, pixel ({y}, {x})"
                        )));
                    }
                    // Stable softmax over the channel axis.
                    let base = (bn * c) * plane + y * w + x;
                    let mut mx = lv.data[base];
                    for ch in 1..c {
                        mx = mx.max(lv.data[base + ch * plane]);
                    }
                    let mut denom = E::ZERO;
                    for ch in 0..c {
                        let e = (lv.data[base + ch * plane] - mx).exp();
                        probs.data[base + ch * plane] = e;
                        denom += e;
                    }
                    for ch in 0..c {
                        probs.data[base + ch * plane] =
                            probs.data[base + ch * plane] / denom;
                    }
                    if !ignored {
                        let p = probs.data[base + t as usize * plane].to_f64();
                        loss += class_weights[t as usize].to_f64() * (-p.max(1e-300).ln());
                        count += 1;
                    }
                }
            }
        }
        if count == 0 {
            return Err(Error::data("all pixels ignored: loss undefined"));
        }
        let value = Tensor::scalar(E::from_f64(loss / count as f64));
        let requires = self.requires(logits);
        Ok(self.push(
            value,
            requires,
            Op::Wce {
                logits,
                probs,
                targets: targets.clone(),
                weights: class_weights.to_vec(),
                ignore,
                count,
            },
        ))
    }

    fn accumulate(grads: &mut [Option<Tensor<E>>], v: Var, delta: Tensor<E>) {
        match &mut grads[v.0] {
            Some(g) => {
                for (gv, dv) in g.data.iter_mut().zip(&delta.data) {
                    *gv += *dv;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    /// Reverse pass from a scalar loss. Contributions add into any gradients
    /// already present, so repeated calls without a reset accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::config(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape
            )));
        }
        let mut pass: Vec<Option<Tensor<E>>> = (0..self.nodes.len()).map(|_| None).collect();
        pass[loss.0] = Some(Tensor::scalar(E::ONE));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires {
                continue;
            }
            let Some(g) = pass[i].take() else { continue };
            self.dispatch(i, &g, &mut pass)?;
            pass[i] = Some(g);
        }
        for (node, g) in self.nodes.iter_mut().zip(pass) {
            if let (true, Some(g)) = (node.requires, g) {
                match &mut node.grad {
                    Some(acc) => {
                        for (av, gv) in acc.data.iter_mut().zip(&g.data) {
                            *av += *gv;
                        }
                    }
                    slot => *slot = Some(g),
                }
            }
        }
        Ok(())
    }

    fn dispatch(
        &self,
        i: usize,
        g: &Tensor<E>,
        pass: &mut [Option<Tensor<E>>],
    ) -> Result<()> {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Relu { x } => {
                if self.requires(*x) {
                    let xv = self.value(*x);
                    let mut d = g.clone();
                    for (dv, &v) in d.data.iter_mut().zip(&xv.data) {
                        if !(v > E::ZERO) {
                            *dv = E::ZERO;
                        }
                    }
                    Self::accumulate(pass, *x, d);
                }
            }
            Op::Add { a, b } => {
                if self.requires(*a) {
                    Self::accumulate(pass, *a, g.clone());
                }
                if self.requires(*b) {
                    Self::accumulate(pass, *b, g.clone());
                }
            }
            Op::Mul { a, b } => {
                for (this, other) in [(*a, *b), (*b, *a)] {
                    if self.requires(this) {
                        let mut d = g.clone();
                        for (dv, &ov) in d.data.iter_mut().zip(&self.value(other).data) {
                            *dv = *dv * ov;
                        }
                        Self::accumulate(pass, this, d);
                    }
                }
            }
            Op::Scale { x, c } => {
                if self.requires(*x) {
                    Self::accumulate(pass, *x, g.map(|v| v * *c));
                }
            }
            Op::SumAll { x } => {
                if self.requires(*x) {
                    let gv = g.data[0];
                    Self::accumulate(pass, *x, Tensor::filled(self.value(*x).shape, gv));
                }
            }
            Op::Conv { x, w, b, geom } => {
                let grads = kernels::conv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    *geom,
                    self.requires(*x),
                    self.requires(*w),
                    b.is_some_and(|bv| self.requires(bv)),
                )?;
                if let Some(dx) = grads.dx {
                    Self::accumulate(pass, *x, dx);
                }
                if let Some(dw) = grads.dw {
                    Self::accumulate(pass, *w, dw);
                }
                if let (Some(bv), Some(db)) = (b, grads.db) {
                    let shape = self.value(*bv).shape;
                    Self::accumulate(pass, *bv, Tensor { shape, data: db });
                }
            }
            Op::Deconv { x, w, b, geom } => {
                let grads = kernels::deconv2d_backward(
                    self.value(*x),
                    self.value(*w),
                    g,
                    *geom,
                    self.requires(*x),
                    self.requires(*w),
                    b.is_some_and(|bv| self.requires(bv)),
                )?;
                if let Some(dx) = grads.dx {
                    Self::accumulate(pass, *x, dx);
                }
                if let Some(dw) = grads.dw {
                    Self::accumulate(pass, *w, dw);
                }
                if let (Some(bv), Some(db)) = (b, grads.db) {
                    let shape = self.value(*bv).shape;
                    Self::accumulate(pass, *bv, Tensor { shape, data: db });
                }
            }
            Op::AvgPool { x, stride } => {
                if self.requires(*x) {
                    let dx = kernels::avg_pool3_backward(self.value(*x).shape, g, *stride);
                    Self::accumulate(pass, *x, dx);
                }
            }
            Op::BatchNorm { x, gamma, beta, mean, var, batch_stats } => {
                self.batch_norm_backward(*x, *gamma, *beta, mean, var, *batch_stats, g, pass);
            }
            Op::Crop { x, oy, ox } => {
                if self.requires(*x) {
                    let [n, c, h, w] = self.value(*x).shape;
                    let [_, _, th, tw] = g.shape;
                    let mut dx = Tensor::zeros([n, c, h, w]);
                    for bn in 0..n {
                        for ch in 0..c {
                            for y in 0..th {
                                let dst = ((bn * c + ch) * h + (y + oy)) * w + ox;
                                let src = ((bn * c + ch) * th + y) * tw;
                                dx.data[dst..dst + tw]
                                    .copy_from_slice(&g.data[src..src + tw]);
                            }
                        }
                    }
                    Self::accumulate(pass, *x, dx);
                }
            }
            Op::Wce { logits, probs, targets, weights, ignore, count } => {
                if self.requires(*logits) {
                    let [n, c, h, w] = probs.shape;
                    let plane = h * w;
                    let scale = g.data[0] / E::from_f64(*count as f64);
                    let mut d = Tensor::zeros(probs.shape);
                    for bn in 0..n {
                        for y in 0..h {
                            for x in 0..w {
                                let t = targets.data[(bn * h + y) * w + x];
                                if *ignore == Some(t) {
                                    continue;
                                }
                                let wt = weights[t as usize] * scale;
                                let base = (bn * c) * plane + y * w + x;
                                for ch in 0..c {
                                    let p = probs.data[base + ch * plane];
                                    let ind =
                                        if ch == t as usize { E::ONE } else { E::ZERO };
                                    d.data[base + ch * plane] = wt * (p - ind);
                                }
                            }
                        }
                    }
                    Self::accumulate(pass, *logits, d);
                }
            }
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn batch_norm_backward(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[E],
        var: &[E],
        batch_stats: bool,
        g: &Tensor<E>,
        pass: &mut [Option<Tensor<E>>],
    ) {
        let [n, c, h, w] = self.value(x).shape;
        let m = E::from_f64((n * h * w) as f64);
        let eps = E::from_f64(BN_EPS);
        let xv = self.value(x);
        let gam = self.value(gamma);
        // Per-channel reductions of the upstream gradient.
        let mut sum_dy = vec![E::ZERO; c];
        let mut sum_dy_xhat = vec![E::ZERO; c];
        for bn in 0..n {
            for ch in 0..c {
                let inv = E::ONE / (var[ch] + eps).sqrt();
                let off = (bn * c + ch) * h * w;
                for j in 0..h * w {
                    let dy = g.data[off + j];
                    let xh = (xv.data[off + j] - mean[ch]) * inv;
                    sum_dy[ch] += dy;
                    sum_dy_xhat[ch] += dy * xh;
                }
            }
        }
        if self.requires(gamma) {
            let shape = self.value(gamma).shape;
            Self::accumulate(pass, gamma, Tensor { shape, data: sum_dy_xhat.clone() });
        }
        if self.requires(beta) {
            let shape = self.value(beta).shape;
            Self::accumulate(pass, beta, Tensor { shape, data: sum_dy.clone() });
        }
        if self.requires(x) {
            let mut dx = Tensor::zeros([n, c, h, w]);
            for bn in 0..n {
                for ch in 0..c {
                    let inv = E::ONE / (var[ch] + eps).sqrt();
                    let k = gam.data[ch] * inv;
                    // With running statistics the normalizer is a constant.
                    let (mean_dy, mean_dy_xhat) = if batch_stats {
                        (sum_dy[ch] / m, sum_dy_xhat[ch] / m)
                    } else {
                        (E::ZERO, E::ZERO)
                    };
                    let off = (bn * c + ch) * h * w;
                    for j in 0..h * w {
                        let dy = g.data[off + j];
                        let xh = (xv.data[off + j] - mean[ch]) * inv;
                        dx.data[off + j] = k * (dy - mean_dy - xh * mean_dy_xhat);
                    }
                }
            }
            Self::accumulate(pass, x, dx);
        }
    }

    /// Verify that every recorded value and gradient is finite.
    pub fn assert_all_finite(&self) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.value.all_finite() {
                return Err(Error::numerics(format!("non-finite value at tape node {i}")));
            }
            if let Some(g) = &node.grad {
                if !g.all_finite() {
                    return Err(Error::numerics(format!(
                        "non-finite gradient at tape node {i}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_definition() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(
            Tensor::from_vec([1, 1, 1, 3], vec![-1.0, 0.0, 2.0]).unwrap(),
            false,
        );
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data, vec![0.0, 0.0, 2.0]);
    }

    #[test]
    fn sum_backward_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::filled([1, 2, 2, 2], 3.0), true);
        let loss = tape.sum_all(x);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data, vec![1.0; 8]);
    }

    #[test]
    fn quadratic_gradient_is_x() {
        // loss = sum(x*x)/2 built from mul and scale.
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(
            Tensor::from_vec([1, 1, 1, 4], vec![1.0, -2.0, 0.5, 3.0]).unwrap(),
            true,
        );
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum_all(sq);
        let loss = tape.scale(s, 0.5);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data, vec![1.0, -2.0, 0.5, 3.0]);
    }

    #[test]
    fn add_identity_and_fanout() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::filled([1, 1, 2, 2], 2.5), true);
        let z = tape.leaf(Tensor::zeros([1, 1, 2, 2]), true);
        let y = tape.add(x, z).unwrap();
        assert_eq!(tape.value(y).data, tape.value(x).data);
        let loss = tape.sum_all(y);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data, vec![1.0; 4]);
        assert_eq!(tape.grad(z).unwrap().data, vec![1.0; 4]);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::filled([1, 1, 2, 2], 1.0), true);
        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::filled([1, 1, 1, 2], 1.0), true);
        let loss = tape.sum_all(x);
        tape.backward(loss).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).unwrap().data, vec![2.0, 2.0]);
    }

    #[test]
    fn bn_standardizes_in_training_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::randn([4, 3, 6, 6], 2.5, &mut rng), false);
        let gamma = tape.leaf(Tensor::filled([1, 3, 1, 1], 1.0), false);
        let beta = tape.leaf(Tensor::zeros([1, 3, 1, 1]), false);
        let mut state = BnState::new(3);
        let y = tape.batch_norm_train(x, gamma, beta, &mut state).unwrap();
        let yv = tape.value(y);
        for ch in 0..3 {
            let mut vals = Vec::new();
            for bn in 0..4 {
                for j in 0..36 {
                    vals.push(yv.data[(bn * 3 + ch) * 36 + j]);
                }
            }
            let m: f64 = vals.iter().sum::<f64>() / vals.len() as f64;
            let v: f64 = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / vals.len() as f64;
            assert!(m.abs() < 1e-6, "mean {m}");
            assert!((v - 1.0).abs() < 1e-4, "var {v}");
        }
        // Affine parameters shift the moments.
        let mut tape2 = Tape::<f64>::new();
        let x2 = tape2.leaf(tape.value(y).clone(), false);
        let g2 = tape2.leaf(Tensor::filled([1, 3, 1, 1], 2.0), false);
        let b2 = tape2.leaf(Tensor::filled([1, 3, 1, 1], 3.0), false);
        let mut st2 = BnState::new(3);
        let y2 = tape2.batch_norm_train(x2, g2, b2, &mut st2).unwrap();
        let n = tape2.value(y2).len() as f64;
        let mean: f64 = tape2.value(y2).data.iter().sum::<f64>() / n;
        assert!((mean - 3.0).abs() < 1e-6);
    }

    #[test]
    fn bn_is_fixed_point_on_standardized_input() {
        // Large sample, already standardized, gamma=1 beta=0: output ~ input.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let raw = Tensor::<f64>::randn([1, 1, 64, 64], 1.0, &mut rng);
        let m: f64 = raw.data.iter().sum::<f64>() / raw.len() as f64;
        let v: f64 = raw.data.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / raw.len() as f64;
        let std = v.sqrt();
        let xs = raw.map(|a| (a - m) / std);
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(xs.clone(), false);
        let gamma = tape.leaf(Tensor::filled([1, 1, 1, 1], 1.0), false);
        let beta = tape.leaf(Tensor::zeros([1, 1, 1, 1]), false);
        let mut state = BnState::new(1);
        let y = tape.batch_norm_train(x, gamma, beta, &mut state).unwrap();
        assert!(tape.value(y).max_abs_diff(&xs) < 1e-4);
    }

    #[test]
    fn wce_analytic_values() {
        // Uniform logits over 8 classes with unit weights: loss = ln 8.
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::zeros([1, 8, 2, 2]), true);
        let targets = WceTargets { batch: 1, height: 2, width: 2, data: vec![0, 1, 2, 3] };
        let loss = tape.wce_loss(logits, &targets, &[1.0; 8], None).unwrap();
        assert!((tape.value(loss).data[0] - 8.0f64.ln()).abs() < 1e-12);

        // Logits massively favoring the true class: loss -> 0.
        let mut t2 = Tape::<f64>::new();
        let mut lt = Tensor::zeros([1, 2, 1, 2]);
        *lt.at_mut(0, 0, 0, 0) = 50.0;
        *lt.at_mut(0, 1, 0, 1) = 50.0;
        let logits = t2.leaf(lt, false);
        let targets = WceTargets { batch: 1, height: 1, width: 2, data: vec![0, 1] };
        let loss = t2.wce_loss(logits, &targets, &[1.0, 1.0], None).unwrap();
        assert!(t2.value(loss).data[0] < 1e-12);

        // Two pixels with weights [0.5, 5.0]: hand-computed weighted mean.
        let mut t3 = Tape::<f64>::new();
        let lt = Tensor::from_vec([1, 2, 1, 2], vec![0.3, -0.2, -0.1, 0.4]).unwrap();
        let nll = |z_t: f64, z_o: f64| -> f64 {
            let m = z_t.max(z_o);
            -((z_t - m).exp() / ((z_t - m).exp() + (z_o - m).exp())).ln()
        };
        let expected = (0.5 * nll(0.3, -0.1) + 5.0 * nll(0.4, -0.2)) / 2.0;
        let logits = t3.leaf(lt, false);
        let targets = WceTargets { batch: 1, height: 1, width: 2, data: vec![0, 1] };
        let loss = t3.wce_loss(logits, &targets, &[0.5, 5.0], None).unwrap();
        assert!((t3.value(loss).data[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn wce_rejects_out_of_range_label_with_coordinates() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::zeros([1, 2, 2, 2]), false);
        let targets = WceTargets { batch: 1, height: 2, width: 2, data: vec![0, 1, 7, 0] };
        let err = tape.wce_loss(logits, &targets, &[1.0, 1.0], None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(1, 0)"), "{msg}");
    }

    #[test]
    fn wce_ignore_label_is_skipped() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.leaf(Tensor::zeros([1, 2, 1, 2]), true);
        let targets = WceTargets { batch: 1, height: 1, width: 2, data: vec![0, 255] };
        let loss = tape.wce_loss(logits, &targets, &[1.0, 1.0], Some(255)).unwrap();
        assert!((tape.value(loss).data[0] - 2.0f64.ln()).abs() < 1e-12);
        tape.backward(loss).unwrap();
        let g = tape.grad(logits).unwrap();
        // The ignored pixel gets zero gradient.
        assert_eq!(g.at(0, 0, 0, 1), 0.0);
        assert_eq!(g.at(0, 1, 0, 1), 0.0);
    }

    #[test]
    fn central_crop_examples() {
        let mut tape = Tape::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xt = Tensor::randn([1, 2, 8, 8], 1.0, &mut rng);
        let x = tape.leaf(xt.clone(), true);
        let y = tape.central_crop(x, 4, 4).unwrap();
        // Sum of the crop equals the sum over the centered window.
        let mut expect = 0.0;
        for c in 0..2 {
            for i in 2..6 {
                for j in 2..6 {
                    expect += xt.at(0, c, i, j);
                }
            }
        }
        let got: f64 = tape.value(y).data.iter().sum();
        assert!((got - expect).abs() < 1e-12);
        // Identity when target equals source.
        let idy = tape.central_crop(x, 8, 8).unwrap();
        assert_eq!(tape.value(idy).data, xt.data);
        // Gradient routes only through retained pixels.
        let loss = tape.sum_all(y);
        tape.backward(loss).unwrap();
        let g = tape.grad(x).unwrap();
        assert_eq!(g.at(0, 0, 0, 0), 0.0);
        assert_eq!(g.at(0, 0, 3, 3), 1.0);
        // Parity violation is a configuration error.
        assert!(tape.central_crop(x, 5, 5).is_err());
    }

    #[test]
    fn forward_backward_deterministic() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            let mut tape = Tape::<f32>::new();
            let x = tape.leaf(Tensor::randn([2, 3, 8, 8], 1.0, &mut rng), true);
            let w = tape.leaf(Tensor::randn([4, 3, 3, 3], 0.3, &mut rng), true);
            let geom = ConvGeom { stride: 1, padding: 1, dilation: 1 };
            let y = tape.conv2d(x, w, None, geom).unwrap();
            let r = tape.relu(y);
            let loss = tape.sum_all(r);
            tape.backward(loss).unwrap();
            (
                tape.value(loss).data[0],
                tape.grad(w).unwrap().data.clone(),
            )
        };
        let (l1, g1) = run();
        let (l2, g2) = run();
        assert_eq!(l1.to_bits(), l2.to_bits());
        assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
