//! Parameter storage and the network building blocks.
//!
//! Layers hold indices into a [`ParamStore`] rather than tensors, so the
//! model struct stays borrow-friendly: forward passes bind parameters onto a
//! tape on demand and remember the binding for the optimizer.

use crate::error::{Error, Result};
use crate::tensor::{BnState, ConvGeom, Scalar, Tape, Tensor, Var};
use rand::Rng;

pub type SlotId = usize;
pub type BnId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
    BnGamma,
    BnBeta,
}

impl ParamKind {
    /// Weight decay applies to convolution weights only.
    pub fn decays(&self) -> bool {
        matches!(self, ParamKind::Weight)
    }
}

#[derive(Debug, Clone)]
pub struct Slot<E: Scalar> {
    pub name: String,
    pub value: Tensor<E>,
    pub kind: ParamKind,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore<E: Scalar> {
    pub slots: Vec<Slot<E>>,
}

impl<E: Scalar> ParamStore<E> {
    pub fn new() -> Self {
        ParamStore { slots: Vec::new() }
    }

    pub fn add(&mut self, name: String, value: Tensor<E>, kind: ParamKind) -> SlotId {
        self.slots.push(Slot { name, value, kind });
        self.slots.len() - 1
    }

    pub fn total_elements(&self) -> usize {
        self.slots.iter().map(|s| s.value.len()).sum()
    }
}

#[derive(Debug, Clone, Default)]
pub struct BnStore<E: Scalar> {
    pub names: Vec<String>,
    pub states: Vec<BnState<E>>,
}

impl<E: Scalar> BnStore<E> {
    pub fn new() -> Self {
        BnStore { names: Vec::new(), states: Vec::new() }
    }

    pub fn add(&mut self, name: String, channels: usize) -> BnId {
        self.names.push(name);
        self.states.push(BnState::new(channels));
        self.states.len() - 1
    }
}

/// Mutable (training) or shared (inference) access to running statistics.
pub enum BnAccess<'a, E: Scalar> {
    Train(&'a mut BnStore<E>),
    Eval(&'a BnStore<E>),
}

/// One forward pass in flight: the tape, parameter bindings, and mode.
pub struct Fwd<'a, E: Scalar> {
    pub tape: &'a mut Tape<E>,
    pub params: &'a ParamStore<E>,
    pub bn: BnAccess<'a, E>,
    /// Slot id -> tape var, filled lazily; handed to the optimizer afterwards.
    pub bound: &'a mut Vec<Option<Var>>,
    pub with_grad: bool,
}

impl<'a, E: Scalar> Fwd<'a, E> {
    pub fn param(&mut self, id: SlotId) -> Var {
        if let Some(v) = self.bound[id] {
            return v;
        }
        let v = self.tape.leaf(self.params.slots[id].value.clone(), self.with_grad);
        self.bound[id] = Some(v);
        v
    }
}

/// Convolution or transposed convolution layer.
#[derive(Debug, Clone)]
pub struct Conv {
    pub w: SlotId,
    pub b: Option<SlotId>,
    pub geom: ConvGeom,
    pub transpose: bool,
    pub output_padding: usize,
}

impl Conv {
    pub fn forward<E: Scalar>(&self, f: &mut Fwd<'_, E>, x: Var) -> Result<Var> {
        let w = f.param(self.w);
        let b = self.b.map(|id| f.param(id));
        if self.transpose {
            f.tape.conv2d_transpose(x, w, b, self.geom, self.output_padding)
        } else {
            f.tape.conv2d(x, w, b, self.geom)
        }
    }
}

/// Batch normalization layer.
#[derive(Debug, Clone)]
pub struct Bn {
    pub gamma: SlotId,
    pub beta: SlotId,
    pub state: BnId,
}

impl Bn {
    pub fn forward<E: Scalar>(&self, f: &mut Fwd<'_, E>, x: Var) -> Result<Var> {
        let gamma = f.param(self.gamma);
        let beta = f.param(self.beta);
        match &mut f.bn {
            BnAccess::Train(store) => {
                f.tape.batch_norm_train(x, gamma, beta, &mut store.states[self.state])
            }
            BnAccess::Eval(store) => {
                f.tape.batch_norm_infer(x, gamma, beta, &store.states[self.state])
            }
        }
    }
}

/// Registers parameters with He-style initialization under hierarchical names.
pub struct Builder<'a, E: Scalar, R: Rng> {
    pub params: &'a mut ParamStore<E>,
    pub bn: &'a mut BnStore<E>,
    pub rng: &'a mut R,
}

impl<'a, E: Scalar, R: Rng> Builder<'a, E, R> {
    /// Convolution kernel [c_out, c_in, k, k]; bias-free unless requested
    /// (batch norm subsumes biases elsewhere).
    pub fn conv(
        &mut self,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        geom: ConvGeom,
        bias: bool,
    ) -> Conv {
        let fan_in = (c_in * k * k) as f64;
        let w = Tensor::randn([c_out, c_in, k, k], (2.0 / fan_in).sqrt(), self.rng);
        let w = self.params.add(format!("{name}.w"), w, ParamKind::Weight);
        let b = bias.then(|| {
            self.params.add(format!("{name}.b"), Tensor::zeros([1, c_out, 1, 1]), ParamKind::Bias)
        });
        Conv { w, b, geom, transpose: false, output_padding: 0 }
    }

    /// Transposed convolution kernel [c_in, c_out, k, k] (maps c_in -> c_out).
    pub fn deconv(
        &mut self,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        geom: ConvGeom,
        output_padding: usize,
        bias: bool,
    ) -> Conv {
        let fan = (c_out * k * k) as f64;
        let w = Tensor::randn([c_in, c_out, k, k], (2.0 / fan).sqrt(), self.rng);
        let w = self.params.add(format!("{name}.w"), w, ParamKind::Weight);
        let b = bias.then(|| {
            self.params.add(format!("{name}.b"), Tensor::zeros([1, c_out, 1, 1]), ParamKind::Bias)
        });
        Conv { w, b, geom, transpose: true, output_padding }
    }

    pub fn bn(&mut self, name: &str, channels: usize) -> Bn {
        let gamma = self.params.add(
            format!("{name}.gamma"),
            Tensor::filled([1, channels, 1, 1], E::ONE),
            ParamKind::BnGamma,
        );
        let beta = self.params.add(
            format!("{name}.beta"),
            Tensor::zeros([1, channels, 1, 1]),
            ParamKind::BnBeta,
        );
        let state = self.bn.add(name.to_string(), channels);
        Bn { gamma, beta, state }
    }
}

/// Residual convolutional unit: relu(bn(conv(relu(bn(conv x)))) + shortcut x),
/// with a projection shortcut when channels or stride change.
#[derive(Debug, Clone)]
pub struct Rcu {
    pub conv1: Conv,
    pub bn1: Bn,
    pub conv2: Conv,
    pub bn2: Bn,
    pub shortcut: Option<(Conv, Bn)>,
}

impl Rcu {
    pub fn build<E: Scalar, R: Rng>(
        b: &mut Builder<'_, E, R>,
        name: &str,
        c_in: usize,
        c_out: usize,
        stride: usize,
    ) -> Self {
        let geom1 = ConvGeom { stride, padding: 1, dilation: 1 };
        let geom2 = ConvGeom { stride: 1, padding: 1, dilation: 1 };
        let conv1 = b.conv(&format!("{name}.conv1"), c_in, c_out, 3, geom1, false);
        let bn1 = b.bn(&format!("{name}.bn1"), c_out);
        let conv2 = b.conv(&format!("{name}.conv2"), c_out, c_out, 3, geom2, false);
        let bn2 = b.bn(&format!("{name}.bn2"), c_out);
        let shortcut = (c_in != c_out || stride != 1).then(|| {
            let geom = ConvGeom { stride, padding: 1, dilation: 1 };
            let conv = b.conv(&format!("{name}.proj"), c_in, c_out, 3, geom, false);
            let bn = b.bn(&format!("{name}.proj_bn"), c_out);
            (conv, bn)
        });
        Rcu { conv1, bn1, conv2, bn2, shortcut }
    }

    pub fn forward<E: Scalar>(&self, f: &mut Fwd<'_, E>, x: Var) -> Result<Var> {
        let h = self.conv1.forward(f, x)?;
        let h = self.bn1.forward(f, h)?;
        let h = f.tape.relu(h);
        let h = self.conv2.forward(f, h)?;
        let h = self.bn2.forward(f, h)?;
        let sc = match &self.shortcut {
            Some((conv, bn)) => {
                let s = conv.forward(f, x)?;
                bn.forward(f, s)?
            }
            None => x,
        };
        let sum = f.tape.add(h, sc)?;
        Ok(f.tape.relu(sum))
    }
}

/// Input-aware path: repeated stride-2 average pooling of the input image
/// down to the block resolution, a 1x1 projection to the block width, and a
/// 3x3 feature convolution. The block output is x_block + path(image).
#[derive(Debug, Clone)]
pub struct IaPath {
    pub pools: usize,
    pub proj: Conv,
    pub proj_bn: Bn,
    pub feat: Conv,
    pub feat_bn: Bn,
}

impl IaPath {
    pub fn build<E: Scalar, R: Rng>(
        b: &mut Builder<'_, E, R>,
        name: &str,
        image_channels: usize,
        block_channels: usize,
        pools: usize,
    ) -> Self {
        let proj =
            b.conv(&format!("{name}.proj"), image_channels, block_channels, 1, ConvGeom::unit(), false);
        let proj_bn = b.bn(&format!("{name}.proj_bn"), block_channels);
        let feat = b.conv(
            &format!("{name}.feat"),
            block_channels,
            block_channels,
            3,
            ConvGeom { stride: 1, padding: 1, dilation: 1 },
            false,
        );
        let feat_bn = b.bn(&format!("{name}.feat_bn"), block_channels);
        IaPath { pools, proj, proj_bn, feat, feat_bn }
    }

    pub fn forward<E: Scalar>(&self, f: &mut Fwd<'_, E>, image: Var) -> Result<Var> {
        let mut h = image;
        for _ in 0..self.pools {
            h = f.tape.avg_pool3(h, 2)?;
        }
        let h2 = self.proj.forward(f, h)?;
        let h3 = self.proj_bn.forward(f, h2)?;
        let h4 = f.tape.relu(h3);
        let h5 = self.feat.forward(f, h4)?;
        let h6 = self.feat_bn.forward(f, h5)?;
        Ok(f.tape.relu(h6))
    }

    /// The input-aware sum: x_block + path(image). Shapes must already agree.
    pub fn inject<E: Scalar>(&self, f: &mut Fwd<'_, E>, x_block: Var, image: Var) -> Result<Var> {
        let p = self.forward(f, image)?;
        f.tape.add(x_block, p)
    }
}

/// How an encoder output reaches a decoder block.
#[derive(Debug, Clone)]
pub enum LinkOp {
    /// Mirror-level skip with matching width: plain element-wise sum.
    Identity,
    /// 1x1 projection to the block width.
    Projection(Conv),
}

#[derive(Debug, Clone)]
pub struct Link {
    pub from_level: usize,
    /// Stride of the spatial matching pool (1 = native resolution).
    pub pool_stride: usize,
    pub op: LinkOp,
}

/// One decoding block: a 3x3 transposed convolution on the previous decoder
/// output plus the configured encoder links.
#[derive(Debug, Clone)]
pub struct DecoderBlock {
    pub level: usize,
    pub fd: Conv,
    pub fd_bn: Bn,
    pub links: Vec<Link>,
}

impl DecoderBlock {
    /// `encoder_outputs[i]` is the output of encoder level i+1 at native
    /// resolution.
    pub fn forward<E: Scalar>(
        &self,
        f: &mut Fwd<'_, E>,
        prev_decoder: Var,
        encoder_outputs: &[Var],
    ) -> Result<Var> {
        let h = self.fd.forward(f, prev_decoder)?;
        let h = self.fd_bn.forward(f, h)?;
        let mut acc = f.tape.relu(h);
        for link in &self.links {
            let mut t = encoder_outputs[link.from_level - 1];
            if link.pool_stride > 1 {
                t = f.tape.avg_pool3(t, link.pool_stride)?;
            }
            let t = match &link.op {
                LinkOp::Identity => t,
                LinkOp::Projection(conv) => conv.forward(f, t)?,
            };
            if f.tape.value(t).shape != f.tape.value(acc).shape {
                return Err(Error::internal(format!(
                    "decoder block {}: link from level {} produced {:?}, expected {:?}",
                    self.level,
                    link.from_level,
                    f.tape.value(t).shape,
                    f.tape.value(acc).shape
                )));
            }
            acc = f.tape.add(acc, t)?;
        }
        Ok(acc)
    }
}

/// Class-width bottom-up refinement: 1x1 projections of every encoder level
/// combined through 1x1 stride-2 transposed convolutions. Purely linear.
#[derive(Debug, Clone)]
pub struct SparseDecoder {
    pub projections: Vec<Conv>,
    pub upsamples: Vec<Conv>,
    pub final_upsample: Conv,
}

impl SparseDecoder {
    pub fn build<E: Scalar, R: Rng>(
        b: &mut Builder<'_, E, R>,
        name: &str,
        enc_widths: &[usize],
        num_classes: usize,
    ) -> Self {
        let levels = enc_widths.len();
        let projections = enc_widths
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                b.conv(&format!("{name}.proj{}", i + 1), c, num_classes, 1, ConvGeom::unit(), true)
            })
            .collect();
        let up_geom = ConvGeom { stride: 2, padding: 0, dilation: 1 };
        let upsamples = (1..levels)
            .map(|l| {
                b.deconv(&format!("{name}.up{l}"), num_classes, num_classes, 1, up_geom, 1, true)
            })
            .collect();
        let final_upsample =
            b.deconv(&format!("{name}.up_out"), num_classes, num_classes, 1, up_geom, 1, true);
        SparseDecoder { projections, upsamples, final_upsample }
    }

    pub fn forward<E: Scalar>(&self, f: &mut Fwd<'_, E>, encoder_outputs: &[Var]) -> Result<Var> {
        let levels = encoder_outputs.len();
        let mut s = self.projections[levels - 1].forward(f, encoder_outputs[levels - 1])?;
        for l in (0..levels - 1).rev() {
            let p = self.projections[l].forward(f, encoder_outputs[l])?;
            let up = self.upsamples[l].forward(f, s)?;
            s = f.tape.add(p, up)?;
        }
        self.final_upsample.forward(f, s)
    }
}

/// Multi-resolution fusion. The caller sums the aligned instance outputs;
/// this block extracts dense features from the sum.
#[derive(Debug, Clone)]
pub struct FusionBlock {
    pub spec: super::receptive::FusionSpec,
    /// One (conv, bn) per spec layer; the bn is absent on logit layers.
    pub layers: Vec<(Conv, Option<Bn>)>,
}

impl FusionBlock {
    pub fn build<E: Scalar, R: Rng>(
        b: &mut Builder<'_, E, R>,
        name: &str,
        spec: super::receptive::FusionSpec,
        channels: usize,
    ) -> Self {
        let n = spec.layers.len();
        let layers = spec
            .layers
            .iter()
            .enumerate()
            .map(|(i, &(k, dilation))| {
                let geom = ConvGeom { stride: 1, padding: dilation, dilation };
                // Parallel branches and the last sequential layer emit logits:
                // bias instead of batch norm.
                let logits = spec.parallel || i == n - 1;
                let conv = b.conv(&format!("{name}.conv{i}"), channels, channels, k, geom, logits);
                let bn = (!logits).then(|| b.bn(&format!("{name}.bn{i}"), channels));
                (conv, bn)
            })
            .collect();
        FusionBlock { spec, layers }
    }

    pub fn forward<E: Scalar>(&self, f: &mut Fwd<'_, E>, summed: Var) -> Result<Var> {
        if self.spec.parallel {
            let mut acc: Option<Var> = None;
            for (conv, _) in &self.layers {
                let y = conv.forward(f, summed)?;
                acc = Some(match acc {
                    Some(a) => f.tape.add(a, y)?,
                    None => y,
                });
            }
            Ok(acc.expect("fusion spec has at least one layer"))
        } else {
            let mut a = summed;
            for (conv, bn) in &self.layers {
                let mut u = conv.forward(f, a)?;
                if let Some(bn) = bn {
                    let h = bn.forward(f, u)?;
                    u = f.tape.relu(h);
                }
                a = if self.spec.identity_links { f.tape.add(u, a)? } else { u };
            }
            Ok(a)
        }
    }

    /// Reset every convolution to a Dirac kernel (and biases to zero), making
    /// each layer an identity map in inference mode. Used by tests.
    pub fn identity_init<E: Scalar>(&self, params: &mut ParamStore<E>) {
        for (conv, _) in &self.layers {
            let slot = &mut params.slots[conv.w];
            let [co, ci, k, _] = slot.value.shape;
            slot.value = Tensor::zeros([co, ci, k, k]);
            for c in 0..co.min(ci) {
                *slot.value.at_mut(c, c, k / 2, k / 2) = E::ONE;
            }
            if let Some(b) = conv.b {
                let bslot = &mut params.slots[b];
                bslot.value = Tensor::zeros(bslot.value.shape);
            }
        }
    }
}
