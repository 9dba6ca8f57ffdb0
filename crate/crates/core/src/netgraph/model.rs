//! Model assembly: encoder levels, decoders, multi-resolution composition.

use super::config::{Connectivity, FusionKind, ModelConfig};
use super::layers::{
    BnAccess, BnStore, Builder, Conv, DecoderBlock, FusionBlock, Fwd, IaPath, Link, LinkOp,
    ParamStore, Rcu, SparseDecoder,
};
use super::receptive::FusionSpec;
use crate::error::{Error, Result};
use crate::tensor::{
    load_archive, save_archive, ArchiveEntry, ConvGeom, Scalar, Tape, Tensor, Var,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// One encoder level: a stride-2 projection unit, an identity unit, and an
/// optional input-aware injection on the level output.
#[derive(Debug, Clone)]
pub struct LevelBlock {
    pub rcu_down: Rcu,
    pub rcu_id: Rcu,
    pub ia: Option<IaPath>,
}

/// A single encoder-decoder instance.
#[derive(Debug, Clone)]
pub struct InstanceNet {
    pub stem: Conv,
    pub stem_bn: super::layers::Bn,
    pub levels: Vec<LevelBlock>,
    /// Decoding blocks ordered deepest first (level L down to 1).
    pub dec_blocks: Vec<DecoderBlock>,
    pub head: Conv,
    pub sparse: Option<SparseDecoder>,
}

impl InstanceNet {
    fn build<E: Scalar>(
        b: &mut Builder<'_, E, ChaCha8Rng>,
        cfg: &ModelConfig,
        prefix: &str,
    ) -> Self {
        let levels = cfg.num_levels;
        let enc = cfg.enc_widths();
        let dec = cfg.dec_widths();
        let stem = b.conv(
            &format!("{prefix}.enc.stem"),
            3,
            enc[0],
            3,
            ConvGeom { stride: 2, padding: 1, dilation: 1 },
            false,
        );
        let stem_bn = b.bn(&format!("{prefix}.enc.stem_bn"), enc[0]);
        let level_blocks = (2..=levels)
            .map(|l| {
                let name = format!("{prefix}.enc.l{l}");
                let rcu_down = Rcu::build(b, &format!("{name}.down"), enc[l - 2], enc[l - 1], 2);
                let rcu_id = Rcu::build(b, &format!("{name}.id"), enc[l - 1], enc[l - 1], 1);
                let ia = (cfg.ia_rcu && cfg.ia_levels.contains(&l)).then(|| {
                    IaPath::build(b, &format!("{name}.ia"), 3, enc[l - 1], l)
                });
                LevelBlock { rcu_down, rcu_id, ia }
            })
            .collect();

        // Decoder block at level l outputs at 1/2^l of the input. The deepest
        // block keeps the bottleneck resolution (stride-1 transition), every
        // other block upsamples by 2; a final head deconvolution restores the
        // input resolution.
        let dec_blocks = (1..=levels)
            .rev()
            .map(|l| {
                let name = format!("{prefix}.dec.l{l}");
                let width = dec[levels - l];
                let fd = if l == levels {
                    let geom = ConvGeom { stride: 1, padding: 1, dilation: 1 };
                    b.deconv(&format!("{name}.fd"), enc[levels - 1], width, 3, geom, 0, false)
                } else {
                    let geom = ConvGeom { stride: 2, padding: 1, dilation: 1 };
                    b.deconv(&format!("{name}.fd"), dec[levels - l - 1], width, 3, geom, 1, false)
                };
                let fd_bn = b.bn(&format!("{name}.fd_bn"), width);
                let links = match cfg.connectivity {
                    Connectivity::Plain => Vec::new(),
                    Connectivity::Residual => {
                        let op = if enc[l - 1] == width {
                            LinkOp::Identity
                        } else {
                            LinkOp::Projection(b.conv(
                                &format!("{name}.skip"),
                                enc[l - 1],
                                width,
                                1,
                                ConvGeom::unit(),
                                false,
                            ))
                        };
                        vec![Link { from_level: l, pool_stride: 1, op }]
                    }
                    Connectivity::Dense => (1..=l)
                        .map(|i| Link {
                            from_level: i,
                            pool_stride: 1 << (l - i),
                            op: LinkOp::Projection(b.conv(
                                &format!("{name}.link{i}"),
                                enc[i - 1],
                                width,
                                1,
                                ConvGeom::unit(),
                                false,
                            )),
                        })
                        .collect(),
                };
                DecoderBlock { level: l, fd, fd_bn, links }
            })
            .collect();

        let head = b.deconv(
            &format!("{prefix}.dec.head"),
            dec[levels - 1],
            cfg.num_classes,
            3,
            ConvGeom { stride: 2, padding: 1, dilation: 1 },
            1,
            true,
        );
        let sparse = cfg
            .dual_decoder
            .then(|| SparseDecoder::build(b, &format!("{prefix}.sparse"), &enc, cfg.num_classes));
        InstanceNet { stem, stem_bn, levels: level_blocks, dec_blocks, head, sparse }
    }

    /// Full forward of one instance: input [N, 3, S, S] -> logits
    /// [N, C, S, S] for any S divisible by 2^L.
    pub fn forward<E: Scalar>(&self, f: &mut Fwd<'_, E>, x: Var) -> Result<Var> {
        let [_, _, h, w] = f.tape.value(x).shape;
        let levels = self.levels.len() + 1;
        let div = 1usize << levels;
        if h % div != 0 || w % div != 0 {
            return Err(Error::config(format!(
                "instance input {h}x{w} is not divisible by 2^{levels} = {div}; pad the input to a multiple of {div}"
            )));
        }
        let mut enc_outs = Vec::with_capacity(levels);
        let s = self.stem.forward(f, x)?;
        let s = self.stem_bn.forward(f, s)?;
        let mut hvar = f.tape.relu(s);
        enc_outs.push(hvar);
        for block in &self.levels {
            hvar = block.rcu_down.forward(f, hvar)?;
            hvar = block.rcu_id.forward(f, hvar)?;
            if let Some(ia) = &block.ia {
                hvar = ia.inject(f, hvar, x)?;
            }
            enc_outs.push(hvar);
        }
        let mut prev = *enc_outs.last().expect("at least one encoder level");
        for block in &self.dec_blocks {
            prev = block.forward(f, prev, &enc_outs)?;
        }
        let dense_out = self.head.forward(f, prev)?;
        match &self.sparse {
            Some(sp) => {
                let sparse_out = sp.forward(f, &enc_outs)?;
                f.tape.add(dense_out, sparse_out)
            }
            None => Ok(dense_out),
        }
    }
}

/// A link from an encoder level into a decoder block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WiringRecord {
    pub encoder_level: usize,
    pub decoder_level: usize,
    pub projected: bool,
}

/// The complete network: P resolution instances plus an optional fusion block.
#[derive(Debug, Clone)]
pub struct SegmentationModel<E: Scalar> {
    pub config: ModelConfig,
    pub params: ParamStore<E>,
    pub bn: BnStore<E>,
    pub instances: Vec<InstanceNet>,
    pub fusion: Option<FusionBlock>,
}

impl<E: Scalar> SegmentationModel<E> {
    /// Instantiate a variant from its config; deterministic under `seed`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut bn = BnStore::new();
        let mut builder = Builder { params: &mut params, bn: &mut bn, rng: &mut rng };
        let instances = (1..=config.resolutions)
            .map(|p| InstanceNet::build(&mut builder, config, &format!("inst{p}")))
            .collect();
        let fusion = match config.fusion {
            FusionKind::None => None,
            kind => {
                let spec = FusionSpec::for_kind(kind)?;
                Some(FusionBlock::build(&mut builder, "fusion", spec, config.num_classes))
            }
        };
        Ok(SegmentationModel { config: config.clone(), params, bn, instances, fusion })
    }

    pub fn new_binding(&self) -> Vec<Option<Var>> {
        vec![None; self.params.slots.len()]
    }

    fn forward_core(
        instances: &[InstanceNet],
        fusion: Option<&FusionBlock>,
        f: &mut Fwd<'_, E>,
        inputs: &[Var],
    ) -> Result<Var> {
        if inputs.len() != instances.len() {
            return Err(Error::config(format!(
                "{} inputs for {} resolution instances",
                inputs.len(),
                instances.len()
            )));
        }
        let mut outputs = Vec::with_capacity(instances.len());
        for (inst, &x) in instances.iter().zip(inputs) {
            outputs.push(inst.forward(f, x)?);
        }
        if instances.len() == 1 {
            return Ok(outputs[0]);
        }
        // Align every context instance onto the target instance by central
        // cropping, then fuse the element-wise sum.
        let [_, _, th, tw] = f.tape.value(*outputs.last().unwrap()).shape;
        let mut aligned = Vec::with_capacity(outputs.len());
        for (i, &y) in outputs.iter().enumerate() {
            aligned.push(if i + 1 == outputs.len() {
                y
            } else {
                f.tape.central_crop(y, th, tw)?
            });
        }
        let summed = f.tape.add_many(&aligned)?;
        let fusion = fusion.ok_or_else(|| Error::internal("multi-resolution model without fusion"))?;
        fusion.forward(f, summed)
    }

    /// Training-mode forward on an existing tape. Returns the logits var;
    /// `bound` maps parameter slots to tape vars for the optimizer.
    pub fn forward_train(
        &mut self,
        tape: &mut Tape<E>,
        inputs: &[Var],
        bound: &mut Vec<Option<Var>>,
    ) -> Result<Var> {
        let SegmentationModel { params, bn, instances, fusion, .. } = self;
        let mut f = Fwd { tape, params, bn: BnAccess::Train(bn), bound, with_grad: true };
        Self::forward_core(instances, fusion.as_ref(), &mut f, inputs)
    }

    /// Inference-mode forward (running statistics, no gradient tracking).
    pub fn forward_infer(
        &self,
        tape: &mut Tape<E>,
        inputs: &[Var],
        bound: &mut Vec<Option<Var>>,
    ) -> Result<Var> {
        let mut f = Fwd {
            tape,
            params: &self.params,
            bn: BnAccess::Eval(&self.bn),
            bound,
            with_grad: false,
        };
        Self::forward_core(&self.instances, self.fusion.as_ref(), &mut f, inputs)
    }

    /// Inference logits for a batch of per-instance inputs. With `parallel`
    /// set, resolution instances run on separate threads and separate tapes;
    /// the result is identical to the sequential path.
    pub fn predict_logits(&self, inputs: &[Tensor<E>], parallel: bool) -> Result<Tensor<E>> {
        if inputs.len() != self.instances.len() {
            return Err(Error::config(format!(
                "{} inputs for {} resolution instances",
                inputs.len(),
                self.instances.len()
            )));
        }
        if !parallel || self.instances.len() == 1 {
            let mut tape = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), false)).collect();
            let mut bound = self.new_binding();
            let out = self.forward_infer(&mut tape, &vars, &mut bound)?;
            return Ok(tape.value(out).clone());
        }
        // Instance forwards are independent up to the fusion barrier.
        let mut outputs: Vec<Result<Tensor<E>>> = Vec::new();
        std::thread::scope(|scope| {
            let handles: Vec<_> = self
                .instances
                .iter()
                .zip(inputs)
                .map(|(inst, x)| {
                    scope.spawn(move || -> Result<Tensor<E>> {
                        let mut tape = Tape::new();
                        let xv = tape.leaf(x.clone(), false);
                        let mut bound = vec![None; self.params.slots.len()];
                        let mut f = Fwd {
                            tape: &mut tape,
                            params: &self.params,
                            bn: BnAccess::Eval(&self.bn),
                            bound: &mut bound,
                            with_grad: false,
                        };
                        let out = inst.forward(&mut f, xv)?;
                        Ok(tape.value(out).clone())
                    })
                })
                .collect();
            outputs = handles.into_iter().map(|h| h.join().expect("instance thread panicked")).collect();
        });
        let outputs: Vec<Tensor<E>> = outputs.into_iter().collect::<Result<_>>()?;
        let mut tape = Tape::new();
        let [_, _, th, tw] = outputs.last().unwrap().shape;
        let mut aligned = Vec::new();
        for (i, t) in outputs.iter().enumerate() {
            let v = tape.leaf(t.clone(), false);
            aligned.push(if i + 1 == outputs.len() { v } else { tape.central_crop(v, th, tw)? });
        }
        let summed = tape.add_many(&aligned)?;
        let mut bound = self.new_binding();
        let mut f = Fwd {
            tape: &mut tape,
            params: &self.params,
            bn: BnAccess::Eval(&self.bn),
            bound: &mut bound,
            with_grad: false,
        };
        let fused = self
            .fusion
            .as_ref()
            .ok_or_else(|| Error::internal("multi-resolution model without fusion"))?
            .forward(&mut f, summed)?;
        Ok(tape.value(fused).clone())
    }

    /// Inference logits of a single resolution instance.
    pub fn instance_logits(&self, instance: usize, input: &Tensor<E>) -> Result<Tensor<E>> {
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone(), false);
        let mut bound = self.new_binding();
        let mut f = Fwd {
            tape: &mut tape,
            params: &self.params,
            bn: BnAccess::Eval(&self.bn),
            bound: &mut bound,
            with_grad: false,
        };
        let out = self.instances[instance].forward(&mut f, x)?;
        Ok(tape.value(out).clone())
    }

    /// Trainable parameter count.
    pub fn count_params(&self) -> usize {
        self.params.total_elements()
    }

    /// Parameter count of the fusion block alone.
    pub fn fusion_params(&self) -> usize {
        self.params
            .slots
            .iter()
            .filter(|s| s.name.starts_with("fusion."))
            .map(|s| s.value.len())
            .sum()
    }

    /// Encoder-to-decoder links of one instance.
    pub fn wiring(&self) -> Vec<WiringRecord> {
        let mut out = Vec::new();
        for block in &self.instances[0].dec_blocks {
            for link in &block.links {
                out.push(WiringRecord {
                    encoder_level: link.from_level,
                    decoder_level: block.level,
                    projected: matches!(link.op, LinkOp::Projection(_)),
                });
            }
        }
        out
    }

    fn params_with_prefix(&self, prefix: &str) -> usize {
        self.params
            .slots
            .iter()
            .filter(|s| s.name.starts_with(prefix))
            .map(|s| s.value.len())
            .sum()
    }

    /// Text summary: every block with output shape (for the configured input
    /// sizes), stride, dilation, and parameter count.
    pub fn summary(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let cfg = &self.config;
        let enc = cfg.enc_widths();
        let dec = cfg.dec_widths();
        let sizes = cfg.instance_input_sizes();
        let _ = writeln!(s, "segmentation model: {} params total", self.count_params());
        for (pi, size) in sizes.iter().enumerate() {
            let p = pi + 1;
            let prefix = format!("inst{p}");
            let _ = writeln!(s, "instance {p} (input 3x{size}x{size}):");
            let _ = writeln!(
                s,
                "  {prefix}.enc.stem      conv3x3 s2 d1  out {}x{}x{}  params {}",
                enc[0],
                size / 2,
                size / 2,
                self.params_with_prefix(&format!("{prefix}.enc.stem"))
            );
            for l in 2..=cfg.num_levels {
                let r = size >> l;
                let ia = self.instances[pi].levels[l - 2].ia.is_some();
                let _ = writeln!(
                    s,
                    "  {prefix}.enc.l{l}        rcu s2 + rcu s1{}  out {}x{r}x{r}  params {}",
                    if ia { " + ia" } else { "" },
                    enc[l - 1],
                    self.params_with_prefix(&format!("{prefix}.enc.l{l}"))
                );
            }
            for l in (1..=cfg.num_levels).rev() {
                let r = size >> l;
                let stride = if l == cfg.num_levels { 1 } else { 2 };
                let block = &self.instances[pi].dec_blocks[cfg.num_levels - l];
                let _ = writeln!(
                    s,
                    "  {prefix}.dec.l{l}        deconv3x3 s{stride} d1 ({} links)  out {}x{r}x{r}  params {}",
                    block.links.len(),
                    dec[cfg.num_levels - l],
                    self.params_with_prefix(&format!("{prefix}.dec.l{l}"))
                );
            }
            let _ = writeln!(
                s,
                "  {prefix}.dec.head     deconv3x3 s2 d1  out {}x{size}x{size}  params {}",
                cfg.num_classes,
                self.params_with_prefix(&format!("{prefix}.dec.head"))
            );
            if self.instances[pi].sparse.is_some() {
                let _ = writeln!(
                    s,
                    "  {prefix}.sparse       1x1 projections + 1x1 s2 deconvs  out {}x{size}x{size}  params {}",
                    cfg.num_classes,
                    self.params_with_prefix(&format!("{prefix}.sparse"))
                );
            }
        }
        if let Some(fusion) = &self.fusion {
            let patch = cfg.patch_size;
            let dilations: Vec<String> =
                fusion.spec.layers.iter().map(|&(_, d)| d.to_string()).collect();
            let _ = writeln!(
                s,
                "fusion ({})       conv3x3 s1 dilations [{}]  out {}x{patch}x{patch}  params {}",
                fusion.spec.kind.as_str(),
                dilations.join(","),
                cfg.num_classes,
                self.fusion_params()
            );
        }
        s
    }

    fn archive_entries(&self) -> Vec<ArchiveEntry> {
        let mut entries = Vec::new();
        for slot in &self.params.slots {
            let dims: Vec<u32> = match slot.kind {
                super::layers::ParamKind::Weight => {
                    slot.value.shape.iter().map(|&d| d as u32).collect()
                }
                _ => vec![slot.value.len() as u32],
            };
            entries.push(ArchiveEntry::new(slot.name.clone(), dims, slot.value.to_f32_vec()));
        }
        for (name, state) in self.bn.names.iter().zip(&self.bn.states) {
            entries.push(ArchiveEntry::new(
                format!("{name}.running_mean"),
                vec![state.mean.len() as u32],
                state.mean.iter().map(|v| v.to_f64() as f32).collect(),
            ));
            entries.push(ArchiveEntry::new(
                format!("{name}.running_var"),
                vec![state.var.len() as u32],
                state.var.iter().map(|v| v.to_f64() as f32).collect(),
            ));
        }
        entries
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        save_archive(&mut file, &self.archive_entries())
    }

    pub fn load_checkpoint(&mut self, path: &Path) -> Result<()> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let entries = load_archive(&mut file)?;
        let map: std::collections::HashMap<&str, &ArchiveEntry> =
            entries.iter().map(|e| (e.name.as_str(), e)).collect();
        for slot in &mut self.params.slots {
            let e = map
                .get(slot.name.as_str())
                .ok_or_else(|| Error::data(format!("checkpoint missing tensor '{}'", slot.name)))?;
            if e.data.len() != slot.value.len() {
                return Err(Error::data(format!(
                    "checkpoint tensor '{}' has {} elements, model expects {}",
                    slot.name,
                    e.data.len(),
                    slot.value.len()
                )));
            }
            slot.value = Tensor::from_f32_slice(slot.value.shape, &e.data)?;
        }
        for (name, state) in self.bn.names.iter().zip(self.bn.states.iter_mut()) {
            for (suffix, field) in
                [("running_mean", &mut state.mean), ("running_var", &mut state.var)]
            {
                let key = format!("{name}.{suffix}");
                let e = map
                    .get(key.as_str())
                    .ok_or_else(|| Error::data(format!("checkpoint missing tensor '{key}'")))?;
                if e.data.len() != field.len() {
                    return Err(Error::data(format!("checkpoint tensor '{key}' has wrong size")));
                }
                *field = e.data.iter().map(|&v| E::from_f64(v as f64)).collect();
            }
        }
        Ok(())
    }
}
