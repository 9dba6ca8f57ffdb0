//! Effective receptive-field analysis.
//!
//! Composes the standard recurrence over a layer sequence:
//! rf' = rf + (k - 1) * dilation * jump, jump' = jump * stride.

use super::config::FusionKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LayerGeom {
    pub kernel: usize,
    pub dilation: usize,
    pub stride: usize,
}

impl LayerGeom {
    pub fn conv(kernel: usize, dilation: usize, stride: usize) -> Self {
        LayerGeom { kernel, dilation, stride }
    }
}

/// Receptive field of a sequential layer stack, as a square (h, w).
pub fn receptive_field(layers: &[LayerGeom]) -> (usize, usize) {
    let mut rf = 1usize;
    let mut jump = 1usize;
    for l in layers {
        rf += (l.kernel - 1) * l.dilation * jump;
        jump *= l.stride;
    }
    (rf, rf)
}

/// Structure of one multi-resolution fusion block: layer list as
/// (kernel, dilation) pairs, plus wiring flags.
#[derive(Debug, Clone)]
pub struct FusionSpec {
    pub kind: FusionKind,
    pub layers: Vec<(usize, usize)>,
    /// Each layer's output is summed with all preceding outputs.
    pub identity_links: bool,
    /// Layers run as parallel branches whose outputs are summed.
    pub parallel: bool,
}

impl FusionSpec {
    pub fn for_kind(kind: FusionKind) -> Result<Self> {
        match kind {
            FusionKind::Ours => Ok(FusionSpec {
                kind,
                layers: vec![(3, 1), (3, 2), (3, 4), (3, 8), (3, 16), (3, 1)],
                identity_links: true,
                parallel: false,
            }),
            FusionKind::FusionA => Ok(FusionSpec {
                kind,
                layers: vec![(3, 1), (3, 1), (3, 1)],
                identity_links: false,
                parallel: false,
            }),
            FusionKind::FusionB => Ok(FusionSpec {
                kind,
                layers: vec![(3, 6), (3, 12), (3, 18)],
                identity_links: false,
                parallel: true,
            }),
            FusionKind::None => Err(Error::config("no fusion spec for fusion kind 'none'")),
        }
    }

    /// Receptive field of the block. Parallel branches take the widest branch;
    /// identity links never shrink the sequential field.
    pub fn receptive_field(&self) -> (usize, usize) {
        if self.parallel {
            self.layers
                .iter()
                .map(|&(k, d)| receptive_field(&[LayerGeom::conv(k, d, 1)]))
                .max_by_key(|&(h, _)| h)
                .unwrap_or((1, 1))
        } else {
            let seq: Vec<LayerGeom> =
                self.layers.iter().map(|&(k, d)| LayerGeom::conv(k, d, 1)).collect();
            receptive_field(&seq)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_conv_base_case() {
        assert_eq!(receptive_field(&[LayerGeom::conv(3, 1, 1)]), (3, 3));
    }

    #[test]
    fn three_stacked_convs() {
        let l = LayerGeom::conv(3, 1, 1);
        assert_eq!(receptive_field(&[l, l, l]), (7, 7));
    }

    #[test]
    fn strides_multiply_the_jump() {
        // conv3 s2 then conv3 s1: 3 + 2*2 = 7.
        assert_eq!(
            receptive_field(&[LayerGeom::conv(3, 1, 2), LayerGeom::conv(3, 1, 1)]),
            (7, 7)
        );
    }

    #[test]
    fn fusion_fields_match_published_values() {
        assert_eq!(FusionSpec::for_kind(FusionKind::Ours).unwrap().receptive_field(), (65, 65));
        assert_eq!(FusionSpec::for_kind(FusionKind::FusionA).unwrap().receptive_field(), (7, 7));
        assert_eq!(FusionSpec::for_kind(FusionKind::FusionB).unwrap().receptive_field(), (37, 37));
    }
}
