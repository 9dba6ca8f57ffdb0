//! Declarative model configuration and its key-value file format.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    /// No encoder-decoder links.
    Plain,
    /// One mirror-level link per decoder block.
    Residual,
    /// Every decoder block receives all encoder levels at or below it.
    Dense,
}

impl Connectivity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Connectivity::Plain => "plain",
            Connectivity::Residual => "residual",
            Connectivity::Dense => "dense",
        }
    }
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Connectivity::Plain),
            "residual" => Ok(Connectivity::Residual),
            "dense" => Ok(Connectivity::Dense),
            _ => Err(Error::config(format!("unknown connectivity '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionKind {
    /// Dilated stack [1,2,4,8,16,1] with identity links between layers.
    Ours,
    /// Plain stack of three 3x3 convolutions.
    FusionA,
    /// Parallel 3x3 branches at dilations {6,12,18}, summed.
    FusionB,
    /// No fusion block (single-resolution models).
    None,
}

impl FusionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FusionKind::Ours => "ours",
            FusionKind::FusionA => "fusion_a",
            FusionKind::FusionB => "fusion_b",
            FusionKind::None => "none",
        }
    }
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "ours" => Ok(FusionKind::Ours),
            "fusion_a" => Ok(FusionKind::FusionA),
            "fusion_b" => Ok(FusionKind::FusionB),
            "none" => Ok(FusionKind::None),
            _ => Err(Error::config(format!("unknown fusion kind '{s}'"))),
        }
    }
}

/// The eight model rows of the ablation matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Plain,
    Residual,
    Full,
    A1,
    A2,
    A3,
    FusionA,
    FusionB,
}

impl Preset {
    pub const ALL: [Preset; 8] = [
        Preset::Plain,
        Preset::Residual,
        Preset::Full,
        Preset::A1,
        Preset::A2,
        Preset::A3,
        Preset::FusionA,
        Preset::FusionB,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Preset::Plain => "plain",
            Preset::Residual => "residual",
            Preset::Full => "full",
            Preset::A1 => "a1",
            Preset::A2 => "a2",
            Preset::A3 => "a3",
            Preset::FusionA => "fusion_a",
            Preset::FusionB => "fusion_b",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Preset::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown model preset '{s}'")))
    }

    /// Single-resolution variants of the fusion presets are undefined.
    pub fn defined_single(&self) -> bool {
        !matches!(self, Preset::FusionA | Preset::FusionB)
    }
}

/// Declarative description of one network variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub num_classes: usize,
    pub num_levels: usize,
    pub encoder_channels: Vec<usize>,
    pub dense_decoder_channels: Vec<usize>,
    pub connectivity: Connectivity,
    pub ia_rcu: bool,
    /// Encoder levels (2..=L) whose outputs receive the input-aware injection.
    pub ia_levels: Vec<usize>,
    pub dual_decoder: bool,
    pub fusion: FusionKind,
    /// Number of resolution instances P.
    pub resolutions: usize,
    pub patch_size: usize,
    pub context_border: usize,
    /// Rational width multiplier (numerator, denominator) for desk-scale runs.
    pub channel_scale: (u32, u32),
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::preset(Preset::Full, true)
    }
}

const BASE_ENCODER: [usize; 5] = [64, 64, 128, 256, 512];

impl ModelConfig {
    /// Derive the default channel schedules for a given depth. The decoder
    /// widths mirror the encoder one level up, ending at the class count.
    pub fn with_levels(num_levels: usize, num_classes: usize) -> Self {
        assert!((2..=5).contains(&num_levels), "supported depths are 2..=5");
        let enc: Vec<usize> = BASE_ENCODER[..num_levels].to_vec();
        let mut dec: Vec<usize> = (0..num_levels - 1).map(|i| enc[num_levels - 2 - i]).collect();
        dec.push(num_classes);
        ModelConfig {
            num_classes,
            num_levels,
            encoder_channels: enc,
            dense_decoder_channels: dec,
            connectivity: Connectivity::Dense,
            ia_rcu: true,
            ia_levels: vec![2],
            dual_decoder: true,
            fusion: FusionKind::None,
            resolutions: 1,
            patch_size: 256,
            context_border: 64,
            channel_scale: (1, 1),
        }
    }

    pub fn preset(preset: Preset, multi_resolution: bool) -> Self {
        let mut cfg = ModelConfig::with_levels(5, 8);
        match preset {
            Preset::Plain => {
                cfg.connectivity = Connectivity::Plain;
                cfg.ia_rcu = false;
                cfg.dual_decoder = false;
            }
            Preset::Residual => {
                cfg.connectivity = Connectivity::Residual;
                cfg.ia_rcu = false;
                cfg.dual_decoder = false;
            }
            Preset::Full | Preset::FusionA | Preset::FusionB => {}
            Preset::A1 => cfg.ia_rcu = false,
            Preset::A2 => cfg.dual_decoder = false,
            Preset::A3 => {
                cfg.ia_rcu = false;
                cfg.dual_decoder = false;
            }
        }
        if !cfg.ia_rcu {
            cfg.ia_levels.clear();
        }
        if multi_resolution {
            cfg.resolutions = 2;
            cfg.fusion = match preset {
                Preset::FusionA => FusionKind::FusionA,
                Preset::FusionB => FusionKind::FusionB,
                _ => FusionKind::Ours,
            };
        }
        cfg
    }

    pub fn scale_channels(mut self, num: u32, den: u32) -> Self {
        self.channel_scale = (num, den);
        self
    }

    fn scaled(&self, ch: usize) -> usize {
        let (num, den) = self.channel_scale;
        ((ch as u64 * num as u64 + den as u64 / 2) / den as u64).max(1) as usize
    }

    /// Encoder widths after applying the channel scale.
    pub fn enc_widths(&self) -> Vec<usize> {
        self.encoder_channels.iter().map(|&c| self.scaled(c)).collect()
    }

    /// Decoder widths after scaling; the final class-count entry is never scaled.
    pub fn dec_widths(&self) -> Vec<usize> {
        let last = self.dense_decoder_channels.len() - 1;
        self.dense_decoder_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| if i == last { c } else { self.scaled(c) })
            .collect()
    }

    /// Per-instance input sizes, largest context first. Instance p of P uses
    /// a border of (P - p) * context_border around the patch.
    pub fn instance_input_sizes(&self) -> Vec<usize> {
        (1..=self.resolutions)
            .map(|p| self.patch_size + 2 * self.context_border * (self.resolutions - p))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.num_levels;
        if l < 2 {
            return Err(Error::config("num_levels must be at least 2"));
        }
        if self.encoder_channels.len() != l {
            return Err(Error::config(format!(
                "encoder_channels has {} entries for {l} levels",
                self.encoder_channels.len()
            )));
        }
        if self.dense_decoder_channels.len() != l {
            return Err(Error::config(format!(
                "dense_decoder_channels has {} entries for {l} levels",
                self.dense_decoder_channels.len()
            )));
        }
        if *self.dense_decoder_channels.last().unwrap() != self.num_classes {
            return Err(Error::config(
                "last dense_decoder_channels entry must equal num_classes",
            ));
        }
        if self.resolutions == 0 {
            return Err(Error::config("resolutions must be at least 1"));
        }
        match (self.fusion, self.resolutions) {
            (FusionKind::None, p) if p >= 2 => {
                return Err(Error::config("multi-resolution models require a fusion block"))
            }
            (f, 1) if f != FusionKind::None => {
                return Err(Error::config(format!(
                    "fusion '{}' requires at least two resolutions",
                    f.as_str()
                )))
            }
            _ => {}
        }
        if self.ia_rcu {
            if self.ia_levels.is_empty() {
                return Err(Error::config("ia_rcu is set but ia_levels is empty"));
            }
            for &lev in &self.ia_levels {
                if !(2..=l).contains(&lev) {
                    return Err(Error::config(format!(
                        "ia level {lev} outside encoder levels 2..={l}"
                    )));
                }
            }
        } else if !self.ia_levels.is_empty() {
            return Err(Error::config("ia_levels set without ia_rcu"));
        }
        if self.patch_size % (1 << l) != 0 {
            return Err(Error::config(format!(
                "patch_size {} must be divisible by 2^{l}",
                self.patch_size
            )));
        }
        if self.channel_scale.0 == 0 || self.channel_scale.1 == 0 {
            return Err(Error::config("channel_scale must be positive"));
        }
        Ok(())
    }

    pub fn to_kv_string(&self) -> String {
        let mut s = String::new();
        let join = |v: &[usize]| {
            v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",")
        };
        let _ = writeln!(s, "num_classes = {}", self.num_classes);
        let _ = writeln!(s, "num_levels = {}", self.num_levels);
        let _ = writeln!(s, "encoder_channels = {}", join(&self.encoder_channels));
        let _ = writeln!(s, "dense_decoder_channels = {}", join(&self.dense_decoder_channels));
        let _ = writeln!(s, "connectivity = {}", self.connectivity.as_str());
        let _ = writeln!(s, "ia_rcu = {}", self.ia_rcu);
        let _ = writeln!(s, "ia_levels = {}", join(&self.ia_levels));
        let _ = writeln!(s, "dual_decoder = {}", self.dual_decoder);
        let _ = writeln!(s, "fusion = {}", self.fusion.as_str());
        let _ = writeln!(s, "resolutions = {}", self.resolutions);
        let _ = writeln!(s, "patch_size = {}", self.patch_size);
        let _ = writeln!(s, "context_border = {}", self.context_border);
        let _ = writeln!(s, "channel_scale = {}/{}", self.channel_scale.0, self.channel_scale.1);
        s
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::with_levels(5, 8);
        let mut ia_levels_given = false;
        for (key, value) in parse_kv(text)? {
            match key.as_str() {
                "num_classes" => cfg.num_classes = parse_usize(&key, &value)?,
                "num_levels" => cfg.num_levels = parse_usize(&key, &value)?,
                "encoder_channels" => cfg.encoder_channels = parse_usize_list(&key, &value)?,
                "dense_decoder_channels" => {
                    cfg.dense_decoder_channels = parse_usize_list(&key, &value)?
                }
                "connectivity" => cfg.connectivity = Connectivity::parse(&value)?,
                "ia_rcu" => cfg.ia_rcu = parse_bool(&key, &value)?,
                "ia_levels" => {
                    cfg.ia_levels = parse_usize_list(&key, &value)?;
                    ia_levels_given = true;
                }
                "dual_decoder" => cfg.dual_decoder = parse_bool(&key, &value)?,
                "fusion" => cfg.fusion = FusionKind::parse(&value)?,
                "resolutions" => cfg.resolutions = parse_usize(&key, &value)?,
                "patch_size" => cfg.patch_size = parse_usize(&key, &value)?,
                "context_border" => cfg.context_border = parse_usize(&key, &value)?,
                "channel_scale" => cfg.channel_scale = parse_ratio(&value)?,
                _ => return Err(Error::config(format!("unknown model config key '{key}'"))),
            }
        }
        if !cfg.ia_rcu && !ia_levels_given {
            cfg.ia_levels.clear();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_kv_string())?;
        Ok(())
    }
}

/// Shared parser for `key = value` files: '#' starts a comment, blank lines skip.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse()
        .map_err(|_| Error::config(format!("key '{key}': '{v}' is not a non-negative integer")))
}

pub fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| Error::config(format!("key '{key}': '{v}' is not a number")))
}

pub fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::config(format!("key '{key}': '{v}' is not a boolean"))),
    }
}

fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|p| parse_usize(key, p.trim())).collect()
}

fn parse_ratio(v: &str) -> Result<(u32, u32)> {
    let (num, den) = match v.split_once('/') {
        Some((a, b)) => (a.trim(), b.trim()),
        None => (v, "1"),
    };
    let parse = |s: &str| {
        s.parse::<u32>()
            .map_err(|_| Error::config(format!("channel_scale '{v}' is not a ratio")))
    };
    Ok((parse(num)?, parse(den)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_schedules() {
        let cfg = ModelConfig::preset(Preset::Full, false);
        assert_eq!(cfg.encoder_channels, vec![64, 64, 128, 256, 512]);
        assert_eq!(cfg.dense_decoder_channels, vec![256, 128, 64, 64, 8]);
        cfg.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let cfg = ModelConfig::preset(Preset::Full, true).scale_channels(1, 8);
        let text = cfg.to_kv_string();
        let back = ModelConfig::from_kv_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn fusion_and_resolution_flags_are_coupled() {
        let mut cfg = ModelConfig::preset(Preset::Full, true);
        cfg.fusion = FusionKind::None;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::preset(Preset::Full, false);
        cfg.fusion = FusionKind::Ours;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn channel_scale_rounds_and_floors_at_one() {
        let cfg = ModelConfig::preset(Preset::Full, false).scale_channels(1, 8);
        assert_eq!(cfg.enc_widths(), vec![8, 8, 16, 32, 64]);
        assert_eq!(cfg.dec_widths(), vec![32, 16, 8, 8, 8]);
        let tiny = ModelConfig::preset(Preset::Full, false).scale_channels(1, 512);
        assert!(tiny.enc_widths().iter().all(|&c| c >= 1));
    }

    #[test]
    fn instance_sizes_follow_border_rule() {
        let cfg = ModelConfig::preset(Preset::Full, true);
        assert_eq!(cfg.instance_input_sizes(), vec![384, 256]);
        let cfg = ModelConfig::preset(Preset::Full, false);
        assert_eq!(cfg.instance_input_sizes(), vec![256]);
    }

    #[test]
    fn derived_small_depth_schedule() {
        let cfg = ModelConfig::with_levels(3, 8);
        assert_eq!(cfg.encoder_channels, vec![64, 64, 128]);
        assert_eq!(cfg.dense_decoder_channels, vec![64, 64, 8]);
        cfg.validate().unwrap();
    }
}
