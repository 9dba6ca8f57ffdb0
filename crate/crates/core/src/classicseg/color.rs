//! Color conversions: sRGB to CIELAB (D65) and stain separation by color
//! deconvolution in optical-density space.

use crate::error::{Error, Result};
use image::RgbImage;

/// Planar L*a*b* rasters. L in [0, 100], a and b roughly in [-128, 127].
#[derive(Debug, Clone)]
pub struct LabImage {
    pub height: usize,
    pub width: usize,
    pub l: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

fn srgb_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// One sRGB pixel (0..=255 per channel) to L*a*b* under D65.
pub fn rgb_pixel_to_lab(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let rl = srgb_linear(r as f64 / 255.0);
    let gl = srgb_linear(g as f64 / 255.0);
    let bl = srgb_linear(b as f64 / 255.0);
    let x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
    let y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
    let z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
    // White point = matrix row sums, so neutral grays land at a = b = 0
    // exactly and white at L = 100 exactly.
    let (xn, yn, zn) = (0.95047, 1.0000001, 1.08883);
    let (fx, fy, fz) = (lab_f(x / xn), lab_f(y / yn), lab_f(z / zn));
    (116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))
}

pub fn rgb_to_lab(img: &RgbImage) -> LabImage {
    let (w, h) = img.dimensions();
    let (height, width) = (h as usize, w as usize);
    let mut out = LabImage {
        height,
        width,
        l: vec![0.0; height * width],
        a: vec![0.0; height * width],
        b: vec![0.0; height * width],
    };
    for y in 0..height {
        for x in 0..width {
            let p = img.get_pixel(x as u32, y as u32);
            let (l, a, b) = rgb_pixel_to_lab(p[0], p[1], p[2]);
            out.l[y * width + x] = l;
            out.a[y * width + x] = a;
            out.b[y * width + x] = b;
        }
    }
    out
}

/// Rows are unit-norm stain vectors in optical density space:
/// hematoxylin, eosin, residual.
#[derive(Debug, Clone, PartialEq)]
pub struct StainMatrix {
    pub rows: [[f64; 3]; 3],
    inverse: [[f64; 3]; 3],
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det.abs() < 1e-12 {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (a, b, c, d) = (
                m[(j + 1) % 3][(i + 1) % 3],
                m[(j + 2) % 3][(i + 2) % 3],
                m[(j + 1) % 3][(i + 2) % 3],
                m[(j + 2) % 3][(i + 1) % 3],
            );
            inv[i][j] = (a * b - c * d) * inv_det;
        }
    }
    Some(inv)
}

impl StainMatrix {
    pub fn new(hematoxylin: [f64; 3], eosin: [f64; 3], residual: [f64; 3]) -> Result<Self> {
        let rows = [normalize(hematoxylin), normalize(eosin), normalize(residual)];
        let inverse = invert3(&rows)
            .ok_or_else(|| Error::config("stain matrix is singular"))?;
        Ok(StainMatrix { rows, inverse })
    }

    /// Standard hematoxylin/eosin optical-density vectors; the residual row
    /// is their normalized cross product.
    pub fn he_default() -> Self {
        let h = [0.650, 0.704, 0.286];
        let e = [0.072, 0.990, 0.105];
        let r = [
            h[1] * e[2] - h[2] * e[1],
            h[2] * e[0] - h[0] * e[2],
            h[0] * e[1] - h[1] * e[0],
        ];
        StainMatrix::new(h, e, r).expect("default stain matrix is invertible")
    }

    /// Concentrations of the three stains for one optical-density vector.
    pub fn unmix(&self, od: [f64; 3]) -> [f64; 3] {
        // od = c * rows  =>  c = od * rows^-1.
        let mut c = [0.0; 3];
        for j in 0..3 {
            c[j] = od[0] * self.inverse[0][j] + od[1] * self.inverse[1][j] + od[2] * self.inverse[2][j];
        }
        c
    }

    /// Optical density produced by a concentration triple.
    pub fn mix(&self, conc: [f64; 3]) -> [f64; 3] {
        let mut od = [0.0; 3];
        for j in 0..3 {
            od[j] = conc[0] * self.rows[0][j] + conc[1] * self.rows[1][j] + conc[2] * self.rows[2][j];
        }
        od
    }
}

/// Optical density of one 8-bit-range channel value (value may be real).
pub fn optical_density(v: f64) -> f64 {
    -((v + 1.0) / 256.0).log10()
}

/// Channel value reproducing a given optical density.
pub fn od_to_value(od: f64) -> f64 {
    256.0 * 10f64.powf(-od) - 1.0
}

/// Per-stain concentration rasters.
#[derive(Debug, Clone)]
pub struct StainImages {
    pub height: usize,
    pub width: usize,
    pub hematoxylin: Vec<f64>,
    pub eosin: Vec<f64>,
    pub residual: Vec<f64>,
    pub matrix: StainMatrix,
}

/// Separate stains for real-valued RGB pixels (each channel in 0..=255).
/// Negative concentrations are clamped to zero.
pub fn color_deconvolution_real(
    pixels: &[[f64; 3]],
    height: usize,
    width: usize,
    matrix: &StainMatrix,
) -> Result<StainImages> {
    if pixels.len() != height * width {
        return Err(Error::data("pixel buffer does not match size"));
    }
    let mut out = StainImages {
        height,
        width,
        hematoxylin: vec![0.0; pixels.len()],
        eosin: vec![0.0; pixels.len()],
        residual: vec![0.0; pixels.len()],
        matrix: matrix.clone(),
    };
    for (i, p) in pixels.iter().enumerate() {
        let od = [optical_density(p[0]), optical_density(p[1]), optical_density(p[2])];
        let c = matrix.unmix(od);
        out.hematoxylin[i] = c[0].max(0.0);
        out.eosin[i] = c[1].max(0.0);
        out.residual[i] = c[2].max(0.0);
    }
    Ok(out)
}

pub fn color_deconvolution(img: &RgbImage, matrix: &StainMatrix) -> Result<StainImages> {
    let (w, h) = img.dimensions();
    let pixels: Vec<[f64; 3]> = img
        .pixels()
        .map(|p| [p[0] as f64, p[1] as f64, p[2] as f64])
        .collect();
    color_deconvolution_real(&pixels, h as usize, w as usize, matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lab_reference_points() {
        let (l, a, b) = rgb_pixel_to_lab(0, 0, 0);
        assert!(l.abs() < 1e-9 && a.abs() < 1e-9 && b.abs() < 1e-9);
        let (l, a, b) = rgb_pixel_to_lab(255, 255, 255);
        assert!((l - 100.0).abs() < 1e-3, "white L {l}");
        assert!(a.abs() < 1e-3 && b.abs() < 1e-3);
        // Mid gray: a = b = 0 exactly (equal channel ratios), L by formula.
        let (l, a, b) = rgb_pixel_to_lab(119, 119, 119);
        let y = srgb_linear(119.0 / 255.0);
        let expect_l = 116.0 * lab_f(y) - 16.0;
        assert!((l - expect_l).abs() < 1e-9);
        assert!(a.abs() < 1e-9 && b.abs() < 1e-9);
    }

    #[test]
    fn white_pixel_has_no_stain() {
        let st = color_deconvolution_real(
            &[[255.0, 255.0, 255.0]],
            1,
            1,
            &StainMatrix::he_default(),
        )
        .unwrap();
        assert!(st.hematoxylin[0].abs() < 1e-9);
        assert!(st.eosin[0].abs() < 1e-9);
    }

    #[test]
    fn pure_hematoxylin_recovers_unit_concentration() {
        let m = StainMatrix::he_default();
        let od = m.mix([1.0, 0.0, 0.0]);
        let px = [od_to_value(od[0]), od_to_value(od[1]), od_to_value(od[2])];
        let st = color_deconvolution_real(&[px], 1, 1, &m).unwrap();
        assert!((st.hematoxylin[0] - 1.0).abs() < 1e-6, "H {}", st.hematoxylin[0]);
        assert!(st.eosin[0].abs() < 1e-6, "E {}", st.eosin[0]);
    }

    #[test]
    fn round_trip_reconstructs_optical_density() {
        let m = StainMatrix::he_default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            // In-gamut pixel synthesized from non-negative concentrations.
            let conc = [
                rng.gen_range(0.0..1.2),
                rng.gen_range(0.0..1.2),
                rng.gen_range(0.0..0.2),
            ];
            let od = m.mix(conc);
            let px = [od_to_value(od[0]), od_to_value(od[1]), od_to_value(od[2])];
            let st = color_deconvolution_real(&[px], 1, 1, &m).unwrap();
            let back = m.mix([st.hematoxylin[0], st.eosin[0], st.residual[0]]);
            for j in 0..3 {
                assert!((back[j] - od[j]).abs() < 1e-6, "channel {j}");
            }
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        assert!(StainMatrix::new([1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]).is_err());
    }
}
