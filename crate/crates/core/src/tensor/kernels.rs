//! Convolution, pooling, and GEMM kernels.
//!
//! Two convolution paths exist: `*_direct` loops are the readable correctness
//! oracle, the im2col + GEMM path is what the tape dispatches. Both must agree
//! to 1e-6 relative; the equivalence test lives at the bottom of this file.
//! Everything here is strictly serial so results are bit-reproducible.

use super::{ConvGeom, Scalar, Tensor};
use crate::error::{Error, Result};

/// c[m][n] += a[m][k] * b[k][n]; clears c first when `overwrite` is set.
pub fn gemm<E: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[E],
    b: &[E],
    c: &mut [E],
    overwrite: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if overwrite {
        c.fill(E::ZERO);
    }
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ip * bv;
            }
        }
    }
}

/// c[m][n] += sum_s a[m][s] * b[n][s] (both operands row-major over s).
fn gemm_abt<E: Scalar>(m: usize, n: usize, s: usize, a: &[E], b: &[E], c: &mut [E]) {
    debug_assert_eq!(a.len(), m * s);
    debug_assert_eq!(b.len(), n * s);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * s..(i + 1) * s];
        for j in 0..n {
            let b_row = &b[j * s..(j + 1) * s];
            c[i * n + j] += dot(a_row, b_row);
        }
    }
}

/// Fixed-order four-lane dot product; the lane split is deterministic.
fn dot<E: Scalar>(a: &[E], b: &[E]) -> E {
    let mut acc = [E::ZERO; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let o = i * 4;
        acc[0] += a[o] * b[o];
        acc[1] += a[o + 1] * b[o + 1];
        acc[2] += a[o + 2] * b[o + 2];
        acc[3] += a[o + 3] * b[o + 3];
    }
    let mut tail = E::ZERO;
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

/// Spatial output shape of a convolution, with the offending axis named.
pub fn conv_out_shape(input: [usize; 2], k: usize, geom: ConvGeom) -> Result<[usize; 2]> {
    let oh = geom
        .conv_out(input[0], k)
        .map_err(|e| Error::config(format!("height axis: {e}")))?;
    let ow = geom
        .conv_out(input[1], k)
        .map_err(|e| Error::config(format!("width axis: {e}")))?;
    Ok([oh, ow])
}

struct ConvDims {
    n: usize,
    ci: usize,
    co: usize,
    k: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

fn conv_dims<E: Scalar>(x: &Tensor<E>, w: &Tensor<E>, geom: ConvGeom) -> Result<ConvDims> {
    super::validate_kernel(w.shape)?;
    let [n, ci, h, iw] = x.shape;
    let [co, wci, k, _] = w.shape;
    if ci != wci {
        return Err(Error::config(format!(
            "channel axis: input has {ci} channels but kernel expects {wci}"
        )));
    }
    let [oh, ow] = conv_out_shape([h, iw], k, geom)?;
    Ok(ConvDims { n, ci, co, k, h, w: iw, oh, ow })
}

/// Output positions o in [lo, hi) whose source index o*stride + offset lands
/// inside [0, extent).
fn valid_range(out_len: usize, stride: usize, offset: isize, extent: usize) -> (usize, usize) {
    let lo = if offset >= 0 {
        0
    } else {
        ((-offset) as usize).div_ceil(stride)
    };
    if lo >= out_len {
        return (out_len, out_len);
    }
    let max_src = extent as isize - 1 - offset;
    if max_src < 0 {
        return (out_len, out_len);
    }
    let hi = (max_src as usize / stride + 1).min(out_len);
    (lo, hi.max(lo))
}

/// Unpack convolution windows of one image into a [ci*k*k, oh*ow] matrix.
fn im2col<E: Scalar>(
    img: &[E],
    ci: usize,
    h: usize,
    w: usize,
    k: usize,
    geom: ConvGeom,
    oh: usize,
    ow: usize,
    col: &mut [E],
) {
    let s = oh * ow;
    col.fill(E::ZERO);
    for c in 0..ci {
        let plane = &img[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            let oy_off = (ky * geom.dilation) as isize - geom.padding as isize;
            let (oy_lo, oy_hi) = valid_range(oh, geom.stride, oy_off, h);
            for kx in 0..k {
                let ox_off = (kx * geom.dilation) as isize - geom.padding as isize;
                let (ox_lo, ox_hi) = valid_range(ow, geom.stride, ox_off, w);
                if ox_lo >= ox_hi {
                    continue;
                }
                let row = &mut col[(c * k * k + ky * k + kx) * s..][..s];
                for oy in oy_lo..oy_hi {
                    let iy = (oy * geom.stride) as isize + oy_off;
                    let src_base = iy as usize * w;
                    let dst = &mut row[oy * ow + ox_lo..oy * ow + ox_hi];
                    let ix0 = ((ox_lo * geom.stride) as isize + ox_off) as usize;
                    if geom.stride == 1 {
                        dst.copy_from_slice(&plane[src_base + ix0..src_base + ix0 + dst.len()]);
                    } else {
                        for (j, d) in dst.iter_mut().enumerate() {
                            *d = plane[src_base + ix0 + j * geom.stride];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add the columns back into an image: the adjoint of [`im2col`].
fn col2im<E: Scalar>(
    col: &[E],
    ci: usize,
    h: usize,
    w: usize,
    k: usize,
    geom: ConvGeom,
    oh: usize,
    ow: usize,
    img: &mut [E],
) {
    let s = oh * ow;
    for c in 0..ci {
        let plane = &mut img[c * h * w..(c + 1) * h * w];
        for ky in 0..k {
            let oy_off = (ky * geom.dilation) as isize - geom.padding as isize;
            let (oy_lo, oy_hi) = valid_range(oh, geom.stride, oy_off, h);
            for kx in 0..k {
                let ox_off = (kx * geom.dilation) as isize - geom.padding as isize;
                let (ox_lo, ox_hi) = valid_range(ow, geom.stride, ox_off, w);
                if ox_lo >= ox_hi {
                    continue;
                }
                let row = &col[(c * k * k + ky * k + kx) * s..][..s];
                for oy in oy_lo..oy_hi {
                    let iy = (oy * geom.stride) as isize + oy_off;
                    let dst_base = iy as usize * w;
                    let src = &row[oy * ow + ox_lo..oy * ow + ox_hi];
                    let ix0 = ((ox_lo * geom.stride) as isize + ox_off) as usize;
                    if geom.stride == 1 {
                        let dst = &mut plane[dst_base + ix0..dst_base + ix0 + src.len()];
                        for (d, &v) in dst.iter_mut().zip(src) {
                            *d += v;
                        }
                    } else {
                        for (j, &v) in src.iter().enumerate() {
                            plane[dst_base + ix0 + j * geom.stride] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Packed convolution. Kernel geometry selects the path: 1x1 kernels at unit
/// geometry multiply the input planes directly, everything else goes through
/// im2col + GEMM.
pub fn conv2d_forward<E: Scalar>(
    x: &Tensor<E>,
    w: &Tensor<E>,
    bias: Option<&[E]>,
    geom: ConvGeom,
) -> Result<Tensor<E>> {
    let d = conv_dims(x, w, geom)?;
    if let Some(b) = bias {
        if b.len() != d.co {
            return Err(Error::config(format!(
                "bias axis: {} entries for {} output channels",
                b.len(),
                d.co
            )));
        }
    }
    let s = d.oh * d.ow;
    let pointwise = d.k == 1 && geom.stride == 1 && geom.padding == 0;
    let mut out = Tensor::zeros([d.n, d.co, d.oh, d.ow]);
    let mut col = if pointwise { Vec::new() } else { vec![E::ZERO; d.ci * d.k * d.k * s] };
    for n in 0..d.n {
        let img = &x.data[n * d.ci * d.h * d.w..(n + 1) * d.ci * d.h * d.w];
        let o = &mut out.data[n * d.co * s..(n + 1) * d.co * s];
        if pointwise {
            gemm(d.co, d.ci, s, &w.data, img, o, true);
        } else {
            im2col(img, d.ci, d.h, d.w, d.k, geom, d.oh, d.ow, &mut col);
            gemm(d.co, d.ci * d.k * d.k, s, &w.data, &col, o, true);
        }
        if let Some(b) = bias {
            for c in 0..d.co {
                let bv = b[c];
                for v in &mut o[c * s..(c + 1) * s] {
                    *v += bv;
                }
            }
        }
    }
    Ok(out)
}

/// Naive seven-loop convolution; the oracle the packed path is tested against.
pub fn conv2d_forward_direct<E: Scalar>(
    x: &Tensor<E>,
    w: &Tensor<E>,
    bias: Option<&[E]>,
    geom: ConvGeom,
) -> Result<Tensor<E>> {
    let d = conv_dims(x, w, geom)?;
    let mut out = Tensor::zeros([d.n, d.co, d.oh, d.ow]);
    for n in 0..d.n {
        for co in 0..d.co {
            for oy in 0..d.oh {
                for ox in 0..d.ow {
                    let mut acc = bias.map_or(E::ZERO, |b| b[co]);
                    for ci in 0..d.ci {
                        for ky in 0..d.k {
                            for kx in 0..d.k {
                                let iy = (oy * geom.stride + ky * geom.dilation) as isize
                                    - geom.padding as isize;
                                let ix = (ox * geom.stride + kx * geom.dilation) as isize
                                    - geom.padding as isize;
                                if iy < 0
                                    || ix < 0
                                    || iy as usize >= d.h
                                    || ix as usize >= d.w
                                {
                                    continue;
                                }
                                acc += x.at(n, ci, iy as usize, ix as usize)
                                    * w.at(co, ci, ky, kx);
                            }
                        }
                    }
                    *out.at_mut(n, co, oy, ox) = acc;
                }
            }
        }
    }
    Ok(out)
}

pub struct ConvGrads<E: Scalar> {
    pub dx: Option<Tensor<E>>,
    pub dw: Option<Tensor<E>>,
    pub db: Option<Vec<E>>,
}

pub fn conv2d_backward<E: Scalar>(
    x: &Tensor<E>,
    w: &Tensor<E>,
    d_out: &Tensor<E>,
    geom: ConvGeom,
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> Result<ConvGrads<E>> {
    let d = conv_dims(x, w, geom)?;
    debug_assert_eq!(d_out.shape, [d.n, d.co, d.oh, d.ow]);
    let s = d.oh * d.ow;
    let kk = d.ci * d.k * d.k;
    let mut dx = need_dx.then(|| Tensor::zeros(x.shape));
    let mut dw = need_dw.then(|| Tensor::zeros(w.shape));
    let mut db = need_db.then(|| vec![E::ZERO; d.co]);
    let mut col = vec![E::ZERO; kk * s];
    let mut dcol = vec![E::ZERO; kk * s];
    // Kernel matrix transposed once: [ci*k*k, co].
    let mut wt = Vec::new();
    if need_dx {
        wt = vec![E::ZERO; kk * d.co];
        for co in 0..d.co {
            for j in 0..kk {
                wt[j * d.co + co] = w.data[co * kk + j];
            }
        }
    }
    for n in 0..d.n {
        let dout_n = &d_out.data[n * d.co * s..(n + 1) * d.co * s];
        if need_dw {
            let img = &x.data[n * d.ci * d.h * d.w..(n + 1) * d.ci * d.h * d.w];
            im2col(img, d.ci, d.h, d.w, d.k, geom, d.oh, d.ow, &mut col);
            gemm_abt(d.co, kk, s, dout_n, &col, &mut dw.as_mut().unwrap().data);
        }
        if let Some(dx) = dx.as_mut() {
            gemm(kk, d.co, s, &wt, dout_n, &mut dcol, true);
            let img = &mut dx.data[n * d.ci * d.h * d.w..(n + 1) * d.ci * d.h * d.w];
            col2im(&dcol, d.ci, d.h, d.w, d.k, geom, d.oh, d.ow, img);
        }
        if let Some(db) = db.as_mut() {
            for co in 0..d.co {
                db[co] += dout_n[co * s..(co + 1) * s].iter().copied().sum();
            }
        }
    }
    Ok(ConvGrads { dx, dw, db })
}

/// Transposed convolution. The kernel is shared with the paired forward
/// convolution: shape [co, ci, k, k] where the transposed op maps co -> ci.
/// By construction this is the exact adjoint of [`conv2d_forward`] with the
/// same geometry, so <conv(x), y> == <x, deconv(y)> holds to rounding.
pub fn deconv2d_forward<E: Scalar>(
    y: &Tensor<E>,
    w: &Tensor<E>,
    bias: Option<&[E]>,
    geom: ConvGeom,
    output_padding: usize,
) -> Result<Tensor<E>> {
    super::validate_kernel(w.shape)?;
    let [n, yc, yh, yw] = y.shape;
    let [co, ci, k, _] = w.shape;
    if yc != co {
        return Err(Error::config(format!(
            "channel axis: transposed conv input has {yc} channels but kernel expects {co}"
        )));
    }
    if let Some(b) = bias {
        if b.len() != ci {
            return Err(Error::config(format!(
                "bias axis: {} entries for {} output channels",
                b.len(),
                ci
            )));
        }
    }
    let oh = geom.deconv_out(yh, k, output_padding)?;
    let ow = geom.deconv_out(yw, k, output_padding)?;
    let s = yh * yw;
    let kk = ci * k * k;
    let mut out = Tensor::zeros([n, ci, oh, ow]);
    // W transposed to [ci*k*k, co].
    let mut wt = vec![E::ZERO; kk * co];
    for c in 0..co {
        for j in 0..kk {
            wt[j * co + c] = w.data[c * kk + j];
        }
    }
    let mut col = vec![E::ZERO; kk * s];
    for b_idx in 0..n {
        let y_n = &y.data[b_idx * co * s..(b_idx + 1) * co * s];
        gemm(kk, co, s, &wt, y_n, &mut col, true);
        let img = &mut out.data[b_idx * ci * oh * ow..(b_idx + 1) * ci * oh * ow];
        col2im(&col, ci, oh, ow, k, geom, yh, yw, img);
        if let Some(b) = bias {
            for c in 0..ci {
                let bv = b[c];
                for v in &mut img[c * oh * ow..(c + 1) * oh * ow] {
                    *v += bv;
                }
            }
        }
    }
    Ok(out)
}

pub fn deconv2d_backward<E: Scalar>(
    y: &Tensor<E>,
    w: &Tensor<E>,
    d_out: &Tensor<E>,
    geom: ConvGeom,
    need_dy: bool,
    need_dw: bool,
    need_db: bool,
) -> Result<ConvGrads<E>> {
    let [n, co, yh, yw] = y.shape;
    let [_, ci, k, _] = w.shape;
    let [_, oc, oh, ow] = d_out.shape;
    debug_assert_eq!(oc, ci);
    let s = yh * yw;
    let kk = ci * k * k;
    let mut dy = need_dy.then(|| Tensor::zeros(y.shape));
    let mut dw = need_dw.then(|| Tensor::zeros(w.shape));
    let mut db = need_db.then(|| vec![E::ZERO; ci]);
    let mut col = vec![E::ZERO; kk * s];
    for b_idx in 0..n {
        let dout_img = &d_out.data[b_idx * ci * oh * ow..(b_idx + 1) * ci * oh * ow];
        im2col(dout_img, ci, oh, ow, k, geom, yh, yw, &mut col);
        if let Some(dy) = dy.as_mut() {
            // dL/dy = conv(dL/dout) with the shared kernel.
            let dy_n = &mut dy.data[b_idx * co * s..(b_idx + 1) * co * s];
            gemm(co, kk, s, &w.data, &col, dy_n, true);
        }
        if let Some(dw) = dw.as_mut() {
            let y_n = &y.data[b_idx * co * s..(b_idx + 1) * co * s];
            gemm_abt(co, kk, s, y_n, &col, &mut dw.data);
        }
        if let Some(db) = db.as_mut() {
            for c in 0..ci {
                db[c] += dout_img[c * oh * ow..(c + 1) * oh * ow].iter().copied().sum();
            }
        }
    }
    Ok(ConvGrads { dx: dy, dw, db })
}

/// 3x3 average pooling with padding 1 and a boundary-corrected divisor:
/// each output is the mean over the in-bounds part of its window.
pub fn avg_pool3_forward<E: Scalar>(x: &Tensor<E>, stride: usize) -> Result<Tensor<E>> {
    let [n, c, h, w] = x.shape;
    let geom = ConvGeom { stride, padding: 1, dilation: 1 };
    let [oh, ow] = conv_out_shape([h, w], 3, geom)?;
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for bn in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = E::ZERO;
                    let mut count = 0usize;
                    for ky in 0..3usize {
                        for kx in 0..3usize {
                            let iy = (oy * stride + ky) as isize - 1;
                            let ix = (ox * stride + kx) as isize - 1;
                            if iy < 0 || ix < 0 || iy as usize >= h || ix as usize >= w {
                                continue;
                            }
                            acc += x.at(bn, ch, iy as usize, ix as usize);
                            count += 1;
                        }
                    }
                    *out.at_mut(bn, ch, oy, ox) = acc / E::from_f64(count as f64);
                }
            }
        }
    }
    Ok(out)
}

pub fn avg_pool3_backward<E: Scalar>(
    x_shape: super::Shape4,
    d_out: &Tensor<E>,
    stride: usize,
) -> Tensor<E> {
    let [_, _, h, w] = x_shape;
    let [n, c, oh, ow] = d_out.shape;
    let mut dx = Tensor::zeros(x_shape);
    for bn in 0..n {
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut count = 0usize;
                    for ky in 0..3usize {
                        for kx in 0..3usize {
                            let iy = (oy * stride + ky) as isize - 1;
                            let ix = (ox * stride + kx) as isize - 1;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                count += 1;
                            }
                        }
                    }
                    let g = d_out.at(bn, ch, oy, ox) / E::from_f64(count as f64);
                    for ky in 0..3usize {
                        for kx in 0..3usize {
                            let iy = (oy * stride + ky) as isize - 1;
                            let ix = (ox * stride + kx) as isize - 1;
                            if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                *dx.at_mut(bn, ch, iy as usize, ix as usize) += g;
                            }
                        }
                    }
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_t(shape: super::super::Shape4, seed: u64) -> Tensor<f64> {
        Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn packed_conv_matches_direct_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(k, stride, pad, dil) in
            &[(3, 1, 1, 1), (3, 2, 1, 1), (1, 1, 0, 1), (3, 1, 2, 2), (3, 1, 4, 4)]
        {
            let x = Tensor::<f64>::randn([2, 3, 11, 9], 1.0, &mut rng);
            let w = Tensor::<f64>::randn([4, 3, k, k], 0.5, &mut rng);
            let b: Vec<f64> = (0..4).map(|i| i as f64 * 0.1).collect();
            let geom = ConvGeom { stride, padding: pad, dilation: dil };
            let fast = conv2d_forward(&x, &w, Some(&b), geom).unwrap();
            let slow = conv2d_forward_direct(&x, &w, Some(&b), geom).unwrap();
            let denom = slow.data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            assert!(fast.max_abs_diff(&slow) / denom < 1e-6, "geometry {k},{stride},{pad},{dil}");
        }
    }

    #[test]
    fn hand_computed_center_value() {
        // 3x3 ramp under an all-ones 3x3 kernel with padding 1: the center
        // output is the full sum 1+2+...+9 = 45.
        let x = Tensor::from_vec(
            [1, 1, 3, 3],
            vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap();
        let w = Tensor::filled([1, 1, 3, 3], 1.0f64);
        let y = conv2d_forward(&x, &w, None, ConvGeom { stride: 1, padding: 1, dilation: 1 })
            .unwrap();
        assert_eq!(y.at(0, 0, 1, 1), 45.0);
        assert_eq!(y.data, vec![12.0, 21.0, 16.0, 27.0, 45.0, 33.0, 24.0, 39.0, 28.0]);
    }

    #[test]
    fn one_by_one_identity_kernel() {
        let x = rand_t([1, 1, 5, 5], 11);
        let w = Tensor::filled([1, 1, 1, 1], 1.0f64);
        let y = conv2d_forward(&x, &w, None, ConvGeom::unit()).unwrap();
        assert_eq!(y.data, x.data);
        let y = deconv2d_forward(&x, &w, None, ConvGeom::unit(), 0).unwrap();
        assert_eq!(y.data, x.data);
    }

    #[test]
    fn strided_conv_output_shape() {
        let x = Tensor::<f64>::zeros([1, 3, 256, 256]);
        let w = Tensor::<f64>::zeros([64, 3, 3, 3]);
        let y = conv2d_forward(&x, &w, None, ConvGeom { stride: 2, padding: 1, dilation: 1 })
            .unwrap();
        assert_eq!(y.shape, [1, 64, 128, 128]);
    }

    #[test]
    fn deconv_shape_formula() {
        let x = Tensor::<f64>::zeros([1, 8, 8, 8]);
        let w = Tensor::<f64>::zeros([8, 4, 3, 3]);
        let y = deconv2d_forward(&x, &w, None, ConvGeom { stride: 2, padding: 1, dilation: 1 }, 1)
            .unwrap();
        assert_eq!(y.shape, [1, 4, 16, 16]);
    }

    #[test]
    fn conv_deconv_adjointness() {
        // <conv(x, W), y> == <x, deconv(y, W)> for 100 random trials.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for trial in 0..100 {
            let geom = ConvGeom { stride: 1 + (trial % 2), padding: 1, dilation: 1 };
            let x = Tensor::<f64>::randn([1, 3, 8, 8], 1.0, &mut rng);
            let w = Tensor::<f64>::randn([5, 3, 3, 3], 0.5, &mut rng);
            let cx = conv2d_forward(&x, &w, None, geom).unwrap();
            let y = Tensor::<f64>::randn(cx.shape, 1.0, &mut rng);
            let outpad = 8 - geom.deconv_out(cx.shape[2], 3, 0).unwrap();
            let ty = deconv2d_forward(&y, &w, None, geom, outpad).unwrap();
            assert_eq!(ty.shape, x.shape);
            let lhs: f64 = cx.data.iter().zip(&y.data).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.data.iter().zip(&ty.data).map(|(a, b)| a * b).sum();
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            assert!(
                ((lhs - rhs) / scale).abs() < 1e-10,
                "trial {trial}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn avg_pool_constant_and_ramp() {
        let x = Tensor::filled([1, 1, 6, 6], 5.0f64);
        let y = avg_pool3_forward(&x, 2).unwrap();
        assert!(y.data.iter().all(|&v| v == 5.0));

        // 4x4 ramp 1..16, stride 2, padding 1: means computed by hand with
        // the boundary-corrected divisor.
        let x = Tensor::from_vec([1, 1, 4, 4], (1..=16).map(f64::from).collect()).unwrap();
        let y = avg_pool3_forward(&x, 2).unwrap();
        assert_eq!(y.shape, [1, 1, 2, 2]);
        assert_eq!(y.data, vec![3.5, 5.0, 9.5, 11.0]);
    }

    #[test]
    fn avg_pool_stride2_twice_halves_twice() {
        let x = Tensor::<f64>::zeros([1, 2, 256, 256]);
        let y = avg_pool3_forward(&x, 2).unwrap();
        let z = avg_pool3_forward(&y, 2).unwrap();
        assert_eq!(z.shape, [1, 2, 64, 64]);
    }

    #[test]
    fn mismatched_channels_name_the_axis() {
        let x = Tensor::<f64>::zeros([1, 3, 8, 8]);
        let w = Tensor::<f64>::zeros([4, 2, 3, 3]);
        let err = conv2d_forward(&x, &w, None, ConvGeom::unit()).unwrap_err();
        assert!(err.to_string().contains("channel axis"));
    }
}
