//! 2-D cross-correlation with zero padding, plus its reverse-mode kernels.
//!
//! Layout is NCHW. The k=3/stride-1 case (nearly all of the network's
//! compute) runs through fused three-tap row kernels whose edge handling is
//! planned once per convolution; other shapes fall back to generic indexed
//! loops. Parallelism splits over independent output planes, so the
//! per-element accumulation order is fixed and results are deterministic.

use rayon::prelude::*;

use super::{ConvSpec, Tensor, TensorError};
use crate::Scalar;

/// Output extent for one spatial dimension, `floor((e + 2p - d(k-1) - 1)/s) + 1`.
/// `None` when the kernel span exceeds the padded input.
pub fn conv_output_extent(extent: usize, k: usize, s: usize, p: usize, d: usize) -> Option<usize> {
    let span = d * (k - 1) + 1;
    let padded = extent + 2 * p;
    if padded < span {
        return None;
    }
    Some((padded - span) / s + 1)
}

/// Work threshold below which the plane loop stays serial.
const PAR_MIN_MACS: usize = 1 << 16;

#[inline]
fn axpy<T: Scalar>(y: &mut [T], x: &[T], a: T) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, &xi) in y.iter_mut().zip(x.iter()) {
        *yi = *yi + a * xi;
    }
}

/// Row plan for a three-tap stride-1 kernel: the fused interior `[lo, hi)`
/// where every tap is in bounds, plus per-tap prefix/suffix edge ranges.
/// Depends only on row widths and tap offsets, so it is computed once per
/// convolution and reused for every row.
#[derive(Clone, Copy)]
struct Plan3 {
    offs: [isize; 3],
    lo: usize,
    hi: usize,
    pre: [(usize, usize); 3],
    suf: [(usize, usize); 3],
}

fn plan3(ow: usize, iw: usize, offs: [isize; 3]) -> Plan3 {
    let owi = ow as isize;
    let iwi = iw as isize;
    let mut lo = 0isize;
    let mut hi = owi;
    for &o in &offs {
        lo = lo.max(-o);
        hi = hi.min(iwi - o);
    }
    let lo = lo.clamp(0, owi);
    let hi = hi.clamp(lo, owi);
    let mut pre = [(0usize, 0usize); 3];
    let mut suf = [(0usize, 0usize); 3];
    for t in 0..3 {
        let t_lo = (-offs[t]).max(0).min(owi);
        let t_hi = (iwi - offs[t]).clamp(t_lo, owi);
        pre[t] = (t_lo as usize, lo.min(t_hi) as usize);
        suf[t] = (hi.max(t_lo) as usize, t_hi as usize);
    }
    Plan3 {
        offs,
        lo: lo as usize,
        hi: hi as usize,
        pre,
        suf,
    }
}

/// `out[i] += w0*in[i+o0] + w1*in[i+o1] + w2*in[i+o2]` under a [`Plan3`].
#[inline]
fn row_conv3<T: Scalar>(plan: &Plan3, out: &mut [T], input: &[T], wts: [T; 3]) {
    for t in 0..3 {
        let o = plan.offs[t];
        for ox in plan.pre[t].0..plan.pre[t].1 {
            out[ox] = out[ox] + wts[t] * input[(ox as isize + o) as usize];
        }
        for ox in plan.suf[t].0..plan.suf[t].1 {
            out[ox] = out[ox] + wts[t] * input[(ox as isize + o) as usize];
        }
    }
    let n = plan.hi - plan.lo;
    if n == 0 {
        return;
    }
    let dst = &mut out[plan.lo..][..n];
    let a = &input[(plan.lo as isize + plan.offs[0]) as usize..][..n];
    let b = &input[(plan.lo as isize + plan.offs[1]) as usize..][..n];
    let c = &input[(plan.lo as isize + plan.offs[2]) as usize..][..n];
    let (w0, w1, w2) = (wts[0], wts[1], wts[2]);
    for i in 0..n {
        dst[i] = dst[i] + w0 * a[i] + w1 * b[i] + w2 * c[i];
    }
}

/// Three simultaneous dot products `acc[t] += sum_i g[i] * x[i + o_t]`
/// under the same plan; used by the weight gradient.
#[inline]
fn row_dot3<T: Scalar>(plan: &Plan3, g: &[T], x: &[T], acc: &mut [T; 3]) {
    for t in 0..3 {
        let o = plan.offs[t];
        let mut edge = T::zero();
        for ox in plan.pre[t].0..plan.pre[t].1 {
            edge = edge + g[ox] * x[(ox as isize + o) as usize];
        }
        for ox in plan.suf[t].0..plan.suf[t].1 {
            edge = edge + g[ox] * x[(ox as isize + o) as usize];
        }
        acc[t] = acc[t] + edge;
    }
    let n = plan.hi - plan.lo;
    if n == 0 {
        return;
    }
    let gs = &g[plan.lo..][..n];
    let a = &x[(plan.lo as isize + plan.offs[0]) as usize..][..n];
    let b = &x[(plan.lo as isize + plan.offs[1]) as usize..][..n];
    let c = &x[(plan.lo as isize + plan.offs[2]) as usize..][..n];
    const LANES: usize = 8;
    let mut l0 = [T::zero(); LANES];
    let mut l1 = [T::zero(); LANES];
    let mut l2 = [T::zero(); LANES];
    let chunks = n / LANES;
    for ch in 0..chunks {
        let base = ch * LANES;
        for i in 0..LANES {
            let gi = gs[base + i];
            l0[i] = l0[i] + gi * a[base + i];
            l1[i] = l1[i] + gi * b[base + i];
            l2[i] = l2[i] + gi * c[base + i];
        }
    }
    let mut t0 = T::zero();
    let mut t1 = T::zero();
    let mut t2 = T::zero();
    for i in chunks * LANES..n {
        t0 = t0 + gs[i] * a[i];
        t1 = t1 + gs[i] * b[i];
        t2 = t2 + gs[i] * c[i];
    }
    for i in 0..LANES {
        t0 = t0 + l0[i];
        t1 = t1 + l1[i];
        t2 = t2 + l2[i];
    }
    acc[0] = acc[0] + t0;
    acc[1] = acc[1] + t1;
    acc[2] = acc[2] + t2;
}

/// Valid output-x range `[ox0, ox1)` such that `ox*s + kx*d - p` lands inside `[0, w)`.
#[inline]
fn valid_out_range(w: usize, ow: usize, s: usize, p: usize, kxd: usize) -> (usize, usize) {
    let ox0 = if kxd >= p { 0 } else { (p - kxd).div_ceil(s) };
    let ox1 = if w + p > kxd {
        (((w - 1 + p - kxd) / s) + 1).min(ow)
    } else {
        0
    };
    (ox0, ox1.max(ox0))
}

fn check_shapes<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<(usize, usize, usize, usize, usize), TensorError> {
    if x.shape().len() != 4 {
        return Err(TensorError::RankMismatch {
            context: "conv2d input",
            expected: 4,
            got: x.shape().to_vec(),
        });
    }
    let [n, cin, h, win] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    if cin != spec.in_channels {
        return Err(TensorError::ShapeMismatch {
            context: "conv2d input channels",
            dim: 1,
            got: cin,
            expected: spec.in_channels,
        });
    }
    let expect_w = spec.weight_shape();
    if w.shape() != expect_w.as_slice() {
        let dim = w
            .shape()
            .iter()
            .zip(&expect_w)
            .position(|(a, b)| a != b)
            .unwrap_or(0);
        return Err(TensorError::ShapeMismatch {
            context: "conv2d weight",
            dim,
            got: w.shape().get(dim).copied().unwrap_or(0),
            expected: expect_w[dim],
        });
    }
    if b.shape() != [spec.out_channels] {
        return Err(TensorError::ShapeMismatch {
            context: "conv2d bias",
            dim: 0,
            got: b.numel(),
            expected: spec.out_channels,
        });
    }
    let oh = conv_output_extent(h, spec.kernel, spec.stride, spec.padding, spec.dilation);
    let ow = conv_output_extent(win, spec.kernel, spec.stride, spec.padding, spec.dilation);
    match (oh, ow) {
        (Some(oh), Some(ow)) if oh > 0 && ow > 0 => Ok((n, h, win, oh, ow)),
        _ => Err(TensorError::EmptyConvOutput {
            h,
            w: win,
            k: spec.kernel,
            s: spec.stride,
            p: spec.padding,
            d: spec.dilation,
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn forward_plane<T: Scalar>(
    out_plane: &mut [T],
    x_img: &[T],
    w_filter: &[T],
    bias: T,
    spec: &ConvSpec,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
    plan: Option<&Plan3>,
) {
    let (k, s, p, d) = (spec.kernel, spec.stride, spec.padding, spec.dilation);
    out_plane.fill(bias);
    for ci in 0..spec.in_channels {
        let x_chan = &x_img[ci * h * w..(ci + 1) * h * w];
        if let Some(plan) = plan {
            for ky in 0..3 {
                let wbase = (ci * 3 + ky) * 3;
                let wts = [w_filter[wbase], w_filter[wbase + 1], w_filter[wbase + 2]];
                for oy in 0..oh {
                    let iy = (oy + ky * d) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    row_conv3(
                        plan,
                        &mut out_plane[oy * ow..(oy + 1) * ow],
                        &x_chan[iy as usize * w..(iy as usize + 1) * w],
                        wts,
                    );
                }
            }
            continue;
        }
        for ky in 0..k {
            for kx in 0..k {
                let wgt = w_filter[(ci * k + ky) * k + kx];
                if wgt == T::zero() {
                    continue;
                }
                let kxd = kx * d;
                let (ox0, ox1) = valid_out_range(w, ow, s, p, kxd);
                if ox0 >= ox1 {
                    continue;
                }
                for oy in 0..oh {
                    let iy = (oy * s + ky * d) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let x_row = &x_chan[iy as usize * w..(iy as usize + 1) * w];
                    let out_row = &mut out_plane[oy * ow..(oy + 1) * ow];
                    if s == 1 {
                        let ix0 = ox0 + kxd - p;
                        axpy(&mut out_row[ox0..ox1], &x_row[ix0..ix0 + (ox1 - ox0)], wgt);
                    } else {
                        for ox in ox0..ox1 {
                            out_row[ox] = out_row[ox] + wgt * x_row[ox * s + kxd - p];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x` (NCHW) with `w` (Cout,Cin,K,K) plus per-channel bias.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>, TensorError> {
    let (n, h, win, oh, ow) = check_shapes(x, w, b, spec)?;
    let (cin, cout, k) = (spec.in_channels, spec.out_channels, spec.kernel);
    let mut out = Tensor::zeros(vec![n, cout, oh, ow]);
    let plane = oh * ow;
    let macs = n * cout * plane * cin * k * k;
    let (p, d) = (spec.padding, spec.dilation);
    let plan = (k == 3 && spec.stride == 1).then(|| {
        plan3(
            ow,
            win,
            [
                -(p as isize),
                d as isize - p as isize,
                2 * d as isize - p as isize,
            ],
        )
    });

    let run = |(idx, out_plane): (usize, &mut [T])| {
        let (ni, co) = (idx / cout, idx % cout);
        let x_img = &x.data()[ni * cin * h * win..(ni + 1) * cin * h * win];
        let w_filter = &w.data()[co * cin * k * k..(co + 1) * cin * k * k];
        forward_plane(
            out_plane,
            x_img,
            w_filter,
            b.data()[co],
            spec,
            h,
            win,
            oh,
            ow,
            plan.as_ref(),
        );
    };

    if macs >= PAR_MIN_MACS && n * cout > 1 {
        out.data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(run);
    } else {
        out.data_mut().chunks_mut(plane).enumerate().for_each(run);
    }
    Ok(out)
}

/// Gradients of `conv2d_forward` w.r.t. input, weight and bias. Each piece
/// is computed only when requested.
pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
    spec: &ConvSpec,
    need_gx: bool,
    need_gw: bool,
) -> (Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>) {
    let (k, s, p, d) = (spec.kernel, spec.stride, spec.padding, spec.dilation);
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let (n, h, win) = (x.shape()[0], x.shape()[2], x.shape()[3]);
    let (oh, ow) = (grad_out.shape()[2], grad_out.shape()[3]);
    let plane_in = h * win;
    let plane_out = oh * ow;
    let macs = n * cout * plane_out * cin * k * k;
    let par = macs >= PAR_MIN_MACS;
    let fused3 = k == 3 && s == 1;

    // d/dx: scatter grad_out through the transposed kernel; the taps read
    // grad rows at offsets p - kx*d.
    let gx = need_gx.then(|| {
        let plan = fused3.then(|| {
            plan3(
                win,
                ow,
                [
                    p as isize,
                    p as isize - d as isize,
                    p as isize - 2 * d as isize,
                ],
            )
        });
        let mut gx = Tensor::zeros(x.shape().to_vec());
        let scatter = |(idx, gx_plane): (usize, &mut [T])| {
            let (ni, ci) = (idx / cin, idx % cin);
            let g_img = &grad_out.data()[ni * cout * plane_out..(ni + 1) * cout * plane_out];
            for co in 0..cout {
                let g_chan = &g_img[co * plane_out..(co + 1) * plane_out];
                if let Some(plan) = &plan {
                    for ky in 0..3 {
                        let wbase = ((co * cin + ci) * 3 + ky) * 3;
                        let wts = [w.data()[wbase], w.data()[wbase + 1], w.data()[wbase + 2]];
                        for oy in 0..oh {
                            let iy = (oy + ky * d) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            row_conv3(
                                plan,
                                &mut gx_plane[iy as usize * win..(iy as usize + 1) * win],
                                &g_chan[oy * ow..(oy + 1) * ow],
                                wts,
                            );
                        }
                    }
                    continue;
                }
                for ky in 0..k {
                    for kx in 0..k {
                        let wgt = w.data()[((co * cin + ci) * k + ky) * k + kx];
                        if wgt == T::zero() {
                            continue;
                        }
                        let kxd = kx * d;
                        let (ox0, ox1) = valid_out_range(win, ow, s, p, kxd);
                        for oy in 0..oh {
                            let iy = (oy * s + ky * d) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let g_row = &g_chan[oy * ow..(oy + 1) * ow];
                            let gx_row =
                                &mut gx_plane[iy as usize * win..(iy as usize + 1) * win];
                            for ox in ox0..ox1 {
                                let ix = ox * s + kxd - p;
                                gx_row[ix] = gx_row[ix] + wgt * g_row[ox];
                            }
                        }
                    }
                }
            }
        };
        if par && n * cin > 1 {
            gx.data_mut()
                .par_chunks_mut(plane_in)
                .enumerate()
                .for_each(scatter);
        } else {
            gx.data_mut()
                .chunks_mut(plane_in)
                .enumerate()
                .for_each(scatter);
        }
        gx
    });

    if !need_gw {
        return (gx, None, None);
    }

    // d/dw: dot products of grad rows against shifted input rows, one
    // (co, ci) filter slice per task.
    let mut gw = Tensor::zeros(w.shape().to_vec());
    let plan = fused3.then(|| {
        plan3(
            ow,
            win,
            [
                -(p as isize),
                d as isize - p as isize,
                2 * d as isize - p as isize,
            ],
        )
    });
    let filt = |(idx, gw_slice): (usize, &mut [T])| {
        let (co, ci) = (idx / cin, idx % cin);
        if let Some(plan) = &plan {
            for ky in 0..3 {
                let mut acc = [T::zero(); 3];
                for ni in 0..n {
                    let g_chan = &grad_out.data()
                        [(ni * cout + co) * plane_out..(ni * cout + co + 1) * plane_out];
                    let x_chan =
                        &x.data()[(ni * cin + ci) * plane_in..(ni * cin + ci + 1) * plane_in];
                    for oy in 0..oh {
                        let iy = (oy + ky * d) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        row_dot3(
                            plan,
                            &g_chan[oy * ow..(oy + 1) * ow],
                            &x_chan[iy as usize * win..(iy as usize + 1) * win],
                            &mut acc,
                        );
                    }
                }
                gw_slice[ky * 3..ky * 3 + 3].copy_from_slice(&acc);
            }
            return;
        }
        for ky in 0..k {
            for kx in 0..k {
                let kxd = kx * d;
                let (ox0, ox1) = valid_out_range(win, ow, s, p, kxd);
                if ox0 >= ox1 {
                    continue;
                }
                let mut acc = T::zero();
                for ni in 0..n {
                    let g_chan = &grad_out.data()
                        [(ni * cout + co) * plane_out..(ni * cout + co + 1) * plane_out];
                    let x_chan =
                        &x.data()[(ni * cin + ci) * plane_in..(ni * cin + ci + 1) * plane_in];
                    for oy in 0..oh {
                        let iy = (oy * s + ky * d) as isize - p as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let g_row = &g_chan[oy * ow..(oy + 1) * ow];
                        let x_row = &x_chan[iy as usize * win..(iy as usize + 1) * win];
                        for ox in ox0..ox1 {
                            acc = acc + g_row[ox] * x_row[ox * s + kxd - p];
                        }
                    }
                }
                gw_slice[ky * k + kx] = acc;
            }
        }
    };
    if par && cout * cin > 1 {
        gw.data_mut()
            .par_chunks_mut(k * k)
            .enumerate()
            .for_each(filt);
    } else {
        gw.data_mut().chunks_mut(k * k).enumerate().for_each(filt);
    }

    // d/db: sum grad_out over batch and space per output channel.
    let mut gb = Tensor::zeros(vec![cout]);
    for ni in 0..n {
        for co in 0..cout {
            let g_chan =
                &grad_out.data()[(ni * cout + co) * plane_out..(ni * cout + co + 1) * plane_out];
            let mut acc = T::zero();
            for &g in g_chan {
                acc = acc + g;
            }
            gb.data_mut()[co] = gb.data_mut()[co] + acc;
        }
    }

    (gx, Some(gw), Some(gb))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(shape: Vec<usize>) -> Tensor<f64> {
        Tensor::full(shape, 1.0)
    }

    #[test]
    fn all_ones_3x3_k3s1p1() {
        // Hand convolution: center sees all 9 taps, corners see 4.
        let x = ones(vec![1, 1, 3, 3]);
        let w = ones(vec![1, 1, 3, 3]);
        let b = Tensor::zeros(vec![1]);
        let spec = ConvSpec::k3s1p1d1(1, 1);
        let y = conv2d_forward(&x, &w, &b, &spec).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        assert_eq!(y.data()[4], 9.0);
        for corner in [0, 2, 6, 8] {
            assert_eq!(y.data()[corner], 4.0);
        }
        for edge in [1, 3, 5, 7] {
            assert_eq!(y.data()[edge], 6.0);
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let x = Tensor::<f64>::from_f64_slice(
            vec![1, 1, 3, 3],
            &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        );
        let mut wdata = vec![0.0; 9];
        wdata[4] = 1.0;
        let w = Tensor::from_f64_slice(vec![1, 1, 3, 3], &wdata);
        let b = Tensor::zeros(vec![1]);
        let y = conv2d_forward(&x, &w, &b, &ConvSpec::k3s1p1d1(1, 1)).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn dilated_center_tap_sum() {
        // 5x5 ones with a dilated 3x3 ones kernel: every dilated tap from the
        // center (offsets -2, 0, +2) stays inside, so the center is 9.
        let x = ones(vec![1, 1, 5, 5]);
        let w = ones(vec![1, 1, 3, 3]);
        let b = Tensor::zeros(vec![1]);
        let y = conv2d_forward(&x, &w, &b, &ConvSpec::k3s1p2d2(1, 1)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 5, 5]);
        assert_eq!(y.data()[12], 9.0);
        // corner taps at (-2,-2) offsets fall outside: only 4 survive
        assert_eq!(y.data()[0], 4.0);
    }

    #[test]
    fn strided_output_extent() {
        assert_eq!(conv_output_extent(64, 3, 2, 1, 1), Some(32));
        assert_eq!(conv_output_extent(4, 4, 1, 0, 1), Some(1));
        assert_eq!(conv_output_extent(2, 4, 1, 0, 1), None);
    }

    #[test]
    fn rejects_wrong_channel_count() {
        let x = ones(vec![1, 2, 3, 3]);
        let w = ones(vec![1, 1, 3, 3]);
        let b = Tensor::zeros(vec![1]);
        let err = conv2d_forward(&x, &w, &b, &ConvSpec::k3s1p1d1(1, 1)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("dimension 1"), "got: {msg}");
    }

    #[test]
    fn matches_naive_reference() {
        // Randomized cross-check against a direct quadruple-loop reference.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for &(s, p, d) in &[(1usize, 1usize, 1usize), (2, 1, 1), (1, 2, 2), (1, 0, 1)] {
            let (n, cin, cout, h, wd, k) = (2, 3, 4, 6, 7, 3);
            let x = Tensor::new(
                vec![n, cin, h, wd],
                (0..n * cin * h * wd)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            );
            let w = Tensor::new(
                vec![cout, cin, k, k],
                (0..cout * cin * k * k)
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect(),
            );
            let b = Tensor::new(
                vec![cout],
                (0..cout).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            let spec = ConvSpec::new(k, s, p, d, cin, cout).unwrap();
            let got = conv2d_forward(&x, &w, &b, &spec).unwrap();
            let (oh, ow) = (
                conv_output_extent(h, k, s, p, d).unwrap(),
                conv_output_extent(wd, k, s, p, d).unwrap(),
            );
            for ni in 0..n {
                for co in 0..cout {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut acc: f64 = b.data()[co];
                            for ci in 0..cin {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iy = (oy * s + ky * d) as isize - p as isize;
                                        let ix = (ox * s + kx * d) as isize - p as isize;
                                        if iy < 0
                                            || ix < 0
                                            || iy >= h as isize
                                            || ix >= wd as isize
                                        {
                                            continue;
                                        }
                                        acc += x.data()
                                            [((ni * cin + ci) * h + iy as usize) * wd + ix as usize]
                                            * w.data()[((co * cin + ci) * k + ky) * k + kx];
                                    }
                                }
                            }
                            let gi = ((ni * cout + co) * oh + oy) * ow + ox;
                            assert!(
                                (got.data()[gi] - acc).abs() < 1e-10,
                                "s={s} p={p} d={d}: mismatch at n={ni} co={co} oy={oy} ox={ox}: {} vs {acc}",
                                got.data()[gi]
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f32>::new(
            vec![2, 4, 16, 16],
            (0..2 * 4 * 256).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let spec = ConvSpec::k3s1p1d1(4, 8);
        let w = Tensor::<f32>::new(
            spec.weight_shape(),
            (0..8 * 4 * 9).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let b = Tensor::<f32>::new(vec![8], (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let y1 = conv2d_forward(&x, &w, &b, &spec).unwrap();
        let y2 = conv2d_forward(&x, &w, &b, &spec).unwrap();
        assert_eq!(y1.data(), y2.data());
    }
}
