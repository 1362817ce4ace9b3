//! Batched forward and backward kernels, one pair per layer type.
//!
//! Activations are stored sample-major: `batch x (per-sample shape)`.

use super::gemm::{gemm, View};
use super::layer::NORM_EPS;

fn im2col(x: &[f64], c: usize, h: usize, w: usize, cols: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &x[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    let dst = &mut row[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    for (xx, d) in dst.iter_mut().enumerate() {
                        let sx = xx as isize + kx as isize - 1;
                        *d = if sx < 0 || sx >= w as isize {
                            0.0
                        } else {
                            src[sx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add(cols: &[f64], c: usize, h: usize, w: usize, dx: &mut [f64]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut dx[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[(ci * 9 + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            dst[sx as usize] += row[y * w + xx];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) struct ConvDims {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
}

pub(crate) fn conv_forward(p: &[f64], d: &ConvDims, batch: usize, x: &[f64], out: &mut [f64]) {
    let hw = d.h * d.w;
    let k = d.cin * 9;
    let (weight, bias) = p.split_at(d.cout * k);
    let mut cols = vec![0.0; k * hw];
    for n in 0..batch {
        im2col(&x[n * d.cin * hw..(n + 1) * d.cin * hw], d.cin, d.h, d.w, &mut cols);
        let o = &mut out[n * d.cout * hw..(n + 1) * d.cout * hw];
        gemm(
            d.cout,
            k,
            hw,
            1.0,
            View::row_major(weight, k),
            View::row_major(&cols, hw),
            0.0,
            o,
        );
        for co in 0..d.cout {
            let b = bias[co];
            for v in &mut o[co * hw..(co + 1) * hw] {
                *v += b;
            }
        }
    }
}

pub(crate) fn conv_backward(
    p: &[f64],
    d: &ConvDims,
    batch: usize,
    x: &[f64],
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dp: Option<&mut [f64]>,
) {
    let hw = d.h * d.w;
    let k = d.cin * 9;
    let weight = &p[..d.cout * k];
    let mut cols = vec![0.0; k * hw];
    let mut dcols = vec![0.0; k * hw];
    let mut dx = dx;
    let mut dp = dp;
    for n in 0..batch {
        let dyn_ = &dy[n * d.cout * hw..(n + 1) * d.cout * hw];
        if let Some(dp) = dp.as_deref_mut() {
            im2col(&x[n * d.cin * hw..(n + 1) * d.cin * hw], d.cin, d.h, d.w, &mut cols);
            let (dw, db) = dp.split_at_mut(d.cout * k);
            gemm(
                d.cout,
                hw,
                k,
                1.0,
                View::row_major(dyn_, hw),
                View::transposed(&cols, hw),
                1.0,
                dw,
            );
            for co in 0..d.cout {
                db[co] += dyn_[co * hw..(co + 1) * hw].iter().sum::<f64>();
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            gemm(
                k,
                d.cout,
                hw,
                1.0,
                View::transposed(weight, k),
                View::row_major(dyn_, hw),
                0.0,
                &mut dcols,
            );
            col2im_add(&dcols, d.cin, d.h, d.w, &mut dx[n * d.cin * hw..(n + 1) * d.cin * hw]);
        }
    }
}

pub(crate) fn dense_forward(
    p: &[f64],
    fin: usize,
    fout: usize,
    batch: usize,
    x: &[f64],
    out: &mut [f64],
) {
    let (weight, bias) = p.split_at(fout * fin);
    gemm(
        batch,
        fin,
        fout,
        1.0,
        View::row_major(x, fin),
        View::transposed(weight, fin),
        0.0,
        out,
    );
    for row in out.chunks_exact_mut(fout) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += b;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    p: &[f64],
    fin: usize,
    fout: usize,
    batch: usize,
    x: &[f64],
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dp: Option<&mut [f64]>,
) {
    let weight = &p[..fout * fin];
    if let Some(dp) = dp {
        let (dw, db) = dp.split_at_mut(fout * fin);
        gemm(
            fout,
            batch,
            fin,
            1.0,
            View::transposed(dy, fout),
            View::row_major(x, fin),
            1.0,
            dw,
        );
        for row in dy.chunks_exact(fout) {
            for (g, v) in db.iter_mut().zip(row) {
                *g += v;
            }
        }
    }
    if let Some(dx) = dx {
        gemm(
            batch,
            fout,
            fin,
            1.0,
            View::row_major(dy, fout),
            View::row_major(weight, fin),
            0.0,
            dx,
        );
    }
}

/// Returns per-(sample, channel) `(mean, inv_std)` pairs for the backward pass.
pub(crate) fn norm_forward(
    p: &[f64],
    c: usize,
    hw: usize,
    batch: usize,
    x: &[f64],
    out: &mut [f64],
) -> Vec<(f64, f64)> {
    let (gamma, beta) = p.split_at(c);
    let mut stats = Vec::with_capacity(batch * c);
    for n in 0..batch {
        for ch in 0..c {
            let off = (n * c + ch) * hw;
            let xs = &x[off..off + hw];
            let mean = xs.iter().sum::<f64>() / hw as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            for (o, v) in out[off..off + hw].iter_mut().zip(xs) {
                *o = gamma[ch] * (v - mean) * inv + beta[ch];
            }
            stats.push((mean, inv));
        }
    }
    stats
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn norm_backward(
    p: &[f64],
    c: usize,
    hw: usize,
    batch: usize,
    x: &[f64],
    stats: &[(f64, f64)],
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dp: Option<&mut [f64]>,
) {
    let gamma = &p[..c];
    let mut dx = dx;
    let mut dp = dp;
    let m = hw as f64;
    for n in 0..batch {
        for ch in 0..c {
            let off = (n * c + ch) * hw;
            let (mean, inv) = stats[n * c + ch];
            let xs = &x[off..off + hw];
            let gs = &dy[off..off + hw];
            let mut sum_g = 0.0;
            let mut sum_gx = 0.0;
            for (v, g) in xs.iter().zip(gs) {
                let xhat = (v - mean) * inv;
                sum_g += g;
                sum_gx += g * xhat;
            }
            if let Some(dp) = dp.as_deref_mut() {
                dp[ch] += sum_gx;
                dp[c + ch] += sum_g;
            }
            if let Some(dx) = dx.as_deref_mut() {
                let scale = gamma[ch] * inv / m;
                for ((d, v), g) in dx[off..off + hw].iter_mut().zip(xs).zip(gs) {
                    let xhat = (v - mean) * inv;
                    *d = scale * (m * g - sum_g - xhat * sum_gx);
                }
            }
        }
    }
}

pub(crate) fn relu_forward(x: &[f64], out: &mut [f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o = v.max(0.0);
    }
}

pub(crate) fn relu_backward(x: &[f64], dy: &[f64], dx: &mut [f64]) {
    for ((d, v), g) in dx.iter_mut().zip(x).zip(dy) {
        *d = if *v > 0.0 { *g } else { 0.0 };
    }
}

pub(crate) fn pool_forward(c_total: usize, h: usize, w: usize, x: &[f64], out: &mut [f64]) {
    let (oh, ow) = (h / 2, w / 2);
    for plane in 0..c_total {
        let xs = &x[plane * h * w..(plane + 1) * h * w];
        let os = &mut out[plane * oh * ow..(plane + 1) * oh * ow];
        for y in 0..oh {
            for xx in 0..ow {
                let i = 2 * y * w + 2 * xx;
                os[y * ow + xx] = 0.25 * (xs[i] + xs[i + 1] + xs[i + w] + xs[i + w + 1]);
            }
        }
    }
}

pub(crate) fn pool_backward(c_total: usize, h: usize, w: usize, dy: &[f64], dx: &mut [f64]) {
    let (oh, ow) = (h / 2, w / 2);
    for plane in 0..c_total {
        let gs = &dy[plane * oh * ow..(plane + 1) * oh * ow];
        let ds = &mut dx[plane * h * w..(plane + 1) * h * w];
        for y in 0..oh {
            for xx in 0..ow {
                let g = 0.25 * gs[y * ow + xx];
                let i = 2 * y * w + 2 * xx;
                ds[i] = g;
                ds[i + 1] = g;
                ds[i + w] = g;
                ds[i + w + 1] = g;
            }
        }
    }
}
