//! Valid (unpadded), stride-1 2-D cross-correlation via im2col + GEMM.

use crate::error::{Error, Result};
use crate::nn::linalg::gemm;
use crate::nn::Tensor;

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new(input: &Tensor, filters: &Tensor, bias: &Tensor) -> Result<Self> {
        let [n, c, h, w] = dims4(input, "conv2d input")?;
        let [f, fc, kh, kw] = dims4(filters, "conv2d filters")?;
        if fc != c {
            return Err(Error::shape(
                "conv2d",
                format!("input has {c} channels but filters expect {fc} (filters {:?})", filters.shape()),
            ));
        }
        if bias.shape() != [f] {
            return Err(Error::shape("conv2d", format!("bias {:?} for {f} filters", bias.shape())));
        }
        if h < kh || w < kw {
            return Err(Error::shape("conv2d", format!("{h}x{w} input is smaller than the {kh}x{kw} filter")));
        }
        Ok(ConvGeometry { n, c, h, w, f, kh, kw, oh: h - kh + 1, ow: w - kw + 1 })
    }

    fn patch_len(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_area(&self) -> usize {
        self.oh * self.ow
    }
}

pub(crate) fn dims4(t: &Tensor, what: &'static str) -> Result<[usize; 4]> {
    match *t.shape() {
        [a, b, c, d] => Ok([a, b, c, d]),
        _ => Err(Error::shape(what, format!("expected rank 4, got {:?}", t.shape()))),
    }
}

/// Unfolds one sample `[C, H, W]` into `[C*kh*kw, oh*ow]`.
fn im2col(g: &ConvGeometry, x: &[f64], cols: &mut [f64]) {
    let area = g.out_area();
    let mut row = 0;
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let dst = &mut cols[row * area..(row + 1) * area];
                for oy in 0..g.oh {
                    let src = (oy + i) * g.w + j;
                    dst[oy * g.ow..(oy + 1) * g.ow].copy_from_slice(&plane[src..src + g.ow]);
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back onto the `[C, H, W]` sample.
fn col2im(g: &ConvGeometry, cols: &[f64], dx: &mut [f64]) {
    let area = g.out_area();
    let mut row = 0;
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for i in 0..g.kh {
            for j in 0..g.kw {
                let src = &cols[row * area..(row + 1) * area];
                for oy in 0..g.oh {
                    let base = (oy + i) * g.w + j;
                    for (d, s) in plane[base..base + g.ow].iter_mut().zip(&src[oy * g.ow..(oy + 1) * g.ow]) {
                        *d += s;
                    }
                }
                row += 1;
            }
        }
    }
}

/// Forward pass: `[N,C,H,W]` with filters `[F,C,kh,kw]` and bias `[F]` gives
/// `[N,F,H-kh+1,W-kw+1]`.
pub fn conv2d_forward(input: &Tensor, filters: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let g = ConvGeometry::new(input, filters, bias)?;
    let (plen, area) = (g.patch_len(), g.out_area());
    let in_len = g.c * g.h * g.w;
    let mut out = vec![0.0; g.n * g.f * area];
    let mut cols = vec![0.0; plen * area];
    for s in 0..g.n {
        im2col(&g, &input.data()[s * in_len..(s + 1) * in_len], &mut cols);
        let y = &mut out[s * g.f * area..(s + 1) * g.f * area];
        for (f, chunk) in y.chunks_mut(area).enumerate() {
            chunk.fill(bias.data()[f]);
        }
        gemm(g.f, plen, area, filters.data(), false, &cols, false, 1.0, y);
    }
    Ok(Tensor::from_parts_unchecked(vec![g.n, g.f, g.oh, g.ow], out))
}

pub(crate) struct ConvGrads {
    pub input: Tensor,
    pub filters: Vec<f64>,
    pub bias: Vec<f64>,
}

pub(crate) fn conv2d_backward(input: &Tensor, filters: &Tensor, bias: &Tensor, grad_out: &Tensor) -> Result<ConvGrads> {
    let g = ConvGeometry::new(input, filters, bias)?;
    let (plen, area) = (g.patch_len(), g.out_area());
    let in_len = g.c * g.h * g.w;
    let mut dx = vec![0.0; input.len()];
    let mut dw = vec![0.0; filters.len()];
    let mut db = vec![0.0; g.f];
    let mut cols = vec![0.0; plen * area];
    let mut dcols = vec![0.0; plen * area];
    for s in 0..g.n {
        let dy = &grad_out.data()[s * g.f * area..(s + 1) * g.f * area];
        for (f, chunk) in dy.chunks(area).enumerate() {
            db[f] += chunk.iter().sum::<f64>();
        }
        im2col(&g, &input.data()[s * in_len..(s + 1) * in_len], &mut cols);
        gemm(g.f, area, plen, dy, false, &cols, true, 1.0, &mut dw);
        gemm(plen, g.f, area, filters.data(), true, dy, false, 0.0, &mut dcols);
        col2im(&g, &dcols, &mut dx[s * in_len..(s + 1) * in_len]);
    }
    Ok(ConvGrads { input: Tensor::from_parts_unchecked(input.shape().to_vec(), dx), filters: dw, bias: db })
}
