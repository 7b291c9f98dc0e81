//! Valid (no padding), stride-1 cross-correlation over `[N, C, H, W]` batches.
//!
//! One-dimensional signals are carried as maps of height 1. The kernel
//! lowers each sample to a column matrix and runs a single GEMM per sample.

use crate::error::{Error, Result};
use crate::numerics::gemm::{gemm, MatRef};
use crate::numerics::{Backward, Tensor};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn k(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }
}

fn geometry(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Geometry> {
    let (xs, ws) = (input.shape(), weight.shape());
    if xs.len() != 4 || ws.len() != 4 {
        return Err(Error::shape(format!(
            "conv expects [N,C,H,W] input and [O,C,kh,kw] filters, got {xs:?} and {ws:?}"
        )));
    }
    let [n, c, h, w] = [xs[0], xs[1], xs[2], xs[3]];
    let [o, wc, kh, kw] = [ws[0], ws[1], ws[2], ws[3]];
    if wc != c {
        return Err(Error::shape(format!("conv filters expect {wc} planes, input has {c}")));
    }
    if bias.shape() != [o] {
        return Err(Error::shape(format!("conv bias {:?} for {o} planes", bias.shape())));
    }
    if kh > h || kw > w {
        return Err(Error::shape(format!(
            "conv filter {kh}x{kw} larger than input {h}x{w}"
        )));
    }
    Ok(Geometry {
        n,
        c,
        h,
        w,
        o,
        kh,
        kw,
        ho: h - kh + 1,
        wo: w - kw + 1,
    })
}

fn im2col(g: &Geometry, x: &[f64], cols: &mut [f64]) {
    let p = g.p();
    for c in 0..g.c {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let src = (c * g.h + oy + ky) * g.w + kx;
                    dst[oy * g.wo..(oy + 1) * g.wo].copy_from_slice(&x[src..src + g.wo]);
                }
            }
        }
    }
}

fn col2im_add(g: &Geometry, cols: &[f64], x: &mut [f64]) {
    let p = g.p();
    for c in 0..g.c {
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.ho {
                    let dst = (c * g.h + oy + ky) * g.w + kx;
                    for (d, s) in x[dst..dst + g.wo]
                        .iter_mut()
                        .zip(&src[oy * g.wo..(oy + 1) * g.wo])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Output plane `o` = sum over input planes of the cross-correlation with
/// `weight[o, c]`, plus `bias[o]`. Output extent is `input - filter + 1`.
pub fn conv_forward(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let g = geometry(input, weight, bias)?;
    let (k, p) = (g.k(), g.p());
    let in_len = g.c * g.h * g.w;
    let mut out = vec![0.0; g.n * g.o * p];
    let mut cols = vec![0.0; k * p];
    let wmat = MatRef::new(weight.data(), g.o, k);
    for n in 0..g.n {
        im2col(&g, &input.data()[n * in_len..(n + 1) * in_len], &mut cols);
        let dst = &mut out[n * g.o * p..(n + 1) * g.o * p];
        gemm(wmat, MatRef::new(&cols, k, p), 0.0, dst);
        for (plane, &b) in dst.chunks_exact_mut(p).zip(bias.data()) {
            plane.iter_mut().for_each(|v| *v += b);
        }
    }
    Tensor::new(vec![g.n, g.o, g.ho, g.wo], out)
}

/// Tape node for [`conv_forward`]; inputs are `[input, weight, bias]`.
pub struct ConvBackward;

impl Backward for ConvBackward {
    fn name(&self) -> &'static str {
        "conv"
    }

    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        let (x, weight, bias) = (inputs[0], inputs[1], inputs[2]);
        let g = geometry(x, weight, bias)?;
        let (k, p) = (g.k(), g.p());
        let in_len = g.c * g.h * g.w;
        let mut gx = vec![0.0; x.len()];
        let mut gw = vec![0.0; weight.len()];
        let mut gb = vec![0.0; g.o];
        let mut cols = vec![0.0; k * p];
        let mut gcols = vec![0.0; k * p];
        let wmat = MatRef::new(weight.data(), g.o, k);
        for n in 0..g.n {
            let xn = &x.data()[n * in_len..(n + 1) * in_len];
            let gn = &grad_out.data()[n * g.o * p..(n + 1) * g.o * p];
            let gmat = MatRef::new(gn, g.o, p);
            im2col(&g, xn, &mut cols);
            gemm(gmat, MatRef::new(&cols, k, p).t(), 1.0, &mut gw);
            for (acc, plane) in gb.iter_mut().zip(gn.chunks_exact(p)) {
                *acc += plane.iter().sum::<f64>();
            }
            gemm(wmat.t(), gmat, 0.0, &mut gcols);
            col2im_add(&g, &gcols, &mut gx[n * in_len..(n + 1) * in_len]);
        }
        Ok(vec![
            Tensor::new(x.shape().to_vec(), gx)?,
            Tensor::new(weight.shape().to_vec(), gw)?,
            Tensor::new(bias.shape().to_vec(), gb)?,
        ])
    }
}
