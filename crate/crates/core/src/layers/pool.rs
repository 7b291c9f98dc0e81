//! Non-overlapping max pooling over the trailing two axes of `[N, C, H, W]`.

use crate::error::{Error, Result};
use crate::numerics::{Backward, Tensor};

/// Pools with a `wh x ww` window (1D layers use `wh = 1`). Extents must be
/// divisible by the window. Returns the pooled tensor and, for each output
/// element, the flat input index that won (first maximum in row-major order).
pub fn maxpool_forward(input: &Tensor, wh: usize, ww: usize) -> Result<(Tensor, Vec<usize>)> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(Error::shape(format!("maxpool expects [N,C,H,W], got {s:?}")));
    }
    if wh == 0 || ww == 0 {
        return Err(Error::shape("maxpool window must be positive"));
    }
    let [n, c, h, w] = [s[0], s[1], s[2], s[3]];
    if h % wh != 0 || w % ww != 0 {
        return Err(Error::shape(format!(
            "maxpool window {wh}x{ww} does not divide {h}x{w}"
        )));
    }
    let (ho, wo) = (h / wh, w / ww);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = base + oy * wh * w + ox * ww;
                for dy in 0..wh {
                    for dx in 0..ww {
                        let idx = base + (oy * wh + dy) * w + ox * ww + dx;
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, ho, wo], out)?, argmax))
}

/// Routes each output adjoint to its argmax input position.
pub struct MaxPoolBackward {
    pub argmax: Vec<usize>,
}

impl Backward for MaxPoolBackward {
    fn name(&self) -> &'static str {
        "maxpool"
    }

    fn backward(&self, grad_out: &Tensor, inputs: &[&Tensor], _: &Tensor) -> Result<Vec<Tensor>> {
        let mut gx = Tensor::zeros(inputs[0].shape());
        let d = gx.data_mut();
        for (&idx, &g) in self.argmax.iter().zip(grad_out.data()) {
            d[idx] += g;
        }
        Ok(vec![gx])
    }
}
