//! Binary model persistence.
//!
//! Layout (all integers u32 little-endian, all reals f64 little-endian):
//!
//! ```text
//! "DIVF" version rank class_count class_rows[class_count]
//! input_kind(u8: 1 signal, 2 image) dim0 dim1
//! layer_count, then per layer a u8 tag and its fields:
//!   1 conv1d / 2 conv2d: out in kh kw, weight[out*in*kh*kw], bias[out]
//!   3 maxpool: window
//!   4 batchnorm: planes, gamma, beta, running_mean, running_var
//!   5 dropout: rate
//!   6 relu, 7 flatten
//!   8 dense: out in, weight[out*in], bias[out]
//! has_normalization(u8), then len, mean[len], std[len] when set
//! crc32 of every preceding byte
//! ```

use std::path::Path;

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::layers::{BatchNormLayer, ConvLayer, DenseLayer, FeatureExtractorModel, InputShape, Layer, Mode};
use crate::numerics::Tensor;
use crate::walsh::WalshCodebook;

pub const MAGIC: &[u8; 4] = b"DIVF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: FeatureExtractorModel,
    pub codebook: WalshCodebook,
    /// Input standardization fitted at training time, applied before inference.
    pub normalization: Option<Standardizer>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::format("size", format!("{v} exceeds u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize, field: &str) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(field, "file truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u32(&mut self, field: &str) -> Result<usize> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, n: usize, field: &str) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::format(field, "size overflow"))?;
        Ok(self
            .take(len, field)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn tensor(&mut self, shape: Vec<usize>, field: &str) -> Result<Tensor> {
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| Error::format(field, "size overflow"))?;
        Tensor::new(shape, self.f64s(n, field)?)
    }
}

pub fn to_bytes(ck: &Checkpoint) -> Result<Vec<u8>> {
    let mut w = Writer(MAGIC.to_vec());
    w.0.extend_from_slice(&VERSION.to_le_bytes());
    w.u32(ck.codebook.rank())?;
    w.u32(ck.codebook.class_count())?;
    for &r in ck.codebook.class_rows() {
        w.u32(r)?;
    }
    let model = &ck.model;
    if model.output_dim() != ck.codebook.rank() {
        return Err(Error::Wiring("model output does not match the codebook rank".into()));
    }
    match model.input_shape() {
        InputShape::Signal(l) => {
            w.u8(1);
            w.u32(l)?;
            w.u32(0)?;
        }
        InputShape::Image(h, ww) => {
            w.u8(2);
            w.u32(h)?;
            w.u32(ww)?;
        }
    }
    w.u32(model.layers().len())?;
    for layer in model.layers() {
        match layer {
            Layer::Conv(c) => {
                w.u8(if c.two_d { 2 } else { 1 });
                for &d in c.weight.shape() {
                    w.u32(d)?;
                }
                w.f64s(c.weight.data());
                w.f64s(c.bias.data());
            }
            Layer::MaxPool { window, .. } => {
                w.u8(3);
                w.u32(*window)?;
            }
            Layer::BatchNorm(b) => {
                w.u8(4);
                w.u32(b.planes())?;
                w.f64s(b.gamma.data());
                w.f64s(b.beta.data());
                w.f64s(&b.running_mean);
                w.f64s(&b.running_var);
            }
            Layer::Dropout { rate } => {
                w.u8(5);
                w.f64s(&[*rate]);
            }
            Layer::Relu => w.u8(6),
            Layer::Flatten => w.u8(7),
            Layer::Dense(d) => {
                w.u8(8);
                w.u32(d.weight.shape()[0])?;
                w.u32(d.weight.shape()[1])?;
                w.f64s(d.weight.data());
                w.f64s(d.bias.data());
            }
        }
    }
    match &ck.normalization {
        None => w.u8(0),
        Some(s) => {
            w.u8(1);
            w.u32(s.mean.len())?;
            w.f64s(&s.mean);
            w.f64s(&s.std);
        }
    }
    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    Ok(w.0)
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::format("magic", "not a DIVF checkpoint"));
    }
    if bytes.len() < 12 {
        return Err(Error::format("header", "file truncated"));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(payload);
    if stored != actual {
        return Err(Error::format(
            "crc",
            format!("checksum mismatch (stored {stored:08x}, computed {actual:08x})"),
        ));
    }
    let mut r = Reader { bytes: payload, pos: 4 };
    let version = r.u32("version")? as u32;
    if version != VERSION {
        return Err(Error::Version {
            found: version,
            expected: VERSION,
        });
    }
    let rank = r.u32("rank")?;
    let classes = r.u32("class_count")?;
    let rows = (0..classes).map(|_| r.u32("class_rows")).collect::<Result<Vec<_>>>()?;
    let codebook = WalshCodebook::with_rows(rank, rows)?;
    let input = match r.u8("input")? {
        1 => {
            let l = r.u32("input")?;
            r.u32("input")?;
            InputShape::Signal(l)
        }
        2 => InputShape::Image(r.u32("input")?, r.u32("input")?),
        k => return Err(Error::format("input", format!("unknown input kind {k}"))),
    };
    let count = r.u32("layer_count")?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for i in 0..count {
        let field = format!("layer {}", i + 1);
        let f = field.as_str();
        layers.push(match r.u8(f)? {
            tag @ (1 | 2) => {
                let shape = (0..4).map(|_| r.u32(f)).collect::<Result<Vec<_>>>()?;
                let out = shape[0];
                ConvLayer {
                    two_d: tag == 2,
                    weight: r.tensor(shape, f)?,
                    bias: r.tensor(vec![out], f)?,
                }
                .into()
            }
            3 => Layer::MaxPool {
                window: r.u32(f)?,
                two_d: input.is_image(),
            },
            4 => {
                let p = r.u32(f)?;
                Layer::BatchNorm(BatchNormLayer {
                    gamma: r.tensor(vec![p], f)?,
                    beta: r.tensor(vec![p], f)?,
                    running_mean: r.f64s(p, f)?,
                    running_var: r.f64s(p, f)?,
                })
            }
            5 => Layer::Dropout { rate: r.f64s(1, f)?[0] },
            6 => Layer::Relu,
            7 => Layer::Flatten,
            8 => {
                let (o, i) = (r.u32(f)?, r.u32(f)?);
                Layer::Dense(DenseLayer {
                    weight: r.tensor(vec![o, i], f)?,
                    bias: r.tensor(vec![o], f)?,
                })
            }
            t => return Err(Error::format(f, format!("unknown layer tag {t}"))),
        });
    }
    let normalization = match r.u8("normalization")? {
        0 => None,
        1 => {
            let n = r.u32("normalization")?;
            Some(Standardizer {
                mean: r.f64s(n, "normalization")?,
                std: r.f64s(n, "normalization")?,
            })
        }
        k => return Err(Error::format("normalization", format!("unknown flag {k}"))),
    };
    if r.pos != payload.len() {
        return Err(Error::format("trailer", format!("{} unexpected bytes", payload.len() - r.pos)));
    }
    let mut model = FeatureExtractorModel::from_layers(input, layers, rank)?;
    model.set_mode(Mode::Inference);
    Ok(Checkpoint {
        model,
        codebook,
        normalization,
    })
}

impl From<ConvLayer> for Layer {
    fn from(c: ConvLayer) -> Self {
        Layer::Conv(c)
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(ck)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
