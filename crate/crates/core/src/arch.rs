//! Model spec files: `input` and `walsh_rank` headers followed by one layer
//! per line. `#` starts a comment.
//!
//! ```text
//! input 28x28
//! walsh_rank 16
//! conv2d 3x3 20
//! relu
//! flatten
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::layers::{FeatureExtractorModel, InputShape, LayerSpec};

pub const IRIS_SPEC: &str = include_str!("../../../specs/iris.spec");
pub const MNIST_SPEC: &str = include_str!("../../../specs/mnist.spec");

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub input: InputShape,
    pub walsh_rank: usize,
    pub layers: Vec<LayerSpec>,
}

fn dims(line: usize, text: &str) -> Result<Vec<usize>> {
    text.split('x')
        .map(|d| {
            d.parse::<usize>()
                .map_err(|_| Error::parse(line, format!("'{text}' is not a size like 4 or 28x28")))
        })
        .collect()
}

fn count(line: usize, text: &str) -> Result<usize> {
    text.parse()
        .map_err(|_| Error::parse(line, format!("'{text}' is not a non-negative integer")))
}

fn layer(line: usize, words: &[&str]) -> Result<LayerSpec> {
    let arity = |n: usize| {
        if words.len() == n + 1 {
            Ok(())
        } else {
            Err(Error::parse(
                line,
                format!("'{}' takes {n} argument(s), found {}", words[0], words.len() - 1),
            ))
        }
    };
    Ok(match words[0] {
        "conv1d" => {
            arity(2)?;
            LayerSpec::Conv1d {
                filter_len: count(line, words[1])?,
                planes: count(line, words[2])?,
            }
        }
        "conv2d" => {
            arity(2)?;
            let d = dims(line, words[1])?;
            let [filter_h, filter_w] = d[..] else {
                return Err(Error::parse(line, format!("conv2d filter '{}' must be HxW", words[1])));
            };
            LayerSpec::Conv2d {
                filter_h,
                filter_w,
                planes: count(line, words[2])?,
            }
        }
        "maxpool" => {
            arity(1)?;
            LayerSpec::MaxPool {
                window: count(line, words[1])?,
            }
        }
        "dropout" => {
            arity(1)?;
            let rate = words[1]
                .parse()
                .map_err(|_| Error::parse(line, format!("'{}' is not a rate", words[1])))?;
            LayerSpec::Dropout { rate }
        }
        "dense" => {
            arity(1)?;
            LayerSpec::Dense {
                out_dim: count(line, words[1])?,
            }
        }
        "batchnorm" => {
            arity(0)?;
            LayerSpec::BatchNorm
        }
        "relu" => {
            arity(0)?;
            LayerSpec::Relu
        }
        "flatten" => {
            arity(0)?;
            LayerSpec::Flatten
        }
        other => return Err(Error::parse(line, format!("unknown layer '{other}'"))),
    })
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut input = None;
        let mut rank = None;
        let mut layers = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or_default().trim();
            let words: Vec<&str> = content.split_whitespace().collect();
            match words.as_slice() {
                [] => {}
                ["input", d] => {
                    if input.is_some() {
                        return Err(Error::parse(line, "duplicate input header"));
                    }
                    input = Some(match dims(line, d)?[..] {
                        [l] => InputShape::Signal(l),
                        [h, w] => InputShape::Image(h, w),
                        _ => return Err(Error::parse(line, "input takes 1 or 2 dimensions")),
                    });
                }
                ["walsh_rank", m] => {
                    if rank.is_some() {
                        return Err(Error::parse(line, "duplicate walsh_rank header"));
                    }
                    rank = Some(count(line, m)?);
                }
                ["input" | "walsh_rank", ..] => {
                    return Err(Error::parse(line, format!("'{}' takes 1 argument", words[0])))
                }
                _ => layers.push(layer(line, &words)?),
            }
        }
        let input = input.ok_or_else(|| Error::parse(0, "missing 'input' header"))?;
        let walsh_rank = rank.ok_or_else(|| Error::parse(0, "missing 'walsh_rank' header"))?;
        if layers.is_empty() {
            return Err(Error::parse(0, "no layers"));
        }
        Ok(ModelSpec {
            input,
            walsh_rank,
            layers,
        })
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.input {
            InputShape::Signal(l) => writeln!(f, "input {l}")?,
            InputShape::Image(h, w) => writeln!(f, "input {h}x{w}")?,
        }
        writeln!(f, "walsh_rank {}", self.walsh_rank)?;
        for l in &self.layers {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}

impl ModelSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))?
            .parse()
    }

    pub fn iris() -> Self {
        IRIS_SPEC.parse().expect("bundled spec")
    }

    pub fn mnist() -> Self {
        MNIST_SPEC.parse().expect("bundled spec")
    }

    pub fn build(&self, rng: &mut impl Rng) -> Result<FeatureExtractorModel> {
        crate::walsh::build_hadamard(self.walsh_rank)?;
        FeatureExtractorModel::build(self.input, &self.layers, self.walsh_rank, rng)
    }

    pub fn conv_count(&self) -> usize {
        self.layers.iter().filter(|l| l.is_conv()).count()
    }
}
