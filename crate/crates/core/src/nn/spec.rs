use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a feed-forward model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Dense {
        input: usize,
        output: usize,
    },
    Relu,
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    MaxPool2d {
        window: usize,
    },
    Flatten,
    /// Softmax followed by mean cross-entropy against integer class labels.
    SoftmaxCrossEntropy {
        classes: usize,
    },
    /// Sum-of-squares loss `Σ_j (y_j - t_j)^2` against real targets. Meant
    /// for tests and small regressions.
    SquaredError {
        outputs: usize,
    },
}

impl Layer {
    pub fn is_head(&self) -> bool {
        matches!(self, Layer::SoftmaxCrossEntropy { .. } | Layer::SquaredError { .. })
    }

    pub fn has_params(&self) -> bool {
        matches!(self, Layer::Dense { .. } | Layer::Conv2d { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Relu => "relu",
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::Flatten => "flatten",
            Layer::SoftmaxCrossEntropy { .. } => "softmax_xent",
            Layer::SquaredError { .. } => "squared_error",
        }
    }
}

/// Per-example input shape and ordered layer list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    pub input: Vec<usize>,
    pub layers: Vec<Layer>,
}

impl ModelSpec {
    /// Multi-layer perceptron `input -> hidden... -> classes` with ReLU
    /// between dense layers and a softmax head.
    pub fn mlp(input: usize, hidden: &[usize], classes: usize) -> Self {
        let mut layers = Vec::new();
        let mut prev = input;
        for &h in hidden {
            layers.push(Layer::Dense { input: prev, output: h });
            layers.push(Layer::Relu);
            prev = h;
        }
        layers.push(Layer::Dense {
            input: prev,
            output: classes,
        });
        layers.push(Layer::SoftmaxCrossEntropy { classes });
        ModelSpec {
            input: vec![input],
            layers,
        }
    }

    /// Checks layer compatibility and returns the per-example shape entering
    /// each layer, followed by the head's output shape.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let bad = |i: usize, msg: String| Error::Model(format!("layer {i}: {msg}"));
        if self.input.is_empty() || self.input.contains(&0) {
            return Err(Error::Model(format!("input shape {:?} must be non-empty and positive", self.input)));
        }
        let heads = self.layers.iter().filter(|l| l.is_head()).count();
        if heads != 1 || !self.layers.last().is_some_and(Layer::is_head) {
            return Err(Error::Model("exactly one loss head is required, as the last layer".into()));
        }
        let mut shapes = vec![self.input.clone()];
        let mut cur = self.input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match *layer {
                Layer::Dense { input, output } => {
                    if cur != [input] || output == 0 {
                        return Err(bad(i, format!("dense({input},{output}) cannot take {cur:?}")));
                    }
                    vec![output]
                }
                Layer::Relu => cur,
                Layer::Flatten => vec![cur.iter().product()],
                Layer::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    if cur.len() != 3 || cur[0] != in_channels {
                        return Err(bad(i, format!("conv2d expects [{in_channels},H,W], got {cur:?}")));
                    }
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(bad(i, "conv2d sizes must be positive".into()));
                    }
                    let (h, w) = (cur[1] + 2 * padding, cur[2] + 2 * padding);
                    if kernel > h || kernel > w || (h - kernel) % stride != 0 || (w - kernel) % stride != 0 {
                        return Err(bad(i, format!("kernel {kernel}/stride {stride} do not tile {cur:?}")));
                    }
                    vec![out_channels, (h - kernel) / stride + 1, (w - kernel) / stride + 1]
                }
                Layer::MaxPool2d { window } => {
                    if cur.len() != 3 || window == 0 || !cur[1].is_multiple_of(window) || !cur[2].is_multiple_of(window) {
                        return Err(bad(i, format!("maxpool window {window} does not divide {cur:?}")));
                    }
                    vec![cur[0], cur[1] / window, cur[2] / window]
                }
                Layer::SoftmaxCrossEntropy { classes: n } | Layer::SquaredError { outputs: n } => {
                    if cur != [n] {
                        return Err(bad(i, format!("head over {n} outputs cannot take {cur:?}")));
                    }
                    cur
                }
            };
            shapes.push(cur.clone());
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    pub fn head(&self) -> &Layer {
        self.layers.last().expect("validated spec has a head")
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }

    /// Number of outputs of the head (classes for classification).
    pub fn outputs(&self) -> usize {
        match *self.head() {
            Layer::SoftmaxCrossEntropy { classes } => classes,
            Layer::SquaredError { outputs } => outputs,
            _ => 0,
        }
    }
}
