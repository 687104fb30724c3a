use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One layer of a feed-forward network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Conv2d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    MaxPool2d {
        kernel: usize,
        stride: usize,
    },
    Flatten,
    FullyConnected {
        in_dim: usize,
        out_dim: usize,
    },
    Softmax,
}

/// Activation shape between layers. `Flat(n)` is produced by `Flatten` and
/// consumed by `FullyConnected`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Shape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub(crate) fn len(self) -> usize {
        match self {
            Shape::Spatial { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

/// Resolved layer with its input/output shapes and parameter slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerPlan {
    pub layer: Layer,
    pub input: Shape,
    pub output: Shape,
    /// Start of this layer's weights in the flat parameter vector.
    pub offset: usize,
    pub weight_len: usize,
    pub bias_len: usize,
}

impl LayerPlan {
    pub(crate) fn param_len(&self) -> usize {
        self.weight_len + self.bias_len
    }
}

/// Architecture descriptor. The parameter layout is fixed: layers in order,
/// weights before biases, weights row-major (`[out, in, kh, kw]` for
/// convolutions, `[out, in]` for fully connected layers).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    name: String,
    layers: Vec<Layer>,
    input_shape: [usize; 3],
    num_classes: usize,
    plan: Vec<LayerPlan>,
    param_count: usize,
}

impl NetworkSpec {
    pub fn new(
        name: impl Into<String>,
        input_shape: [usize; 3],
        layers: Vec<Layer>,
        num_classes: usize,
    ) -> Result<Self> {
        let name = name.into();
        if input_shape.contains(&0) {
            return Err(Error::dim(format!(
                "input shape {input_shape:?} has a zero extent"
            )));
        }
        if num_classes < 1 {
            return Err(Error::arg("num_classes must be positive"));
        }
        match layers.last() {
            Some(Layer::Softmax) => {}
            _ => {
                return Err(Error::arg(format!(
                    "network `{name}` must end with Softmax"
                )))
            }
        }

        let [c, h, w] = input_shape;
        let mut shape = Shape::Spatial { c, h, w };
        let mut offset = 0;
        let mut plan = Vec::with_capacity(layers.len());
        for (idx, &layer) in layers.iter().enumerate() {
            let bad = |msg: String| Error::dim(format!("layer {idx} ({layer:?}): {msg}"));
            let (output, weight_len, bias_len) = match (layer, shape) {
                (
                    Layer::Conv2d {
                        in_ch,
                        out_ch,
                        kernel,
                        stride,
                    },
                    Shape::Spatial { c, h, w },
                ) => {
                    if in_ch != c {
                        return Err(bad(format!("expects {in_ch} channels, got {c}")));
                    }
                    if kernel == 0 || stride == 0 || out_ch == 0 {
                        return Err(bad("kernel, stride and out_ch must be positive".into()));
                    }
                    if kernel > h || kernel > w {
                        return Err(bad(format!("kernel {kernel} exceeds input {h}x{w}")));
                    }
                    let out = Shape::Spatial {
                        c: out_ch,
                        h: (h - kernel) / stride + 1,
                        w: (w - kernel) / stride + 1,
                    };
                    (out, out_ch * in_ch * kernel * kernel, out_ch)
                }
                (Layer::MaxPool2d { kernel, stride }, Shape::Spatial { c, h, w }) => {
                    if kernel == 0 || stride == 0 {
                        return Err(bad("kernel and stride must be positive".into()));
                    }
                    if kernel > h || kernel > w {
                        return Err(bad(format!("pool {kernel} exceeds input {h}x{w}")));
                    }
                    let out = Shape::Spatial {
                        c,
                        h: (h - kernel) / stride + 1,
                        w: (w - kernel) / stride + 1,
                    };
                    (out, 0, 0)
                }
                (Layer::Relu, s) => (s, 0, 0),
                (Layer::Flatten, s) => (Shape::Flat(s.len()), 0, 0),
                (Layer::FullyConnected { in_dim, out_dim }, Shape::Flat(n)) => {
                    if in_dim != n {
                        return Err(bad(format!("expects {in_dim} inputs, got {n}")));
                    }
                    if out_dim == 0 {
                        return Err(bad("out_dim must be positive".into()));
                    }
                    (Shape::Flat(out_dim), out_dim * in_dim, out_dim)
                }
                (Layer::Softmax, Shape::Flat(n)) => {
                    if idx + 1 != layers.len() {
                        return Err(bad("Softmax is only allowed as the final layer".into()));
                    }
                    if n != num_classes {
                        return Err(bad(format!("{n} outputs but {num_classes} classes")));
                    }
                    (Shape::Flat(n), 0, 0)
                }
                (_, s) => return Err(bad(format!("incompatible input shape {s:?}"))),
            };
            plan.push(LayerPlan {
                layer,
                input: shape,
                output,
                offset,
                weight_len,
                bias_len,
            });
            offset += weight_len + bias_len;
            shape = output;
        }

        Ok(Self {
            name,
            layers,
            input_shape,
            num_classes,
            plan,
            param_count: offset,
        })
    }

    /// The single-channel probe network: 3x3 convolution (stride 1), ReLU,
    /// 3x3 max-pool (stride 1), fully connected head, softmax. An `n x n`
    /// input yields an `(n-4) x (n-4)` pooled map.
    pub fn probe_net(side: usize, num_classes: usize) -> Result<Self> {
        if side < 5 {
            return Err(Error::arg("probe-net needs an input side of at least 5"));
        }
        let pooled = (side - 4) * (side - 4);
        Self::new(
            "probe-net",
            [1, side, side],
            vec![
                Layer::Conv2d {
                    in_ch: 1,
                    out_ch: 1,
                    kernel: 3,
                    stride: 1,
                },
                Layer::Relu,
                Layer::MaxPool2d {
                    kernel: 3,
                    stride: 1,
                },
                Layer::Flatten,
                Layer::FullyConnected {
                    in_dim: pooled,
                    out_dim: num_classes,
                },
                Layer::Softmax,
            ],
            num_classes,
        )
    }

    /// Two conv/pool stages followed by a linear head.
    pub fn lenet_lite(input_shape: [usize; 3], num_classes: usize) -> Result<Self> {
        let [c, h, w] = input_shape;
        let side = |s: usize| ((s.saturating_sub(2)) / 2).saturating_sub(2) / 2;
        let feat = 16 * side(h) * side(w);
        Self::new(
            "lenet-lite",
            input_shape,
            vec![
                Layer::Conv2d {
                    in_ch: c,
                    out_ch: 8,
                    kernel: 3,
                    stride: 1,
                },
                Layer::Relu,
                Layer::MaxPool2d {
                    kernel: 2,
                    stride: 2,
                },
                Layer::Conv2d {
                    in_ch: 8,
                    out_ch: 16,
                    kernel: 3,
                    stride: 1,
                },
                Layer::Relu,
                Layer::MaxPool2d {
                    kernel: 2,
                    stride: 2,
                },
                Layer::Flatten,
                Layer::FullyConnected {
                    in_dim: feat,
                    out_dim: num_classes,
                },
                Layer::Softmax,
            ],
            num_classes,
        )
    }

    /// One hidden ReLU layer. `hidden == 0` gives a plain softmax regression.
    pub fn mlp(input_shape: [usize; 3], hidden: usize, num_classes: usize) -> Result<Self> {
        let d = input_shape.iter().product();
        let mut layers = vec![Layer::Flatten];
        if hidden > 0 {
            layers.push(Layer::FullyConnected {
                in_dim: d,
                out_dim: hidden,
            });
            layers.push(Layer::Relu);
            layers.push(Layer::FullyConnected {
                in_dim: hidden,
                out_dim: num_classes,
            });
        } else {
            layers.push(Layer::FullyConnected {
                in_dim: d,
                out_dim: num_classes,
            });
        }
        layers.push(Layer::Softmax);
        Self::new("mlp", input_shape, layers, num_classes)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Total number of trainable parameters (ζ).
    pub fn param_count(&self) -> usize {
        self.param_count
    }

    pub(crate) fn plan(&self) -> &[LayerPlan] {
        &self.plan
    }
}
