use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::{self, ConvDims};
use super::layer::Layer;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A feed-forward stack of layers with a flat parameter vector.
///
/// Nets are values: forward and backward passes borrow them immutably, so
/// one net can be evaluated from several places at once.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNet {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    params: Vec<f64>,
    init_seed: u64,
    /// Per-sample activation shapes; `shapes[i]` is the input of layer `i`.
    shapes: Vec<Vec<usize>>,
    /// Parameter offsets; layer `i` owns `offsets[i]..offsets[i + 1]`.
    offsets: Vec<usize>,
}

impl FeatureNet {
    /// Builds a net and draws its parameters from `init_seed`.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>, init_seed: u64) -> Result<Self> {
        let mut net = Self::skeleton(input_shape, layers, init_seed)?;
        net.reinitialize(init_seed);
        Ok(net)
    }

    fn skeleton(input_shape: Vec<usize>, layers: Vec<Layer>, init_seed: u64) -> Result<Self> {
        let mut shapes = vec![input_shape.clone()];
        let mut offsets = vec![0];
        for (i, layer) in layers.iter().enumerate() {
            let next = layer
                .output_shape(shapes.last().unwrap())
                .map_err(|detail| Error::LayerShape {
                    layer: i,
                    kind: layer.name().into(),
                    detail,
                })?;
            shapes.push(next);
            offsets.push(offsets.last().unwrap() + layer.param_count());
        }
        let count = *offsets.last().unwrap();
        Ok(FeatureNet {
            input_shape,
            layers,
            params: vec![0.0; count],
            init_seed,
            shapes,
            offsets,
        })
    }

    /// Rebuilds a net from a descriptor list and an explicit parameter vector.
    pub fn from_parts(
        input_shape: Vec<usize>,
        layers: Vec<Layer>,
        params: Vec<f64>,
        init_seed: u64,
    ) -> Result<Self> {
        let mut net = Self::skeleton(input_shape, layers, init_seed)?;
        if params.len() != net.params.len() {
            return Err(Error::Length {
                what: "parameter vector",
                expected: net.params.len(),
                found: params.len(),
            });
        }
        net.params = params;
        Ok(net)
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; unit scale
    /// and zero shift for normalization layers.
    pub fn reinitialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.init_seed = seed;
        for (i, layer) in self.layers.iter().enumerate() {
            let p = &mut self.params[self.offsets[i]..self.offsets[i + 1]];
            match *layer {
                Layer::Conv3x3 { .. } | Layer::Dense { .. } => {
                    let bound = 1.0 / (layer.fan_in() as f64).sqrt();
                    for v in p.iter_mut() {
                        *v = rng.gen_range(-bound..bound);
                    }
                }
                Layer::InstanceNorm { channels } => {
                    p[..channels].fill(1.0);
                    p[channels..].fill(0.0);
                }
                Layer::Relu | Layer::AvgPool2 => {}
            }
        }
    }

    /// Conv blocks (conv3x3, instance norm, relu, 2x2 avg-pool) without a head.
    /// The flattened output of the last block is the embedding.
    pub fn convnet(input_shape: [usize; 3], width: usize, depth: usize, seed: u64) -> Result<Self> {
        Self::new(input_shape.to_vec(), conv_blocks(input_shape[0], width, depth), seed)
    }

    /// Conv blocks followed by a linear classifier.
    pub fn convnet_classifier(
        input_shape: [usize; 3],
        width: usize,
        depth: usize,
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut layers = conv_blocks(input_shape[0], width, depth);
        let feat = embed_len(input_shape, width, depth)?;
        layers.push(Layer::Dense {
            in_features: feat,
            out_features: classes,
        });
        Self::new(input_shape.to_vec(), layers, seed)
    }

    /// One-hidden-layer perceptron: dense, relu, dense.
    pub fn mlp(input_shape: Vec<usize>, hidden: usize, classes: usize, seed: u64) -> Result<Self> {
        let fin = input_shape.iter().product();
        Self::new(
            input_shape,
            vec![
                Layer::Dense {
                    in_features: fin,
                    out_features: hidden,
                },
                Layer::Relu,
                Layer::Dense {
                    in_features: hidden,
                    out_features: classes,
                },
            ],
            seed,
        )
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    /// Flattened per-sample output length.
    pub fn output_len(&self) -> usize {
        self.shapes.last().unwrap().iter().product()
    }

    pub(crate) fn shape_at(&self, i: usize) -> &[usize] {
        &self.shapes[i]
    }

    pub(crate) fn layer_params(&self, i: usize) -> &[f64] {
        &self.params[self.offsets[i]..self.offsets[i + 1]]
    }

    pub(crate) fn layer_range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// One parameter block per parametrized layer, in layer order.
    pub fn param_blocks(&self) -> Vec<Range<usize>> {
        (0..self.layers.len())
            .map(|i| self.layer_range(i))
            .filter(|r| !r.is_empty())
            .collect()
    }

    /// Validates a batch against the input spec and returns the batch size.
    pub(crate) fn check_batch(&self, batch: &Tensor) -> Result<usize> {
        let shape = batch.shape();
        let ok = !shape.is_empty()
            && (shape[1..] == self.input_shape[..]
                || (shape.len() == 2 && shape[1] == self.input_len()));
        if ok {
            return Ok(shape[0]);
        }
        let (layer, kind) = match self.layers.first() {
            Some(l) => (0, l.name().to_string()),
            None => (0, "input".to_string()),
        };
        Err(Error::LayerShape {
            layer,
            kind,
            detail: format!(
                "batch shape {shape:?} does not match input spec (N, {:?})",
                self.input_shape
            ),
        })
    }

    /// Runs layer `i` forward on a batch. Returns instance-norm statistics when
    /// the layer produces them.
    pub(crate) fn layer_forward(
        &self,
        i: usize,
        batch: usize,
        x: &[f64],
        out: &mut [f64],
    ) -> Vec<(f64, f64)> {
        let p = self.layer_params(i);
        let inp = &self.shapes[i];
        match self.layers[i] {
            Layer::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                let d = ConvDims {
                    cin: in_channels,
                    cout: out_channels,
                    h: inp[1],
                    w: inp[2],
                };
                kernels::conv_forward(p, &d, batch, x, out);
                Vec::new()
            }
            Layer::Dense {
                in_features,
                out_features,
            } => {
                kernels::dense_forward(p, in_features, out_features, batch, x, out);
                Vec::new()
            }
            Layer::InstanceNorm { channels } => {
                kernels::norm_forward(p, channels, inp[1] * inp[2], batch, x, out)
            }
            Layer::Relu => {
                kernels::relu_forward(x, out);
                Vec::new()
            }
            Layer::AvgPool2 => {
                kernels::pool_forward(batch * inp[0], inp[1], inp[2], x, out);
                Vec::new()
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn layer_backward(
        &self,
        i: usize,
        batch: usize,
        x: &[f64],
        stats: &[(f64, f64)],
        dy: &[f64],
        dx: Option<&mut [f64]>,
        dp: Option<&mut [f64]>,
    ) {
        let p = self.layer_params(i);
        let inp = &self.shapes[i];
        match self.layers[i] {
            Layer::Conv3x3 {
                in_channels,
                out_channels,
            } => {
                let d = ConvDims {
                    cin: in_channels,
                    cout: out_channels,
                    h: inp[1],
                    w: inp[2],
                };
                kernels::conv_backward(p, &d, batch, x, dy, dx, dp);
            }
            Layer::Dense {
                in_features,
                out_features,
            } => kernels::dense_backward(p, in_features, out_features, batch, x, dy, dx, dp),
            Layer::InstanceNorm { channels } => {
                kernels::norm_backward(p, channels, inp[1] * inp[2], batch, x, stats, dy, dx, dp)
            }
            Layer::Relu => {
                if let Some(dx) = dx {
                    kernels::relu_backward(x, dy, dx);
                }
            }
            Layer::AvgPool2 => {
                if let Some(dx) = dx {
                    kernels::pool_backward(batch * inp[0], inp[1], inp[2], dy, dx);
                }
            }
        }
    }

    /// Forward pass without recording intermediates. Output shape is
    /// `(batch, output_len)`.
    pub fn infer(&self, batch: &Tensor) -> Result<Tensor> {
        let n = self.check_batch(batch)?;
        let mut cur = batch.data().to_vec();
        for i in 0..self.layers.len() {
            let out_len: usize = self.shapes[i + 1].iter().product();
            let mut out = vec![0.0; n * out_len];
            self.layer_forward(i, n, &cur, &mut out);
            cur = out;
        }
        let out = Tensor::new(vec![n, self.output_len()], cur)?;
        out.ensure_finite("forward output")?;
        Ok(out)
    }
}

fn conv_blocks(in_channels: usize, width: usize, depth: usize) -> Vec<Layer> {
    let mut layers = Vec::with_capacity(depth * 4);
    let mut c = in_channels;
    for _ in 0..depth {
        layers.push(Layer::Conv3x3 {
            in_channels: c,
            out_channels: width,
        });
        layers.push(Layer::InstanceNorm { channels: width });
        layers.push(Layer::Relu);
        layers.push(Layer::AvgPool2);
        c = width;
    }
    layers
}

/// Flattened embedding length of a conv stack.
pub fn embed_len(input_shape: [usize; 3], width: usize, depth: usize) -> Result<usize> {
    let [_, mut h, mut w] = input_shape;
    for _ in 0..depth {
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!(
                "{depth} pooling stages do not fit a {}x{} input",
                input_shape[1], input_shape[2]
            )));
        }
        h /= 2;
        w /= 2;
    }
    Ok(width * h * w)
}
