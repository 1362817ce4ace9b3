use serde::{Deserialize, Serialize};

/// Layer descriptor. Parameters live in the owning net's flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    /// 3x3 convolution, stride 1, zero padding 1.
    Conv3x3 {
        in_channels: usize,
        out_channels: usize,
    },
    /// Fully connected layer over the flattened input.
    Dense {
        in_features: usize,
        out_features: usize,
    },
    /// Per-sample, per-channel normalization with learnable scale and shift.
    InstanceNorm { channels: usize },
    Relu,
    /// 2x2 average pooling, stride 2.
    AvgPool2,
}

pub(crate) const NORM_EPS: f64 = 1e-5;

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv3x3 { .. } => "conv3x3",
            Layer::Dense { .. } => "dense",
            Layer::InstanceNorm { .. } => "instance_norm",
            Layer::Relu => "relu",
            Layer::AvgPool2 => "avg_pool2",
        }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            Layer::Conv3x3 {
                in_channels,
                out_channels,
            } => out_channels * in_channels * 9 + out_channels,
            Layer::Dense {
                in_features,
                out_features,
            } => out_features * in_features + out_features,
            Layer::InstanceNorm { channels } => 2 * channels,
            Layer::Relu | Layer::AvgPool2 => 0,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        match *self {
            Layer::Conv3x3 {
                in_channels,
                out_channels,
            } => match input {
                [c, h, w] if *c == in_channels => Ok(vec![out_channels, *h, *w]),
                _ => Err(format!(
                    "expected input (C={in_channels}, H, W), got {input:?}"
                )),
            },
            Layer::Dense {
                in_features,
                out_features,
            } => {
                let n: usize = input.iter().product();
                if n == in_features {
                    Ok(vec![out_features])
                } else {
                    Err(format!(
                        "expected {in_features} input features, got {n} from {input:?}"
                    ))
                }
            }
            Layer::InstanceNorm { channels } => match input {
                [c, h, w] if *c == channels && h * w > 0 => Ok(input.to_vec()),
                _ => Err(format!("expected input (C={channels}, H, W), got {input:?}")),
            },
            Layer::Relu => Ok(input.to_vec()),
            Layer::AvgPool2 => match input {
                [c, h, w] if h % 2 == 0 && w % 2 == 0 && *h > 0 && *w > 0 => {
                    Ok(vec![*c, h / 2, w / 2])
                }
                _ => Err(format!("expected (C, H, W) with even H and W, got {input:?}")),
            },
        }
    }

    /// Fan-in used by the uniform initializer.
    pub(crate) fn fan_in(&self) -> usize {
        match *self {
            Layer::Conv3x3 { in_channels, .. } => in_channels * 9,
            Layer::Dense { in_features, .. } => in_features,
            _ => 0,
        }
    }
}
