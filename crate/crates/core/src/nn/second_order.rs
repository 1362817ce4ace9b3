//! Closed-form gradient of the gradient-matching distance with respect to
//! synthetic inputs, for the one-hidden-layer perceptron surrogate.
//!
//! For a sample `x` with label `y` the surrogate computes
//! `z1 = W1 x + b1`, `h = relu(z1)`, `z2 = W2 h + b2`, `p = softmax(z2)`,
//! and its cross-entropy parameter gradient is
//! `dW2 = d2 h^T`, `db2 = d2`, `dW1 = d1 x^T`, `db1 = d1` with
//! `d2 = p - e_y`, `d1 = m * (W2^T d2)`, `m = [z1 > 0]`.
//! Contracting that gradient with a fixed direction `L` gives
//! `F(x) = d2 . q` where `q = LW2 h + Lb2 + W2 (m * (LW1 x + Lb1))`, whose
//! input gradient is
//! `W1^T [m * (W2^T J q + LW2^T d2)] + LW1^T [m * (W2^T d2)]`
//! with `J = diag(p) - p p^T` the softmax Jacobian.

use super::layer::Layer;
use super::loss::{check_labels, mean_param_gradient, softmax_rows, GradientSource, GradientVector};
use super::matching::distance_and_gradient;
use super::net::FeatureNet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Result of comparing a synthetic batch's gradient against a fixed real one.
#[derive(Debug, Clone)]
pub struct GradientMatch {
    pub distance: f64,
    pub syn_grad: GradientVector,
    /// d(scale * distance) / d(synthetic pixels), shaped like the batch.
    pub pixel_grad: Tensor,
}

struct Mlp {
    fin: usize,
    hidden: usize,
    classes: usize,
}

/// Returns the surrogate dimensions, or a capability error for any other
/// architecture.
fn surrogate_dims(net: &FeatureNet) -> Result<Mlp> {
    match net.layers() {
        [Layer::Dense {
            in_features,
            out_features: hidden,
        }, Layer::Relu, Layer::Dense {
            in_features: h2,
            out_features: classes,
        }] if hidden == h2 => Ok(Mlp {
            fin: *in_features,
            hidden: *hidden,
            classes: *classes,
        }),
        layers => Err(Error::Unsupported(format!(
            "second-order gradients require a dense-relu-dense surrogate, got [{}]",
            layers.iter().map(|l| l.name()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

/// Checks that `net` supports the second-order path.
pub fn ensure_second_order_capable(net: &FeatureNet) -> Result<()> {
    surrogate_dims(net).map(|_| ())
}

/// Layer-wise distance between `real_grad` and the mean gradient of the
/// synthetic batch, plus its gradient with respect to the synthetic pixels
/// multiplied by `scale`.
pub fn match_gradients(
    net: &FeatureNet,
    real_grad: &GradientVector,
    syn_batch: &Tensor,
    labels: &[usize],
    scale: f64,
) -> Result<GradientMatch> {
    let dims = surrogate_dims(net)?;
    let n = net.check_batch(syn_batch)?;
    if labels.len() != n {
        return Err(Error::Length {
            what: "labels",
            expected: n,
            found: labels.len(),
        });
    }
    check_labels(labels, dims.classes)?;
    let syn_grad = mean_param_gradient(net, syn_batch, labels, GradientSource::Synthetic)?;
    let (distance, mut lambda) = distance_and_gradient(real_grad, &syn_grad)?;
    for v in &mut lambda {
        *v *= scale;
    }

    let Mlp {
        fin,
        hidden,
        classes,
    } = dims;
    let p = net.params();
    let (w1, rest) = p.split_at(hidden * fin);
    let (b1, rest) = rest.split_at(hidden);
    let (w2, b2) = rest.split_at(classes * hidden);
    let (lw1, rest) = lambda.split_at(hidden * fin);
    let (lb1, rest) = rest.split_at(hidden);
    let (lw2, lb2) = rest.split_at(classes * hidden);

    let inv_n = 1.0 / n as f64;
    let mut out = vec![0.0; n * fin];
    let mut z1 = vec![0.0; hidden];
    let mut u = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    let mut z2 = vec![0.0; classes];
    let mut q = vec![0.0; classes];
    let mut r = vec![0.0; hidden];
    let mut t = vec![0.0; hidden];

    for (j, x) in syn_batch.data().chunks_exact(fin).enumerate() {
        for k in 0..hidden {
            let row = &w1[k * fin..(k + 1) * fin];
            let lrow = &lw1[k * fin..(k + 1) * fin];
            let mut a = b1[k];
            let mut b = lb1[k];
            for ((wi, li), xi) in row.iter().zip(lrow).zip(x) {
                a += wi * xi;
                b += li * xi;
            }
            z1[k] = a;
            u[k] = b;
            h[k] = a.max(0.0);
        }
        for c in 0..classes {
            let row = &w2[c * hidden..(c + 1) * hidden];
            z2[c] = b2[c] + row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
        }
        let prob = softmax_rows(&z2, classes);
        let mut d2 = prob.clone();
        d2[labels[j]] -= 1.0;

        // q = LW2 h + Lb2 + W2 (m * u)
        for c in 0..classes {
            let lrow = &lw2[c * hidden..(c + 1) * hidden];
            let wrow = &w2[c * hidden..(c + 1) * hidden];
            let mut s = lb2[c];
            for k in 0..hidden {
                s += lrow[k] * h[k];
                if z1[k] > 0.0 {
                    s += wrow[k] * u[k];
                }
            }
            q[c] = s;
        }
        let pq: f64 = prob.iter().zip(&q).map(|(a, b)| a * b).sum();
        // r = m * (W2^T J q + LW2^T d2),  t = m * (W2^T d2)
        r.fill(0.0);
        t.fill(0.0);
        for c in 0..classes {
            let jq = prob[c] * q[c] - prob[c] * pq;
            let wrow = &w2[c * hidden..(c + 1) * hidden];
            let lrow = &lw2[c * hidden..(c + 1) * hidden];
            for k in 0..hidden {
                r[k] += wrow[k] * jq + lrow[k] * d2[c];
                t[k] += wrow[k] * d2[c];
            }
        }
        let dx = &mut out[j * fin..(j + 1) * fin];
        for k in 0..hidden {
            if z1[k] <= 0.0 {
                continue;
            }
            let (rk, tk) = (r[k] * inv_n, t[k] * inv_n);
            let row = &w1[k * fin..(k + 1) * fin];
            let lrow = &lw1[k * fin..(k + 1) * fin];
            for ((d, wi), li) in dx.iter_mut().zip(row).zip(lrow) {
                *d += rk * wi + tk * li;
            }
        }
    }
    let pixel_grad = Tensor::new(syn_batch.shape().to_vec(), out)?;
    pixel_grad.ensure_finite("second-order pixel gradient")?;
    Ok(GradientMatch {
        distance,
        syn_grad,
        pixel_grad,
    })
}

/// d D(real_grad, grad_syn) / d(syn_batch), with the real gradient held fixed.
pub fn second_order_grad(
    net: &FeatureNet,
    real_grad: &GradientVector,
    syn_batch: &Tensor,
    labels: &[usize],
) -> Result<Tensor> {
    Ok(match_gradients(net, real_grad, syn_batch, labels, 1.0)?.pixel_grad)
}
