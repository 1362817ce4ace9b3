use super::net::FeatureNet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Activations recorded by a forward pass.
#[derive(Debug, Clone)]
struct Tape {
    batch: usize,
    /// `acts[i]` is the input of layer `i`; the last entry is the output.
    acts: Vec<Vec<f64>>,
    stats: Vec<Vec<(f64, f64)>>,
}

/// Gradients produced by a backward pass.
#[derive(Debug, Clone)]
pub struct Backward {
    pub input: Option<Tensor>,
    pub params: Option<Vec<f64>>,
}

/// Records one forward pass of a [`FeatureNet`] and replays it in reverse.
#[derive(Debug)]
pub struct Graph<'n> {
    net: &'n FeatureNet,
    tape: Option<Tape>,
    input_shape: Vec<usize>,
}

impl<'n> Graph<'n> {
    pub fn new(net: &'n FeatureNet) -> Self {
        Graph {
            net,
            tape: None,
            input_shape: Vec::new(),
        }
    }

    pub fn net(&self) -> &FeatureNet {
        self.net
    }

    /// Forward pass that records the computation for [`Graph::backward`].
    /// Returns `(batch, output_len)`.
    pub fn forward(&mut self, batch: &Tensor) -> Result<Tensor> {
        let net = self.net;
        let n = net.check_batch(batch)?;
        let layers = net.layers().len();
        let mut acts = Vec::with_capacity(layers + 1);
        let mut stats = Vec::with_capacity(layers);
        acts.push(batch.data().to_vec());
        for i in 0..layers {
            let out_len: usize = net.shape_at(i + 1).iter().product();
            let mut out = vec![0.0; n * out_len];
            stats.push(net.layer_forward(i, n, &acts[i], &mut out));
            acts.push(out);
        }
        let out = Tensor::new(vec![n, net.output_len()], acts[layers].clone())?;
        out.ensure_finite("forward output")?;
        self.input_shape = batch.shape().to_vec();
        self.tape = Some(Tape {
            batch: n,
            acts,
            stats,
        });
        Ok(out)
    }

    /// Reverse pass for an upstream gradient on the output.
    pub fn backward(&self, out_grad: &Tensor, want_input: bool, want_params: bool) -> Result<Backward> {
        let tape = self.tape.as_ref().ok_or(Error::MissingGraph)?;
        let net = self.net;
        let n = tape.batch;
        if out_grad.shape() != [n, net.output_len()] {
            return Err(Error::Shape(format!(
                "output gradient {:?} does not match forward output {:?}",
                out_grad.shape(),
                [n, net.output_len()]
            )));
        }
        out_grad.ensure_finite("output gradient")?;
        let layers = net.layers().len();
        let mut params = want_params.then(|| vec![0.0; net.param_count()]);
        let mut grad = out_grad.data().to_vec();
        for i in (0..layers).rev() {
            let range = net.layer_range(i);
            let need_dx = want_input || i > 0;
            let in_len: usize = net.shape_at(i).iter().product();
            let mut dx = if need_dx { vec![0.0; n * in_len] } else { Vec::new() };
            let dp = match params.as_mut() {
                Some(p) if !range.is_empty() => Some(&mut p[range]),
                _ => None,
            };
            net.layer_backward(
                i,
                n,
                &tape.acts[i],
                &tape.stats[i],
                &grad,
                need_dx.then_some(dx.as_mut_slice()),
                dp,
            );
            if !need_dx {
                break;
            }
            grad = dx;
        }
        let input = if want_input {
            let t = Tensor::new(self.input_shape.clone(), grad)?;
            t.ensure_finite("input gradient")?;
            Some(t)
        } else {
            None
        };
        if let Some(p) = &params {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("parameter gradient".into()));
            }
        }
        Ok(Backward { input, params })
    }

    /// Gradient of a scalar objective with respect to the batch pixels, given
    /// its gradient with respect to the forward output.
    pub fn backward_inputs(&self, out_grad: &Tensor) -> Result<Tensor> {
        Ok(self.backward(out_grad, true, false)?.input.unwrap())
    }

    /// Gradient with respect to the net parameters, summed over the batch.
    pub fn backward_params(&self, out_grad: &Tensor) -> Result<Vec<f64>> {
        Ok(self.backward(out_grad, false, true)?.params.unwrap())
    }
}
