use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `params - lr * grads`, refusing non-finite gradients.
pub fn sgd_step(params: &Tensor, grads: &Tensor, lr: f64) -> Result<Tensor> {
    let mut out = params.clone();
    if params.shape() != grads.shape() {
        return Err(Error::Shape(format!(
            "params {:?} vs grads {:?}",
            params.shape(),
            grads.shape()
        )));
    }
    sgd_update(out.data_mut(), grads.data(), lr)?;
    Ok(out)
}

/// In-place `params -= lr * grads`. Nothing is written when validation fails.
pub fn sgd_update(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Length {
            what: "gradient",
            expected: params.len(),
            found: grads.len(),
        });
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("sgd gradient".into()));
    }
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

/// SGD with heavy-ball momentum and L2 weight decay.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<f64>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Sgd {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if self.momentum == 0.0 && self.weight_decay == 0.0 {
            return sgd_update(params, grads, self.lr);
        }
        if grads.len() != params.len() {
            return Err(Error::Length {
                what: "gradient",
                expected: params.len(),
                found: grads.len(),
            });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("sgd gradient".into()));
        }
        if self.velocity.len() != params.len() {
            self.velocity = vec![0.0; params.len()];
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            let d = g + self.weight_decay * *p;
            *v = self.momentum * *v + d;
            *p -= self.lr * *v;
        }
        Ok(())
    }
}
