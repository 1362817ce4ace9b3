//! Layer-wise cosine distance between parameter gradients.

use super::loss::GradientVector;
use crate::error::{Error, Result};

fn check_pair(a: &GradientVector, b: &GradientVector) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Length {
            what: "gradient vector",
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.blocks != b.blocks {
        return Err(Error::Shape("gradient vectors use different layer blocks".into()));
    }
    Ok(())
}

fn block_terms(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    (dot, na.sqrt(), nb.sqrt())
}

fn block_distance(dot: f64, na: f64, nb: f64) -> f64 {
    match (na == 0.0, nb == 0.0) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 1.0,
        (false, false) => 1.0 - dot / (na * nb),
    }
}

/// Sum over layer blocks of `1 - cos(a_l, b_l)`. A zero block against a
/// non-zero block contributes 1; two zero blocks contribute 0.
pub fn gradient_distance(a: &GradientVector, b: &GradientVector) -> Result<f64> {
    check_pair(a, b)?;
    Ok(a.blocks
        .iter()
        .map(|r| {
            let (dot, na, nb) = block_terms(&a.values[r.clone()], &b.values[r.clone()]);
            block_distance(dot, na, nb)
        })
        .sum())
}

/// Distance together with its gradient with respect to `moving`, holding
/// `fixed` constant. Blocks where either side is zero have zero gradient.
pub fn distance_and_gradient(fixed: &GradientVector, moving: &GradientVector) -> Result<(f64, Vec<f64>)> {
    check_pair(fixed, moving)?;
    let mut grad = vec![0.0; moving.len()];
    let mut total = 0.0;
    for r in &fixed.blocks {
        let a = &fixed.values[r.clone()];
        let b = &moving.values[r.clone()];
        let (dot, na, nb) = block_terms(a, b);
        total += block_distance(dot, na, nb);
        if na == 0.0 || nb == 0.0 {
            continue;
        }
        let cos = dot / (na * nb);
        for ((g, x), y) in grad[r.clone()].iter_mut().zip(a).zip(b) {
            *g = -x / (na * nb) + cos * y / (nb * nb);
        }
    }
    Ok((total, grad))
}
