//! Forward/backward primitives.
//!
//! Every backward function *accumulates* into gradient buffers so that a
//! value used along several paths gets the sum of its contributions.
//! Weight matrices are stored row-major as `[out, in]`.

use super::ParamTensor;
use crate::{Error, Result};

fn shape_err(what: &str, expected: usize, got: usize) -> Error {
    Error::Shape(format!("{what}: expected {expected}, got {got}"))
}

/// Copies row `id` of an embedding table into `out`.
pub fn embedding_lookup(table: &ParamTensor, id: usize, out: &mut [f64]) -> Result<()> {
    let (rows, cols) = (table.shape[0], table.shape[1]);
    if id >= rows {
        return Err(Error::Shape(format!("{}: id {id} out of {rows} rows", table.name)));
    }
    if out.len() != cols {
        return Err(shape_err("embedding output", cols, out.len()));
    }
    out.copy_from_slice(table.row(id));
    Ok(())
}

/// Adds `dout` into the gradient of row `id`.
pub fn embedding_backward(table: &mut ParamTensor, id: usize, dout: &[f64]) {
    let cols = table.shape[1];
    let g = &mut table.grad[id * cols..(id + 1) * cols];
    for (g, d) in g.iter_mut().zip(dout) {
        *g += d;
    }
}

/// `out = W x + b`.
pub fn linear(w: &ParamTensor, b: Option<&ParamTensor>, x: &[f64], out: &mut [f64]) -> Result<()> {
    let (rows, cols) = (w.shape[0], w.shape[1]);
    if x.len() != cols {
        return Err(shape_err(&format!("{} input", w.name), cols, x.len()));
    }
    if out.len() != rows {
        return Err(shape_err(&format!("{} output", w.name), rows, out.len()));
    }
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w.values[r * cols..(r + 1) * cols];
        let mut acc = b.map_or(0.0, |b| b.values[r]);
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        *o = acc;
    }
    Ok(())
}

/// Accumulates `dW += dy xᵀ`, `db += dy` and, if requested, `dx += Wᵀ dy`.
pub fn linear_backward(
    w: &mut ParamTensor,
    b: Option<&mut ParamTensor>,
    x: &[f64],
    dy: &[f64],
    dx: Option<&mut [f64]>,
) {
    let cols = w.shape[1];
    for (r, &d) in dy.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        let g = &mut w.grad[r * cols..(r + 1) * cols];
        for (gv, xv) in g.iter_mut().zip(x) {
            *gv += d * xv;
        }
    }
    if let Some(b) = b {
        for (g, d) in b.grad.iter_mut().zip(dy) {
            *g += d;
        }
    }
    if let Some(dx) = dx {
        for (r, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &w.values[r * cols..(r + 1) * cols];
            for (dxv, wv) in dx.iter_mut().zip(row) {
                *dxv += d * wv;
            }
        }
    }
}

/// Mean of equally sized rows.
pub fn mean_pool(rows: &[&[f64]]) -> Result<Vec<f64>> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Shape("mean_pool over zero rows".into()))?;
    let mut out = vec![0.0; first.len()];
    for row in rows {
        if row.len() != out.len() {
            return Err(shape_err("mean_pool row", out.len(), row.len()));
        }
        for (o, v) in out.iter_mut().zip(row.iter()) {
            *o += v;
        }
    }
    let inv = 1.0 / rows.len() as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    Ok(out)
}

/// Gradient of each pooled row given the gradient of the mean.
pub fn mean_pool_backward(n_rows: usize, dout: &[f64]) -> Vec<f64> {
    let inv = 1.0 / n_rows as f64;
    dout.iter().map(|d| d * inv).collect()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|o| *o /= sum);
    out
}

pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

/// `dx = y ⊙ (dy − ⟨dy, y⟩)` for `y = softmax(x)`.
pub fn softmax_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
    y.iter().zip(dy).map(|(yv, dv)| yv * (dv - dot)).collect()
}

/// `dx = dy − softmax(x) Σ dy` for `logp = log_softmax(x)`.
pub fn log_softmax_backward(logp: &[f64], dlogp: &[f64]) -> Vec<f64> {
    let total: f64 = dlogp.iter().sum();
    logp.iter()
        .zip(dlogp)
        .map(|(lp, d)| d - lp.exp() * total)
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid_backward(y: f64, dy: f64) -> f64 {
    dy * y * (1.0 - y)
}

/// Numerically stable `log σ(x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// d/dx log σ(x) = σ(−x).
pub fn log_sigmoid_grad(x: f64) -> f64 {
    sigmoid(-x)
}

pub fn tanh_inplace(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.tanh());
}

/// `dx = dy (1 − y²)` for `y = tanh(x)`.
pub fn tanh_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(yv, d)| d * (1.0 - yv * yv)).collect()
}

/// Cross-entropy of `softmax(logits)` against class `target`; returns the
/// loss and its gradient with respect to the logits.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(shape_err("cross_entropy target", logits.len(), target));
    }
    let logp = log_softmax(logits);
    let loss = -logp[target];
    let mut grad: Vec<f64> = logp.iter().map(|lp| lp.exp()).collect();
    grad[target] -= 1.0;
    finite(loss, "cross_entropy")?;
    Ok((loss, grad))
}

/// Binary cross-entropy of `σ(logit)` against `label ∈ [0, 1]`.
pub fn binary_cross_entropy(logit: f64, label: f64) -> Result<(f64, f64)> {
    // -[y log σ(z) + (1-y) log σ(-z)]
    let loss = -(label * log_sigmoid(logit) + (1.0 - label) * log_sigmoid(-logit));
    finite(loss, "binary_cross_entropy")?;
    Ok((loss, sigmoid(logit) - label))
}

/// Squared error `(pred − target)²` and its derivative.
pub fn mse(pred: f64, target: f64) -> Result<(f64, f64)> {
    let d = pred - target;
    finite(d, "mse")?;
    Ok((d * d, 2.0 * d))
}

pub fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let y = softmax(&[0.0; 4]);
        for v in y {
            assert!((v - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_of_certain_prediction_is_zero() {
        let (loss, _) = cross_entropy(&[1000.0, 0.0, 0.0], 0).unwrap();
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn log_sigmoid_is_stable_at_extremes() {
        assert!((log_sigmoid(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_sigmoid(800.0).abs() < 1e-300);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let w = ParamTensor::zeros("w", &[2, 3]);
        let mut out = vec![0.0; 2];
        assert!(matches!(linear(&w, None, &[1.0, 2.0], &mut out), Err(Error::Shape(_))));
        assert!(matches!(cross_entropy(&[0.0, 1.0], 2), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        assert!(matches!(mse(f64::NAN, 0.0), Err(Error::NonFinite(_))));
    }
}
