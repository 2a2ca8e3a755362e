use rand::seq::index::sample;

use super::Parameters;
use crate::util::rng;
use crate::Result;

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged on absolute error instead.
pub const GRAD_CHECK_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR)
}

/// Compares analytic gradients against central differences.
///
/// `loss` must compute the loss and accumulate gradients into the model it
/// is handed; it is called on clones, so the caller's model is untouched.
/// At most `max_coords` coordinates (sampled with `seed`) are probed.
/// Returns the maximum relative error.
pub fn grad_check<M, F>(model: &M, loss: F, h: f64, max_coords: usize, seed: u64) -> Result<f64>
where
    M: Parameters + Clone,
    F: Fn(&mut M) -> Result<f64>,
{
    let mut analytic_model = model.clone();
    analytic_model.zero_grad();
    loss(&mut analytic_model)?;
    let analytic: Vec<f64> = analytic_model
        .params()
        .iter()
        .flat_map(|p| p.grad.iter().copied())
        .collect();

    let sizes: Vec<usize> = model.params().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    let coords: Vec<usize> = if total <= max_coords {
        (0..total).collect()
    } else {
        let mut idx = sample(&mut rng(seed), total, max_coords).into_vec();
        idx.sort_unstable();
        idx
    };

    let locate = |flat: usize| {
        let mut rest = flat;
        for (t, &n) in sizes.iter().enumerate() {
            if rest < n {
                return (t, rest);
            }
            rest -= n;
        }
        unreachable!("coordinate {flat} out of range")
    };

    let mut worst = 0.0f64;
    for flat in coords {
        let (t, i) = locate(flat);
        let eval = |delta: f64| -> Result<f64> {
            let mut m = model.clone();
            m.params_mut()[t].values[i] += delta;
            loss(&mut m)
        };
        let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
        worst = worst.max(relative_error(analytic[flat], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ops, ParamTensor};

    #[derive(Clone)]
    struct Affine {
        w: ParamTensor,
        b: ParamTensor,
    }

    impl Parameters for Affine {
        fn params(&self) -> Vec<&ParamTensor> {
            vec![&self.w, &self.b]
        }
        fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
            vec![&mut self.w, &mut self.b]
        }
    }

    fn affine() -> Affine {
        let mut r = rng(3);
        Affine {
            w: ParamTensor::uniform("w", &[1, 4], 0.5, &mut r),
            b: ParamTensor::uniform("b", &[1], 0.5, &mut r),
        }
    }

    const DATA: [([f64; 4], f64); 3] = [
        ([1.0, 0.5, -0.3, 2.0], 0.7),
        ([-1.0, 0.1, 0.4, 0.0], -1.2),
        ([0.3, 0.3, 0.3, 0.3], 0.1),
    ];

    fn mse_loss(m: &mut Affine, corrupt: f64) -> Result<f64> {
        let mut total = 0.0;
        for (x, y) in DATA {
            let mut out = [0.0];
            ops::linear(&m.w, Some(&m.b), &x, &mut out)?;
            let (l, d) = ops::mse(out[0], y)?;
            total += l;
            ops::linear_backward(&mut m.w, Some(&mut m.b), &x, &[d * corrupt], None);
        }
        Ok(total)
    }

    #[test]
    fn linear_mse_is_exact_to_roundoff() {
        let err = grad_check(&affine(), |m| mse_loss(m, 1.0), 1e-5, 100, 0).unwrap();
        assert!(err < 1e-8, "err = {err}");
    }

    #[test]
    fn corrupted_backward_is_detected() {
        let err = grad_check(&affine(), |m| mse_loss(m, 1.1), 1e-5, 100, 0).unwrap();
        assert!(err > 1e-2, "err = {err}");
    }
}
