//! Central finite-difference checks for the autodiff engine (tests only).

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;

pub(crate) fn random_array(shape: &[usize], seed: u64) -> ArrayD<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
}

/// Compares analytic gradients of a scalar function against central
/// differences for every input element.
pub(crate) fn assert_gradients<F>(inputs: &[ArrayD<f64>], f: F)
where
    F: Fn(&[Tensor<f64>]) -> Tensor<f64>,
{
    let leaves: Vec<_> = inputs.iter().map(|a| Tensor::leaf(a.clone())).collect();
    let grads = f(&leaves).backward();
    let eps = 1e-6;
    for (idx, input) in inputs.iter().enumerate() {
        let analytic = grads.get(&leaves[idx]).cloned().unwrap_or_else(|| ArrayD::zeros(input.raw_dim()));
        for k in 0..input.len() {
            let eval = |delta: f64| {
                let xs: Vec<_> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, a)| {
                        let mut a = a.clone();
                        if j == idx {
                            a.as_slice_mut().unwrap()[k] += delta;
                        }
                        Tensor::constant(a)
                    })
                    .collect();
                f(&xs).item()
            };
            let numeric = (eval(eps) - eval(-eps)) / (2.0 * eps);
            let got = analytic.as_slice().unwrap()[k];
            let tol = 1e-6 * (1.0 + numeric.abs().max(got.abs()));
            assert!(
                (numeric - got).abs() <= tol,
                "input {idx} element {k}: analytic {got} vs numeric {numeric}"
            );
        }
    }
}
