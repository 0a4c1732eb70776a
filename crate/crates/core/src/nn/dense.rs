//! Dense layers and patch-level pooling.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayD, ArrayView2, ArrayViewMut2, IxDyn};

use super::tensor::{Scalar, Tensor};

impl<T: Scalar> Tensor<T> {
    /// Affine map over rows: (M, C_in) x (C_out, C_in)^T + bias (C_out).
    pub fn linear(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>) -> Tensor<T> {
        let [m, c_in] = *self.shape() else {
            panic!("linear: expected (M, C) input, got {:?}", self.shape());
        };
        let [c_out, wc_in] = *weight.shape() else {
            panic!("linear: expected (C_out, C_in) weight, got {:?}", weight.shape());
        };
        assert_eq!(c_in, wc_in, "linear: channel mismatch");
        let x = ArrayView2::from_shape((m, c_in), self.as_slice()).expect("view");
        let w = ArrayView2::from_shape((c_out, c_in), weight.as_slice()).expect("view");
        let mut out = x.dot(&w.t());
        if let Some(bias) = bias {
            assert_eq!(bias.shape(), [c_out], "linear: bias shape");
            let b = ArrayView2::from_shape((1, c_out), bias.as_slice()).expect("view");
            out += &b;
        }
        let value = out.into_dyn().as_standard_layout().into_owned();

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(bias) = bias {
            parents.push(bias.clone());
        }
        let (xt, wt) = (self.clone(), weight.clone());
        let bias_needs = bias.map(|b| b.requires_grad());
        Tensor::from_op(value, parents, move |g| {
            let g = ArrayView2::from_shape((m, c_out), g.as_slice().expect("contiguous")).expect("view");
            let x = ArrayView2::from_shape((m, c_in), xt.as_slice()).expect("view");
            let w = ArrayView2::from_shape((c_out, c_in), wt.as_slice()).expect("view");
            let gx = xt.requires_grad().then(|| g.dot(&w).into_dyn());
            let gw = wt.requires_grad().then(|| g.t().dot(&x).into_dyn().as_standard_layout().into_owned());
            let mut res = vec![gx, gw];
            if let Some(needs) = bias_needs {
                res.push(needs.then(|| g.sum_axis(ndarray::Axis(0)).into_dyn()));
            }
            res
        })
    }

    /// Spatial mean of every cell of a `grid` x `grid` partition.
    ///
    /// (B, C, H, W) -> (B, grid², C), cells in row-major order.
    pub fn patch_mean(&self, grid: usize) -> Tensor<T> {
        let [batch, ch, h, w] = *self.shape() else {
            panic!("patch_mean: expected 4-D input, got {:?}", self.shape());
        };
        assert!(grid > 0 && h % grid == 0 && w % grid == 0, "patch_mean: grid must divide dims");
        let (ph, pw) = (h / grid, w / grid);
        let cells = grid * grid;
        let inv = T::one() / T::from_usize(ph * pw).expect("size fits");
        let x = self.as_slice();
        let mut out = vec![T::zero(); batch * cells * ch];
        for b in 0..batch {
            for c in 0..ch {
                let plane = &x[(b * ch + c) * h * w..(b * ch + c + 1) * h * w];
                for i in 0..h {
                    let row = &plane[i * w..(i + 1) * w];
                    for (j, &v) in row.iter().enumerate() {
                        let cell = (i / ph) * grid + j / pw;
                        let o = &mut out[(b * cells + cell) * ch + c];
                        *o = *o + v;
                    }
                }
            }
        }
        out.iter_mut().for_each(|v| *v = *v * inv);
        let value = ArrayD::from_shape_vec(IxDyn(&[batch, cells, ch]), out).expect("pool output");
        Tensor::from_op(value, vec![self.clone()], move |g| {
            let g = g.as_slice().expect("contiguous");
            let mut gx = vec![T::zero(); batch * ch * h * w];
            for b in 0..batch {
                for c in 0..ch {
                    let plane = &mut gx[(b * ch + c) * h * w..(b * ch + c + 1) * h * w];
                    for i in 0..h {
                        for j in 0..w {
                            let cell = (i / ph) * grid + j / pw;
                            plane[i * w + j] = g[(b * cells + cell) * ch + c] * inv;
                        }
                    }
                }
            }
            vec![Some(ArrayD::from_shape_vec(IxDyn(&[batch, ch, h, w]), gx).expect("grad shape"))]
        })
    }

    /// Left-multiplies each batch item by a fixed mixing matrix:
    /// `mix` (B, N, N) times `self` (B, N, C) -> (B, N, C).
    pub fn mix_rows(&self, mix: &ArrayD<T>) -> Tensor<T> {
        let [batch, n, c] = *self.shape() else {
            panic!("mix_rows: expected (B, N, C), got {:?}", self.shape());
        };
        assert_eq!(mix.shape(), [batch, n, n], "mix_rows: mixing matrix shape");
        let mix = mix.as_standard_layout().into_owned();
        let x = self.as_slice();
        let m = mix.as_slice().expect("contiguous");
        let mut out = vec![T::zero(); batch * n * c];
        for b in 0..batch {
            let mb = ArrayView2::from_shape((n, n), &m[b * n * n..(b + 1) * n * n]).expect("view");
            let xb = ArrayView2::from_shape((n, c), &x[b * n * c..(b + 1) * n * c]).expect("view");
            let mut ob = ArrayViewMut2::from_shape((n, c), &mut out[b * n * c..(b + 1) * n * c]).expect("view");
            general_mat_mul(T::one(), &mb, &xb, T::zero(), &mut ob);
        }
        let value = ArrayD::from_shape_vec(IxDyn(&[batch, n, c]), out).expect("mix output");
        Tensor::from_op(value, vec![self.clone()], move |g| {
            let g = g.as_slice().expect("contiguous");
            let m = mix.as_slice().expect("contiguous");
            let mut gx = vec![T::zero(); batch * n * c];
            for b in 0..batch {
                let mb = ArrayView2::from_shape((n, n), &m[b * n * n..(b + 1) * n * n]).expect("view");
                let gb = ArrayView2::from_shape((n, c), &g[b * n * c..(b + 1) * n * c]).expect("view");
                let mut ob = ArrayViewMut2::from_shape((n, c), &mut gx[b * n * c..(b + 1) * n * c]).expect("view");
                general_mat_mul(T::one(), &mb.t(), &gb, T::zero(), &mut ob);
            }
            vec![Some(ArrayD::from_shape_vec(IxDyn(&[batch, n, c]), gx).expect("grad shape"))]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{assert_gradients, random_array};

    #[test]
    fn linear_gradients() {
        assert_gradients(
            &[random_array(&[5, 3], 1), random_array(&[4, 3], 2), random_array(&[4], 3)],
            |t| t[0].linear(&t[1], Some(&t[2])).square().sum_all(),
        );
    }

    #[test]
    fn patch_mean_values() {
        let x: Vec<f64> = (0..16).map(f64::from).collect();
        let t = Tensor::constant(ArrayD::from_shape_vec(IxDyn(&[1, 1, 4, 4]), x).unwrap());
        let p = t.patch_mean(2);
        assert_eq!(p.shape(), [1, 4, 1]);
        // top-left cell holds 0, 1, 4, 5
        assert_eq!(p.as_slice(), &[2.5, 4.5, 10.5, 12.5]);
    }

    #[test]
    fn pooling_and_mixing_gradients() {
        let mix = random_array(&[2, 4, 4], 4);
        assert_gradients(&[random_array(&[2, 3, 4, 6], 5)], |t| {
            t[0].patch_mean(2).mix_rows(&mix).square().sum_all()
        });
    }
}
