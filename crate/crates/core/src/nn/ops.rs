//! Elementwise, reduction and shape operations.

use ndarray::{concatenate, ArrayD, Axis, IxDyn, Slice, Zip};

use super::tensor::{Scalar, Tensor};

fn assert_same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: &str) {
    assert_eq!(a.shape(), b.shape(), "{op}: shape mismatch");
}

impl<T: Scalar> Tensor<T> {
    pub fn add(&self, other: &Tensor<T>) -> Tensor<T> {
        assert_same_shape(self, other, "add");
        let value = self.value() + other.value();
        Tensor::from_op(value, vec![self.clone(), other.clone()], |g| {
            vec![Some(g.clone()), Some(g.clone())]
        })
    }

    pub fn sub(&self, other: &Tensor<T>) -> Tensor<T> {
        assert_same_shape(self, other, "sub");
        let value = self.value() - other.value();
        Tensor::from_op(value, vec![self.clone(), other.clone()], |g| {
            vec![Some(g.clone()), Some(g.mapv(|v| -v))]
        })
    }

    pub fn mul(&self, other: &Tensor<T>) -> Tensor<T> {
        assert_same_shape(self, other, "mul");
        let value = self.value() * other.value();
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(value, vec![self.clone(), other.clone()], move |g| {
            vec![
                a.requires_grad().then(|| g * b.value()),
                b.requires_grad().then(|| g * a.value()),
            ]
        })
    }

    pub fn div(&self, other: &Tensor<T>) -> Tensor<T> {
        assert_same_shape(self, other, "div");
        let value = self.value() / other.value();
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(value, vec![self.clone(), other.clone()], move |g| {
            let ga = a.requires_grad().then(|| g / b.value());
            let gb = b.requires_grad().then(|| {
                let mut out = g.clone();
                Zip::from(&mut out)
                    .and(a.value())
                    .and(b.value())
                    .for_each(|o, &x, &y| *o = -*o * x / (y * y));
                out
            });
            vec![ga, gb]
        })
    }

    /// `c * self`.
    pub fn scale(&self, c: T) -> Tensor<T> {
        let value = self.value().mapv(|v| v * c);
        Tensor::from_op(value, vec![self.clone()], move |g| vec![Some(g.mapv(|v| v * c))])
    }

    pub fn add_scalar(&self, c: T) -> Tensor<T> {
        let value = self.value().mapv(|v| v + c);
        Tensor::from_op(value, vec![self.clone()], |g| vec![Some(g.clone())])
    }

    pub fn square(&self) -> Tensor<T> {
        let value = self.value().mapv(|v| v * v);
        let x = self.clone();
        Tensor::from_op(value, vec![self.clone()], move |g| {
            let two = T::one() + T::one();
            let mut out = g.clone();
            Zip::from(&mut out).and(x.value()).for_each(|o, &v| *o = *o * two * v);
            vec![Some(out)]
        })
    }

    pub fn relu(&self) -> Tensor<T> {
        let value = self.value().mapv(|v| if v > T::zero() { v } else { T::zero() });
        let x = self.clone();
        Tensor::from_op(value, vec![self.clone()], move |g| {
            let mut out = g.clone();
            Zip::from(&mut out).and(x.value()).for_each(|o, &v| {
                if v <= T::zero() {
                    *o = T::zero();
                }
            });
            vec![Some(out)]
        })
    }

    pub fn tanh(&self) -> Tensor<T> {
        let value = self.value().mapv(|v| v.tanh());
        let y = value.clone();
        Tensor::from_op(value, vec![self.clone()], move |g| {
            let mut out = g.clone();
            Zip::from(&mut out).and(&y).for_each(|o, &t| *o = *o * (T::one() - t * t));
            vec![Some(out)]
        })
    }

    pub fn sigmoid(&self) -> Tensor<T> {
        let value = self.value().mapv(sigmoid);
        let y = value.clone();
        Tensor::from_op(value, vec![self.clone()], move |g| {
            let mut out = g.clone();
            Zip::from(&mut out).and(&y).for_each(|o, &s| *o = *o * s * (T::one() - s));
            vec![Some(out)]
        })
    }

    pub fn sum_all(&self) -> Tensor<T> {
        let total = self.value().sum();
        let shape = self.value().raw_dim();
        Tensor::from_op(ArrayD::from_elem(IxDyn(&[]), total), vec![self.clone()], move |g| {
            let g0 = *g.iter().next().expect("scalar gradient");
            vec![Some(ArrayD::from_elem(shape.clone(), g0))]
        })
    }

    pub fn mean_all(&self) -> Tensor<T> {
        let n = T::from_usize(self.value().len()).expect("length fits");
        self.sum_all().scale(T::one() / n)
    }

    pub fn reshape(&self, shape: &[usize]) -> Tensor<T> {
        let old = self.shape().to_vec();
        let value = self
            .value()
            .clone()
            .into_shape_with_order(IxDyn(shape))
            .expect("reshape: element count mismatch");
        Tensor::from_op(value, vec![self.clone()], move |g| {
            let back = g
                .as_standard_layout()
                .into_owned()
                .into_shape_with_order(IxDyn(&old))
                .expect("reshape gradient");
            vec![Some(back)]
        })
    }

    /// Slice `len` entries starting at `start` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Tensor<T> {
        assert!(start + len <= self.shape()[axis], "narrow out of range");
        let value = self
            .value()
            .slice_axis(Axis(axis), Slice::from(start..start + len))
            .as_standard_layout()
            .into_owned();
        let full = self.value().raw_dim();
        Tensor::from_op(value, vec![self.clone()], move |g| {
            let mut out = ArrayD::zeros(full.clone());
            out.slice_axis_mut(Axis(axis), Slice::from(start..start + len))
                .assign(g);
            vec![Some(out)]
        })
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(parts: &[Tensor<T>], axis: usize) -> Tensor<T> {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let views: Vec<_> = parts.iter().map(|p| p.value().view()).collect();
        let value = concatenate(Axis(axis), &views)
            .expect("concat: incompatible shapes")
            .as_standard_layout()
            .into_owned();
        let sizes: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        Tensor::from_op(value, parts.to_vec(), move |g| {
            let mut offset = 0;
            sizes
                .iter()
                .map(|&len| {
                    let part = g
                        .slice_axis(Axis(axis), Slice::from(offset..offset + len))
                        .as_standard_layout()
                        .into_owned();
                    offset += len;
                    Some(part)
                })
                .collect()
        })
    }
}

/// Logistic function, kept strictly inside (0, 1) even where the exact
/// value rounds to an endpoint.
pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    let s = if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    };
    let half_eps = T::epsilon() / (T::one() + T::one());
    s.max(T::min_positive_value()).min(T::one() - half_eps)
}
