//! Convolutions and NCHW feature-map operations.
//!
//! Convolutions lower to GEMM through an explicit im2col buffer. The column
//! buffers built in the forward pass are kept by the backward closure.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayD, ArrayView2, ArrayViewMut2, IxDyn};

use super::tensor::{Scalar, Tensor};

/// Geometry of a square-kernel convolution over one image.
#[derive(Clone, Copy, Debug)]
struct ConvGeom {
    channels: usize,
    height: usize,
    width: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeom {
    fn new(channels: usize, height: usize, width: usize, kernel: usize, stride: usize, pad: usize) -> Self {
        assert!(
            height + 2 * pad >= kernel && width + 2 * pad >= kernel,
            "kernel {kernel} larger than padded input {height}x{width}"
        );
        Self {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_h: (height + 2 * pad - kernel) / stride + 1,
            out_w: (width + 2 * pad - kernel) / stride + 1,
        }
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }

    fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

fn im2col<T: Scalar>(src: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (k, n) = (g.kernel, g.col_cols());
    for ch in 0..g.channels {
        let plane = &src[ch * g.height * g.width..(ch + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oi in 0..g.out_h {
                    let drow = &mut dst[oi * g.out_w..(oi + 1) * g.out_w];
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.height as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let srow = &plane[ii as usize * g.width..(ii as usize + 1) * g.width];
                    for (oj, d) in drow.iter_mut().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        *d = if jj >= 0 && (jj as usize) < g.width {
                            srow[jj as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `dst`.
fn col2im_add<T: Scalar>(cols: &[T], g: &ConvGeom, dst: &mut [T]) {
    let (k, n) = (g.kernel, g.col_cols());
    for ch in 0..g.channels {
        let plane = &mut dst[ch * g.height * g.width..(ch + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (ch * k + ki) * k + kj;
                let src = &cols[row * n..(row + 1) * n];
                for oi in 0..g.out_h {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.height as isize {
                        continue;
                    }
                    let prow = &mut plane[ii as usize * g.width..(ii as usize + 1) * g.width];
                    let srow = &src[oi * g.out_w..(oi + 1) * g.out_w];
                    for (oj, &v) in srow.iter().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && (jj as usize) < g.width {
                            prow[jj as usize] = prow[jj as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

fn view2<T>(data: &[T], rows: usize, cols: usize) -> ArrayView2<'_, T> {
    ArrayView2::from_shape((rows, cols), data).expect("matrix view")
}

fn view2_mut<T>(data: &mut [T], rows: usize, cols: usize) -> ArrayViewMut2<'_, T> {
    ArrayViewMut2::from_shape((rows, cols), data).expect("matrix view")
}

fn dims4<T: Scalar>(t: &Tensor<T>, what: &str) -> (usize, usize, usize, usize) {
    match *t.shape() {
        [a, b, c, d] => (a, b, c, d),
        ref s => panic!("{what}: expected 4-D tensor, got shape {s:?}"),
    }
}

fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T], spatial: usize) {
    for (chunk, &b) in out.chunks_mut(spatial).zip(bias.iter().cycle()) {
        chunk.iter_mut().for_each(|v| *v = *v + b);
    }
}

fn bias_grad<T: Scalar>(g: &[T], channels: usize, spatial: usize) -> ArrayD<T> {
    let mut out = vec![T::zero(); channels];
    for (idx, chunk) in g.chunks(spatial).enumerate() {
        let c = idx % channels;
        out[c] = out[c] + chunk.iter().copied().sum::<T>();
    }
    ArrayD::from_shape_vec(IxDyn(&[channels]), out).expect("bias shape")
}

impl<T: Scalar> Tensor<T> {
    /// 2-D cross-correlation with zero padding.
    ///
    /// `self`: (B, C_in, H, W); `weight`: (C_out, C_in, k, k); `bias`: (C_out).
    pub fn conv2d(&self, weight: &Tensor<T>, bias: Option<&Tensor<T>>, stride: usize, pad: usize) -> Tensor<T> {
        let (batch, c_in, h, w) = dims4(self, "conv2d input");
        let (c_out, wc_in, k, k2) = dims4(weight, "conv2d weight");
        assert_eq!(c_in, wc_in, "conv2d: channel mismatch");
        assert_eq!(k, k2, "conv2d: square kernels only");
        let geom = ConvGeom::new(c_in, h, w, k, stride, pad);
        let (rows, n) = (geom.col_rows(), geom.col_cols());

        let x = self.as_slice();
        let wmat = view2(weight.as_slice(), c_out, rows);
        let mut out = vec![T::zero(); batch * c_out * n];
        let mut all_cols = vec![T::zero(); batch * rows * n];
        for b in 0..batch {
            let cols = &mut all_cols[b * rows * n..(b + 1) * rows * n];
            im2col(&x[b * geom.image_len()..(b + 1) * geom.image_len()], &geom, cols);
            let mut ob = view2_mut(&mut out[b * c_out * n..(b + 1) * c_out * n], c_out, n);
            general_mat_mul(T::one(), &wmat, &view2(cols, rows, n), T::zero(), &mut ob);
        }
        if let Some(bias) = bias {
            assert_eq!(bias.shape(), [c_out], "conv2d: bias shape");
            add_channel_bias(&mut out, bias.as_slice(), n);
        }
        let value = ArrayD::from_shape_vec(IxDyn(&[batch, c_out, geom.out_h, geom.out_w]), out)
            .expect("conv2d output");

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(bias) = bias {
            parents.push(bias.clone());
        }
        let (xt, wt) = (self.clone(), weight.clone());
        let bias_needs = bias.map(|b| b.requires_grad());
        Tensor::from_op(value, parents, move |g| {
            let g = g.as_slice().expect("contiguous gradient");
            let wmat = view2(wt.as_slice(), c_out, rows);
            let mut gx = xt.requires_grad().then(|| vec![T::zero(); batch * geom.image_len()]);
            let mut gw = wt.requires_grad().then(|| ArrayD::<T>::zeros(IxDyn(&[c_out, c_in, k, k])));
            let mut gcols = vec![T::zero(); rows * n];
            for b in 0..batch {
                let gb = view2(&g[b * c_out * n..(b + 1) * c_out * n], c_out, n);
                let cols = view2(&all_cols[b * rows * n..(b + 1) * rows * n], rows, n);
                if let Some(gw) = gw.as_mut() {
                    let mut gwm = view2_mut(gw.as_slice_mut().expect("contiguous"), c_out, rows);
                    general_mat_mul(T::one(), &gb, &cols.t(), T::one(), &mut gwm);
                }
                if let Some(gx) = gx.as_mut() {
                    let mut gc = view2_mut(&mut gcols, rows, n);
                    general_mat_mul(T::one(), &wmat.t(), &gb, T::zero(), &mut gc);
                    col2im_add(&gcols, &geom, &mut gx[b * geom.image_len()..(b + 1) * geom.image_len()]);
                }
            }
            let mut res = vec![
                gx.map(|v| ArrayD::from_shape_vec(IxDyn(&[batch, c_in, h, w]), v).expect("grad shape")),
                gw,
            ];
            if let Some(needs) = bias_needs {
                res.push(needs.then(|| bias_grad(g, c_out, n)));
            }
            res
        })
    }

    /// Transposed convolution (the adjoint of [`Tensor::conv2d`] with the same
    /// kernel, stride and padding), plus `output_pad` extra rows/columns.
    ///
    /// `self`: (B, C_in, H, W); `weight`: (C_in, C_out, k, k); `bias`: (C_out).
    /// Output spatial size is `(H - 1) * stride - 2 * pad + k + output_pad`.
    pub fn conv_transpose2d(
        &self,
        weight: &Tensor<T>,
        bias: Option<&Tensor<T>>,
        stride: usize,
        pad: usize,
        output_pad: usize,
    ) -> Tensor<T> {
        let (batch, c_in, h, w) = dims4(self, "conv_transpose2d input");
        let (wc_in, c_out, k, k2) = dims4(weight, "conv_transpose2d weight");
        assert_eq!(c_in, wc_in, "conv_transpose2d: channel mismatch");
        assert_eq!(k, k2, "conv_transpose2d: square kernels only");
        assert!(output_pad < stride, "output padding must be smaller than stride");
        let out_h = (h - 1) * stride + k + output_pad - 2 * pad;
        let out_w = (w - 1) * stride + k + output_pad - 2 * pad;
        // The forward pass scatters through the geometry of a conv over the output.
        let geom = ConvGeom::new(c_out, out_h, out_w, k, stride, pad);
        assert_eq!((geom.out_h, geom.out_w), (h, w), "conv_transpose2d geometry");
        let (rows, n) = (geom.col_rows(), geom.col_cols());

        let x = self.as_slice();
        let wmat = view2(weight.as_slice(), c_in, rows);
        let mut out = vec![T::zero(); batch * geom.image_len()];
        let mut cols = vec![T::zero(); rows * n];
        for b in 0..batch {
            let xb = view2(&x[b * c_in * n..(b + 1) * c_in * n], c_in, n);
            let mut cm = view2_mut(&mut cols, rows, n);
            general_mat_mul(T::one(), &wmat.t(), &xb, T::zero(), &mut cm);
            col2im_add(&cols, &geom, &mut out[b * geom.image_len()..(b + 1) * geom.image_len()]);
        }
        if let Some(bias) = bias {
            assert_eq!(bias.shape(), [c_out], "conv_transpose2d: bias shape");
            add_channel_bias(&mut out, bias.as_slice(), out_h * out_w);
        }
        let value = ArrayD::from_shape_vec(IxDyn(&[batch, c_out, out_h, out_w]), out)
            .expect("conv_transpose2d output");

        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(bias) = bias {
            parents.push(bias.clone());
        }
        let (xt, wt) = (self.clone(), weight.clone());
        let bias_needs = bias.map(|b| b.requires_grad());
        Tensor::from_op(value, parents, move |g| {
            let g = g.as_slice().expect("contiguous gradient");
            let x = xt.as_slice();
            let wmat = view2(wt.as_slice(), c_in, rows);
            let mut gx = xt.requires_grad().then(|| vec![T::zero(); batch * c_in * n]);
            let mut gw = wt.requires_grad().then(|| ArrayD::<T>::zeros(IxDyn(&[c_in, c_out, k, k])));
            let mut gcols = vec![T::zero(); rows * n];
            for b in 0..batch {
                im2col(&g[b * geom.image_len()..(b + 1) * geom.image_len()], &geom, &mut gcols);
                let gc = view2(&gcols, rows, n);
                if let Some(gx) = gx.as_mut() {
                    let mut gxb = view2_mut(&mut gx[b * c_in * n..(b + 1) * c_in * n], c_in, n);
                    general_mat_mul(T::one(), &wmat, &gc, T::zero(), &mut gxb);
                }
                if let Some(gw) = gw.as_mut() {
                    let xb = view2(&x[b * c_in * n..(b + 1) * c_in * n], c_in, n);
                    let mut gwm = view2_mut(gw.as_slice_mut().expect("contiguous"), c_in, rows);
                    general_mat_mul(T::one(), &xb, &gc.t(), T::one(), &mut gwm);
                }
            }
            let mut res = vec![
                gx.map(|v| ArrayD::from_shape_vec(IxDyn(&[batch, c_in, h, w]), v).expect("grad shape")),
                gw,
            ];
            if let Some(needs) = bias_needs {
                res.push(needs.then(|| bias_grad(g, c_out, out_h * out_w)));
            }
            res
        })
    }

    /// Reflection padding of the two spatial axes (no edge repetition).
    pub fn reflect_pad2d(&self, pad: usize) -> Tensor<T> {
        let (batch, ch, h, w) = dims4(self, "reflect_pad2d");
        assert!(pad < h && pad < w, "reflection pad {pad} needs spatial dims > pad");
        let reflect = |i: isize, n: usize| -> usize {
            let n = n as isize;
            let r = if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i };
            r as usize
        };
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        let rows: Vec<usize> = (0..ph).map(|i| reflect(i as isize - pad as isize, h)).collect();
        let cols: Vec<usize> = (0..pw).map(|j| reflect(j as isize - pad as isize, w)).collect();
        let x = self.as_slice();
        let mut out = Vec::with_capacity(batch * ch * ph * pw);
        for plane in x.chunks(h * w) {
            for &r in &rows {
                out.extend(cols.iter().map(|&c| plane[r * w + c]));
            }
        }
        let value = ArrayD::from_shape_vec(IxDyn(&[batch, ch, ph, pw]), out).expect("pad output");
        Tensor::from_op(value, vec![self.clone()], move |g| {
            let g = g.as_slice().expect("contiguous gradient");
            let mut gx = vec![T::zero(); batch * ch * h * w];
            for (gp, gxp) in g.chunks(ph * pw).zip(gx.chunks_mut(h * w)) {
                for (i, &r) in rows.iter().enumerate() {
                    for (j, &c) in cols.iter().enumerate() {
                        gxp[r * w + c] = gxp[r * w + c] + gp[i * pw + j];
                    }
                }
            }
            vec![Some(ArrayD::from_shape_vec(IxDyn(&[batch, ch, h, w]), gx).expect("grad shape"))]
        })
    }

    /// Per-sample, per-channel normalization over the spatial axes, without
    /// affine parameters.
    pub fn instance_norm(&self, eps: T) -> Tensor<T> {
        let (batch, ch, h, w) = dims4(self, "instance_norm");
        let n = h * w;
        let nf = T::from_usize(n).expect("size fits");
        let x = self.as_slice();
        let mut out = vec![T::zero(); x.len()];
        let mut inv_std = Vec::with_capacity(batch * ch);
        for (plane, oplane) in x.chunks(n).zip(out.chunks_mut(n)) {
            let mean = plane.iter().copied().sum::<T>() / nf;
            let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
            let istd = T::one() / (var + eps).sqrt();
            for (o, &v) in oplane.iter_mut().zip(plane) {
                *o = (v - mean) * istd;
            }
            inv_std.push(istd);
        }
        let value = ArrayD::from_shape_vec(IxDyn(&[batch, ch, h, w]), out).expect("norm output");
        let xhat = value.clone();
        Tensor::from_op(value, vec![self.clone()], move |g| {
            let g = g.as_slice().expect("contiguous gradient");
            let xh = xhat.as_slice().expect("contiguous");
            let mut gx = vec![T::zero(); g.len()];
            for (p, ((gp, xp), gxp)) in g.chunks(n).zip(xh.chunks(n)).zip(gx.chunks_mut(n)).enumerate() {
                let sum_g = gp.iter().copied().sum::<T>();
                let sum_gx = gp.iter().zip(xp).map(|(&a, &b)| a * b).sum::<T>();
                let scale = inv_std[p] / nf;
                for ((o, &gv), &xv) in gxp.iter_mut().zip(gp).zip(xp) {
                    *o = scale * (nf * gv - sum_g - xv * sum_gx);
                }
            }
            vec![Some(ArrayD::from_shape_vec(IxDyn(&[batch, ch, h, w]), gx).expect("grad shape"))]
        })
    }

    /// Maximum over the channel axis: (B, C, H, W) -> (B, 1, H, W). The
    /// gradient goes to the first maximal channel.
    pub fn channel_max(&self) -> Tensor<T> {
        let (batch, ch, h, w) = dims4(self, "channel_max");
        let n = h * w;
        let x = self.as_slice();
        let mut out = vec![T::neg_infinity(); batch * n];
        let mut arg = vec![0usize; batch * n];
        for b in 0..batch {
            for c in 0..ch {
                let plane = &x[(b * ch + c) * n..(b * ch + c + 1) * n];
                for (p, &v) in plane.iter().enumerate() {
                    if v > out[b * n + p] {
                        out[b * n + p] = v;
                        arg[b * n + p] = c;
                    }
                }
            }
        }
        let value = ArrayD::from_shape_vec(IxDyn(&[batch, 1, h, w]), out).expect("max output");
        Tensor::from_op(value, vec![self.clone()], move |g| {
            let g = g.as_slice().expect("contiguous gradient");
            let mut gx = vec![T::zero(); batch * ch * n];
            for b in 0..batch {
                for p in 0..n {
                    gx[(b * ch + arg[b * n + p]) * n + p] = g[b * n + p];
                }
            }
            vec![Some(ArrayD::from_shape_vec(IxDyn(&[batch, ch, h, w]), gx).expect("grad shape"))]
        })
    }

    /// Mean over the channel axis: (B, C, H, W) -> (B, 1, H, W).
    pub fn channel_mean(&self) -> Tensor<T> {
        let (batch, ch, h, w) = dims4(self, "channel_mean");
        let n = h * w;
        let inv = T::one() / T::from_usize(ch).expect("size fits");
        let x = self.as_slice();
        let mut out = vec![T::zero(); batch * n];
        for b in 0..batch {
            for c in 0..ch {
                let plane = &x[(b * ch + c) * n..(b * ch + c + 1) * n];
                for (o, &v) in out[b * n..(b + 1) * n].iter_mut().zip(plane) {
                    *o = *o + v;
                }
            }
        }
        out.iter_mut().for_each(|v| *v = *v * inv);
        let value = ArrayD::from_shape_vec(IxDyn(&[batch, 1, h, w]), out).expect("mean output");
        Tensor::from_op(value, vec![self.clone()], move |g| {
            let g = g.as_slice().expect("contiguous gradient");
            let mut gx = Vec::with_capacity(batch * ch * n);
            for b in 0..batch {
                for _ in 0..ch {
                    gx.extend(g[b * n..(b + 1) * n].iter().map(|&v| v * inv));
                }
            }
            vec![Some(ArrayD::from_shape_vec(IxDyn(&[batch, ch, h, w]), gx).expect("grad shape"))]
        })
    }

    /// Multiplies every channel of `self` (B, C, H, W) by a spatial map
    /// (B, 1, H, W).
    pub fn mul_spatial(&self, map: &Tensor<T>) -> Tensor<T> {
        let (batch, ch, h, w) = dims4(self, "mul_spatial input");
        assert_eq!(map.shape(), [batch, 1, h, w], "mul_spatial: map shape");
        let n = h * w;
        let (x, a) = (self.as_slice(), map.as_slice());
        let mut out = Vec::with_capacity(x.len());
        for (idx, plane) in x.chunks(n).enumerate() {
            let b = idx / ch;
            out.extend(plane.iter().zip(&a[b * n..(b + 1) * n]).map(|(&v, &s)| v * s));
        }
        let value = ArrayD::from_shape_vec(IxDyn(&[batch, ch, h, w]), out).expect("mul output");
        let (xt, at) = (self.clone(), map.clone());
        Tensor::from_op(value, vec![self.clone(), map.clone()], move |g| {
            let g = g.as_slice().expect("contiguous gradient");
            let (x, a) = (xt.as_slice(), at.as_slice());
            let gx = xt.requires_grad().then(|| {
                let mut gx = Vec::with_capacity(g.len());
                for (idx, gp) in g.chunks(n).enumerate() {
                    let b = idx / ch;
                    gx.extend(gp.iter().zip(&a[b * n..(b + 1) * n]).map(|(&v, &s)| v * s));
                }
                ArrayD::from_shape_vec(IxDyn(&[batch, ch, h, w]), gx).expect("grad shape")
            });
            let ga = at.requires_grad().then(|| {
                let mut ga = vec![T::zero(); batch * n];
                for (idx, (gp, xp)) in g.chunks(n).zip(x.chunks(n)).enumerate() {
                    let b = idx / ch;
                    for ((o, &gv), &xv) in ga[b * n..(b + 1) * n].iter_mut().zip(gp).zip(xp) {
                        *o = *o + gv * xv;
                    }
                }
                ArrayD::from_shape_vec(IxDyn(&[batch, 1, h, w]), ga).expect("grad shape")
            });
            vec![gx, ga]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{assert_gradients, random_array};
    use ndarray::ArrayD;

    /// Direct nested-loop convolution used as the reference.
    fn naive_conv(x: &ArrayD<f64>, w: &ArrayD<f64>, stride: usize, pad: usize) -> ArrayD<f64> {
        let (b, ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (co, _, k, _) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let mut out = ArrayD::zeros(IxDyn(&[b, co, ho, wo]));
        for n in 0..b {
            for o in 0..co {
                for i in 0..ho {
                    for j in 0..wo {
                        let mut acc = 0.0;
                        for c in 0..ci {
                            for ki in 0..k {
                                for kj in 0..k {
                                    let ii = (i * stride + ki) as isize - pad as isize;
                                    let jj = (j * stride + kj) as isize - pad as isize;
                                    if ii >= 0 && jj >= 0 && (ii as usize) < h && (jj as usize) < wd {
                                        acc += x[[n, c, ii as usize, jj as usize]] * w[[o, c, ki, kj]];
                                    }
                                }
                            }
                        }
                        out[[n, o, i, j]] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv2d_matches_naive_loops() {
        for &(stride, pad, k) in &[(1, 1, 3), (2, 1, 3), (1, 0, 2), (2, 0, 2), (1, 3, 7)] {
            let x = random_array(&[2, 3, 8, 10], 11);
            let w = random_array(&[4, 3, k, k], 12);
            let got = Tensor::constant(x.clone()).conv2d(&Tensor::constant(w.clone()), None, stride, pad);
            let want = naive_conv(&x, &w, stride, pad);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.value().iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv2d_gradients() {
        for &(stride, pad) in &[(1, 1), (2, 1), (2, 0)] {
            assert_gradients(
                &[random_array(&[2, 2, 6, 6], 1), random_array(&[3, 2, 3, 3], 2), random_array(&[3], 3)],
                |t| t[0].conv2d(&t[1], Some(&t[2]), stride, pad).square().sum_all(),
            );
        }
    }

    #[test]
    fn conv_transpose_is_adjoint_of_conv() {
        // <conv(x), y> == <x, conv_transpose(y)> for matching geometry.
        let x = random_array(&[1, 2, 8, 8], 4);
        let w = random_array(&[3, 2, 3, 3], 5);
        let y = random_array(&[1, 3, 4, 4], 6);
        let cx = Tensor::constant(x.clone()).conv2d(&Tensor::constant(w.clone()), None, 2, 1);
        let lhs: f64 = cx.value().iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let ty = Tensor::constant(y).conv_transpose2d(&Tensor::constant(w), None, 2, 1, 1);
        assert_eq!(ty.shape(), [1, 2, 8, 8]);
        let rhs: f64 = ty.value().iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn conv_transpose2d_gradients() {
        assert_gradients(
            &[random_array(&[2, 3, 3, 4], 7), random_array(&[3, 2, 3, 3], 8), random_array(&[2], 9)],
            |t| t[0].conv_transpose2d(&t[1], Some(&t[2]), 2, 1, 1).square().sum_all(),
        );
    }

    #[test]
    fn reflect_pad_values_and_gradients() {
        let x = ArrayD::from_shape_vec(IxDyn(&[1, 1, 2, 3]), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let p = Tensor::constant(x).reflect_pad2d(1);
        assert_eq!(p.shape(), [1, 1, 4, 5]);
        let row0: Vec<f64> = p.as_slice()[..5].to_vec();
        assert_eq!(row0, vec![5.0, 4.0, 5.0, 6.0, 5.0]);
        let w = random_array(&[2, 3, 7, 8], 10);
        assert_gradients(&[random_array(&[2, 3, 5, 6], 11)], |t| {
            t[0].reflect_pad2d(1).mul(&Tensor::constant(w.clone())).sum_all()
        });
    }

    #[test]
    fn instance_norm_statistics_and_gradients() {
        let y = Tensor::constant(random_array(&[2, 3, 5, 5], 12).mapv(|v| 3.0 * v + 1.0)).instance_norm(1e-5);
        for plane in y.as_slice().chunks(25) {
            let mean: f64 = plane.iter().sum::<f64>() / 25.0;
            let var: f64 = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 25.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
        let w = random_array(&[2, 3, 4, 4], 13);
        assert_gradients(&[random_array(&[2, 3, 4, 4], 14)], |t| {
            t[0].instance_norm(1e-5).mul(&Tensor::constant(w.clone())).sum_all()
        });
    }

    #[test]
    fn channel_reductions_and_spatial_product() {
        assert_gradients(&[random_array(&[2, 4, 3, 3], 15)], |t| {
            let pooled = Tensor::concat(&[t[0].channel_max(), t[0].channel_mean()], 1);
            pooled.square().sum_all()
        });
        assert_gradients(&[random_array(&[2, 3, 4, 4], 16), random_array(&[2, 1, 4, 4], 17)], |t| {
            t[0].mul_spatial(&t[1]).square().sum_all()
        });
    }
}
