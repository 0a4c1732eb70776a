use ndarray::{Array3, ArrayD, IxDyn};

use super::encoder::{Encoder, MlpParams};
use super::patches::{positive_sets, split_patches};
use crate::error::{Error, Result};
use crate::nn::{BoundParams, ParamStore, Scalar, Tensor};

/// Online encoder parameters and their moving-average target copy.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderPair<T: Scalar = f32> {
    pub online: ParamStore<T>,
    pub target: ParamStore<T>,
    pub momentum: f64,
}

impl<T: Scalar> EncoderPair<T> {
    /// Pairs `online` with an exact copy of itself as target.
    pub fn new(online: ParamStore<T>, momentum: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::Config(format!("ema momentum must be in [0, 1], got {momentum}")));
        }
        Ok(Self { target: online.clone(), online, momentum })
    }

    /// `target <- m * target + (1 - m) * online`, parameter by parameter.
    pub fn ema_update(&mut self) {
        let m = T::from_f64_lossy(self.momentum);
        let one_minus = T::from_f64_lossy(1.0 - self.momentum);
        for (name, t) in self.target.iter_mut() {
            let o = self.online.get(name).expect("online and target share names");
            ndarray::Zip::from(t).and(o).for_each(|t, &o| *t = m * *t + one_minus * o);
        }
    }

    /// [`fam_loss`] with both encoders frozen: gradients reach only the
    /// inputs.
    pub fn loss(&self, enc: &Encoder, hf_x: &Tensor<T>, hf_y: &Tensor<T>) -> Result<Tensor<T>> {
        fam_loss(enc, &self.online.bind(false), &self.target.bind(false), hf_x, hf_y)
    }
}

fn check_pair_shapes<T: Scalar>(hf_x: &Tensor<T>, hf_y: &Tensor<T>) -> Result<()> {
    if hf_x.shape() != hf_y.shape() {
        return Err(Error::ShapeMismatch(format!(
            "high-frequency stacks differ: {:?} vs {:?}",
            hf_x.shape(),
            hf_y.shape()
        )));
    }
    Ok(())
}

/// Mixing matrix averaging rows of `P(i)` into row `i`.
fn mixing_matrix<T: Scalar>(sets: &[Vec<Vec<usize>>], n: usize) -> Result<ArrayD<T>> {
    let mut mix = ArrayD::zeros(IxDyn(&[sets.len(), n, n]));
    for (b, per_anchor) in sets.iter().enumerate() {
        for (i, set) in per_anchor.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::EmptyPositiveSet);
            }
            let w = T::from_f64_lossy(1.0 / set.len() as f64);
            for &j in set {
                mix[[b, i, j]] = w;
            }
        }
    }
    Ok(mix)
}

/// Pools the patches in `set`, then applies the MLP.
///
/// `gap` holds one pooled feature vector per patch, shape (N, C); the
/// result has shape (C).
pub fn aggregate<T: Scalar>(gap: &Tensor<T>, set: &[usize], mlp: &MlpParams<T>) -> Result<Tensor<T>> {
    let [n, c] = *gap.shape() else {
        return Err(Error::Shape(format!("aggregate expects (N, C) vectors, got {:?}", gap.shape())));
    };
    if let Some(&j) = set.iter().find(|&&j| j >= n) {
        return Err(Error::Shape(format!("positive index {j} out of range for {n} patches")));
    }
    if set.is_empty() {
        return Err(Error::EmptyPositiveSet);
    }
    let mut mix = ArrayD::zeros(IxDyn(&[1, n, n]));
    for &j in set {
        mix[[0, 0, j]] = T::from_f64_lossy(1.0 / set.len() as f64);
    }
    let pooled = gap.reshape(&[1, n, c]).mix_rows(&mix).narrow(1, 0, 1).reshape(&[1, c]);
    Ok(mlp.apply(&pooled).reshape(&[c]))
}

/// Feature-aggregate loss at one scale. Positive sets come from `fx`.
pub(crate) fn scale_loss<T: Scalar>(
    fx: &Tensor<T>,
    fy: &Tensor<T>,
    grid: usize,
    top_k: usize,
    mlp_x: &MlpParams<T>,
    mlp_y: &MlpParams<T>,
) -> Result<Tensor<T>> {
    let [batch, c, h, w] = *fx.shape() else {
        return Err(Error::Shape(format!("features must be (B, C, H, W), got {:?}", fx.shape())));
    };
    if fy.shape() != fx.shape() {
        return Err(Error::ShapeMismatch(format!("feature maps differ: {:?} vs {:?}", fx.shape(), fy.shape())));
    }
    let n = grid * grid;
    let vals = fx.as_slice();
    let mut sets = Vec::with_capacity(batch);
    for b in 0..batch {
        let map = Array3::from_shape_fn((c, h, w), |(k, i, j)| vals[((b * c + k) * h + i) * w + j].to_f64_lossy());
        sets.push(positive_sets(&split_patches(&map, grid)?, top_k));
    }
    let mix = mixing_matrix::<T>(&sets, n)?;
    let g = mlp_x.apply(&fx.patch_mean(grid).mix_rows(&mix).reshape(&[batch * n, c]));
    let g_prime = mlp_y.apply(&fy.patch_mean(grid).mix_rows(&mix).reshape(&[batch * n, c]));
    let inv = T::from_f64_lossy(1.0 / (batch * n) as f64);
    Ok(g.sub(&g_prime).square().sum_all().scale(inv))
}

/// Mean over scales and anchors of `|g - g'|²`, with `g` from the online
/// encoder on the clean stack `hf_x` and `g'` from the target encoder on the
/// output stack `hf_y`.
///
/// Gradients flow to whatever in `online`, `target`, `hf_x` and `hf_y`
/// requires them; bind parameters as frozen to keep them fixed.
pub fn fam_loss<T: Scalar>(
    enc: &Encoder,
    online: &BoundParams<T>,
    target: &BoundParams<T>,
    hf_x: &Tensor<T>,
    hf_y: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_pair_shapes(hf_x, hf_y)?;
    let fx = enc.encode(online, hf_x)?;
    let fy = enc.encode(target, hf_y)?;
    let cfg = enc.config();
    let mut total: Option<Tensor<T>> = None;
    for s in 0..3 {
        let term = scale_loss(&fx[s], &fy[s], cfg.patch_grid, cfg.top_k, &enc.mlp(online, s), &enc.mlp(target, s))?;
        total = Some(match total {
            Some(t) => t.add(&term),
            None => term,
        });
    }
    Ok(total.expect("three scales").scale(T::from_f64_lossy(1.0 / 3.0)))
}

/// Feature-level MSE between the encodings of `hf_x` (online) and `hf_y`
/// (target), averaged over the three scales with equal weight.
pub fn fam_star_loss<T: Scalar>(
    enc: &Encoder,
    online: &BoundParams<T>,
    target: &BoundParams<T>,
    hf_x: &Tensor<T>,
    hf_y: &Tensor<T>,
) -> Result<Tensor<T>> {
    check_pair_shapes(hf_x, hf_y)?;
    let fx = enc.encode(online, hf_x)?;
    let fy = enc.encode(target, hf_y)?;
    let terms: Vec<Tensor<T>> = fx.iter().zip(&fy).map(|(a, b)| a.sub(b).square().mean_all()).collect();
    Ok(terms[0].add(&terms[1]).add(&terms[2]).scale(T::from_f64_lossy(1.0 / 3.0)))
}
