use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Gradients, Scalar, Tensor};

/// Named parameter tensors, iterated in name order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Scalar = f32> {
    params: BTreeMap<String, ArrayD<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self { params: BTreeMap::new() }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: ArrayD<T>) {
        self.params.insert(name.into(), value.as_standard_layout().into_owned());
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<T>> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ArrayD<T>> {
        self.params.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<T>)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ArrayD<T>)> {
        self.params.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Number of named tensors.
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(ArrayD::len).sum()
    }

    /// Same names and shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), ArrayD::zeros(v.raw_dim())))
                .collect(),
        }
    }

    /// True when both stores hold the same names with the same shapes.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|((ka, va), (kb, vb))| ka == kb && va.shape() == vb.shape())
    }

    /// Converts every tensor to another element type.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|(k, v)| (k.clone(), v.mapv(|x| U::from_f64_lossy(x.to_f64_lossy()))))
                .collect(),
        }
    }

    /// Wraps every tensor as a graph leaf. With `trainable = false` the
    /// leaves are constants and receive no gradient.
    pub fn bind(&self, trainable: bool) -> BoundParams<T> {
        let leaves = self
            .params
            .iter()
            .map(|(k, v)| {
                let t = if trainable {
                    Tensor::leaf(v.clone())
                } else {
                    Tensor::constant(v.clone())
                };
                (k.clone(), t)
            })
            .collect();
        BoundParams { leaves }
    }
}

/// Parameters attached to one forward pass.
#[derive(Clone, Debug)]
pub struct BoundParams<T: Scalar> {
    leaves: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> BoundParams<T> {
    /// Panics on an unknown name: parameter names are fixed by the model
    /// that created the store.
    pub fn get(&self, name: &str) -> &Tensor<T> {
        self.leaves
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter `{name}`"))
    }

    /// Collects gradients for every bound parameter (zeros where the loss
    /// does not depend on it).
    pub fn gradients(&self, grads: &Gradients<T>) -> BTreeMap<String, ArrayD<T>> {
        self.leaves
            .iter()
            .map(|(k, t)| {
                let g = grads
                    .get(t)
                    .cloned()
                    .unwrap_or_else(|| ArrayD::zeros(IxDyn(t.shape())));
                (k.clone(), g)
            })
            .collect()
    }
}

/// Seeded initializer; each parameter name gets its own stream so adding a
/// layer does not perturb the others.
pub(crate) struct Initializer {
    seed: u64,
}

impl Initializer {
    pub(crate) fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn rng_for(&self, name: &str) -> ChaCha8Rng {
        // FNV-1a over the name, mixed with the seed.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in name.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
        ChaCha8Rng::seed_from_u64(crate::rng::mix(self.seed, h))
    }

    pub(crate) fn normal<T: Scalar>(&self, name: &str, shape: &[usize], std: f64) -> ArrayD<T> {
        let mut rng = self.rng_for(name);
        let dist = Normal::new(0.0, std).expect("valid std");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| T::from_f64_lossy(dist.sample(&mut rng))).collect();
        ArrayD::from_shape_vec(IxDyn(shape), data).expect("shape")
    }

    /// He-normal for a ReLU-followed layer with the given fan-in.
    pub(crate) fn kaiming<T: Scalar>(&self, name: &str, shape: &[usize], fan_in: usize) -> ArrayD<T> {
        self.normal(name, shape, (2.0 / fan_in as f64).sqrt())
    }
}

pub(crate) fn zeros<T: Scalar>(shape: &[usize]) -> ArrayD<T> {
    ArrayD::zeros(IxDyn(shape))
}
