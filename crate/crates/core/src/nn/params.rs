use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Named, ordered collection of trainable tensors.
///
/// Registration order is stable and doubles as the checkpoint order.
#[derive(Debug, Clone)]
pub struct ParamSet<S> {
    names: Vec<String>,
    values: Vec<Tensor<S>>,
    rng: ChaCha8Rng,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new(seed: u64) -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn push(&mut self, name: &str, value: Tensor<S>) -> ParamId {
        assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter {name}"
        );
        self.names.push(name.to_string());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Gaussian init with std `sqrt(2 / fan_in)`. Samples are drawn in f64
    /// so f32 and f64 models built from one seed agree up to rounding.
    pub fn register_fan_in(&mut self, name: &str, shape: &[usize], fan_in: usize) -> ParamId {
        let std = (2.0 / fan_in as f64).sqrt();
        let n: usize = shape.iter().product();
        let data: Vec<S> = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                S::of(z * std)
            })
            .collect();
        self.push(name, Tensor::from_vec(shape, data).expect("shape"))
    }

    pub fn register_const(&mut self, name: &str, shape: &[usize], value: f64) -> ParamId {
        self.push(name, Tensor::full(shape, S::of(value)))
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.values[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter())
    }

    pub fn values_mut(&mut self) -> &mut [Tensor<S>] {
        &mut self.values
    }

    pub fn values(&self) -> &[Tensor<S>] {
        &self.values
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Replace every tensor by name; shapes must match.
    pub fn load_named(&mut self, named: Vec<(String, Tensor<S>)>) -> Result<(), String> {
        if named.len() != self.values.len() {
            return Err(format!(
                "expected {} tensors, found {}",
                self.values.len(),
                named.len()
            ));
        }
        for (name, t) in named {
            let id = self
                .id_of(&name)
                .ok_or_else(|| format!("unknown parameter {name}"))?;
            if self.values[id.0].shape() != t.shape() {
                return Err(format!(
                    "parameter {name}: shape {:?} vs {:?}",
                    t.shape(),
                    self.values[id.0].shape()
                ));
            }
            self.values[id.0] = t;
        }
        Ok(())
    }

    pub fn zero_grads(&self) -> Grads<S> {
        Grads {
            tensors: self.values.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }
}

/// Gradient buffers aligned with a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Grads<S> {
    pub tensors: Vec<Tensor<S>>,
}

impl<S: Scalar> Grads<S> {
    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.tensors[id.0]
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn add_assign(&mut self, other: &Grads<S>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: S) {
        self.tensors.iter_mut().for_each(|t| t.scale(k));
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter())
            .map(|v| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }
}
