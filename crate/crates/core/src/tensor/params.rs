//! Named parameter storage. Registration order is fixed, which pins the
//! optimizer state layout, checkpoint record order, and RNG draw order.

use super::{Elem, Tensor};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
pub struct ParamSet<E> {
    names: Vec<String>,
    tensors: Vec<Tensor<E>>,
}

impl<E: Elem> ParamSet<E> {
    pub fn new() -> Self {
        ParamSet {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor<E>) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name:?}"
        );
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Tensor<E> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<E> {
        &mut self.tensors[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<E>)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    pub fn total_numel(&self) -> usize {
        self.tensors.iter().map(|t| t.numel()).sum()
    }
}

impl<E: Elem> Default for ParamSet<E> {
    fn default() -> Self {
        Self::new()
    }
}

/// Initializers. All draw in f64 and convert, so layer shapes alone determine
/// the RNG stream.
pub mod init {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    /// Uniform(-b, b) with b = sqrt(1 / fan_in); the usual dense-layer default.
    pub fn linear_weight<E: Elem>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor<E> {
        let bound = (1.0 / fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| E::from_f64(rng.random_range(-bound..bound)))
            .collect();
        Tensor::from_vec(fan_in, fan_out, data).unwrap()
    }

    /// Standard normal rows, one per embedding slot.
    pub fn embedding<E: Elem>(rng: &mut ChaCha8Rng, slots: usize, dim: usize) -> Tensor<E> {
        let data = (0..slots * dim)
            .map(|_| {
                let x: f64 = StandardNormal.sample(rng);
                E::from_f64(x)
            })
            .collect();
        Tensor::from_vec(slots, dim, data).unwrap()
    }

    pub fn zeros<E: Elem>(rows: usize, cols: usize) -> Tensor<E> {
        Tensor::zeros(rows, cols)
    }

    pub fn ones<E: Elem>(rows: usize, cols: usize) -> Tensor<E> {
        Tensor::filled(rows, cols, E::one())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn ids_follow_registration_order() {
        let mut params = ParamSet::<f64>::new();
        let a = params.add("a", Tensor::zeros(1, 1));
        let b = params.add("b", Tensor::zeros(2, 2));
        assert_eq!(a.index(), 0);
        assert_eq!(b.index(), 1);
        assert_eq!(params.name(b), "b");
        assert_eq!(params.lookup("a"), Some(a));
        assert_eq!(params.lookup("c"), None);
        assert_eq!(params.total_numel(), 5);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_names_rejected() {
        let mut params = ParamSet::<f64>::new();
        params.add("w", Tensor::zeros(1, 1));
        params.add("w", Tensor::zeros(1, 1));
    }

    #[test]
    fn linear_init_respects_bound_and_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = init::linear_weight::<f64>(&mut rng, 16, 8);
        let bound = (1.0f64 / 16.0).sqrt();
        assert!(w.data().iter().all(|&x| x.abs() < bound));
        let mut rng2 = ChaCha8Rng::seed_from_u64(7);
        let w2 = init::linear_weight::<f64>(&mut rng2, 16, 8);
        assert_eq!(w, w2);
    }

    #[test]
    fn f32_and_f64_inits_draw_the_same_stream() {
        let mut rng_a = ChaCha8Rng::seed_from_u64(3);
        let mut rng_b = ChaCha8Rng::seed_from_u64(3);
        let wa = init::linear_weight::<f32>(&mut rng_a, 4, 4);
        let wb = init::linear_weight::<f64>(&mut rng_b, 4, 4);
        for (x, y) in wa.data().iter().zip(wb.data()) {
            assert_eq!(*x, *y as f32);
        }
    }
}
