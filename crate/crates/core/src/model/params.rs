//! Named parameter storage. Names are hierarchical (`gen/dec/up0/v`), and the
//! `gen/` / `disc/` prefixes define the two optimizer groups.

use std::collections::BTreeMap;

use ndarray::{ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::scalar::Scalar;

/// Ordered parameter map; iteration order is stable (lexicographic), which
/// keeps checkpoints and optimizer traversals deterministic.
#[derive(Debug, Clone)]
pub struct ParamStore<T: Scalar> {
    arrays: BTreeMap<String, ArrayD<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { arrays: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<T>) {
        let prev = self.arrays.insert(name.to_string(), value);
        assert!(prev.is_none(), "duplicate parameter name {name}");
    }

    pub fn get(&self, name: &str) -> &ArrayD<T> {
        self.arrays
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
    }

    pub fn set(&mut self, name: &str, value: ArrayD<T>) {
        let slot = self
            .arrays
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        assert_eq!(slot.shape(), value.shape(), "shape change for {name}");
        *slot = value;
    }

    /// Mutate a parameter in place (no clone).
    pub fn update<F: FnOnce(&mut ArrayD<T>)>(&mut self, name: &str, f: F) {
        let slot = self
            .arrays
            .get_mut(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"));
        f(slot);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<T>)> {
        self.arrays.iter()
    }

    pub fn names_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.arrays
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect()
    }

    /// Order-sensitive hash of the bit patterns under a prefix; used to assert
    /// that an update touched only its own parameter group.
    pub fn checksum(&self, prefix: &str) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut mix = |v: u64| {
            h ^= v;
            h = h.wrapping_mul(0x100000001b3);
        };
        for (name, arr) in &self.arrays {
            if !name.starts_with(prefix) {
                continue;
            }
            for b in name.as_bytes() {
                mix(*b as u64);
            }
            for v in arr.iter() {
                mix(v.to_bits_u64());
            }
        }
        h
    }
}

/// Seeded initializer for parameter arrays.
pub struct ParamInit {
    rng: ChaCha8Rng,
}

impl ParamInit {
    pub fn new(seed: u64) -> Self {
        ParamInit { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn randn<T: Scalar>(&mut self, shape: &[usize], std: f64) -> ArrayD<T> {
        let n: usize = shape.iter().product();
        let data: Vec<T> = (0..n)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut self.rng);
                T::from_config(x * std)
            })
            .collect();
        ArrayD::from_shape_vec(IxDyn(shape), data).unwrap()
    }

    pub fn zeros<T: Scalar>(&mut self, shape: &[usize]) -> ArrayD<T> {
        ArrayD::zeros(IxDyn(shape))
    }
}
