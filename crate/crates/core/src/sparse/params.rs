use std::collections::BTreeMap;

use rand::Rng;

use super::kernel::Kernel;
use crate::error::{Error, Result};

/// A named parameter array with its logical shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamTensor {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![0.0; n] }
    }

    pub fn filled(shape: Vec<usize>, v: f64) -> Self {
        let n = shape.iter().product();
        Self { shape, data: vec![v; n] }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Ordered name → parameter map. Ordering is lexicographic, which keeps
/// checkpoints and optimizer sweeps deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    map: BTreeMap<String, ParamTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: ParamTensor) {
        self.map.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&ParamTensor> {
        self.map.get(name).ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ParamTensor> {
        self.map.get_mut(name).ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamTensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ParamTensor)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.map.values().map(ParamTensor::len).sum()
    }

    /// Number of scalars in parameters whose name starts with `prefix`.
    pub fn numel_with_prefix(&self, prefix: &str) -> usize {
        self.map.iter().filter(|(k, _)| k.starts_with(prefix)).map(|(_, v)| v.len()).sum()
    }

    /// Registers `{name}.weight` (shape `[volume, cin, cout]`) with He
    /// uniform init over the surface fan-in and a zero `{name}.bias`.
    pub fn add_conv<R: Rng>(&mut self, name: &str, kernel: Kernel, cin: usize, cout: usize, rng: &mut R) {
        let vol = kernel.volume();
        let limit = (6.0 / (cin * kernel.surface_taps()) as f64).sqrt();
        let data = (0..vol * cin * cout).map(|_| rng.gen_range(-limit..limit)).collect();
        self.insert(format!("{name}.weight"), ParamTensor { shape: vec![vol, cin, cout], data });
        self.insert(format!("{name}.bias"), ParamTensor::zeros(vec![cout]));
    }

    /// Copies every parameter under `prefix` from `src`.
    pub fn copy_prefix_from(&mut self, src: &ParamStore, prefix: &str) -> Result<usize> {
        let mut n = 0;
        for (k, v) in src.map.iter().filter(|(k, _)| k.starts_with(prefix)) {
            let dst = self.get_mut(k)?;
            if dst.shape != v.shape {
                return Err(Error::Shape(format!("parameter '{k}' has shape {:?}, source {:?}", dst.shape, v.shape)));
            }
            dst.data.clone_from(&v.data);
            n += 1;
        }
        Ok(n)
    }

    pub fn all_finite(&self) -> bool {
        self.map.values().all(|t| t.data.iter().all(|v| v.is_finite()))
    }
}
