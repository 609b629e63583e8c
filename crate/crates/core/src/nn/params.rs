use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;

use rand::Rng;

use super::spec::{Layer, ModelSpec};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Named model parameters in a fixed order. Shapes are fixed once built;
/// only element values can be changed.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    entries: Vec<(String, Tensor<T>)>,
}

pub(crate) fn weight_name(layer: usize) -> String {
    format!("layer{layer}.weight")
}

pub(crate) fn bias_name(layer: usize) -> String {
    format!("layer{layer}.bias")
}

/// Name and shape of every parameter tensor the spec needs, in order.
pub fn param_shapes(spec: &ModelSpec) -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        match *layer {
            Layer::Dense { input, output } => {
                out.push((weight_name(i), vec![input, output]));
                out.push((bias_name(i), vec![output]));
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => {
                out.push((weight_name(i), vec![out_channels, in_channels, kernel, kernel]));
                out.push((bias_name(i), vec![out_channels]));
            }
            _ => {}
        }
    }
    out
}

impl<T: Real> ParamSet<T> {
    pub fn new(entries: Vec<(String, Tensor<T>)>) -> Result<Self> {
        for (i, (name, _)) in entries.iter().enumerate() {
            if entries[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::invalid(format!("duplicate parameter name {name}")));
            }
        }
        Ok(ParamSet { entries })
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut entries = Vec::new();
        for (name, shape) in param_shapes(spec) {
            let t = if name.ends_with(".weight") {
                let (fan_in, fan_out) = if shape.len() == 2 {
                    (shape[0], shape[1])
                } else {
                    let field = shape[2] * shape[3];
                    (shape[1] * field, shape[0] * field)
                };
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Tensor::from_fn(shape, |_| T::from_f64(rng.random_range(-limit..=limit)))?
            } else {
                Tensor::zeros(shape)?
            };
            entries.push((name, t));
        }
        Ok(ParamSet { entries })
    }

    /// Checks names and shapes against what `spec` requires.
    pub fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        let want = param_shapes(spec);
        let same = want.len() == self.entries.len()
            && want
                .iter()
                .zip(&self.entries)
                .all(|((n, s), (m, t))| n == m && s.as_slice() == t.shape());
        if same {
            Ok(())
        } else {
            Err(Error::Model(format!(
                "parameters {:?} do not match model {:?}",
                self.shapes(),
                want
            )))
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [T]> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.data_mut())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Mutable element slices, in order.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut [T]> {
        self.entries.iter_mut().map(|(_, t)| t.data_mut())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.entries
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect()
    }

    pub fn flatten(&self) -> Vec<T> {
        self.entries.iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }

    /// Hash of names, shapes and exact bit patterns of every element.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for (n, t) in &self.entries {
            h.write(n.as_bytes());
            for &d in t.shape() {
                h.write_usize(d);
            }
            for &x in t.data() {
                h.write_u64(x.as_f64().to_bits());
            }
        }
        h.finish()
    }

    pub fn into_entries(self) -> Vec<(String, Tensor<T>)> {
        self.entries
    }

    pub fn ensure_finite(&self) -> Result<()> {
        for (_, t) in &self.entries {
            t.ensure_finite("parameter update")?;
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn init_respects_glorot_bound() {
        let spec = ModelSpec::mlp(20, &[10], 2);
        let p: ParamSet<f64> = ParamSet::init(&spec, &mut seeded(1, 0)).unwrap();
        p.check_against(&spec).unwrap();
        let w = p.get("layer0.weight").unwrap();
        let lim = (6.0f64 / 30.0).sqrt();
        assert!(w.data().iter().all(|x| x.abs() <= lim));
        assert!(p.get("layer0.bias").unwrap().data().iter().all(|&x| x == 0.0));
        assert_eq!(p.num_scalars(), 20 * 10 + 10 + 10 * 2 + 2);
    }

    #[test]
    fn duplicate_names_rejected() {
        let t = Tensor::<f32>::zeros(vec![1]).unwrap();
        assert!(ParamSet::new(vec![("a".into(), t.clone()), ("a".into(), t)]).is_err());
    }

    #[test]
    fn fingerprint_tracks_values() {
        let spec = ModelSpec::mlp(3, &[], 2);
        let mut p: ParamSet<f32> = ParamSet::init(&spec, &mut seeded(2, 0)).unwrap();
        let f0 = p.fingerprint();
        p.get_mut("layer0.bias").unwrap()[0] = 1.0;
        assert_ne!(f0, p.fingerprint());
    }
}
