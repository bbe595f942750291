//! Deterministic parameter store for the candle models.
//!
//! candle's own initializers draw from a thread-local RNG, which breaks
//! byte-for-byte reproducibility, so every parameter here is created from a
//! ChaCha stream seeded explicitly. Creation order is the declaration order of
//! the model, making runs with equal seeds identical.

use std::collections::HashMap;

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in [-bound, bound].
    Uniform(f32),
}

pub struct VarStore {
    device: Device,
    vars: Vec<(String, Var)>,
    loaded: HashMap<String, Tensor>,
    rng: ChaCha12Rng,
}

impl VarStore {
    pub fn seeded(seed: u64) -> Self {
        Self {
            device: Device::Cpu,
            vars: Vec::new(),
            loaded: HashMap::new(),
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    /// Parameters are taken from `tensors` by name; anything absent falls back
    /// to fresh seeded initialization (this is the weight-import hook).
    pub fn from_tensors(tensors: HashMap<String, Tensor>, fallback_seed: u64) -> Self {
        Self {
            device: Device::Cpu,
            vars: Vec::new(),
            loaded: tensors,
            rng: ChaCha12Rng::seed_from_u64(fallback_seed),
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn take(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Tensor> {
        let tensor = if let Some(t) = self.loaded.get(name) {
            if t.dims() != shape {
                return Err(crate::error::Error::CheckpointFormat(format!(
                    "tensor '{}' has shape {:?}, expected {:?}",
                    name,
                    t.dims(),
                    shape
                )));
            }
            t.clone()
        } else {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = match init {
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
                Init::Uniform(b) => (0..n).map(|_| self.rng.random_range(-b..=b)).collect(),
            };
            Tensor::from_vec(data, shape, &self.device)?
        };
        let var = Var::from_tensor(&tensor)?;
        let out = var.as_tensor().clone();
        self.vars.push((name.to_string(), var));
        Ok(out)
    }

    pub fn all_vars(&self) -> Vec<Var> {
        self.vars.iter().map(|(_, v)| v.clone()).collect()
    }

    /// Tensors sorted by name, as host data (checkpoint representation).
    pub fn named_tensors(&self) -> Result<Vec<(String, Vec<usize>, Vec<f32>)>> {
        let mut out: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
        for (name, var) in &self.vars {
            let t = var.as_tensor();
            let data = t.flatten_all()?.to_vec1::<f32>()?;
            out.push((name.clone(), t.dims().to_vec(), data));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    /// Overwrite the live parameters from a snapshot (by name).
    pub fn restore(&mut self, snapshot: &[(String, Vec<usize>, Vec<f32>)]) -> Result<()> {
        let by_name: HashMap<&str, &(String, Vec<usize>, Vec<f32>)> =
            snapshot.iter().map(|e| (e.0.as_str(), e)).collect();
        for (name, var) in &self.vars {
            if let Some((_, shape, data)) = by_name.get(name.as_str()) {
                let t = Tensor::from_vec(data.clone(), shape.as_slice(), &self.device)?;
                var.set(&t)?;
            }
        }
        Ok(())
    }
}

/// Linear layer with torch-style fan-in uniform init.
pub fn linear(
    vs: &mut VarStore,
    name: &str,
    in_dim: usize,
    out_dim: usize,
) -> Result<candle_nn::Linear> {
    let bound = 1.0 / (in_dim as f32).sqrt();
    let w = vs.take(&format!("{name}.weight"), &[out_dim, in_dim], Init::Uniform(bound))?;
    let b = vs.take(&format!("{name}.bias"), &[out_dim], Init::Uniform(bound))?;
    Ok(candle_nn::Linear::new(w, Some(b)))
}

pub fn layer_norm(vs: &mut VarStore, name: &str, dim: usize) -> Result<candle_nn::LayerNorm> {
    let w = vs.take(&format!("{name}.weight"), &[dim], Init::Ones)?;
    let b = vs.take(&format!("{name}.bias"), &[dim], Init::Zeros)?;
    Ok(candle_nn::LayerNorm::new(w, b, 1e-6))
}

pub fn conv2d(
    vs: &mut VarStore,
    name: &str,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<candle_nn::Conv2d> {
    let bound = 1.0 / ((in_ch * kernel * kernel) as f32).sqrt();
    let w = vs.take(
        &format!("{name}.weight"),
        &[out_ch, in_ch, kernel, kernel],
        Init::Uniform(bound),
    )?;
    let b = vs.take(&format!("{name}.bias"), &[out_ch], Init::Uniform(bound))?;
    let cfg = candle_nn::Conv2dConfig {
        padding,
        stride,
        ..Default::default()
    };
    Ok(candle_nn::Conv2d::new(w, Some(b), cfg))
}

pub fn conv_transpose2d(
    vs: &mut VarStore,
    name: &str,
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
) -> Result<candle_nn::ConvTranspose2d> {
    let bound = 1.0 / ((in_ch * kernel * kernel) as f32).sqrt();
    let w = vs.take(
        &format!("{name}.weight"),
        &[in_ch, out_ch, kernel, kernel],
        Init::Uniform(bound),
    )?;
    let b = vs.take(&format!("{name}.bias"), &[out_ch], Init::Uniform(bound))?;
    let cfg = candle_nn::ConvTranspose2dConfig {
        padding,
        stride,
        ..Default::default()
    };
    Ok(candle_nn::ConvTranspose2d::new(w, Some(b), cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_reproducible() {
        let mut a = VarStore::seeded(5);
        let mut b = VarStore::seeded(5);
        let ta = a.take("w", &[3, 4], Init::Uniform(0.5)).unwrap();
        let tb = b.take("w", &[3, 4], Init::Uniform(0.5)).unwrap();
        assert_eq!(
            ta.flatten_all().unwrap().to_vec1::<f32>().unwrap(),
            tb.flatten_all().unwrap().to_vec1::<f32>().unwrap()
        );
    }

    #[test]
    fn loaded_tensors_win_over_init() {
        let t = Tensor::from_vec(vec![1.0f32, 2.0, 3.0], &[3], &Device::Cpu).unwrap();
        let mut store =
            VarStore::from_tensors(HashMap::from([("b".to_string(), t)]), 0);
        let loaded = store.take("b", &[3], Init::Zeros).unwrap();
        assert_eq!(loaded.to_vec1::<f32>().unwrap(), vec![1.0, 2.0, 3.0]);
        let fresh = store.take("c", &[2], Init::Ones).unwrap();
        assert_eq!(fresh.to_vec1::<f32>().unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn named_tensors_are_sorted() {
        let mut vs = VarStore::seeded(1);
        vs.take("z", &[1], Init::Zeros).unwrap();
        vs.take("a", &[1], Init::Ones).unwrap();
        let named = vs.named_tensors().unwrap();
        assert_eq!(named[0].0, "a");
        assert_eq!(named[1].0, "z");
    }
}
