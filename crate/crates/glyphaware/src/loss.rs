//! Awareness-weighted reconstruction loss: an elementwise (W + alpha) weight
//! on the L1 residual, with W precomputed once per ground-truth image from the
//! frozen identification encoder.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_split_images, CorpusManifest, Split};
use crate::error::{Error, Result};
use crate::ident::IdentModel;
use crate::image::ImageBuf;
use crate::rollout::{attention_rollout, normalize_map, read_map_data, resize_map, write_map_data, MapNorm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    Mean,
    Sum,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossConfig {
    pub alpha: f64,
    pub reduction: Reduction,
}

impl LossConfig {
    pub fn new(alpha: f64, reduction: Reduction) -> Result<Self> {
        if alpha < 0.0 {
            return Err(Error::InvalidConfig("alpha must be nonnegative".into()));
        }
        Ok(Self { alpha, reduction })
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            reduction: Reduction::Mean,
        }
    }
}

/// `reduce((w + alpha) * |x_gt - x_gen|)`, differentiable w.r.t. `x_gen`.
/// All three tensors must share a shape; `w` is expected in [0, 1].
pub fn weighted_l1(x_gt: &Tensor, x_gen: &Tensor, w: &Tensor, cfg: &LossConfig) -> Result<Tensor> {
    if x_gt.dims() != x_gen.dims() || x_gt.dims() != w.dims() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", x_gt.dims()),
            actual: format!("gen {:?}, w {:?}", x_gen.dims(), w.dims()),
        });
    }
    let weight = (w + cfg.alpha)?;
    let residual = (x_gt - x_gen)?.abs()?;
    let weighted = weight.mul(&residual)?;
    Ok(match cfg.reduction {
        Reduction::Mean => weighted.mean_all()?,
        Reduction::Sum => weighted.sum_all()?,
    })
}

/// Precomputed pixel-resolution loss weights, one per (font, letter)
/// ground-truth image: the min-max normalized awareness map of the image,
/// bilinearly resized to the training resolution.
pub struct WeightCache {
    pub root: PathBuf,
    pub target_size: usize,
    entries: BTreeMap<(String, char), ImageBuf>,
}

impl WeightCache {
    /// Weights for every record in the manifest (all splits). Maps are written
    /// to `<root>/<font_id>/<letter>.w`; rebuilding is deterministic.
    pub fn build(
        manifest: &CorpusManifest,
        corpus_root: &Path,
        model: &IdentModel,
        target_size: usize,
        cache_root: &Path,
    ) -> Result<WeightCache> {
        std::fs::create_dir_all(cache_root)?;
        let mut entries = BTreeMap::new();
        for split in [Split::Train, Split::Val, Split::Test] {
            let images = load_split_images(manifest, corpus_root, split, None)?;
            for ((font_id, letter), img) in images {
                let (_, trace) = model.encode(&img)?;
                let map = normalize_map(&attention_rollout(&trace)?)
                    .with_source(&format!("{font_id}/{letter}"));
                let weights = resize_map(&map, target_size)?;
                let path = cache_root.join(&font_id).join(format!("{letter}.w"));
                write_map_data(
                    &path,
                    target_size,
                    target_size,
                    weights.data(),
                    MapNorm::Minmax,
                    &map.source_image_id,
                )?;
                entries.insert((font_id, letter), weights);
            }
        }
        Ok(WeightCache {
            root: cache_root.to_path_buf(),
            target_size,
            entries,
        })
    }

    /// Load a cache previously written by `build`.
    pub fn open(cache_root: &Path, manifest: &CorpusManifest) -> Result<WeightCache> {
        let mut entries = BTreeMap::new();
        let mut target_size = 0;
        for record in &manifest.records {
            let path = cache_root
                .join(&record.font_id)
                .join(format!("{}.w", record.letter));
            if !path.exists() {
                continue;
            }
            let (header, data) = read_map_data(&path)?;
            target_size = header.m;
            entries.insert(
                (record.font_id.clone(), record.letter),
                ImageBuf::from_vec(header.n, header.m, data)?,
            );
        }
        if entries.is_empty() {
            return Err(Error::MissingArtifact(format!(
                "no weight maps under {}",
                cache_root.display()
            )));
        }
        Ok(WeightCache {
            root: cache_root.to_path_buf(),
            target_size,
            entries,
        })
    }

    /// A cache of all-zero weights (useful for loss-equivalence checks).
    pub fn zeros(manifest: &CorpusManifest, target_size: usize) -> WeightCache {
        let mut entries = BTreeMap::new();
        for record in &manifest.records {
            entries.insert(
                (record.font_id.clone(), record.letter),
                ImageBuf::new(target_size, target_size, 0.0),
            );
        }
        WeightCache {
            root: PathBuf::new(),
            target_size,
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Lookup; a miss is an explicit error, never a silent uniform fallback.
    pub fn get(&self, font_id: &str, letter: char) -> Result<&ImageBuf> {
        self.entries
            .get(&(font_id.to_string(), letter))
            .ok_or(Error::CacheMiss {
                font: font_id.to_string(),
                letter,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device, Var};

    fn t(data: &[f32], shape: &[usize]) -> Tensor {
        Tensor::from_vec(data.to_vec(), shape, &Device::Cpu).unwrap()
    }

    #[test]
    fn zero_residual_is_zero_loss() {
        let x = t(&[0.3, 0.7, 0.1, 0.9], &[2, 2]);
        let w = t(&[0.5, 0.0, 1.0, 0.2], &[2, 2]);
        for reduction in [Reduction::Mean, Reduction::Sum] {
            let cfg = LossConfig { alpha: 0.37, reduction };
            let loss = weighted_l1(&x, &x, &w, &cfg).unwrap();
            assert_eq!(loss.to_scalar::<f32>().unwrap(), 0.0);
        }
    }

    #[test]
    fn zero_weights_alpha_one_is_plain_l1_bitwise() {
        let mut rng = {
            use rand::SeedableRng;
            rand_chacha::ChaCha12Rng::seed_from_u64(11)
        };
        use rand::Rng;
        for _ in 0..50 {
            let n = 24;
            let a: Vec<f32> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let b: Vec<f32> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let gt = t(&a, &[4, 6]);
            let gen = t(&b, &[4, 6]);
            let w = t(&vec![0.0; n], &[4, 6]);
            let cfg = LossConfig { alpha: 1.0, reduction: Reduction::Mean };
            let ours = weighted_l1(&gt, &gen, &w, &cfg).unwrap().to_scalar::<f32>().unwrap();
            let plain = (&gt - &gen)
                .unwrap()
                .abs()
                .unwrap()
                .mean_all()
                .unwrap()
                .to_scalar::<f32>()
                .unwrap();
            assert_eq!(ours.to_bits(), plain.to_bits());
        }
    }

    #[test]
    fn hand_case_with_sum_reduction() {
        // |gt-gen| = [[1,0],[0,1]], weights+alpha = [[1.1,0.1],[0.1,0.6]]
        let gt = t(&[1.0, 0.0, 0.0, 1.0], &[2, 2]);
        let gen = t(&[0.0, 0.0, 0.0, 0.0], &[2, 2]);
        let w = t(&[1.0, 0.0, 0.0, 0.5], &[2, 2]);
        let cfg = LossConfig { alpha: 0.1, reduction: Reduction::Sum };
        let loss = weighted_l1(&gt, &gen, &w, &cfg).unwrap().to_scalar::<f32>().unwrap();
        assert!((loss - 1.7).abs() < 1e-6, "loss {loss}");
    }

    #[test]
    fn mean_equals_sum_over_count() {
        let gt = t(&[0.9, 0.2, 0.4, 0.8, 0.1, 0.6], &[2, 3]);
        let gen = t(&[0.1, 0.3, 0.9, 0.2, 0.2, 0.5], &[2, 3]);
        let w = t(&[0.0, 0.25, 0.5, 0.75, 1.0, 0.1], &[2, 3]);
        let mean = weighted_l1(&gt, &gen, &w, &LossConfig { alpha: 0.3, reduction: Reduction::Mean })
            .unwrap()
            .to_scalar::<f32>()
            .unwrap();
        let sum = weighted_l1(&gt, &gen, &w, &LossConfig { alpha: 0.3, reduction: Reduction::Sum })
            .unwrap()
            .to_scalar::<f32>()
            .unwrap();
        assert_eq!(mean, sum / 6.0);
    }

    #[test]
    fn loss_increases_with_alpha_on_nonzero_residual() {
        let gt = t(&[1.0, 0.5], &[2]);
        let gen = t(&[0.0, 0.0], &[2]);
        let w = t(&[0.2, 0.8], &[2]);
        let mut prev = -1.0f32;
        for alpha in [0.0, 0.1, 0.5, 1.0, 2.0] {
            let loss = weighted_l1(&gt, &gen, &w, &LossConfig { alpha, reduction: Reduction::Mean })
                .unwrap()
                .to_scalar::<f32>()
                .unwrap();
            assert!(loss > prev, "alpha {alpha}: {loss} <= {prev}");
            prev = loss;
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let gt = t(&[0.0; 4], &[2, 2]);
        let gen = t(&[0.0; 6], &[2, 3]);
        let w = t(&[0.0; 4], &[2, 2]);
        match weighted_l1(&gt, &gen, &w, &LossConfig::default()) {
            Err(Error::ShapeMismatch { .. }) => {}
            other => panic!("expected ShapeMismatch, got {other:?}"),
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        // f64 end to end so the 1e-4 relative tolerance is meaningful.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let n = 12;
        for case in 0..5 {
            let alpha = [0.0, 0.1, 0.5, 1.0, 2.0][case];
            let gt: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            // keep residuals away from the non-differentiable point
            let gen: Vec<f64> = gt
                .iter()
                .map(|&g| {
                    let delta: f64 = rng.random_range(0.05..0.4);
                    if rng.random_bool(0.5) {
                        g + delta
                    } else {
                        g - delta
                    }
                })
                .collect();
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let gt_t = Tensor::from_vec(gt.clone(), &[n], &Device::Cpu).unwrap();
            let w_t = Tensor::from_vec(w.clone(), &[n], &Device::Cpu).unwrap();
            let gen_v = Var::from_tensor(&Tensor::from_vec(gen.clone(), &[n], &Device::Cpu).unwrap()).unwrap();
            let cfg = LossConfig { alpha, reduction: Reduction::Mean };
            let loss = weighted_l1(&gt_t, gen_v.as_tensor(), &w_t, &cfg).unwrap();
            assert_eq!(loss.dtype(), DType::F64);
            let grads = loss.backward().unwrap();
            let analytic = grads
                .get(gen_v.as_tensor())
                .expect("gradient for x_gen")
                .to_vec1::<f64>()
                .unwrap();
            let h = 1e-4;
            let eval = |gen: &[f64]| -> f64 {
                let gen_t = Tensor::from_vec(gen.to_vec(), &[n], &Device::Cpu).unwrap();
                weighted_l1(&gt_t, &gen_t, &w_t, &cfg)
                    .unwrap()
                    .to_scalar::<f64>()
                    .unwrap()
            };
            for i in 0..n {
                let mut plus = gen.clone();
                plus[i] += h;
                let mut minus = gen.clone();
                minus[i] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let denom = fd.abs().max(1e-12);
                assert!(
                    (analytic[i] - fd).abs() / denom < 1e-4,
                    "alpha {alpha} i {i}: analytic {} vs fd {fd}",
                    analytic[i]
                );
            }
        }
    }

    #[test]
    fn cache_miss_is_explicit() {
        let cache = WeightCache {
            root: PathBuf::new(),
            target_size: 8,
            entries: BTreeMap::new(),
        };
        match cache.get("nofont", 'A') {
            Err(Error::CacheMiss { letter: 'A', .. }) => {}
            other => panic!("expected CacheMiss, got {other:?}"),
        }
    }
}
