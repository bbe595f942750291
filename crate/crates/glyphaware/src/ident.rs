//! Siamese font identification: a vision-transformer encoder shared by both
//! images of a pair, and a two-layer classifier over the concatenated class
//! tokens deciding "same font" vs "not".
//!
//! Per-layer post-softmax attention can be recorded during encoding; the
//! rollout module turns such a trace into a patch-level style-importance map.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::{DType, IndexOp, Tensor, D};
use candle_nn::{ops, AdamW, Module, Optimizer, ParamsAdamW};
use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_split_images, CorpusManifest, Split};
use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::nn::{conv2d, layer_norm, linear, Init, VarStore};
use crate::pairs::{epoch_seed, sample_pairs, PairLabel, PairSpec};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EncoderConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub depth: usize,
    pub heads: usize,
    pub embed_dim: usize,
    pub mlp_ratio: f32,
    /// Learned positional embeddings; disabled only for the
    /// permutation-consistency diagnostic.
    pub positional: bool,
}

impl EncoderConfig {
    /// Full-scale configuration: 224/16 input, 12 layers, 12 heads, 768-dim
    /// class token.
    pub fn paper() -> Self {
        Self {
            image_size: 224,
            patch_size: 16,
            depth: 12,
            heads: 12,
            embed_dim: 768,
            mlp_ratio: 4.0,
            positional: true,
        }
    }

    /// Small configuration that trains in minutes on a CPU.
    pub fn desk() -> Self {
        Self {
            image_size: 64,
            patch_size: 8,
            depth: 6,
            heads: 4,
            embed_dim: 192,
            mlp_ratio: 4.0,
            positional: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size % self.patch_size != 0 {
            return Err(Error::InvalidConfig(format!(
                "image_size {} not divisible by patch_size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "embed_dim {} not divisible by heads {}",
                self.embed_dim, self.heads
            )));
        }
        Ok(())
    }

    /// Patch grid (M, N).
    pub fn grid(&self) -> (usize, usize) {
        let m = self.image_size / self.patch_size;
        (m, m)
    }

    /// Token count including the class token.
    pub fn tokens(&self) -> usize {
        let (m, n) = self.grid();
        m * n + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub loss: LossKind,
    pub steps: usize,
    pub eval_every: usize,
    pub val_pairs: usize,
    /// Stop early once validation accuracy reaches this value.
    pub target_val_accuracy: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn paper() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 1e-5,
            optimizer: OptimizerKind::Adam,
            loss: LossKind::CrossEntropy,
            steps: 600,
            eval_every: 50,
            val_pairs: 192,
            target_val_accuracy: None,
            seed: 0,
        }
    }

    pub fn desk() -> Self {
        Self {
            batch_size: 32,
            learning_rate: 1e-4,
            optimizer: OptimizerKind::Adam,
            loss: LossKind::CrossEntropy,
            steps: 600,
            eval_every: 50,
            val_pairs: 192,
            target_val_accuracy: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be >= 2".into()));
        }
        Ok(())
    }
}

/// The per-image style feature: the class token after the final encoder layer.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleFeature(pub Vec<f32>);

impl StyleFeature {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Post-softmax attention of every layer, each `heads x T x T` with the class
/// token first.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub layers: Vec<Array3<f32>>,
    pub grid: (usize, usize),
}

impl AttentionTrace {
    pub fn tokens(&self) -> usize {
        self.layers.first().map(|l| l.shape()[1]).unwrap_or(0)
    }
}

struct Block {
    ln1: candle_nn::LayerNorm,
    qkv: candle_nn::Linear,
    proj: candle_nn::Linear,
    ln2: candle_nn::LayerNorm,
    fc1: candle_nn::Linear,
    fc2: candle_nn::Linear,
    heads: usize,
}

impl Block {
    fn new(vs: &mut VarStore, name: &str, dim: usize, heads: usize, mlp_ratio: f32) -> Result<Self> {
        let hidden = (dim as f32 * mlp_ratio) as usize;
        Ok(Self {
            ln1: layer_norm(vs, &format!("{name}.ln1"), dim)?,
            qkv: linear(vs, &format!("{name}.qkv"), dim, 3 * dim)?,
            proj: linear(vs, &format!("{name}.proj"), dim, dim)?,
            ln2: layer_norm(vs, &format!("{name}.ln2"), dim)?,
            fc1: linear(vs, &format!("{name}.fc1"), dim, hidden)?,
            fc2: linear(vs, &format!("{name}.fc2"), hidden, dim)?,
            heads,
        })
    }

    /// Pre-norm transformer block; returns the post-softmax attention
    /// (batch, heads, T, T).
    fn forward(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, t, c) = x.dims3()?;
        let hd = c / self.heads;
        let y = self.ln1.forward(x)?;
        let qkv = self
            .qkv
            .forward(&y)?
            .reshape((b, t, 3, self.heads, hd))?
            .permute((2, 0, 3, 1, 4))?;
        let q = qkv.get(0)?.contiguous()?;
        let k = qkv.get(1)?.contiguous()?;
        let v = qkv.get(2)?.contiguous()?;
        let scores = (q.matmul(&k.transpose(D::Minus2, D::Minus1)?)? / (hd as f64).sqrt())?;
        let att = ops::softmax_last_dim(&scores)?;
        let ctx = att
            .matmul(&v)?
            .transpose(1, 2)?
            .contiguous()?
            .reshape((b, t, c))?;
        let x = (x + self.proj.forward(&ctx)?)?;
        let y = self.ln2.forward(&x)?;
        let y = self.fc2.forward(&self.fc1.forward(&y)?.gelu()?)?;
        Ok(((&x + y)?, att))
    }
}

/// Encoder plus pair classifier with their parameter store.
pub struct IdentModel {
    pub cfg: EncoderConfig,
    patch: candle_nn::Conv2d,
    cls: Tensor,
    pos: Tensor,
    blocks: Vec<Block>,
    ln_f: candle_nn::LayerNorm,
    fc1: candle_nn::Linear,
    fc2: candle_nn::Linear,
    pub vs: VarStore,
}

impl IdentModel {
    pub fn new(cfg: EncoderConfig, mut vs: VarStore) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.embed_dim;
        let patch = conv2d(&mut vs, "encoder.patch", 1, d, cfg.patch_size, cfg.patch_size, 0)?;
        let cls = vs.take("encoder.cls", &[1, 1, d], Init::Uniform(0.02))?;
        let pos = vs.take("encoder.pos", &[1, cfg.tokens(), d], Init::Uniform(0.02))?;
        let mut blocks = Vec::with_capacity(cfg.depth);
        for i in 0..cfg.depth {
            blocks.push(Block::new(
                &mut vs,
                &format!("encoder.block{i}"),
                d,
                cfg.heads,
                cfg.mlp_ratio,
            )?);
        }
        let ln_f = layer_norm(&mut vs, "encoder.ln_f", d)?;
        let fc1 = linear(&mut vs, "head.fc1", 2 * d, d)?;
        let fc2 = linear(&mut vs, "head.fc2", d, 2)?;
        Ok(Self {
            cfg,
            patch,
            cls,
            pos,
            blocks,
            ln_f,
            fc1,
            fc2,
            vs,
        })
    }

    pub fn new_seeded(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        Self::new(cfg, VarStore::seeded(seed))
    }

    /// Encode a batch of images (B, 1, S, S) already normalized to [-1, 1].
    /// Returns class tokens (B, D) and, when requested, per-layer attention.
    pub fn encode_batch(&self, x: &Tensor, with_attn: bool) -> Result<(Tensor, Vec<Tensor>)> {
        let b = x.dim(0)?;
        let p = self.patch.forward(x)?; // (B, D, M, N)
        let p = p.flatten_from(2)?.transpose(1, 2)?.contiguous()?; // (B, T-1, D)
        let cls = self.cls.expand((b, 1, self.cfg.embed_dim))?;
        let mut h = Tensor::cat(&[&cls, &p], 1)?;
        if self.cfg.positional {
            h = h.broadcast_add(&self.pos)?;
        }
        let mut traces = Vec::new();
        for block in &self.blocks {
            let (next, att) = block.forward(&h)?;
            h = next;
            if with_attn {
                traces.push(att);
            }
        }
        let h = self.ln_f.forward(&h)?;
        let cls_out = h.i((.., 0, ..))?.contiguous()?;
        Ok((cls_out, traces))
    }

    /// Encode one glyph image. The image is resized to the configured input
    /// size if needed. Deterministic in inference.
    pub fn encode(&self, img: &ImageBuf) -> Result<(StyleFeature, AttentionTrace)> {
        let x = self.image_tensor(img)?;
        let (cls, traces) = self.encode_batch(&x, true)?;
        let feature = StyleFeature(cls.i(0)?.to_vec1::<f32>()?);
        let mut layers = Vec::with_capacity(traces.len());
        for att in traces {
            let att = att.i(0)?.contiguous()?; // (H, T, T)
            let (h, t, _) = att.dims3()?;
            let data = att.flatten_all()?.to_vec1::<f32>()?;
            layers.push(Array3::from_shape_vec((h, t, t), data).expect("attention shape"));
        }
        Ok((
            feature,
            AttentionTrace {
                layers,
                grid: self.cfg.grid(),
            },
        ))
    }

    /// (B, 1, S, S) tensor in [-1, 1] from a single image.
    pub fn image_tensor(&self, img: &ImageBuf) -> Result<Tensor> {
        let s = self.cfg.image_size;
        let resized;
        let img = if img.width() != s || img.height() != s {
            resized = img.resize_bilinear(s, s);
            &resized
        } else {
            img
        };
        let data: Vec<f32> = img.data().iter().map(|&v| v * 2.0 - 1.0).collect();
        Ok(Tensor::from_vec(data, (1, 1, s, s), self.vs.device())?)
    }

    /// Pair logits from two feature batches (B, D) each: concatenate and apply
    /// the two fully connected layers. Column 1 is the "same" logit.
    pub fn pair_logits(&self, left: &Tensor, right: &Tensor) -> Result<Tensor> {
        let joint = Tensor::cat(&[left, right], 1)?;
        Ok(self.fc2.forward(&self.fc1.forward(&joint)?.relu()?)?)
    }

    /// Probability that the two features come from the same font.
    pub fn p_same(&self, left: &StyleFeature, right: &StyleFeature) -> Result<f32> {
        let d = left.dim();
        if d != right.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("feature dim {d}"),
                actual: format!("feature dim {}", right.dim()),
            });
        }
        let l = Tensor::from_vec(left.0.clone(), (1, d), self.vs.device())?;
        let r = Tensor::from_vec(right.0.clone(), (1, d), self.vs.device())?;
        let logits = self.pair_logits(&l, &r)?;
        let probs = ops::softmax_last_dim(&logits)?;
        Ok(probs.i((0, 1))?.to_scalar::<f32>()?)
    }

    pub fn save_checkpoint(
        &self,
        path: &Path,
        train_cfg: &TrainConfig,
        best_step: usize,
        best_val: Option<f64>,
        snapshot: Option<&[(String, Vec<usize>, Vec<f32>)]>,
    ) -> Result<()> {
        let config = serde_json::json!({
            "encoder": self.cfg,
            "train": train_cfg,
        });
        let owned;
        let tensors = match snapshot {
            Some(s) => s,
            None => {
                owned = self.vs.named_tensors()?;
                &owned
            }
        };
        crate::ckpt::save(
            path,
            "identifier",
            config,
            train_cfg.seed,
            best_step,
            best_val,
            tensors,
        )
    }

    pub fn load_checkpoint(path: &Path) -> Result<(Self, TrainConfig, crate::ckpt::CheckpointMeta)> {
        let (meta, tensors) = crate::ckpt::load(path)?;
        if meta.kind != "identifier" {
            return Err(Error::CheckpointFormat(format!(
                "expected an identifier checkpoint, found '{}'",
                meta.kind
            )));
        }
        let enc_cfg: EncoderConfig = serde_json::from_value(meta.config["encoder"].clone())?;
        let train_cfg: TrainConfig = serde_json::from_value(meta.config["train"].clone())?;
        let vs = VarStore::from_tensors(tensors, meta.seed);
        let model = Self::new(enc_cfg, vs)?;
        Ok((model, train_cfg, meta))
    }
}

/// Normalized image cache for one split, keyed by (font, letter).
pub struct ImageCache {
    pub size: usize,
    pub images: BTreeMap<(String, char), Vec<f32>>,
}

impl ImageCache {
    pub fn load(
        manifest: &CorpusManifest,
        corpus_root: &Path,
        split: Split,
        size: usize,
    ) -> Result<Self> {
        let raw = load_split_images(manifest, corpus_root, split, Some(size))?;
        let images = raw
            .into_iter()
            .map(|(k, img)| {
                let v: Vec<f32> = img.data().iter().map(|&p| p * 2.0 - 1.0).collect();
                (k, v)
            })
            .collect();
        Ok(Self { size, images })
    }

    fn batch(&self, keys: &[(&str, char)]) -> Result<Tensor> {
        let s = self.size;
        let mut data = Vec::with_capacity(keys.len() * s * s);
        for &(font, letter) in keys {
            let img = self
                .images
                .get(&(font.to_string(), letter))
                .ok_or_else(|| Error::MissingArtifact(format!("image {font}/{letter}")))?;
            data.extend_from_slice(img);
        }
        Ok(Tensor::from_vec(
            data,
            (keys.len(), 1, s, s),
            &candle_core::Device::Cpu,
        )?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainLogEntry {
    pub step: usize,
    pub loss: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub steps_run: usize,
    pub best_step: usize,
    pub best_val_accuracy: Option<f64>,
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
}

fn batch_accuracy(model: &IdentModel, cache: &ImageCache, pairs: &[PairSpec]) -> Result<f64> {
    let mut correct = 0usize;
    for chunk in pairs.chunks(64) {
        let mut keys: Vec<(&str, char)> = Vec::with_capacity(chunk.len() * 2);
        for p in chunk {
            keys.push((p.left_font.as_str(), p.left_letter));
        }
        for p in chunk {
            keys.push((p.right_font.as_str(), p.right_letter));
        }
        let x = cache.batch(&keys)?;
        let (feats, _) = model.encode_batch(&x, false)?;
        let b = chunk.len();
        let left = feats.narrow(0, 0, b)?;
        let right = feats.narrow(0, b, b)?;
        let logits = model.pair_logits(&left, &right)?;
        let pred = logits.argmax(D::Minus1)?.to_vec1::<u32>()?;
        for (p, &cls) in chunk.iter().zip(pred.iter()) {
            let is_same = cls == 1;
            if is_same == (p.label == PairLabel::Same) {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

/// Train the identifier, selecting the checkpoint with the best validation
/// pair accuracy. Writes `checkpoint.ckpt` and `train_log.jsonl` into
/// `out_dir`. Aborts with `Divergence` if the loss turns non-finite.
pub fn train_identifier(
    manifest: &CorpusManifest,
    corpus_root: &Path,
    enc_cfg: EncoderConfig,
    tcfg: TrainConfig,
    out_dir: &Path,
) -> Result<TrainReport> {
    enc_cfg.validate()?;
    tcfg.validate()?;
    std::fs::create_dir_all(out_dir)?;

    let train_cache = ImageCache::load(manifest, corpus_root, Split::Train, enc_cfg.image_size)?;
    let val_cache = ImageCache::load(manifest, corpus_root, Split::Val, enc_cfg.image_size)?;
    let val_pairs = sample_pairs(
        manifest,
        Split::Val,
        tcfg.val_pairs,
        epoch_seed(tcfg.seed, u64::MAX),
    )?;

    let model = IdentModel::new_seeded(enc_cfg.clone(), tcfg.seed)?;
    let mut opt = AdamW::new(
        model.vs.all_vars(),
        ParamsAdamW {
            lr: tcfg.learning_rate,
            weight_decay: 0.0,
            ..Default::default()
        },
    )?;

    let n_train_images = train_cache.images.len();
    let steps_per_epoch = (n_train_images / (2 * tcfg.batch_size)).max(1);

    let mut best_snapshot = model.vs.named_tensors()?;
    let mut best_step = 0usize;
    let mut best_val: Option<f64> = None;

    let log_path = out_dir.join("train_log.jsonl");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);

    let mut epoch_pairs: Vec<PairSpec> = Vec::new();
    let mut steps_run = 0usize;
    let mut stop = tcfg.steps == 0;

    let mut step = 0usize;
    while !stop && step < tcfg.steps {
        let within_epoch = step % steps_per_epoch;
        if within_epoch == 0 {
            let epoch = (step / steps_per_epoch) as u64;
            epoch_pairs = sample_pairs(
                manifest,
                Split::Train,
                steps_per_epoch * tcfg.batch_size,
                epoch_seed(tcfg.seed, epoch),
            )?;
        }
        let batch = &epoch_pairs[within_epoch * tcfg.batch_size..(within_epoch + 1) * tcfg.batch_size];

        let mut keys: Vec<(&str, char)> = Vec::with_capacity(batch.len() * 2);
        for p in batch {
            keys.push((p.left_font.as_str(), p.left_letter));
        }
        for p in batch {
            keys.push((p.right_font.as_str(), p.right_letter));
        }
        let x = train_cache.batch(&keys)?;
        let (feats, _) = model.encode_batch(&x, false)?;
        let b = batch.len();
        let left = feats.narrow(0, 0, b)?;
        let right = feats.narrow(0, b, b)?;
        let logits = model.pair_logits(&left, &right)?;
        let labels: Vec<u32> = batch
            .iter()
            .map(|p| (p.label == PairLabel::Same) as u32)
            .collect();
        let labels = Tensor::from_vec(labels, (b,), &candle_core::Device::Cpu)?;
        let loss = candle_nn::loss::cross_entropy(&logits, &labels)?;
        let loss_val = loss.to_dtype(DType::F32)?.to_scalar::<f32>()?;
        if !loss_val.is_finite() {
            return Err(Error::Divergence { step });
        }
        opt.backward_step(&loss)?;
        step += 1;
        steps_run = step;

        let do_eval = step % tcfg.eval_every == 0 || step == tcfg.steps;
        let mut entry = TrainLogEntry {
            step,
            loss: loss_val,
            val_accuracy: None,
        };
        if do_eval {
            let acc = batch_accuracy(&model, &val_cache, &val_pairs)?;
            entry.val_accuracy = Some(acc);
            if best_val.map(|b| acc > b).unwrap_or(true) {
                best_val = Some(acc);
                best_step = step;
                best_snapshot = model.vs.named_tensors()?;
            }
            if let Some(target) = tcfg.target_val_accuracy {
                if acc >= target {
                    stop = true;
                }
            }
        }
        writeln!(log, "{}", serde_json::to_string(&entry)?)?;
    }
    log.flush()?;

    let checkpoint_path = out_dir.join("checkpoint.ckpt");
    model.save_checkpoint(&checkpoint_path, &tcfg, best_step, best_val, Some(&best_snapshot))?;
    Ok(TrainReport {
        steps_run,
        best_step,
        best_val_accuracy: best_val,
        checkpoint_path,
        log_path,
    })
}

/// Balanced-pair accuracy of a trained model on one split.
pub fn evaluate_identifier(
    model: &IdentModel,
    manifest: &CorpusManifest,
    corpus_root: &Path,
    split: Split,
    n_pairs: usize,
    seed: u64,
) -> Result<f64> {
    let cache = ImageCache::load(manifest, corpus_root, split, model.cfg.image_size)?;
    let pairs = sample_pairs(manifest, split, n_pairs, seed)?;
    batch_accuracy(model, &cache, &pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> EncoderConfig {
        EncoderConfig {
            image_size: 32,
            patch_size: 8,
            depth: 2,
            heads: 2,
            embed_dim: 32,
            mlp_ratio: 2.0,
            positional: true,
        }
    }

    fn ramp_image(size: usize) -> ImageBuf {
        let data: Vec<f32> = (0..size * size)
            .map(|i| (i % 97) as f32 / 96.0)
            .collect();
        ImageBuf::from_vec(size, size, data).unwrap()
    }

    #[test]
    fn token_counts_match_patch_arithmetic() {
        assert_eq!(EncoderConfig::paper().tokens(), 197);
        assert_eq!(EncoderConfig::desk().tokens(), 65);
        assert_eq!(EncoderConfig::paper().grid(), (14, 14));
    }

    #[test]
    fn encode_shapes_and_determinism() {
        let model = IdentModel::new_seeded(tiny_cfg(), 3).unwrap();
        let img = ramp_image(32);
        let (f1, trace) = model.encode(&img).unwrap();
        let (f2, _) = model.encode(&img).unwrap();
        assert_eq!(f1.dim(), 32);
        assert_eq!(f1, f2);
        assert_eq!(trace.layers.len(), 2);
        assert_eq!(trace.layers[0].shape(), &[2, 17, 17]);
        assert_eq!(trace.grid, (4, 4));
    }

    #[test]
    fn attention_rows_are_distributions() {
        let model = IdentModel::new_seeded(tiny_cfg(), 4).unwrap();
        let (_, trace) = model.encode(&ramp_image(32)).unwrap();
        for layer in &trace.layers {
            for head in layer.outer_iter() {
                for row in head.outer_iter() {
                    let sum: f32 = row.sum();
                    assert!((sum - 1.0).abs() < 1e-5, "row sum {sum}");
                    assert!(row.iter().all(|&v| v >= 0.0));
                }
            }
        }
    }

    #[test]
    fn untrained_loss_is_near_ln2() {
        let model = IdentModel::new_seeded(tiny_cfg(), 5).unwrap();
        let b = 16;
        let s = 32;
        let mut data = Vec::with_capacity(2 * b * s * s);
        for i in 0..(2 * b * s * s) {
            data.push(((i * 31 + 7) % 101) as f32 / 101.0 * 2.0 - 1.0);
        }
        let x = Tensor::from_vec(data, (2 * b, 1, s, s), &candle_core::Device::Cpu).unwrap();
        let (feats, _) = model.encode_batch(&x, false).unwrap();
        let left = feats.narrow(0, 0, b).unwrap();
        let right = feats.narrow(0, b, b).unwrap();
        let logits = model.pair_logits(&left, &right).unwrap();
        let labels: Vec<u32> = (0..b as u32).map(|i| i % 2).collect();
        let labels = Tensor::from_vec(labels, (b,), &candle_core::Device::Cpu).unwrap();
        let loss = candle_nn::loss::cross_entropy(&logits, &labels)
            .unwrap()
            .to_scalar::<f32>()
            .unwrap();
        let ln2 = std::f32::consts::LN_2;
        assert!(
            (loss - ln2).abs() / ln2 < 0.10,
            "untrained loss {loss} not within 10% of ln2"
        );
    }

    #[test]
    fn checkpoint_roundtrip_reproduces_features() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ident.ckpt");
        let model = IdentModel::new_seeded(tiny_cfg(), 6).unwrap();
        let img = ramp_image(32);
        let (before, _) = model.encode(&img).unwrap();
        model
            .save_checkpoint(&path, &TrainConfig::desk(), 0, None, None)
            .unwrap();
        let (loaded, _, meta) = IdentModel::load_checkpoint(&path).unwrap();
        assert_eq!(meta.version, crate::ckpt::FORMAT_VERSION);
        let (after, _) = loaded.encode(&img).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn shifting_by_one_patch_permutes_the_rollout_map_without_positions() {
        let cfg = EncoderConfig {
            positional: false,
            ..tiny_cfg()
        };
        let model = IdentModel::new_seeded(cfg, 8).unwrap();
        let img = ramp_image(32);
        // Roll the image left by one full patch (columns wrap around).
        let mut shifted = ImageBuf::new(32, 32, 0.0);
        for y in 0..32 {
            for x in 0..32 {
                shifted.set(x, y, img.get((x + 8) % 32, y));
            }
        }
        let (_, trace_a) = model.encode(&img).unwrap();
        let (_, trace_b) = model.encode(&shifted).unwrap();
        let map_a = crate::rollout::attention_rollout(&trace_a).unwrap();
        let map_b = crate::rollout::attention_rollout(&trace_b).unwrap();
        // Patch grid is 4x4; rolling columns by one patch permutes the map.
        for row in 0..4 {
            for col in 0..4 {
                let expected = map_a.grid[[row, (col + 1) % 4]];
                let actual = map_b.grid[[row, col]];
                assert!(
                    (expected - actual).abs() < 1e-5,
                    "row {row} col {col}: {expected} vs {actual}"
                );
            }
        }
    }

    #[test]
    fn paper_config_is_accepted_and_runs() {
        let cfg = EncoderConfig::paper();
        cfg.validate().unwrap();
        let tcfg = TrainConfig::paper();
        assert_eq!(tcfg.batch_size, 64);
        assert!((tcfg.learning_rate - 1e-5).abs() < 1e-12);
        let model = IdentModel::new_seeded(cfg, 1).unwrap();
        let (feature, trace) = model.encode(&ramp_image(224)).unwrap();
        assert_eq!(feature.dim(), 768);
        assert_eq!(trace.layers.len(), 12);
        assert_eq!(trace.layers[0].shape(), &[12, 197, 197]);
    }
}
