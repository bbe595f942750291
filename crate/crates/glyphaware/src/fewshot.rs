//! Few-shot glyph generation: a convolutional style encoder whose features
//! are averaged over k source glyphs, and a decoder conditioned on the style
//! vector concatenated with a one-hot letter label. Trained with plain L1 or
//! the awareness-weighted loss.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, IndexOp, Tensor};
use candle_nn::{AdamW, Module, Optimizer, ParamsAdamW};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{load_split_images, CorpusManifest, GlyphImage, Split, CAPITALS};
use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::loss::{weighted_l1, LossConfig, Reduction, WeightCache};
use crate::nn::{conv2d, conv_transpose2d, linear, VarStore};
use crate::pairs::epoch_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    L1,
    Aware,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GeneratorConfig {
    pub image_size: usize,
    pub style_dim: usize,
    /// Encoder channel widths of the four stride-2 conv blocks; the decoder
    /// mirrors them.
    pub channels: [usize; 4],
    pub num_classes: usize,
    pub loss_mode: LossMode,
    pub alpha: f64,
    pub reduction: Reduction,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub eval_every: usize,
    pub val_tuples: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub eval_k: usize,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn desk(loss_mode: LossMode) -> Self {
        Self {
            image_size: 64,
            style_dim: 256,
            channels: [32, 64, 128, 256],
            num_classes: 26,
            loss_mode,
            alpha: 0.1,
            reduction: Reduction::Mean,
            learning_rate: 1e-4,
            batch_size: 32,
            steps: 400,
            eval_every: 50,
            val_tuples: 48,
            k_min: 1,
            k_max: 8,
            eval_k: 5,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes != 26 {
            return Err(Error::InvalidConfig("num_classes must be 26".into()));
        }
        if self.image_size % 16 != 0 {
            return Err(Error::InvalidConfig(
                "image_size must be divisible by 16 (four stride-2 blocks)".into(),
            ));
        }
        if self.k_min < 1 || self.k_max < self.k_min {
            return Err(Error::InvalidConfig("need 1 <= k_min <= k_max".into()));
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidConfig("alpha must be nonnegative".into()));
        }
        Ok(())
    }

    fn bottleneck(&self) -> usize {
        self.image_size / 16
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub font_id: String,
    pub letter: char,
    pub pixels: ImageBuf,
    pub loss_mode: LossMode,
}

fn letter_index(letter: char) -> Result<usize> {
    CAPITALS
        .iter()
        .position(|&c| c == letter)
        .ok_or(Error::UnknownLetter(letter))
}

pub struct Generator {
    pub cfg: GeneratorConfig,
    enc: Vec<candle_nn::Conv2d>,
    enc_fc: candle_nn::Linear,
    dec_fc1: candle_nn::Linear,
    dec_fc2: candle_nn::Linear,
    dec: Vec<candle_nn::ConvTranspose2d>,
    pub vs: VarStore,
}

impl Generator {
    pub fn new(cfg: GeneratorConfig, mut vs: VarStore) -> Result<Self> {
        cfg.validate()?;
        let [c1, c2, c3, c4] = cfg.channels;
        let enc = vec![
            conv2d(&mut vs, "enc.conv0", 1, c1, 4, 2, 1)?,
            conv2d(&mut vs, "enc.conv1", c1, c2, 4, 2, 1)?,
            conv2d(&mut vs, "enc.conv2", c2, c3, 4, 2, 1)?,
            conv2d(&mut vs, "enc.conv3", c3, c4, 4, 2, 1)?,
        ];
        let side = cfg.bottleneck();
        let enc_fc = linear(&mut vs, "enc.fc", c4 * side * side, cfg.style_dim)?;
        let dec_fc1 = linear(
            &mut vs,
            "dec.fc1",
            cfg.style_dim + cfg.num_classes,
            cfg.style_dim * 2,
        )?;
        let dec_fc2 = linear(&mut vs, "dec.fc2", cfg.style_dim * 2, c4 * side * side)?;
        let dec = vec![
            conv_transpose2d(&mut vs, "dec.deconv0", c4, c3, 4, 2, 1)?,
            conv_transpose2d(&mut vs, "dec.deconv1", c3, c2, 4, 2, 1)?,
            conv_transpose2d(&mut vs, "dec.deconv2", c2, c1, 4, 2, 1)?,
            conv_transpose2d(&mut vs, "dec.deconv3", c1, 1, 4, 2, 1)?,
        ];
        Ok(Self {
            cfg,
            enc,
            enc_fc,
            dec_fc1,
            dec_fc2,
            dec,
            vs,
        })
    }

    pub fn new_seeded(cfg: GeneratorConfig, seed: u64) -> Result<Self> {
        Self::new(cfg, VarStore::seeded(seed))
    }

    /// Per-image style features (B, style_dim) from images (B, 1, S, S).
    pub fn encode_batch(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for conv in &self.enc {
            h = conv.forward(&h)?.relu()?;
        }
        let b = h.dim(0)?;
        let h = h.reshape((b, ()))?;
        Ok(self.enc_fc.forward(&h)?.relu()?)
    }

    /// Decode style vectors (B, style_dim) + one-hot labels (B, 26) into
    /// images (B, 1, S, S) bounded to [0, 1].
    pub fn decode_batch(&self, style: &Tensor, onehot: &Tensor) -> Result<Tensor> {
        let joint = Tensor::cat(&[style, onehot], 1)?;
        let h = self.dec_fc1.forward(&joint)?.relu()?;
        let h = self.dec_fc2.forward(&h)?.relu()?;
        let b = h.dim(0)?;
        let side = self.cfg.bottleneck();
        let mut h = h.reshape((b, self.cfg.channels[3], side, side))?;
        for (i, deconv) in self.dec.iter().enumerate() {
            h = deconv.forward(&h)?;
            if i + 1 < self.dec.len() {
                h = h.relu()?;
            }
        }
        Ok(candle_nn::ops::sigmoid(&h)?)
    }

    fn images_tensor(&self, images: &[&ImageBuf]) -> Result<Tensor> {
        let s = self.cfg.image_size;
        let mut data = Vec::with_capacity(images.len() * s * s);
        for img in images {
            if img.width() != s || img.height() != s {
                let resized = img.resize_bilinear(s, s);
                data.extend_from_slice(resized.data());
            } else {
                data.extend_from_slice(img.data());
            }
        }
        Ok(Tensor::from_vec(
            data,
            (images.len(), 1, s, s),
            &Device::Cpu,
        )?)
    }

    /// Average the encoder features of the source glyphs (all one font).
    pub fn encode_style(&self, sources: &[GlyphImage]) -> Result<Vec<f32>> {
        if sources.is_empty() {
            return Err(Error::EmptySourceSet);
        }
        let font = &sources[0].font_id;
        if sources.iter().any(|s| &s.font_id != font) {
            return Err(Error::InvalidConfig(
                "style sources must come from a single font".into(),
            ));
        }
        let imgs: Vec<&ImageBuf> = sources.iter().map(|s| &s.image).collect();
        let x = self.images_tensor(&imgs)?;
        let feats = self.encode_batch(&x)?;
        let mean = feats.mean(0)?;
        Ok(mean.to_vec1::<f32>()?)
    }

    /// Generate one letter from a style vector. Deterministic.
    pub fn generate(&self, style: &[f32], letter: char) -> Result<GeneratedSample> {
        let idx = letter_index(letter)?;
        if style.len() != self.cfg.style_dim {
            return Err(Error::ShapeMismatch {
                expected: format!("style_dim {}", self.cfg.style_dim),
                actual: format!("{}", style.len()),
            });
        }
        let style_t = Tensor::from_vec(style.to_vec(), (1, self.cfg.style_dim), &Device::Cpu)?;
        let mut onehot = vec![0.0f32; self.cfg.num_classes];
        onehot[idx] = 1.0;
        let onehot = Tensor::from_vec(onehot, (1, self.cfg.num_classes), &Device::Cpu)?;
        let out = self.decode_batch(&style_t, &onehot)?;
        let s = self.cfg.image_size;
        let data = out.flatten_all()?.to_vec1::<f32>()?;
        let mut pixels = ImageBuf::from_vec(s, s, data)?;
        pixels.clamp01();
        Ok(GeneratedSample {
            font_id: String::new(),
            letter,
            pixels,
            loss_mode: self.cfg.loss_mode,
        })
    }

    pub fn save_checkpoint(
        &self,
        path: &Path,
        best_step: usize,
        best_val: Option<f64>,
        snapshot: Option<&[(String, Vec<usize>, Vec<f32>)]>,
    ) -> Result<()> {
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
            "generator",
            serde_json::to_value(&self.cfg)?,
            self.cfg.seed,
            best_step,
            best_val,
            tensors,
        )
    }

    pub fn load_checkpoint(path: &Path) -> Result<(Self, crate::ckpt::CheckpointMeta)> {
        let (meta, tensors) = crate::ckpt::load(path)?;
        if meta.kind != "generator" {
            return Err(Error::CheckpointFormat(format!(
                "expected a generator checkpoint, found '{}'",
                meta.kind
            )));
        }
        let cfg: GeneratorConfig = serde_json::from_value(meta.config.clone())?;
        let vs = VarStore::from_tensors(tensors, meta.seed);
        let model = Self::new(cfg, vs)?;
        Ok((model, meta))
    }
}

/// One training sample: k source letters and a target letter of one font,
/// the target never among the sources.
#[derive(Debug, Clone)]
pub struct StepTuple {
    pub font_id: String,
    pub sources: Vec<char>,
    pub target: char,
}

pub fn sample_step_tuples(
    rng: &mut ChaCha12Rng,
    fonts: &[(String, Vec<char>)],
    batch: usize,
    k: usize,
) -> Vec<StepTuple> {
    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let (font_id, letters) = &fonts[rng.random_range(0..fonts.len())];
        let mut indices: Vec<usize> = (0..letters.len()).collect();
        // partial Fisher-Yates: first k+1 positions
        let take = (k + 1).min(indices.len());
        for i in 0..take {
            let j = rng.random_range(i..indices.len());
            indices.swap(i, j);
        }
        let sources: Vec<char> = indices[..take - 1].iter().map(|&i| letters[i]).collect();
        let target = letters[indices[take - 1]];
        debug_assert!(!sources.contains(&target));
        out.push(StepTuple {
            font_id: font_id.clone(),
            sources,
            target,
        });
    }
    out
}

#[derive(Debug, Clone, Serialize)]
struct GenLogEntry {
    step: usize,
    loss: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    val_metric: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GenTrainReport {
    pub steps_run: usize,
    pub best_step: usize,
    pub best_val_metric: Option<f64>,
    pub checkpoint_path: PathBuf,
    pub log_path: PathBuf,
}

struct SplitData {
    images: BTreeMap<(String, char), ImageBuf>,
    fonts: Vec<(String, Vec<char>)>,
}

fn split_data(
    manifest: &CorpusManifest,
    corpus_root: &Path,
    split: Split,
    size: usize,
) -> Result<SplitData> {
    let images = load_split_images(manifest, corpus_root, split, Some(size))?;
    let by_font = manifest.letters_by_font(split);
    let fonts = by_font.into_iter().collect();
    Ok(SplitData { images, fonts })
}

fn batch_forward(
    model: &Generator,
    data: &SplitData,
    tuples: &[StepTuple],
    k: usize,
) -> Result<(Tensor, Tensor)> {
    let s = model.cfg.image_size;
    let b = tuples.len();
    let mut src_data = Vec::with_capacity(b * k * s * s);
    let mut gt_data = Vec::with_capacity(b * s * s);
    let mut onehot = vec![0.0f32; b * model.cfg.num_classes];
    for (i, tuple) in tuples.iter().enumerate() {
        for &letter in &tuple.sources {
            let img = data
                .images
                .get(&(tuple.font_id.clone(), letter))
                .ok_or_else(|| Error::MissingArtifact(format!("{}/{letter}", tuple.font_id)))?;
            src_data.extend_from_slice(img.data());
        }
        let gt = data
            .images
            .get(&(tuple.font_id.clone(), tuple.target))
            .ok_or_else(|| Error::MissingArtifact(format!("{}/{}", tuple.font_id, tuple.target)))?;
        gt_data.extend_from_slice(gt.data());
        onehot[i * model.cfg.num_classes + letter_index(tuple.target)?] = 1.0;
    }
    let sources = Tensor::from_vec(src_data, (b * k, 1, s, s), &Device::Cpu)?;
    let gt = Tensor::from_vec(gt_data, (b, 1, s, s), &Device::Cpu)?;
    let onehot = Tensor::from_vec(onehot, (b, model.cfg.num_classes), &Device::Cpu)?;

    let feats = model.encode_batch(&sources)?;
    let style = feats
        .reshape((b, k, model.cfg.style_dim))?
        .mean(1)?;
    let gen = model.decode_batch(&style, &onehot)?;
    Ok((gt, gen))
}

fn weights_tensor(
    cache: &WeightCache,
    tuples: &[StepTuple],
    size: usize,
) -> Result<Tensor> {
    let mut data = Vec::with_capacity(tuples.len() * size * size);
    for tuple in tuples {
        let w = cache.get(&tuple.font_id, tuple.target)?;
        if w.width() != size || w.height() != size {
            return Err(Error::ShapeMismatch {
                expected: format!("{size}x{size} weight"),
                actual: format!("{}x{}", w.width(), w.height()),
            });
        }
        data.extend_from_slice(w.data());
    }
    Ok(Tensor::from_vec(
        data,
        (tuples.len(), 1, size, size),
        &Device::Cpu,
    )?)
}

/// Train the generator. In `aware` mode a weight cache is required; a missing
/// weight is a hard `CacheMiss`. Checkpoint selection uses the validation
/// weighted-L1 with alpha = 0 when a cache is available, else plain L1.
pub fn train_generator(
    manifest: &CorpusManifest,
    corpus_root: &Path,
    gcfg: GeneratorConfig,
    cache: Option<&WeightCache>,
    out_dir: &Path,
) -> Result<GenTrainReport> {
    gcfg.validate()?;
    if gcfg.loss_mode == LossMode::Aware && cache.is_none() {
        return Err(Error::InvalidConfig(
            "loss_mode aware requires a weight cache".into(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let size = gcfg.image_size;
    let train = split_data(manifest, corpus_root, Split::Train, size)?;
    let val = split_data(manifest, corpus_root, Split::Val, size)?;

    let model = Generator::new_seeded(gcfg.clone(), gcfg.seed)?;
    let mut opt = AdamW::new(
        model.vs.all_vars(),
        ParamsAdamW {
            lr: gcfg.learning_rate,
            weight_decay: 0.0,
            ..Default::default()
        },
    )?;

    // Fixed validation tuples with k = eval_k.
    let mut val_rng = ChaCha12Rng::seed_from_u64(epoch_seed(gcfg.seed, u64::MAX));
    let val_tuples = sample_step_tuples(&mut val_rng, &val.fonts, gcfg.val_tuples, gcfg.eval_k);
    let val_metric = |model: &Generator| -> Result<f64> {
        let (gt, gen) = batch_forward(model, &val, &val_tuples, gcfg.eval_k)?;
        let metric = match cache {
            Some(cache) => {
                let w = weights_tensor(cache, &val_tuples, size)?;
                weighted_l1(
                    &gt,
                    &gen,
                    &w,
                    &LossConfig {
                        alpha: 0.0,
                        reduction: Reduction::Mean,
                    },
                )?
            }
            None => (&gt - &gen)?.abs()?.mean_all()?,
        };
        Ok(metric.to_dtype(DType::F64)?.to_scalar::<f64>()?)
    };

    let mut best_snapshot = model.vs.named_tensors()?;
    let mut best_step = 0usize;
    let mut best_val: Option<f64> = None;

    let log_path = out_dir.join("train_log.jsonl");
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path)?);

    let steps_per_epoch = (train.images.len() / gcfg.batch_size).max(1);
    let mut rng = ChaCha12Rng::seed_from_u64(epoch_seed(gcfg.seed, 0));
    let mut steps_run = 0usize;
    for step in 0..gcfg.steps {
        if step > 0 && step % steps_per_epoch == 0 {
            let epoch = (step / steps_per_epoch) as u64;
            rng = ChaCha12Rng::seed_from_u64(epoch_seed(gcfg.seed, epoch));
        }
        let k = rng.random_range(gcfg.k_min..=gcfg.k_max);
        let tuples = sample_step_tuples(&mut rng, &train.fonts, gcfg.batch_size, k);
        let (gt, gen) = batch_forward(&model, &train, &tuples, k)?;
        let loss = match gcfg.loss_mode {
            LossMode::L1 => match gcfg.reduction {
                Reduction::Mean => (&gt - &gen)?.abs()?.mean_all()?,
                Reduction::Sum => (&gt - &gen)?.abs()?.sum_all()?,
            },
            LossMode::Aware => {
                let cache = cache.expect("validated above");
                let w = weights_tensor(cache, &tuples, size)?;
                weighted_l1(
                    &gt,
                    &gen,
                    &w,
                    &LossConfig {
                        alpha: gcfg.alpha,
                        reduction: gcfg.reduction,
                    },
                )?
            }
        };
        let loss_val = loss.to_dtype(DType::F32)?.to_scalar::<f32>()?;
        if !loss_val.is_finite() {
            return Err(Error::Divergence { step });
        }
        opt.backward_step(&loss)?;
        steps_run = step + 1;

        let mut entry = GenLogEntry {
            step: step + 1,
            loss: loss_val,
            val_metric: None,
        };
        if (step + 1) % gcfg.eval_every == 0 || step + 1 == gcfg.steps {
            let metric = val_metric(&model)?;
            entry.val_metric = Some(metric);
            if best_val.map(|b| metric < b).unwrap_or(true) {
                best_val = Some(metric);
                best_step = step + 1;
                best_snapshot = model.vs.named_tensors()?;
            }
        }
        writeln!(log, "{}", serde_json::to_string(&entry)?)?;
    }
    log.flush()?;

    let checkpoint_path = out_dir.join("checkpoint.ckpt");
    model.save_checkpoint(&checkpoint_path, best_step, best_val, Some(&best_snapshot))?;
    Ok(GenTrainReport {
        steps_run,
        best_step,
        best_val_metric: best_val,
        checkpoint_path,
        log_path,
    })
}

/// Generate every letter of every font in a split from k seeded source
/// glyphs. Writes `gen/<font>/<letter>.png`, the matching resized ground
/// truth under `gt/<font>/<letter>.png`, and a per-font sheet
/// `sheets/<font>.png`.
pub fn synthesize_split(
    model: &Generator,
    manifest: &CorpusManifest,
    corpus_root: &Path,
    split: Split,
    k: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<Vec<GeneratedSample>> {
    let size = model.cfg.image_size;
    let data = split_data(manifest, corpus_root, split, size)?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut samples = Vec::new();
    for (font_id, letters) in &data.fonts {
        let mut indices: Vec<usize> = (0..letters.len()).collect();
        let take = k.min(indices.len());
        for i in 0..take {
            let j = rng.random_range(i..indices.len());
            indices.swap(i, j);
        }
        let sources: Vec<GlyphImage> = indices[..take]
            .iter()
            .map(|&i| GlyphImage {
                font_id: font_id.clone(),
                letter: letters[i],
                image: data.images[&(font_id.clone(), letters[i])].clone(),
            })
            .collect();
        let style = model.encode_style(&sources)?;
        let mut sheet = ImageBuf::new(size * 13, size * 2, 1.0);
        for (pos, &letter) in letters.iter().enumerate() {
            let mut sample = model.generate(&style, letter)?;
            sample.font_id = font_id.clone();
            sample
                .pixels
                .save_png(&out_dir.join("gen").join(font_id).join(format!("{letter}.png")))?;
            let gt = &data.images[&(font_id.clone(), letter)];
            gt.save_png(&out_dir.join("gt").join(font_id).join(format!("{letter}.png")))?;
            let (row, col) = (pos / 13, pos % 13);
            for y in 0..size {
                for x in 0..size {
                    sheet.set(col * size + x, row * size + y, sample.pixels.get(x, y));
                }
            }
            samples.push(sample);
        }
        sheet.save_png(&out_dir.join("sheets").join(format!("{font_id}.png")))?;
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> GeneratorConfig {
        GeneratorConfig {
            image_size: 32,
            style_dim: 16,
            channels: [4, 8, 8, 16],
            batch_size: 2,
            steps: 2,
            ..GeneratorConfig::desk(LossMode::L1)
        }
    }

    fn glyph(font: &str, letter: char, seed: u32) -> GlyphImage {
        let data: Vec<f32> = (0..32 * 32)
            .map(|i| ((i as u32).wrapping_mul(seed + 13) % 251) as f32 / 250.0)
            .collect();
        GlyphImage {
            font_id: font.into(),
            letter,
            image: ImageBuf::from_vec(32, 32, data).unwrap(),
        }
    }

    #[test]
    fn style_of_one_source_is_its_feature() {
        let model = Generator::new_seeded(tiny_cfg(), 1).unwrap();
        let g = glyph("f", 'A', 5);
        let style = model.encode_style(std::slice::from_ref(&g)).unwrap();
        let x = model.images_tensor(&[&g.image]).unwrap();
        let feat = model.encode_batch(&x).unwrap().i(0).unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(style, feat);
    }

    #[test]
    fn duplicated_sources_match_single_source() {
        let model = Generator::new_seeded(tiny_cfg(), 2).unwrap();
        let g = glyph("f", 'B', 9);
        let one = model.encode_style(std::slice::from_ref(&g)).unwrap();
        let two = model.encode_style(&[g.clone(), g.clone()]).unwrap();
        assert_eq!(one, two);
    }

    #[test]
    fn empty_sources_are_rejected() {
        let model = Generator::new_seeded(tiny_cfg(), 3).unwrap();
        match model.encode_style(&[]) {
            Err(Error::EmptySourceSet) => {}
            other => panic!("expected EmptySourceSet, got {other:?}"),
        }
    }

    #[test]
    fn mixed_fonts_are_rejected() {
        let model = Generator::new_seeded(tiny_cfg(), 3).unwrap();
        match model.encode_style(&[glyph("a", 'A', 1), glyph("b", 'B', 2)]) {
            Err(Error::InvalidConfig(_)) => {}
            other => panic!("expected InvalidConfig, got {other:?}"),
        }
    }

    #[test]
    fn generate_contract() {
        let model = Generator::new_seeded(tiny_cfg(), 4).unwrap();
        let style = vec![0.1f32; 16];
        let a = model.generate(&style, 'E').unwrap();
        assert_eq!(a.pixels.width(), 32);
        assert_eq!(a.pixels.height(), 32);
        assert!(a.pixels.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let b = model.generate(&style, 'E').unwrap();
        assert_eq!(a.pixels, b.pixels);
        match model.generate(&style, 'e') {
            Err(Error::UnknownLetter('e')) => {}
            other => panic!("expected UnknownLetter, got {other:?}"),
        }
    }

    #[test]
    fn step_tuples_never_leak_target_into_sources() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let fonts = vec![
            ("f0".to_string(), CAPITALS.to_vec()),
            ("f1".to_string(), CAPITALS.to_vec()),
        ];
        for k in 1..=8 {
            for tuple in sample_step_tuples(&mut rng, &fonts, 16, k) {
                assert_eq!(tuple.sources.len(), k);
                assert!(!tuple.sources.contains(&tuple.target));
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip_preserves_generation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gen.ckpt");
        let model = Generator::new_seeded(tiny_cfg(), 5).unwrap();
        let style = vec![0.2f32; 16];
        let before = model.generate(&style, 'Q').unwrap();
        model.save_checkpoint(&path, 0, None, None).unwrap();
        let (loaded, meta) = Generator::load_checkpoint(&path).unwrap();
        assert_eq!(meta.kind, "generator");
        let after = loaded.generate(&style, 'Q').unwrap();
        assert_eq!(before.pixels, after.pixels);
    }
}
