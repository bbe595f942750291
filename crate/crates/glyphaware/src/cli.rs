//! Command-line pipeline: every subcommand writes its artifacts plus a
//! `config.json` echo of the resolved configuration into the run directory,
//! so any run can be reproduced with `--config <run>/config.json`.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 training divergence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, CorpusManifest, Split};
use crate::error::{Error, Result};
use crate::fewshot::{self, Generator, GeneratorConfig, LossMode};
use crate::ident::{self, EncoderConfig, IdentModel, TrainConfig};
use crate::loss::WeightCache;
use crate::metrics::{self, CannyConfig};
use crate::pairs;
use crate::rollout;

pub const RUN_ROOT_ENV: &str = "GLYPHAWARE_RUN_ROOT";

#[derive(Parser)]
#[command(name = "glyphaware", version, about = "Font style awareness pipeline")]
pub struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Corpus construction from font files.
    Corpus {
        #[command(subcommand)]
        cmd: CorpusCmd,
    },
    /// Pair sampling utilities.
    Pairs {
        #[command(subcommand)]
        cmd: PairsCmd,
    },
    /// Font identification model.
    Ident {
        #[command(subcommand)]
        cmd: IdentCmd,
    },
    /// Style-importance maps from a trained identifier.
    Awareness {
        #[command(subcommand)]
        cmd: AwarenessCmd,
    },
    /// Few-shot glyph generation.
    Gen {
        #[command(subcommand)]
        cmd: GenCmd,
    },
    /// Evaluation metrics and style-feature PCA.
    Metrics {
        #[command(subcommand)]
        cmd: MetricsCmd,
    },
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Render fonts and write a family-disjoint manifest.
    Build(CorpusBuildArgs),
}

#[derive(Subcommand)]
enum PairsCmd {
    /// Dump sampled pairs to a JSON-lines file for audit.
    Dump(PairsDumpArgs),
}

#[derive(Subcommand)]
enum IdentCmd {
    Train(IdentTrainArgs),
    Eval(IdentEvalArgs),
}

#[derive(Subcommand)]
enum AwarenessCmd {
    /// Write one awareness map file per image of a split.
    Extract(AwarenessArgs),
    /// Write maps plus heatmap overlays.
    Overlay(AwarenessArgs),
    /// Precompute pixel-resolution loss weights for every manifest image.
    Weights(WeightsArgs),
}

#[derive(Subcommand)]
enum GenCmd {
    Train(GenTrainArgs),
    Sample(GenSampleArgs),
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Compare generated glyphs against ground truth.
    Report(MetricsReportArgs),
    /// 2-D PCA of style features with a scatter plot.
    Pca(PcaArgs),
}

fn resolve_out(out: &Path) -> PathBuf {
    if out.is_absolute() {
        return out.to_path_buf();
    }
    match std::env::var(RUN_ROOT_ENV) {
        Ok(root) if !root.is_empty() => PathBuf::from(root).join(out),
        _ => out.to_path_buf(),
    }
}

fn echo_config<T: Serialize>(out_dir: &Path, cfg: &T) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(cfg)?,
    )?;
    Ok(())
}

fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::InvalidConfig(format!(
            "ratios must look like 8:1:1, got '{s}'"
        )));
    }
    let mut vals = [0.0f64; 3];
    for (v, p) in vals.iter_mut().zip(&parts) {
        *v = p
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("bad ratio component '{p}'")))?;
    }
    Ok((vals[0], vals[1], vals[2]))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

// ---------------------------------------------------------------------------
// corpus build

#[derive(Args)]
struct CorpusBuildArgs {
    /// Load a previously echoed config instead of flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    fonts: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 224)]
    size: usize,
    #[arg(long, default_value_t = 5)]
    margin: usize,
    #[arg(long, default_value = "8:1:1")]
    ratios: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Letters to render (default: the 26 capitals).
    #[arg(long)]
    letters: Option<String>,
    /// Optional JSON metadata: {"<file>": {"family": ..., "category": ...}}.
    #[arg(long)]
    metadata: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, Clone)]
pub struct CorpusBuildCfg {
    pub fonts: PathBuf,
    pub size: usize,
    pub margin: usize,
    pub ratios: String,
    pub seed: u64,
    pub letters: String,
    pub metadata: Option<PathBuf>,
}

pub fn run_corpus_build(cfg: &CorpusBuildCfg, out_dir: &Path) -> Result<()> {
    echo_config(out_dir, cfg)?;
    let metadata = match &cfg.metadata {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            Some(serde_json::from_str::<BTreeMap<String, corpus::FontMetadataEntry>>(&text)?)
        }
        None => None,
    };
    let (fonts, skipped) = corpus::scan_fonts(&cfg.fonts, metadata.as_ref())?;
    for (path, reason) in &skipped {
        eprintln!("skipping unparseable font {}: {reason}", path.display());
    }
    if fonts.is_empty() {
        return Err(Error::TooFewFonts {
            split: "train".into(),
            available: 0,
        });
    }
    let letters: Vec<char> = cfg.letters.chars().collect();
    let ratios = parse_ratios(&cfg.ratios)?;
    let manifest = corpus::build_manifest(&fonts, &letters, ratios, cfg.seed, cfg.size, cfg.margin)?;
    corpus::render_corpus(&manifest, &fonts, out_dir)?;
    let count = |s: Split| manifest.fonts_for(s).len();
    println!(
        "corpus: {} fonts ({} train / {} val / {} test), {} images, {} unparseable files skipped",
        manifest.fonts.len(),
        count(Split::Train),
        count(Split::Val),
        count(Split::Test),
        manifest.records.len(),
        skipped.len()
    );
    Ok(())
}

impl CorpusBuildArgs {
    fn run(self) -> Result<()> {
        let out = resolve_out(&self.out.clone().ok_or_else(usage_out)?);
        let cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => CorpusBuildCfg {
                fonts: self.fonts.ok_or_else(|| {
                    Error::InvalidConfig("--fonts is required (or use --config)".into())
                })?,
                size: self.size,
                margin: self.margin,
                ratios: self.ratios,
                seed: self.seed,
                letters: self
                    .letters
                    .unwrap_or_else(|| corpus::CAPITALS.iter().collect()),
                metadata: self.metadata,
            },
        };
        run_corpus_build(&cfg, &out)
    }
}

fn usage_out() -> Error {
    Error::InvalidConfig("--out is required".into())
}

// ---------------------------------------------------------------------------
// pairs dump

#[derive(Args)]
struct PairsDumpArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory (containing manifest.json).
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    split: String,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize, Deserialize, Clone)]
pub struct PairsDumpCfg {
    pub corpus: PathBuf,
    pub split: String,
    pub count: usize,
    pub seed: u64,
}

pub fn run_pairs_dump(cfg: &PairsDumpCfg, out_dir: &Path) -> Result<()> {
    echo_config(out_dir, cfg)?;
    let manifest = CorpusManifest::load(&cfg.corpus.join("manifest.json"))?;
    let split = Split::parse(&cfg.split)?;
    let specs = pairs::sample_pairs(&manifest, split, cfg.count, cfg.seed)?;
    pairs::dump_pairs_jsonl(&specs, &out_dir.join("pairs.jsonl"))?;
    println!("wrote {} pairs", specs.len());
    Ok(())
}

impl PairsDumpArgs {
    fn run(self) -> Result<()> {
        let out = resolve_out(&self.out.clone().ok_or_else(usage_out)?);
        let cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => PairsDumpCfg {
                corpus: self.corpus.ok_or_else(|| {
                    Error::InvalidConfig("--corpus is required (or use --config)".into())
                })?,
                split: self.split,
                count: self.count,
                seed: self.seed,
            },
        };
        run_pairs_dump(&cfg, &out)
    }
}

// ---------------------------------------------------------------------------
// ident train / eval

#[derive(Args)]
struct IdentTrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hyperparameter preset.
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    val_pairs: Option<usize>,
    /// Stop once validation accuracy reaches this value.
    #[arg(long)]
    target_val_acc: Option<f64>,
}

#[derive(Serialize, Deserialize, Clone)]
pub struct IdentTrainCfg {
    pub corpus: PathBuf,
    pub preset: String,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
}

pub fn ident_preset(name: &str) -> Result<(EncoderConfig, TrainConfig)> {
    match name {
        "desk" => Ok((EncoderConfig::desk(), TrainConfig::desk())),
        "paper" => Ok((EncoderConfig::paper(), TrainConfig::paper())),
        other => Err(Error::InvalidConfig(format!("unknown preset '{other}'"))),
    }
}

pub fn run_ident_train(cfg: &IdentTrainCfg, out_dir: &Path) -> Result<()> {
    echo_config(out_dir, cfg)?;
    let manifest = CorpusManifest::load(&cfg.corpus.join("manifest.json"))?;
    let report = ident::train_identifier(
        &manifest,
        &cfg.corpus,
        cfg.encoder.clone(),
        cfg.train.clone(),
        out_dir,
    )?;
    println!(
        "trained {} steps; best val accuracy {:?} at step {}",
        report.steps_run, report.best_val_accuracy, report.best_step
    );
    Ok(())
}

impl IdentTrainArgs {
    fn run(self) -> Result<()> {
        let out = resolve_out(&self.out.clone().ok_or_else(usage_out)?);
        let cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => {
                let (encoder, mut train) = ident_preset(&self.preset)?;
                if let Some(v) = self.seed {
                    train.seed = v;
                }
                if let Some(v) = self.steps {
                    train.steps = v;
                }
                if let Some(v) = self.batch {
                    train.batch_size = v;
                }
                if let Some(v) = self.lr {
                    train.learning_rate = v;
                }
                if let Some(v) = self.eval_every {
                    train.eval_every = v;
                }
                if let Some(v) = self.val_pairs {
                    train.val_pairs = v;
                }
                if self.target_val_acc.is_some() {
                    train.target_val_accuracy = self.target_val_acc;
                }
                IdentTrainCfg {
                    corpus: self.corpus.ok_or_else(|| {
                        Error::InvalidConfig("--corpus is required (or use --config)".into())
                    })?,
                    preset: self.preset,
                    encoder,
                    train,
                }
            }
        };
        run_ident_train(&cfg, &out)
    }
}

#[derive(Args)]
struct IdentEvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 200)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize, Deserialize, Clone)]
pub struct IdentEvalCfg {
    pub ckpt: PathBuf,
    pub corpus: PathBuf,
    pub split: String,
    pub pairs: usize,
    pub seed: u64,
}

pub fn run_ident_eval(cfg: &IdentEvalCfg, out_dir: &Path) -> Result<()> {
    echo_config(out_dir, cfg)?;
    let manifest = CorpusManifest::load(&cfg.corpus.join("manifest.json"))?;
    let (model, _, _) = IdentModel::load_checkpoint(&cfg.ckpt)?;
    let split = Split::parse(&cfg.split)?;
    let accuracy =
        ident::evaluate_identifier(&model, &manifest, &cfg.corpus, split, cfg.pairs, cfg.seed)?;
    let result = serde_json::json!({
        "split": cfg.split,
        "pairs": cfg.pairs,
        "seed": cfg.seed,
        "accuracy": accuracy,
    });
    std::fs::write(
        out_dir.join("eval.json"),
        serde_json::to_string_pretty(&result)?,
    )?;
    println!("{} pair accuracy: {accuracy:.4}", cfg.split);
    Ok(())
}

impl IdentEvalArgs {
    fn run(self) -> Result<()> {
        let out = resolve_out(&self.out.clone().ok_or_else(usage_out)?);
        let cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => IdentEvalCfg {
                ckpt: self.ckpt.ok_or_else(|| {
                    Error::InvalidConfig("--ckpt is required (or use --config)".into())
                })?,
                corpus: self.corpus.ok_or_else(|| {
                    Error::InvalidConfig("--corpus is required (or use --config)".into())
                })?,
                split: self.split,
                pairs: self.pairs,
                seed: self.seed,
            },
        };
        run_ident_eval(&cfg, &out)
    }
}

// ---------------------------------------------------------------------------
// awareness extract / overlay / weights

#[derive(Args)]
struct AwarenessArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Serialize, Deserialize, Clone)]
pub struct AwarenessCfg {
    pub ckpt: PathBuf,
    pub corpus: PathBuf,
    pub split: String,
    pub overlays: bool,
}

pub fn run_awareness(cfg: &AwarenessCfg, out_dir: &Path) -> Result<()> {
    echo_config(out_dir, cfg)?;
    let manifest = CorpusManifest::load(&cfg.corpus.join("manifest.json"))?;
    let (model, _, _) = IdentModel::load_checkpoint(&cfg.ckpt)?;
    let split = Split::parse(&cfg.split)?;
    let images = corpus::load_split_images(&manifest, &cfg.corpus, split, None)?;
    let mut written = 0usize;
    for ((font_id, letter), img) in &images {
        let (_, trace) = model.encode(img)?;
        let map = rollout::normalize_map(&rollout::attention_rollout(&trace)?)
            .with_source(&format!("{font_id}/{letter}"));
        let map_path = out_dir.join("maps").join(font_id).join(format!("{letter}.map"));
        rollout::write_map(&map_path, &map)?;
        if cfg.overlays {
            let overlay = rollout::render_overlay(img, &map)?;
            let png_path = out_dir
                .join("maps")
                .join(font_id)
                .join(format!("{letter}.overlay.png"));
            overlay
                .save(&png_path)
                .map_err(image::ImageError::from)?;
        }
        written += 1;
    }
    println!("wrote {written} awareness maps under {}", out_dir.display());
    Ok(())
}

impl AwarenessArgs {
    fn run(self, overlays: bool) -> Result<()> {
        let out = resolve_out(&self.out.clone().ok_or_else(usage_out)?);
        let cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => AwarenessCfg {
                ckpt: self.ckpt.ok_or_else(|| {
                    Error::InvalidConfig("--ckpt is required (or use --config)".into())
                })?,
                corpus: self.corpus.ok_or_else(|| {
                    Error::InvalidConfig("--corpus is required (or use --config)".into())
                })?,
                split: self.split,
                overlays,
            },
        };
        run_awareness(&cfg, &out)
    }
}

#[derive(Args)]
struct WeightsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pixel resolution of the cached weight images.
    #[arg(long, default_value_t = 64)]
    size: usize,
}

#[derive(Serialize, Deserialize, Clone)]
pub struct WeightsCfg {
    pub ckpt: PathBuf,
    pub corpus: PathBuf,
    pub size: usize,
}

pub fn run_weights(cfg: &WeightsCfg, out_dir: &Path) -> Result<()> {
    echo_config(out_dir, cfg)?;
    let manifest = CorpusManifest::load(&cfg.corpus.join("manifest.json"))?;
    let (model, _, _) = IdentModel::load_checkpoint(&cfg.ckpt)?;
    let cache = WeightCache::build(
        &manifest,
        &cfg.corpus,
        &model,
        cfg.size,
        &out_dir.join("weights"),
    )?;
    println!("cached {} weight images", cache.len());
    Ok(())
}

impl WeightsArgs {
    fn run(self) -> Result<()> {
        let out = resolve_out(&self.out.clone().ok_or_else(usage_out)?);
        let cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => WeightsCfg {
                ckpt: self.ckpt.ok_or_else(|| {
                    Error::InvalidConfig("--ckpt is required (or use --config)".into())
                })?,
                corpus: self.corpus.ok_or_else(|| {
                    Error::InvalidConfig("--corpus is required (or use --config)".into())
                })?,
                size: self.size,
            },
        };
        run_weights(&cfg, &out)
    }
}

// ---------------------------------------------------------------------------
// gen train / sample

#[derive(Args)]
struct GenTrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// "l1" or "aware".
    #[arg(long, default_value = "l1")]
    loss: String,
    /// Weight cache directory (required for --loss aware).
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
}

#[derive(Serialize, Deserialize, Clone)]
pub struct GenTrainCfg {
    pub corpus: PathBuf,
    pub cache: Option<PathBuf>,
    pub generator: GeneratorConfig,
}

pub fn run_gen_train(cfg: &GenTrainCfg, out_dir: &Path) -> Result<()> {
    echo_config(out_dir, cfg)?;
    let manifest = CorpusManifest::load(&cfg.corpus.join("manifest.json"))?;
    let cache = match &cfg.cache {
        Some(dir) => Some(WeightCache::open(&dir.join("weights"), &manifest).or_else(
            |_| WeightCache::open(dir, &manifest),
        )?),
        None => None,
    };
    let report = fewshot::train_generator(
        &manifest,
        &cfg.corpus,
        cfg.generator.clone(),
        cache.as_ref(),
        out_dir,
    )?;
    println!(
        "trained {} steps; best val metric {:?} at step {}",
        report.steps_run, report.best_val_metric, report.best_step
    );
    Ok(())
}

impl GenTrainArgs {
    fn run(self) -> Result<()> {
        let out = resolve_out(&self.out.clone().ok_or_else(usage_out)?);
        let cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => {
                let loss_mode = match self.loss.as_str() {
                    "l1" => LossMode::L1,
                    "aware" => LossMode::Aware,
                    other => {
                        return Err(Error::InvalidConfig(format!("unknown loss '{other}'")))
                    }
                };
                let mut generator = GeneratorConfig::desk(loss_mode);
                if let Some(v) = self.alpha {
                    generator.alpha = v;
                }
                if let Some(v) = self.seed {
                    generator.seed = v;
                }
                if let Some(v) = self.steps {
                    generator.steps = v;
                }
                if let Some(v) = self.batch {
                    generator.batch_size = v;
                }
                if let Some(v) = self.lr {
                    generator.learning_rate = v;
                }
                if let Some(v) = self.eval_every {
                    generator.eval_every = v;
                }
                GenTrainCfg {
                    corpus: self.corpus.ok_or_else(|| {
                        Error::InvalidConfig("--corpus is required (or use --config)".into())
                    })?,
                    cache: self.cache,
                    generator,
                }
            }
        };
        run_gen_train(&cfg, &out)
    }
}

#[derive(Args)]
struct GenSampleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Number of style source glyphs.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Serialize, Deserialize, Clone)]
pub struct GenSampleCfg {
    pub ckpt: PathBuf,
    pub corpus: PathBuf,
    pub split: String,
    pub k: usize,
    pub seed: u64,
}

pub fn run_gen_sample(cfg: &GenSampleCfg, out_dir: &Path) -> Result<()> {
    echo_config(out_dir, cfg)?;
    let manifest = CorpusManifest::load(&cfg.corpus.join("manifest.json"))?;
    let (model, _) = Generator::load_checkpoint(&cfg.ckpt)?;
    let split = Split::parse(&cfg.split)?;
    let samples = fewshot::synthesize_split(
        &model,
        &manifest,
        &cfg.corpus,
        split,
        cfg.k,
        cfg.seed,
        out_dir,
    )?;
    println!("generated {} glyphs under {}", samples.len(), out_dir.display());
    Ok(())
}

impl GenSampleArgs {
    fn run(self) -> Result<()> {
        let out = resolve_out(&self.out.clone().ok_or_else(usage_out)?);
        let cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => GenSampleCfg {
                ckpt: self.ckpt.ok_or_else(|| {
                    Error::InvalidConfig("--ckpt is required (or use --config)".into())
                })?,
                corpus: self.corpus.ok_or_else(|| {
                    Error::InvalidConfig("--corpus is required (or use --config)".into())
                })?,
                split: self.split,
                k: self.k,
                seed: self.seed,
            },
        };
        run_gen_sample(&cfg, &out)
    }
}

// ---------------------------------------------------------------------------
// metrics report / pca

#[derive(Args)]
struct MetricsReportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    gen: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weight cache directory for the weighted-L1 column.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Manifest for cache loading (defaults to cache's corpus layout).
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Checkpoint files to hash into the report header.
    #[arg(long)]
    ckpt: Vec<PathBuf>,
}

#[derive(Serialize, Deserialize, Clone)]
pub struct MetricsReportCfg {
    pub gt: PathBuf,
    pub gen: PathBuf,
    pub cache: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub ckpt: Vec<PathBuf>,
    pub canny: CannyConfig,
}

pub fn run_metrics_report(cfg: &MetricsReportCfg, out_dir: &Path) -> Result<()> {
    echo_config(out_dir, cfg)?;
    let cache = match (&cfg.cache, &cfg.manifest) {
        (Some(dir), Some(manifest_path)) => {
            let manifest = CorpusManifest::load(manifest_path)?;
            Some(
                WeightCache::open(&dir.join("weights"), &manifest)
                    .or_else(|_| WeightCache::open(dir, &manifest))?,
            )
        }
        (Some(_), None) => {
            return Err(Error::InvalidConfig(
                "--cache requires --manifest to locate the weight images".into(),
            ))
        }
        _ => None,
    };
    let mut hashes = BTreeMap::new();
    for path in &cfg.ckpt {
        hashes.insert(path.display().to_string(), sha256_file(path)?);
    }
    let report = metrics::build_report(&cfg.gt, &cfg.gen, cache.as_ref(), &cfg.canny, hashes)?;
    report.write_json(&out_dir.join("report.json"))?;
    report.write_csv(&out_dir.join("report.csv"))?;
    println!(
        "report: {} rows ({} excluded); mean L1 {:.4}, SSIM {:.4}",
        report.aggregates.rows,
        report.aggregates.rows_excluded,
        report.aggregates.l1,
        report.aggregates.ssim
    );
    Ok(())
}

impl MetricsReportArgs {
    fn run(self) -> Result<()> {
        let out = resolve_out(&self.out.clone().ok_or_else(usage_out)?);
        let cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => MetricsReportCfg {
                gt: self.gt.ok_or_else(|| {
                    Error::InvalidConfig("--gt is required (or use --config)".into())
                })?,
                gen: self.gen.ok_or_else(|| {
                    Error::InvalidConfig("--gen is required (or use --config)".into())
                })?,
                cache: self.cache,
                manifest: self.manifest,
                ckpt: self.ckpt,
                canny: CannyConfig::default(),
            },
        };
        run_metrics_report(&cfg, &out)
    }
}

#[derive(Args)]
struct PcaArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value = "ABCDE")]
    letters: String,
}

#[derive(Serialize, Deserialize, Clone)]
pub struct PcaCfg {
    pub ckpt: PathBuf,
    pub corpus: PathBuf,
    pub split: String,
    pub letters: String,
}

pub fn run_pca(cfg: &PcaCfg, out_dir: &Path) -> Result<()> {
    echo_config(out_dir, cfg)?;
    let manifest = CorpusManifest::load(&cfg.corpus.join("manifest.json"))?;
    let (model, _, _) = IdentModel::load_checkpoint(&cfg.ckpt)?;
    let split = Split::parse(&cfg.split)?;
    let wanted: Vec<char> = cfg.letters.chars().collect();
    let images = corpus::load_split_images(&manifest, &cfg.corpus, split, None)?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for ((font_id, letter), img) in &images {
        if !wanted.contains(letter) {
            continue;
        }
        let (feature, _) = model.encode(img)?;
        features.push(feature);
        labels.push(font_id.clone());
    }
    let proj = metrics::pca_style_features(&features)?;
    let scatter = metrics::render_pca_scatter(&proj, &labels, 512);
    scatter
        .save(out_dir.join("pca.png"))
        .map_err(image::ImageError::from)?;
    let rows: Vec<serde_json::Value> = proj
        .coords
        .iter()
        .zip(&labels)
        .map(|(c, l)| serde_json::json!({"font": l, "x": c[0], "y": c[1]}))
        .collect();
    let payload = serde_json::json!({
        "component_variances": proj.component_variances,
        "degenerate": proj.degenerate,
        "points": rows,
    });
    std::fs::write(
        out_dir.join("pca.json"),
        serde_json::to_string_pretty(&payload)?,
    )?;
    println!("projected {} features", features.len());
    Ok(())
}

impl PcaArgs {
    fn run(self) -> Result<()> {
        let out = resolve_out(&self.out.clone().ok_or_else(usage_out)?);
        let cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => PcaCfg {
                ckpt: self.ckpt.ok_or_else(|| {
                    Error::InvalidConfig("--ckpt is required (or use --config)".into())
                })?,
                corpus: self.corpus.ok_or_else(|| {
                    Error::InvalidConfig("--corpus is required (or use --config)".into())
                })?,
                split: self.split,
                letters: self.letters,
            },
        };
        run_pca(&cfg, &out)
    }
}

/// Parse argv and run. The caller maps errors onto exit codes.
pub fn run() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Corpus { cmd: CorpusCmd::Build(args) } => args.run(),
        Cmd::Pairs { cmd: PairsCmd::Dump(args) } => args.run(),
        Cmd::Ident { cmd: IdentCmd::Train(args) } => args.run(),
        Cmd::Ident { cmd: IdentCmd::Eval(args) } => args.run(),
        Cmd::Awareness { cmd: AwarenessCmd::Extract(args) } => args.run(false),
        Cmd::Awareness { cmd: AwarenessCmd::Overlay(args) } => args.run(true),
        Cmd::Awareness { cmd: AwarenessCmd::Weights(args) } => args.run(),
        Cmd::Gen { cmd: GenCmd::Train(args) } => args.run(),
        Cmd::Gen { cmd: GenCmd::Sample(args) } => args.run(),
        Cmd::Metrics { cmd: MetricsCmd::Report(args) } => args.run(),
        Cmd::Metrics { cmd: MetricsCmd::Pca(args) } => args.run(),
    }
}
