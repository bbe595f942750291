//! Labeled glyph-pair generation for font identification. Labels come from
//! font membership alone, so no manual annotation is involved: two letters of
//! one font are "same", letters of two fonts are "not". Same-letter pairs are
//! forbidden for both classes so letter identity carries no label information.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, GlyphImage, Split};
use crate::error::{Error, Result};
use crate::image::ImageBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairLabel {
    Same,
    Not,
}

/// A sampled pair before image loading: manifest keys plus the derived label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairSpec {
    pub left_font: String,
    pub left_letter: char,
    pub left_path: String,
    pub right_font: String,
    pub right_letter: char,
    pub right_path: String,
    pub label: PairLabel,
}

/// A materialized pair: two glyph images and the same/not label.
#[derive(Debug, Clone)]
pub struct PairSample {
    pub left: GlyphImage,
    pub right: GlyphImage,
    pub label: PairLabel,
}

/// Derive a fresh stream seed from (base seed, epoch index).
pub fn epoch_seed(base: u64, epoch: u64) -> u64 {
    // splitmix64 over the combined value
    let mut z = base ^ epoch.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sample `count` balanced pairs from one split. Labels alternate
/// same/not, so any prefix is balanced within one pair.
///
/// Within each pair the two letters always differ; the label is derived solely
/// from font identity. Deterministic for a fixed seed.
pub fn sample_pairs(
    manifest: &CorpusManifest,
    split: Split,
    count: usize,
    seed: u64,
) -> Result<Vec<PairSpec>> {
    let by_font = manifest.letters_by_font(split);
    let fonts: Vec<(&String, &Vec<char>)> =
        by_font.iter().filter(|(_, ls)| ls.len() >= 2).collect();
    if fonts.len() < 2 {
        return Err(Error::InsufficientFonts {
            split: split.as_str().into(),
            found: fonts.len(),
        });
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let spec = if i % 2 == 0 {
            // same font, two distinct letters
            let (font, letters) = fonts[rng.random_range(0..fonts.len())];
            let a = rng.random_range(0..letters.len());
            let b = loop {
                let b = rng.random_range(0..letters.len());
                if b != a {
                    break b;
                }
            };
            pair_spec(split, font, letters[a], font, letters[b], PairLabel::Same)
        } else {
            // two distinct fonts, two distinct letters
            let fa = rng.random_range(0..fonts.len());
            let fb = loop {
                let fb = rng.random_range(0..fonts.len());
                if fb != fa {
                    break fb;
                }
            };
            let (font_a, letters_a) = fonts[fa];
            let (font_b, letters_b) = fonts[fb];
            let la = letters_a[rng.random_range(0..letters_a.len())];
            let lb = loop {
                let lb = letters_b[rng.random_range(0..letters_b.len())];
                if lb != la {
                    break lb;
                }
            };
            pair_spec(split, font_a, la, font_b, lb, PairLabel::Not)
        };
        out.push(spec);
    }
    Ok(out)
}

fn pair_spec(
    split: Split,
    left_font: &str,
    left_letter: char,
    right_font: &str,
    right_letter: char,
    label: PairLabel,
) -> PairSpec {
    PairSpec {
        left_font: left_font.to_string(),
        left_letter,
        left_path: crate::corpus::image_rel_path(split, left_font, left_letter),
        right_font: right_font.to_string(),
        right_letter,
        right_path: crate::corpus::image_rel_path(split, right_font, right_letter),
        label,
    }
}

impl PairSpec {
    /// Load both images from the corpus root.
    pub fn materialize(&self, corpus_root: &Path) -> Result<PairSample> {
        let left = ImageBuf::load_png(&corpus_root.join(&self.left_path))?;
        let right = ImageBuf::load_png(&corpus_root.join(&self.right_path))?;
        Ok(PairSample {
            left: GlyphImage {
                font_id: self.left_font.clone(),
                letter: self.left_letter,
                image: left,
            },
            right: GlyphImage {
                font_id: self.right_font.clone(),
                letter: self.right_letter,
                image: right,
            },
            label: self.label,
        })
    }
}

/// Audit dump: one `{"left":..,"right":..,"label":..}` JSON object per line.
pub fn dump_pairs_jsonl(specs: &[PairSpec], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for spec in specs {
        let line = serde_json::json!({
            "left": spec.left_path,
            "right": spec.right_path,
            "label": match spec.label { PairLabel::Same => "same", PairLabel::Not => "not" },
        });
        writeln!(file, "{line}")?;
    }
    Ok(())
}
