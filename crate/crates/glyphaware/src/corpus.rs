//! Font corpus construction: ingest TTF/OTF files, rasterize the 26 capital
//! letters to fixed-size grayscale images, and produce family-disjoint
//! train/val/test manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageBuf;
use crate::raster::Outline;

pub const CAPITALS: [char; 26] = [
    'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J', 'K', 'L', 'M', 'N', 'O', 'P', 'Q', 'R',
    'S', 'T', 'U', 'V', 'W', 'X', 'Y', 'Z',
];

/// Completeness rule: every requested capital must render with at least this
/// many ink pixels at the reference size.
pub const COMPLETENESS_CHECK_SIZE: usize = 224;
pub const COMPLETENESS_CHECK_MARGIN: usize = 5;
pub const COMPLETENESS_MIN_INK: usize = 10;
const INK_THRESHOLD: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FontCategory {
    Serif,
    SansSerif,
    Display,
    Handwriting,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FontRecord {
    pub font_id: String,
    pub family_name: String,
    pub category: FontCategory,
    pub source_path: PathBuf,
}

/// A rendered character image with provenance.
#[derive(Debug, Clone)]
pub struct GlyphImage {
    pub font_id: String,
    pub letter: char,
    pub image: ImageBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub font_id: String,
    pub letter: char,
    /// Path relative to the manifest's directory.
    pub image_path: String,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FontEntry {
    pub font_id: String,
    pub family_name: String,
    pub category: FontCategory,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub records: Vec<ManifestRecord>,
    pub fonts: Vec<FontEntry>,
    pub render_size: usize,
    pub margin: usize,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl CorpusManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<CorpusManifest> {
        let data = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&data)?)
    }

    pub fn records_for(&self, split: Split) -> impl Iterator<Item = &ManifestRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn fonts_for(&self, split: Split) -> Vec<&FontEntry> {
        self.fonts.iter().filter(|f| f.split == split).collect()
    }

    /// Letters per font for one split, in insertion (sorted) order.
    pub fn letters_by_font(&self, split: Split) -> BTreeMap<String, Vec<char>> {
        let mut map: BTreeMap<String, Vec<char>> = BTreeMap::new();
        for r in self.records_for(split) {
            map.entry(r.font_id.clone()).or_default().push(r.letter);
        }
        map
    }
}

/// Owned font file handle; parsing is zero-copy and re-done per call.
pub struct Font {
    pub record: FontRecord,
    data: Vec<u8>,
}

fn parse_family_name(face: &ttf_parser::Face) -> Option<String> {
    face.names()
        .into_iter()
        .filter(|n| n.name_id == ttf_parser::name_id::FAMILY && n.is_unicode())
        .filter_map(|n| n.to_string())
        .next()
}

impl Font {
    /// Load and validate a font file. Fonts without outline tables (color or
    /// bitmap-only fonts) are rejected.
    pub fn load(path: &Path) -> Result<Font> {
        let data = std::fs::read(path).map_err(|e| Error::UnparseableFont {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let face = ttf_parser::Face::parse(&data, 0).map_err(|e| Error::UnparseableFont {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let tables = face.tables();
        if tables.glyf.is_none() && tables.cff.is_none() && tables.cff2.is_none() {
            return Err(Error::UnparseableFont {
                path: path.to_path_buf(),
                reason: "no outline tables".into(),
            });
        }
        let family_name = parse_family_name(&face).unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        let font_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Font {
            record: FontRecord {
                font_id,
                family_name,
                category: FontCategory::Unknown,
                source_path: path.to_path_buf(),
            },
            data,
        })
    }

    /// Rasterize one letter: uniform scale into the margin-inset box, centered,
    /// anti-aliased, background 1.0.
    pub fn render(&self, letter: char, size: usize, margin: usize) -> Result<ImageBuf> {
        let face =
            ttf_parser::Face::parse(&self.data, 0).map_err(|e| Error::UnparseableFont {
                path: self.record.source_path.clone(),
                reason: e.to_string(),
            })?;
        let missing = || Error::MissingGlyph {
            font: self.record.font_id.clone(),
            letter,
        };
        let glyph = face.glyph_index(letter).ok_or_else(missing)?;
        let mut outline = Outline::new();
        if face.outline_glyph(glyph, &mut outline).is_none() || outline.is_empty() {
            return Err(missing());
        }
        outline.render(size, margin).ok_or_else(missing)
    }

    /// True when every requested letter renders with enough ink at the
    /// reference size.
    pub fn is_complete(&self, letters: &[char]) -> bool {
        letters.iter().all(|&l| {
            self.render(l, COMPLETENESS_CHECK_SIZE, COMPLETENESS_CHECK_MARGIN)
                .map(|img| img.ink_pixels(INK_THRESHOLD) >= COMPLETENESS_MIN_INK)
                .unwrap_or(false)
        })
    }
}

/// Convenience wrapper producing a `GlyphImage` from a `FontRecord`.
pub fn render_glyph(
    record: &FontRecord,
    letter: char,
    size: usize,
    margin: usize,
) -> Result<GlyphImage> {
    let font = Font::load(&record.source_path)?;
    let image = font.render(letter, size, margin)?;
    Ok(GlyphImage {
        font_id: record.font_id.clone(),
        letter,
        image,
    })
}

/// Bilinear resize of a glyph image with values clamped to [0, 1].
pub fn resize_image(img: &GlyphImage, size: usize) -> GlyphImage {
    let mut image = img.image.resize_bilinear(size, size);
    image.clamp01();
    GlyphImage {
        font_id: img.font_id.clone(),
        letter: img.letter,
        image,
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct FontMetadataEntry {
    pub family: Option<String>,
    pub category: Option<FontCategory>,
}

/// Scan a directory tree for font files. Unparseable files are skipped and
/// reported in the returned list of (path, reason).
pub fn scan_fonts(
    dir: &Path,
    metadata: Option<&BTreeMap<String, FontMetadataEntry>>,
) -> Result<(Vec<Font>, Vec<(PathBuf, String)>)> {
    let mut paths = Vec::new();
    collect_font_paths(dir, &mut paths)?;
    paths.sort();
    let mut fonts = Vec::new();
    let mut skipped = Vec::new();
    let mut used_ids = std::collections::BTreeSet::new();
    for path in paths {
        match Font::load(&path) {
            Ok(mut font) => {
                if let Some(meta) = metadata {
                    let key = path
                        .file_name()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_default();
                    let entry = meta
                        .get(&key)
                        .or_else(|| meta.get(&font.record.font_id));
                    if let Some(entry) = entry {
                        if let Some(family) = &entry.family {
                            font.record.family_name = family.clone();
                        }
                        if let Some(category) = entry.category {
                            font.record.category = category;
                        }
                    }
                }
                // Disambiguate duplicate file stems deterministically.
                if !used_ids.insert(font.record.font_id.clone()) {
                    let mut n = 2;
                    loop {
                        let candidate = format!("{}-{}", font.record.font_id, n);
                        if used_ids.insert(candidate.clone()) {
                            font.record.font_id = candidate;
                            break;
                        }
                        n += 1;
                    }
                }
                fonts.push(font);
            }
            Err(Error::UnparseableFont { path, reason }) => skipped.push((path, reason)),
            Err(e) => return Err(e),
        }
    }
    Ok((fonts, skipped))
}

fn collect_font_paths(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_font_paths(&path, out)?;
        } else if matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("ttf") | Some("otf") | Some("TTF") | Some("OTF")
        ) {
            out.push(path);
        }
    }
    Ok(())
}

/// Relative image path scheme: `<split>/<font_id>/<letter>.png`.
pub fn image_rel_path(split: Split, font_id: &str, letter: char) -> String {
    format!("{}/{}/{}.png", split.as_str(), font_id, letter)
}

/// Build a family-disjoint manifest. Fonts missing any requested letter (or
/// rendering it with too little ink) are dropped. Deterministic for a fixed
/// seed.
pub fn build_manifest(
    fonts: &[Font],
    letters: &[char],
    ratios: (f64, f64, f64),
    seed: u64,
    render_size: usize,
    margin: usize,
) -> Result<CorpusManifest> {
    let (rt, rv, rs) = ratios;
    if rt <= 0.0 || rv <= 0.0 || rs <= 0.0 {
        return Err(Error::InvalidConfig(
            "split ratios must all be positive".into(),
        ));
    }
    let total_ratio = rt + rv + rs;
    let ratios = [rt / total_ratio, rv / total_ratio, rs / total_ratio];

    let complete: Vec<&Font> = fonts.iter().filter(|f| f.is_complete(letters)).collect();

    // Group by family; families are shuffled, then greedily assigned to the
    // split with the largest remaining quota deficit.
    let mut families: BTreeMap<&str, Vec<&Font>> = BTreeMap::new();
    for font in &complete {
        families
            .entry(font.record.family_name.as_str())
            .or_default()
            .push(font);
    }
    let mut family_names: Vec<&str> = families.keys().copied().collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    family_names.shuffle(&mut rng);

    let total = complete.len() as f64;
    let quotas = [ratios[0] * total, ratios[1] * total, ratios[2] * total];
    let mut counts = [0usize; 3];
    let mut assignment: BTreeMap<&str, Split> = BTreeMap::new();
    for name in &family_names {
        let size = families[name].len();
        let mut best = 0;
        let mut best_deficit = f64::NEG_INFINITY;
        for (i, quota) in quotas.iter().enumerate() {
            let deficit = quota - counts[i] as f64;
            if deficit > best_deficit {
                best_deficit = deficit;
                best = i;
            }
        }
        counts[best] += size;
        assignment.insert(name, [Split::Train, Split::Val, Split::Test][best]);
    }
    for (i, split) in [Split::Train, Split::Val, Split::Test].iter().enumerate() {
        if counts[i] == 0 {
            return Err(Error::TooFewFonts {
                split: split.as_str().into(),
                available: complete.len(),
            });
        }
    }

    let mut font_entries = Vec::new();
    let mut records = Vec::new();
    let mut sorted_fonts: Vec<&&Font> = complete.iter().collect();
    sorted_fonts.sort_by(|a, b| a.record.font_id.cmp(&b.record.font_id));
    for font in sorted_fonts {
        let split = assignment[font.record.family_name.as_str()];
        font_entries.push(FontEntry {
            font_id: font.record.font_id.clone(),
            family_name: font.record.family_name.clone(),
            category: font.record.category,
            split,
        });
        let mut sorted_letters = letters.to_vec();
        sorted_letters.sort_unstable();
        for letter in sorted_letters {
            records.push(ManifestRecord {
                font_id: font.record.font_id.clone(),
                letter,
                image_path: image_rel_path(split, &font.record.font_id, letter),
                split,
            });
        }
    }

    Ok(CorpusManifest {
        records,
        fonts: font_entries,
        render_size,
        margin,
        seed,
        ratios,
    })
}

/// Render every manifest record to `<out>/<split>/<font_id>/<letter>.png` and
/// write `manifest.json`.
pub fn render_corpus(manifest: &CorpusManifest, fonts: &[Font], out_dir: &Path) -> Result<()> {
    let by_id: BTreeMap<&str, &Font> = fonts
        .iter()
        .map(|f| (f.record.font_id.as_str(), f))
        .collect();
    for record in &manifest.records {
        let font = by_id.get(record.font_id.as_str()).ok_or_else(|| {
            Error::MissingArtifact(format!("font '{}' not loaded", record.font_id))
        })?;
        let img = font.render(record.letter, manifest.render_size, manifest.margin)?;
        img.save_png(&out_dir.join(&record.image_path))?;
    }
    manifest.save(&out_dir.join("manifest.json"))
}

/// Load every image of a split, optionally resized, keyed by (font, letter).
pub fn load_split_images(
    manifest: &CorpusManifest,
    corpus_root: &Path,
    split: Split,
    resize_to: Option<usize>,
) -> Result<BTreeMap<(String, char), ImageBuf>> {
    let mut out = BTreeMap::new();
    for record in manifest.records_for(split) {
        let mut img = ImageBuf::load_png(&corpus_root.join(&record.image_path))?;
        if let Some(size) = resize_to {
            if img.width() != size || img.height() != size {
                img = img.resize_bilinear(size, size);
                img.clamp01();
            }
        }
        out.insert((record.font_id.clone(), record.letter), img);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{dejavu_sans, khmer_font_path};

    #[test]
    fn render_touches_margin_at_224() {
        let font = Font::load(&dejavu_sans()).unwrap();
        let img = font.render('A', 224, 5).unwrap();
        assert_eq!(img.width(), 224);
        assert_eq!(img.height(), 224);
        let (x0, y0, x1, y1) = img.ink_bbox(0.99).unwrap();
        // Ink must stay inside the margin box and touch it on one axis.
        assert!(x0 >= 5 && y0 >= 5 && x1 <= 218 && y1 <= 218, "bbox ({x0},{y0},{x1},{y1})");
        let touches_x = x0 == 5 && x1 == 218;
        let touches_y = y0 == 5 && y1 == 218;
        assert!(touches_x || touches_y, "bbox ({x0},{y0},{x1},{y1})");
    }

    #[test]
    fn render_touches_margin_at_64() {
        let font = Font::load(&dejavu_sans()).unwrap();
        let img = font.render('O', 64, 2).unwrap();
        assert_eq!(img.width(), 64);
        let (x0, y0, x1, y1) = img.ink_bbox(0.99).unwrap();
        assert!(x0 >= 2 && y0 >= 2 && x1 <= 61 && y1 <= 61);
        assert!((x0 == 2 && x1 == 61) || (y0 == 2 && y1 == 61));
    }

    #[test]
    fn render_is_deterministic() {
        let font = Font::load(&dejavu_sans()).unwrap();
        let a = font.render('G', 224, 5).unwrap();
        let b = font.render('G', 224, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_letter_is_missing_glyph() {
        // This face has no Latin capitals at all.
        let font = Font::load(&khmer_font_path()).unwrap();
        match font.render('A', 64, 2) {
            Err(Error::MissingGlyph { letter: 'A', .. }) => {}
            other => panic!("expected MissingGlyph, got {other:?}"),
        }
    }

    #[test]
    fn resize_image_contract() {
        let font = Font::load(&dejavu_sans()).unwrap();
        let glyph = GlyphImage {
            font_id: "test".into(),
            letter: 'B',
            image: font.render('B', 224, 5).unwrap(),
        };
        let small = resize_image(&glyph, 64);
        assert_eq!(small.image.width(), 64);
        // Identity resize is pixel-exact.
        let same = resize_image(&glyph, 224);
        assert_eq!(same.image, glyph.image);
        // Constant image stays constant.
        let flat = GlyphImage {
            font_id: "flat".into(),
            letter: 'C',
            image: ImageBuf::new(32, 32, 0.6),
        };
        for &v in resize_image(&flat, 16).image.data() {
            assert!((v - 0.6).abs() < 1e-6);
        }
    }

    fn synthetic_fonts(families: &[(&str, usize)]) -> Vec<Font> {
        // Fonts that are never rendered: manifest split logic only.
        let mut fonts = Vec::new();
        for (family, n) in families {
            for i in 0..*n {
                fonts.push(Font {
                    record: FontRecord {
                        font_id: format!("{family}-{i}"),
                        family_name: family.to_string(),
                        category: FontCategory::Unknown,
                        source_path: PathBuf::from("/nonexistent"),
                    },
                    data: Vec::new(),
                });
            }
        }
        fonts
    }

    /// Split assignment without the completeness filter, for synthetic fonts.
    fn manifest_no_filter(fonts: &[Font], seed: u64) -> CorpusManifest {
        // is_complete() would fail on synthetic fonts; splitting logic is the
        // same, so run build_manifest with a letter set nothing can fail on.
        build_manifest(fonts, &[], (8.0, 1.0, 1.0), seed, 64, 2).unwrap()
    }

    #[test]
    fn splits_are_family_disjoint_and_deterministic() {
        let families: Vec<(String, usize)> = (0..30).map(|i| (format!("fam{i:02}"), 1 + i % 3)).collect();
        let refs: Vec<(&str, usize)> = families.iter().map(|(n, c)| (n.as_str(), *c)).collect();
        let fonts = synthetic_fonts(&refs);
        let m1 = manifest_no_filter(&fonts, 7);
        let m2 = manifest_no_filter(&fonts, 7);
        assert_eq!(serde_json::to_string(&m1).unwrap(), serde_json::to_string(&m2).unwrap());

        let mut family_split: BTreeMap<&str, Split> = BTreeMap::new();
        for f in &m1.fonts {
            let prev = family_split.insert(f.family_name.as_str(), f.split);
            if let Some(prev) = prev {
                assert_eq!(prev, f.split, "family {} spans splits", f.family_name);
            }
        }
    }

    #[test]
    fn shared_family_lands_in_one_split() {
        let fonts = synthetic_fonts(&[("solo-a", 1), ("shared", 2), ("solo-b", 1), ("solo-c", 1)]);
        let m = manifest_no_filter(&fonts, 3);
        let shared: Vec<Split> = m
            .fonts
            .iter()
            .filter(|f| f.family_name == "shared")
            .map(|f| f.split)
            .collect();
        assert_eq!(shared.len(), 2);
        assert_eq!(shared[0], shared[1]);
    }

    #[test]
    fn split_counts_approximate_ratios() {
        let families: Vec<(String, usize)> =
            (0..800).map(|i| (format!("f{i:03}"), 1 + i % 5)).collect();
        let refs: Vec<(&str, usize)> = families.iter().map(|(n, c)| (n.as_str(), *c)).collect();
        let fonts = synthetic_fonts(&refs);
        let total = fonts.len() as f64;
        let m = manifest_no_filter(&fonts, 11);
        let count = |s: Split| m.fonts.iter().filter(|f| f.split == s).count() as f64;
        assert!((count(Split::Train) / total - 0.8).abs() < 0.02);
        assert!((count(Split::Val) / total - 0.1).abs() < 0.02);
        assert!((count(Split::Test) / total - 0.1).abs() < 0.02);
    }

    #[test]
    fn too_few_fonts_errors() {
        let fonts = synthetic_fonts(&[("only", 2)]);
        match build_manifest(&fonts, &[], (8.0, 1.0, 1.0), 1, 64, 2) {
            Err(Error::TooFewFonts { .. }) => {}
            other => panic!("expected TooFewFonts, got {other:?}"),
        }
    }

    #[test]
    fn incomplete_fonts_are_dropped() {
        let deja = Font::load(&dejavu_sans()).unwrap();
        let khmer = Font::load(&khmer_font_path()).unwrap();
        assert!(deja.is_complete(&CAPITALS));
        assert!(!khmer.is_complete(&CAPITALS));
    }
}
