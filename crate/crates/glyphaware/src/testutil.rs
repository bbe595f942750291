//! Helpers for assembling test corpora from fonts installed on the host.
//! Used by the test suite and the runnable examples.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

/// Directories searched for font files, in order. Override with the
/// `GLYPHAWARE_FONT_DIRS` environment variable (colon-separated).
pub fn font_search_dirs() -> Vec<PathBuf> {
    if let Ok(dirs) = std::env::var("GLYPHAWARE_FONT_DIRS") {
        return dirs.split(':').map(PathBuf::from).collect();
    }
    [
        "/usr/share/fonts",
        "/usr/local/share/fonts",
        "/usr/local/lib/python3.10/dist-packages/matplotlib/mpl-data/fonts/ttf",
        "/usr/local/lib/python3.10/dist-packages/marimo/_static/assets",
        "/usr/local/lib/python3.10/dist-packages/reportlab/fonts",
    ]
    .iter()
    .map(PathBuf::from)
    .collect()
}

fn walk(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = std::fs::read_dir(dir) else {
        return;
    };
    let mut paths: Vec<PathBuf> = entries.flatten().map(|e| e.path()).collect();
    paths.sort();
    for path in paths {
        if path.is_dir() {
            walk(&path, out);
        } else if matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("ttf") | Some("otf")
        ) {
            out.push(path);
        }
    }
}

/// All font files under the search dirs, deduplicated by content hash so the
/// same font shipped by two packages is only counted once.
pub fn find_host_fonts() -> Vec<PathBuf> {
    let mut files = Vec::new();
    for dir in font_search_dirs() {
        walk(&dir, &mut files);
    }
    let mut seen = BTreeSet::new();
    let mut unique = Vec::new();
    for path in files {
        let Ok(bytes) = std::fs::read(&path) else {
            continue;
        };
        let hash = Sha256::digest(&bytes);
        if seen.insert(hash.to_vec()) {
            unique.push(path);
        }
    }
    unique
}

fn find_named(name: &str) -> Option<PathBuf> {
    let mut files = Vec::new();
    for dir in font_search_dirs() {
        walk(&dir, &mut files);
    }
    files
        .into_iter()
        .find(|p| p.file_name().map(|f| f == name).unwrap_or(false))
}

/// DejaVu Sans, present on essentially every Linux host.
pub fn dejavu_sans() -> PathBuf {
    find_named("DejaVuSans.ttf").expect("DejaVuSans.ttf not found in font search dirs")
}

pub fn dejavu_serif() -> PathBuf {
    find_named("DejaVuSerif.ttf").expect("DejaVuSerif.ttf not found in font search dirs")
}

/// A face with no Latin capitals (exercises MissingGlyph paths).
pub fn khmer_font_path() -> PathBuf {
    find_named("hb-test.ttf").expect("hb-test.ttf (Noto Sans Khmer) not found")
}

/// Copy up to `limit` deduplicated host fonts into `dir`, returning how many
/// were copied. File names are preserved; stem collisions get a suffix.
pub fn stage_fonts_into(dir: &Path, limit: usize) -> usize {
    std::fs::create_dir_all(dir).expect("create font staging dir");
    let mut used = BTreeSet::new();
    let mut copied = 0;
    for path in find_host_fonts() {
        if copied >= limit {
            break;
        }
        let Some(name) = path.file_name().map(|s| s.to_string_lossy().into_owned()) else {
            continue;
        };
        let target_name = if used.insert(name.clone()) {
            name
        } else {
            let mut n = 2;
            loop {
                let candidate = format!("{n}-{name}");
                if used.insert(candidate.clone()) {
                    break candidate;
                }
                n += 1;
            }
        };
        if std::fs::copy(&path, dir.join(&target_name)).is_ok() {
            copied += 1;
        }
    }
    copied
}
