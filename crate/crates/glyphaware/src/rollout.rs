//! Attention rollout: propagate per-layer attention (with residual mixing)
//! through the encoder to attribute the class token's output to input patches.
//! The class-token row of the propagated product, restricted to the patch
//! columns, is the patch-level style-importance map.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ident::AttentionTrace;
use crate::image::ImageBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapNorm {
    Raw,
    Minmax,
}

/// M x N nonnegative patch-importance grid for one glyph image.
#[derive(Debug, Clone)]
pub struct AwarenessMap {
    pub grid: Array2<f32>,
    pub normalization: MapNorm,
    pub source_image_id: String,
}

impl AwarenessMap {
    pub fn with_source(mut self, id: &str) -> Self {
        self.source_image_id = id.to_string();
        self
    }
}

const ROW_SUM_TOLERANCE: f64 = 1e-3;

/// Roll attention out through all layers.
///
/// Per layer: head-mean A, residual mixing 0.5*A + 0.5*I with rows
/// renormalized, then the running product R = A~_L * ... * A~_1. The output is
/// the class-token row of R over the patch columns, reshaped row-major.
pub fn attention_rollout(trace: &AttentionTrace) -> Result<AwarenessMap> {
    if trace.layers.is_empty() {
        return Err(Error::InvalidConfig("attention trace has no layers".into()));
    }
    let t = trace.layers[0].shape()[1];
    let (m, n) = trace.grid;
    if m * n + 1 != t {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} patches + class token = {} tokens", m, n, m * n + 1),
            actual: format!("{t} tokens"),
        });
    }

    let mut rolled = Array2::<f32>::eye(t);
    for (layer_idx, layer) in trace.layers.iter().enumerate() {
        let (heads, rows, cols) = (layer.shape()[0], layer.shape()[1], layer.shape()[2]);
        if rows != t || cols != t {
            return Err(Error::ShapeMismatch {
                expected: format!("{t}x{t} attention"),
                actual: format!("{rows}x{cols} in layer {layer_idx}"),
            });
        }
        for head in 0..heads {
            for row in 0..rows {
                let mut sum = 0.0f64;
                for col in 0..cols {
                    let v = layer[[head, row, col]];
                    if v < 0.0 {
                        return Err(Error::NonStochasticAttention {
                            layer: layer_idx,
                            head,
                            row,
                            deviation: (-v) as f64,
                        });
                    }
                    sum += v as f64;
                }
                let deviation = (sum - 1.0).abs();
                if deviation > ROW_SUM_TOLERANCE {
                    return Err(Error::NonStochasticAttention {
                        layer: layer_idx,
                        head,
                        row,
                        deviation,
                    });
                }
            }
        }

        // head mean, residual mixing, row renormalization
        let mean = layer.mean_axis(Axis(0)).expect("at least one head");
        let mut mixed = mean * 0.5;
        for i in 0..t {
            mixed[[i, i]] += 0.5;
        }
        for mut row in mixed.rows_mut() {
            let sum: f32 = row.sum();
            row.mapv_inplace(|v| v / sum);
        }
        rolled = mixed.dot(&rolled);
    }

    let class_row = rolled.row(0);
    let grid = Array2::from_shape_fn((m, n), |(i, j)| class_row[1 + i * n + j]);
    Ok(AwarenessMap {
        grid,
        normalization: MapNorm::Raw,
        source_image_id: String::new(),
    })
}

/// Min-max scale to [0, 1]; a constant map becomes all zeros.
pub fn normalize_map(map: &AwarenessMap) -> AwarenessMap {
    let lo = map.grid.iter().cloned().fold(f32::INFINITY, f32::min);
    let hi = map.grid.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let grid = if hi > lo {
        map.grid.mapv(|v| (v - lo) / (hi - lo))
    } else {
        Array2::zeros(map.grid.raw_dim())
    };
    AwarenessMap {
        grid,
        normalization: MapNorm::Minmax,
        source_image_id: map.source_image_id.clone(),
    }
}

/// Bilinear upsampling of the patch grid to a pixel-resolution weight image.
pub fn resize_map(map: &AwarenessMap, size: usize) -> Result<ImageBuf> {
    let (m, n) = map.grid.dim();
    if size < m.max(n) {
        return Err(Error::InvalidConfig(format!(
            "resize_map target {size} smaller than grid {m}x{n}"
        )));
    }
    let buf = ImageBuf::from_vec(n, m, map.grid.iter().cloned().collect())?;
    Ok(buf.resize_bilinear(size, size))
}

fn heat_rgb(v: f32) -> [u8; 3] {
    // blue -> cyan -> yellow -> red
    let v = v.clamp(0.0, 1.0);
    let (r, g, b) = if v < 1.0 / 3.0 {
        let t = v * 3.0;
        (0.0, t, 1.0)
    } else if v < 2.0 / 3.0 {
        let t = (v - 1.0 / 3.0) * 3.0;
        (t, 1.0, 1.0 - t)
    } else {
        let t = (v - 2.0 / 3.0) * 3.0;
        (1.0, 1.0 - t, 0.0)
    };
    [
        (r * 255.0).round() as u8,
        (g * 255.0).round() as u8,
        (b * 255.0).round() as u8,
    ]
}

const OVERLAY_ALPHA: f32 = 0.45;

/// Heatmap alpha-blended over the glyph at image resolution.
/// Expects a min-max normalized map.
pub fn render_overlay(img: &ImageBuf, map: &AwarenessMap) -> Result<image::RgbImage> {
    let weights = resize_map(map, img.width().max(img.height()))?;
    let weights = if weights.width() != img.width() || weights.height() != img.height() {
        weights.resize_bilinear(img.width(), img.height())
    } else {
        weights
    };
    let mut out = image::RgbImage::new(img.width() as u32, img.height() as u32);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let gray = img.get(x, y).clamp(0.0, 1.0);
            let heat = heat_rgb(weights.get(x, y));
            let blend = |h: u8| -> u8 {
                ((1.0 - OVERLAY_ALPHA) * gray * 255.0 + OVERLAY_ALPHA * h as f32).round() as u8
            };
            out.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([blend(heat[0]), blend(heat[1]), blend(heat[2])]),
            );
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapHeader {
    pub m: usize,
    pub n: usize,
    pub norm: String,
    pub image: String,
}

/// Map file format: one-line JSON header, newline, then row-major
/// little-endian f32 data.
pub fn write_map_data(
    path: &Path,
    rows: usize,
    cols: usize,
    data: &[f32],
    norm: MapNorm,
    image_id: &str,
) -> Result<()> {
    if data.len() != rows * cols {
        return Err(Error::ShapeMismatch {
            expected: format!("{rows}x{cols}"),
            actual: format!("{} values", data.len()),
        });
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let header = MapHeader {
        m: rows,
        n: cols,
        norm: match norm {
            MapNorm::Raw => "raw".into(),
            MapNorm::Minmax => "minmax".into(),
        },
        image: image_id.to_string(),
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut file, &header)?;
    file.write_all(b"\n")?;
    for v in data {
        file.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_map(path: &Path, map: &AwarenessMap) -> Result<()> {
    let (rows, cols) = map.grid.dim();
    let data: Vec<f32> = map.grid.iter().cloned().collect();
    write_map_data(path, rows, cols, &data, map.normalization, &map.source_image_id)
}

pub fn read_map_data(path: &Path) -> Result<(MapHeader, Vec<f32>)> {
    let mut reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut header_line = String::new();
    reader.read_line(&mut header_line)?;
    let header: MapHeader = serde_json::from_str(header_line.trim_end())?;
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw)?;
    let expected = header.m * header.n * 4;
    if raw.len() != expected {
        return Err(Error::ShapeMismatch {
            expected: format!("{expected} data bytes"),
            actual: format!("{}", raw.len()),
        });
    }
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((header, data))
}
