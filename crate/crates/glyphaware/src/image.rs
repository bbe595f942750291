//! Single-channel float image buffer with the handful of operations the
//! pipeline needs: PNG round-trips, bilinear resampling, min-max scaling.
//!
//! Pixels are `f32` in `[0, 1]`, row-major, origin at the top-left.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuf {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ImageBuf {
    pub fn new(width: usize, height: usize, fill: f32) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{} = {} values", width, height, width * height),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn min_max(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Bilinear resample to `width x height` (half-pixel-center convention).
    /// Resampling to the same size reproduces the input exactly.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> ImageBuf {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let mut out = ImageBuf::new(width, height, 0.0);
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        for oy in 0..height {
            let fy = ((oy as f32 + 0.5) * sy - 0.5).max(0.0);
            let y0 = (fy as usize).min(self.height - 1);
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f32;
            for ox in 0..width {
                let fx = ((ox as f32 + 0.5) * sx - 0.5).max(0.0);
                let x0 = (fx as usize).min(self.width - 1);
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f32;
                let top = self.get(x0, y0) * (1.0 - wx) + self.get(x1, y0) * wx;
                let bot = self.get(x0, y1) * (1.0 - wx) + self.get(x1, y1) * wx;
                out.set(ox, oy, top * (1.0 - wy) + bot * wy);
            }
        }
        out
    }

    /// 8-bit grayscale PNG. Values are clamped to [0,1] and rounded.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut img = image::GrayImage::new(self.width as u32, self.height as u32);
        for y in 0..self.height {
            for x in 0..self.width {
                let v = (self.get(x, y).clamp(0.0, 1.0) * 255.0).round() as u8;
                img.put_pixel(x as u32, y as u32, image::Luma([v]));
            }
        }
        img.save(path)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<ImageBuf> {
        let img = image::open(path)?.into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.pixels().map(|p| p.0[0] as f32 / 255.0).collect();
        ImageBuf::from_vec(w, h, data)
    }

    /// Count of pixels darker than `threshold` ("ink" on a light background).
    pub fn ink_pixels(&self, threshold: f32) -> usize {
        self.data.iter().filter(|&&v| v < threshold).count()
    }

    /// Tight bounding box of pixels darker than `threshold`,
    /// as (min_x, min_y, max_x, max_y) inclusive. None when blank.
    pub fn ink_bbox(&self, threshold: f32) -> Option<(usize, usize, usize, usize)> {
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) < threshold {
                    bbox = Some(match bbox {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bbox
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resize_identity_is_exact() {
        let img = ImageBuf::from_vec(3, 2, vec![0.1, 0.5, 0.9, 0.0, 1.0, 0.25]).unwrap();
        let same = img.resize_bilinear(3, 2);
        assert_eq!(img, same);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = ImageBuf::new(7, 7, 0.37);
        let up = img.resize_bilinear(19, 19);
        for &v in up.data() {
            assert!((v - 0.37).abs() < 1e-6);
        }
    }

    #[test]
    fn png_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut img = ImageBuf::new(5, 4, 1.0);
        img.set(2, 1, 0.0);
        img.set(4, 3, 128.0 / 255.0);
        img.save_png(&path).unwrap();
        let back = ImageBuf::load_png(&path).unwrap();
        assert_eq!(back.width(), 5);
        assert_eq!(back.height(), 4);
        assert_eq!(back.get(2, 1), 0.0);
        assert!((back.get(4, 3) - 128.0 / 255.0).abs() < 1e-6);
    }

    #[test]
    fn bbox_and_ink_count() {
        let mut img = ImageBuf::new(8, 8, 1.0);
        img.set(2, 3, 0.0);
        img.set(5, 6, 0.2);
        assert_eq!(img.ink_bbox(0.5), Some((2, 3, 5, 6)));
        assert_eq!(img.ink_pixels(0.5), 2);
        assert_eq!(ImageBuf::new(4, 4, 1.0).ink_bbox(0.5), None);
    }
}
