//! Glyph outline rasterization: ttf-parser outlines -> anti-aliased coverage.
//!
//! The glyph's tight bounding box is scaled uniformly to fit the margin-inset
//! box and centered on both axes, so style proportions are preserved and the
//! ink touches the margin on the larger axis.

use ab_glyph_rasterizer::{point, Rasterizer};

use crate::image::ImageBuf;

#[derive(Debug, Clone, Copy)]
enum Seg {
    Line([f32; 4]),
    Quad([f32; 6]),
    Cubic([f32; 8]),
}

/// Collects outline segments in font units and tracks the tight bounds of the
/// flattened curves.
#[derive(Default)]
pub(crate) struct Outline {
    segs: Vec<Seg>,
    start: (f32, f32),
    cur: (f32, f32),
    min: (f32, f32),
    max: (f32, f32),
    any: bool,
}

const FLATTEN_STEPS: usize = 64;

impl Outline {
    pub(crate) fn new() -> Self {
        Self {
            min: (f32::INFINITY, f32::INFINITY),
            max: (f32::NEG_INFINITY, f32::NEG_INFINITY),
            ..Default::default()
        }
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.segs.is_empty()
    }

    fn touch(&mut self, x: f32, y: f32) {
        self.min.0 = self.min.0.min(x);
        self.min.1 = self.min.1.min(y);
        self.max.0 = self.max.0.max(x);
        self.max.1 = self.max.1.max(y);
        self.any = true;
    }

    fn flatten_quad(&mut self, p0: (f32, f32), c: (f32, f32), p1: (f32, f32)) {
        for i in 1..FLATTEN_STEPS {
            let t = i as f32 / FLATTEN_STEPS as f32;
            let u = 1.0 - t;
            let x = u * u * p0.0 + 2.0 * u * t * c.0 + t * t * p1.0;
            let y = u * u * p0.1 + 2.0 * u * t * c.1 + t * t * p1.1;
            self.touch(x, y);
        }
    }

    fn flatten_cubic(&mut self, p0: (f32, f32), c0: (f32, f32), c1: (f32, f32), p1: (f32, f32)) {
        for i in 1..FLATTEN_STEPS {
            let t = i as f32 / FLATTEN_STEPS as f32;
            let u = 1.0 - t;
            let x = u * u * u * p0.0
                + 3.0 * u * u * t * c0.0
                + 3.0 * u * t * t * c1.0
                + t * t * t * p1.0;
            let y = u * u * u * p0.1
                + 3.0 * u * u * t * c0.1
                + 3.0 * u * t * t * c1.1
                + t * t * t * p1.1;
            self.touch(x, y);
        }
    }

    /// Rasterize into a `size x size` image: white background, dark ink.
    /// Returns None when the outline has no area.
    pub(crate) fn render(&self, size: usize, margin: usize) -> Option<ImageBuf> {
        if !self.any || self.segs.is_empty() {
            return None;
        }
        let (w_units, h_units) = (self.max.0 - self.min.0, self.max.1 - self.min.1);
        if w_units <= 0.0 || h_units <= 0.0 {
            return None;
        }
        let inner = size.checked_sub(2 * margin)? as f32;
        if inner <= 0.0 {
            return None;
        }
        let scale = inner / w_units.max(h_units);
        let sw = w_units * scale;
        let sh = h_units * scale;
        // Map font units (y up) to pixel space (y down), centered.
        let x_off = (size as f32 - sw) / 2.0 - self.min.0 * scale;
        let y_off = (size as f32 - sh) / 2.0 + self.max.1 * scale;
        let tx = |x: f32, y: f32| point(x * scale + x_off, y_off - y * scale);

        let mut r = Rasterizer::new(size, size);
        for seg in &self.segs {
            match *seg {
                Seg::Line([x0, y0, x1, y1]) => r.draw_line(tx(x0, y0), tx(x1, y1)),
                Seg::Quad([x0, y0, cx, cy, x1, y1]) => {
                    r.draw_quad(tx(x0, y0), tx(cx, cy), tx(x1, y1))
                }
                Seg::Cubic([x0, y0, ax, ay, bx, by, x1, y1]) => {
                    r.draw_cubic(tx(x0, y0), tx(ax, ay), tx(bx, by), tx(x1, y1))
                }
            }
        }
        let mut img = ImageBuf::new(size, size, 1.0);
        let data = img.data_mut();
        r.for_each_pixel(|idx, coverage| {
            data[idx] = 1.0 - coverage.clamp(0.0, 1.0);
        });
        Some(img)
    }
}

impl ttf_parser::OutlineBuilder for Outline {
    fn move_to(&mut self, x: f32, y: f32) {
        self.start = (x, y);
        self.cur = (x, y);
        self.touch(x, y);
    }

    fn line_to(&mut self, x: f32, y: f32) {
        self.segs
            .push(Seg::Line([self.cur.0, self.cur.1, x, y]));
        self.cur = (x, y);
        self.touch(x, y);
    }

    fn quad_to(&mut self, x1: f32, y1: f32, x: f32, y: f32) {
        self.segs
            .push(Seg::Quad([self.cur.0, self.cur.1, x1, y1, x, y]));
        self.flatten_quad(self.cur, (x1, y1), (x, y));
        self.cur = (x, y);
        self.touch(x, y);
    }

    fn curve_to(&mut self, x1: f32, y1: f32, x2: f32, y2: f32, x: f32, y: f32) {
        self.segs.push(Seg::Cubic([
            self.cur.0, self.cur.1, x1, y1, x2, y2, x, y,
        ]));
        self.flatten_cubic(self.cur, (x1, y1), (x2, y2), (x, y));
        self.cur = (x, y);
        self.touch(x, y);
    }

    fn close(&mut self) {
        if self.cur != self.start {
            self.segs.push(Seg::Line([
                self.cur.0, self.cur.1, self.start.0, self.start.1,
            ]));
        }
        self.cur = self.start;
    }
}
