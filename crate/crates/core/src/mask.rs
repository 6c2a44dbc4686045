//! Distractor masks: box-seeded region growing, frame-to-frame tracking and
//! pixel zeroing.

use std::collections::VecDeque;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::BBox;
use crate::world::{Image, Rgb, BACKGROUND};

/// Pixels searched around a region when tracking it into the next frame.
pub const SEARCH_RADIUS: usize = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MaskError {
    #[error("box {0:?} lies outside the image")]
    BoxOutOfBounds(BBox),
    #[error("mask is {mask:?} but image is {image:?}")]
    DimensionMismatch { mask: (usize, usize), image: (usize, usize) },
}

/// One tracked masked region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    /// Sprite color being tracked; `None` for a whole-box fallback.
    pub color: Option<Rgb>,
    /// Raster-ordered `(u, v)` pixels.
    pub pixels: Vec<(usize, usize)>,
}

impl Region {
    fn bounds(&self) -> Option<[usize; 4]> {
        let first = self.pixels.first()?;
        Some(self.pixels.iter().fold([first.0, first.1, first.0, first.1], |b, &(u, v)| {
            [b[0].min(u), b[1].min(v), b[2].max(u), b[3].max(v)]
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    /// Row-major 0/1 cells.
    pub grid: Vec<u8>,
    /// Step of the last update.
    pub epoch: u64,
    pub regions: Vec<Region>,
}

impl Mask {
    pub fn empty(width: usize, height: usize, epoch: u64) -> Self {
        Self { width, height, grid: vec![0; width * height], epoch, regions: Vec::new() }
    }

    fn from_regions(width: usize, height: usize, epoch: u64, regions: Vec<Region>) -> Self {
        let mut m = Self::empty(width, height, epoch);
        for r in &regions {
            for &(u, v) in &r.pixels {
                m.grid[v * width + u] = 1;
            }
        }
        m.regions = regions;
        m
    }

    pub fn get(&self, u: usize, v: usize) -> bool {
        self.grid[v * self.width + u] == 1
    }

    pub fn count(&self) -> usize {
        self.grid.iter().filter(|&&c| c == 1).count()
    }

    /// Binary PBM (P4); masked cells are black.
    pub fn write_pbm<W: Write>(&self, mut out: W) -> io::Result<()> {
        write!(out, "P4\n{} {}\n", self.width, self.height)?;
        let row_bytes = self.width.div_ceil(8);
        for v in 0..self.height {
            let mut row = vec![0u8; row_bytes];
            for u in 0..self.width {
                if self.get(u, v) {
                    row[u / 8] |= 0x80 >> (u % 8);
                }
            }
            out.write_all(&row)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilteredObservation {
    pub image: Image,
    pub source_mask_epoch: u64,
}

/// Same-color 4-connected fill from `seed`, restricted to the inclusive
/// rectangle `clip = [u0, v0, u1, v1]`.
fn flood(image: &Image, seed: (usize, usize), color: Rgb, clip: [usize; 4]) -> Vec<(usize, usize)> {
    let inside = |u: usize, v: usize| u >= clip[0] && u <= clip[2] && v >= clip[1] && v <= clip[3];
    if !inside(seed.0, seed.1) || image.get(seed.0, seed.1) != color {
        return Vec::new();
    }
    let cw = clip[2] - clip[0] + 1;
    let mut seen = vec![false; cw * (clip[3] - clip[1] + 1)];
    let idx = |u: usize, v: usize| (v - clip[1]) * cw + (u - clip[0]);
    let mut out = Vec::new();
    let mut queue = VecDeque::from([seed]);
    seen[idx(seed.0, seed.1)] = true;
    while let Some((u, v)) = queue.pop_front() {
        out.push((u, v));
        let mut next = Vec::with_capacity(4);
        if u > clip[0] {
            next.push((u - 1, v));
        }
        if u < clip[2] {
            next.push((u + 1, v));
        }
        if v > clip[1] {
            next.push((u, v - 1));
        }
        if v < clip[3] {
            next.push((u, v + 1));
        }
        for (uu, vv) in next {
            if !seen[idx(uu, vv)] && image.get(uu, vv) == color {
                seen[idx(uu, vv)] = true;
                queue.push_back((uu, vv));
            }
        }
    }
    out.sort_by_key(|&(u, v)| (v, u));
    out
}

/// Mask every distractor box: the sprite under the box center, or the whole
/// box when the center shows bare table.
pub fn segment_init(image: &Image, boxes: &[BBox], epoch: u64) -> Result<Mask, MaskError> {
    let mut regions = Vec::with_capacity(boxes.len());
    for b in boxes {
        if !b.is_valid(image.width, image.height) {
            return Err(MaskError::BoxOutOfBounds(*b));
        }
        let clip = [b.x_min as usize, b.y_min as usize, b.x_max as usize - 1, b.y_max as usize - 1];
        let seed = b.center();
        let color = image.get(seed.0, seed.1);
        regions.push(if color == BACKGROUND {
            let pixels = (clip[1]..=clip[3]).flat_map(|v| (clip[0]..=clip[2]).map(move |u| (u, v))).collect();
            Region { color: None, pixels }
        } else {
            Region { color: Some(color), pixels: flood(image, seed, color, clip) }
        });
    }
    Ok(Mask::from_regions(image.width, image.height, epoch, regions))
}

pub fn propagate(image: &Image, prev: &Mask, epoch: u64) -> Mask {
    propagate_with_radius(image, prev, SEARCH_RADIUS, epoch)
}

/// Track each region into `image`. A region whose color no longer appears
/// near it is dropped.
pub fn propagate_with_radius(image: &Image, prev: &Mask, radius: usize, epoch: u64) -> Mask {
    let (w, h) = (image.width, image.height);
    let mut regions = Vec::with_capacity(prev.regions.len());
    for r in &prev.regions {
        let Some(color) = r.color else {
            regions.push(r.clone());
            continue;
        };
        let Some(b) = r.bounds() else { continue };
        if let Some(shifted) = exact_shift(image, r, color, b, radius) {
            regions.push(Region { color: Some(color), pixels: shifted });
            continue;
        }
        let window = [
            b[0].saturating_sub(radius),
            b[1].saturating_sub(radius),
            (b[2] + radius).min(w - 1),
            (b[3] + radius).min(h - 1),
        ];
        let n = r.pixels.len() as f64;
        let cu = r.pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let cv = r.pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
        let seed = (window[1]..=window[3])
            .flat_map(|v| (window[0]..=window[2]).map(move |u| (u, v)))
            .filter(|&(u, v)| image.get(u, v) == color)
            .min_by(|a, b| {
                let da = (a.0 as f64 - cu).powi(2) + (a.1 as f64 - cv).powi(2);
                let db = (b.0 as f64 - cu).powi(2) + (b.1 as f64 - cv).powi(2);
                da.total_cmp(&db)
            });
        if let Some(seed) = seed {
            regions.push(Region { color: Some(color), pixels: flood(image, seed, color, window) });
        }
    }
    Mask::from_regions(w, h, epoch, regions)
}

/// The region moved rigidly by at most `radius` in each axis and still shows
/// exactly its own color over its own footprint.
fn exact_shift(image: &Image, r: &Region, color: Rgb, b: [usize; 4], radius: usize) -> Option<Vec<(usize, usize)>> {
    let radius = radius as i64;
    let mut shifts: Vec<(i64, i64)> =
        (-radius..=radius).flat_map(|dv| (-radius..=radius).map(move |du| (du, dv))).collect();
    shifts.sort_by_key(|&(du, dv)| (du.abs() + dv.abs(), dv, du));
    for (du, dv) in shifts {
        let moved = |u: usize, v: usize| {
            let (uu, vv) = (u as i64 + du, v as i64 + dv);
            (uu >= 0 && vv >= 0 && (uu as usize) < image.width && (vv as usize) < image.height)
                .then_some((uu as usize, vv as usize))
        };
        if !r.pixels.iter().all(|&(u, v)| moved(u, v).is_some_and(|(a, c)| image.get(a, c) == color)) {
            continue;
        }
        let (Some(lo), Some(hi)) = (moved(b[0], b[1]), moved(b[2], b[3])) else { continue };
        let (su, sv) = moved(r.pixels[0].0, r.pixels[0].1)?;
        let grown = flood(image, (su, sv), color, [lo.0, lo.1, hi.0, hi.1]);
        if grown.len() == r.pixels.len() {
            return Some(grown);
        }
    }
    None
}

/// Zero every masked pixel; every other pixel is copied unchanged.
pub fn apply_filter(image: &Image, mask: &Mask) -> Result<FilteredObservation, MaskError> {
    if (image.width, image.height) != (mask.width, mask.height) {
        return Err(MaskError::DimensionMismatch {
            mask: (mask.width, mask.height),
            image: (image.width, image.height),
        });
    }
    let mut out = image.clone();
    for (i, &m) in mask.grid.iter().enumerate() {
        if m == 1 {
            out.data[i * 3..i * 3 + 3].fill(0);
        }
    }
    Ok(FilteredObservation { image: out, source_mask_epoch: mask.epoch })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn canvas() -> Image {
        Image::filled(8, 8, BACKGROUND)
    }

    fn square(img: &mut Image, u0: usize, v0: usize, n: usize, c: Rgb) {
        for v in v0..v0 + n {
            for u in u0..u0 + n {
                img.set(u, v, c);
            }
        }
    }

    #[test]
    fn no_boxes_no_mask() {
        let m = segment_init(&canvas(), &[], 0).unwrap();
        assert_eq!(m.count(), 0);
    }

    #[test]
    fn background_seed_masks_box() {
        let m = segment_init(&canvas(), &[BBox::new(1, 1, 4, 3)], 0).unwrap();
        assert_eq!(m.count(), 6);
    }

    #[test]
    fn out_of_bounds_box() {
        let b = BBox::new(5, 5, 9, 7);
        assert_eq!(segment_init(&canvas(), &[b], 0).unwrap_err(), MaskError::BoxOutOfBounds(b));
    }

    #[test]
    fn translation_is_tracked() {
        let c = [200, 10, 10];
        let mut a = canvas();
        square(&mut a, 1, 1, 3, c);
        let m = segment_init(&a, &[BBox::new(0, 0, 5, 5)], 0).unwrap();
        let mut b = canvas();
        square(&mut b, 3, 1, 3, c);
        let m2 = propagate(&b, &m, 1);
        let expect = segment_init(&b, &[BBox::new(3, 1, 6, 4)], 1).unwrap();
        assert_eq!(m2.grid, expect.grid);
    }

    #[test]
    fn vanished_region_dropped() {
        let mut a = canvas();
        square(&mut a, 1, 1, 3, [200, 10, 10]);
        let m = segment_init(&a, &[BBox::new(0, 0, 5, 5)], 0).unwrap();
        assert_eq!(propagate(&canvas(), &m, 1).count(), 0);
    }

    #[test]
    fn pbm_layout() {
        let mut m = Mask::empty(9, 1, 0);
        m.grid[0] = 1;
        m.grid[8] = 1;
        let mut buf = Vec::new();
        m.write_pbm(&mut buf).unwrap();
        assert_eq!(buf, b"P4\n9 1\n\x80\x80".to_vec());
    }

    #[test]
    fn dimension_mismatch() {
        let m = Mask::empty(4, 4, 0);
        assert!(matches!(apply_filter(&canvas(), &m), Err(MaskError::DimensionMismatch { .. })));
    }
}
