//! Minimal PNG renderings: bar histograms, heatmaps and scatter plots.
//! Axes are unlabeled; the numbers live in the accompanying tables.

use std::path::Path;

use image::{Rgb, RgbImage};

use super::hist::Histogram;
use crate::error::{Error, Result};

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const MARGIN: u32 = 20;

/// Distinct colors for series / classes.
pub fn palette(i: usize) -> Rgb<u8> {
    const P: [[u8; 3]; 10] = [
        [31, 119, 180],
        [255, 127, 14],
        [44, 160, 44],
        [214, 39, 40],
        [148, 103, 189],
        [140, 86, 75],
        [227, 119, 194],
        [127, 127, 127],
        [188, 189, 34],
        [23, 190, 207],
    ];
    Rgb(P[i % P.len()])
}

fn canvas(w: u32, h: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(w, h, BG);
    for x in MARGIN..w - MARGIN {
        img.put_pixel(x, h - MARGIN, AXIS);
    }
    for y in MARGIN..=h - MARGIN {
        img.put_pixel(MARGIN, y, AXIS);
    }
    img
}

fn save(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    img.save(path)?;
    Ok(())
}

/// Overlaid outline histograms, each normalized to its own total.
pub fn render_histograms(series: &[&Histogram], path: &Path) -> Result<()> {
    let (w, h) = (640u32, 400u32);
    let mut img = canvas(w, h);
    let pw = (w - 2 * MARGIN) as f64;
    let ph = (h - 2 * MARGIN - 1) as f64;
    let peak = series
        .iter()
        .flat_map(|s| s.counts.iter().map(move |&c| c as f64 / s.total().max(1) as f64))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for (k, s) in series.iter().enumerate() {
        let color = palette(k);
        let total = s.total().max(1) as f64;
        let bins = s.bins();
        let mut prev_y: Option<u32> = None;
        for (b, &c) in s.counts.iter().enumerate() {
            let x0 = MARGIN + 1 + (pw * b as f64 / bins as f64) as u32;
            let x1 = MARGIN + 1 + (pw * (b + 1) as f64 / bins as f64) as u32;
            let y = h - MARGIN - 1 - (ph * (c as f64 / total) / peak).round() as u32;
            for x in x0..x1.min(w - MARGIN) {
                img.put_pixel(x, y, color);
            }
            if let Some(py) = prev_y {
                for yy in py.min(y)..=py.max(y) {
                    img.put_pixel(x0.min(w - MARGIN - 1), yy, color);
                }
            }
            prev_y = Some(y);
        }
    }
    save(&img, path)
}

/// Matrix with values in `[0, 1]` drawn as grayscale cells, row 0 at the
/// bottom.
pub fn render_heatmap(matrix: &[Vec<f64>], path: &Path) -> Result<()> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 || matrix.iter().any(|r| r.len() != cols) {
        return Err(Error::precondition("heatmap needs a non-empty rectangular matrix"));
    }
    let cell = (480 / rows.max(cols)).max(4) as u32;
    let mut img = RgbImage::from_pixel(cols as u32 * cell, rows as u32 * cell, BG);
    for (r, row) in matrix.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            let g = (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8;
            let y0 = (rows - 1 - r) as u32 * cell;
            for y in y0..y0 + cell {
                for x in c as u32 * cell..(c as u32 + 1) * cell {
                    img.put_pixel(x, y, Rgb([g, g, g]));
                }
            }
        }
    }
    save(&img, path)
}

/// Points colored by group.
pub fn render_scatter(points: &[[f64; 2]], groups: &[usize], path: &Path) -> Result<()> {
    if points.len() != groups.len() {
        return Err(Error::precondition("scatter needs one group per point"));
    }
    let (w, h) = (600u32, 600u32);
    let mut img = canvas(w, h);
    if points.is_empty() {
        return save(&img, path);
    }
    let (mut lx, mut hx, mut ly, mut hy) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        lx = lx.min(p[0]);
        hx = hx.max(p[0]);
        ly = ly.min(p[1]);
        hy = hy.max(p[1]);
    }
    let sx = (hx - lx).max(1e-12);
    let sy = (hy - ly).max(1e-12);
    let span = (w - 2 * MARGIN - 6) as f64;
    for (p, &g) in points.iter().zip(groups) {
        let cx = MARGIN as i64 + 3 + ((p[0] - lx) / sx * span) as i64;
        let cy = (h - MARGIN) as i64 - 3 - ((p[1] - ly) / sy * span) as i64;
        for dy in -1..=1 {
            for dx in -1..=1 {
                img.put_pixel((cx + dx) as u32, (cy + dy) as u32, palette(g));
            }
        }
    }
    save(&img, path)
}
