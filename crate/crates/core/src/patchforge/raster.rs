//! Float RGB rasters and the geometric resampling steps of the patch pipeline.

use super::source::SourceImage;

/// Channel-last RGB raster with intensities on the 0..=255 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

/// Axis-aligned integer box inside an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Raster {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    #[inline]
    fn idx(&self, y: usize, x: usize) -> usize {
        (y * self.width + x) * 3
    }

    pub fn flip_vertical(&mut self) {
        let row = self.width * 3;
        for y in 0..self.height / 2 {
            let (a, b) = self.data.split_at_mut((self.height - 1 - y) * row);
            a[y * row..(y + 1) * row].swap_with_slice(&mut b[..row]);
        }
    }

    pub fn flip_horizontal(&mut self) {
        for y in 0..self.height {
            for x in 0..self.width / 2 {
                let (i, j) = (self.idx(y, x), self.idx(y, self.width - 1 - x));
                for c in 0..3 {
                    self.data.swap(i + c, j + c);
                }
            }
        }
    }

    /// Crop a `size`x`size` square from the center. Odd margins round half
    /// away from zero.
    pub fn center_crop(&self, size: usize) -> Raster {
        assert!(size <= self.height && size <= self.width, "center crop larger than raster");
        let top = ((self.height - size) as f64 / 2.0).round() as usize;
        let left = ((self.width - size) as f64 / 2.0).round() as usize;
        let mut out = Raster::zeros(size, size);
        for y in 0..size {
            let src = self.idx(top + y, left);
            let dst = out.idx(y, 0);
            out.data[dst..dst + size * 3].copy_from_slice(&self.data[src..src + size * 3]);
        }
        out
    }

    /// Round and clamp to 8-bit.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect()
    }

    /// Bilinear sample at continuous pixel-index coordinates with reflection
    /// at the borders.
    #[inline]
    pub fn sample_reflect(&self, y: f64, x: f64, out: &mut [f32; 3]) {
        let y = reflect_coord(y, self.height);
        let x = reflect_coord(x, self.width);
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let y1 = (y0 + 1).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let fy = (y - y0 as f64) as f32;
        let fx = (x - x0 as f64) as f32;
        let (a, b, c, d) = (self.idx(y0, x0), self.idx(y0, x1), self.idx(y1, x0), self.idx(y1, x1));
        for ch in 0..3 {
            let top = self.data[a + ch] * (1.0 - fx) + self.data[b + ch] * fx;
            let bot = self.data[c + ch] * (1.0 - fx) + self.data[d + ch] * fx;
            out[ch] = top * (1.0 - fy) + bot * fy;
        }
    }
}

/// Mirror a continuous index into `[0, n-1]` (reflection without edge repeat).
pub fn reflect_coord(t: f64, n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let max = (n - 1) as f64;
    let period = 2.0 * max;
    let mut r = t.rem_euclid(period);
    if r > max {
        r = period - r;
    }
    r.clamp(0.0, max)
}

/// Separable triangle-filter weights mapping `in_len` samples onto `out_len`.
/// Upsampling reduces to plain bilinear interpolation; downsampling widens the
/// kernel by the scale factor so the result is antialiased.
fn filter_taps(in_len: usize, out_len: usize) -> Vec<(usize, Vec<f32>)> {
    let scale = in_len as f64 / out_len as f64;
    let filter_scale = scale.max(1.0);
    let support = filter_scale;
    (0..out_len)
        .map(|i| {
            let center = (i as f64 + 0.5) * scale;
            let lo = ((center - support + 0.5).floor().max(0.0)) as usize;
            let hi = ((center + support + 0.5).floor() as usize).min(in_len);
            let mut weights: Vec<f64> = (lo..hi)
                .map(|k| {
                    let d = (k as f64 + 0.5 - center) / filter_scale;
                    (1.0 - d.abs()).max(0.0)
                })
                .collect();
            let total: f64 = weights.iter().sum();
            if total > 0.0 {
                weights.iter_mut().for_each(|w| *w /= total);
            } else {
                // Degenerate: nearest sample.
                let k = (center.floor() as usize).min(in_len - 1);
                return (k, vec![1.0]);
            }
            (lo, weights.into_iter().map(|w| w as f32).collect())
        })
        .collect()
}

/// Resize the `region` of `src` to `out_h`x`out_w`.
pub fn resize_region(src: &SourceImage, region: Region, out_h: usize, out_w: usize) -> Raster {
    let taps_x = filter_taps(region.width, out_w);
    let taps_y = filter_taps(region.height, out_h);
    // Horizontal pass over the rows of the region.
    let mut tmp = vec![0f32; region.height * out_w * 3];
    let row_stride = src.width * 3;
    let px = src.pixels();
    for y in 0..region.height {
        let row = &px[(region.top + y) * row_stride..(region.top + y + 1) * row_stride];
        for (ox, (start, weights)) in taps_x.iter().enumerate() {
            let mut acc = [0f32; 3];
            for (k, w) in weights.iter().enumerate() {
                let base = (region.left + start + k) * 3;
                acc[0] += w * row[base] as f32;
                acc[1] += w * row[base + 1] as f32;
                acc[2] += w * row[base + 2] as f32;
            }
            let o = (y * out_w + ox) * 3;
            tmp[o..o + 3].copy_from_slice(&acc);
        }
    }
    let mut out = Raster::zeros(out_h, out_w);
    for (oy, (start, weights)) in taps_y.iter().enumerate() {
        for ox in 0..out_w {
            let mut acc = [0f32; 3];
            for (k, w) in weights.iter().enumerate() {
                let base = ((start + k) * out_w + ox) * 3;
                acc[0] += w * tmp[base];
                acc[1] += w * tmp[base + 1];
                acc[2] += w * tmp[base + 2];
            }
            let o = (oy * out_w + ox) * 3;
            out.data[o..o + 3].copy_from_slice(&acc);
        }
    }
    out
}

/// Rotate by `angle_deg` and shear along x by `shear_deg` about the raster
/// center. Output has the input's size; uncovered areas are filled by
/// reflection.
pub fn affine(src: &Raster, angle_deg: f64, shear_deg: f64) -> Raster {
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let t = shear_deg.to_radians().tan();
    // Forward map A = R * Sh with Sh = [[1, t], [0, 1]].
    let a = [[cos, cos * t - sin], [sin, sin * t + cos]];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let inv = [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ];
    let cx = src.width as f64 / 2.0;
    let cy = src.height as f64 / 2.0;
    let mut out = Raster::zeros(src.height, src.width);
    let mut px = [0f32; 3];
    for y in 0..src.height {
        let dy = y as f64 + 0.5 - cy;
        for x in 0..src.width {
            let dx = x as f64 + 0.5 - cx;
            let sx = inv[0][0] * dx + inv[0][1] * dy + cx - 0.5;
            let sy = inv[1][0] * dx + inv[1][1] * dy + cy - 0.5;
            src.sample_reflect(sy, sx, &mut px);
            let o = (y * src.width + x) * 3;
            out.data[o..o + 3].copy_from_slice(&px);
        }
    }
    out
}
