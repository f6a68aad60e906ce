//! Preprocessing kernels: CLAHE, Gaussian blur, Gaussian adaptive threshold,
//! Sobel edge magnitude, nearest-neighbour upscaling and border padding.
//!
//! All kernels extend borders by replication and produce 8-bit output rounded
//! half up.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::GrayImage;

#[derive(Debug, Error, PartialEq)]
pub enum ImagingError {
    #[error("tile grid {tiles_x}x{tiles_y} does not fit a {width}x{height} image")]
    TileConfig {
        tiles_x: u32,
        tiles_y: u32,
        width: u32,
        height: u32,
    },
    #[error("kernel error: {0}")]
    Kernel(String),
    #[error("upscale factor must be at least 1")]
    InvalidFactor,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
}

/// Frame-level processing stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Clahe,
    Blur,
    Threshold,
    Sobel,
}

/// Pad / scale / CLAHE settings for one class of ROI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnhanceProfile {
    pub pad: u32,
    pub scale: u32,
    pub clahe_clip: f64,
}

impl EnhanceProfile {
    /// Latitude / longitude fields.
    pub const COORDINATE: Self = Self {
        pad: 15,
        scale: 6,
        clahe_clip: 3.0,
    };
    /// Altitude, battery, speeds and other auxiliary fields.
    pub const AUXILIARY: Self = Self {
        pad: 5,
        scale: 2,
        clahe_clip: 1.5,
    };
}

/// Text polarity handling before ROI thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    /// Decide per crop: glyphs brighter than the boundary ring are inverted.
    #[default]
    Auto,
    /// Glyphs are darker than the background; never invert.
    Dark,
    /// Glyphs are brighter than the background; always invert.
    Bright,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessParams {
    pub clahe_clip: f64,
    pub clahe_tiles: [u32; 2],
    pub blur_kernel: u32,
    pub threshold_block: u32,
    pub threshold_bias: f64,
    pub stages: Vec<Stage>,
    pub coordinate_roi: EnhanceProfile,
    pub auxiliary_roi: EnhanceProfile,
    pub polarity: Polarity,
}

impl Default for PreprocessParams {
    fn default() -> Self {
        Self {
            clahe_clip: 3.0,
            clahe_tiles: [8, 8],
            blur_kernel: 5,
            threshold_block: 19,
            threshold_bias: 2.0,
            stages: vec![Stage::Clahe, Stage::Blur, Stage::Threshold],
            coordinate_roi: EnhanceProfile::COORDINATE,
            auxiliary_roi: EnhanceProfile::AUXILIARY,
            polarity: Polarity::Auto,
        }
    }
}

impl PreprocessParams {
    pub fn validate(&self) -> Result<(), ImagingError> {
        for (name, clip) in [
            ("clahe_clip", self.clahe_clip),
            ("coordinate_roi.clahe_clip", self.coordinate_roi.clahe_clip),
            ("auxiliary_roi.clahe_clip", self.auxiliary_roi.clahe_clip),
        ] {
            if !(clip >= 1.0) {
                return Err(ImagingError::InvalidParam(format!("{name} must be >= 1.0")));
            }
        }
        if self.clahe_tiles.contains(&0) {
            return Err(ImagingError::InvalidParam("clahe_tiles must be >= 1x1".into()));
        }
        if self.blur_kernel.is_multiple_of(2) {
            return Err(ImagingError::Kernel(format!(
                "blur kernel must be odd, got {}",
                self.blur_kernel
            )));
        }
        if self.threshold_block < 3 || self.threshold_block.is_multiple_of(2) {
            return Err(ImagingError::Kernel(format!(
                "threshold block must be odd and >= 3, got {}",
                self.threshold_block
            )));
        }
        if self.coordinate_roi.scale == 0 || self.auxiliary_roi.scale == 0 {
            return Err(ImagingError::InvalidFactor);
        }
        Ok(())
    }
}

/// Runs the enabled frame-level stages in order.
pub fn preprocess_frame(img: &GrayImage, params: &PreprocessParams) -> Result<GrayImage, ImagingError> {
    let mut out = img.clone();
    for stage in &params.stages {
        out = match stage {
            Stage::Clahe => {
                let (tiles, _) = fit_tiles(params.clahe_tiles, &out);
                clahe(&out, params.clahe_clip, tiles)?
            }
            Stage::Blur => gaussian_blur(&out, params.blur_kernel)?,
            Stage::Threshold => adaptive_threshold(&out, params.threshold_block, params.threshold_bias)?,
            Stage::Sobel => sobel_xy(&out)?,
        };
    }
    Ok(out)
}

#[inline]
fn round_u8(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Shrinks a tile grid so that every tile holds at least one pixel per axis.
/// The flag reports whether clamping happened.
pub fn fit_tiles(tiles: [u32; 2], img: &GrayImage) -> ([u32; 2], bool) {
    let fitted = [
        tiles[0].clamp(1, img.width()),
        tiles[1].clamp(1, img.height()),
    ];
    (fitted, fitted != tiles)
}

/// Half-open pixel range `[start, end)` of tile `i` out of `n` along an axis of `len`.
fn tile_span(i: u32, n: u32, len: u32) -> (u32, u32) {
    let start = (i as u64 * len as u64 / n as u64) as u32;
    let end = ((i as u64 + 1) * len as u64 / n as u64) as u32;
    (start, end)
}

/// Equalisation lookup for one tile histogram.
///
/// Bins are clipped at `clip · n / 256`; the clipped mass is spread evenly over
/// all 256 bins in a single pass.
pub fn clipped_equalization_lut(hist: &[u32; 256], clip: f64) -> [u8; 256] {
    let n: u64 = hist.iter().map(|&h| h as u64).sum();
    let mut lut = [0u8; 256];
    if n == 0 {
        return lut;
    }
    let limit = clip * n as f64 / 256.0;
    let mut excess = 0.0;
    let mut clipped = [0.0f64; 256];
    for (c, &h) in clipped.iter_mut().zip(hist.iter()) {
        let h = h as f64;
        if h > limit {
            excess += h - limit;
            *c = limit;
        } else {
            *c = h;
        }
    }
    let bonus = excess / 256.0;
    let mut cdf = 0.0;
    for (v, out) in lut.iter_mut().enumerate() {
        cdf += clipped[v] + bonus;
        *out = round_u8(cdf * 255.0 / n as f64);
    }
    lut
}

/// Contrast-limited adaptive histogram equalisation.
///
/// `tiles` is `[columns, rows]`. Each output pixel blends the lookups of the
/// four nearest tile centres bilinearly; pixels outside the outermost centres
/// use the edge tiles only.
pub fn clahe(img: &GrayImage, clip: f64, tiles: [u32; 2]) -> Result<GrayImage, ImagingError> {
    let [tx, ty] = tiles;
    let (w, h) = (img.width(), img.height());
    if tx == 0 || ty == 0 || tx > w || ty > h {
        return Err(ImagingError::TileConfig {
            tiles_x: tx,
            tiles_y: ty,
            width: w,
            height: h,
        });
    }
    if !(clip >= 1.0) {
        return Err(ImagingError::InvalidParam(format!("clip limit must be >= 1.0, got {clip}")));
    }

    let xs: Vec<(u32, u32)> = (0..tx).map(|i| tile_span(i, tx, w)).collect();
    let ys: Vec<(u32, u32)> = (0..ty).map(|j| tile_span(j, ty, h)).collect();

    let mut luts = Vec::with_capacity((tx * ty) as usize);
    for &(y0, y1) in &ys {
        for &(x0, x1) in &xs {
            let mut hist = [0u32; 256];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[img.get(x, y) as usize] += 1;
                }
            }
            luts.push(clipped_equalization_lut(&hist, clip));
        }
    }

    let centers = |spans: &[(u32, u32)]| -> Vec<f64> {
        spans.iter().map(|&(s, e)| (s + e - 1) as f64 / 2.0).collect()
    };
    let cx = centers(&xs);
    let cy = centers(&ys);
    let lerp_axis = |centers: &[f64], p: u32| -> (usize, usize, f64) {
        let p = p as f64;
        let last = centers.len() - 1;
        if p <= centers[0] {
            return (0, 0, 0.0);
        }
        if p >= centers[last] {
            return (last, last, 0.0);
        }
        let i = centers.partition_point(|&c| c <= p) - 1;
        let t = (p - centers[i]) / (centers[i + 1] - centers[i]);
        (i, i + 1, t)
    };
    let xw: Vec<_> = (0..w).map(|x| lerp_axis(&cx, x)).collect();

    let mut out = GrayImage::filled(w, h, 0);
    for y in 0..h {
        let (j0, j1, fy) = lerp_axis(&cy, y);
        for x in 0..w {
            let (i0, i1, fx) = xw[x as usize];
            let v = img.get(x, y) as usize;
            let l = |i: usize, j: usize| luts[j * tx as usize + i][v] as f64;
            let top = l(i0, j0) * (1.0 - fx) + l(i1, j0) * fx;
            let bottom = l(i0, j1) * (1.0 - fx) + l(i1, j1) * fx;
            out.set(x, y, round_u8(top * (1.0 - fy) + bottom * fy));
        }
    }
    Ok(out)
}

/// σ used for a `kernel`-tap Gaussian: `0.3·((k−1)·0.5 − 1) + 0.8`.
pub fn gaussian_sigma(kernel: u32) -> f64 {
    0.3 * ((kernel as f64 - 1.0) * 0.5 - 1.0) + 0.8
}

/// Normalised 1-D Gaussian weights of odd length `kernel`.
pub fn gaussian_kernel(kernel: u32) -> Result<Vec<f64>, ImagingError> {
    if kernel == 0 || kernel.is_multiple_of(2) {
        return Err(ImagingError::Kernel(format!("kernel size must be odd, got {kernel}")));
    }
    let sigma = gaussian_sigma(kernel);
    let r = (kernel / 2) as f64;
    let raw: Vec<f64> = (0..kernel)
        .map(|i| {
            let d = i as f64 - r;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|v| v / sum).collect())
}

/// Separable Gaussian filter with replicate borders, unrounded.
fn gaussian_filter(img: &GrayImage, kernel: u32) -> Result<Vec<f64>, ImagingError> {
    let weights = gaussian_kernel(kernel)?;
    let r = (kernel / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let mut horiz = vec![0.0f64; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wt) in weights.iter().enumerate() {
                acc += wt * img.get_clamped(x + k as i64 - r, y) as f64;
            }
            horiz[(y * w + x) as usize] = acc;
        }
    }
    let mut out = vec![0.0f64; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wt) in weights.iter().enumerate() {
                let yy = (y + k as i64 - r).clamp(0, h - 1);
                acc += wt * horiz[(yy * w + x) as usize];
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    Ok(out)
}

pub fn gaussian_blur(img: &GrayImage, kernel: u32) -> Result<GrayImage, ImagingError> {
    let filtered = gaussian_filter(img, kernel)?;
    let pixels = filtered.into_iter().map(round_u8).collect();
    Ok(GrayImage::from_raw(img.width(), img.height(), pixels).expect("same dimensions"))
}

/// Binarises against the Gaussian-weighted local mean:
/// `255` where `src > mean − bias`, else `0`.
pub fn adaptive_threshold(img: &GrayImage, block: u32, bias: f64) -> Result<GrayImage, ImagingError> {
    if block < 3 || block.is_multiple_of(2) {
        return Err(ImagingError::Kernel(format!(
            "threshold block must be odd and >= 3, got {block}"
        )));
    }
    let mean = gaussian_filter(img, block)?;
    let pixels = img
        .pixels()
        .iter()
        .zip(mean)
        .map(|(&src, mu)| if src as f64 > mu - bias { 255 } else { 0 })
        .collect();
    Ok(GrayImage::from_raw(img.width(), img.height(), pixels).expect("same dimensions"))
}

/// `min(255, |gx| + |gy|)` with the 3×3 Sobel operators.
pub fn sobel_xy(img: &GrayImage) -> Result<GrayImage, ImagingError> {
    if img.width() < 3 || img.height() < 3 {
        return Err(ImagingError::Kernel(format!(
            "sobel needs at least 3x3 pixels, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    let out = GrayImage::from_fn(img.width(), img.height(), |x, y| {
        let p = |dx: i64, dy: i64| img.get_clamped(x as i64 + dx, y as i64 + dy) as i32;
        let gx = (p(1, -1) + 2 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2 * p(-1, 0) + p(-1, 1));
        let gy = (p(-1, 1) + 2 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2 * p(0, -1) + p(1, -1));
        (gx.abs() + gy.abs()).min(255) as u8
    });
    Ok(out)
}

/// Nearest-neighbour block replication.
pub fn upscale(img: &GrayImage, factor: u32) -> Result<GrayImage, ImagingError> {
    if factor == 0 {
        return Err(ImagingError::InvalidFactor);
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    Ok(GrayImage::from_fn(img.width() * factor, img.height() * factor, |x, y| {
        img.get(x / factor, y / factor)
    }))
}

/// Fill value for [`pad_border`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadFill {
    Value(u8),
    /// Median of the image's one-pixel boundary ring (lower median for even counts).
    Auto,
}

pub fn border_median(img: &GrayImage) -> u8 {
    let mut ring = img.border_ring();
    ring.sort_unstable();
    ring[(ring.len() - 1) / 2]
}

pub fn pad_border(img: &GrayImage, px: u32, fill: PadFill) -> GrayImage {
    if px == 0 {
        return img.clone();
    }
    let value = match fill {
        PadFill::Value(v) => v,
        PadFill::Auto => border_median(img),
    };
    GrayImage::from_fn(img.width() + 2 * px, img.height() + 2 * px, |x, y| {
        if x < px || y < px || x >= img.width() + px || y >= img.height() + px {
            value
        } else {
            img.get(x - px, y - px)
        }
    })
}

pub fn invert(img: &GrayImage) -> GrayImage {
    let pixels = img.pixels().iter().map(|&p| 255 - p).collect();
    GrayImage::from_raw(img.width(), img.height(), pixels).expect("same dimensions")
}
