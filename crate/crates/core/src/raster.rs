//! 8-bit grayscale raster shared by every image operation.

use std::io::Cursor;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDimensions { width: u32, height: u32 },
    #[error("pixel buffer holds {actual} bytes, expected {expected}")]
    BufferSize { expected: usize, actual: usize },
}

/// Row-major 8-bit grayscale image.
#[derive(Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    /// Creates an image filled with `value`.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        assert!(width >= 1 && height >= 1, "image dimensions must be non-zero");
        Self {
            width,
            height,
            pixels: vec![value; width as usize * height as usize],
        }
    }

    pub fn from_raw(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyDimensions { width, height });
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(RasterError::BufferSize {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut img = Self::filled(width, height, 0);
        for y in 0..height {
            for x in 0..width {
                img.pixels[(y * width + x) as usize] = f(x, y);
            }
        }
        img
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.pixels[(y * self.width + x) as usize] = value;
    }

    /// Pixel lookup with replicate border extension.
    #[inline]
    pub fn get_clamped(&self, x: i64, y: i64) -> u8 {
        let cx = x.clamp(0, self.width as i64 - 1) as u32;
        let cy = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(cx, cy)
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.height, self.width, |x, y| self.get(y, x))
    }

    /// Copies the `w`×`h` block at (`x`, `y`). Returns `None` when it leaves the image.
    pub fn sub_image(&self, x: u32, y: u32, w: u32, h: u32) -> Option<Self> {
        if w == 0 || h == 0 {
            return None;
        }
        let x_end = x.checked_add(w)?;
        let y_end = y.checked_add(h)?;
        if x_end > self.width || y_end > self.height {
            return None;
        }
        let mut pixels = Vec::with_capacity(w as usize * h as usize);
        for row in y..y_end {
            let start = (row * self.width + x) as usize;
            pixels.extend_from_slice(&self.pixels[start..start + w as usize]);
        }
        Some(Self {
            width: w,
            height: h,
            pixels,
        })
    }

    /// Pixels of the one-pixel boundary ring, each pixel once.
    pub fn border_ring(&self) -> Vec<u8> {
        let (w, h) = (self.width, self.height);
        if w <= 2 || h <= 2 {
            return self.pixels.clone();
        }
        let mut ring = Vec::with_capacity(2 * (w + h) as usize);
        for x in 0..w {
            ring.push(self.get(x, 0));
            ring.push(self.get(x, h - 1));
        }
        for y in 1..h - 1 {
            ring.push(self.get(0, y));
            ring.push(self.get(w - 1, y));
        }
        ring
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().map(|&p| p as f64).sum::<f64>() / self.pixels.len() as f64
    }

    /// Encodes as PNG (8-bit gray).
    pub fn to_png(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let buf = image::GrayImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer size checked at construction");
        buf.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
            .expect("in-memory PNG encoding does not fail");
        out
    }
}

/// BT.601 luma with integer coefficients, rounded half up.
#[inline]
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * r as u32 + 587 * g as u32 + 114 * b as u32 + 500) / 1000) as u8
}
