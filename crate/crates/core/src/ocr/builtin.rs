//! Template-matching recognizer over the embedded font.

use super::font::{self, GLYPH_HEIGHT, GLYPH_WIDTH, RECOGNIZER_CHARSET};
use super::{OcrError, Recognition};
use crate::raster::GrayImage;

const W: usize = GLYPH_WIDTH as usize;
const H: usize = GLYPH_HEIGHT as usize;

/// Pixels darker than this count as ink.
const INK_BELOW: u8 = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct GlyphTemplateSet {
    /// (character, row-major ink mask of `W`×`H`)
    templates: Vec<(char, [bool; W * H])>,
}

impl GlyphTemplateSet {
    /// Templates for the recognizer charset.
    pub fn embedded() -> Self {
        Self::for_chars(RECOGNIZER_CHARSET).expect("charset is covered by the font")
    }

    /// Templates for `chars`; `None` if the font lacks one of them.
    ///
    /// Each template is the glyph cropped to its inked columns (all 7 rows)
    /// and stretched back to 5×7, mirroring how segments are normalised.
    pub fn for_chars(chars: &str) -> Option<Self> {
        let mut templates = Vec::new();
        for c in chars.chars() {
            let mask = font::glyph(c)?;
            let cols: Vec<usize> = (0..W).filter(|&x| mask.iter().any(|r| r[x])).collect();
            let (x0, x1) = (*cols.first()?, *cols.last()? + 1);
            let bits = normalize(|x, y| mask[y][x], x0, x1, 0, H);
            templates.push((c, bits));
        }
        Some(Self { templates })
    }

    pub fn glyph_size(&self) -> (u32, u32) {
        (GLYPH_WIDTH, GLYPH_HEIGHT)
    }

    pub fn charset(&self) -> String {
        self.templates.iter().map(|(c, _)| *c).collect()
    }

    /// Template bitmap as a binary image (ink 0, paper 255).
    pub fn template_image(&self, c: char) -> Option<GrayImage> {
        let (_, bits) = self.templates.iter().find(|(t, _)| *t == c)?;
        Some(GrayImage::from_fn(GLYPH_WIDTH, GLYPH_HEIGHT, |x, y| {
            if bits[y as usize * W + x as usize] {
                0
            } else {
                255
            }
        }))
    }

    /// Best-matching character and its pixel-agreement fraction.
    fn classify(&self, bits: &[bool; W * H]) -> (char, f64) {
        let mut best = ('?', -1.0);
        for (c, t) in &self.templates {
            let agree = t.iter().zip(bits).filter(|(a, b)| a == b).count();
            let score = agree as f64 / (W * H) as f64;
            if score > best.1 {
                best = (*c, score);
            }
        }
        best
    }
}

/// Nearest-neighbour resample of the `[x0,x1)×[y0,y1)` window to `W`×`H`,
/// sampling at cell centres.
fn normalize(ink: impl Fn(usize, usize) -> bool, x0: usize, x1: usize, y0: usize, y1: usize) -> [bool; W * H] {
    let (sw, sh) = (x1 - x0, y1 - y0);
    let mut out = [false; W * H];
    for ty in 0..H {
        let sy = y0 + (2 * ty + 1) * sh / (2 * H);
        for tx in 0..W {
            let sx = x0 + (2 * tx + 1) * sw / (2 * W);
            out[ty * W + tx] = ink(sx, sy);
        }
    }
    out
}

/// Splits a binary image into glyphs by vertical ink projection and matches
/// each against the templates. Confidence is the mean best score.
pub fn recognize_builtin(img: &GrayImage, templates: &GlyphTemplateSet) -> Result<Recognition, OcrError> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let px = img.pixels();
    let ink = |x: usize, y: usize| px[y * w + x] < INK_BELOW;

    let rows: Vec<usize> = (0..h).filter(|&y| (0..w).any(|x| ink(x, y))).collect();
    let (Some(&y0), Some(&y_last)) = (rows.first(), rows.last()) else {
        return Err(OcrError::NoGlyphs);
    };
    let y1 = y_last + 1;

    let inked: Vec<bool> = (0..w).map(|x| (y0..y1).any(|y| ink(x, y))).collect();
    let mut segments = Vec::new();
    let mut x = 0;
    while x < w {
        if inked[x] {
            let start = x;
            while x < w && inked[x] {
                x += 1;
            }
            segments.push((start, x));
        } else {
            x += 1;
        }
    }

    let mut text = String::with_capacity(segments.len());
    let mut total = 0.0;
    for &(x0, x1) in &segments {
        let (c, score) = templates.classify(&normalize(ink, x0, x1, y0, y1));
        text.push(c);
        total += score;
    }
    Ok(Recognition {
        text,
        confidence: total / segments.len() as f64,
    })
}
