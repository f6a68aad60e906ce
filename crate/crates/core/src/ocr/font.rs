//! Embedded 5×7 bitmap font.
//!
//! The same bitmaps drive HUD rendering in [`crate::synth`], the built-in
//! recognizer's templates and the labels drawn on ROI previews.

use crate::raster::GrayImage;

pub const GLYPH_WIDTH: u32 = 5;
pub const GLYPH_HEIGHT: u32 = 7;
/// Horizontal advance per character, in font pixels (glyph plus one blank column).
pub const ADVANCE: u32 = GLYPH_WIDTH + 1;

/// Characters the recognizer can emit.
pub const RECOGNIZER_CHARSET: &str = "0123456789.-mkh/%V";

const GLYPHS: &[(char, [&str; 7])] = &[
    ('0', [".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."]),
    ('1', ["..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###."]),
    ('2', [".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"]),
    ('3', ["#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###."]),
    ('4', ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."]),
    ('5', ["#####", "#....", "####.", "....#", "....#", "#...#", ".###."]),
    ('6', ["..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###."]),
    ('7', ["#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."]),
    ('8', [".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."]),
    ('9', [".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##.."]),
    ('.', [".....", ".....", ".....", ".....", ".....", ".##..", ".##.."]),
    ('-', [".....", ".....", ".....", "#####", ".....", ".....", "....."]),
    ('m', [".....", ".....", "##.#.", "#.#.#", "#.#.#", "#...#", "#...#"]),
    ('k', ["#....", "#....", "#..#.", "#.#..", "##...", "#.#..", "#..#."]),
    ('h', ["#....", "#....", "#.##.", "##..#", "#...#", "#...#", "#...#"]),
    ('/', [".....", "....#", "...#.", "..#..", ".#...", "#....", "....."]),
    ('%', ["##...", "##..#", "...#.", "..#..", ".#...", "#..##", "...##"]),
    ('V', ["#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."]),
    ('A', [".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('B', ["####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."]),
    ('C', [".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."]),
    ('D', ["###..", "#..#.", "#...#", "#...#", "#...#", "#..#.", "###.."]),
    ('E', ["#####", "#....", "#....", "####.", "#....", "#....", "#####"]),
    ('F', ["#####", "#....", "#....", "####.", "#....", "#....", "#...."]),
    ('G', [".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"]),
    ('H', ["#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"]),
    ('I', [".###.", "..#..", "..#..", "..#..", "..#..", "..#..", ".###."]),
    ('J', ["..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."]),
    ('K', ["#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"]),
    ('L', ["#....", "#....", "#....", "#....", "#....", "#....", "#####"]),
    ('M', ["#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"]),
    ('N', ["#...#", "#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#"]),
    ('O', [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('P', ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."]),
    ('Q', [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"]),
    ('R', ["####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"]),
    ('S', [".####", "#....", "#....", ".###.", "....#", "....#", "####."]),
    ('T', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."]),
    ('U', ["#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('W', ["#...#", "#...#", "#...#", "#.#.#", "#.#.#", "#.#.#", ".#.#."]),
    ('X', ["#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"]),
    ('Y', ["#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."]),
    ('Z', ["#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"]),
    ('_', [".....", ".....", ".....", ".....", ".....", ".....", "#####"]),
    (':', [".....", ".##..", ".##..", ".....", ".##..", ".##..", "....."]),
    (' ', [".....", ".....", ".....", ".....", ".....", ".....", "....."]),
];

/// Row-major ink mask of `c`, or `None` if the font lacks it.
pub fn glyph(c: char) -> Option<[[bool; GLYPH_WIDTH as usize]; GLYPH_HEIGHT as usize]> {
    let (_, rows) = GLYPHS.iter().find(|(g, _)| *g == c)?;
    let mut mask = [[false; GLYPH_WIDTH as usize]; GLYPH_HEIGHT as usize];
    for (y, row) in rows.iter().enumerate() {
        for (x, b) in row.bytes().enumerate() {
            mask[y][x] = b == b'#';
        }
    }
    Some(mask)
}

pub fn supports(c: char) -> bool {
    GLYPHS.iter().any(|(g, _)| *g == c)
}

/// Pixel size of `n_chars` characters at `scale` (no trailing blank column).
pub fn text_size(n_chars: usize, scale: u32) -> (u32, u32) {
    let cols = if n_chars == 0 { 0 } else { n_chars as u32 * ADVANCE - 1 };
    (cols * scale, GLYPH_HEIGHT * scale)
}

/// Draws `text` with its top-left corner at (`x0`, `y0`). Pixels falling
/// outside the image are skipped. Unsupported characters draw nothing but
/// still advance.
pub fn draw_text(img: &mut GrayImage, x0: i64, y0: i64, text: &str, scale: u32, ink: u8) {
    let s = scale as i64;
    for (i, c) in text.chars().enumerate() {
        let Some(mask) = glyph(c) else { continue };
        let gx = x0 + i as i64 * ADVANCE as i64 * s;
        for (row, bits) in mask.iter().enumerate() {
            for (col, &on) in bits.iter().enumerate() {
                if !on {
                    continue;
                }
                for dy in 0..s {
                    for dx in 0..s {
                        let x = gx + col as i64 * s + dx;
                        let y = y0 + row as i64 * s + dy;
                        if x >= 0 && y >= 0 && x < img.width() as i64 && y < img.height() as i64 {
                            img.set(x as u32, y as u32, ink);
                        }
                    }
                }
            }
        }
    }
}

/// Tight binary rendering: ink 0 on paper 255, no margin.
pub fn render_text(text: &str, scale: u32) -> GrayImage {
    let (w, h) = text_size(text.chars().count(), scale);
    let mut img = GrayImage::filled(w.max(1), h.max(1), 255);
    draw_text(&mut img, 0, 0, text, scale, 0);
    img
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_row_is_five_wide() {
        for (c, rows) in GLYPHS {
            for r in rows {
                assert_eq!(r.len(), 5, "glyph {c:?}");
                assert!(r.bytes().all(|b| b == b'#' || b == b'.'), "glyph {c:?}");
            }
        }
    }

    #[test]
    fn recognizer_glyphs_have_no_interior_blank_column() {
        // vertical-projection segmentation relies on this
        for c in RECOGNIZER_CHARSET.chars() {
            let mask = glyph(c).unwrap();
            let inked: Vec<bool> = (0..5).map(|x| mask.iter().any(|r| r[x])).collect();
            let first = inked.iter().position(|&b| b).unwrap();
            let last = inked.iter().rposition(|&b| b).unwrap();
            assert!(inked[first..=last].iter().all(|&b| b), "glyph {c:?}");
        }
    }

    #[test]
    fn render_size_and_ink() {
        let img = render_text("7", 1);
        assert_eq!((img.width(), img.height()), (5, 7));
        assert_eq!(img.get(0, 0), 0);
        assert_eq!(img.get(0, 1), 255);
        let img = render_text("12", 3);
        assert_eq!((img.width(), img.height()), (33, 21));
    }
}
