//! Procedural digit-like glyphs and an optional external mask loader.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

/// Segment endpoints in a unit box, seven-segment layout.
const SEGMENTS: [((f64, f64), (f64, f64)); 7] = [
    ((0.0, 0.0), (1.0, 0.0)), // a: top
    ((1.0, 0.0), (1.0, 0.5)), // b: upper right
    ((1.0, 0.5), (1.0, 1.0)), // c: lower right
    ((0.0, 1.0), (1.0, 1.0)), // d: bottom
    ((0.0, 0.5), (0.0, 1.0)), // e: lower left
    ((0.0, 0.0), (0.0, 0.5)), // f: upper left
    ((0.0, 0.5), (1.0, 0.5)), // g: middle
];

/// Active segments per digit, bit `i` selects `SEGMENTS[i]`.
const DIGITS: [u8; 10] = [
    0b0111111, // 0: a b c d e f
    0b0000110, // 1: b c
    0b1011011, // 2: a b d e g
    0b1001111, // 3: a b c d g
    0b1100110, // 4: b c f g
    0b1101101, // 5: a c d f g
    0b1111101, // 6: a c d e f g
    0b0000111, // 7: a b c
    0b1111111, // 8: all
    0b1101111, // 9: a b c d f g
];

pub const GLYPH_CLASSES: usize = DIGITS.len();

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.0) * dx + (py - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Renders a jittered stroke mask in `[0, 1]` for `digit` on a `res x res` grid.
pub fn render_glyph(digit: usize, res: usize, rng: &mut impl Rng) -> Vec<f32> {
    let r = res as f64;
    let bw = rng.gen_range(0.34..0.48) * r;
    let bh = rng.gen_range(0.56..0.70) * r;
    let cx = r / 2.0 + rng.gen_range(-0.08..0.08) * r;
    let cy = r / 2.0 + rng.gen_range(-0.06..0.06) * r;
    let slant = rng.gen_range(-0.15..0.15);
    let half = rng.gen_range(0.055..0.09) * r;
    let jit = 0.03 * r;

    let place = |(u, v): (f64, f64), j: (f64, f64)| {
        let x = cx + (u - 0.5) * bw + slant * (0.5 - v) * bh + j.0;
        let y = cy + (v - 0.5) * bh + j.1;
        (x, y)
    };
    let code = DIGITS[digit % GLYPH_CLASSES];
    let segs: Vec<_> = SEGMENTS
        .iter()
        .enumerate()
        .filter(|(i, _)| code & (1 << i) != 0)
        .map(|(_, &(a, b))| {
            let ja = (rng.gen_range(-jit..=jit), rng.gen_range(-jit..=jit));
            let jb = (rng.gen_range(-jit..=jit), rng.gen_range(-jit..=jit));
            (place(a, ja), place(b, jb))
        })
        .collect();

    let mut mask = vec![0f32; res * res];
    for y in 0..res {
        for x in 0..res {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let d = segs
                .iter()
                .map(|&(a, b)| segment_distance(px, py, a, b))
                .fold(f64::INFINITY, f64::min);
            mask[y * res + x] = (half + 0.5 - d).clamp(0.0, 1.0) as f32;
        }
    }
    mask
}

/// Stroke masks loaded from `<dir>/<class index>/*.png`, resized to a square
/// resolution and read as luminance.
#[derive(Debug, Clone)]
pub struct ExternalGlyphs {
    pub resolution: usize,
    pub per_class: Vec<Vec<Vec<f32>>>,
}

impl ExternalGlyphs {
    pub fn load(dir: &Path, classes: usize, resolution: usize) -> Result<Self> {
        let mut per_class = Vec::with_capacity(classes);
        for c in 0..classes {
            let class_dir = dir.join(c.to_string());
            let mut files: Vec<_> = fs::read_dir(&class_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
                .collect();
            files.sort();
            if files.is_empty() {
                return Err(Error::format(&class_dir, "no png images for class"));
            }
            let masks = files
                .iter()
                .map(|path| {
                    let img = image::open(path)
                        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
                        .to_luma8();
                    let img = image::imageops::resize(
                        &img,
                        resolution as u32,
                        resolution as u32,
                        image::imageops::FilterType::Triangle,
                    );
                    Ok(img.pixels().map(|p| p.0[0] as f32 / 255.0).collect())
                })
                .collect::<Result<Vec<_>>>()?;
            per_class.push(masks);
        }
        Ok(ExternalGlyphs {
            resolution,
            per_class,
        })
    }
}

/// Where stroke masks come from.
#[derive(Debug, Clone, Default)]
pub enum GlyphSource {
    #[default]
    Procedural,
    External(ExternalGlyphs),
}

impl GlyphSource {
    pub fn mask(&self, class: usize, res: usize, rng: &mut impl Rng) -> Result<Vec<f32>> {
        match self {
            GlyphSource::Procedural => Ok(render_glyph(class, res, rng)),
            GlyphSource::External(ext) => {
                if ext.resolution != res {
                    return Err(Error::Shape(format!(
                        "external glyphs are {0}x{0}, requested {res}x{res}",
                        ext.resolution
                    )));
                }
                let pool = ext.per_class.get(class).ok_or(Error::Index {
                    index: class,
                    len: ext.per_class.len(),
                })?;
                Ok(pool[rng.gen_range(0..pool.len())].clone())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::rng;

    #[test]
    fn masks_are_in_unit_range_and_non_empty() {
        let mut r = rng(1);
        for d in 0..GLYPH_CLASSES {
            let m = render_glyph(d, 16, &mut r);
            assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(m.iter().sum::<f32>() > 10.0);
        }
    }

    #[test]
    fn digits_differ_on_average() {
        let mut r = rng(2);
        let mean = |d: usize, r: &mut _| {
            let mut acc = vec![0f32; 256];
            for _ in 0..20 {
                for (a, v) in acc.iter_mut().zip(render_glyph(d, 16, r)) {
                    *a += v / 20.0;
                }
            }
            acc
        };
        let eight = mean(8, &mut r);
        let zero = mean(0, &mut r);
        let diff: f32 = eight.iter().zip(&zero).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 3.0, "8 and 0 too similar: {diff}");
    }

    #[test]
    fn external_loader_reads_class_dirs() {
        let dir = tempfile::tempdir().unwrap();
        for c in 0..2 {
            let cdir = dir.path().join(c.to_string());
            fs::create_dir_all(&cdir).unwrap();
            let img = image::GrayImage::from_fn(8, 8, |x, _| image::Luma([if x as usize == c { 255 } else { 0 }]));
            img.save(cdir.join("a.png")).unwrap();
        }
        let ext = ExternalGlyphs::load(dir.path(), 2, 8).unwrap();
        assert_eq!(ext.per_class.len(), 2);
        let src = GlyphSource::External(ext);
        let m = src.mask(1, 8, &mut rng(0)).unwrap();
        assert_eq!(m[1], 1.0);
        assert_eq!(m[0], 0.0);
        assert!(src.mask(1, 16, &mut rng(0)).is_err());
    }
}
