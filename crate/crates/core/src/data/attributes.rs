//! Bias attributes: canonical digit colors and procedural background textures.

use rand::Rng;

/// Canonical colors; attribute `b` is `PALETTE[b]`.
pub const PALETTE: [[f32; 3]; 10] = [
    [0.90, 0.10, 0.10], // red
    [0.10, 0.80, 0.15], // green
    [0.15, 0.25, 0.95], // blue
    [0.95, 0.90, 0.10], // yellow
    [0.90, 0.15, 0.90], // magenta
    [0.10, 0.90, 0.90], // cyan
    [1.00, 0.55, 0.05], // orange
    [0.55, 0.15, 0.95], // violet
    [0.95, 0.95, 0.95], // white
    [0.55, 0.35, 0.15], // brown
];

pub const ATTRIBUTES: usize = PALETTE.len();

/// Per-channel color jitter half-width.
pub const COLOR_JITTER: f32 = 0.05;

pub fn jittered_color(base: [f32; 3], rng: &mut impl Rng) -> [f32; 3] {
    base.map(|c| (c + rng.gen_range(-COLOR_JITTER..=COLOR_JITTER)).clamp(0.0, 1.0))
}

/// Index of the palette entry closest to `color` in Euclidean distance.
pub fn nearest_palette(color: [f32; 3]) -> usize {
    let dist = |p: &[f32; 3]| -> f32 { p.iter().zip(&color).map(|(a, b)| (a - b) * (a - b)).sum() };
    (0..ATTRIBUTES)
        .min_by(|&a, &b| dist(&PALETTE[a]).total_cmp(&dist(&PALETTE[b])))
        .unwrap()
}

/// Writes `mask * color` into a channel-major `3 x res x res` image.
pub fn colorize(mask: &[f32], color: [f32; 3]) -> Vec<f32> {
    let mut out = Vec::with_capacity(mask.len() * 3);
    for c in color {
        out.extend(mask.iter().map(|m| (m * c).clamp(0.0, 1.0)));
    }
    out
}

/// Two-tone procedural textures standing in for scene backgrounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    HorizontalStripes,
    VerticalStripes,
    Checker,
    DiagonalStripes,
    Rings,
    HorizontalGradient,
    VerticalGradient,
    Dots,
    Noise,
    CrossHatch,
}

pub const TEXTURES: [Texture; 10] = [
    Texture::HorizontalStripes,
    Texture::VerticalStripes,
    Texture::Checker,
    Texture::DiagonalStripes,
    Texture::Rings,
    Texture::HorizontalGradient,
    Texture::VerticalGradient,
    Texture::Dots,
    Texture::Noise,
    Texture::CrossHatch,
];

/// Dark and light tint for each texture.
const TINTS: [([f32; 3], [f32; 3]); 10] = [
    ([0.05, 0.25, 0.05], [0.20, 0.55, 0.20]),
    ([0.30, 0.05, 0.05], [0.60, 0.20, 0.15]),
    ([0.05, 0.05, 0.30], [0.25, 0.30, 0.65]),
    ([0.30, 0.25, 0.02], [0.60, 0.55, 0.10]),
    ([0.25, 0.05, 0.25], [0.55, 0.20, 0.55]),
    ([0.02, 0.25, 0.30], [0.15, 0.55, 0.60]),
    ([0.35, 0.15, 0.02], [0.65, 0.35, 0.10]),
    ([0.10, 0.10, 0.10], [0.45, 0.45, 0.45]),
    ([0.15, 0.20, 0.05], [0.40, 0.50, 0.15]),
    ([0.05, 0.15, 0.35], [0.35, 0.15, 0.40]),
];

/// Deterministic lattice value noise in `[0, 1]`.
fn lattice(ix: i64, iy: i64) -> f32 {
    let mut h = (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    h ^= h >> 29;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 32;
    (h & 0xFFFF) as f32 / 65535.0
}

fn value_noise(x: f32, y: f32) -> f32 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (ix, iy) = (x0 as i64, y0 as i64);
    let a = lattice(ix, iy);
    let b = lattice(ix + 1, iy);
    let c = lattice(ix, iy + 1);
    let d = lattice(ix + 1, iy + 1);
    let top = a + (b - a) * fx;
    let bottom = c + (d - c) * fx;
    top + (bottom - top) * fy
}

impl Texture {
    /// Pattern intensity in `[0, 1]` at pixel `(x, y)` for a grid of side
    /// `res`, with a per-sample phase offset.
    fn pattern(self, x: f32, y: f32, res: f32, phase: f32) -> f32 {
        let period = (res / 4.0).max(2.0);
        let tau = std::f32::consts::TAU;
        let wave = |t: f32| 0.5 + 0.5 * (tau * (t + phase) / period).sin();
        match self {
            Texture::HorizontalStripes => wave(y),
            Texture::VerticalStripes => wave(x),
            Texture::Checker => {
                let cx = ((x + phase) / period * 2.0).floor() as i64;
                let cy = ((y + phase) / period * 2.0).floor() as i64;
                ((cx + cy).rem_euclid(2)) as f32
            }
            Texture::DiagonalStripes => wave((x + y) / 1.4),
            Texture::Rings => {
                let (dx, dy) = (x - res / 2.0, y - res / 2.0);
                wave((dx * dx + dy * dy).sqrt())
            }
            Texture::HorizontalGradient => ((x + phase) / res).fract(),
            Texture::VerticalGradient => ((y + phase) / res).fract(),
            Texture::Dots => {
                let fx = ((x + phase) / period).fract() - 0.5;
                let fy = ((y + phase) / period).fract() - 0.5;
                if fx * fx + fy * fy < 0.09 {
                    1.0
                } else {
                    0.0
                }
            }
            Texture::Noise => value_noise((x + phase * 3.0) / period, (y + phase * 5.0) / period),
            Texture::CrossHatch => wave(x).max(wave(y)) * 0.5 + 0.5 * wave(x).min(wave(y)),
        }
    }

    /// Renders a `3 x res x res` background in `[0, 1]`.
    pub fn render(self, res: usize, rng: &mut impl Rng) -> Vec<f32> {
        let idx = TEXTURES.iter().position(|t| *t == self).unwrap();
        let (dark, light) = TINTS[idx];
        let phase = rng.gen_range(0.0..(res as f32 / 4.0).max(2.0));
        let gain = 1.0 + rng.gen_range(-COLOR_JITTER..=COLOR_JITTER);
        self.render_with(res, phase, gain, dark, light)
    }

    /// Renders with random tints instead of the canonical ones.
    pub fn render_random_tint(self, res: usize, rng: &mut impl Rng) -> Vec<f32> {
        let dark = [0; 3].map(|_| rng.gen_range(0.0f32..0.4));
        let light = dark.map(|d| (d + rng.gen_range(0.2..0.5)).min(1.0));
        let phase = rng.gen_range(0.0..(res as f32 / 4.0).max(2.0));
        self.render_with(res, phase, 1.0, dark, light)
    }

    fn render_with(self, res: usize, phase: f32, gain: f32, dark: [f32; 3], light: [f32; 3]) -> Vec<f32> {
        let n = res * res;
        let mut out = vec![0f32; 3 * n];
        for y in 0..res {
            for x in 0..res {
                let t = self.pattern(x as f32 + 0.5, y as f32 + 0.5, res as f32, phase);
                for ch in 0..3 {
                    let v = dark[ch] + (light[ch] - dark[ch]) * t;
                    out[ch * n + y * res + x] = (v * gain).clamp(0.0, 1.0);
                }
            }
        }
        out
    }
}

/// Alpha-blends a flat-colored foreground over a background using `alpha`
/// as the per-pixel opacity.
pub fn compose(alpha: &[f32], fg: [f32; 3], background: &[f32]) -> Vec<f32> {
    let n = alpha.len();
    let mut out = background.to_vec();
    for ch in 0..3 {
        for (i, &a) in alpha.iter().enumerate() {
            let o = &mut out[ch * n + i];
            *o = if a >= 1.0 { fg[ch] } else { a * fg[ch] + (1.0 - a) * *o };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::rng;

    #[test]
    fn palette_is_its_own_nearest() {
        for (i, c) in PALETTE.iter().enumerate() {
            assert_eq!(nearest_palette(*c), i);
        }
    }

    #[test]
    fn jitter_stays_near_canonical() {
        let mut r = rng(3);
        for _ in 0..100 {
            let c = jittered_color(PALETTE[0], &mut r);
            for (a, b) in c.iter().zip(PALETTE[0]) {
                assert!((a - b).abs() <= COLOR_JITTER + 1e-6);
            }
            assert_eq!(nearest_palette(c), 0);
        }
    }

    #[test]
    fn opaque_foreground_hides_background() {
        let mut r = rng(4);
        let bg = Texture::Checker.render(8, &mut r);
        let mut alpha = vec![0.0; 64];
        alpha[10] = 1.0;
        alpha[11] = 0.5;
        let out = compose(&alpha, [1.0, 0.5, 0.25], &bg);
        assert_eq!([out[10], out[64 + 10], out[128 + 10]], [1.0, 0.5, 0.25]);
        assert_eq!(out[0], bg[0]);
        assert!((out[11] - (0.5 + 0.5 * bg[11])).abs() < 1e-6);
    }

    #[test]
    fn textures_render_in_range_and_differ() {
        let mut r = rng(5);
        let imgs: Vec<_> = TEXTURES.iter().map(|t| t.render(16, &mut r)).collect();
        for img in &imgs {
            assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        for i in 0..imgs.len() {
            for j in i + 1..imgs.len() {
                assert_ne!(imgs[i], imgs[j]);
            }
        }
    }
}
