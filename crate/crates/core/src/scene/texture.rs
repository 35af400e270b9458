use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;

#[derive(Clone, Copy, Debug)]
pub struct Wave {
    dir: (f64, f64),
    freq: f64,
    phase: f64,
    amp: f64,
}

/// Texture painted on the scene plane, addressed in texel units.
#[derive(Clone, Debug)]
pub enum Texture {
    /// Band-limited sum of oriented sinusoids per channel.
    Procedural { waves: Vec<[Wave; 3]> },
    /// Soft-edged checkerboard with the given square size.
    Checker { size: f64 },
    /// Raster texture, bilinear with mirrored repeat.
    Raster(Image),
}

const WAVES: usize = 7;
const MIN_WAVELENGTH: f64 = 16.0;
const MAX_WAVELENGTH: f64 = 56.0;

impl Texture {
    pub fn procedural(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..WAVES)
            .map(|_| {
                std::array::from_fn(|_| {
                    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
                    let wavelength: f64 = rng.random_range(MIN_WAVELENGTH..MAX_WAVELENGTH);
                    Wave {
                        dir: (theta.cos(), theta.sin()),
                        freq: std::f64::consts::TAU / wavelength,
                        phase: rng.random_range(0.0..std::f64::consts::TAU),
                        amp: rng.random_range(0.03..0.07),
                    }
                })
            })
            .collect();
        Texture::Procedural { waves }
    }

    pub fn checker(size: f64) -> Self {
        Texture::Checker { size }
    }

    pub fn sample(&self, u: f64, v: f64) -> [f32; 3] {
        match self {
            Texture::Procedural { waves } => {
                let mut out = [0.5f64; 3];
                for per_channel in waves {
                    for (c, w) in per_channel.iter().enumerate() {
                        out[c] += w.amp * (w.freq * (u * w.dir.0 + v * w.dir.1) + w.phase).sin();
                    }
                }
                out.map(|x| x as f32)
            }
            Texture::Checker { size } => {
                let s = (std::f64::consts::PI * u / size).sin() * (std::f64::consts::PI * v / size).sin();
                let g = (0.5 + 0.35 * (3.0 * s).tanh()) as f32;
                [g, 0.8 * g + 0.1, 1.0 - g]
            }
            Texture::Raster(img) => {
                let x = mirror(u, img.width);
                let y = mirror(v, img.height);
                let mut px = [0.0f32; 4];
                img.sample_bilinear(x, y, &mut px[..img.channels]);
                match img.channels {
                    1 => [px[0]; 3],
                    _ => [px[0], px[1], px[2]],
                }
            }
        }
    }
}

/// Mirrored-repeat addressing into `[0, n - 1]`.
fn mirror(x: f64, n: usize) -> f64 {
    let period = 2.0 * (n - 1) as f64;
    if period == 0.0 {
        return 0.0;
    }
    let r = x.rem_euclid(period);
    if r > (n - 1) as f64 {
        period - r
    } else {
        r
    }
}
