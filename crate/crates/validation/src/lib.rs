//! Deterministic synthetic fixtures: smooth backgrounds with textured
//! elliptical objects whose union is the ground-truth mask.

use std::io;
use std::path::Path;

use mmsc_core::metrics::BinaryMask;
use mmsc_core::tensors::{write_pgm, write_ppm, RasterImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WIDTH: usize = 480;
pub const HEIGHT: usize = 320;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub id: String,
    pub image: RasterImage,
    pub mask: BinaryMask,
}

struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    color: [f64; 3],
    period: f64,
    angle: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / self.rx;
        let dy = (y - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }
}

/// One fixture. `large` objects cover roughly half the frame; otherwise
/// coverage stays well under 40%.
pub fn fixture(seed: u64, width: usize, height: usize, large: bool) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);

    let base: [f64; 3] = [0; 3].map(|_| rng.gen_range(60.0..190.0));
    let grad: [f64; 3] = [0; 3].map(|_| rng.gen_range(-40.0..40.0));
    let (fx, fy, phase) = (
        rng.gen_range(0.5..2.0),
        rng.gen_range(0.5..2.0),
        rng.gen_range(0.0..std::f64::consts::TAU),
    );

    let count = if large { 1 } else { rng.gen_range(1..=2) };
    let objects: Vec<Ellipse> = (0..count)
        .map(|_| {
            let (rx, ry) = if large {
                (w * 0.42, h * 0.45)
            } else {
                (
                    rng.gen_range(w * 0.07..w * 0.17),
                    rng.gen_range(h * 0.08..h * 0.2),
                )
            };
            Ellipse {
                cx: rng.gen_range(rx..w - rx),
                cy: rng.gen_range(ry..h - ry),
                rx,
                ry,
                color: [0; 3].map(|_| rng.gen_range(30.0..225.0)),
                period: rng.gen_range(3.0..6.0),
                angle: rng.gen_range(0.0..std::f64::consts::PI),
            }
        })
        .collect();

    let mut px = vec![0u8; width * height * 3];
    let mut bits = vec![false; width * height];
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f64, y as f64);
            let i = y * width + x;
            let wave = 18.0 * (std::f64::consts::TAU * (fx * xf / w + fy * yf / h) + phase).cos();
            let mut rgb: [f64; 3] = [0, 1, 2].map(|c| base[c] + grad[c] * (xf / w - 0.5) + wave);
            if let Some(o) = objects.iter().find(|o| o.contains(xf, yf)) {
                bits[i] = true;
                let t = xf * o.angle.cos() + yf * o.angle.sin();
                let stripe = 45.0 * (std::f64::consts::TAU * t / o.period).sin();
                let noise = rng.gen_range(-20.0..20.0);
                rgb = [0, 1, 2].map(|c| o.color[c] + stripe + noise);
            }
            for c in 0..3 {
                px[i * 3 + c] = rgb[c].round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Fixture {
        id: format!("toy{seed:02}"),
        image: RasterImage::new(width, height, px).expect("dims"),
        mask: BinaryMask::new(width, height, bits).expect("dims"),
    }
}

/// `n` fixtures at 480x320. The last one has a large object when `n > 1`.
pub fn toy_corpus(n: usize) -> Vec<Fixture> {
    (0..n)
        .map(|i| fixture(i as u64, WIDTH, HEIGHT, n > 1 && i == n - 1))
        .collect()
}

/// Writes `<id>.ppm` and `<id>.pgm` for each fixture.
pub fn write_corpus(dir: &Path, fixtures: &[Fixture]) -> io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in fixtures {
        let mut ppm = Vec::new();
        write_ppm(&f.image, &mut ppm).map_err(io::Error::other)?;
        std::fs::write(dir.join(format!("{}.ppm", f.id)), ppm)?;
        let mut pgm = Vec::new();
        write_pgm(&f.mask.to_gray(), &mut pgm).map_err(io::Error::other)?;
        std::fs::write(dir.join(format!("{}.pgm", f.id)), pgm)?;
    }
    Ok(())
}
