use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::figure::{Figure, Part};
use crate::silhouette::ColorFrame;

/// Studio green of the synthetic backdrop.
pub const BACKGROUND_RGB: [u8; 3] = [48, 172, 72];

/// Clothing and skin colours of one synthetic subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette {
    pub skin: [u8; 3],
    pub shirt: [u8; 3],
    pub trousers: [u8; 3],
    pub shoes: [u8; 3],
}

const SKINS: [[u8; 3]; 4] = [[224, 172, 140], [198, 134, 106], [141, 85, 54], [92, 56, 38]];
const SHIRTS: [[u8; 3]; 5] = [[160, 30, 40], [40, 60, 150], [200, 200, 205], [70, 70, 75], [150, 90, 160]];
const TROUSERS: [[u8; 3]; 3] = [[35, 40, 70], [30, 30, 32], [110, 95, 80]];

impl Palette {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC0FF_EE00);
        Self {
            skin: SKINS[rng.random_range(0..SKINS.len())],
            shirt: SHIRTS[rng.random_range(0..SHIRTS.len())],
            trousers: TROUSERS[rng.random_range(0..TROUSERS.len())],
            shoes: [28, 24, 22],
        }
    }

    fn color(&self, part: Part) -> [u8; 3] {
        match part {
            Part::Skin => self.skin,
            Part::Shirt => self.shirt,
            Part::Trousers => self.trousers,
            Part::Shoes => self.shoes,
        }
    }
}

fn noisy_fill(width: usize, height: usize, sigma: f64, seed: u64, mut color_at: impl FnMut(usize, usize) -> [u8; 3]) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    let mut px = Vec::with_capacity(width * height * 3);
    for y in 0..height {
        for x in 0..width {
            for c in color_at(x, y) {
                let n = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                px.push((c as f64 + n).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    px
}

/// Green screen with per-channel Gaussian noise and no figure.
pub fn background_frame(width: usize, height: usize, noise_sigma: f64, seed: u64) -> ColorFrame {
    let px = noisy_fill(width, height, noise_sigma, seed, |_, _| BACKGROUND_RGB);
    ColorFrame::new(width, height, px, 0).expect("sizes match")
}

/// The figure composited over the noisy green screen.
pub fn color_frame(
    figure: &Figure,
    palette: &Palette,
    width: usize,
    height: usize,
    noise_sigma: f64,
    seed: u64,
    index: usize,
) -> ColorFrame {
    let mut labels: Vec<Option<Part>> = vec![None; width * height];
    for c in &figure.capsules {
        for (x, y) in c.pixels(width, height) {
            labels[y * width + x] = Some(c.part);
        }
    }
    let px = noisy_fill(width, height, noise_sigma, seed, |x, y| {
        labels[y * width + x].map_or(BACKGROUND_RGB, |p| palette.color(p))
    });
    ColorFrame::new(width, height, px, index).expect("sizes match")
}
