//! Synthetic exposure pairs: one shared reflectance (the base image) under
//! two smooth, independently drawn illumination fields, plus sensor noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::data::LowLightPair;
use crate::error::ConfigError;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthParams {
    /// Side of the random low-resolution grid that is upsampled into a field.
    pub grid: usize,
    pub gamma: (f64, f64),
    /// Illumination range after the gamma curve.
    pub level: (f64, f64),
    pub noise_sigma: f64,
    /// Bases smaller than this on either side are skipped.
    pub min_size: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self { grid: 4, gamma: (1.5, 4.0), level: (0.05, 0.6), noise_sigma: 0.02, min_size: 1 }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.grid < 2 {
            return bad(format!("synth grid must be ≥ 2, got {}", self.grid));
        }
        if !(self.gamma.0 > 0.0 && self.gamma.0 <= self.gamma.1) {
            return bad(format!("synth gamma range {:?} is empty or non-positive", self.gamma));
        }
        if !(0.0 < self.level.0 && self.level.0 <= self.level.1 && self.level.1 <= 1.0) {
            return bad(format!("synth level range {:?} must lie in (0, 1]", self.level));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("synth noise sigma must be ≥ 0, got {}", self.noise_sigma));
        }
        Ok(())
    }
}

/// One generated pair and the two illumination fields (1×1×H×W) behind it.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthPair {
    pub pair: LowLightPair,
    pub fields: [Tensor<f32>; 2],
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SynthOutput {
    pub pairs: Vec<SynthPair>,
    pub warnings: Vec<String>,
}

fn bilinear(grid: &[f64], g: usize, h: usize, w: usize) -> Vec<f64> {
    let coord = |i: usize, n: usize| if n == 1 { 0.0 } else { i as f64 * (g - 1) as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        let fy = coord(y, h);
        let y0 = (fy.floor() as usize).min(g - 2);
        let ty = fy - y0 as f64;
        for x in 0..w {
            let fx = coord(x, w);
            let x0 = (fx.floor() as usize).min(g - 2);
            let tx = fx - x0 as f64;
            let at = |yy: usize, xx: usize| grid[yy * g + xx];
            let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
            let bot = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bot * ty);
        }
    }
    out
}

/// Smooth field in `params.level`: uniform grid, bilinear upsampling, then
/// `v^γ` with γ drawn from `params.gamma`.
pub fn illumination_field(rng: &mut impl Rng, h: usize, w: usize, params: &SynthParams) -> Tensor<f32> {
    let g = params.grid;
    let grid: Vec<f64> = (0..g * g).map(|_| rng.random()).collect();
    let gamma = if params.gamma.0 == params.gamma.1 {
        params.gamma.0
    } else {
        rng.random_range(params.gamma.0..params.gamma.1)
    };
    let (lo, hi) = params.level;
    let vals: Vec<f32> = bilinear(&grid, g, h, w)
        .into_iter()
        .map(|v| (lo + (hi - lo) * v.clamp(0.0, 1.0).powf(gamma)) as f32)
        .collect();
    Tensor::new(vec![1, 1, h, w], vals).expect("field shape")
}

pub(crate) fn expose(base: &Tensor<f32>, field: &Tensor<f32>, noise: &Normal<f64>, rng: &mut impl Rng) -> Tensor<f32> {
    let hw = field.numel();
    let data = base
        .data()
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let n = noise.sample(rng);
            (r as f64 * field.data()[i % hw] as f64 + n).clamp(0.0, 1.0) as f32
        })
        .collect();
    Tensor::new(base.shape().to_vec(), data).expect("base shape")
}

/// `count` pairs cycling through the usable `bases` (`(id, 1×3×H×W)`).
pub fn synth_pairs(
    bases: &[(String, Tensor<f32>)],
    count: usize,
    seed: u64,
    params: &SynthParams,
) -> Result<SynthOutput, ConfigError> {
    params.validate()?;
    let mut out = SynthOutput::default();
    let usable: Vec<&(String, Tensor<f32>)> = bases
        .iter()
        .filter(|(id, t)| {
            let ok = t.rank() == 4 && t.shape()[1] == 3 && t.shape()[2].min(t.shape()[3]) >= params.min_size;
            if !ok {
                out.warnings.push(format!(
                    "base `{id}` {:?} is smaller than {}×{} or not RGB; skipped",
                    t.shape(),
                    params.min_size,
                    params.min_size
                ));
            }
            ok
        })
        .collect();
    if usable.is_empty() && count > 0 {
        return Err(ConfigError::Invalid("no usable base images for synthesis".into()));
    }
    let noise = Normal::new(0.0, params.noise_sigma).expect("sigma validated");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..count {
        let (id, base) = usable[k % usable.len()];
        let (h, w) = (base.shape()[2], base.shape()[3]);
        let f1 = illumination_field(&mut rng, h, w, params);
        let f2 = illumination_field(&mut rng, h, w, params);
        let first = expose(base, &f1, &noise, &mut rng);
        let second = expose(base, &f2, &noise, &mut rng);
        let pair = LowLightPair::new(format!("{k:04}_{id}"), first, second).expect("exposed images are in range");
        out.pairs.push(SynthPair { pair, fields: [f1, f2] });
    }
    Ok(out)
}

/// Seeded texture for synthesis when no photographs are at hand: oriented
/// sinusoid gratings per channel plus a few flat rectangles, in [0.1, 0.95].
pub fn procedural_base(seed: u64, h: usize, w: usize) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hw = h * w;
    let mut data = vec![0.0f64; 3 * hw];
    for c in 0..3 {
        let waves: Vec<(f64, f64, f64, f64)> = (0..3)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::PI);
                let freq = rng.random_range(0.02..0.25);
                (angle.cos() * freq, angle.sin() * freq, rng.random_range(0.0..6.3), rng.random_range(0.2..1.0))
            })
            .collect();
        let norm: f64 = waves.iter().map(|w| w.3).sum();
        for y in 0..h {
            for x in 0..w {
                let s: f64 = waves.iter().map(|&(fx, fy, ph, a)| a * (fx * x as f64 + fy * y as f64 + ph).sin()).sum();
                data[c * hw + y * w + x] = 0.5 + 0.5 * s / norm;
            }
        }
    }
    for _ in 0..4 {
        let (rh, rw) = (rng.random_range(1..=h.max(2) / 2), rng.random_range(1..=w.max(2) / 2));
        let (top, left) = (rng.random_range(0..=h - rh.min(h)), rng.random_range(0..=w - rw.min(w)));
        let color: [f64; 3] = [rng.random(), rng.random(), rng.random()];
        for (c, &col) in color.iter().enumerate() {
            for y in top..(top + rh).min(h) {
                for x in left..(left + rw).min(w) {
                    data[c * hw + y * w + x] = col;
                }
            }
        }
    }
    let vals: Vec<f32> = data.iter().map(|v| (0.1 + 0.85 * v) as f32).collect();
    Tensor::new(vec![1, 3, h, w], vals).expect("base shape")
}
