//! Training: data, synthetic pairs, optimizer, checkpoints and the loop.

pub mod checkpoint;
mod data;
mod optim;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use data::{load_pairs, random_crop, LoadedPairs, LowLightPair};
pub use optim::{cosine_lr, Adam, AdamConfig};
pub use synth::{procedural_base, synth_pairs, SynthOutput, SynthPair, SynthParams};

use crate::autodiff::Graph;
use crate::error::{ConfigError, Error};
use crate::loss::{paired_loss, FeatureExtractor, LossValues, LossWeights};
use crate::nets::{forward_branch, Ablation, ModelParams};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub crop: usize,
    /// Pairs whose gradients are averaged into one optimizer step.
    pub batch: usize,
    pub lambda: f64,
    pub weights: LossWeights,
    /// Seeds parameter initialization, pair order and crop windows.
    pub seed: u64,
    pub phi_seed: u64,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            epochs: 50,
            crop: 64,
            batch: 1,
            lambda: 0.2,
            weights: LossWeights::default(),
            seed: 0,
            phi_seed: 7,
            ablation: Ablation::NONE,
        }
    }
}

impl TrainConfig {
    /// Defaults tuned for LOL-style data: λ = 0.10.
    pub fn lol() -> Self {
        Self { lambda: 0.10, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.crop == 0 {
            return bad("crop must be positive".into());
        }
        if self.batch == 0 {
            return bad("batch must be positive".into());
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad(format!("lambda must be in (0, 1], got {}", self.lambda));
        }
        self.weights.validate()
    }

    /// Checks the config and that `crop` fits every pair.
    pub fn validate_for(&self, pairs: &[LowLightPair]) -> Result<(), ConfigError> {
        self.validate()?;
        if pairs.is_empty() {
            return Err(ConfigError::Invalid("training needs at least one pair".into()));
        }
        for p in pairs {
            let (h, w) = p.size();
            if self.crop > h.min(w) {
                return Err(ConfigError::Invalid(format!(
                    "crop {} exceeds pair `{}` of size {h}×{w}",
                    self.crop, p.id
                )));
            }
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, pairs: usize) -> usize {
        pairs.div_ceil(self.batch)
    }

    pub fn total_steps(&self, pairs: usize) -> usize {
        self.epochs * self.steps_per_epoch(pairs)
    }
}

/// One line of the loss log; `step` counts from 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossLogRow {
    pub step: usize,
    pub lr: f64,
    pub values: LossValues,
}

pub const LOSS_LOG_HEADER: &str =
    "step\tlr_t\tL_p\tL_C\tL_R_recon\tL_R_reflect\tL_R_anchor\tL_R_smooth\tL_per\tL_All";

impl LossLogRow {
    pub fn to_tsv(&self) -> String {
        let v = &self.values;
        let r = &v.retinex;
        format!(
            "{}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
            self.step,
            self.lr,
            v.projection,
            v.consistency,
            r.reconstruction,
            r.reflectance_fit,
            r.illumination_anchor,
            r.smoothness,
            v.perceptual,
            v.total
        )
    }
}

pub fn loss_log_tsv(rows: &[LossLogRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{LOSS_LOG_HEADER}");
    for r in rows {
        let _ = writeln!(s, "{}", r.to_tsv());
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub log: Vec<LossLogRow>,
}

/// Forward, loss and gradients of one pair at the current parameters.
fn pair_gradients(
    params: &ModelParams<f32>,
    phi: &FeatureExtractor<f32>,
    pair: &LowLightPair,
    config: &TrainConfig,
) -> Result<(LossValues, BTreeMap<String, Tensor<f32>>), Error> {
    let mut g = Graph::new();
    let pv = params.bind(&mut g, true);
    let x1 = g.constant(pair.first.clone());
    let x2 = g.constant(pair.second.clone());
    let b1 = forward_branch(&mut g, &pv, x1, config.lambda, config.ablation)?;
    let b2 = forward_branch(&mut g, &pv, x2, config.lambda, config.ablation)?;
    let loss = paired_loss(&mut g, &config.weights, phi, (x1, &b1), (x2, &b2))?;
    let values = loss.values(&g);
    g.backward(loss.total)?;
    let grads = pv
        .iter()
        .map(|(path, v)| {
            let grad = g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(g.shape(v).to_vec()));
            (path.to_string(), grad)
        })
        .collect();
    Ok((values, grads))
}

/// Trains from a fresh initialization, calling `on_step` after every update.
pub fn train_with(
    config: &TrainConfig,
    pairs: &[LowLightPair],
    mut on_step: impl FnMut(&LossLogRow),
) -> Result<TrainOutcome, Error> {
    config.validate_for(pairs)?;
    let mut params = ModelParams::<f32>::init(config.seed);
    let phi = FeatureExtractor::<f32>::new(config.phi_seed);
    let mut adam = Adam::new(AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let total = config.total_steps(pairs.len());
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut log = Vec::with_capacity(total);

    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch) {
            let step = log.len() + 1;
            let lr = cosine_lr(config.lr, step - 1, total);
            let mut sum: Option<(LossValues, BTreeMap<String, Tensor<f32>>)> = None;
            for &k in batch {
                let pair = random_crop(&pairs[k], config.crop, &mut rng)?;
                let (values, grads) = pair_gradients(&params, &phi, &pair, config)?;
                if !values.total.is_finite() {
                    return Err(Error::NanLoss { step });
                }
                sum = Some(match sum {
                    None => (values, grads),
                    Some((acc_v, mut acc_g)) => {
                        for (path, gr) in grads {
                            let a = acc_g.get_mut(&path).expect("same parameter set");
                            a.data_mut().iter_mut().zip(gr.data()).for_each(|(x, y)| *x += y);
                        }
                        (add_values(&acc_v, &values), acc_g)
                    }
                });
            }
            let (values, mut grads) = sum.expect("batches are non-empty");
            let n = batch.len() as f64;
            if batch.len() > 1 {
                let inv = 1.0 / n as f32;
                grads.values_mut().for_each(|t| t.data_mut().iter_mut().for_each(|v| *v *= inv));
            }
            adam.step(&mut params, &grads, lr, step)?;
            let row = LossLogRow { step, lr, values: scale_values(&values, 1.0 / n) };
            on_step(&row);
            log.push(row);
        }
    }
    Ok(TrainOutcome { params, log })
}

pub fn train(config: &TrainConfig, pairs: &[LowLightPair]) -> Result<TrainOutcome, Error> {
    train_with(config, pairs, |_| {})
}

fn map_values(a: &LossValues, b: &LossValues, f: impl Fn(f64, f64) -> f64) -> LossValues {
    let mut out = *a;
    out.projection = f(a.projection, b.projection);
    out.consistency = f(a.consistency, b.consistency);
    out.perceptual = f(a.perceptual, b.perceptual);
    out.total = f(a.total, b.total);
    out.retinex.reconstruction = f(a.retinex.reconstruction, b.retinex.reconstruction);
    out.retinex.reflectance_fit = f(a.retinex.reflectance_fit, b.retinex.reflectance_fit);
    out.retinex.illumination_anchor = f(a.retinex.illumination_anchor, b.retinex.illumination_anchor);
    out.retinex.smoothness = f(a.retinex.smoothness, b.retinex.smoothness);
    out.retinex.total = f(a.retinex.total, b.retinex.total);
    out
}

fn add_values(a: &LossValues, b: &LossValues) -> LossValues {
    map_values(a, b, |x, y| x + y)
}

fn scale_values(a: &LossValues, s: f64) -> LossValues {
    map_values(a, a, |x, _| x * s)
}

/// `mean ‖R_f1 − R_f2‖²` of `params` over full-size `pairs`.
pub fn reflectance_gap(params: &ModelParams<f32>, pairs: &[LowLightPair], lambda: f64) -> Result<f64, Error> {
    let mut total = 0.0;
    for p in pairs {
        let a = crate::nets::enhance(params, &p.first, lambda, Ablation::NONE)?;
        let b = crate::nets::enhance(params, &p.second, lambda, Ablation::NONE)?;
        let n = a.r_f.numel() as f64;
        total += a.r_f.data().iter().zip(b.r_f.data()).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>() / n;
    }
    Ok(total / pairs.len().max(1) as f64)
}

#[cfg(test)]
mod tests;
