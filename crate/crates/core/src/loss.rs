//! Training objectives. Every squared norm is a mean over elements, so the
//! weights do not depend on crop size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Axis, Graph, Pool, Var};
use crate::error::{ConfigError, Error, TensorError};
use crate::nets::BranchVars;
use crate::tensor::{Scalar, Tensor};
use crate::CLAMP_FLOOR;

/// `w0..w3` of the combined objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub projection: f64,
    pub consistency: f64,
    pub retinex: f64,
    pub perceptual: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { projection: 5.0, consistency: 1.0, retinex: 1.0, perceptual: 0.1 }
    }
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.projection, self.consistency, self.retinex, self.perceptual]
    }

    pub fn from_array([projection, consistency, retinex, perceptual]: [f64; 4]) -> Self {
        Self { projection, consistency, retinex, perceptual }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, w) in ["w0", "w1", "w2", "w3"].iter().zip(self.as_array()) {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(ConfigError::Invalid(format!("loss weight {name} must be ≥ 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// Mean squared difference. Shapes must match exactly.
pub fn projection_loss<T: Scalar>(g: &mut Graph<T>, original: Var, projected: Var) -> Result<Var, TensorError> {
    g.mse(original, projected)
}

pub fn consistency_loss<T: Scalar>(g: &mut Graph<T>, r_f1: Var, r_f2: Var) -> Result<Var, TensorError> {
    g.mse(r_f1, r_f2)
}

/// Graph handles of the four Retinex sub-terms.
#[derive(Clone, Copy, Debug)]
pub struct RetinexTerms {
    pub reconstruction: Var,
    pub reflectance_fit: Var,
    pub illumination_anchor: Var,
    pub smoothness: Var,
    pub total: Var,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RetinexLossBreakdown {
    pub reconstruction: f64,
    pub reflectance_fit: f64,
    pub illumination_anchor: f64,
    pub smoothness: f64,
    pub total: f64,
}

fn scalar_of<T: Scalar>(g: &Graph<T>, v: Var) -> f64 {
    g.value(v).data()[0].as_f64()
}

impl RetinexTerms {
    pub fn breakdown<T: Scalar>(&self, g: &Graph<T>) -> RetinexLossBreakdown {
        RetinexLossBreakdown {
            reconstruction: scalar_of(g, self.reconstruction),
            reflectance_fit: scalar_of(g, self.reflectance_fit),
            illumination_anchor: scalar_of(g, self.illumination_anchor),
            smoothness: scalar_of(g, self.smoothness),
            total: scalar_of(g, self.total),
        }
    }
}

fn sum_vars<T: Scalar>(g: &mut Graph<T>, vars: &[Var]) -> Result<Var, TensorError> {
    let mut acc = vars[0];
    for &v in &vars[1..] {
        acc = g.add(acc, v)?;
    }
    Ok(acc)
}

/// Retinex decomposition loss on one branch.
///
/// - reconstruction: `mean (R_f ∘ L_f − i)²`
/// - reflectance fit: `mean (R_f − clamp(i / stopgrad(L_f), 0, 1))²`
/// - illumination anchor: `mean (L − max_c i)²`
/// - smoothness: `mean |∂x L| + mean |∂y L|` (forward differences, raw `L`)
///
/// `L` and `L_f` are clamped to `[0.01, 1]` wherever they divide or anchor.
pub fn retinex_loss<T: Scalar>(
    g: &mut Graph<T>,
    i: Var,
    r_f: Var,
    l: Var,
    l_f: Var,
) -> Result<RetinexTerms, TensorError> {
    let [n, c, h, w] = g.value(i).dims4("retinex_loss")?;
    for (name, v, channels) in [("R_f", r_f, c), ("L", l, 1), ("L_f", l_f, 1)] {
        if g.shape(v) != [n, channels, h, w] {
            return Err(TensorError::Dimension {
                op: "retinex_loss",
                detail: format!("{name} has shape {:?}, expected {:?}", g.shape(v), [n, channels, h, w]),
            });
        }
    }
    let lf = g.clamp(l_f, CLAMP_FLOOR, 1.0);
    let recomposed = g.mul(r_f, lf)?;
    let reconstruction = g.mse(recomposed, i)?;

    let frozen = g.stop_gradient(lf);
    let ratio = g.div(i, frozen)?;
    let target = g.clamp(ratio, 0.0, 1.0);
    let reflectance_fit = g.mse(r_f, target)?;

    let lc = g.clamp(l, CLAMP_FLOOR, 1.0);
    let initial = g.pool(i, Pool::ChannelMax)?;
    let illumination_anchor = g.mse(lc, initial)?;

    let dx = g.forward_diff(l, Axis::Horizontal)?;
    let dy = g.forward_diff(l, Axis::Vertical)?;
    let (ax, ay) = (g.abs(dx), g.abs(dy));
    let (mx, my) = (g.mean(ax), g.mean(ay));
    let smoothness = g.add(mx, my)?;

    let total = sum_vars(g, &[reconstruction, reflectance_fit, illumination_anchor, smoothness])?;
    Ok(RetinexTerms { reconstruction, reflectance_fit, illumination_anchor, smoothness, total })
}

/// Frozen, seeded stand-in for a pretrained feature network: three 3×3
/// stride-2 convolutions (3→16→32→64) with relu.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor<T> {
    layers: Vec<(Tensor<T>, Tensor<T>)>,
    seed: u64,
}

pub const FEATURE_WIDTHS: [usize; 4] = [3, 16, 32, 64];

impl<T: Scalar> FeatureExtractor<T> {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = FEATURE_WIDTHS
            .windows(2)
            .map(|w| {
                let (cin, cout) = (w[0], w[1]);
                let bound = 1.0 / ((cin * 9) as f64).sqrt();
                let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
                let weight = Tensor::from_f64(vec![cout, cin, 3, 3], &draw(cout * cin * 9)).unwrap();
                let bias = Tensor::from_f64(vec![cout], &draw(cout)).unwrap();
                (weight, bias)
            })
            .collect();
        Self { layers, seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[(Tensor<T>, Tensor<T>)] {
        &self.layers
    }

    /// Final-layer features. Weights enter the graph as constants.
    pub fn features(&self, g: &mut Graph<T>, x: Var) -> Result<Var, TensorError> {
        let mut h = x;
        for (w, b) in &self.layers {
            let (wv, bv) = (g.constant(w.clone()), g.constant(b.clone()));
            h = g.conv2d(h, wv, bv, 2, 1)?;
            h = g.relu(h);
        }
        Ok(h)
    }
}

/// `mean (φ(a) − φ(b))²` at the final feature layer.
pub fn perceptual_loss<T: Scalar>(
    g: &mut Graph<T>,
    phi: &FeatureExtractor<T>,
    a: Var,
    b: Var,
) -> Result<Var, TensorError> {
    if g.shape(a) != g.shape(b) {
        return Err(TensorError::Dimension {
            op: "perceptual_loss",
            detail: format!("shapes {:?} and {:?} differ", g.shape(a), g.shape(b)),
        });
    }
    let fa = phi.features(g, a)?;
    let fb = phi.features(g, b)?;
    g.mse(fa, fb)
}

/// The four scalar parts entering the weighted sum.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub projection: Var,
    pub consistency: Var,
    pub retinex: Var,
    pub perceptual: Var,
}

/// `w0·L_p + w1·L_C + w2·L_R + w3·L_per`. Terms with zero weight are left
/// off the graph so they contribute no gradient at all.
pub fn combined_loss<T: Scalar>(g: &mut Graph<T>, weights: &LossWeights, parts: &LossParts) -> Result<Var, Error> {
    weights.validate()?;
    let terms: Vec<Var> = [parts.projection, parts.consistency, parts.retinex, parts.perceptual]
        .into_iter()
        .zip(weights.as_array())
        .filter(|&(_, w)| w != 0.0)
        .map(|(v, w)| g.scale(v, w))
        .collect();
    if terms.is_empty() {
        return Ok(g.constant(Tensor::scalar(T::zero())));
    }
    Ok(sum_vars(g, &terms)?)
}

/// Losses of one paired sample, with per-branch terms averaged.
#[derive(Clone, Copy, Debug)]
pub struct PairedLoss {
    pub parts: LossParts,
    /// Branch-averaged Retinex sub-terms.
    pub retinex_terms: RetinexTerms,
    pub total: Var,
}

/// Values of a [`PairedLoss`], in loss-log column order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossValues {
    pub projection: f64,
    pub consistency: f64,
    pub retinex: RetinexLossBreakdown,
    pub perceptual: f64,
    pub total: f64,
}

impl PairedLoss {
    pub fn values<T: Scalar>(&self, g: &Graph<T>) -> LossValues {
        LossValues {
            projection: scalar_of(g, self.parts.projection),
            consistency: scalar_of(g, self.parts.consistency),
            retinex: self.retinex_terms.breakdown(g),
            perceptual: scalar_of(g, self.parts.perceptual),
            total: scalar_of(g, self.total),
        }
    }
}

fn average<T: Scalar>(g: &mut Graph<T>, a: Var, b: Var) -> Result<Var, TensorError> {
    let s = g.add(a, b)?;
    Ok(g.scale(s, 0.5))
}

/// Full objective for a pair given both branches' forward passes and the
/// original images.
pub fn paired_loss<T: Scalar>(
    g: &mut Graph<T>,
    weights: &LossWeights,
    phi: &FeatureExtractor<T>,
    (image1, b1): (Var, &BranchVars),
    (image2, b2): (Var, &BranchVars),
) -> Result<PairedLoss, Error> {
    let p1 = projection_loss(g, image1, b1.i)?;
    let p2 = projection_loss(g, image2, b2.i)?;
    let projection = average(g, p1, p2)?;
    let consistency = consistency_loss(g, b1.r_f, b2.r_f)?;
    let r1 = retinex_loss(g, b1.i, b1.r_f, b1.l, b1.l_f)?;
    let r2 = retinex_loss(g, b2.i, b2.r_f, b2.l, b2.l_f)?;
    let retinex_terms = RetinexTerms {
        reconstruction: average(g, r1.reconstruction, r2.reconstruction)?,
        reflectance_fit: average(g, r1.reflectance_fit, r2.reflectance_fit)?,
        illumination_anchor: average(g, r1.illumination_anchor, r2.illumination_anchor)?,
        smoothness: average(g, r1.smoothness, r2.smoothness)?,
        total: average(g, r1.total, r2.total)?,
    };
    let perceptual = perceptual_loss(g, phi, b1.i_f, b2.i_f)?;
    let parts = LossParts { projection, consistency, retinex: retinex_terms.total, perceptual };
    let total = combined_loss(g, weights, &parts)?;
    Ok(PairedLoss { parts, retinex_terms, total })
}
