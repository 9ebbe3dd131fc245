//! Learnable blocks and their parameter store.
//!
//! Architecture (all convolutions zero-padded to preserve H×W):
//!
//! | block  | layers                                                        |
//! |--------|---------------------------------------------------------------|
//! | N-Net  | 3→32→32→3, 3×3, relu/relu/sigmoid                             |
//! | R-Net  | 3→32→32→32→3, 3×3, relu×3 then sigmoid                        |
//! | L-Net  | 3→32→32→32→1, 3×3, relu×3 then sigmoid                        |
//! | CG     | channel gate 3→1→3 (1×1), spatial gate 2→1 (7×7), output 3→3 |
//! | CE     | 1→16→16 (3×3), 2×2 pooled gate 64→8→16, head 16→1 (3×3)       |

mod blocks;
mod pipeline;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use blocks::{
    cg_refine, ce_refine, decompose, exposure_map, oec_correct, project, CeOutput, CgOutput,
};
pub use pipeline::{enhance, forward_branch, Ablation, BranchVars, Decomposition};

use crate::autodiff::{Graph, Var};
use crate::error::TensorError;
use crate::tensor::{Scalar, Tensor};

/// Hidden width of the CG channel gate: max(1, channels / 4).
pub const CG_REDUCTION: usize = 4;
pub const CG_SPATIAL_KERNEL: usize = 7;
pub const CE_FEATURES: usize = 16;
pub const CE_BOTTLENECK: usize = 8;
/// Output grid of the CE adaptive pooling.
pub const CE_POOL: usize = 2;
pub const WIDTH: usize = 32;

/// Ordered `(path, shape)` list of every learnable tensor.
pub fn architecture() -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let mut conv = |name: &str, cout: usize, cin: usize, k: usize| {
        out.push((format!("{name}.weight"), vec![cout, cin, k, k]));
        out.push((format!("{name}.bias"), vec![cout]));
    };
    conv("n_net.conv1", WIDTH, 3, 3);
    conv("n_net.conv2", WIDTH, WIDTH, 3);
    conv("n_net.conv3", 3, WIDTH, 3);
    for (net, head) in [("r_net", 3), ("l_net", 1)] {
        conv(&format!("{net}.conv1"), WIDTH, 3, 3);
        conv(&format!("{net}.conv2"), WIDTH, WIDTH, 3);
        conv(&format!("{net}.conv3"), WIDTH, WIDTH, 3);
        conv(&format!("{net}.conv4"), head, WIDTH, 3);
    }
    let hidden = (3 / CG_REDUCTION).max(1);
    conv("cg.channel_fc1", hidden, 3, 1);
    conv("cg.channel_fc2", 3, hidden, 1);
    conv("cg.spatial", 1, 2, CG_SPATIAL_KERNEL);
    conv("cg.out", 3, 3, 3);
    conv("ce.conv1", CE_FEATURES, 1, 3);
    conv("ce.conv2", CE_FEATURES, CE_FEATURES, 3);
    conv("ce.fc1", CE_BOTTLENECK, CE_FEATURES * CE_POOL * CE_POOL, 1);
    conv("ce.fc2", CE_FEATURES, CE_BOTTLENECK, 1);
    conv("ce.head", 1, CE_FEATURES, 3);
    out
}

/// All learnable weights, keyed by path (e.g. `n_net.conv1.weight`).
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    tensors: BTreeMap<String, Tensor<T>>,
    seed: u64,
}

impl<T: Scalar> ModelParams<T> {
    /// Uniform `[-1/√fan_in, 1/√fan_in]` initialization drawn from a single
    /// ChaCha8 stream in architecture order.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        let mut fan_in = 1;
        for (path, shape) in architecture() {
            if shape.len() == 4 {
                fan_in = shape[1] * shape[2] * shape[3];
            }
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            let vals: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            tensors.insert(path, Tensor::from_f64(shape, &vals).expect("architecture shape"));
        }
        Self { tensors, seed }
    }

    /// Builds a parameter set, checking it against [`architecture`].
    pub fn from_tensors(tensors: BTreeMap<String, Tensor<T>>, seed: u64) -> Result<Self, TensorError> {
        let arch: BTreeMap<String, Vec<usize>> = architecture().into_iter().collect();
        for (path, t) in &tensors {
            match arch.get(path) {
                None => {
                    return Err(TensorError::Contract(format!("unknown parameter `{path}`")))
                }
                Some(shape) if shape.as_slice() != t.shape() => {
                    return Err(TensorError::Contract(format!(
                        "parameter `{path}` has shape {:?}, expected {shape:?}",
                        t.shape()
                    )))
                }
                _ => {}
            }
        }
        if let Some(missing) = arch.keys().find(|p| !tensors.contains_key(*p)) {
            return Err(TensorError::Contract(format!("missing parameter `{missing}`")));
        }
        Ok(Self { tensors, seed })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn get(&self, path: &str) -> Option<&Tensor<T>> {
        self.tensors.get(path)
    }

    pub fn get_mut(&mut self, path: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(path)
    }

    /// Parameters in sorted path order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            seed: self.seed,
        }
    }

    /// Registers every tensor as a graph leaf.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> ParamVars {
        ParamVars {
            vars: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), g.leaf(t.clone(), trainable)))
                .collect(),
        }
    }
}

/// Graph handles of a bound [`ModelParams`].
#[derive(Clone, Debug)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self { vars: pairs.into_iter().collect() }
    }

    pub fn var(&self, path: &str) -> Result<Var, TensorError> {
        self.vars
            .get(path)
            .copied()
            .ok_or_else(|| TensorError::Contract(format!("parameter `{path}` is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Convolution layer `name` with stride 1 and "same" zero padding.
    pub(crate) fn conv<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        name: &str,
        x: Var,
    ) -> Result<Var, TensorError> {
        let w = self.var(&format!("{name}.weight"))?;
        let b = self.var(&format!("{name}.bias"))?;
        let k = g.shape(w)[2];
        g.conv2d(x, w, b, 1, k / 2)
    }
}
