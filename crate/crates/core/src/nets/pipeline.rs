use std::fmt;
use std::str::FromStr;

use super::{blocks, ModelParams, ParamVars};
use crate::autodiff::{Graph, Var};
use crate::error::{ConfigError, Error, TensorError};
use crate::tensor::{Scalar, Tensor};

/// Modules switched off for an ablation run. Disabled CG/CE pass their input
/// through; disabled OEC recomposes with `clamp(L_f ∘ R_f)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Ablation {
    pub oec: bool,
    pub cg: bool,
    pub ce: bool,
}

impl Ablation {
    pub const NONE: Self = Self { oec: false, cg: false, ce: false };
    pub const ALL: Self = Self { oec: true, cg: true, ce: true };

    pub fn disable(&mut self, module: &str) -> Result<(), ConfigError> {
        match module.trim().to_ascii_lowercase().as_str() {
            "oec" => self.oec = true,
            "cg" => self.cg = true,
            "ce" => self.ce = true,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown module `{other}` (expected oec, cg or ce)"
                )))
            }
        }
        Ok(())
    }
}

/// Comma-separated list of disabled modules; empty means none.
impl FromStr for Ablation {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = Self::NONE;
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            out.disable(part)?;
        }
        Ok(out)
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.oec, "oec"), (self.cg, "cg"), (self.ce, "ce")]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect();
        write!(f, "{}", names.join(","))
    }
}

/// Graph handles for one branch of the forward pass.
#[derive(Clone, Copy, Debug)]
pub struct BranchVars {
    pub i: Var,
    pub r: Var,
    pub l: Var,
    pub r_f: Var,
    pub l_f: Var,
    pub i_f: Var,
    pub cg_channel_gate: Option<Var>,
    pub cg_spatial_gate: Option<Var>,
    pub ce_channel_gate: Option<Var>,
}

/// project → decompose → CG → CE → OEC on one image.
pub fn forward_branch<T: Scalar>(
    g: &mut Graph<T>,
    p: &ParamVars,
    image: Var,
    lambda: f64,
    ablation: Ablation,
) -> Result<BranchVars, Error> {
    let i = blocks::project(g, p, image)?;
    let (r, l) = blocks::decompose(g, p, i)?;
    let (r_f, cg_channel_gate, cg_spatial_gate) = if ablation.cg {
        (r, None, None)
    } else {
        let cg = blocks::cg_refine(g, p, r)?;
        (cg.refined, Some(cg.channel_gate), Some(cg.spatial_gate))
    };
    let (l_f, ce_channel_gate) = if ablation.ce {
        (l, None)
    } else {
        let ce = blocks::ce_refine(g, p, l)?;
        (ce.refined, Some(ce.channel_gate))
    };
    let i_f = if ablation.oec {
        let m = g.mul(r_f, l_f)?;
        g.clamp(m, 0.0, 1.0)
    } else {
        blocks::oec_correct(g, l_f, r_f, lambda)?
    };
    Ok(BranchVars { i, r, l, r_f, l_f, i_f, cg_channel_gate, cg_spatial_gate, ce_channel_gate })
}

/// Every intermediate of one inference pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition<T> {
    /// projected image, N×3×H×W
    pub i: Tensor<T>,
    pub r: Tensor<T>,
    /// N×1×H×W
    pub l: Tensor<T>,
    pub r_f: Tensor<T>,
    pub l_f: Tensor<T>,
    pub i_f: Option<Tensor<T>>,
}

/// Test-time enhancement of a single 1×3×H×W image with frozen parameters.
pub fn enhance<T: Scalar>(
    params: &ModelParams<T>,
    image: &Tensor<T>,
    lambda: f64,
    ablation: Ablation,
) -> Result<Decomposition<T>, Error> {
    let [n, c, _, _] = image.dims4("enhance")?;
    if n != 1 {
        return Err(TensorError::Dimension {
            op: "enhance",
            detail: format!("axis 0 (batch): expected a single image, got {n}"),
        }
        .into());
    }
    if c != 3 {
        return Err(TensorError::Dimension {
            op: "enhance",
            detail: format!("axis 1 (channels): expected 3, got {c}"),
        }
        .into());
    }
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let x = g.constant(image.clone());
    let b = forward_branch(&mut g, &p, x, lambda, ablation)?;
    Ok(Decomposition {
        i: g.value(b.i).clone(),
        r: g.value(b.r).clone(),
        l: g.value(b.l).clone(),
        r_f: g.value(b.r_f).clone(),
        l_f: g.value(b.l_f).clone(),
        i_f: Some(g.value(b.i_f).clone()),
    })
}
