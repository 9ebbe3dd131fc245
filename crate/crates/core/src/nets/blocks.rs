use super::{ParamVars, CE_POOL};
use crate::autodiff::{Graph, Pool, Var};
use crate::error::{ConfigError, Error, TensorError};
use crate::tensor::Scalar;
use crate::CLAMP_FLOOR;

fn expect_channels<T: Scalar>(
    g: &Graph<T>,
    x: Var,
    channels: usize,
    op: &'static str,
) -> Result<(), TensorError> {
    let [_, c, _, _] = g.value(x).dims4(op)?;
    if c != channels {
        return Err(TensorError::Dimension {
            op,
            detail: format!("axis 1 (channels): expected {channels}, got {c}"),
        });
    }
    Ok(())
}

/// Runs `net.conv1..=convN` with relu between layers and a sigmoid head.
fn conv_stack<T: Scalar>(
    g: &mut Graph<T>,
    p: &ParamVars,
    net: &str,
    layers: usize,
    x: Var,
) -> Result<Var, TensorError> {
    let mut h = x;
    for layer in 1..=layers {
        h = p.conv(g, &format!("{net}.conv{layer}"), h)?;
        h = if layer < layers { g.relu(h) } else { g.sigmoid(h) };
    }
    Ok(h)
}

/// N-Net: maps the raw image `I` to the projected image `i`.
pub fn project<T: Scalar>(g: &mut Graph<T>, p: &ParamVars, image: Var) -> Result<Var, TensorError> {
    expect_channels(g, image, 3, "project")?;
    conv_stack(g, p, "n_net", 3, image)
}

/// R-Net and L-Net on the projected image: `(R, L)`, shapes N×3×H×W and N×1×H×W.
pub fn decompose<T: Scalar>(
    g: &mut Graph<T>,
    p: &ParamVars,
    i: Var,
) -> Result<(Var, Var), TensorError> {
    expect_channels(g, i, 3, "decompose")?;
    let r = conv_stack(g, p, "r_net", 4, i)?;
    let l = conv_stack(g, p, "l_net", 4, i)?;
    Ok((r, l))
}

#[derive(Clone, Copy, Debug)]
pub struct CgOutput {
    pub refined: Var,
    /// N×3×1×1
    pub channel_gate: Var,
    /// N×1×H×W
    pub spatial_gate: Var,
}

/// Channel-spatial guidance on the reflectance.
///
/// `R_f = sigmoid(R + conv(R ∘ w_c ∘ w_s))` where `w_c` is a squeeze-excite
/// gate over the channel means and `w_s` a 7×7 gate over the per-pixel
/// channel mean and max.
pub fn cg_refine<T: Scalar>(g: &mut Graph<T>, p: &ParamVars, r: Var) -> Result<CgOutput, TensorError> {
    expect_channels(g, r, 3, "cg_refine")?;
    let gap = g.pool(r, Pool::GlobalAvg)?;
    let h = p.conv(g, "cg.channel_fc1", gap)?;
    let h = g.relu(h);
    let h = p.conv(g, "cg.channel_fc2", h)?;
    let channel_gate = g.sigmoid(h);
    let rc = g.mul(r, channel_gate)?;

    let avg = g.pool(rc, Pool::ChannelAvg)?;
    let max = g.pool(rc, Pool::ChannelMax)?;
    let desc = g.concat_channels(&[avg, max])?;
    let s = p.conv(g, "cg.spatial", desc)?;
    let spatial_gate = g.sigmoid(s);
    let rcs = g.mul(rc, spatial_gate)?;

    let delta = p.conv(g, "cg.out", rcs)?;
    let res = g.add(r, delta)?;
    let refined = g.sigmoid(res);
    Ok(CgOutput { refined, channel_gate, spatial_gate })
}

#[derive(Clone, Copy, Debug)]
pub struct CeOutput {
    pub refined: Var,
    /// N×16×1×1
    pub channel_gate: Var,
}

/// Illumination enhancement: conv features, an adaptive-pooled
/// fully-connected channel gate, and a sigmoid head back to one channel.
pub fn ce_refine<T: Scalar>(g: &mut Graph<T>, p: &ParamVars, l: Var) -> Result<CeOutput, TensorError> {
    expect_channels(g, l, 1, "ce_refine")?;
    let h = p.conv(g, "ce.conv1", l)?;
    let h = g.relu(h);
    let h = p.conv(g, "ce.conv2", h)?;
    let feats = g.relu(h);

    let [n, c, _, _] = g.value(feats).dims4("ce_refine")?;
    let pooled = g.pool(feats, Pool::AdaptiveAvg { out_h: CE_POOL, out_w: CE_POOL })?;
    let flat = g.reshape(pooled, vec![n, c * CE_POOL * CE_POOL, 1, 1])?;
    let z = p.conv(g, "ce.fc1", flat)?;
    let z = g.relu(z);
    let z = p.conv(g, "ce.fc2", z)?;
    let channel_gate = g.sigmoid(z);

    let gated = g.mul(feats, channel_gate)?;
    let head = p.conv(g, "ce.head", gated)?;
    let refined = g.sigmoid(head);
    Ok(CeOutput { refined, channel_gate })
}

fn check_lambda(lambda: f64) -> Result<(), ConfigError> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(ConfigError::Invalid(format!(
            "correction factor lambda must be in (0, 1], got {lambda}"
        )));
    }
    Ok(())
}

/// `L_f^λ ∘ R_f` before the final clamp, with `L_f` clamped to `[0.01, 1]`.
pub fn exposure_map<T: Scalar>(
    g: &mut Graph<T>,
    l_f: Var,
    r_f: Var,
    lambda: f64,
) -> Result<Var, Error> {
    check_lambda(lambda)?;
    let lc = g.clamp(l_f, CLAMP_FLOOR, 1.0);
    let lp = g.powf(lc, lambda)?;
    Ok(g.mul(r_f, lp)?)
}

/// Over-exposure correction: `I_f = clamp(L_f^λ ∘ R_f, 0, 1)`.
pub fn oec_correct<T: Scalar>(
    g: &mut Graph<T>,
    l_f: Var,
    r_f: Var,
    lambda: f64,
) -> Result<Var, Error> {
    let m = exposure_map(g, l_f, r_f, lambda)?;
    Ok(g.clamp(m, 0.0, 1.0))
}
