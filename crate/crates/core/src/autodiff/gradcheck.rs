//! Central finite-difference verification of tape gradients (f64 only).

use std::collections::HashMap;

use rayon::prelude::*;

use super::{Graph, Var};
use crate::error::TensorError;
use crate::tensor::Tensor;

/// Worst element found by a gradient check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Which input tensor and flat element produced `max_rel_error`.
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub elements_checked: usize,
    /// Elements whose `±h` stencil moved some relu, abs, clamp or max onto
    /// another piece. Central differences are not a derivative there.
    pub kink_crossings: usize,
}

/// `|a − n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Max relative error between the tape gradient of scalar `f` at `x` and
/// its central difference with step `h`.
pub fn gradient_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var, TensorError> + Sync,
{
    let report = gradient_check_many(|g, vars| f(g, vars[0]), std::slice::from_ref(x), h)?;
    Ok(report.max_rel_error)
}

/// Builds `f` over constant copies of `inputs`, returning the tape, the
/// input handles and the scalar output.
fn record<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<(Graph<f64>, Vec<Var>, Var), TensorError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    if g.value(out).numel() != 1 {
        return Err(TensorError::Contract(format!(
            "gradient_check needs a scalar function, got shape {:?}",
            g.shape(out)
        )));
    }
    Ok((g, vars, out))
}

/// Analytic tape gradients of `f` at `inputs` (zeros where unreachable).
pub fn tape_gradients<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<Vec<Tensor<f64>>, TensorError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.variable(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
        .collect())
}

/// Central differences of `f` for every element of every input.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDifferences {
    pub numeric: Vec<Tensor<f64>>,
    /// `(input, element)` pairs whose stencil crossed a kink.
    pub kink_crossings: Vec<(usize, usize)>,
}

/// Central differences with step `h` over every input element.
///
/// `f` is recorded once; each perturbation re-evaluates only the nodes
/// downstream of the perturbed input, so `f` must build the same tape for
/// every input value (true of all graph ops, which never branch on data).
/// Stop-gradient outputs keep their unperturbed values, which makes the
/// numeric derivative the one the tape is defined to compute.
pub fn finite_differences<F>(f: &F, inputs: &[Tensor<f64>], h: f64) -> Result<FiniteDifferences, TensorError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError>,
{
    let (base, vars, out) = record(f, inputs)?;
    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(k, t)| (0..t.numel()).map(move |j| (k, j)))
        .collect();
    let mut base_codes = HashMap::new();
    let mut buf = Vec::new();
    for idx in 0..base.len() {
        if base.branch_codes(Var(idx), &mut buf) {
            base_codes.insert(idx, buf.clone());
        }
    }

    let per_chunk = coords
        .par_chunks(256)
        .map(|chunk| -> Result<Vec<(f64, bool)>, TensorError> {
            let mut g = base.clone();
            let mut codes = Vec::new();
            // (input, nodes downstream of it, whether those are stale)
            let mut active: Option<(usize, Vec<Var>, bool)> = None;
            let mut values = Vec::with_capacity(chunk.len());
            for &(k, j) in chunk {
                if active.as_ref().map(|a| a.0) != Some(k) {
                    if let Some((_, down, true)) = &active {
                        g.recompute(down)?;
                    }
                    active = Some((k, g.differentiable_downstream(vars[k]), false));
                }
                let (_, down, stale) = active.as_mut().expect("set above");
                let mut crossed = false;
                let mut eval = |g: &mut Graph<f64>, x: f64| -> Result<f64, TensorError> {
                    g.leaf_data_mut(vars[k])?[j] = x;
                    g.recompute(down)?;
                    for &v in down.iter() {
                        if let Some(expect) = base_codes.get(&v.0) {
                            g.branch_codes(v, &mut codes);
                            crossed |= codes != *expect;
                        }
                    }
                    Ok(g.value(out).data()[0])
                };
                let orig = inputs[k].data()[j];
                let plus = eval(&mut g, orig + h)?;
                let minus = eval(&mut g, orig - h)?;
                g.leaf_data_mut(vars[k])?[j] = orig;
                *stale = true;
                if !plus.is_finite() || !minus.is_finite() {
                    return Err(TensorError::Domain(format!(
                        "non-finite value when perturbing element {j} of input {k} (value {orig})"
                    )));
                }
                values.push(((plus - minus) / (2.0 * h), crossed));
            }
            Ok(values)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut numeric: Vec<Tensor<f64>> = inputs.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
    let mut kink_crossings = Vec::new();
    for (&(k, j), (d, crossed)) in coords.iter().zip(per_chunk.into_iter().flatten()) {
        numeric[k].data_mut()[j] = d;
        if crossed {
            kink_crossings.push((k, j));
        }
    }
    Ok(FiniteDifferences { numeric, kink_crossings })
}

/// Gradient check over every element of every input tensor.
///
/// Perturbed evaluations run in parallel; the reported worst element is
/// independent of scheduling.
pub fn gradient_check_many<F>(
    f: F,
    inputs: &[Tensor<f64>],
    h: f64,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError> + Sync,
{
    let analytic = tape_gradients(&f, inputs)?;
    let fd = finite_differences(&f, inputs, h)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        input: 0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
        elements_checked: inputs.iter().map(Tensor::numel).sum(),
        kink_crossings: fd.kink_crossings.len(),
    };
    for (k, (a_t, n_t)) in analytic.iter().zip(&fd.numeric).enumerate() {
        for (j, (&a, &n)) in a_t.data().iter().zip(n_t.data()).enumerate() {
            let err = relative_error(a, n);
            if err > report.max_rel_error || err.is_nan() {
                report = GradCheckReport { max_rel_error: err, input: k, index: j, analytic: a, numeric: n, ..report };
            }
        }
    }
    Ok(report)
}
