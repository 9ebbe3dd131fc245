//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILURES` are reported honestly but do not
//! fail the process; any other FAIL exits non-zero.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lumina::autodiff::gradcheck::{finite_differences, gradient_check_many, relative_error, tape_gradients};
use lumina::autodiff::{Axis, Pool};
use lumina::error::TensorError;
use lumina::loss::{consistency_loss, paired_loss, projection_loss, retinex_loss, FeatureExtractor, LossWeights};
use lumina::metrics::{psnr, ssim};
use lumina::nets::{exposure_map, forward_branch, Ablation, ModelParams, ParamVars};
use lumina::train::{
    checkpoint, procedural_base, reflectance_gap, synth_pairs, train_with, LowLightPair, SynthParams, TrainConfig,
    TrainOutcome,
};
use lumina::{Graph, Tensor, Var};

const KNOWN_FAILURES: &[u32] = &[1, 6];
const H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn random(shape: Vec<usize>, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape, v).unwrap()
}

type GraphFn = Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var, TensorError> + Sync>;
/// `(name, [(shape, lo, hi)] per input, f)`
type OpCase = (&'static str, Vec<(Vec<usize>, f64, f64)>, GraphFn);

fn op_cases() -> Vec<OpCase> {
    vec![
        (
            "conv2d",
            vec![(vec![2, 2, 4, 4], -1.0, 1.0), (vec![3, 2, 3, 3], -1.0, 1.0), (vec![3], -1.0, 1.0)],
            Box::new(|g, v| {
                let y = g.conv2d(v[0], v[1], v[2], 1, 1)?;
                let s = g.square(y)?;
                Ok(g.sum(s))
            }),
        ),
        (
            "conv2d_stride2",
            vec![(vec![1, 2, 5, 5], -1.0, 1.0), (vec![2, 2, 3, 3], -1.0, 1.0), (vec![2], -1.0, 1.0)],
            Box::new(|g, v| {
                let y = g.conv2d(v[0], v[1], v[2], 2, 1)?;
                let s = g.sigmoid(y);
                Ok(g.sum(s))
            }),
        ),
        (
            "relu",
            vec![(vec![3, 4], -1.0, 1.0)],
            Box::new(|g, v| {
                let r = g.relu(v[0]);
                let s = g.square(r)?;
                Ok(g.sum(s))
            }),
        ),
        (
            "sigmoid",
            vec![(vec![3, 4], -3.0, 3.0)],
            Box::new(|g, v| {
                let r = g.sigmoid(v[0]);
                let s = g.square(r)?;
                Ok(g.sum(s))
            }),
        ),
        (
            "abs",
            vec![(vec![3, 4], -1.0, 1.0)],
            Box::new(|g, v| {
                let a = g.abs(v[0]);
                let s = g.square(a)?;
                Ok(g.mean(s))
            }),
        ),
        (
            "add_sub_mul_div_broadcast",
            vec![(vec![1, 3, 2, 3], 0.1, 1.0), (vec![1, 1, 2, 3], 0.2, 1.0)],
            Box::new(|g, v| {
                let a = g.add(v[0], v[1])?;
                let b = g.sub(a, v[1])?;
                let m = g.mul(b, v[1])?;
                let d = g.div(m, v[1])?;
                let d2 = g.div(v[0], v[1])?;
                let t = g.mul(d, d2)?;
                let s = g.square(t)?;
                Ok(g.mean(s))
            }),
        ),
        (
            "pow",
            vec![(vec![1, 1, 2, 2], 0.05, 1.0), (vec![1, 1, 1, 1], 0.1, 1.0)],
            Box::new(|g, v| {
                let p = g.pow(v[0], v[1])?;
                let q = g.powf(v[0], 0.2)?;
                let t = g.add(p, q)?;
                Ok(g.sum(t))
            }),
        ),
        (
            "pools",
            vec![(vec![2, 3, 4, 5], -1.0, 1.0)],
            Box::new(|g, v| {
                let a = g.pool(v[0], Pool::GlobalAvg)?;
                let b = g.pool(v[0], Pool::AdaptiveAvg { out_h: 3, out_w: 2 })?;
                let c = g.pool(v[0], Pool::ChannelMax)?;
                let d = g.pool(v[0], Pool::ChannelAvg)?;
                let (a2, b2) = (g.square(a)?, g.square(b)?);
                let cd = g.mul(c, d)?;
                let (sa, sb, sc) = (g.sum(a2), g.sum(b2), g.sum(cd));
                let t = g.add(sa, sb)?;
                g.add(t, sc)
            }),
        ),
        (
            "concat_reshape_diff_clamp_scale",
            vec![(vec![1, 1, 3, 4], 0.0, 1.0), (vec![1, 2, 3, 4], -0.5, 0.5)],
            Box::new(|g, v| {
                let c = g.concat_channels(&[v[0], v[1]])?;
                let dx = g.forward_diff(c, Axis::Horizontal)?;
                let dy = g.forward_diff(c, Axis::Vertical)?;
                let s = g.add(dx, dy)?;
                let r = g.reshape(s, vec![1, 36, 1, 1])?;
                let k = g.clamp(r, -0.3, 0.3);
                let sc = g.scale(k, 1.7);
                let sq = g.square(sc)?;
                Ok(g.sum(sq))
            }),
        ),
        (
            "mse",
            vec![(vec![2, 3], -1.0, 1.0), (vec![2, 3], -1.0, 1.0)],
            Box::new(|g, v| g.mse(v[0], v[1])),
        ),
    ]
}

/// Ops on random points; a point whose stencil straddles a kink is redrawn.
fn check_ops(seed: u64, redraws: &mut usize) -> Result<(f64, String), String> {
    let mut worst = (0.0, String::new());
    for (name, specs, f) in op_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let inputs: Vec<Tensor<f64>> =
                specs.iter().map(|(s, lo, hi)| random(s.clone(), &mut rng, *lo, *hi)).collect();
            let r = gradient_check_many(&f, &inputs, H).map_err(|e| format!("{name}: {e}"))?;
            if r.kink_crossings > 0 {
                *redraws += 1;
                continue;
            }
            if r.max_rel_error > worst.0 {
                worst = (r.max_rel_error, name.to_string());
            }
            break;
        }
    }
    Ok(worst)
}

struct PipelineCheck {
    max_rel: f64,
    over_tol: usize,
    max_abs: f64,
    floor: f64,
    max_rel_large: f64,
    elements: usize,
    redraws: usize,
}

fn pipeline_image(rng: &mut ChaCha8Rng) -> (Tensor<f64>, Tensor<f64>) {
    let a = random(vec![1, 3, 2, 2], rng, 0.05, 0.5);
    let gain = rng.random_range(0.4..0.9);
    let jitter = random(vec![1, 3, 2, 2], rng, -0.01, 0.01);
    let mut b = a.map(|v| v * gain);
    b.data_mut().iter_mut().zip(jitter.data()).for_each(|(v, j)| *v = (*v + j).clamp(0.0, 1.0));
    (a, b)
}

fn check_pipeline(seed: u64) -> Result<PipelineCheck, String> {
    let params = ModelParams::<f64>::init(seed);
    let phi = FeatureExtractor::<f64>::new(seed + 100);
    let names: Vec<String> = params.iter().map(|(k, _)| k.to_string()).collect();
    let inputs: Vec<Tensor<f64>> = params.iter().map(|(_, t)| t.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let mut redraws = 0;
    loop {
        let (a, b) = pipeline_image(&mut rng);
        let f = |g: &mut Graph<f64>, vars: &[Var]| -> Result<Var, TensorError> {
            let wrap = |e: lumina::Error| TensorError::Contract(e.to_string());
            let pv = ParamVars::from_pairs(names.iter().cloned().zip(vars.iter().copied()));
            let (x1, x2) = (g.constant(a.clone()), g.constant(b.clone()));
            let b1 = forward_branch(g, &pv, x1, 0.2, Ablation::NONE).map_err(wrap)?;
            let b2 = forward_branch(g, &pv, x2, 0.2, Ablation::NONE).map_err(wrap)?;
            Ok(paired_loss(g, &LossWeights::default(), &phi, (x1, &b1), (x2, &b2)).map_err(wrap)?.total)
        };
        let analytic = tape_gradients(&f, &inputs).map_err(|e| e.to_string())?;
        let fd = finite_differences(&f, &inputs, H).map_err(|e| e.to_string())?;
        if !fd.kink_crossings.is_empty() && redraws < 3 {
            redraws += 1;
            continue;
        }
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = f(&mut g, &vars).map_err(|e| e.to_string())?;
        let value = g.value(out).data()[0];
        let mut c = PipelineCheck {
            max_rel: 0.0,
            over_tol: 0,
            max_abs: 0.0,
            floor: value.abs() * f64::EPSILON / (2.0 * H),
            max_rel_large: 0.0,
            elements: 0,
            redraws,
        };
        for (at, nt) in analytic.iter().zip(&fd.numeric) {
            for (&x, &y) in at.data().iter().zip(nt.data()) {
                let rel = relative_error(x, y);
                c.elements += 1;
                c.max_rel = c.max_rel.max(rel);
                c.over_tol += usize::from(rel >= GRAD_TOL);
                c.max_abs = c.max_abs.max((x - y).abs());
                if x.abs() >= 1e-6 {
                    c.max_rel_large = c.max_rel_large.max(rel);
                }
            }
        }
        return Ok(c);
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut redraws = 0;
    for seed in 0..3 {
        match check_ops(seed, &mut redraws) {
            Ok((err, name)) => {
                pass &= err < GRAD_TOL;
                lines.push(format!("ops seed {seed}: max rel {err:.2e} ({name})"));
            }
            Err(e) => return outcome(false, e),
        }
    }
    lines.push(format!("op points redrawn for kinks: {redraws}"));
    for seed in 0..3 {
        match check_pipeline(seed) {
            Ok(c) => {
                pass &= c.max_rel < GRAD_TOL;
                lines.push(format!(
                    "pipeline seed {seed}: max rel {:.2e}, {} of {} elements ≥ {GRAD_TOL:e}, max |a−n| {:.2e} \
                     (roundoff floor ~{:.1e}), max rel where |g| ≥ 1e-6: {:.2e}, redraws {}",
                    c.max_rel, c.over_tol, c.elements, c.max_abs, c.floor, c.max_rel_large, c.redraws
                ));
            }
            Err(e) => return outcome(false, format!("pipeline seed {seed}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    lines.push(format!("runtime {:.1}s (limit 60s)", elapsed.as_secs_f64()));
    outcome(pass, lines.join("\n    "))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut g = Graph::new();
    let i = g.constant(random(vec![1, 3, 5, 5], &mut rng, 0.0, 0.6));
    let r_f = g.variable(random(vec![1, 3, 5, 5], &mut rng, 0.05, 0.95));
    let l = g.variable(random(vec![1, 1, 5, 5], &mut rng, 0.05, 0.95));
    let l_f = g.variable(random(vec![1, 1, 5, 5], &mut rng, 0.05, 0.95));
    let terms = match retinex_loss(&mut g, i, r_f, l, l_f) {
        Ok(t) => t,
        Err(e) => return outcome(false, e.to_string()),
    };
    if let Err(e) = g.backward(terms.reflectance_fit) {
        return outcome(false, e.to_string());
    }
    let lf_zero = g.grad(l_f).is_none_or(|t| t.data().iter().all(|&v| v == 0.0));
    let rf_nonzero = g.grad(r_f).is_some_and(|t| t.data().iter().filter(|&&v| v != 0.0).count() == t.numel());
    outcome(
        lf_zero && rf_nonzero,
        format!("∂fit/∂L_f exactly zero: {lf_zero}; ∂fit/∂R_f nonzero everywhere: {rf_nonzero}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let img = random(vec![1, 3, 6, 6], &mut rng, 0.0, 1.0);
    let mut g = Graph::new();
    let i = g.constant(img.clone());
    let r_f = g.constant(img.clone());
    let ones = g.constant(Tensor::ones(vec![1, 1, 6, 6]));
    let l_const = g.constant(Tensor::full(vec![1, 1, 6, 6], 0.37));
    let t = retinex_loss(&mut g, i, r_f, l_const, ones).unwrap();
    let other = g.constant(random(vec![1, 3, 6, 6], &mut rng, 0.0, 1.0));
    let lc = consistency_loss(&mut g, r_f, r_f).unwrap();
    let lc_other = consistency_loss(&mut g, r_f, other).unwrap();
    let lp = projection_loss(&mut g, i, i).unwrap();
    let v = |g: &Graph<f64>, x: Var| g.value(x).data()[0];
    let vals = [
        ("reconstruction", v(&g, t.reconstruction)),
        ("reflectance_fit", v(&g, t.reflectance_fit)),
        ("smoothness", v(&g, t.smoothness)),
        ("L_C", v(&g, lc)),
        ("L_p", v(&g, lp)),
    ];
    let pass = vals.iter().all(|(_, x)| *x == 0.0) && v(&g, lc_other) > 0.0;
    let detail = vals.iter().map(|(n, x)| format!("{n}={x:e}")).collect::<Vec<_>>().join(", ");
    outcome(pass, detail)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0usize;
    let mut elements = 0usize;
    for _ in 0..100 {
        let (h, w) = (rng.random_range(2..9), rng.random_range(2..9));
        let mut g = Graph::new();
        let l_f = g.constant(random(vec![1, 1, h, w], &mut rng, 0.01, 1.0));
        let r_f = g.constant(random(vec![1, 3, h, w], &mut rng, 0.0, 1.0));
        let maps: Vec<Tensor<f64>> = [0.10, 0.2, 1.0]
            .iter()
            .map(|&lam| {
                let m = exposure_map(&mut g, l_f, r_f, lam).unwrap();
                g.value(m).clone()
            })
            .collect();
        for k in 0..maps[0].numel() {
            elements += 1;
            let (a, b, c) = (maps[0].data()[k], maps[1].data()[k], maps[2].data()[k]);
            violations += usize::from(!(a >= b && b >= c));
        }
    }
    outcome(violations == 0, format!("{violations} violations over {elements} elements in 100 fields"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::<f64>::full(vec![1, 3, 16, 16], 0.5);
    let y = Tensor::<f64>::full(vec![1, 3, 16, 16], 0.6);
    let p20 = psnr(&x, &y).unwrap();
    let a = random(vec![1, 3, 24, 24], &mut rng, 0.0, 1.0);
    let b = random(vec![1, 3, 24, 24], &mut rng, 0.0, 1.0);
    let self_ssim = ssim(&a, &a).unwrap();
    let symmetric = psnr(&a, &b).unwrap() == psnr(&b, &a).unwrap() && ssim(&a, &b).unwrap() == ssim(&b, &a).unwrap();
    let noise = random(vec![1, 3, 24, 24], &mut rng, -1.0, 1.0);
    let levels: Vec<f64> = [0.01, 0.05, 0.2]
        .iter()
        .map(|&amp| {
            let mut n = a.clone();
            n.data_mut().iter_mut().zip(noise.data()).for_each(|(v, e)| *v += amp * e);
            psnr(&a, &n).unwrap()
        })
        .collect();
    let decreasing = levels.windows(2).all(|w| w[1] < w[0]);
    let pass = (p20 - 20.0).abs() < 1e-9 && (self_ssim - 1.0).abs() < 1e-9 && symmetric && decreasing;
    outcome(
        pass,
        format!(
            "PSNR(MSE=0.01)={p20:.12}, SSIM(x,x)={self_ssim:.12}, symmetric={symmetric}, PSNR over noise {levels:.3?}"
        ),
    )
}

fn smoke_pairs() -> Vec<LowLightPair> {
    let bases: Vec<(String, Tensor<f32>)> = (0..8u64).map(|k| (format!("b{k}"), procedural_base(k, 64, 64))).collect();
    synth_pairs(&bases, 8, 0, &SynthParams::default()).unwrap().pairs.into_iter().map(|p| p.pair).collect()
}

fn smoke_config() -> TrainConfig {
    TrainConfig { epochs: 25, crop: 64, ..TrainConfig::default() }
}

fn criterion_6(pairs: &[LowLightPair]) -> (Outcome, Option<TrainOutcome>) {
    let start = Instant::now();
    let run = match train_with(&smoke_config(), pairs, |_| {}) {
        Ok(r) => r,
        Err(e) => return (outcome(false, e.to_string()), None),
    };
    let elapsed = start.elapsed();
    let (first, last) = (run.log[0].values, run.log[run.log.len() - 1].values);
    let ratio = last.total / first.total;
    let steps_ok = run.log.len() == 200;
    let pass = steps_ok && ratio <= 0.5 && last.consistency < first.consistency && elapsed < Duration::from_secs(300);
    let detail = format!(
        "{} steps; L_All {:.4} → {:.4} (ratio {ratio:.3}, limit 0.5); L_C {:.3e} → {:.3e} (must decrease); runtime {:.1}s (limit 300s)",
        run.log.len(),
        first.total,
        last.total,
        first.consistency,
        last.consistency,
        elapsed.as_secs_f64()
    );
    (outcome(pass, detail), Some(run))
}

fn criterion_7(pairs: &[LowLightPair], default_run: Option<&TrainOutcome>) -> Outcome {
    let config = smoke_config();
    let Some(default_run) = default_run else { return outcome(false, "default run unavailable") };
    let ablated = TrainConfig { weights: LossWeights::from_array([5.0, 0.0, 1.0, 0.1]), ..config.clone() };
    let without = match train_with(&ablated, pairs, |_| {}) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let gap_default = reflectance_gap(&default_run.params, pairs, config.lambda).unwrap();
    let gap_without = reflectance_gap(&without.params, pairs, config.lambda).unwrap();
    let gap_init = reflectance_gap(&ModelParams::init(config.seed), pairs, config.lambda).unwrap();
    outcome(
        gap_without > gap_default,
        format!("‖R_f1 − R_f2‖²: default {gap_default:.6e}, w1=0 {gap_without:.6e} (initialization {gap_init:.3e})"),
    )
}

fn lumina_cli(args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_lumina"))
        .args(args)
        .env("LUMINA_THREADS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("`lumina {}` failed: {}", args.join(" "), String::from_utf8_lossy(&o.stderr)))
    }
}

fn determinism(dir: &Path) -> Result<String, String> {
    let p = |x: &Path| x.to_str().unwrap().to_string();
    let data = dir.join("pairs");
    lumina_cli(&["synth", "--count", "3", "--size", "24", "--seed", "8", "--out", &p(&data)])?;
    let run = dir.join("run");
    lumina_cli(&["train", "--data", &p(&data), "--out", &p(&run), "--epochs", "2", "--crop", "16"])?;
    let ckpt = run.join("model.lumn");
    let first = std::fs::read(&ckpt).map_err(|e| e.to_string())?;
    std::fs::remove_file(&ckpt).map_err(|e| e.to_string())?;
    lumina_cli(&["train", "--config", &p(&run.join("train.manifest"))])?;
    let replay = std::fs::read(&ckpt).map_err(|e| e.to_string())?;
    if first != replay {
        return Err("manifest replay produced a different checkpoint".into());
    }
    let input = data.join("0000_proc0").join("a.png");
    let (e1, e2) = (dir.join("e1/out.png"), dir.join("e2/out.png"));
    for out in [&e1, &e2] {
        lumina_cli(&["enhance", "--model", &p(&ckpt), "--input", &p(&input), "--output", &p(out)])?;
    }
    let (b1, b2) = (std::fs::read(&e1).map_err(|e| e.to_string())?, std::fs::read(&e2).map_err(|e| e.to_string())?);
    if b1 != b2 {
        return Err("enhanced PNGs differ".into());
    }

    let params = checkpoint::load(&ckpt).map_err(|e| e.to_string())?;
    if checkpoint::encode(&params) != first {
        return Err("save/load round trip is not bit-exact".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut typed, mut accepted, mut panics) = (0, 0, 0);
    let mut corrupt = |bytes: Vec<u8>| match std::panic::catch_unwind(|| checkpoint::decode(&bytes)) {
        Ok(Err(_)) => typed += 1,
        Ok(Ok(_)) => accepted += 1,
        Err(_) => panics += 1,
    };
    for cut in (0..first.len()).step_by(97) {
        corrupt(first[..cut].to_vec());
    }
    for _ in 0..300 {
        let mut b = first.clone();
        let at = rng.random_range(0..b.len());
        b[at] ^= 1 << rng.random_range(0..8);
        corrupt(b);
    }
    if panics > 0 {
        return Err(format!("{panics} corrupt checkpoints panicked"));
    }
    Ok(format!(
        "replayed checkpoint and repeated enhance byte-identical; round trip bit-exact; \
         corrupt inputs: {typed} typed errors, {accepted} decoded (payload-only bit flips), 0 panics"
    ))
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    match determinism(dir.path()) {
        Ok(d) => outcome(true, d),
        Err(e) => outcome(false, e),
    }
}

fn criterion_9() -> Outcome {
    let params = ModelParams::<f32>::init(0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut lo, mut hi) = (f32::INFINITY, f32::NEG_INFINITY);
    let mut outside = 0usize;
    for _ in 0..100 {
        let (h, w) = (rng.random_range(4..20), rng.random_range(4..20));
        let level = rng.random_range(0.02..1.0);
        let img = random(vec![1, 3, h, w], &mut rng, 0.0, level).cast::<f32>();
        let mut g = Graph::new();
        let pv = params.bind(&mut g, false);
        let x = g.constant(img);
        let b = forward_branch(&mut g, &pv, x, 0.2, Ablation::NONE).unwrap();
        for gate in [b.cg_channel_gate, b.cg_spatial_gate, b.ce_channel_gate].into_iter().flatten() {
            for &v in g.value(gate).data() {
                lo = lo.min(v);
                hi = hi.max(v);
                outside += usize::from(!(v > 0.0 && v < 1.0));
            }
        }
    }
    outcome(outside == 0, format!("gate values in [{lo:.4}, {hi:.4}], {outside} outside (0, 1)"))
}

fn main() {
    let names = [
        "gradient correctness (ops + full pipeline, 3 seeds)",
        "stop-gradient contract",
        "analytic identities",
        "OEC monotonicity in λ",
        "metric oracles",
        "training smoke",
        "consistency ablation A/B",
        "determinism and persistence",
        "attention gate range",
    ];
    let pairs = smoke_pairs();
    let mut results: Vec<Outcome> = vec![criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5()];
    let (c6, run) = criterion_6(&pairs);
    results.push(c6);
    results.push(criterion_7(&pairs, run.as_ref()));
    results.push(criterion_8());
    results.push(criterion_9());

    let mut unexpected = 0;
    for (k, (name, r)) in names.iter().zip(&results).enumerate() {
        let id = k as u32 + 1;
        let known = KNOWN_FAILURES.contains(&id);
        let tag = match (r.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        unexpected += usize::from(!r.pass && !known);
        println!("{tag} [{id}] {name}\n    {}", r.detail);
    }
    let passed = results.iter().filter(|r| r.pass).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if unexpected > 0 {
        std::process::exit(1);
    }
}
