use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use lumina::imageio::{load_png, save_png};
use lumina::loss::LossWeights;
use lumina::metrics::{evaluate_dir, png_stems};
use lumina::nets::{enhance, Ablation, Decomposition, ModelParams};
use lumina::train::{self, checkpoint, LossLogRow, SynthParams, TrainConfig, LOSS_LOG_HEADER};
use lumina::Tensor;

use crate::error::CliError;
use crate::settings::{RunManifest, Settings};
use crate::{DecomposeArgs, EnhanceArgs, EvaluateArgs, SynthArgs, TrainArgs};

pub const CHECKPOINT_FILE: &str = "model.lumn";
pub const LOSS_LOG_FILE: &str = "loss_log.tsv";

fn parse_weights(s: &str) -> Result<LossWeights, CliError> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::usage(format!("weights `{s}`: {e}")))?;
    let arr: [f64; 4] = parts
        .try_into()
        .map_err(|_| CliError::usage(format!("weights `{s}`: expected four values w0,w1,w2,w3")))?;
    Ok(LossWeights::from_array(arr))
}

fn format_weights(w: &LossWeights) -> String {
    w.as_array().iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

/// `--disable` flags, or the comma list from a config file.
fn ablation(s: &Settings, flags: &[String]) -> Result<Ablation, CliError> {
    if !flags.is_empty() {
        let mut a = Ablation::NONE;
        for f in flags {
            for m in f.split(',').filter(|m| !m.trim().is_empty()) {
                a.disable(m)?;
            }
        }
        return Ok(a);
    }
    Ok(s.get::<Ablation>("disable")?.unwrap_or(Ablation::NONE))
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let s = Settings::new(
        "train",
        args.config.as_deref(),
        vec![
            ("data", args.data.as_ref().map(|p| p.display().to_string())),
            ("out", args.out.as_ref().map(|p| p.display().to_string())),
            ("epochs", args.epochs.map(|v| v.to_string())),
            ("crop", args.crop.map(|v| v.to_string())),
            ("batch", args.batch.map(|v| v.to_string())),
            ("lr", args.lr.map(|v| v.to_string())),
            ("lambda", args.lambda.map(|v| v.to_string())),
            ("seed", args.seed.map(|v| v.to_string())),
            ("phi_seed", args.phi_seed.map(|v| v.to_string())),
            ("weights", args.weights.clone()),
            ("profile", args.profile.clone()),
            ("disable", (!args.disable.is_empty()).then(|| args.disable.join(","))),
        ],
        &["data", "out", "epochs", "crop", "batch", "lr", "lambda", "seed", "phi_seed", "weights", "profile", "disable"],
    )?;
    let data: PathBuf = s.require("data")?;
    let out: PathBuf = s.require("out")?;
    let profile = s.get_or("profile", "default".to_string())?;
    let base = match profile.as_str() {
        "default" => TrainConfig::default(),
        "lol" => TrainConfig::lol(),
        other => return Err(CliError::usage(format!("unknown profile `{other}` (expected default or lol)"))),
    };
    let config = TrainConfig {
        lr: s.get_or("lr", base.lr)?,
        epochs: s.get_or("epochs", base.epochs)?,
        crop: s.get_or("crop", base.crop)?,
        batch: s.get_or("batch", base.batch)?,
        lambda: s.get_or("lambda", base.lambda)?,
        weights: s.raw("weights").map(parse_weights).transpose()?.unwrap_or(base.weights),
        seed: s.get_or("seed", base.seed)?,
        phi_seed: s.get_or("phi_seed", base.phi_seed)?,
        ablation: ablation(&s, &[])?,
    };
    config.validate()?;

    let loaded = train::load_pairs(&data)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    config.validate_for(&loaded.pairs)?;

    let mut manifest = RunManifest::new("train");
    manifest
        .set_path("data", &data)
        .set_path("out", &out)
        .set("profile", &profile)
        .set("epochs", config.epochs)
        .set("crop", config.crop)
        .set("batch", config.batch)
        .set("lr", config.lr)
        .set("lambda", config.lambda)
        .set("weights", format_weights(&config.weights))
        .set("seed", config.seed)
        .set("phi_seed", config.phi_seed)
        .set("disable", config.ablation);
    manifest.write(&out)?;

    let total = config.total_steps(loaded.pairs.len());
    log::info!("training on {} pairs for {total} steps", loaded.pairs.len());
    let mut log_file = BufWriter::new(File::create(out.join(LOSS_LOG_FILE))?);
    writeln!(log_file, "{LOSS_LOG_HEADER}")?;
    let mut write_err = None;
    let result = train::train_with(&config, &loaded.pairs, |row: &LossLogRow| {
        if let Err(e) = writeln!(log_file, "{}", row.to_tsv()) {
            write_err.get_or_insert(e);
        }
        if row.step.is_multiple_of(50) || row.step == total {
            log::info!("step {}/{total} loss {:.6}", row.step, row.values.total);
        }
    });
    log_file.flush()?;
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let outcome = result?;
    checkpoint::save(&outcome.params, &out.join(CHECKPOINT_FILE))?;
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelParams<f32>, CliError> {
    checkpoint::load(path).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))
}

/// `(stem, path)` for a single PNG or every PNG in a directory.
fn inputs(input: &Path) -> Result<Vec<(String, PathBuf)>, CliError> {
    if input.is_dir() {
        let found: Vec<_> = png_stems(input)?.into_iter().collect();
        if found.is_empty() {
            return Err(CliError::Data(format!("no PNG files in {}", input.display())));
        }
        Ok(found)
    } else if input.is_file() {
        let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(vec![(stem, input.to_path_buf())])
    } else {
        Err(CliError::Data(format!("{} does not exist", input.display())))
    }
}

fn write_intermediates(dir: &Path, stem: &str, d: &Decomposition<f32>) -> Result<(), lumina::error::DataError> {
    let maps: [(&str, &Tensor<f32>); 5] = [("i", &d.i), ("R", &d.r), ("L", &d.l), ("R_f", &d.r_f), ("L_f", &d.l_f)];
    for (name, t) in maps {
        save_png(&dir.join(format!("{stem}_{name}.png")), t)?;
    }
    Ok(())
}

/// Runs `job` on every input in parallel and reports failures in input order.
fn per_file(
    files: &[(String, PathBuf)],
    job: impl Fn(&str, &Path) -> Result<(), String> + Sync,
) -> Result<(), CliError> {
    let results: Vec<Result<(), String>> = files.par_iter().map(|(stem, path)| job(stem, path)).collect();
    let failed: Vec<String> = files
        .iter()
        .zip(&results)
        .filter_map(|((_, p), r)| r.as_ref().err().map(|e| format!("{}: {e}", p.display())))
        .collect();
    for f in &failed {
        eprintln!("error: {f}");
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{} of {} files failed", failed.len(), files.len())))
    }
}

struct InferenceSettings {
    model: PathBuf,
    input: PathBuf,
    output: PathBuf,
    lambda: f64,
    ablation: Ablation,
}

fn inference_settings(s: &Settings, disable: &[String]) -> Result<InferenceSettings, CliError> {
    let lambda = s.get_or("lambda", TrainConfig::default().lambda)?;
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(CliError::usage(format!("lambda must be in (0, 1], got {lambda}")));
    }
    Ok(InferenceSettings {
        model: s.require("model")?,
        input: s.require("input")?,
        output: s.require("output")?,
        lambda,
        ablation: ablation(s, disable)?,
    })
}

fn inference_manifest(cmd: &str, inf: &InferenceSettings) -> RunManifest {
    let mut m = RunManifest::new(cmd);
    m.set_path("model", &inf.model)
        .set_path("input", &inf.input)
        .set_path("output", &inf.output)
        .set("lambda", inf.lambda)
        .set("disable", inf.ablation);
    m
}

pub fn enhance_cmd(args: &EnhanceArgs) -> Result<(), CliError> {
    let s = Settings::new(
        "enhance",
        args.config.as_deref(),
        vec![
            ("model", args.model.as_ref().map(|p| p.display().to_string())),
            ("input", args.input.as_ref().map(|p| p.display().to_string())),
            ("output", args.output.as_ref().map(|p| p.display().to_string())),
            ("lambda", args.lambda.map(|v| v.to_string())),
            ("dump_intermediates", args.dump_intermediates.then(|| "true".to_string())),
        ],
        &["model", "input", "output", "lambda", "disable", "dump_intermediates"],
    )?;
    let inf = inference_settings(&s, &args.disable)?;
    let dump: bool = s.get_or("dump_intermediates", false)?;
    let params = load_model(&inf.model)?;
    let files = inputs(&inf.input)?;
    // a single file input names the output file; a directory input names
    // the output directory
    let single = inf.input.is_file();
    let out_dir = if single {
        inf.output.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        inf.output.clone()
    };
    if !out_dir.as_os_str().is_empty() {
        std::fs::create_dir_all(&out_dir)?;
    }
    let mut manifest = inference_manifest("enhance", &inf);
    manifest.set("dump_intermediates", dump);
    manifest.write(if out_dir.as_os_str().is_empty() { Path::new(".") } else { &out_dir })?;

    per_file(&files, |stem, path| {
        let image = load_png(path).map_err(|e| e.to_string())?;
        let d = enhance(&params, &image, inf.lambda, inf.ablation).map_err(|e| e.to_string())?;
        let (target, name) = if single {
            let name = inf.output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            (inf.output.clone(), name)
        } else {
            (out_dir.join(format!("{stem}.png")), stem.to_string())
        };
        save_png(&target, d.i_f.as_ref().expect("enhance fills i_f")).map_err(|e| e.to_string())?;
        if dump {
            write_intermediates(&out_dir, &name, &d).map_err(|e| e.to_string())?;
        }
        Ok(())
    })
}

pub fn decompose(args: &DecomposeArgs) -> Result<(), CliError> {
    let s = Settings::new(
        "decompose",
        args.config.as_deref(),
        vec![
            ("model", args.model.as_ref().map(|p| p.display().to_string())),
            ("input", args.input.as_ref().map(|p| p.display().to_string())),
            ("output", args.output.as_ref().map(|p| p.display().to_string())),
            ("lambda", args.lambda.map(|v| v.to_string())),
        ],
        &["model", "input", "output", "lambda", "disable"],
    )?;
    let inf = inference_settings(&s, &args.disable)?;
    let params = load_model(&inf.model)?;
    let files = inputs(&inf.input)?;
    std::fs::create_dir_all(&inf.output)?;
    inference_manifest("decompose", &inf).write(&inf.output)?;
    per_file(&files, |stem, path| {
        let image = load_png(path).map_err(|e| e.to_string())?;
        let d = enhance(&params, &image, inf.lambda, inf.ablation).map_err(|e| e.to_string())?;
        write_intermediates(&inf.output, stem, &d).map_err(|e| e.to_string())
    })
}

pub fn evaluate(args: &EvaluateArgs) -> Result<(), CliError> {
    let s = Settings::new(
        "evaluate",
        args.config.as_deref(),
        vec![
            ("enhanced", args.enhanced.as_ref().map(|p| p.display().to_string())),
            ("reference", args.reference.as_ref().map(|p| p.display().to_string())),
            ("report", args.report.as_ref().map(|p| p.display().to_string())),
        ],
        &["enhanced", "reference", "report"],
    )?;
    let enhanced: PathBuf = s.require("enhanced")?;
    let reference: PathBuf = s.require("reference")?;
    let report_dir: PathBuf = s.require("report")?;
    let report = evaluate_dir(&enhanced, &reference)?;
    std::fs::create_dir_all(&report_dir)?;
    let text = report.to_text();
    std::fs::write(report_dir.join("report.txt"), &text)?;
    report.write_csv(&report_dir.join("report.csv"))?;
    let mut m = RunManifest::new("evaluate");
    m.set_path("enhanced", &enhanced).set_path("reference", &reference).set_path("report", &report_dir);
    m.write(&report_dir)?;
    print!("{text}");
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if report.per_image.is_empty() && report.errors.is_empty() {
        return Err(CliError::NothingScored("no image names in common; nothing scored".into()));
    }
    if !report.errors.is_empty() {
        return Err(CliError::Data(format!("{} images could not be scored", report.errors.len())));
    }
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let s = Settings::new(
        "synth",
        args.config.as_deref(),
        vec![
            ("base", args.base.as_ref().map(|p| p.display().to_string())),
            ("count", args.count.map(|v| v.to_string())),
            ("seed", args.seed.map(|v| v.to_string())),
            ("out", args.out.as_ref().map(|p| p.display().to_string())),
            ("size", args.size.map(|v| v.to_string())),
        ],
        &["base", "count", "seed", "out", "size"],
    )?;
    let count: usize = s.require("count")?;
    let seed: u64 = s.get_or("seed", 0)?;
    let out: PathBuf = s.require("out")?;
    let base: Option<PathBuf> = s.get("base")?;
    let size: usize = s.get_or("size", 64)?;
    if size < 2 {
        return Err(CliError::usage(format!("size must be ≥ 2, got {size}")));
    }

    let bases: Vec<(String, Tensor<f32>)> = match &base {
        Some(dir) => {
            let mut v = Vec::new();
            for (stem, path) in png_stems(dir)? {
                match load_png(&path) {
                    Ok(t) => v.push((stem, t)),
                    Err(e) => eprintln!("warning: {e}; skipped"),
                }
            }
            if v.is_empty() {
                return Err(CliError::Data(format!("no readable PNG base images in {}", dir.display())));
            }
            v
        }
        None => (0..count.max(1) as u64)
            .map(|k| (format!("proc{k}"), train::procedural_base(seed.wrapping_add(k), size, size)))
            .collect(),
    };
    let generated = train::synth_pairs(&bases, count, seed, &SynthParams::default())?;
    for w in &generated.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&out)?;
    let mut m = RunManifest::new("synth");
    m.set("count", count).set("seed", seed).set_path("out", &out);
    match &base {
        Some(b) => m.set_path("base", b),
        None => m.set("size", size),
    };
    m.write(&out)?;
    for sp in &generated.pairs {
        let dir = out.join(&sp.pair.id);
        std::fs::create_dir_all(&dir)?;
        save_png(&dir.join("a.png"), &sp.pair.first)?;
        save_png(&dir.join("b.png"), &sp.pair.second)?;
    }
    Ok(())
}
