//! Full-reference quality metrics and directory evaluation.
//!
//! SSIM follows the usual structural-similarity setup: 11×11 Gaussian
//! window with σ = 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1, evaluated on
//! BT.601 luma over every fully-contained window position.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{DataError, TensorError};
use crate::imageio::load_png;
use crate::tensor::{Scalar, Tensor};

/// Aggregates report identical images at this value instead of +∞.
pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

fn same_shape<T: Scalar>(op: &'static str, x: &Tensor<T>, y: &Tensor<T>) -> Result<(), TensorError> {
    if x.shape() != y.shape() {
        return Err(TensorError::Dimension {
            op,
            detail: format!("shapes {:?} and {:?} differ", x.shape(), y.shape()),
        });
    }
    Ok(())
}

/// `10·log10(1 / MSE)` over all elements; `+∞` for identical inputs.
pub fn psnr<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<f64, TensorError> {
    same_shape("psnr", x, y)?;
    let n = x.numel().max(1) as f64;
    let mse = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(&a, &b)| {
            let d = a.as_f64() - b.as_f64();
            d * d
        })
        .sum::<f64>()
        / n;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (1.0 / mse).log10() })
}

/// Luma plane of a 1×3×H×W image, or the single channel of a 1×1×H×W one.
fn luma<T: Scalar>(x: &Tensor<T>) -> Result<(Vec<f64>, usize, usize), TensorError> {
    let [n, c, h, w] = x.dims4("ssim")?;
    if n != 1 || (c != 1 && c != 3) {
        return Err(TensorError::Dimension {
            op: "ssim",
            detail: format!("expected 1×3×H×W or 1×1×H×W, got {:?}", x.shape()),
        });
    }
    let d = x.data();
    let hw = h * w;
    let plane = if c == 1 {
        d.iter().map(|v| v.as_f64()).collect()
    } else {
        (0..hw)
            .map(|p| LUMA[0] * d[p].as_f64() + LUMA[1] * d[hw + p].as_f64() + LUMA[2] * d[2 * hw + p].as_f64())
            .collect()
    };
    Ok((plane, h, w))
}

fn gaussian_1d() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.iter_mut().for_each(|v| *v /= s);
    g
}

/// Separable valid-mode Gaussian filter of an h×w plane.
fn blur(src: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * src[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM; needs `min(H, W) ≥ 11`.
pub fn ssim<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<f64, TensorError> {
    same_shape("ssim", x, y)?;
    let (a, h, w) = luma(x)?;
    let (b, _, _) = luma(y)?;
    if h.min(w) < SSIM_WINDOW {
        return Err(TensorError::Dimension {
            op: "ssim",
            detail: format!("image {h}×{w} is smaller than the {SSIM_WINDOW}×{SSIM_WINDOW} window"),
        });
    }
    let g = gaussian_1d();
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(u, v)| u * v).collect() };
    let mu_a = blur(&a, h, w, &g);
    let mu_b = blur(&b, h, w, &g);
    let e_aa = blur(&prod(&a, &a), h, w, &g);
    let e_bb = blur(&prod(&b, &b), h, w, &g);
    let e_ab = blur(&prod(&a, &b), h, w, &g);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub id: String,
    /// `+∞` for identical images.
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub per_image: Vec<ImageScore>,
    /// Means over `per_image` with PSNR capped at [`PSNR_CAP_DB`]; `None`
    /// when nothing was scored.
    pub mean_psnr: Option<f64>,
    pub mean_ssim: Option<f64>,
    /// Files present in only one directory.
    pub warnings: Vec<String>,
    /// `(id, message)` for pairs that could not be scored.
    pub errors: Vec<(String, String)>,
}

impl MetricsReport {
    pub fn from_scores(per_image: Vec<ImageScore>) -> Self {
        let n = per_image.len() as f64;
        let (mean_psnr, mean_ssim) = if per_image.is_empty() {
            (None, None)
        } else {
            (
                Some(per_image.iter().map(|s| s.psnr.min(PSNR_CAP_DB)).sum::<f64>() / n),
                Some(per_image.iter().map(|s| s.ssim).sum::<f64>() / n),
            )
        };
        Self { per_image, mean_psnr, mean_ssim, ..Self::default() }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "# PSNR over RGB (identical images capped at {PSNR_CAP_DB} dB in means); \
             SSIM on BT.601 luma, {SSIM_WINDOW}x{SSIM_WINDOW} Gaussian window, sigma {SSIM_SIGMA}"
        );
        let _ = writeln!(s, "{:<32} {:>10} {:>8}", "id", "psnr_db", "ssim");
        for r in &self.per_image {
            let _ = writeln!(s, "{:<32} {:>10.4} {:>8.5}", r.id, r.psnr, r.ssim);
        }
        match (self.mean_psnr, self.mean_ssim) {
            (Some(p), Some(q)) => {
                let _ = writeln!(s, "{:<32} {:>10.4} {:>8.5}", "MEAN", p, q);
            }
            _ => {
                let _ = writeln!(s, "MEAN: no images scored");
            }
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(s, "\n[warnings]");
            for w in &self.warnings {
                let _ = writeln!(s, "{w}");
            }
        }
        if !self.errors.is_empty() {
            let _ = writeln!(s, "\n[errors]");
            for (id, e) in &self.errors {
                let _ = writeln!(s, "{id}: {e}");
            }
        }
        s
    }

    /// One record per image: `id,psnr_db,ssim,lpips`. The `lpips` column is
    /// left empty for externally computed values.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let io = |e: csv::Error| DataError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        w.write_record(["id", "psnr_db", "ssim", "lpips"]).map_err(io)?;
        for r in &self.per_image {
            w.write_record([r.id.clone(), format!("{}", r.psnr), format!("{}", r.ssim), String::new()])
                .map_err(io)?;
        }
        w.flush().map_err(|source| DataError::Io { path: path.to_path_buf(), source })
    }
}

/// `stem → path` for every `.png` in `dir`.
pub fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>, DataError> {
    let io = |source| DataError::Io { path: dir.to_path_buf(), source };
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(io)? {
        let path = entry.map_err(io)?.path();
        let is_png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if path.is_file() && is_png {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path.clone());
            }
        }
    }
    Ok(out)
}

fn score(id: &str, enhanced: &Path, reference: &Path) -> Result<ImageScore, String> {
    let x = load_png(enhanced).map_err(|e| e.to_string())?;
    let y = load_png(reference).map_err(|e| e.to_string())?;
    let psnr = psnr(&x, &y).map_err(|e| e.to_string())?;
    let ssim = ssim(&x, &y).map_err(|e| e.to_string())?;
    Ok(ImageScore { id: id.to_string(), psnr, ssim })
}

/// Scores every PNG present under the same stem in both directories.
pub fn evaluate_dir(enhanced: &Path, reference: &Path) -> Result<MetricsReport, DataError> {
    let enh = png_stems(enhanced)?;
    let reff = png_stems(reference)?;
    let mut warnings = Vec::new();
    for stem in enh.keys().filter(|k| !reff.contains_key(*k)) {
        warnings.push(format!("{stem}: no reference image in {}", reference.display()));
    }
    for stem in reff.keys().filter(|k| !enh.contains_key(*k)) {
        warnings.push(format!("{stem}: no enhanced image in {}", enhanced.display()));
    }
    let common: Vec<(&String, &PathBuf, &PathBuf)> =
        enh.iter().filter_map(|(k, e)| reff.get(k).map(|r| (k, e, r))).collect();
    if common.is_empty() {
        warnings.push("no image names in common; nothing scored".into());
    }
    let results: Vec<(String, Result<ImageScore, String>)> =
        common.par_iter().map(|(id, e, r)| (id.to_string(), score(id, e, r))).collect();
    let mut scores = Vec::new();
    let mut errors = Vec::new();
    for (id, r) in results {
        match r {
            Ok(s) => scores.push(s),
            Err(e) => errors.push((id, e)),
        }
    }
    let mut report = MetricsReport::from_scores(scores);
    report.warnings = warnings;
    report.errors = errors;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, h: usize, w: usize) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..3 * h * w).map(|_| rng.random()).collect();
        Tensor::from_f64(vec![1, 3, h, w], &v).unwrap()
    }

    #[test]
    fn psnr_of_mse_one_hundredth_is_twenty_db() {
        let x = Tensor::<f64>::full(vec![1, 3, 4, 4], 0.5);
        let y = Tensor::<f64>::full(vec![1, 3, 4, 4], 0.6);
        assert!((psnr(&x, &y).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_matches_direct_formula() {
        let x = random_image(1, 8, 9);
        let y = random_image(2, 8, 9);
        let mut acc = 0.0;
        for i in 0..x.numel() {
            acc += (x.data()[i] - y.data()[i]).powi(2);
        }
        let expect = -10.0 * (acc / x.numel() as f64).log10();
        assert!((psnr(&x, &y).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let x = random_image(3, 16, 20);
        let y = random_image(4, 16, 20);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(ssim(&x, &y).unwrap(), ssim(&y, &x).unwrap());
        assert_eq!(psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
    }

    #[test]
    fn ssim_constant_images_match_single_window_oracle() {
        let x = Tensor::<f64>::full(vec![1, 3, 11, 11], 0.5);
        let y = Tensor::<f64>::full(vec![1, 3, 11, 11], 0.6);
        // one window, computed directly from the 2-D Gaussian
        let r = 5.0f64;
        let mut wsum = 0.0;
        let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..11 {
            for j in 0..11 {
                let (di, dj) = (i as f64 - r, j as f64 - r);
                let wgt = (-(di * di + dj * dj) / (2.0 * 1.5 * 1.5)).exp();
                let (a, b) = (0.5, 0.6);
                wsum += wgt;
                mx += wgt * a;
                my += wgt * b;
                xx += wgt * a * a;
                yy += wgt * b * b;
                xy += wgt * a * b;
            }
        }
        let (mx, my) = (mx / wsum, my / wsum);
        let (vx, vy, cxy) = (xx / wsum - mx * mx, yy / wsum - my * my, xy / wsum - mx * my);
        let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
        let expect = ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        assert!((ssim(&x, &y).unwrap() - expect).abs() < 1e-9);
        let big = |v| Tensor::<f64>::full(vec![1, 3, 19, 23], v);
        assert!((ssim(&big(0.5), &big(0.6)).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn inverted_image_scores_low() {
        let x = random_image(5, 24, 24);
        let inv = x.map(|v| 1.0 - v);
        assert!(ssim(&x, &inv).unwrap() < 0.5);
    }

    #[test]
    fn psnr_strictly_decreases_with_noise() {
        let x = random_image(6, 16, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise: Vec<f64> = (0..x.numel()).map(|_| rng.random::<f64>() - 0.5).collect();
        let scores: Vec<f64> = [0.01, 0.05, 0.2]
            .iter()
            .map(|&a| {
                let y = Tensor::new(x.shape().to_vec(), x.data().iter().zip(&noise).map(|(v, n)| v + a * n).collect())
                    .unwrap();
                psnr(&x, &y).unwrap()
            })
            .collect();
        assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
    }

    #[test]
    fn errors_on_bad_shapes() {
        let a = Tensor::<f64>::zeros(vec![1, 3, 10, 30]);
        assert!(matches!(ssim(&a, &a), Err(TensorError::Dimension { .. })));
        let b = Tensor::<f64>::zeros(vec![1, 3, 11, 30]);
        assert!(psnr(&a, &b).is_err());
    }

    #[test]
    fn aggregate_caps_identical_psnr() {
        let r = MetricsReport::from_scores(vec![
            ImageScore { id: "a".into(), psnr: f64::INFINITY, ssim: 1.0 },
            ImageScore { id: "b".into(), psnr: 20.0, ssim: 0.5 },
        ]);
        assert_eq!(r.mean_psnr, Some(60.0));
        assert_eq!(r.mean_ssim, Some(0.75));
        assert_eq!(MetricsReport::from_scores(vec![]).mean_psnr, None);
    }
}
