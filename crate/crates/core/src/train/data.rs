use std::path::Path;

use rand::Rng;

use crate::error::{ConfigError, DataError, TensorError};
use crate::imageio::load_png;
use crate::tensor::Tensor;

/// Two registered exposures of one scene, each 1×3×H×W in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct LowLightPair {
    pub id: String,
    pub first: Tensor<f32>,
    pub second: Tensor<f32>,
}

impl LowLightPair {
    pub fn new(id: impl Into<String>, first: Tensor<f32>, second: Tensor<f32>) -> Result<Self, TensorError> {
        let [n, c, _, _] = first.dims4("pair")?;
        if n != 1 || c != 3 {
            return Err(TensorError::Dimension {
                op: "pair",
                detail: format!("expected 1×3×H×W, got {:?}", first.shape()),
            });
        }
        if first.shape() != second.shape() {
            return Err(TensorError::Dimension {
                op: "pair",
                detail: format!("branch shapes {:?} and {:?} differ", first.shape(), second.shape()),
            });
        }
        for t in [&first, &second] {
            if !t.data().iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(TensorError::Domain("pair images must be finite and within [0, 1]".into()));
            }
        }
        Ok(Self { id: id.into(), first, second })
    }

    /// `(H, W)`
    pub fn size(&self) -> (usize, usize) {
        (self.first.shape()[2], self.first.shape()[3])
    }
}

/// Pairs found by [`load_pairs`] plus the reasons for every rejection.
#[derive(Clone, Debug, Default)]
pub struct LoadedPairs {
    pub pairs: Vec<LowLightPair>,
    pub warnings: Vec<String>,
}

/// Reads `root/<id>/a.png` and `root/<id>/b.png` for every subdirectory, in
/// name order. Incomplete, unreadable or mismatched pairs are skipped with a
/// warning.
pub fn load_pairs(root: &Path) -> Result<LoadedPairs, DataError> {
    let io = |source| DataError::Io { path: root.to_path_buf(), source };
    let mut dirs: Vec<_> = std::fs::read_dir(root)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let mut out = LoadedPairs::default();
    for dir in dirs {
        let id = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let (a, b) = (dir.join("a.png"), dir.join("b.png"));
        if !a.is_file() || !b.is_file() {
            out.warnings.push(format!("{}: needs both a.png and b.png; skipped", dir.display()));
            continue;
        }
        let loaded = load_png(&a).and_then(|x| load_png(&b).map(|y| (x, y)));
        match loaded {
            Err(e) => out.warnings.push(format!("{}: {e}; skipped", dir.display())),
            Ok((x, y)) if x.shape() != y.shape() => out.warnings.push(format!(
                "{}: a.png is {}×{} but b.png is {}×{}; skipped",
                dir.display(),
                x.shape()[3],
                x.shape()[2],
                y.shape()[3],
                y.shape()[2]
            )),
            Ok((x, y)) => out.pairs.push(LowLightPair::new(id, x, y).expect("decoded PNGs are valid pairs")),
        }
    }
    for w in &out.warnings {
        log::warn!("{w}");
    }
    if out.pairs.is_empty() {
        return Err(DataError::NoPairs(root.to_path_buf()));
    }
    Ok(out)
}

/// Crops the same random `crop×crop` window out of both branches.
pub fn random_crop(pair: &LowLightPair, crop: usize, rng: &mut impl Rng) -> Result<LowLightPair, ConfigError> {
    let (h, w) = pair.size();
    if crop == 0 || crop > h.min(w) {
        return Err(ConfigError::Invalid(format!(
            "crop {crop} does not fit pair `{}` of size {h}×{w}",
            pair.id
        )));
    }
    let top = rng.random_range(0..=h - crop);
    let left = rng.random_range(0..=w - crop);
    let cut = |t: &Tensor<f32>| t.crop(top, left, crop, crop).expect("window checked above");
    Ok(LowLightPair { id: pair.id.clone(), first: cut(&pair.first), second: cut(&pair.second) })
}
