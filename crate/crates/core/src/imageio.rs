//! 8-bit RGB PNG codec. Decoding divides by 255; encoding rounds
//! `clamp(v, 0, 1) · 255`, so a save/load round trip moves values by at most
//! half a quantization step (1/510).

use std::path::Path;

use image::{ImageReader, RgbImage};

use crate::error::DataError;
use crate::tensor::{Scalar, Tensor};

/// Reads a PNG (any bit depth or color type) as a 1×3×H×W tensor in [0, 1].
pub fn load_png(path: &Path) -> Result<Tensor<f32>, DataError> {
    let reader = ImageReader::open(path)
        .map_err(|source| DataError::Io { path: path.to_path_buf(), source })?
        .with_guessed_format()
        .map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    let img = reader
        .decode()
        .map_err(|e| DataError::Decode { path: path.to_path_buf(), detail: e.to_string() })?
        .to_rgb8();
    Ok(from_rgb8(&img))
}

pub fn from_rgb8(img: &RgbImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f32; 3 * h * w];
    for (x, y, px) in img.enumerate_pixels() {
        let p = y as usize * w + x as usize;
        for c in 0..3 {
            data[c * h * w + p] = px[c] as f32 / 255.0;
        }
    }
    Tensor::new(vec![1, 3, h, w], data).expect("length matches shape")
}

fn quantize<T: Scalar>(v: T) -> u8 {
    let v = v.as_f64();
    if v.is_nan() {
        return 0;
    }
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 1×3×H×W or 1×1×H×W (replicated to gray) tensor to an 8-bit image.
pub fn to_rgb8<T: Scalar>(t: &Tensor<T>) -> Result<RgbImage, crate::error::TensorError> {
    let [n, c, h, w] = t.dims4("to_rgb8")?;
    if n != 1 || (c != 1 && c != 3) {
        return Err(crate::error::TensorError::Dimension {
            op: "to_rgb8",
            detail: format!("expected 1×3×H×W or 1×1×H×W, got {:?}", t.shape()),
        });
    }
    let d = t.data();
    let hw = h * w;
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let p = y as usize * w + x as usize;
        let ch = |k: usize| quantize(d[if c == 3 { k * hw + p } else { p }]);
        image::Rgb([ch(0), ch(1), ch(2)])
    }))
}

pub fn save_png<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<(), DataError> {
    let img = to_rgb8(t)
        .map_err(|e| DataError::Encode { path: path.to_path_buf(), detail: e.to_string() })?;
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| DataError::Encode { path: path.to_path_buf(), detail: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_within_half_step() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let vals: Vec<f64> = (0..3 * 5 * 7).map(|i| (i as f64 * 0.137).fract()).collect();
        let t = Tensor::<f64>::from_f64(vec![1, 3, 5, 7], &vals).unwrap();
        save_png(&path, &t).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.shape(), &[1, 3, 5, 7]);
        for (a, b) in back.data().iter().zip(t.data()) {
            assert!((*a as f64 - b).abs() <= 0.5 / 255.0 + 1e-7);
        }
    }

    #[test]
    fn gray_maps_replicate_and_out_of_range_clamps() {
        let t = Tensor::<f32>::new(vec![1, 1, 1, 3], vec![-0.5, 0.5, 7.0]).unwrap();
        let img = to_rgb8(&t).unwrap();
        assert_eq!(img.get_pixel(0, 0).0, [0, 0, 0]);
        assert_eq!(img.get_pixel(1, 0).0, [128, 128, 128]);
        assert_eq!(img.get_pixel(2, 0).0, [255, 255, 255]);
        assert!(to_rgb8(&Tensor::<f32>::zeros(vec![1, 2, 2, 2])).is_err());
    }

    #[test]
    fn garbage_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.png");
        std::fs::write(&path, b"not an image").unwrap();
        assert!(matches!(load_png(&path), Err(DataError::Decode { .. })));
        assert!(matches!(load_png(&dir.path().join("missing.png")), Err(DataError::Io { .. })));
    }
}
