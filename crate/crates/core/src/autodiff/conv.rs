//! im2col convolution kernels shared by the forward and backward passes.

use crate::error::TensorError;
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    pub fn new(
        input: [usize; 4],
        weight: [usize; 4],
        bias_len: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self, TensorError> {
        let [batch, in_channels, height, width] = input;
        let [out_channels, w_in, kh, kw] = weight;
        if w_in != in_channels {
            return Err(TensorError::Dimension {
                op: "conv2d",
                detail: format!(
                    "axis 1 (input channels): input has {in_channels}, weight expects {w_in}"
                ),
            });
        }
        if kh != kw {
            return Err(TensorError::Dimension {
                op: "conv2d",
                detail: format!("axis 2/3 (kernel): non-square kernel {kh}×{kw}"),
            });
        }
        if kh % 2 == 0 {
            return Err(TensorError::Geometry {
                op: "conv2d",
                detail: format!("kernel size {kh} must be odd"),
            });
        }
        if bias_len != out_channels {
            return Err(TensorError::Dimension {
                op: "conv2d",
                detail: format!(
                    "axis 0 (output channels): weight has {out_channels}, bias has {bias_len}"
                ),
            });
        }
        if stride == 0 {
            return Err(TensorError::Geometry { op: "conv2d", detail: "stride must be positive".into() });
        }
        let out_dim = |size: usize, axis: &str| -> Result<usize, TensorError> {
            let padded = size + 2 * padding;
            if padded < kh {
                return Err(TensorError::Geometry {
                    op: "conv2d",
                    detail: format!(
                        "{axis}: padded extent {padded} is smaller than kernel {kh}"
                    ),
                });
            }
            Ok((padded - kh) / stride + 1)
        };
        let out_height = out_dim(height, "height")?;
        let out_width = out_dim(width, "width")?;
        Ok(Self {
            batch,
            in_channels,
            out_channels,
            height,
            width,
            kernel: kh,
            stride,
            padding,
            out_height,
            out_width,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn out_pixels(&self) -> usize {
        self.out_height * self.out_width
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    /// Calls `f(row, col_index, Some(src_index))` for every im2col entry of one
    /// sample; `None` marks a zero-padding position.
    #[inline]
    fn for_each_patch(&self, mut f: impl FnMut(usize, Option<usize>)) {
        let k = self.kernel;
        let (h, w) = (self.height as isize, self.width as isize);
        let opix = self.out_pixels();
        for ci in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    for oy in 0..self.out_height {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        for ox in 0..self.out_width {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            let dst = row * opix + oy * self.out_width + ox;
                            if iy < 0 || iy >= h || ix < 0 || ix >= w {
                                f(dst, None);
                            } else {
                                let src = (ci as isize * h + iy) * w + ix;
                                f(dst, Some(src as usize));
                            }
                        }
                    }
                }
            }
        }
    }

    fn im2col<T: Scalar>(&self, sample: &[T], col: &mut [T]) {
        self.for_each_patch(|dst, src| {
            col[dst] = src.map_or(T::zero(), |s| sample[s]);
        });
    }

    fn col2im<T: Scalar>(&self, col: &[T], sample_grad: &mut [T]) {
        self.for_each_patch(|dst, src| {
            if let Some(s) = src {
                sample_grad[s] += col[dst];
            }
        });
    }
}

/// Below this many output pixels per sample, GEMM packing costs more than
/// plain dot products.
const DIRECT_MAX_PIXELS: usize = 16;

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    const LANES: usize = 8;
    let mut acc = [T::zero(); LANES];
    let (ah, at) = a.split_at(a.len() / LANES * LANES);
    let (bh, bt) = b.split_at(ah.len());
    for (x, y) in ah.chunks_exact(LANES).zip(bh.chunks_exact(LANES)) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let tail = at.iter().zip(bt).fold(T::zero(), |s, (&x, &y)| s + x * y);
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn forward_direct<T: Scalar>(geo: &ConvGeometry, input: &[T], weight: &[T], bias: &[T], out: &mut [T]) {
    let in_len = geo.in_channels * geo.height * geo.width;
    let opix = geo.out_pixels();
    let patch = geo.patch_len();
    let k = geo.kernel;
    let (h, w) = (geo.height as isize, geo.width as isize);
    // patches stored pixel-major so each output is one contiguous dot product
    let mut patches = vec![T::zero(); opix * patch];
    for (sample, dst) in input.chunks(in_len).zip(out.chunks_mut(geo.out_channels * opix)) {
        for oy in 0..geo.out_height {
            for ox in 0..geo.out_width {
                let row = &mut patches[(oy * geo.out_width + ox) * patch..][..patch];
                let y0 = (oy * geo.stride) as isize - geo.padding as isize;
                let x0 = (ox * geo.stride) as isize - geo.padding as isize;
                let mut r = 0;
                for ci in 0..geo.in_channels {
                    let plane = &sample[ci * geo.height * geo.width..];
                    for iy in y0..y0 + k as isize {
                        for ix in x0..x0 + k as isize {
                            row[r] = if iy < 0 || iy >= h || ix < 0 || ix >= w {
                                T::zero()
                            } else {
                                plane[(iy * w + ix) as usize]
                            };
                            r += 1;
                        }
                    }
                }
            }
        }
        for (co, plane) in dst.chunks_mut(opix).enumerate() {
            let wr = &weight[co * patch..(co + 1) * patch];
            for (p, o) in plane.iter_mut().enumerate() {
                *o = bias[co] + dot(wr, &patches[p * patch..(p + 1) * patch]);
            }
        }
    }
}

pub(crate) fn forward<T: Scalar>(
    geo: &ConvGeometry,
    input: &[T],
    weight: &[T],
    bias: &[T],
) -> Vec<T> {
    let in_len = geo.in_channels * geo.height * geo.width;
    let opix = geo.out_pixels();
    let out_len = geo.out_channels * opix;
    let mut out = vec![T::zero(); geo.batch * out_len];
    if opix <= DIRECT_MAX_PIXELS {
        forward_direct(geo, input, weight, bias, &mut out);
        return out;
    }
    let mut col = if geo.is_pointwise() { Vec::new() } else { vec![T::zero(); geo.patch_len() * opix] };
    for (sample, dst) in input.chunks(in_len).zip(out.chunks_mut(out_len)) {
        for (co, plane) in dst.chunks_mut(opix).enumerate() {
            plane.fill(bias[co]);
        }
        let cols: &[T] = if geo.is_pointwise() {
            sample
        } else {
            geo.im2col(sample, &mut col);
            &col
        };
        T::gemm(geo.out_channels, geo.patch_len(), opix, T::one(), weight, false, cols, false, T::one(), dst);
    }
    out
}

/// Accumulates gradients of a convolution into whichever of `input_grad`,
/// `weight_grad`, `bias_grad` are present.
pub(crate) fn backward<T: Scalar>(
    geo: &ConvGeometry,
    input: &[T],
    weight: &[T],
    out_grad: &[T],
    mut input_grad: Option<&mut [T]>,
    mut weight_grad: Option<&mut [T]>,
    mut bias_grad: Option<&mut [T]>,
) {
    let in_len = geo.in_channels * geo.height * geo.width;
    let opix = geo.out_pixels();
    let out_len = geo.out_channels * opix;
    let patch = geo.patch_len();
    let mut col = vec![T::zero(); patch * opix];
    for n in 0..geo.batch {
        let sample = &input[n * in_len..(n + 1) * in_len];
        let g = &out_grad[n * out_len..(n + 1) * out_len];
        if let Some(bg) = bias_grad.as_deref_mut() {
            for (co, plane) in g.chunks(opix).enumerate() {
                bg[co] += plane.iter().copied().sum();
            }
        }
        if let Some(wg) = weight_grad.as_deref_mut() {
            let cols: &[T] = if geo.is_pointwise() {
                sample
            } else {
                geo.im2col(sample, &mut col);
                &col
            };
            T::gemm(geo.out_channels, opix, patch, T::one(), g, false, cols, true, T::one(), wg);
        }
        if let Some(ig) = input_grad.as_deref_mut() {
            let dst = &mut ig[n * in_len..(n + 1) * in_len];
            if geo.is_pointwise() {
                T::gemm(patch, geo.out_channels, opix, T::one(), weight, true, g, false, T::one(), dst);
            } else {
                T::gemm(patch, geo.out_channels, opix, T::one(), weight, true, g, false, T::zero(), &mut col);
                geo.col2im(&col, dst);
            }
        }
    }
}
