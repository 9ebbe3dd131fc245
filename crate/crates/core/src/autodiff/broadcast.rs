//! Same-rank broadcasting: an axis of size 1 on either side stretches to the
//! other operand's extent.

use crate::error::TensorError;

pub(crate) const MAX_RANK: usize = 4;

#[derive(Clone, Debug)]
pub(crate) struct Broadcast {
    pub out_shape: Vec<usize>,
    dims: [usize; MAX_RANK],
    a_strides: [usize; MAX_RANK],
    b_strides: [usize; MAX_RANK],
    pub same: bool,
}

fn padded(shape: &[usize]) -> [usize; MAX_RANK] {
    let mut dims = [1; MAX_RANK];
    dims[MAX_RANK - shape.len()..].copy_from_slice(shape);
    dims
}

fn strides(dims: &[usize; MAX_RANK], out: &[usize; MAX_RANK]) -> [usize; MAX_RANK] {
    let mut s = [0; MAX_RANK];
    let mut acc = 1;
    for ax in (0..MAX_RANK).rev() {
        s[ax] = if dims[ax] == 1 && out[ax] != 1 { 0 } else { acc };
        acc *= dims[ax];
    }
    s
}

impl Broadcast {
    pub fn new(op: &'static str, a: &[usize], b: &[usize]) -> Result<Self, TensorError> {
        if a.len() != b.len() || a.len() > MAX_RANK {
            return Err(TensorError::Dimension {
                op,
                detail: format!("cannot broadcast shapes {a:?} and {b:?}: rank mismatch"),
            });
        }
        if a == b {
            let dims = padded(a);
            let s = strides(&dims, &dims);
            return Ok(Self { out_shape: a.to_vec(), dims, a_strides: s, b_strides: s, same: true });
        }
        let mut out_shape = Vec::with_capacity(a.len());
        for (axis, (&x, &y)) in a.iter().zip(b).enumerate() {
            if x == y || y == 1 {
                out_shape.push(x);
            } else if x == 1 {
                out_shape.push(y);
            } else {
                return Err(TensorError::Dimension {
                    op,
                    detail: format!(
                        "axis {axis}: sizes {x} and {y} are not broadcastable ({a:?} vs {b:?})"
                    ),
                });
            }
        }
        let dims = padded(&out_shape);
        Ok(Self {
            a_strides: strides(&padded(a), &dims),
            b_strides: strides(&padded(b), &dims),
            out_shape,
            dims,
            same: false,
        })
    }

    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    /// Visits `(out_index, a_index, b_index)` in output order.
    #[inline]
    pub fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        if self.same {
            for i in 0..self.numel() {
                f(i, i, i);
            }
            return;
        }
        let [d0, d1, d2, d3] = self.dims;
        let (a, b) = (self.a_strides, self.b_strides);
        let mut o = 0;
        for i0 in 0..d0 {
            for i1 in 0..d1 {
                for i2 in 0..d2 {
                    let ia = i0 * a[0] + i1 * a[1] + i2 * a[2];
                    let ib = i0 * b[0] + i1 * b[1] + i2 * b[2];
                    for i3 in 0..d3 {
                        f(o, ia + i3 * a[3], ib + i3 * b[3]);
                        o += 1;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_singleton_broadcasts_both_ways() {
        let ab = Broadcast::new("t", &[1, 3, 2, 2], &[1, 1, 2, 2]).unwrap();
        let ba = Broadcast::new("t", &[1, 1, 2, 2], &[1, 3, 2, 2]).unwrap();
        assert_eq!(ab.out_shape, vec![1, 3, 2, 2]);
        assert_eq!(ba.out_shape, vec![1, 3, 2, 2]);
        let mut pairs = Vec::new();
        ab.for_each(|o, ia, ib| pairs.push((o, ia, ib)));
        assert_eq!(pairs[5], (5, 5, 1));
        assert_eq!(pairs[11], (11, 11, 3));
    }

    #[test]
    fn incompatible_axis_is_named() {
        let err = Broadcast::new("mul", &[1, 3, 2, 2], &[1, 2, 2, 2]).unwrap_err();
        match err {
            TensorError::Dimension { detail, .. } => assert!(detail.contains("axis 1")),
            other => panic!("unexpected {other:?}"),
        }
    }
}
