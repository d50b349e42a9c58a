//! Convolution via im2col, and inverted dropout.

use ndarray::{Array2, Array4, ArrayView2, ArrayView4};
use rand::{Rng, RngCore};

pub(crate) const KERNEL: usize = 3;
pub(crate) const STRIDE: usize = 2;
pub(crate) const PAD: usize = 1;

pub(crate) fn conv_out(size: usize) -> usize {
    (size + 2 * PAD - KERNEL) / STRIDE + 1
}

/// Unfold 3×3 stride-2 patches of an NHWC tensor into rows
/// `(n, oy, ox)` × columns `(ky, kx, c)`.
pub(crate) fn im2col(x: ArrayView4<f64>) -> Array2<f64> {
    let (n, h, w, c) = x.dim();
    let (ho, wo) = (conv_out(h), conv_out(w));
    let x = x.as_standard_layout();
    let src = x.as_slice().expect("standard layout");
    let row_len = KERNEL * KERNEL * c;
    let mut cols = vec![0.0; n * ho * wo * row_len];
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((b * ho + oy) * wo + ox) * row_len;
                for ky in 0..KERNEL {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let s = ((b * h + iy as usize) * w + ix as usize) * c;
                        let d = row + (ky * KERNEL + kx) * c;
                        cols[d..d + c].copy_from_slice(&src[s..s + c]);
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((n * ho * wo, row_len), cols).expect("im2col shape")
}

/// Adjoint of [`im2col`]: scatter-add patch gradients back to NHWC.
pub(crate) fn col2im(cols: ArrayView2<f64>, shape: (usize, usize, usize, usize)) -> Array4<f64> {
    let (n, h, w, c) = shape;
    let (ho, wo) = (conv_out(h), conv_out(w));
    let cols = cols.as_standard_layout();
    let src = cols.as_slice().expect("standard layout");
    let row_len = KERNEL * KERNEL * c;
    let mut out = vec![0.0; n * h * w * c];
    for b in 0..n {
        for oy in 0..ho {
            for ox in 0..wo {
                let row = ((b * ho + oy) * wo + ox) * row_len;
                for ky in 0..KERNEL {
                    let iy = (oy * STRIDE + ky) as isize - PAD as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..KERNEL {
                        let ix = (ox * STRIDE + kx) as isize - PAD as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let d = ((b * h + iy as usize) * w + ix as usize) * c;
                        let s = row + (ky * KERNEL + kx) * c;
                        for k in 0..c {
                            out[d + k] += src[s + k];
                        }
                    }
                }
            }
        }
    }
    Array4::from_shape_vec(shape, out).expect("col2im shape")
}

/// Inverted-dropout mask: kept units are scaled by `1/keep` so evaluation
/// needs no rescaling.
pub(crate) fn dropout_mask(rows: usize, cols: usize, keep: f64, rng: &mut dyn RngCore) -> Array2<f64> {
    let scale = 1.0 / keep;
    Array2::from_shape_simple_fn((rows, cols), || if rng.random_bool(keep) { scale } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use ndarray::Array4;

    use super::*;

    #[test]
    fn output_sizes() {
        assert_eq!(conv_out(32), 16);
        assert_eq!(conv_out(16), 8);
        assert_eq!(conv_out(5), 3);
        assert_eq!(conv_out(1), 1);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let shape = (2, 5, 4, 3);
        let x = Array4::from_shape_fn(shape, |(a, b, c, d)| ((a * 31 + b * 7 + c * 3 + d) % 11) as f64 - 5.0);
        let cols = im2col(x.view());
        let y = Array2::from_shape_fn(cols.dim(), |(i, j)| ((i * 13 + j * 5) % 9) as f64 - 4.0);
        let lhs = (&cols * &y).sum();
        let rhs = (&x * &col2im(y.view(), shape)).sum();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn im2col_center_tap() {
        let x = Array4::from_shape_fn((1, 1, 1, 2), |(_, _, _, c)| c as f64 + 1.0);
        let cols = im2col(x.view());
        assert_eq!(cols.dim(), (1, 18));
        let center = 4 * 2;
        assert_eq!(cols[[0, center]], 1.0);
        assert_eq!(cols[[0, center + 1]], 2.0);
        assert_eq!(cols.sum(), 3.0);
    }
}
