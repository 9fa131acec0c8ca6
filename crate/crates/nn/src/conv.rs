//! im2col-based convolution kernels shared by the graph ops.
//!
//! Shapes follow the channels-first convention: 1-D inputs are
//! `(batch, channels, length)`, 2-D inputs `(batch, channels, height, width)`.
//! The 1-D variant is causal (left zero padding of `(kernel - 1) * dilation`),
//! the 2-D variant is "same" padded for odd kernels.

use ndarray::{Array2, Array3, Array4, ArrayView3, ArrayView4, Axis};
use trajmia_core::Scalar;

/// Causal left padding for a dilated kernel.
pub fn causal_pad(kernel: usize, dilation: usize) -> usize {
    (kernel - 1) * dilation
}

fn im2col_1d<F: Scalar>(x: &ArrayView3<F>, kernel: usize, dilation: usize) -> Array2<F> {
    let (n, c_in, len) = x.dim();
    let pad = causal_pad(kernel, dilation);
    let mut col = Array2::<F>::zeros((n * len, c_in * kernel));
    for b in 0..n {
        for t in 0..len {
            let row = b * len + t;
            for c in 0..c_in {
                for k in 0..kernel {
                    // padded index t + k*d maps to source index t + k*d - pad
                    let src = (t + k * dilation) as isize - pad as isize;
                    if src >= 0 {
                        col[[row, c * kernel + k]] = x[[b, c, src as usize]];
                    }
                }
            }
        }
    }
    col
}

fn weights_as_matrix_1d<F: Scalar>(w: &ArrayView3<F>) -> Array2<F> {
    let (c_out, c_in, kernel) = w.dim();
    let mut m = Array2::<F>::zeros((c_in * kernel, c_out));
    for o in 0..c_out {
        for c in 0..c_in {
            for k in 0..kernel {
                m[[c * kernel + k, o]] = w[[o, c, k]];
            }
        }
    }
    m
}

/// Forward dilated causal 1-D convolution; returns `(n, c_out, len)`.
pub fn conv1d_forward<F: Scalar>(
    x: &ArrayView3<F>,
    w: &ArrayView3<F>,
    bias: &[F],
    dilation: usize,
) -> Array3<F> {
    let (n, c_in, len) = x.dim();
    let (c_out, wc_in, kernel) = w.dim();
    assert_eq!(c_in, wc_in, "conv1d channel mismatch");
    assert_eq!(bias.len(), c_out, "conv1d bias mismatch");

    let col = im2col_1d(x, kernel, dilation);
    let flat = col.dot(&weights_as_matrix_1d(w)); // (n*len, c_out)

    let mut y = Array3::<F>::zeros((n, c_out, len));
    for b in 0..n {
        for t in 0..len {
            let row = b * len + t;
            for o in 0..c_out {
                y[[b, o, t]] = flat[[row, o]] + bias[o];
            }
        }
    }
    y
}

/// Backward pass; returns `(dx, dw, dbias)`.
pub fn conv1d_backward<F: Scalar>(
    x: &ArrayView3<F>,
    w: &ArrayView3<F>,
    dy: &ArrayView3<F>,
    dilation: usize,
) -> (Array3<F>, Array3<F>, Vec<F>) {
    let (n, c_in, len) = x.dim();
    let (c_out, _, kernel) = w.dim();
    let pad = causal_pad(kernel, dilation);

    let mut dy_flat = Array2::<F>::zeros((n * len, c_out));
    for b in 0..n {
        for t in 0..len {
            for o in 0..c_out {
                dy_flat[[b * len + t, o]] = dy[[b, o, t]];
            }
        }
    }

    let col = im2col_1d(x, kernel, dilation);
    let dw_mat = col.t().dot(&dy_flat); // (c_in*kernel, c_out)
    let mut dw = Array3::<F>::zeros((c_out, c_in, kernel));
    for o in 0..c_out {
        for c in 0..c_in {
            for k in 0..kernel {
                dw[[o, c, k]] = dw_mat[[c * kernel + k, o]];
            }
        }
    }

    let dbias: Vec<F> = dy_flat.sum_axis(Axis(0)).to_vec();

    let dcol = dy_flat.dot(&weights_as_matrix_1d(w).t().to_owned()); // (n*len, c_in*kernel)
    let mut dx = Array3::<F>::zeros((n, c_in, len));
    for b in 0..n {
        for t in 0..len {
            let row = b * len + t;
            for c in 0..c_in {
                for k in 0..kernel {
                    let src = (t + k * dilation) as isize - pad as isize;
                    if src >= 0 {
                        dx[[b, c, src as usize]] += dcol[[row, c * kernel + k]];
                    }
                }
            }
        }
    }
    (dx, dw, dbias)
}

fn im2col_2d<F: Scalar>(x: &ArrayView4<F>, kh: usize, kw: usize) -> Array2<F> {
    let (n, c_in, h, w) = x.dim();
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut col = Array2::<F>::zeros((n * h * w, c_in * kh * kw));
    for b in 0..n {
        for i in 0..h {
            for j in 0..w {
                let row = b * h * w + i * w + j;
                for c in 0..c_in {
                    for a in 0..kh {
                        let si = (i + a) as isize - ph as isize;
                        if si < 0 || si >= h as isize {
                            continue;
                        }
                        for z in 0..kw {
                            let sj = (j + z) as isize - pw as isize;
                            if sj < 0 || sj >= w as isize {
                                continue;
                            }
                            col[[row, c * kh * kw + a * kw + z]] = x[[b, c, si as usize, sj as usize]];
                        }
                    }
                }
            }
        }
    }
    col
}

fn weights_as_matrix_2d<F: Scalar>(w: &ArrayView4<F>) -> Array2<F> {
    let (c_out, c_in, kh, kw) = w.dim();
    let mut m = Array2::<F>::zeros((c_in * kh * kw, c_out));
    for o in 0..c_out {
        for c in 0..c_in {
            for a in 0..kh {
                for z in 0..kw {
                    m[[c * kh * kw + a * kw + z, o]] = w[[o, c, a, z]];
                }
            }
        }
    }
    m
}

/// Forward "same"-padded 2-D convolution for odd kernels;
/// returns `(n, c_out, h, w)`.
pub fn conv2d_forward<F: Scalar>(
    x: &ArrayView4<F>,
    w: &ArrayView4<F>,
    bias: &[F],
) -> Array4<F> {
    let (n, c_in, h, wd) = x.dim();
    let (c_out, wc_in, kh, kw) = w.dim();
    assert_eq!(c_in, wc_in, "conv2d channel mismatch");
    assert!(kh % 2 == 1 && kw % 2 == 1, "conv2d requires odd kernels");
    assert_eq!(bias.len(), c_out, "conv2d bias mismatch");

    let col = im2col_2d(x, kh, kw);
    let flat = col.dot(&weights_as_matrix_2d(w)); // (n*h*w, c_out)

    let mut y = Array4::<F>::zeros((n, c_out, h, wd));
    for b in 0..n {
        for i in 0..h {
            for j in 0..wd {
                let row = b * h * wd + i * wd + j;
                for o in 0..c_out {
                    y[[b, o, i, j]] = flat[[row, o]] + bias[o];
                }
            }
        }
    }
    y
}

/// Backward pass; returns `(dx, dw, dbias)`.
pub fn conv2d_backward<F: Scalar>(
    x: &ArrayView4<F>,
    w: &ArrayView4<F>,
    dy: &ArrayView4<F>,
) -> (Array4<F>, Array4<F>, Vec<F>) {
    let (n, c_in, h, wd) = x.dim();
    let (c_out, _, kh, kw) = w.dim();
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);

    let mut dy_flat = Array2::<F>::zeros((n * h * wd, c_out));
    for b in 0..n {
        for i in 0..h {
            for j in 0..wd {
                for o in 0..c_out {
                    dy_flat[[b * h * wd + i * wd + j, o]] = dy[[b, o, i, j]];
                }
            }
        }
    }

    let col = im2col_2d(x, kh, kw);
    let dw_mat = col.t().dot(&dy_flat);
    let mut dw = Array4::<F>::zeros((c_out, c_in, kh, kw));
    for o in 0..c_out {
        for c in 0..c_in {
            for a in 0..kh {
                for z in 0..kw {
                    dw[[o, c, a, z]] = dw_mat[[c * kh * kw + a * kw + z, o]];
                }
            }
        }
    }

    let dbias: Vec<F> = dy_flat.sum_axis(Axis(0)).to_vec();

    let dcol = dy_flat.dot(&weights_as_matrix_2d(w).t().to_owned());
    let mut dx = Array4::<F>::zeros((n, c_in, h, wd));
    for b in 0..n {
        for i in 0..h {
            for j in 0..wd {
                let row = b * h * wd + i * wd + j;
                for c in 0..c_in {
                    for a in 0..kh {
                        let si = (i + a) as isize - ph as isize;
                        if si < 0 || si >= h as isize {
                            continue;
                        }
                        for z in 0..kw {
                            let sj = (j + z) as isize - pw as isize;
                            if sj < 0 || sj >= wd as isize {
                                continue;
                            }
                            dx[[b, c, si as usize, sj as usize]] += dcol[[row, c * kh * kw + a * kw + z]];
                        }
                    }
                }
            }
        }
    }
    (dx, dw, dbias)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array3, Array4};

    /// Direct-loop reference convolution (the oracle the fast path is
    /// checked against).
    fn conv1d_naive(
        x: &Array3<f64>,
        w: &Array3<f64>,
        bias: &[f64],
        dilation: usize,
    ) -> Array3<f64> {
        let (n, c_in, len) = x.dim();
        let (c_out, _, kernel) = w.dim();
        let pad = causal_pad(kernel, dilation);
        let mut y = Array3::<f64>::zeros((n, c_out, len));
        for b in 0..n {
            for o in 0..c_out {
                for t in 0..len {
                    let mut acc = bias[o];
                    for c in 0..c_in {
                        for k in 0..kernel {
                            let src = (t + k * dilation) as isize - pad as isize;
                            if src >= 0 {
                                acc += w[[o, c, k]] * x[[b, c, src as usize]];
                            }
                        }
                    }
                    y[[b, o, t]] = acc;
                }
            }
        }
        y
    }

    fn rand_array(shape: &[usize], seed: u64) -> Vec<f64> {
        let mut state = seed;
        (0..shape.iter().product::<usize>())
            .map(|_| {
                state = trajmia_core::seeding::splitmix64(state);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn im2col_conv1d_matches_the_naive_loop() {
        for dilation in [1usize, 2, 4] {
            let x = Array3::from_shape_vec((2, 3, 7), rand_array(&[2, 3, 7], 1)).unwrap();
            let w = Array3::from_shape_vec((4, 3, 3), rand_array(&[4, 3, 3], 2)).unwrap();
            let bias: Vec<f64> = rand_array(&[4], 3);
            let fast = conv1d_forward(&x.view(), &w.view(), &bias, dilation);
            let slow = conv1d_naive(&x, &w, &bias, dilation);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b} at dilation {dilation}");
            }
        }
    }

    #[test]
    fn conv1d_is_causal() {
        // Perturbing x at time t may change outputs only at times >= t.
        let x = Array3::from_shape_vec((1, 2, 6), rand_array(&[1, 2, 6], 4)).unwrap();
        let w = Array3::from_shape_vec((2, 2, 3), rand_array(&[2, 2, 3], 5)).unwrap();
        let bias = vec![0.0, 0.0];
        let y0 = conv1d_forward(&x.view(), &w.view(), &bias, 2);
        let mut x2 = x.clone();
        x2[[0, 0, 3]] += 1.0;
        let y1 = conv1d_forward(&x2.view(), &w.view(), &bias, 2);
        for t in 0..3 {
            for o in 0..2 {
                assert_eq!(y0[[0, o, t]], y1[[0, o, t]], "t={t} must be untouched");
            }
        }
        assert!(y0 != y1);
    }

    #[test]
    fn conv2d_same_keeps_shape_and_matches_naive_center() {
        let x = Array4::from_shape_vec((1, 2, 4, 5), rand_array(&[1, 2, 4, 5], 6)).unwrap();
        let w = Array4::from_shape_vec((3, 2, 3, 3), rand_array(&[3, 2, 3, 3], 7)).unwrap();
        let bias: Vec<f64> = rand_array(&[3], 8);
        let y = conv2d_forward(&x.view(), &w.view(), &bias);
        assert_eq!(y.dim(), (1, 3, 4, 5));

        // interior point check against a direct sum
        let (i, j) = (2usize, 2usize);
        for o in 0..3 {
            let mut acc = bias[o];
            for c in 0..2 {
                for a in 0..3 {
                    for z in 0..3 {
                        acc += w[[o, c, a, z]] * x[[0, c, i + a - 1, j + z - 1]];
                    }
                }
            }
            assert!((y[[0, o, i, j]] - acc).abs() < 1e-12);
        }
    }
}
