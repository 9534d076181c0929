//! im2col / col2im convolution primitives backed by `matrixmultiply`.
//!
//! Layout convention: activations are `(N, C, H, W)`, convolution weights
//! are `(OC, IC, KH, KW)`, transposed-convolution weights are
//! `(IC, OC, KH, KW)` (matching the gradient-of-conv identity).

use ndarray::{Array4, ArrayView4, ArrayViewMut4};

/// `sgemm` wrapper: `c = a(m×k) · b(k×n)` into a fresh row-major buffer,
/// with `beta` applied to existing `c` contents.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    b: &[f32],
    c: &mut [f32],
    beta: f32,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output spatial size of a convolution.
pub fn conv_out_size(inp: usize, k: usize, stride: usize, pad: usize) -> usize {
    (inp + 2 * pad - k) / stride + 1
}

/// Output spatial size of a transposed convolution.
pub fn conv_t_out_size(inp: usize, k: usize, stride: usize, pad: usize) -> usize {
    (inp - 1) * stride + k - 2 * pad
}

/// Gathers convolution patches: output is `(IC·KH·KW, OH·OW)` for one
/// image, zero-padded where the window leaves the input.
fn im2col_one(
    x: &ArrayView4<f32>,
    n: usize,
    k: usize,
    stride: usize,
    pad: usize,
    cols: &mut [f32],
) {
    let (_, c, h, w) = x.dim();
    let oh = conv_out_size(h, k, stride, pad);
    let ow = conv_out_size(w, k, stride, pad);
    let ncols = oh * ow;
    let mut row = 0usize;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let base = row * ncols;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        cols[base + oy * ow..base + (oy + 1) * ow].fill(0.0);
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        cols[base + oy * ow + ox] = if ix < 0 || ix >= w as isize {
                            0.0
                        } else {
                            x[[n, ci, iy as usize, ix as usize]]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-adds columns back into an image (transpose of [`im2col_one`]).
fn col2im_one(
    cols: &[f32],
    mut x: ArrayViewMut4<f32>,
    n: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) {
    let (_, c, h, w) = x.dim();
    let ncols = oh * ow;
    let mut row = 0usize;
    for ci in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let base = row * ncols;
                for oy in 0..oh {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            x[[n, ci, iy as usize, ix as usize]] += cols[base + oy * ow + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Forward convolution with optional per-output-channel bias.
pub fn conv2d(
    x: &ArrayView4<f32>,
    w: &ArrayView4<f32>,
    bias: Option<&[f32]>,
    stride: usize,
    pad: usize,
) -> Array4<f32> {
    let (n, ic, h, wd) = x.dim();
    let (oc, wic, k, _) = w.dim();
    assert_eq!(ic, wic, "conv2d channel mismatch");
    let oh = conv_out_size(h, k, stride, pad);
    let ow = conv_out_size(wd, k, stride, pad);
    let krows = ic * k * k;
    let wslice = w.as_slice().expect("contiguous weights");
    let mut out = Array4::zeros((n, oc, oh, ow));
    let mut cols = vec![0.0f32; krows * oh * ow];
    for ni in 0..n {
        im2col_one(x, ni, k, stride, pad, &mut cols);
        let dst = out
            .slice_mut(ndarray::s![ni, .., .., ..])
            .into_slice_memory_order()
            .map(|s| s.as_mut_ptr());
        // Safe view into the contiguous (oc, oh*ow) sub-block.
        let out_block = unsafe {
            std::slice::from_raw_parts_mut(dst.expect("contiguous output"), oc * oh * ow)
        };
        gemm(oc, krows, oh * ow, wslice, &cols, out_block, 0.0);
    }
    if let Some(b) = bias {
        for ni in 0..n {
            for ci in 0..oc {
                out.slice_mut(ndarray::s![ni, ci, .., ..]).mapv_inplace(|v| v + b[ci]);
            }
        }
    }
    out
}

/// Gradient of [`conv2d`] with respect to the input.
pub fn conv2d_grad_x(
    dy: &ArrayView4<f32>,
    w: &ArrayView4<f32>,
    x_dims: (usize, usize, usize, usize),
    stride: usize,
    pad: usize,
) -> Array4<f32> {
    let (n, oc, oh, ow) = dy.dim();
    let (_, ic, k, _) = w.dim();
    let krows = ic * k * k;
    let wslice = w.as_slice().expect("contiguous weights");
    let mut dx = Array4::zeros(x_dims);
    let mut cols = vec![0.0f32; krows * oh * ow];
    for ni in 0..n {
        let dyb = dy.slice(ndarray::s![ni, .., .., ..]);
        let dyslice = dyb.to_slice().or_else(|| dyb.as_slice()).map(|s| s.to_vec());
        let dyvec = dyslice.unwrap_or_else(|| dyb.iter().copied().collect());
        // cols = Wᵀ(krows×oc) · dY(oc×oh·ow)
        colsT_gemm(wslice, &dyvec, oc, krows, oh * ow, &mut cols);
        col2im_one(&cols, dx.view_mut(), ni, k, stride, pad, oh, ow);
    }
    dx
}

/// `cols = Aᵀ · B` where `a` is `(m, k_rows)` row-major (so `Aᵀ` is
/// `(k_rows, m)`).
#[allow(non_snake_case)]
fn colsT_gemm(a: &[f32], b: &[f32], m: usize, k_rows: usize, n: usize, cols: &mut [f32]) {
    unsafe {
        matrixmultiply::sgemm(
            k_rows,
            m,
            n,
            1.0,
            a.as_ptr(),
            1,
            k_rows as isize, // stride pattern reads A transposed
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            cols.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Gradient of [`conv2d`] with respect to the weights; accumulates over
/// the batch.
pub fn conv2d_grad_w(
    dy: &ArrayView4<f32>,
    x: &ArrayView4<f32>,
    w_dims: (usize, usize, usize, usize),
    stride: usize,
    pad: usize,
) -> Array4<f32> {
    let (n, oc, oh, ow) = dy.dim();
    let (_, ic, k, _) = w_dims.into();
    let krows = ic * k * k;
    let mut dw = Array4::zeros(w_dims);
    let dwslice = dw.as_slice_mut().expect("contiguous");
    let mut cols = vec![0.0f32; krows * oh * ow];
    for ni in 0..n {
        im2col_one(x, ni, k, stride, pad, &mut cols);
        let dyb = dy.slice(ndarray::s![ni, .., .., ..]);
        let dyvec: Vec<f32> = dyb
            .to_slice()
            .map(|s| s.to_vec())
            .unwrap_or_else(|| dyb.iter().copied().collect());
        // dW(oc×krows) += dY(oc×ohow) · colsᵀ(ohow×krows)
        unsafe {
            matrixmultiply::sgemm(
                oc,
                oh * ow,
                krows,
                1.0,
                dyvec.as_ptr(),
                (oh * ow) as isize,
                1,
                cols.as_ptr(),
                1,
                (oh * ow) as isize, // read cols transposed
                1.0,
                dwslice.as_mut_ptr(),
                krows as isize,
                1,
            );
        }
    }
    dw
}

/// Per-output-channel bias gradient: sum of `dy` over batch and space.
pub fn conv2d_grad_b(dy: &ArrayView4<f32>) -> Vec<f32> {
    let (n, oc, oh, ow) = dy.dim();
    let mut db = vec![0.0f32; oc];
    for ni in 0..n {
        for ci in 0..oc {
            let mut s = 0.0;
            for y in 0..oh {
                for x in 0..ow {
                    s += dy[[ni, ci, y, x]];
                }
            }
            db[ci] += s;
        }
    }
    db
}

/// Forward transposed convolution (a.k.a. fractionally strided). Weight
/// layout is `(IC, OC, KH, KW)`; the computation is exactly
/// [`conv2d_grad_x`] with the roles of input and output swapped.
pub fn conv_transpose2d(
    x: &ArrayView4<f32>,
    w: &ArrayView4<f32>,
    bias: Option<&[f32]>,
    stride: usize,
    pad: usize,
) -> Array4<f32> {
    let (n, ic, h, wd) = x.dim();
    let (wic, oc, k, _) = w.dim();
    assert_eq!(ic, wic, "conv_transpose2d channel mismatch");
    let oh = conv_t_out_size(h, k, stride, pad);
    let ow = conv_t_out_size(wd, k, stride, pad);
    let krows = oc * k * k;
    let wslice = w.as_slice().expect("contiguous weights");
    let mut out = Array4::zeros((n, oc, oh, ow));
    let mut cols = vec![0.0f32; krows * h * wd];
    for ni in 0..n {
        let xb = x.slice(ndarray::s![ni, .., .., ..]);
        let xvec: Vec<f32> = xb
            .to_slice()
            .map(|s| s.to_vec())
            .unwrap_or_else(|| xb.iter().copied().collect());
        colsT_gemm(wslice, &xvec, ic, krows, h * wd, &mut cols);
        col2im_one(&cols, out.view_mut(), ni, k, stride, pad, h, wd);
    }
    if let Some(b) = bias {
        for ni in 0..n {
            for ci in 0..oc {
                out.slice_mut(ndarray::s![ni, ci, .., ..]).mapv_inplace(|v| v + b[ci]);
            }
        }
    }
    out
}

/// Gradient of [`conv_transpose2d`] with respect to its input: a forward
/// convolution of `dy` with the same weights.
pub fn conv_transpose2d_grad_x(
    dy: &ArrayView4<f32>,
    w: &ArrayView4<f32>,
    stride: usize,
    pad: usize,
) -> Array4<f32> {
    // dX[n, ic, y, x] = Σ_{oc,ky,kx} dY[n, oc, y·s+ky−p, x·s+kx−p] · W[ic, oc, ky, kx]
    // which is conv2d(dy, W viewed as (IC, OC, K, K)) — same index pattern
    // as the forward conv with weight layout (OC', IC', K, K) = (IC, OC, K, K).
    conv2d(dy, w, None, stride, pad)
}

/// Gradient of [`conv_transpose2d`] with respect to the weights.
pub fn conv_transpose2d_grad_w(
    dy: &ArrayView4<f32>,
    x: &ArrayView4<f32>,
    w_dims: (usize, usize, usize, usize),
    stride: usize,
    pad: usize,
) -> Array4<f32> {
    // By the conv/conv-transpose duality, dW here equals conv2d_grad_w with
    // the roles of x and dy exchanged: dy acts as the conv "input" and x as
    // the conv "output gradient". Resulting layout matches (IC, OC, K, K)
    // after swapping the first two axes of the conv gradient.
    let (ic, oc, k, _) = w_dims.into();
    let g = conv2d_grad_w(
        &x.view(),
        &dy.view(),
        (ic, oc, k, k),
        stride,
        pad,
    );
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randn4(seed: u64, d: (usize, usize, usize, usize)) -> Array4<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array4::from_shape_fn(d, |_| rng.gen_range(-1.0f32..1.0))
    }

    /// O(everything) reference convolution.
    fn conv_ref(
        x: &Array4<f32>,
        w: &Array4<f32>,
        bias: Option<&[f32]>,
        stride: usize,
        pad: usize,
    ) -> Array4<f32> {
        let (n, ic, h, wd) = x.dim();
        let (oc, _, k, _) = w.dim();
        let oh = conv_out_size(h, k, stride, pad);
        let ow = conv_out_size(wd, k, stride, pad);
        let mut out = Array4::zeros((n, oc, oh, ow));
        for ni in 0..n {
            for co in 0..oc {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut s = bias.map(|b| b[co]).unwrap_or(0.0);
                        for ci in 0..ic {
                            for ky in 0..k {
                                for kx in 0..k {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if iy >= 0
                                        && ix >= 0
                                        && (iy as usize) < h
                                        && (ix as usize) < wd
                                    {
                                        s += x[[ni, ci, iy as usize, ix as usize]]
                                            * w[[co, ci, ky, kx]];
                                    }
                                }
                            }
                        }
                        out[[ni, co, oy, ox]] = s;
                    }
                }
            }
        }
        out
    }

    fn assert_close(a: &Array4<f32>, b: &Array4<f32>, tol: f32) {
        assert_eq!(a.dim(), b.dim());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < tol, "{x} vs {y}");
        }
    }

    #[test]
    fn conv_matches_reference() {
        let x = randn4(1, (2, 3, 9, 9));
        let w = randn4(2, (5, 3, 4, 4));
        let b: Vec<f32> = (0..5).map(|i| i as f32 * 0.1).collect();
        for (stride, pad) in [(2, 1), (1, 1), (1, 0)] {
            let fast = conv2d(&x.view(), &w.view(), Some(&b), stride, pad);
            let slow = conv_ref(&x, &w, Some(&b), stride, pad);
            assert_close(&fast, &slow, 1e-4);
        }
    }

    #[test]
    fn conv_grads_match_finite_difference() {
        let x = randn4(3, (1, 2, 6, 6));
        let w = randn4(4, (3, 2, 4, 4));
        let (stride, pad) = (2, 1);
        let y = conv2d(&x.view(), &w.view(), None, stride, pad);
        let dy = randn4(5, y.dim());
        let dx = conv2d_grad_x(&dy.view(), &w.view(), x.dim(), stride, pad);
        let dw = conv2d_grad_w(&dy.view(), &x.view(), w.dim(), stride, pad);
        let loss = |x: &Array4<f32>, w: &Array4<f32>| -> f32 {
            conv2d(&x.view(), &w.view(), None, stride, pad)
                .iter()
                .zip(dy.iter())
                .map(|(a, b)| a * b)
                .sum()
        };
        let eps = 1e-3;
        for idx in [(0, 0, 0, 0), (0, 1, 3, 2), (0, 0, 5, 5)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&xp, &w) - loss(&xm, &w)) / (2.0 * eps);
            assert!((fd - dx[idx]).abs() < 1e-2, "dx {fd} vs {}", dx[idx]);
        }
        for idx in [(0, 0, 0, 0), (2, 1, 3, 3), (1, 0, 2, 1)] {
            let mut wp = w.clone();
            wp[idx] += eps;
            let mut wm = w.clone();
            wm[idx] -= eps;
            let fd = (loss(&x, &wp) - loss(&x, &wm)) / (2.0 * eps);
            assert!((fd - dw[idx]).abs() < 1e-2, "dw {fd} vs {}", dw[idx]);
        }
    }

    #[test]
    fn conv_transpose_doubles_spatial_size() {
        let x = randn4(7, (1, 3, 8, 8));
        let w = randn4(8, (3, 2, 4, 4));
        let y = conv_transpose2d(&x.view(), &w.view(), None, 2, 1);
        assert_eq!(y.dim(), (1, 2, 16, 16));
    }

    #[test]
    fn conv_transpose_is_adjoint_of_conv() {
        // <conv(x), y> = <x, convT(y)> with shared kernel.
        let x = randn4(9, (1, 3, 8, 8));
        let w = randn4(10, (2, 3, 4, 4)); // conv layout (OC=2, IC=3)
        let y = randn4(11, (1, 2, 4, 4));
        let cx = conv2d(&x.view(), &w.view(), None, 2, 1);
        let lhs: f32 = cx.iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        // conv_transpose2d reinterprets the same weight memory as
        // (IC=2, OC=3, K, K), which is exactly conv2d_grad_x.
        let via_convt = conv_transpose2d(&y.view(), &w.view(), None, 2, 1);
        let gx = conv2d_grad_x(&y.view(), &w.view(), x.dim(), 2, 1);
        for (a, b) in via_convt.iter().zip(gx.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
        let rhs: f32 = x.iter().zip(gx.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-2, "{lhs} vs {rhs}");
    }

    #[test]
    fn conv_transpose_grads_match_finite_difference() {
        let x = randn4(12, (1, 2, 5, 5));
        let w = randn4(13, (2, 3, 4, 4)); // (IC, OC, K, K)
        let (stride, pad) = (2, 1);
        let y = conv_transpose2d(&x.view(), &w.view(), None, stride, pad);
        let dy = randn4(14, y.dim());
        let dx = conv_transpose2d_grad_x(&dy.view(), &w.view(), stride, pad);
        let dw = conv_transpose2d_grad_w(&dy.view(), &x.view(), w.dim(), stride, pad);
        let loss = |x: &Array4<f32>, w: &Array4<f32>| -> f32 {
            conv_transpose2d(&x.view(), &w.view(), None, stride, pad)
                .iter()
                .zip(dy.iter())
                .map(|(a, b)| a * b)
                .sum()
        };
        let eps = 1e-3;
        for idx in [(0, 0, 0, 0), (0, 1, 2, 3), (0, 0, 4, 4)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&xp, &w) - loss(&xm, &w)) / (2.0 * eps);
            assert!((fd - dx[idx]).abs() < 1e-2, "dx {fd} vs {}", dx[idx]);
        }
        for idx in [(0, 0, 0, 0), (1, 2, 3, 1), (0, 1, 1, 2)] {
            let mut wp = w.clone();
            wp[idx] += eps;
            let mut wm = w.clone();
            wm[idx] -= eps;
            let fd = (loss(&x, &wp) - loss(&x, &wm)) / (2.0 * eps);
            assert!((fd - dw[idx]).abs() < 1e-2, "dw {fd} vs {}", dw[idx]);
        }
    }

    #[test]
    fn bias_grad_sums_over_batch_and_space() {
        let dy = Array4::ones((2, 3, 4, 4));
        assert_eq!(conv2d_grad_b(&dy.view()), vec![32.0, 32.0, 32.0]);
    }
}
