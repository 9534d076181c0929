//! Orthonormal 8×8 type-II DCT and its inverse.
//!
//! Floating-point, no fast integer approximation: the encoder favors
//! correctness and testability over speed. Samples are level-shifted by
//! −128 before the forward transform; the inverse adds the shift back and
//! clamps to `[0, 255]`.

/// `BASIS[u][x] = C(u) * cos((2x+1)uπ/16)` with orthonormal scaling.
fn basis() -> [[f64; 8]; 8] {
    let mut m = [[0.0; 8]; 8];
    for (u, row) in m.iter_mut().enumerate() {
        let c = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (x, v) in row.iter_mut().enumerate() {
            *v = c * ((2 * x + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    m
}

/// Forward 2D DCT of a level-shifted 8×8 sample block.
pub fn dct_2d(samples: &[f32; 64]) -> [f32; 64] {
    let b = basis();
    let mut shifted = [0.0f64; 64];
    for i in 0..64 {
        shifted[i] = samples[i] as f64 - 128.0;
    }
    // rows then columns
    let mut tmp = [0.0f64; 64];
    for r in 0..8 {
        for u in 0..8 {
            tmp[r * 8 + u] = (0..8).map(|x| shifted[r * 8 + x] * b[u][x]).sum();
        }
    }
    let mut out = [0.0f32; 64];
    for u in 0..8 {
        for v in 0..8 {
            out[u * 8 + v] = (0..8).map(|y| tmp[y * 8 + v] * b[u][y]).sum::<f64>() as f32;
        }
    }
    out
}

/// Inverse 2D DCT; adds the +128 level shift, rounds to integer sample
/// values and clamps to `[0, 255]`.
pub fn idct_2d(coeffs: &[f32; 64]) -> [f32; 64] {
    let b = basis();
    let mut tmp = [0.0f64; 64];
    for v in 0..8 {
        for y in 0..8 {
            tmp[y * 8 + v] = (0..8).map(|u| coeffs[u * 8 + v] as f64 * b[u][y]).sum();
        }
    }
    let mut out = [0.0f32; 64];
    for y in 0..8 {
        for x in 0..8 {
            let s: f64 = (0..8).map(|v| tmp[y * 8 + v] * b[v][x]).sum();
            out[y * 8 + x] = ((s + 128.0).round() as f32).clamp(0.0, 255.0);
        }
    }
    out
}

/// Dequantization multipliers for the AAN scaled IDCT: quant value times
/// the row/column AAN scale factors, computed in f64 and narrowed to f32.
pub fn aan_dequant_table(q: &[u16; 64]) -> [f32; 64] {
    const AAN: [f64; 8] = [
        1.0, 1.387039845, 1.306562965, 1.175875602, 1.0, 0.785694958, 0.541196100, 0.275899379,
    ];
    let mut fm = [0.0f32; 64];
    for r in 0..8 {
        for c in 0..8 {
            fm[r * 8 + c] = (q[r * 8 + c] as f64 * AAN[r] * AAN[c]) as f32;
        }
    }
    fm
}

/// Arai–Agui–Nakajima scaled inverse DCT in single-precision float, the
/// same algorithm used by the widely deployed decoder implementations.
/// Dequantization is folded into the multiplier table from
/// [`aan_dequant_table`]. Rounds via truncate-after-adding-half and clamps
/// to `[0, 255]`, reproducing common decoder output bit-for-bit.
pub fn idct_2d_aan(coeffs: &[i32; 64], fm: &[f32; 64]) -> [f32; 64] {
    const C4_2: f32 = 1.414213562; // 2*cos(pi/4)
    const C2_2: f32 = 1.847759065; // 2*cos(pi/8)
    const C2M6: f32 = 1.082392200; // 2*(cos(pi/8) - cos(3pi/8))
    const C2P6: f32 = 2.613125930; // 2*(cos(pi/8) + cos(3pi/8))
    let deq = |i: usize| coeffs[i] as f32 * (fm[i] * 0.125f32);
    let mut ws = [0.0f32; 64];

    // Pass 1: columns.
    for col in 0..8 {
        if (1..8).all(|r| coeffs[r * 8 + col] == 0) {
            let dc = deq(col);
            for r in 0..8 {
                ws[r * 8 + col] = dc;
            }
            continue;
        }
        let tmp0 = deq(col);
        let tmp1 = deq(2 * 8 + col);
        let tmp2 = deq(4 * 8 + col);
        let tmp3 = deq(6 * 8 + col);
        let tmp10 = tmp0 + tmp2;
        let tmp11 = tmp0 - tmp2;
        let tmp13 = tmp1 + tmp3;
        let tmp12 = (tmp1 - tmp3) * C4_2 - tmp13;
        let tmp0 = tmp10 + tmp13;
        let tmp3 = tmp10 - tmp13;
        let tmp1 = tmp11 + tmp12;
        let tmp2 = tmp11 - tmp12;

        let tmp4 = deq(8 + col);
        let tmp5 = deq(3 * 8 + col);
        let tmp6 = deq(5 * 8 + col);
        let tmp7 = deq(7 * 8 + col);
        let z13 = tmp6 + tmp5;
        let z10 = tmp6 - tmp5;
        let z11 = tmp4 + tmp7;
        let z12 = tmp4 - tmp7;
        let tmp7 = z11 + z13;
        let tmp11 = (z11 - z13) * C4_2;
        let z5 = (z10 + z12) * C2_2;
        let tmp10 = z5 - z12 * C2M6;
        let tmp12 = z5 - z10 * C2P6;
        let tmp6 = tmp12 - tmp7;
        let tmp5 = tmp11 - tmp6;
        let tmp4 = tmp10 - tmp5;

        ws[col] = tmp0 + tmp7;
        ws[7 * 8 + col] = tmp0 - tmp7;
        ws[8 + col] = tmp1 + tmp6;
        ws[6 * 8 + col] = tmp1 - tmp6;
        ws[2 * 8 + col] = tmp2 + tmp5;
        ws[5 * 8 + col] = tmp2 - tmp5;
        ws[3 * 8 + col] = tmp3 + tmp4;
        ws[4 * 8 + col] = tmp3 - tmp4;
    }

    // Pass 2: rows, with the +128 level shift and +0.5 rounding bias
    // folded in before truncation.
    let mut out = [0.0f32; 64];
    for row in 0..8 {
        let w = &ws[row * 8..row * 8 + 8];
        let z5 = w[0] + 128.5f32;
        let tmp10 = z5 + w[4];
        let tmp11 = z5 - w[4];
        let tmp13 = w[2] + w[6];
        let tmp12 = (w[2] - w[6]) * C4_2 - tmp13;
        let tmp0 = tmp10 + tmp13;
        let tmp3 = tmp10 - tmp13;
        let tmp1 = tmp11 + tmp12;
        let tmp2 = tmp11 - tmp12;

        let z13 = w[5] + w[3];
        let z10 = w[5] - w[3];
        let z11 = w[1] + w[7];
        let z12 = w[1] - w[7];
        let tmp7 = z11 + z13;
        let tmp11 = (z11 - z13) * C4_2;
        let z5 = (z10 + z12) * C2_2;
        let tmp10 = z5 - z12 * C2M6;
        let tmp12 = z5 - z10 * C2P6;
        let tmp6 = tmp12 - tmp7;
        let tmp5 = tmp11 - tmp6;
        let tmp4 = tmp10 - tmp5;

        let clip = |v: f32| (v as i32).clamp(0, 255) as f32;
        let o = &mut out[row * 8..row * 8 + 8];
        o[0] = clip(tmp0 + tmp7);
        o[7] = clip(tmp0 - tmp7);
        o[1] = clip(tmp1 + tmp6);
        o[6] = clip(tmp1 - tmp6);
        o[2] = clip(tmp2 + tmp5);
        o[5] = clip(tmp2 - tmp5);
        o[3] = clip(tmp3 + tmp4);
        o[4] = clip(tmp3 - tmp4);
    }
    out
}

/// Inverse transform without shift or clamping; used by tests that probe
/// the pre-clamp reconstruction.
pub fn idct_2d_unclamped(coeffs: &[f32; 64]) -> [f32; 64] {
    let b = basis();
    let mut tmp = [0.0f64; 64];
    for v in 0..8 {
        for y in 0..8 {
            tmp[y * 8 + v] = (0..8).map(|u| coeffs[u * 8 + v] as f64 * b[u][y]).sum();
        }
    }
    let mut out = [0.0f32; 64];
    for y in 0..8 {
        for x in 0..8 {
            let s: f64 = (0..8).map(|v| tmp[y * 8 + v] * b[v][x]).sum();
            out[y * 8 + x] = (s + 128.0) as f32;
        }
    }
    out
}
