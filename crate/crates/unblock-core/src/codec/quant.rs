//! Quantization tables (ISO/IEC 10918-1 Annex K) and IJG-style quality scaling.

use super::CodecError;

/// Annex K Table K.1, luminance, raster order.
pub const BASE_LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Annex K Table K.2, chrominance, raster order.
pub const BASE_CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99, //
    18, 21, 26, 66, 99, 99, 99, 99, //
    24, 26, 56, 99, 99, 99, 99, 99, //
    47, 66, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99, //
    99, 99, 99, 99, 99, 99, 99, 99,
];

/// Luma + chroma quantization tables at a given quality setting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTableSet {
    pub luma: [u16; 64],
    pub chroma: [u16; 64],
    pub quality: u8,
}

/// IJG scaling of the Annex K base tables.
///
/// `scale = 5000/q` for `q < 50`, else `200 - 2q`; each entry becomes
/// `clamp(round((base*scale + 50) / 100), 1, 255)`.
pub fn scale_quant_tables(quality: u8) -> Result<QuantTableSet, CodecError> {
    if !(1..=100).contains(&quality) {
        return Err(CodecError::QualityOutOfRange(quality));
    }
    let scale: u32 = if quality < 50 { 5000 / quality as u32 } else { 200 - 2 * quality as u32 };
    let apply = |base: &[u16; 64]| -> [u16; 64] {
        std::array::from_fn(|i| {
            let v = (base[i] as u32 * scale + 50) / 100;
            v.clamp(1, 255) as u16
        })
    };
    Ok(QuantTableSet { luma: apply(&BASE_LUMA), chroma: apply(&BASE_CHROMA), quality })
}

/// Entry-wise `round(coeff / table_entry)`, half away from zero.
pub fn quantize_block(coeffs: &[f32; 64], table: &[u16; 64]) -> [i32; 64] {
    std::array::from_fn(|i| (coeffs[i] / table[i] as f32).round() as i32)
}

/// Entry-wise `q * table_entry`.
pub fn dequantize_block(q: &[i32; 64], table: &[u16; 64]) -> [f32; 64] {
    std::array::from_fn(|i| (q[i] * table[i] as i32) as f32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quality_50_is_base_tables() {
        let t = scale_quant_tables(50).unwrap();
        assert_eq!(t.luma, BASE_LUMA);
        assert_eq!(t.chroma, BASE_CHROMA);
    }

    #[test]
    fn quality_100_is_all_ones() {
        // scale = 0 so every entry rounds to 0 and clamps up to 1
        let t = scale_quant_tables(100).unwrap();
        assert!(t.luma.iter().chain(t.chroma.iter()).all(|&v| v == 1));
    }

    #[test]
    fn quality_1_clamps_to_255() {
        // 16 * 5000 / 100 = 800 -> clamped
        let t = scale_quant_tables(1).unwrap();
        assert_eq!(t.luma[0], 255);
        assert!(t.luma.iter().chain(t.chroma.iter()).all(|&v| (1..=255).contains(&v)));
    }

    #[test]
    fn formula_oracle_across_qualities() {
        for q in 1..=100u8 {
            let t = scale_quant_tables(q).unwrap();
            let scale = if q < 50 { 5000 / q as u32 } else { 200 - 2 * q as u32 };
            for i in 0..64 {
                let want = ((BASE_LUMA[i] as u32 * scale + 50) / 100).clamp(1, 255) as u16;
                assert_eq!(t.luma[i], want, "q={q} i={i}");
            }
        }
    }

    #[test]
    fn quality_out_of_range() {
        assert!(scale_quant_tables(0).is_err());
        assert!(scale_quant_tables(101).is_err());
    }

    #[test]
    fn quantize_rounding() {
        let mut table = [16u16; 64];
        table[1] = 16;
        let mut coeffs = [0.0f32; 64];
        coeffs[0] = 100.0; // round(6.25) = 6
        coeffs[1] = -100.0; // symmetric
        let q = quantize_block(&coeffs, &table);
        assert_eq!(q[0], 6);
        assert_eq!(q[1], -6);
        assert_eq!(q[2], 0);
    }

    #[test]
    fn dequantize_and_bound() {
        let table = [16u16; 64];
        let mut q = [0i32; 64];
        q[0] = 6;
        let d = dequantize_block(&q, &table);
        assert_eq!(d[0], 96.0);
        assert_eq!(d[1], 0.0);

        // |dequantize(quantize(c)) - c| <= table/2
        let coeffs: [f32; 64] = std::array::from_fn(|i| (i as f32 - 31.5) * 7.3);
        let r = dequantize_block(&quantize_block(&coeffs, &table), &table);
        for i in 0..64 {
            assert!((r[i] - coeffs[i]).abs() <= 8.0 + 1e-4);
        }
    }
}
