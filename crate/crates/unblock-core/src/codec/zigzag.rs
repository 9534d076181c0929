//! Zigzag scan order for 8×8 coefficient blocks.

/// `ZIGZAG[k]` is the raster index (row*8+col) of the k-th coefficient in scan order.
pub const ZIGZAG: [usize; 64] = [
    0, 1, 8, 16, 9, 2, 3, 10, 17, 24, 32, 25, 18, 11, 4, 5, 12, 19, 26, 33, 40, 48, 41, 34, 27,
    20, 13, 6, 7, 14, 21, 28, 35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51, 58,
    59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63,
];

/// Reorders a raster-order 8×8 block into the zigzag scan sequence.
pub fn zigzag<T: Copy>(block: &[T; 64]) -> [T; 64] {
    std::array::from_fn(|k| block[ZIGZAG[k]])
}

/// Inverse of [`zigzag`].
pub fn inverse_zigzag<T: Copy + Default>(scan: &[T; 64]) -> [T; 64] {
    let mut block = [T::default(); 64];
    for (k, &v) in scan.iter().enumerate() {
        block[ZIGZAG[k]] = v;
    }
    block
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: walk anti-diagonals with alternating direction.
    fn zigzag_order_oracle() -> Vec<(usize, usize)> {
        let mut order = Vec::with_capacity(64);
        for s in 0..15 {
            let cells: Vec<(usize, usize)> = (0..8)
                .filter_map(|r| {
                    let c = s as isize - r as isize;
                    (0..8).contains(&c).then_some((r, c as usize))
                })
                .collect();
            if s % 2 == 0 {
                // even anti-diagonals run bottom-left to top-right
                order.extend(cells.iter().rev());
            } else {
                order.extend(cells.iter());
            }
        }
        order
    }

    #[test]
    fn table_matches_antidiagonal_oracle() {
        let oracle = zigzag_order_oracle();
        assert_eq!(oracle.len(), 64);
        for (k, &(r, c)) in oracle.iter().enumerate() {
            assert_eq!(ZIGZAG[k], r * 8 + c, "scan position {k}");
        }
        assert_eq!(&oracle[..6], &[(0, 0), (0, 1), (1, 0), (2, 0), (1, 1), (0, 2)]);
    }

    #[test]
    fn identity_position_block() {
        let block: [i32; 64] = std::array::from_fn(|i| i as i32);
        let scan = zigzag(&block);
        assert_eq!(&scan[..6], &[0, 1, 8, 16, 9, 2]);
    }

    #[test]
    fn roundtrip_is_identity() {
        let block: [i32; 64] = std::array::from_fn(|i| (i as i32 * 37) % 101 - 50);
        assert_eq!(inverse_zigzag(&zigzag(&block)), block);
    }
}
