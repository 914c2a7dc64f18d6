//! Exact area-averaging (box filter) resampling on integer weights.
//!
//! Source pixel `s` spans `[s * dst, (s + 1) * dst)` and output pixel `o`
//! spans `[o * src, (o + 1) * src)` on a shared integer axis, so overlaps are
//! integers and every output's weights sum to `src`. Summing `value * wx * wy`
//! therefore gives each output cell an exact numerator over the common
//! denominator `src_w * src_h`.

pub(crate) fn axis_weights(src: usize, dst: usize) -> Vec<Vec<(usize, u64)>> {
    (0..dst)
        .map(|o| {
            let lo = o * src;
            let hi = (o + 1) * src;
            (lo / dst..=(hi - 1) / dst)
                .filter_map(|s| {
                    let overlap = hi.min((s + 1) * dst).saturating_sub(lo.max(s * dst));
                    (overlap > 0).then_some((s, overlap as u64))
                })
                .collect()
        })
        .collect()
}

/// Weighted sums for a `dst_w x dst_h` grid over a row-major `src_w x src_h`
/// plane. Each entry's true mean is `sum / (src_w * src_h)`.
pub(crate) fn box_sums(plane: &[u8], src_w: usize, src_h: usize, dst_w: usize, dst_h: usize) -> Vec<u64> {
    let xw = axis_weights(src_w, dst_w);
    let yw = axis_weights(src_h, dst_h);
    let mut out = Vec::with_capacity(dst_w * dst_h);
    for ys in &yw {
        for xs in &xw {
            let mut acc = 0u64;
            for &(sy, wy) in ys {
                let row = &plane[sy * src_w..(sy + 1) * src_w];
                let mut racc = 0u64;
                for &(sx, wx) in xs {
                    racc += row[sx] as u64 * wx;
                }
                acc += racc * wy;
            }
            out.push(acc);
        }
    }
    out
}

/// `round(num / den)` with halves rounded up.
pub(crate) fn div_round_half_up(num: u64, den: u64) -> u64 {
    (2 * num + den) / (2 * den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_source_length() {
        for (src, dst) in [(464, 128), (256, 64), (7, 3), (3, 7), (5, 5), (1, 4)] {
            for ws in axis_weights(src, dst) {
                assert_eq!(ws.iter().map(|w| w.1).sum::<u64>(), src as u64);
            }
        }
    }

    #[test]
    fn integer_factor_is_plain_block_mean() {
        let plane: Vec<u8> = (0..16).collect();
        let sums = box_sums(&plane, 4, 4, 2, 2);
        // block {0,1,4,5} has sum 10; weights are 2*2 each over a 16 denominator
        assert_eq!(sums[0], 10 * 4);
        assert_eq!(div_round_half_up(sums[0], 16), 3); // 2.5 rounds up
    }

    #[test]
    fn rounding_half_up() {
        assert_eq!(div_round_half_up(5, 2), 3);
        assert_eq!(div_round_half_up(4, 3), 1);
        assert_eq!(div_round_half_up(5, 3), 2);
    }
}
