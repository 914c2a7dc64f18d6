use super::resample::box_sums;
use super::{check_same_dims, ImageError, MatchConfig, Thumbnail};

/// Mean-hash bits, row-major over a `size x size` grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitHash {
    size: usize,
    bits: Vec<bool>,
}

impl BitHash {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Fraction of agreeing bits.
    ///
    /// # Panics
    /// If the hashes were built with different grid sizes.
    pub fn similarity(&self, other: &BitHash) -> f64 {
        assert_eq!(self.size, other.size, "hash grid sizes differ");
        let agree = self.bits.iter().zip(&other.bits).filter(|(a, b)| a == b).count();
        agree as f64 / self.bits.len() as f64
    }
}

/// Box-filters the thumbnail to a `size x size` grid and sets each bit where
/// the cell is strictly above the grid mean. Cell sums are compared exactly
/// in integers, so the hash of the complement image is the bitwise complement
/// except for cells sitting exactly on the mean (zero in both).
pub fn average_hash(thumb: &Thumbnail, size: usize) -> BitHash {
    let sums = box_sums(thumb.pixels(), thumb.width(), thumb.height(), size, size);
    let total: u128 = sums.iter().map(|&s| s as u128).sum();
    let n = sums.len() as u128;
    let bits = sums.iter().map(|&s| s as u128 * n > total).collect();
    BitHash { size, bits }
}

pub fn hash_similarity(a: &Thumbnail, b: &Thumbnail, cfg: &MatchConfig) -> Result<f64, ImageError> {
    check_same_dims(a, b)?;
    if cfg.hash_size == 0 {
        return Err(ImageError::InvalidConfig("hash_size must be positive".into()));
    }
    Ok(average_hash(a, cfg.hash_size).similarity(&average_hash(b, cfg.hash_size)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// 64x64 thumbnail whose 8x8 cells are 200 where `pattern` is set, 50 elsewhere.
    fn from_pattern(pattern: &[bool; 64]) -> Thumbnail {
        let mut px = vec![0u8; 64 * 64];
        for y in 0..64 {
            for x in 0..64 {
                px[y * 64 + x] = if pattern[(y / 8) * 8 + x / 8] { 200 } else { 50 };
            }
        }
        Thumbnail::new(64, 64, px).unwrap()
    }

    #[test]
    fn identical_is_one() {
        let t = from_pattern(&std::array::from_fn(|i| i % 3 == 0));
        assert_eq!(hash_similarity(&t, &t, &MatchConfig::default()), Ok(1.0));
    }

    #[test]
    fn complement_is_zero() {
        let t = from_pattern(&std::array::from_fn(|i| (i * 5) % 7 < 3));
        let c = t.complement();
        assert_eq!(hash_similarity(&t, &c, &MatchConfig::default()), Ok(0.0));
    }

    #[test]
    fn half_the_cells_inverted_is_one_half() {
        // Both patterns carry 32 set cells, so the grid mean sits between the
        // two levels and the hash bits equal the patterns.
        let a: [bool; 64] = std::array::from_fn(|i| i < 32);
        let b: [bool; 64] = std::array::from_fn(|i| (16..48).contains(&i));
        let disagreements = a.iter().zip(&b).filter(|(x, y)| x != y).count();
        let expected = 1.0 - disagreements as f64 / 64.0;
        assert_eq!(expected, 0.5);
        let sim = hash_similarity(&from_pattern(&a), &from_pattern(&b), &MatchConfig::default());
        assert_eq!(sim, Ok(expected));
    }

    #[test]
    fn uniform_image_hashes_to_all_zero() {
        let t = Thumbnail::new(16, 16, vec![90; 256]).unwrap();
        assert!(average_hash(&t, 8).bits().iter().all(|b| !b));
    }

    proptest! {
        #[test]
        fn symmetric_and_complement_relation(
            a in proptest::collection::vec(any::<u8>(), 24 * 16),
            b in proptest::collection::vec(any::<u8>(), 24 * 16),
        ) {
            let a = Thumbnail::new(24, 16, a).unwrap();
            let b = Thumbnail::new(24, 16, b).unwrap();
            let cfg = MatchConfig::default();
            let ab = hash_similarity(&a, &b, &cfg).unwrap();
            prop_assert_eq!(ab, hash_similarity(&b, &a, &cfg).unwrap());

            // cells exactly on the mean stay zero under complement
            let hb = average_hash(&b, 8);
            let hc = average_hash(&b.complement(), 8);
            let ties = hb.bits().iter().zip(hc.bits()).filter(|(x, y)| x == y).count();
            prop_assume!(ties == 0);
            let ac = hash_similarity(&a, &b.complement(), &cfg).unwrap();
            prop_assert!((ab - (1.0 - ac)).abs() < 1e-12);
        }
    }
}
