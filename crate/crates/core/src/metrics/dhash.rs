use std::fmt;
use std::str::FromStr;

use crate::metrics::resample::resize_u8;
use crate::model::SliceImage;

pub const HASH_WIDTH: usize = 9;
pub const HASH_HEIGHT: usize = 8;
pub const HASH_BITS: u32 = 64;

/// 64-bit difference hash.
///
/// Row `r` (top to bottom), comparison `c` (left to right) lives at bit
/// `r * 8 + c`, counting from the least significant bit. A bit is set iff the
/// right neighbour is strictly brighter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct DHash64(pub u64);

impl DHash64 {
    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn bit(self, row: usize, col: usize) -> bool {
        self.0 >> (row * 8 + col) & 1 == 1
    }

    /// Hash of an already reduced 9x8 raster.
    pub fn from_reduced(reduced: &[u8]) -> Self {
        assert_eq!(reduced.len(), HASH_WIDTH * HASH_HEIGHT);
        let mut bits = 0u64;
        for (r, row) in reduced.chunks_exact(HASH_WIDTH).enumerate() {
            for c in 0..HASH_WIDTH - 1 {
                if row[c + 1] > row[c] {
                    bits |= 1 << (r * 8 + c);
                }
            }
        }
        DHash64(bits)
    }
}

impl fmt::Display for DHash64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for DHash64 {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(DHash64)
    }
}

/// Reduces the image to 9x8 with Lanczos-3 and hashes horizontal gradients.
pub fn dhash(image: &SliceImage) -> DHash64 {
    DHash64::from_reduced(&resize_u8(image, HASH_WIDTH, HASH_HEIGHT))
}

/// Number of differing bits, 0..=64.
pub fn hamming(a: DHash64, b: DHash64) -> u32 {
    (a.0 ^ b.0).count_ones()
}

/// Hamming distance divided by the bit count, in [0, 1]. For display only;
/// thresholds are always given in raw bits.
pub fn hamming_fraction(a: DHash64, b: DHash64) -> f64 {
    f64::from(hamming(a, b)) / f64::from(HASH_BITS)
}
