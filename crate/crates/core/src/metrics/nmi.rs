use crate::metrics::{check_same_size, MetricError};
use crate::model::SliceImage;
use crate::scalar::Scalar;

/// One bin per 8-bit gray level.
pub const DEFAULT_BINS: usize = 256;

#[inline]
fn bin_of(v: u8, bins: usize) -> usize {
    // uniform edges over [0, 255]; 255 lands in the last bin
    (usize::from(v) * bins / 256).min(bins - 1)
}

fn entropy_term<T: Scalar>(count: u64, n: T) -> T {
    if count == 0 {
        return T::zero();
    }
    let p = T::lit(count as f64) / n;
    -(p * p.log2())
}

/// Normalized mutual information (H(X) + H(Y)) / H(X,Y), entropies in bits,
/// from a `bins` x `bins` joint histogram of co-located pixels.
pub fn nmi<T: Scalar>(x: &SliceImage, y: &SliceImage, bins: usize) -> Result<T, MetricError> {
    if bins < 2 {
        return Err(MetricError::InvalidBins(bins));
    }
    check_same_size(x, y)?;
    let mut joint = vec![0u64; bins * bins];
    let mut hist_x = vec![0u64; bins];
    let mut hist_y = vec![0u64; bins];
    for (&a, &b) in x.pixels().iter().zip(y.pixels()) {
        let (i, j) = (bin_of(a, bins), bin_of(b, bins));
        joint[i * bins + j] += 1;
        hist_x[i] += 1;
        hist_y[j] += 1;
    }
    let n = T::lit(x.pixels().len() as f64);
    let h_x: T = hist_x.iter().map(|&c| entropy_term(c, n)).sum();
    let h_y: T = hist_y.iter().map(|&c| entropy_term(c, n)).sum();

    // Visit (i, j) and (j, i) together so swapping the images gives a
    // bit-identical joint entropy.
    let mut h_xy = T::zero();
    for i in 0..bins {
        h_xy = h_xy + entropy_term(joint[i * bins + i], n);
        for j in i + 1..bins {
            h_xy = h_xy + (entropy_term(joint[i * bins + j], n) + entropy_term(joint[j * bins + i], n));
        }
    }
    if h_xy <= T::zero() {
        return Err(MetricError::DegenerateHistogram);
    }
    Ok((h_x + h_y) / h_xy)
}
