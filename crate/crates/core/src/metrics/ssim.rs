use crate::metrics::{check_same_size, MetricError};
use crate::model::SliceImage;
use crate::scalar::Scalar;

/// Structural-similarity constants. Defaults: K1 = 0.01, K2 = 0.03, L = 255,
/// 11x11 Gaussian window with sigma 1.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams<T> {
    pub k1: T,
    pub k2: T,
    pub dynamic_range: T,
    pub window: usize,
    pub sigma: T,
}

impl<T: Scalar> Default for SsimParams<T> {
    fn default() -> Self {
        SsimParams { k1: T::lit(0.01), k2: T::lit(0.03), dynamic_range: T::lit(255.0), window: 11, sigma: T::lit(1.5) }
    }
}

impl<T: Scalar> SsimParams<T> {
    fn validate(&self) -> Result<(), MetricError> {
        if !(self.k1 > T::zero() && self.k2 > T::zero()) {
            return Err(MetricError::InvalidParams("K1 and K2 must be positive"));
        }
        if self.window.is_multiple_of(2) {
            return Err(MetricError::InvalidParams("window must be odd"));
        }
        if self.sigma.partial_cmp(&T::zero()) != Some(std::cmp::Ordering::Greater) {
            return Err(MetricError::InvalidParams("sigma must be positive"));
        }
        Ok(())
    }

    /// Stabilizers (K1 L)^2 and (K2 L)^2.
    pub fn stabilizers(&self) -> (T, T) {
        let c1 = self.k1 * self.dynamic_range;
        let c2 = self.k2 * self.dynamic_range;
        (c1 * c1, c2 * c2)
    }
}

/// Normalized 1-D Gaussian weights of odd length `size`.
pub fn gaussian_kernel<T: Scalar>(size: usize, sigma: T) -> Vec<T> {
    let half = T::lit((size / 2) as f64);
    let two_sigma_sq = T::lit(2.0) * sigma * sigma;
    let raw: Vec<T> = (0..size)
        .map(|i| {
            let d = T::lit(i as f64) - half;
            (-(d * d) / two_sigma_sq).exp()
        })
        .collect();
    let total: T = raw.iter().copied().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Mean SSIM over every window position fully inside the image.
pub fn ssim<T: Scalar>(x: &SliceImage, y: &SliceImage, params: &SsimParams<T>) -> Result<T, MetricError> {
    params.validate()?;
    check_same_size(x, y)?;
    let win = params.window;
    let (w, h) = (x.width(), x.height());
    if w < win || h < win {
        return Err(MetricError::ImageTooSmall { width: w, height: h, window: win });
    }
    let kernel = gaussian_kernel(win, params.sigma);
    let out_w = w - win + 1;
    let out_h = h - win + 1;

    // Horizontal pass: per row, filtered x, y, x^2, y^2, xy (valid positions only).
    let mut rows = vec![[T::zero(); 5]; out_w * h];
    for r in 0..h {
        let xr = x.row(r);
        let yr = y.row(r);
        for c in 0..out_w {
            let mut acc = [T::zero(); 5];
            for (k, &wk) in kernel.iter().enumerate() {
                let a = T::from_gray(xr[c + k]);
                let b = T::from_gray(yr[c + k]);
                acc[0] = acc[0] + wk * a;
                acc[1] = acc[1] + wk * b;
                acc[2] = acc[2] + wk * a * a;
                acc[3] = acc[3] + wk * b * b;
                acc[4] = acc[4] + wk * (a * b);
            }
            rows[r * out_w + c] = acc;
        }
    }

    let (c1, c2) = params.stabilizers();
    let two = T::lit(2.0);
    let mut total = T::zero();
    let mut column = vec![[T::zero(); 5]; out_w];
    for r in 0..out_h {
        column.iter_mut().for_each(|m| *m = [T::zero(); 5]);
        for (k, &wk) in kernel.iter().enumerate() {
            let src = &rows[(r + k) * out_w..(r + k + 1) * out_w];
            for (dst, s) in column.iter_mut().zip(src) {
                for i in 0..5 {
                    dst[i] = dst[i] + wk * s[i];
                }
            }
        }
        for m in &column {
            let (mu_x, mu_y) = (m[0], m[1]);
            let var_x = m[2] - mu_x * mu_x;
            let var_y = m[3] - mu_y * mu_y;
            let cov = m[4] - mu_x * mu_y;
            let num = (two * (mu_x * mu_y) + c1) * (two * cov + c2);
            let den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
            total = total + num / den;
        }
    }
    Ok(total / T::lit((out_w * out_h) as f64))
}
