//! Naive reference implementations shared by the oracle tests and the
//! acceptance suite. Nothing here calls into the library's metric code.
#![allow(dead_code, clippy::needless_range_loop)]

use slicethin::SliceImage;

/// Small deterministic generator so fixtures do not depend on `rand` versions.
pub struct Lcg(pub u64);

impl Lcg {
    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        self.0 >> 33
    }

    pub fn unit(&mut self) -> f64 {
        self.next() as f64 / (1u64 << 31) as f64
    }
}

pub fn random_image(seed: u64, w: usize, h: usize) -> SliceImage {
    let mut rng = Lcg(seed);
    let (fa, fb, fc) = (rng.unit() * 0.3, rng.unit() * 0.3, rng.unit() * 0.2);
    let mut px = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let v = 128.0
                + 60.0 * (fa * x as f64 + fb * y as f64).sin()
                + 40.0 * (fc * (x * y) as f64 / 8.0).cos()
                + (rng.unit() - 0.5) * 40.0;
            px.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    SliceImage::new(w, h, px).unwrap()
}

/// Perturbed copy so that pairs are related but not identical.
pub fn perturbed(base: &SliceImage, seed: u64) -> SliceImage {
    let mut rng = Lcg(seed);
    let px = base
        .pixels()
        .iter()
        .map(|&p| (f64::from(p) + (rng.unit() - 0.5) * 60.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    SliceImage::new(base.width(), base.height(), px).unwrap()
}

// ---- naive SSIM: 2-D weights, two-pass moments per window ----

pub fn naive_ssim(x: &SliceImage, y: &SliceImage) -> f64 {
    let size = 11usize;
    let sigma = 1.5f64;
    let mut w2 = vec![vec![0.0f64; size]; size];
    let mut total = 0.0;
    for (i, row) in w2.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let di = i as f64 - 5.0;
            let dj = j as f64 - 5.0;
            *w = (-(di * di + dj * dj) / (2.0 * sigma * sigma)).exp();
            total += *w;
        }
    }
    let c1 = (0.01f64 * 255.0).powi(2);
    let c2 = (0.03f64 * 255.0).powi(2);
    let mut acc = 0.0;
    let mut count = 0usize;
    for oy in 0..=y.height() - size {
        for ox in 0..=x.width() - size {
            let (mut mx, mut my) = (0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let w = w2[i][j] / total;
                    mx += w * f64::from(x.get(ox + j, oy + i));
                    my += w * f64::from(y.get(ox + j, oy + i));
                }
            }
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for i in 0..size {
                for j in 0..size {
                    let w = w2[i][j] / total;
                    let dx = f64::from(x.get(ox + j, oy + i)) - mx;
                    let dy = f64::from(y.get(ox + j, oy + i)) - my;
                    vx += w * dx * dx;
                    vy += w * dy * dy;
                    cxy += w * dx * dy;
                }
            }
            acc += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
            count += 1;
        }
    }
    acc / count as f64
}

// ---- naive NMI: hash-map histograms, natural-log entropies ----

pub fn naive_nmi(x: &SliceImage, y: &SliceImage, bins: usize) -> f64 {
    use std::collections::HashMap;
    let bin = |v: u8| ((v as f64) / 256.0 * bins as f64).floor() as usize;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut mx: HashMap<usize, f64> = HashMap::new();
    let mut my: HashMap<usize, f64> = HashMap::new();
    let n = x.pixels().len() as f64;
    for (&a, &b) in x.pixels().iter().zip(y.pixels()) {
        *joint.entry((bin(a), bin(b))).or_default() += 1.0 / n;
        *mx.entry(bin(a)).or_default() += 1.0 / n;
        *my.entry(bin(b)).or_default() += 1.0 / n;
    }
    let h = |m: &mut dyn Iterator<Item = f64>| -> f64 { m.map(|p| -p * p.ln()).sum() };
    let hx = h(&mut mx.values().copied());
    let hy = h(&mut my.values().copied());
    let hxy = h(&mut joint.values().copied());
    (hx + hy) / hxy
}

// ---- naive Lanczos-3 antialiased reduction + dHash ----

pub fn lanczos(x: f64) -> f64 {
    let sinc = |t: f64| if t == 0.0 { 1.0 } else { (std::f64::consts::PI * t).sin() / (std::f64::consts::PI * t) };
    if x > -3.0 && x < 3.0 {
        sinc(x) * sinc(x / 3.0)
    } else {
        0.0
    }
}

/// Weights of every input sample for one output sample (zeros outside the support).
pub fn weights_1d(n_in: usize, n_out: usize, o: usize) -> Vec<f64> {
    let scale = n_in as f64 / n_out as f64;
    let fs = if scale > 1.0 { scale } else { 1.0 };
    let support = 3.0 * fs;
    let center = (o as f64 + 0.5) * scale;
    let lo = ((center - support + 0.5).trunc() as i64).max(0);
    let hi = ((center + support + 0.5).trunc() as i64).min(n_in as i64);
    let mut w = vec![0.0; n_in];
    for i in lo..hi {
        w[i as usize] = lanczos((i as f64 - center + 0.5) / fs);
    }
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

pub fn naive_dhash(img: &SliceImage) -> u64 {
    let mut reduced = [[0u8; 9]; 8];
    for (oy, row) in reduced.iter_mut().enumerate() {
        let wy = weights_1d(img.height(), 8, oy);
        for (ox, out) in row.iter_mut().enumerate() {
            let wx = weights_1d(img.width(), 9, ox);
            let mut v = 0.0;
            for y in 0..img.height() {
                for x in 0..img.width() {
                    v += wy[y] * wx[x] * f64::from(img.get(x, y));
                }
            }
            *out = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    let mut bits = 0u64;
    for (r, row) in reduced.iter().enumerate() {
        for c in 0..8 {
            if row[c + 1] > row[c] {
                bits |= 1u64 << (r * 8 + c);
            }
        }
    }
    bits
}

pub const GOLDEN_SEEDS: [u64; 5] = [11, 22, 33, 44, 55];

/// Produced once by `naive_dhash` on `random_image(seed, 64, 64)`.
pub const GOLDEN_HASHES: [u64; 5] =
    [0x99b2644cc9933664, 0xcc8c8c9c989c9899, 0x8e1c38e3c78e3c71, 0x8181818382860803, 0x0000bffff10202bc];
