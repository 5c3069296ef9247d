//! Separable Lanczos-3 resampling with antialiasing on downscale.
//!
//! The filter support is stretched by the downscale factor so that every
//! input pixel contributes, the convention of the "antialias" resize in
//! common imaging libraries. Weights are normalized per output sample.

use std::f64::consts::PI;

use crate::model::SliceImage;

pub const LANCZOS_SUPPORT: f64 = 3.0;

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

pub fn lanczos3(x: f64) -> f64 {
    if (-LANCZOS_SUPPORT..LANCZOS_SUPPORT).contains(&x) {
        sinc(x) * sinc(x / LANCZOS_SUPPORT)
    } else {
        0.0
    }
}

/// Contributing input range and normalized weights for one output sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Taps {
    pub start: usize,
    pub weights: Vec<f64>,
}

/// Filter taps mapping `in_size` samples onto `out_size` samples.
pub fn taps(in_size: usize, out_size: usize) -> Vec<Taps> {
    let scale = in_size as f64 / out_size as f64;
    let filter_scale = scale.max(1.0);
    let support = LANCZOS_SUPPORT * filter_scale;
    let inv = 1.0 / filter_scale;
    (0..out_size)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            // truncation toward zero, then clamped into the input
            let lo = ((center - support + 0.5) as i64).max(0) as usize;
            let hi = ((center + support + 0.5) as i64).clamp(0, in_size as i64) as usize;
            let mut weights: Vec<f64> = (lo..hi).map(|i| lanczos3((i as f64 - center + 0.5) * inv)).collect();
            let total: f64 = weights.iter().sum();
            if total != 0.0 {
                weights.iter_mut().for_each(|w| *w /= total);
            }
            Taps { start: lo, weights }
        })
        .collect()
}

/// Resizes to `out_w` x `out_h`, returning unrounded row-major samples.
pub fn resize(image: &SliceImage, out_w: usize, out_h: usize) -> Vec<f64> {
    let width = image.width();
    let vertical = taps(image.height(), out_h);
    let horizontal = taps(width, out_w);

    // Vertical pass first: each output row is a weighted sum of whole input
    // rows, which keeps the inner loop contiguous. Input rows are converted
    // once and scattered into every output row they feed; each output still
    // accumulates its rows in ascending order.
    let mut columns = vec![0.0f64; out_h * width];
    let mut converted = vec![0.0f64; width];
    for y in 0..image.height() {
        let mut fed =
            vertical.iter().enumerate().filter(|(_, t)| (t.start..t.start + t.weights.len()).contains(&y)).peekable();
        if fed.peek().is_none() {
            continue;
        }
        for (c, &p) in converted.iter_mut().zip(image.row(y)) {
            *c = f64::from(p);
        }
        for (oy, t) in fed {
            let w = t.weights[y - t.start];
            let acc = &mut columns[oy * width..(oy + 1) * width];
            for (a, &p) in acc.iter_mut().zip(&converted) {
                *a += w * p;
            }
        }
    }

    let mut out = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let row = &columns[oy * width..(oy + 1) * width];
        for t in &horizontal {
            let v: f64 = t.weights.iter().zip(&row[t.start..]).map(|(w, p)| w * p).sum();
            out.push(v);
        }
    }
    out
}

/// Resizes and quantizes to 8 bits (round half-up, clamp to [0, 255]).
pub fn resize_u8(image: &SliceImage, out_w: usize, out_h: usize) -> Vec<u8> {
    resize(image, out_w, out_h).into_iter().map(|v| (v + 0.5).floor().clamp(0.0, 255.0) as u8).collect()
}
