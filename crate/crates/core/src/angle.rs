//! Wrap-safe angle arithmetic and circular statistics.

use std::f64::consts::{PI, TAU};

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Weighted circular mean of `(angle, weight)` pairs, in `(-pi, pi]`.
///
/// Returns `None` when the weights sum to zero or the resultant vanishes.
pub fn circular_mean<I>(samples: I) -> Option<f64>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let (mut re, mut im, mut total) = (0.0, 0.0, 0.0);
    for (a, w) in samples {
        re += w * a.cos();
        im += w * a.sin();
        total += w;
    }
    if total <= 0.0 || re.hypot(im) <= f64::EPSILON * total {
        return None;
    }
    Some(wrap(im.atan2(re)))
}

/// Median of angles taken on the arc centred at their circular mean.
pub fn circular_median(angles: &[f64]) -> Option<f64> {
    let center = circular_mean(angles.iter().map(|&a| (a, 1.0)))?;
    let mut offsets: Vec<f64> = angles.iter().map(|&a| wrap(a - center)).collect();
    offsets.sort_by(f64::total_cmp);
    let n = offsets.len();
    let med = if n % 2 == 1 {
        offsets[n / 2]
    } else {
        0.5 * (offsets[n / 2 - 1] + offsets[n / 2])
    };
    Some(wrap(center + med))
}

/// Picks the representative of `x + 2 pi k` closest to `target`.
pub fn unwrap_near(x: f64, target: f64) -> f64 {
    target + wrap(x - target)
}
