//! Interference phase from count ratios, residual phase, combined phase
//! difference and the photon frequency difference.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use super::SixPack;
use crate::angle::{circular_mean, circular_median, unwrap_near, wrap};
use crate::interferometer::SettingPair;
use crate::waveform::TimeGrid;
use crate::{Error, Result, NS};

/// Orientation of the measured angle relative to `Xi + Lambda0`.
///
/// With the beam-splitter and projector conventions of the forward model,
/// `atan2(s, c)` evaluates to `arg(first bracket) - arg(second bracket)`, which
/// is `-(Xi + Lambda0)`. Everything downstream works with `Lambda = Xi + Lambda0`.
pub const LAMBDA_SIGN: f64 = -1.0;

/// Ratio `C_VH / C_HV` per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BRatio {
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

/// Background-subtracted `C_VH / C_HV`; bins where either count is below the floor are invalid.
pub fn compute_b(pack: &SixPack, count_floor: f64, background: f64) -> BRatio {
    let vh = &pack.get(SettingPair::VH).values;
    let hv = &pack.get(SettingPair::HV).values;
    let (values, valid) = vh
        .iter()
        .zip(hv)
        .map(|(&v, &h)| {
            let (v, h) = ((v - background).max(0.0), (h - background).max(0.0));
            if v >= count_floor && h >= count_floor && v > 0.0 && h > 0.0 {
                (v / h, true)
            } else {
                (f64::NAN, false)
            }
        })
        .unzip();
    BRatio { values, valid }
}

/// Unclamped cosine and sine estimates of one bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quadrature {
    pub c: f64,
    pub s: f64,
}

/// `Lambda(T, tau)` with its per-bin uncertainty.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaProfile {
    pub grid: TimeGrid,
    pub delay_ns: f64,
    pub lambda: Vec<f64>,
    pub stderr: Vec<f64>,
    pub weight: Vec<f64>,
    pub valid: Vec<bool>,
    pub quadratures: Vec<Quadrature>,
}

impl LambdaProfile {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Contrast `(a - b)/(a + b)` of background-subtracted counts and its Poisson variance.
fn contrast(a_raw: f64, b_raw: f64, background: f64) -> Option<(f64, f64)> {
    let (a, b) = ((a_raw - background).max(0.0), (b_raw - background).max(0.0));
    let sum = a + b;
    if !(sum > 0.0) {
        return None;
    }
    let (va, vb) = (a_raw.max(1.0), b_raw.max(1.0));
    let var = 4.0 * (b * b * va + a * a * vb) / sum.powi(4);
    Some(((a - b) / sum, var))
}

/// Per-bin interference phase from the six projector histograms.
///
/// The cosine and sine are formed independently, clamped to `[-1, 1]` and
/// combined with `atan2`. The `B` prefactor rescales `(c, s)` radially and so
/// drops out of the angle; the uncertainty is propagated from the two
/// contrasts alone.
pub fn compute_lambda(pack: &SixPack, count_floor: f64, background: f64) -> Result<LambdaProfile> {
    let n = pack.grid().n_bins();
    let b = compute_b(pack, count_floor, background);
    let [dd, da, dr, dl] = [SettingPair::DD, SettingPair::DA, SettingPair::DR, SettingPair::DL]
        .map(|p| &pack.get(p).values);
    let mut out = LambdaProfile {
        grid: *pack.grid(),
        delay_ns: pack.delay_ns(),
        lambda: vec![0.0; n],
        stderr: vec![f64::INFINITY; n],
        weight: vec![0.0; n],
        valid: vec![false; n],
        quadratures: vec![Quadrature { c: f64::NAN, s: f64::NAN }; n],
    };
    for k in 0..n {
        if !b.valid[k] {
            continue;
        }
        let total: f64 = SettingPair::ALL.iter().map(|&p| pack.get(p).values[k]).sum();
        if total < count_floor {
            continue;
        }
        let (Some((rc, var_c)), Some((rs, var_s))) =
            (contrast(dd[k], da[k], background), contrast(dr[k], dl[k], background))
        else {
            continue;
        };
        let r2 = rc * rc + rs * rs;
        if !(r2 > 0.0) {
            continue;
        }
        let bk = b.values[k];
        let f = (bk + 1.0) / (2.0 * bk.sqrt());
        let c = -f * rc;
        let s = f * rs;
        out.quadratures[k] = Quadrature { c, s };
        let angle = s.clamp(-1.0, 1.0).atan2(c.clamp(-1.0, 1.0));
        let var = (rs * rs * var_c + rc * rc * var_s) / (r2 * r2);
        out.lambda[k] = wrap(LAMBDA_SIGN * angle);
        out.stderr[k] = var.sqrt();
        out.weight[k] = 1.0 / var.max(1e-300);
        out.valid[k] = true;
    }
    if out.valid_count() == 0 {
        return Err(Error::NoData("every bin fails the count floor".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lambda0Estimate {
    pub value: f64,
    pub stderr: f64,
    pub pairs: usize,
}

/// Symmetric valid pairs `(k, mirror)` with `T < tau_k <= t_a`.
fn symmetric_pairs(profile: &LambdaProfile, t_a: Option<f64>) -> Vec<(usize, usize)> {
    let g = &profile.grid;
    let t = profile.delay_ns;
    let both = |k: usize| g.mirror(k).filter(|&m| profile.valid[k] && profile.valid[m]);
    let limit = t_a.unwrap_or_else(|| {
        (0..g.n_bins())
            .filter(|&k| g.center(k) > t && both(k).is_some())
            .map(|k| g.center(k))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    (0..g.n_bins())
        .filter(|&k| {
            let tau = g.center(k);
            tau > t && tau <= limit
        })
        .filter_map(|k| both(k).map(|m| (k, m)))
        .collect()
}

/// Residual phase from the antisymmetry `Xi(T, tau) = -Xi(T, -tau)`.
///
/// `Lambda(tau) + Lambda(-tau) = 2 Lambda0`, so the weighted circular mean of
/// the pair sums fixes `Lambda0` modulo pi. The branch is the one that keeps
/// `Xi` closest to zero on the wings, which holds whenever `|delta T| < pi/2`
/// and the phase changes by less than pi/2 over `2T` for most of the support.
/// `t_a` bounds `|tau|`; `None` uses every symmetric pair.
pub fn estimate_lambda0(profile: &LambdaProfile, t_a: Option<f64>) -> Result<Lambda0Estimate> {
    let pairs = symmetric_pairs(profile, t_a);
    let doubled = pairs.iter().map(|&(k, m)| {
        let var = profile.stderr[k].powi(2) + profile.stderr[m].powi(2);
        (wrap(profile.lambda[k] + profile.lambda[m]), 1.0 / var.max(1e-300))
    });
    let total_w: f64 = doubled.clone().map(|(_, w)| w).sum();
    let half = circular_mean(doubled)
        .map(|a| 0.5 * a)
        .ok_or_else(|| Error::NoData("no symmetric pair of valid bins for the residual phase".into()))?;
    let score = |cand: f64| -> f64 {
        pairs
            .iter()
            .flat_map(|&(k, m)| [k, m])
            .map(|j| profile.weight[j].min(1e12) * (profile.lambda[j] - cand).cos())
            .sum()
    };
    let value = if score(half) >= score(half + PI) {
        wrap(half)
    } else {
        wrap(half + PI)
    };
    Ok(Lambda0Estimate {
        value,
        stderr: 0.5 / total_w.sqrt(),
        pairs: pairs.len(),
    })
}

/// `Xi(T, tau) = Lambda - Lambda0` outside the region `|tau| <= T`.
#[derive(Debug, Clone, PartialEq)]
pub struct XiProfile {
    pub grid: TimeGrid,
    pub delay_ns: f64,
    pub xi: Vec<f64>,
    pub stderr: Vec<f64>,
    pub valid: Vec<bool>,
}

impl XiProfile {
    pub fn weight(&self, k: usize) -> f64 {
        1.0 / self.stderr[k].powi(2).max(1e-300)
    }
}

pub fn compute_xi(profile: &LambdaProfile, lambda0: f64) -> XiProfile {
    let g = profile.grid;
    let t = profile.delay_ns;
    let valid: Vec<bool> = (0..g.n_bins())
        .map(|k| profile.valid[k] && g.center(k).abs() > t)
        .collect();
    let xi = (0..g.n_bins())
        .map(|k| if valid[k] { wrap(profile.lambda[k] - lambda0) } else { 0.0 })
        .collect();
    XiProfile {
        grid: g,
        delay_ns: t,
        xi,
        stderr: profile.stderr.clone(),
        valid,
    }
}

/// Step of `Xi` across `tau = 0` and the frequency difference it implies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeltaEstimate {
    /// Angular frequency difference (rad/s).
    pub delta: f64,
    /// `Xi(-tau) - Xi(tau)` near the edges, equal to `2 delta T` for locally flat phase.
    pub jump: f64,
    pub delay_ns: f64,
}

/// Default half-width of the near-edge windows: `max(T, 8 bins)`.
pub fn default_delta_window(grid: &TimeGrid, t_ns: f64) -> f64 {
    t_ns.max(8.0 * grid.bin_width())
}

/// Frequency difference from the near-edge wings of one `Xi` profile.
///
/// Each wing window is `T < |tau| <= T + window`. The jump is
/// `wrap(median Xi(tau < -T) - median Xi(tau > T))` and lies in `(-pi, pi]`;
/// [`resolve_delta`] lifts it onto the right branch using a shorter delay.
pub fn estimate_delta(xi: &XiProfile, window_ns: Option<f64>) -> Result<DeltaEstimate> {
    let g = &xi.grid;
    let t = xi.delay_ns;
    let w = window_ns.unwrap_or_else(|| default_delta_window(g, t));
    let wing = |sign: f64| -> Vec<f64> {
        (0..g.n_bins())
            .filter(|&k| {
                let tau = sign * g.center(k);
                xi.valid[k] && tau > t && tau <= t + w
            })
            .map(|k| xi.xi[k])
            .collect()
    };
    let (neg, pos) = (wing(-1.0), wing(1.0));
    let (Some(mn), Some(mp)) = (circular_median(&neg), circular_median(&pos)) else {
        return Err(Error::NoData(format!(
            "no valid bins within {w} ns of the |tau| = {t} ns edge on one wing"
        )));
    };
    let jump = wrap(mn - mp);
    Ok(DeltaEstimate {
        delta: jump / (2.0 * t * NS),
        jump,
        delay_ns: t,
    })
}

/// Picks the `2 pi` branch of the long-delay jump that agrees with the short-delay estimate.
pub fn resolve_delta(fine: &DeltaEstimate, coarse: &DeltaEstimate) -> DeltaEstimate {
    let predicted = fine.delta * 2.0 * coarse.delay_ns * NS;
    let jump = unwrap_near(coarse.jump, predicted);
    debug_assert!(((jump - coarse.jump) / TAU - ((jump - coarse.jump) / TAU).round()).abs() < 1e-9);
    DeltaEstimate {
        delta: jump / (2.0 * coarse.delay_ns * NS),
        jump,
        delay_ns: coarse.delay_ns,
    }
}
