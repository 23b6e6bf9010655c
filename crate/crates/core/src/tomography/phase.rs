//! Amplitude islands, lattice phase recursion and two-delay stitching.

use serde::Serialize;

use super::lambda::XiProfile;
use crate::angle::{circular_mean, wrap};
use crate::interferometer::CoincidenceHistogram;
use crate::waveform::TimeGrid;
use crate::{Error, Result, NS};

/// Inclusive run of bins where the amplitude stays above threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Island {
    pub start: usize,
    pub end: usize,
}

impl Island {
    pub fn contains(&self, k: usize) -> bool {
        (self.start..=self.end).contains(&k)
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bins(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// Maximal runs of `tau > 0` bins with `values >= threshold * peak`, ordered by `tau`.
pub fn detect_islands(values: &[f64], grid: &TimeGrid, threshold: f64) -> Result<Vec<Island>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Param(format!("island threshold must lie in (0, 1), got {threshold}")));
    }
    if values.len() != grid.n_bins() {
        return Err(Error::Length {
            expected: grid.n_bins(),
            got: values.len(),
        });
    }
    let positive = |k: usize| grid.center(k) > 0.0;
    let peak = (0..values.len())
        .filter(|&k| positive(k))
        .map(|k| values[k])
        .fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::NoData("no signal at tau > 0".into()));
    }
    let cut = threshold * peak;
    let mut islands = Vec::new();
    let mut open: Option<usize> = None;
    for k in 0..values.len() {
        let above = positive(k) && values[k] >= cut;
        match (above, open) {
            (true, None) => open = Some(k),
            (false, Some(s)) => {
                islands.push(Island { start: s, end: k - 1 });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        islands.push(Island {
            start: s,
            end: values.len() - 1,
        });
    }
    Ok(islands)
}

/// Forward link from `from`: the `Xi` bin `c` with `tau_c - T` in `from`, and the bin of `tau_c + T`.
fn forward_link(xi: &XiProfile, from: usize) -> Option<(usize, usize)> {
    let g = &xi.grid;
    let t = xi.delay_ns;
    let c0 = g.bin_of(g.center(from) + t)?;
    [c0.checked_sub(1), Some(c0), Some(c0 + 1)]
        .into_iter()
        .flatten()
        .filter(|&c| c < g.n_bins())
        .find(|&c| g.bin_of(g.center(c) - t) == Some(from))
        .and_then(|c| g.bin_of(g.center(c) + t).filter(|&to| to != from).map(|to| (c, to)))
}

/// Backward link from `from`: the `Xi` bin `c` with `tau_c + T` in `from`, and the bin of `tau_c - T`.
fn backward_link(xi: &XiProfile, from: usize) -> Option<(usize, usize)> {
    let g = &xi.grid;
    let t = xi.delay_ns;
    let c0 = g.bin_of(g.center(from) - t)?;
    [c0.checked_sub(1), Some(c0), Some(c0 + 1)]
        .into_iter()
        .flatten()
        .filter(|&c| c < g.n_bins())
        .find(|&c| g.bin_of(g.center(c) + t) == Some(from))
        .and_then(|c| g.bin_of(g.center(c) - t).filter(|&to| to != from).map(|to| (c, to)))
}

/// `phi(tau_c + T) - phi(tau_c - T)` measured at `Xi` bin `c`, with its variance.
///
/// Both wings carry the same difference: `Xi(tau_c) + delta T` on the positive
/// side and `-Xi(-tau_c) + delta T` on the negative side. They are combined by
/// weighted circular mean.
fn link_increment(xi: &XiProfile, c: usize, delta: f64) -> Option<(f64, f64)> {
    if xi.grid.center(c) <= xi.delay_ns {
        return None;
    }
    let mut parts = Vec::with_capacity(2);
    if xi.valid[c] {
        parts.push((xi.xi[c], xi.weight(c)));
    }
    if let Some(m) = xi.grid.mirror(c).filter(|&m| xi.valid[m]) {
        parts.push((-xi.xi[m], xi.weight(m)));
    }
    let total: f64 = parts.iter().map(|p| p.1).sum();
    let mean = match parts.as_slice() {
        [] => return None,
        [(a, _)] => *a,
        _ => circular_mean(parts.iter().copied())?,
    };
    Some((mean + delta * xi.delay_ns * NS, 1.0 / total))
}

/// Phase on one lattice of spacing `2T`, relative to its starting bin.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePhase {
    pub phase: Vec<Option<f64>>,
    /// A step inside the island hit an invalid `Xi` bin.
    pub truncated: bool,
}

impl LatticePhase {
    pub fn known(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.phase.iter().enumerate().filter_map(|(k, p)| p.map(|v| (k, v)))
    }
}

/// Lattice recursion `phi(tau0 + 2nT) = phi(tau0 + 2(n-1)T) + Xi(T, tau0 + (2n-1)T) + delta T`.
///
/// Runs in both directions from `tau0_bin` (where `phi = 0`) and stops at the
/// island boundary or at the first step whose `Xi` bin is invalid on both wings.
pub fn recursive_phase(xi: &XiProfile, delta: f64, tau0_bin: usize, island: &Island) -> Result<LatticePhase> {
    if !island.contains(tau0_bin) {
        return Err(Error::Param(format!(
            "reference bin {tau0_bin} lies outside island [{}, {}]",
            island.start, island.end
        )));
    }
    let mut phase = vec![None; xi.grid.n_bins()];
    phase[tau0_bin] = Some(0.0);
    let mut truncated = false;
    for forward in [true, false] {
        let mut cur = tau0_bin;
        let mut acc = 0.0;
        loop {
            let link = if forward {
                forward_link(xi, cur)
            } else {
                backward_link(xi, cur)
            };
            let Some((c, to)) = link.filter(|&(_, to)| island.contains(to)) else {
                break;
            };
            let Some((inc, _)) = link_increment(xi, c, delta) else {
                truncated = true;
                break;
            };
            acc += if forward { inc } else { -inc };
            phase[to] = Some(acc);
            cur = to;
        }
    }
    Ok(LatticePhase { phase, truncated })
}

/// Fine phase over a whole island.
///
/// The lattice through `anchor` is solved first. Bins on the other lattices of
/// spacing `2T` are solved by their own recursions and attached to the known
/// phase through the circular mean of differences between adjacent bins, which
/// is exact for locally linear phase because left and right neighbour pairs
/// enter symmetrically.
pub fn island_phase(xi: &XiProfile, delta: f64, anchor: usize, island: &Island) -> Result<LatticePhase> {
    let LatticePhase { mut phase, mut truncated } = recursive_phase(xi, delta, anchor, island)?;
    let mut order: Vec<usize> = island.bins().collect();
    order.sort_by_key(|&k| k.abs_diff(anchor));
    for b in order {
        if phase[b].is_some() {
            continue;
        }
        let chain = recursive_phase(xi, delta, b, island)?;
        truncated |= chain.truncated;
        let diffs: Vec<f64> = island
            .bins()
            .filter(|&k| k < island.end)
            .filter_map(|k| match (phase[k], phase[k + 1], chain.phase[k], chain.phase[k + 1]) {
                (Some(known), None, None, Some(new)) => Some(new - known),
                (None, Some(known), Some(new), None) => Some(new - known),
                _ => None,
            })
            .collect();
        let Some(&first) = diffs.first() else {
            continue;
        };
        let Some(mean) = circular_mean(diffs.iter().map(|&d| (d, 1.0))) else {
            continue;
        };
        let offset = first + wrap(mean - first);
        for (k, v) in chain.known() {
            if phase[k].is_none() {
                phase[k] = Some(v - offset);
            }
        }
    }
    Ok(LatticePhase { phase, truncated })
}

/// Island phases joined through the long delay.
#[derive(Debug, Clone, PartialEq)]
pub struct StitchedPhase {
    pub phase: Vec<Option<f64>>,
    /// Islands grouped into mutually connected components, in order.
    pub components: Vec<Vec<usize>>,
    /// Offset of island `i + 1` relative to island `i`; `None` where no bridge exists.
    pub offsets: Vec<Option<f64>>,
}

/// Chains islands left to right with one long-delay recursion step per bridge.
///
/// Every long-delay `Xi` bin whose `tau -/+ T_l` fall inside islands `i` and
/// `i + 1` gives an estimate of the offset between their fine solutions; the
/// estimates are combined by inverse-variance circular mean. The first island
/// of each component keeps its own fine gauge.
pub fn stitch_two_step(
    fine: &[LatticePhase],
    coarse: &XiProfile,
    islands: &[Island],
    delta: f64,
) -> Result<StitchedPhase> {
    if fine.len() != islands.len() {
        return Err(Error::Length {
            expected: islands.len(),
            got: fine.len(),
        });
    }
    let n = coarse.grid.n_bins();
    let mut phase = vec![None; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut offsets = Vec::with_capacity(islands.len().saturating_sub(1));
    let mut shift = 0.0;
    for (i, island) in islands.iter().enumerate() {
        if i == 0 {
            components.push(vec![0]);
        } else {
            let (left, right) = (&fine[i - 1], &fine[i]);
            let bridges: Vec<(f64, f64)> = (0..n)
                .filter_map(|c| {
                    let g = &coarse.grid;
                    let src = g.bin_of(g.center(c) - coarse.delay_ns)?;
                    let tgt = g.bin_of(g.center(c) + coarse.delay_ns)?;
                    if !islands[i - 1].contains(src) || !island.contains(tgt) {
                        return None;
                    }
                    let (a, b) = (left.phase[src]?, right.phase[tgt]?);
                    let (inc, var) = link_increment(coarse, c, delta)?;
                    Some((a + inc - b, 1.0 / var))
                })
                .collect();
            match circular_mean(bridges.iter().copied()) {
                Some(rel) => {
                    offsets.push(Some(rel));
                    shift += rel;
                    components.last_mut().expect("first island opens a component").push(i);
                }
                None => {
                    offsets.push(None);
                    shift = 0.0;
                    components.push(vec![i]);
                }
            }
        }
        for (k, v) in fine[i].known() {
            phase[k] = Some(v + shift);
        }
    }
    Ok(StitchedPhase {
        phase,
        components,
        offsets,
    })
}

/// Mean count in the outer fifth of the grid on both sides, as an accidental floor.
pub fn estimate_background(c12: &CoincidenceHistogram) -> f64 {
    let g = &c12.grid;
    let reach = g.tau_max().abs().max(g.tau_min().abs());
    let tail: Vec<f64> = (0..g.n_bins())
        .filter(|&k| g.center(k).abs() >= 0.8 * reach)
        .map(|k| c12.values[k])
        .collect();
    if tail.is_empty() {
        0.0
    } else {
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// `A(tau) = sqrt(max(C12 - background, 0))` on `tau > 0`, normalized to unit `L2`.
///
/// Detection efficiency, bin width, integration time and pair rate only scale
/// the counts and drop out of the normalized shape.
pub fn reconstruct_amplitude(c12: &CoincidenceHistogram, background: f64) -> Result<Vec<f64>> {
    let g = &c12.grid;
    let amp: Vec<f64> = (0..g.n_bins())
        .map(|k| {
            if g.center(k) > 0.0 {
                (c12.values[k] - background).max(0.0).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let energy: f64 = amp.iter().map(|a| a * a).sum::<f64>() * g.bin_width_s();
    if !(energy > 0.0) {
        return Err(Error::NoData("every bin is at or below the background".into()));
    }
    let norm = energy.sqrt().recip();
    Ok(amp.into_iter().map(|a| a * norm).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::waveform::make_time_grid;

    fn flat_xi(grid: TimeGrid, t: f64, value: f64) -> XiProfile {
        let valid: Vec<bool> = grid.centers().map(|tau| tau.abs() > t).collect();
        XiProfile {
            grid,
            delay_ns: t,
            xi: valid.iter().zip(grid.centers()).map(|(&v, tau)| if v { value * tau.signum() } else { 0.0 }).collect(),
            stderr: vec![0.1; grid.n_bins()],
            valid,
        }
    }

    #[test]
    fn islands_basic() {
        let g = make_time_grid(-5.0, 5.0, 1.0).unwrap();
        let v = [9.0, 9.0, 9.0, 9.0, 9.0, 1.0, 10.0, 0.0, 5.0, 6.0];
        let isl = detect_islands(&v, &g, 0.3).unwrap();
        assert_eq!(isl, vec![Island { start: 6, end: 6 }, Island { start: 8, end: 9 }]);
        let isl = detect_islands(&v, &g, 0.99).unwrap();
        assert_eq!(isl, vec![Island { start: 6, end: 6 }]);
        assert!(detect_islands(&v, &g, 1.0).is_err());
        assert!(detect_islands(&[0.0; 10], &g, 0.5).is_err());
    }

    #[test]
    fn zero_xi_gives_zero_phase() {
        let g = make_time_grid(-50.0, 50.0, 1.0).unwrap();
        let xi = flat_xi(g, 1.0, 0.0);
        let island = Island { start: 52, end: 80 };
        let p = recursive_phase(&xi, 0.0, 60, &island).unwrap();
        let known: Vec<_> = p.known().collect();
        assert_eq!(known.len(), 15);
        assert!(known.iter().all(|&(k, v)| k.abs_diff(60) % 2 == 0 && v == 0.0));
        assert!(!p.truncated);
    }

    #[test]
    fn delta_term_ramps() {
        // delta T = 0.1 rad with T = 1 ns
        let g = make_time_grid(-50.0, 50.0, 1.0).unwrap();
        let xi = flat_xi(g, 1.0, 0.0);
        let island = Island { start: 52, end: 80 };
        let delta = 0.1 / NS;
        let p = recursive_phase(&xi, delta, 60, &island).unwrap();
        for (k, v) in p.known() {
            let n = (k as f64 - 60.0) / 2.0;
            assert!((v - 0.1 * n).abs() < 1e-12, "bin {k}: {v}");
        }
    }

    #[test]
    fn invalid_xi_truncates() {
        let g = make_time_grid(-50.0, 50.0, 1.0).unwrap();
        let mut xi = flat_xi(g, 1.0, 0.0);
        // link 60 -> 62 goes through bin 61 and its mirror
        xi.valid[61] = false;
        xi.valid[g.mirror(61).unwrap()] = false;
        let island = Island { start: 52, end: 80 };
        let p = recursive_phase(&xi, 0.0, 60, &island).unwrap();
        assert!(p.truncated);
        assert!(p.phase[62].is_none() && p.phase[58].is_some());
        assert!(recursive_phase(&xi, 0.0, 10, &island).is_err());
    }

    #[test]
    fn single_island_stitch_is_identity() {
        let g = make_time_grid(-50.0, 50.0, 1.0).unwrap();
        let xi = flat_xi(g, 1.0, 0.2);
        let island = Island { start: 52, end: 70 };
        let fine = island_phase(&xi, 0.0, 55, &island).unwrap();
        let st = stitch_two_step(&[fine.clone()], &flat_xi(g, 5.8, 0.0), &[island], 0.0).unwrap();
        assert_eq!(st.phase, fine.phase);
        assert_eq!(st.components, vec![vec![0]]);
        assert!(st.offsets.is_empty());
    }

    #[test]
    fn amplitude_from_zero_signal_fails() {
        let g = make_time_grid(-5.0, 5.0, 1.0).unwrap();
        let h = CoincidenceHistogram::new(g, 0.0, None, vec![3.0; 10], crate::HistogramKind::Sampled).unwrap();
        assert!(reconstruct_amplitude(&h, 3.0).is_err());
        assert_eq!(estimate_background(&h), 3.0);
    }
}
