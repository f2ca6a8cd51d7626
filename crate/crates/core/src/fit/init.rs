//! Starting points for the nonlinear parameter search.

use serde::{Deserialize, Serialize};

use crate::basis::{subset_families, BasisTerm, Family, NonlinearParams};
use crate::error::{Error, Result};

/// Grid sizes per nonlinear family and a cap on the cross product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultistartGrid {
    pub omega: usize,
    pub gamma: usize,
    pub tau: usize,
    pub max_starts: usize,
}

impl Default for MultistartGrid {
    fn default() -> Self {
        Self {
            omega: 3,
            gamma: 3,
            tau: 3,
            max_starts: 9,
        }
    }
}

impl MultistartGrid {
    fn size(&self, family: Family) -> usize {
        match family {
            Family::Gamma => self.gamma,
            Family::Omega => self.omega,
            Family::Tau => self.tau,
        }
        .max(1)
    }
}

/// Zero crossings of the mean-removed signal. Exact zeros do not start a
/// new sign run.
pub fn zero_crossings(values: &[f64]) -> usize {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut last = 0.0f64;
    let mut count = 0;
    for v in values.iter().map(|v| v - mean) {
        if v == 0.0 {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            count += 1;
        }
        last = v;
    }
    count
}

/// Length of time covered by `n` samples: the sampled span plus one mean
/// sample interval, i.e. `n·Δt` on a uniform grid.
pub fn window_duration(times: &[f64]) -> f64 {
    let n = times.len();
    (times[n - 1] - times[0]) * n as f64 / (n - 1) as f64
}

/// `π · crossings / duration`, with one crossing assumed when there are none.
pub fn estimate_omega(times: &[f64], values: &[f64]) -> f64 {
    std::f64::consts::PI * zero_crossings(values).max(1) as f64 / window_duration(times)
}

/// Decay rate from a least-squares line through `ln|x|` at the local maxima
/// of `|x|`. `None` when fewer than two peaks exist.
pub fn estimate_gamma(times: &[f64], values: &[f64]) -> Option<f64> {
    let mag: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let peaks: Vec<(f64, f64)> = (1..mag.len().saturating_sub(1))
        .filter(|&i| mag[i] > 0.0 && mag[i] >= mag[i - 1] && mag[i] > mag[i + 1])
        .map(|i| (times[i], mag[i].ln()))
        .collect();
    if peaks.len() < 2 {
        return None;
    }
    let n = peaks.len() as f64;
    let mt = peaks.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = peaks.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = peaks.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sxx: f64 = peaks.iter().map(|p| (p.0 - mt).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some((-sxy / sxx).max(0.0))
}

/// `count` multipliers, evenly spaced over `[lo, hi]`, nearest to 1 first.
fn bracket(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    if count == 1 {
        return vec![1.0];
    }
    let mut f: Vec<f64> = (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect();
    f.sort_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs()).then(a.total_cmp(b)));
    f
}

fn family_candidates(family: Family, count: usize, times: &[f64], values: &[f64]) -> Vec<f64> {
    let duration = window_duration(times);
    match family {
        Family::Omega => {
            let w = estimate_omega(times, values);
            bracket(count, 0.8, 1.2).into_iter().map(|f| f * w).collect()
        }
        Family::Gamma => match estimate_gamma(times, values) {
            Some(g) if g > 0.0 => {
                // γ̂, γ̂/2, 2γ̂, γ̂/4, 4γ̂, ...
                (0..count)
                    .map(|i| {
                        let k = ((i + 1) / 2) as i32;
                        let sign = if i % 2 == 1 { -1 } else { 1 };
                        g * 2f64.powi(sign * k)
                    })
                    .collect()
            }
            Some(_) => std::iter::once(0.0)
                .chain((0..count.saturating_sub(1)).map(|i| 10f64.powi(i as i32) * 0.1 / duration))
                .collect(),
            None => (0..count)
                .map(|i| {
                    let k = ((i + 1) / 2) as i32;
                    let sign = if i % 2 == 1 { -1 } else { 1 };
                    10f64.powi(sign * k) / duration
                })
                .collect(),
        },
        Family::Tau => {
            // Logarithmic grid over [0.1·T, 10·T].
            bracket(count, 0.0, 2.0)
                .into_iter()
                .map(|m| duration * 10f64.powf(m - 1.0))
                .collect()
        }
    }
}

/// Starting points for [`refine_nonlinear`](super::refine_nonlinear): the
/// cross product of per-family candidate values, capped at
/// `grid.max_starts`. A subset with no nonlinear family gets one empty start.
pub fn init_params(
    terms: &[BasisTerm],
    times: &[f64],
    values: &[f64],
    grid: &MultistartGrid,
) -> Result<Vec<NonlinearParams>> {
    if times.len() < 4 || values.len() != times.len() {
        return Err(Error::Argument(format!(
            "initialization needs at least 4 samples, got {}",
            times.len().min(values.len())
        )));
    }
    let families = subset_families(terms);
    let mut starts = vec![NonlinearParams::none()];
    for family in families {
        let cands = family_candidates(family, grid.size(family), times, values);
        starts = starts
            .iter()
            .flat_map(|s| cands.iter().map(move |&v| s.with(family, v)))
            .collect();
    }
    starts.truncate(grid.max_starts.max(1));
    Ok(starts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{HarmonicPart, PrimitiveKind};
    use std::f64::consts::PI;

    fn grid(t_end: f64, rate: f64) -> Vec<f64> {
        let n = (t_end * rate).round() as usize;
        (0..n).map(|k| k as f64 / rate).collect()
    }

    #[test]
    fn omega_from_zero_crossings() {
        let t = grid(10.0, 100.0);
        let x: Vec<f64> = t.iter().map(|&t| (2.0 * PI * t).cos()).collect();
        assert_eq!(zero_crossings(&x), 20);
        assert!((estimate_omega(&t, &x) - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn gamma_from_peak_envelope() {
        let t = grid(10.0, 100.0);
        let x: Vec<f64> = t.iter().map(|&t| (-0.1 * t).exp() * (2.0 * PI * t).cos()).collect();
        let g = estimate_gamma(&t, &x).unwrap();
        assert!((g - 0.1).abs() < 1e-3, "gamma {g}");
    }

    #[test]
    fn no_nonlinear_family_gives_single_empty_start() {
        let t = grid(1.0, 10.0);
        let starts = init_params(&[BasisTerm::single(PrimitiveKind::Quadratic)], &t, &t, &MultistartGrid::default()).unwrap();
        assert_eq!(starts, vec![NonlinearParams::none()]);
    }

    #[test]
    fn too_few_samples() {
        let t = [0.0, 1.0, 2.0];
        assert!(matches!(
            init_params(&[BasisTerm::single(PrimitiveKind::Constant)], &t, &t, &MultistartGrid::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn cross_product_is_capped_and_centered() {
        let t = grid(10.0, 100.0);
        let x: Vec<f64> = t.iter().map(|&t| (-0.1 * t).exp() * (2.0 * PI * t).cos()).collect();
        let terms = [BasisTerm::product(PrimitiveKind::ExpDecay, PrimitiveKind::Harmonic(HarmonicPart::Cos))];
        let g = MultistartGrid { max_starts: 7, ..Default::default() };
        let starts = init_params(&terms, &t, &x, &g).unwrap();
        assert_eq!(starts.len(), 7);
        let w0 = estimate_omega(&t, &x);
        assert_eq!(starts[0].omega, Some(w0));
        assert!((starts[0].gamma.unwrap() - 0.1).abs() < 1e-3);
        let omegas: Vec<f64> = starts.iter().filter_map(|s| s.omega).collect();
        assert!(omegas.iter().all(|w| (0.8 * w0 - 1e-12..=1.2 * w0 + 1e-12).contains(w)));
    }

    #[test]
    fn tau_grid_spans_two_decades() {
        let t = grid(3.0, 100.0);
        let x: Vec<f64> = t.iter().map(|&t| (1.0 + t).ln()).collect();
        let starts = init_params(&[BasisTerm::single(PrimitiveKind::LogShift)], &t, &x, &MultistartGrid::default()).unwrap();
        let taus: Vec<f64> = starts.iter().map(|s| s.tau.unwrap()).collect();
        let d = 3.0;
        assert_eq!(taus.len(), 3);
        assert!((taus[0] - d).abs() < 1e-12);
        let lo = taus.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = taus.iter().cloned().fold(0.0, f64::max);
        assert!((lo - 0.1 * d).abs() < 1e-12 && (hi - 10.0 * d).abs() < 1e-9);
    }
}
