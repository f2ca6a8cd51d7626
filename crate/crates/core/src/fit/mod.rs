//! Model identification: variable-projection least squares over candidate
//! term subsets, and selection across the ranked subset enumeration.

mod descriptor;
mod init;
mod linear;
mod refine;

use serde::{Deserialize, Serialize};

pub use descriptor::{ChannelDescriptor, FactorDescriptor, ModelDescriptor, TermDescriptor, FORMAT_NAME, FORMAT_VERSION};
pub use init::{estimate_gamma, estimate_omega, init_params, window_duration, zero_crossings, MultistartGrid};
pub use linear::{solve_linear, LinearSolution, MAX_CONDITION};
pub use refine::refine_nonlinear;

use crate::basis::{
    amplitude_phase, enumerate_candidates, eval_columns, expanded_width, subset_families, BasisTerm, HarmonicPart,
    Library, LibraryMode, NonlinearParams, PrimitiveKind,
};
use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// With a known noise level, a candidate is accepted once its rmse falls
/// below this multiple of the noise standard deviation.
pub const NOISE_ACCEPT_FACTOR: f64 = 1.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Acceptance threshold relative to the channel's data scale.
    pub rmse_accept: f64,
    /// Relative residual change that ends the nonlinear search.
    pub nonlinear_tol: f64,
    pub max_terms: usize,
    pub multistart: MultistartGrid,
    pub max_outer_iters: usize,
    /// Evaluate every subset instead of stopping at the first acceptable one.
    pub exhaustive: bool,
    /// Known measurement noise standard deviation (channel units). When set,
    /// the acceptance threshold is at least `NOISE_ACCEPT_FACTOR · sigma`.
    pub noise_sigma: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rmse_accept: 1e-8,
            nonlinear_tol: 1e-8,
            max_terms: 3,
            multistart: MultistartGrid::default(),
            max_outer_iters: 200,
            exhaustive: false,
            noise_sigma: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Argument(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("rmse_accept", self.rmse_accept)?;
        positive("nonlinear_tol", self.nonlinear_tol)?;
        if self.max_terms == 0 {
            return Err(Error::Argument("max_terms must be >= 1".into()));
        }
        if let Some(s) = self.noise_sigma {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::Argument(format!("noise_sigma must be >= 0, got {s}")));
            }
        }
        Ok(())
    }

    /// Absolute rmse threshold for a channel with the given data scale.
    pub fn threshold(&self, data_scale: f64) -> f64 {
        let relative = self.rmse_accept * data_scale;
        match self.noise_sigma {
            Some(s) => relative.max(NOISE_ACCEPT_FACTOR * s),
            None => relative,
        }
    }
}

/// `max(1, max|obs|)`.
pub fn data_scale(obs: &[f64]) -> f64 {
    obs.iter().fold(1.0f64, |m, v| m.max(v.abs()))
}

/// A fitted linear combination of basis terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateModel {
    pub terms: Vec<BasisTerm>,
    pub params: NonlinearParams,
    /// One per expanded design column.
    pub coefficients: Vec<f64>,
    pub rmse: f64,
    pub condition_estimate: f64,
    pub converged: bool,
}

impl CandidateModel {
    /// Value (`order = 0`) or time derivative of the model at `t`.
    pub fn evaluate(&self, t: f64, order: u8) -> Result<f64> {
        let cols = eval_columns(&self.terms, &self.params, t, order)?;
        Ok(cols.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum())
    }

    pub fn predict(&self, t: f64) -> Result<f64> {
        self.evaluate(t, 0)
    }

    pub fn predict_many(&self, times: &[f64]) -> Result<Vec<f64>> {
        times.iter().map(|&t| self.predict(t)).collect()
    }

    /// Coefficients grouped per term.
    pub fn term_coefficients(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.terms.len());
        let mut at = 0;
        for t in &self.terms {
            out.push(&self.coefficients[at..at + t.width()]);
            at += t.width();
        }
        out
    }

    /// Coefficient of a single-column term, if the term is in the model.
    pub fn coefficient(&self, term: &BasisTerm) -> Option<f64> {
        let i = self.terms.iter().position(|t| t == term)?;
        let c = self.term_coefficients()[i];
        (c.len() == 1).then(|| c[0])
    }

    pub fn nonlinear_count(&self) -> usize {
        subset_families(&self.terms).len()
    }

    /// Amplitude and phase `(a, φ)` of the oscillation `a·g(t)·cos(ωt − φ)`
    /// formed by the cos/sin terms that share the co-factor `g` (pass
    /// `None` for a bare harmonic).
    pub fn amplitude_phase(&self, cofactor: Option<PrimitiveKind>) -> Option<(f64, f64)> {
        let part = |p: HarmonicPart| {
            let h = PrimitiveKind::Harmonic(p);
            let term = match cofactor {
                None => BasisTerm::single(h),
                Some(g) => BasisTerm::new(vec![g, h]).ok()?,
            };
            Some(self.coefficient(&term).unwrap_or(0.0))
        };
        let (a, b) = (part(HarmonicPart::Cos)?, part(HarmonicPart::Sin)?);
        if a == 0.0 && b == 0.0 {
            None
        } else {
            Some(amplitude_phase(a, b))
        }
    }
}

/// Identified model for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    pub channel: String,
    pub model: CandidateModel,
    pub data_scale: f64,
    /// Absolute rmse threshold the model was judged against.
    pub threshold: f64,
    /// Subsets evaluated, counted in enumeration order.
    pub candidates_evaluated: usize,
    pub accepted: bool,
}

/// Identified models for every channel of a trajectory window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub library: LibraryMode,
    /// `[first, last]` sample time of the fitted window.
    pub window: [f64; 2],
    pub channels: Vec<ChannelFit>,
}

impl FitResult {
    pub fn accepted(&self) -> bool {
        self.channels.iter().all(|c| c.accepted)
    }

    pub fn channel(&self, name: &str) -> Option<&ChannelFit> {
        self.channels.iter().find(|c| c.channel == name)
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.channel.clone()).collect()
    }

    /// Model prediction for every channel at `t`.
    pub fn predict(&self, t: f64) -> Result<Vec<f64>> {
        self.channels.iter().map(|c| c.model.predict(t)).collect()
    }

    pub fn predict_trajectory(&self, times: &[f64]) -> Result<Trajectory> {
        let columns = self
            .channels
            .iter()
            .map(|c| c.model.predict_many(times))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::from_columns(self.channel_names(), times.to_vec(), columns)
    }
}

/// Fits one subset: every multistart is refined and the lowest-rmse result
/// kept, stopping early once a start reaches `threshold`. `None` when every
/// start fails (degenerate design or out-of-domain samples).
fn fit_subset(terms: &[BasisTerm], times: &[f64], obs: &[f64], config: &FitConfig, threshold: f64) -> Option<CandidateModel> {
    let starts = init_params(terms, times, obs, &config.multistart).ok()?;
    let mut best: Option<CandidateModel> = None;
    for start in starts {
        let Ok(model) = refine_nonlinear(terms, &start, times, obs, config) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| model.rmse < b.rmse) {
            best = Some(model);
        }
        if best.as_ref().is_some_and(|b| b.rmse <= threshold) {
            break;
        }
    }
    best
}

/// Identifies the model for one channel.
///
/// Subsets are visited in [`enumerate_candidates`] order and the first one
/// whose rmse is within the threshold is accepted. Otherwise the minimum-rmse
/// candidate is returned with `accepted = false`, ties broken by fewer terms,
/// fewer nonlinear parameters, then enumeration order. With
/// `config.exhaustive` all subsets are evaluated and the same tie-break picks
/// among the acceptable ones.
pub fn select_model(
    channel: &str,
    times: &[f64],
    obs: &[f64],
    library: &Library,
    config: &FitConfig,
) -> Result<ChannelFit> {
    config.validate()?;
    if times.len() != obs.len() {
        return Err(Error::Argument("times and observations differ in length".into()));
    }
    let max_terms = config.max_terms.min(library.len());
    let subsets: Vec<Vec<usize>> = enumerate_candidates(library, max_terms)?.collect();
    let widest = subsets
        .iter()
        .map(|s| expanded_width(&library.subset(s)))
        .max()
        .unwrap_or(1);
    let required = (2 * widest).max(4);
    if times.len() < required {
        return Err(Error::Argument(format!(
            "model selection needs at least {required} samples, got {}",
            times.len()
        )));
    }

    let scale = data_scale(obs);
    let threshold = config.threshold(scale);
    let mut evaluated: Vec<(usize, CandidateModel)> = Vec::new();
    let mut first_accept = None;
    for (idx, subset) in subsets.iter().enumerate() {
        let terms = library.subset(subset);
        let Some(model) = fit_subset(&terms, times, obs, config, threshold) else {
            continue;
        };
        let ok = model.rmse <= threshold;
        evaluated.push((idx, model));
        if ok && first_accept.is_none() {
            first_accept = Some(evaluated.len() - 1);
            if !config.exhaustive {
                break;
            }
        }
    }

    let key = |(idx, m): &(usize, CandidateModel)| (m.terms.len(), m.nonlinear_count(), *idx);
    let chosen = if config.exhaustive && first_accept.is_some() {
        evaluated.iter().filter(|(_, m)| m.rmse <= threshold).min_by_key(|c| key(c))
    } else if let Some(i) = first_accept {
        evaluated.get(i)
    } else {
        evaluated
            .iter()
            .min_by(|a, b| a.1.rmse.total_cmp(&b.1.rmse).then_with(|| key(a).cmp(&key(b))))
    };
    let Some((idx, model)) = chosen.cloned() else {
        return Err(Error::Argument("no candidate subset could be fitted".into()));
    };
    let candidates_evaluated = if config.exhaustive || first_accept.is_none() {
        subsets.len()
    } else {
        idx + 1
    };
    Ok(ChannelFit {
        channel: channel.to_string(),
        accepted: model.rmse <= threshold,
        model,
        data_scale: scale,
        threshold,
        candidates_evaluated,
    })
}

/// Fits every channel of `traj`.
pub fn fit_trajectory(traj: &Trajectory, library: &Library, config: &FitConfig) -> Result<FitResult> {
    if traj.is_empty() {
        return Err(Error::Argument("empty trajectory".into()));
    }
    let channels = traj
        .channel_names()
        .iter()
        .enumerate()
        .map(|(i, name)| select_model(name, traj.times(), traj.column(i), library, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(FitResult {
        library: library.mode,
        window: [traj.times()[0], traj.times()[traj.len() - 1]],
        channels,
    })
}

/// Planar path from fitted arc-length `s` and heading `theta` channels:
/// `x(t) = ∫₀ᵗ s'(u)·cos θ(u) du` and likewise `y` with `sin`, integrated by
/// composite Simpson with panels of at most `step` from `t = 0`.
pub fn reconstruct_plane(result: &FitResult, times: &[f64], step: f64) -> Result<Trajectory> {
    let model = |name: &str| {
        result
            .channel(name)
            .map(|c| &c.model)
            .ok_or_else(|| Error::Argument(format!("reconstruction needs a {name:?} channel")))
    };
    let (s, theta) = (model("s")?, model("theta")?);
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Argument(format!("step must be > 0, got {step}")));
    }
    if times.first().is_none_or(|&t| t < 0.0) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("times must be non-empty, >= 0 and strictly increasing".into()));
    }
    let integrand = |u: f64, f: fn(f64) -> f64| {
        let rate = s.evaluate(u, 1).unwrap_or(f64::NAN);
        rate * f(theta.predict(u).unwrap_or(f64::NAN))
    };
    let x = crate::scenario::cumulative_simpson(|u| integrand(u, f64::cos), times, step);
    let y = crate::scenario::cumulative_simpson(|u| integrand(u, f64::sin), times, step);
    if x.iter().chain(&y).any(|v| !v.is_finite()) {
        return Err(Error::Domain("fitted models are not finite on the reconstruction interval".into()));
    }
    Trajectory::from_columns(vec!["x".into(), "y".into()], times.to_vec(), vec![x, y])
}

/// Force `m·x''(t)` with its per-term decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Force {
    pub total: f64,
    pub per_term: Vec<(String, f64)>,
}

pub fn force_of(model: &CandidateModel, mass: f64, t: f64) -> Result<Force> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::Argument(format!("mass must be > 0, got {mass}")));
    }
    let accel = eval_columns(&model.terms, &model.params, t, 2)?;
    let mut per_term = Vec::with_capacity(model.terms.len());
    let mut at = 0;
    for term in &model.terms {
        let w = term.width();
        let a: f64 = (at..at + w).map(|k| model.coefficients[k] * accel[k]).sum();
        per_term.push((term.to_string(), mass * a));
        at += w;
    }
    let total = per_term.iter().map(|(_, f)| f).sum();
    Ok(Force { total, per_term })
}
