//! Variable-projection refinement of the nonlinear inner parameters.
//!
//! For fixed nonlinear parameters θ the linear coefficients are the exact
//! least-squares solution, so the residual `r(θ) = y − A(θ)·c(θ)` is a
//! function of θ alone. That projected residual is minimized with a
//! Levenberg-Marquardt iteration whose Jacobian comes from central
//! differences.

use nalgebra::{DMatrix, DVector};

use super::linear::{solve_linear, LinearSolution};
use super::{CandidateModel, FitConfig};
use crate::basis::{build_design_matrix, subset_families, BasisTerm, Family, NonlinearParams, PrimitiveKind};
use crate::error::{Error, Result};

/// Relative parameter step below which the iteration counts as stalled.
const STEP_TOL: f64 = 1e-10;
/// Iterations per stagnation check, and the minimum relative rmse decrease
/// a check window must achieve for the iteration to continue.
const STALL_WINDOW: usize = 20;
const STALL_DECREASE: f64 = 1e-3;

/// Minimum total decay `γ·T` of a standalone exponential term.
const BARE_DECAY_FLOOR: f64 = 0.1;

/// Box constraints on the nonlinear parameters for one data window.
#[derive(Debug, Clone, Copy)]
struct Bounds {
    lower: [f64; 3],
    upper: [f64; 3],
}

impl Bounds {
    fn for_window(terms: &[BasisTerm], times: &[f64]) -> Self {
        let n = times.len();
        let span = times[n - 1] - times[0];
        let duration = span * n as f64 / (n - 1) as f64;
        let min_dt = times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        Self {
            // gamma, omega, tau. Less than half an oscillation inside the
            // window is indistinguishable from a low-degree polynomial.
            // Likewise a bare exponential decaying by less than 10% is
            // indistinguishable from a line; inside a product γ = 0 stays valid.
            lower: [
                if terms.iter().any(|t| t.factors() == [PrimitiveKind::ExpDecay]) {
                    BARE_DECAY_FLOOR / duration
                } else {
                    0.0
                },
                std::f64::consts::PI / duration,
                1e-9 * duration,
            ],
            upper: [
                700.0 / duration.max(times[n - 1].abs()).max(f64::MIN_POSITIVE),
                std::f64::consts::PI / min_dt,
                1e6 * duration,
            ],
        }
    }

    fn index(f: Family) -> usize {
        match f {
            Family::Gamma => 0,
            Family::Omega => 1,
            Family::Tau => 2,
        }
    }

    fn clamp(&self, f: Family, v: f64) -> f64 {
        let i = Self::index(f);
        v.max(self.lower[i]).min(self.upper[i])
    }
}

struct Problem<'a> {
    terms: &'a [BasisTerm],
    families: Vec<Family>,
    times: &'a [f64],
    obs: &'a [f64],
    bounds: Bounds,
}

impl Problem<'_> {
    fn params(&self, theta: &[f64]) -> NonlinearParams {
        self.families
            .iter()
            .zip(theta)
            .fold(NonlinearParams::none(), |p, (&f, &v)| p.with(f, v))
    }

    fn evaluate(&self, theta: &[f64]) -> Result<LinearSolution> {
        let design = build_design_matrix(self.terms, &self.params(theta), self.times)?;
        solve_linear(&design, self.obs)
    }

    fn model(&self, theta: &[f64], sol: LinearSolution, converged: bool) -> CandidateModel {
        CandidateModel {
            terms: self.terms.to_vec(),
            params: self.params(theta),
            coefficients: sol.coefficients,
            rmse: sol.rmse,
            condition_estimate: sol.condition,
            converged,
        }
    }

    /// Central-difference Jacobian of the projected residual, falling back
    /// to one-sided differences at the bounds or where the design degenerates.
    fn jacobian(&self, theta: &[f64], base: &[f64]) -> DMatrix<f64> {
        let n = self.obs.len();
        let mut jac = DMatrix::zeros(n, theta.len());
        for (j, &f) in self.families.iter().enumerate() {
            let h = 1e-6 * theta[j].abs().max(1.0);
            let i = Bounds::index(f);
            let shifted = |delta: f64| -> Option<Vec<f64>> {
                let v = theta[j] + delta;
                if v < self.bounds.lower[i] || v > self.bounds.upper[i] {
                    return None;
                }
                let mut th = theta.to_vec();
                th[j] = v;
                self.evaluate(&th).ok().map(|s| s.residuals)
            };
            let column: Option<Vec<f64>> = match (shifted(h), shifted(-h)) {
                (Some(p), Some(m)) => Some(p.iter().zip(&m).map(|(a, b)| (a - b) / (2.0 * h)).collect()),
                (Some(p), None) => Some(p.iter().zip(base).map(|(a, b)| (a - b) / h).collect()),
                (None, Some(m)) => Some(base.iter().zip(&m).map(|(a, b)| (a - b) / h).collect()),
                (None, None) => None,
            };
            if let Some(col) = column {
                for (r, v) in col.into_iter().enumerate() {
                    jac[(r, j)] = v;
                }
            }
        }
        jac
    }
}

/// Refines the nonlinear parameters of `terms` from `start`.
///
/// The returned model never has a larger rmse than the start. A subset
/// without nonlinear parameters is solved once. Steps that leave the
/// parameter domain or produce a degenerate design are rejected and the
/// damping is increased; if no step ever improves, the start evaluation is
/// returned with `converged = false`.
pub fn refine_nonlinear(
    terms: &[BasisTerm],
    start: &NonlinearParams,
    times: &[f64],
    obs: &[f64],
    config: &FitConfig,
) -> Result<CandidateModel> {
    let families = subset_families(terms);
    start.validate(&families)?;
    if times.len() < 2 {
        return Err(Error::Argument("refinement needs at least 2 samples".into()));
    }
    let problem = Problem {
        terms,
        families,
        times,
        obs,
        bounds: Bounds::for_window(terms, times),
    };
    let mut theta: Vec<f64> = problem
        .families
        .iter()
        .map(|&f| problem.bounds.clamp(f, start.get(f).expect("validated")))
        .collect();
    let mut best = problem.evaluate(&theta)?;
    if theta.is_empty() {
        return Ok(problem.model(&theta, best, true));
    }

    let scale = obs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-15 * scale;
    let mut mu = 1e-3;
    let mut improved = false;
    let mut converged = false;

    let mut checkpoint = best.rmse;
    for iter in 0..config.max_outer_iters {
        if iter > 0 && iter % STALL_WINDOW == 0 {
            if best.rmse > (1.0 - STALL_DECREASE) * checkpoint {
                break;
            }
            checkpoint = best.rmse;
        }
        if best.rmse <= floor {
            converged = true;
            break;
        }
        let jac = problem.jacobian(&theta, &best.residuals);
        let r = DVector::from_column_slice(&best.residuals);
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * r;
        let max_diag = jtj.diagonal().max();
        if !(max_diag > 0.0) || grad.norm() <= f64::EPSILON * max_diag.sqrt() * floor {
            converged = improved;
            break;
        }

        let mut accepted = None;
        while mu < 1e16 {
            let mut lhs = jtj.clone();
            for k in 0..theta.len() {
                lhs[(k, k)] += mu * jtj[(k, k)].max(1e-12 * max_diag);
            }
            let Some(step) = lhs.cholesky().map(|c| c.solve(&(-&grad))) else {
                mu *= 4.0;
                continue;
            };
            let trial: Vec<f64> = problem
                .families
                .iter()
                .zip(theta.iter().zip(step.iter()))
                .map(|(&f, (&t, &d))| problem.bounds.clamp(f, t + d))
                .collect();
            if trial == theta {
                break;
            }
            match problem.evaluate(&trial) {
                Ok(sol) if sol.rmse < best.rmse => {
                    accepted = Some((trial, sol));
                    break;
                }
                _ => mu *= 4.0,
            }
        }

        let Some((trial, sol)) = accepted else {
            // No admissible descent direction left.
            converged = improved;
            break;
        };
        let rel_change = (best.rmse - sol.rmse) / best.rmse;
        let step_norm = trial.iter().zip(&theta).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let theta_norm = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
        theta = trial;
        best = sol;
        improved = true;
        let near_gauss_newton = mu < 1.0;
        mu = (mu / 3.0).max(1e-12);
        let stalled = step_norm <= STEP_TOL * (theta_norm + STEP_TOL);
        if (rel_change < config.nonlinear_tol && near_gauss_newton) || stalled {
            converged = true;
            break;
        }
    }
    Ok(problem.model(&theta, best, converged))
}
