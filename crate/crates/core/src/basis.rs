//! Physics basis terms (the columns of the regression design matrix).
//!
//! A [`BasisTerm`] is a product of one or two primitive time functions. The
//! nonlinear inner parameters (angular frequency, damping rate, log time
//! scale) are not stored on the terms; a single [`NonlinearParams`] record
//! is shared by every term of a candidate subset, so e.g. the cos and sin
//! halves of an oscillation always share one frequency.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which half of a harmonic oscillation a factor represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarmonicPart {
    Cos,
    Sin,
    /// Expands to a (cos, sin) column pair in the design matrix.
    Pair,
}

/// A primitive time function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Constant,
    Linear,
    Quadratic,
    /// `cos(ωt)` / `sin(ωt)`; a phase is carried by the linear cos/sin coefficients.
    Harmonic(HarmonicPart),
    /// `exp(-γt)`, `γ ≥ 0`.
    ExpDecay,
    /// `ln(1 + t/τ)`, `τ > 0`.
    LogShift,
}

/// The nonlinear parameter families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gamma,
    Omega,
    Tau,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Gamma, Family::Omega, Family::Tau];

    pub fn name(self) -> &'static str {
        match self {
            Family::Gamma => "gamma",
            Family::Omega => "omega",
            Family::Tau => "tau",
        }
    }

    /// Smallest admissible value.
    pub fn lower_bound(self) -> f64 {
        match self {
            Family::Gamma => 0.0,
            Family::Omega | Family::Tau => f64::MIN_POSITIVE,
        }
    }

    fn check(self, value: f64) -> Result<()> {
        let ok = value.is_finite()
            && match self {
                Family::Gamma => value >= 0.0,
                Family::Omega | Family::Tau => value > 0.0,
            };
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("{} = {value}", self.name())))
        }
    }
}

impl PrimitiveKind {
    pub fn family(self) -> Option<Family> {
        match self {
            PrimitiveKind::Harmonic(_) => Some(Family::Omega),
            PrimitiveKind::ExpDecay => Some(Family::Gamma),
            PrimitiveKind::LogShift => Some(Family::Tau),
            _ => None,
        }
    }

    pub fn polynomial_degree(self) -> u32 {
        match self {
            PrimitiveKind::Linear => 1,
            PrimitiveKind::Quadratic => 2,
            _ => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PrimitiveKind::Constant => "constant",
            PrimitiveKind::Linear => "linear",
            PrimitiveKind::Quadratic => "quadratic",
            PrimitiveKind::Harmonic(HarmonicPart::Cos) => "harmonic_cos",
            PrimitiveKind::Harmonic(HarmonicPart::Sin) => "harmonic_sin",
            PrimitiveKind::Harmonic(HarmonicPart::Pair) => "harmonic",
            PrimitiveKind::ExpDecay => "exp_decay",
            PrimitiveKind::LogShift => "log_shift",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "constant" => PrimitiveKind::Constant,
            "linear" => PrimitiveKind::Linear,
            "quadratic" => PrimitiveKind::Quadratic,
            "harmonic_cos" => PrimitiveKind::Harmonic(HarmonicPart::Cos),
            "harmonic_sin" => PrimitiveKind::Harmonic(HarmonicPart::Sin),
            "harmonic" => PrimitiveKind::Harmonic(HarmonicPart::Pair),
            "exp_decay" => PrimitiveKind::ExpDecay,
            "log_shift" => PrimitiveKind::LogShift,
            _ => return None,
        })
    }

    /// Value, first and second time derivative at `t`.
    ///
    /// `Harmonic(Pair)` is evaluated as its cos half; callers expand pairs
    /// before getting here.
    fn jet(self, params: &NonlinearParams, t: f64) -> Result<[f64; 3]> {
        Ok(match self {
            PrimitiveKind::Constant => [1.0, 0.0, 0.0],
            PrimitiveKind::Linear => [t, 1.0, 0.0],
            PrimitiveKind::Quadratic => [t * t, 2.0 * t, 2.0],
            PrimitiveKind::Harmonic(part) => {
                let w = params.require(Family::Omega)?;
                let (s, c) = (w * t).sin_cos();
                match part {
                    HarmonicPart::Sin => [s, w * c, -w * w * s],
                    HarmonicPart::Cos | HarmonicPart::Pair => [c, -w * s, -w * w * c],
                }
            }
            PrimitiveKind::ExpDecay => {
                let g = params.require(Family::Gamma)?;
                let e = (-g * t).exp();
                [e, -g * e, g * g * e]
            }
            PrimitiveKind::LogShift => {
                let tau = params.require(Family::Tau)?;
                let shifted = t + tau;
                if !(t / tau + 1.0 > 0.0) {
                    return Err(Error::Domain(format!(
                        "log_shift requires t/tau + 1 > 0 (t = {t}, tau = {tau})"
                    )));
                }
                let inv = 1.0 / shifted;
                [(t / tau).ln_1p(), inv, -inv * inv]
            }
        })
    }
}

/// Shared nonlinear parameter record for a candidate subset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NonlinearParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

impl NonlinearParams {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn with(mut self, family: Family, value: f64) -> Self {
        self.set(family, value);
        self
    }

    pub fn get(&self, family: Family) -> Option<f64> {
        match family {
            Family::Gamma => self.gamma,
            Family::Omega => self.omega,
            Family::Tau => self.tau,
        }
    }

    pub fn set(&mut self, family: Family, value: f64) {
        match family {
            Family::Gamma => self.gamma = Some(value),
            Family::Omega => self.omega = Some(value),
            Family::Tau => self.tau = Some(value),
        }
    }

    /// Present and within bounds.
    pub fn require(&self, family: Family) -> Result<f64> {
        let v = self
            .get(family)
            .ok_or_else(|| Error::Parameter(format!("missing {}", family.name())))?;
        family.check(v)?;
        Ok(v)
    }

    /// Checks that every family in `families` is present and in bounds.
    pub fn validate(&self, families: &[Family]) -> Result<()> {
        families.iter().try_for_each(|&f| self.require(f).map(|_| ()))
    }
}

/// One column family of the design matrix: a product of one or two primitives.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisTerm {
    factors: Vec<PrimitiveKind>,
}

impl BasisTerm {
    pub fn new(factors: Vec<PrimitiveKind>) -> Result<Self> {
        if factors.is_empty() || factors.len() > 2 {
            return Err(Error::Argument(format!(
                "a basis term has 1 or 2 factors, got {}",
                factors.len()
            )));
        }
        if let [a, b] = factors[..] {
            if a.family().is_some() && a.family() == b.family() {
                return Err(Error::Argument(format!(
                    "two factors of the same nonlinear family: {} x {}",
                    a.name(),
                    b.name()
                )));
            }
        }
        Ok(Self { factors })
    }

    pub fn single(kind: PrimitiveKind) -> Self {
        Self {
            factors: vec![kind],
        }
    }

    /// Panics if the pair is not a valid product; intended for fixed tables.
    pub fn product(a: PrimitiveKind, b: PrimitiveKind) -> Self {
        Self::new(vec![a, b]).expect("valid product term")
    }

    pub fn factors(&self) -> &[PrimitiveKind] {
        &self.factors
    }

    /// Distinct nonlinear families used by this term.
    pub fn families(&self) -> Vec<Family> {
        let mut out: Vec<Family> = self.factors.iter().filter_map(|f| f.family()).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn polynomial_degree(&self) -> u32 {
        self.factors.iter().map(|f| f.polynomial_degree()).sum()
    }

    /// `10·factors + 5·nonlinear params + polynomial degree`.
    pub fn complexity_rank(&self) -> u32 {
        10 * self.factors.len() as u32 + 5 * self.families().len() as u32 + self.polynomial_degree()
    }

    fn pair_index(&self) -> Option<usize> {
        self.factors
            .iter()
            .position(|f| *f == PrimitiveKind::Harmonic(HarmonicPart::Pair))
    }

    /// Number of design-matrix columns this term expands to.
    pub fn width(&self) -> usize {
        if self.pair_index().is_some() {
            2
        } else {
            1
        }
    }

    /// Single-column terms this term expands to (a harmonic pair becomes cos then sin).
    pub fn expand(&self) -> Vec<BasisTerm> {
        match self.pair_index() {
            None => vec![self.clone()],
            Some(i) => [HarmonicPart::Cos, HarmonicPart::Sin]
                .into_iter()
                .map(|part| {
                    let mut factors = self.factors.clone();
                    factors[i] = PrimitiveKind::Harmonic(part);
                    BasisTerm { factors }
                })
                .collect(),
        }
    }

    fn jet(&self, params: &NonlinearParams, t: f64) -> Result<[f64; 3]> {
        let mut acc = [1.0, 0.0, 0.0];
        for f in &self.factors {
            let g = f.jet(params, t)?;
            acc = [
                acc[0] * g[0],
                acc[1] * g[0] + acc[0] * g[1],
                acc[2] * g[0] + 2.0 * acc[1] * g[1] + acc[0] * g[2],
            ];
        }
        Ok(acc)
    }

    fn check_single_column(&self) -> Result<()> {
        if self.width() != 1 {
            return Err(Error::Argument(format!(
                "{self} spans two columns; expand it before pointwise evaluation"
            )));
        }
        Ok(())
    }
}

impl fmt::Display for BasisTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.factors.iter().map(|k| k.name()).collect();
        f.write_str(&names.join("*"))
    }
}

/// Value of a single-column term at `t`.
pub fn eval_term(term: &BasisTerm, params: &NonlinearParams, t: f64) -> Result<f64> {
    term.check_single_column()?;
    Ok(term.jet(params, t)?[0])
}

/// Analytic first (`order = 1`) or second (`order = 2`) time derivative.
pub fn eval_derivative(term: &BasisTerm, params: &NonlinearParams, t: f64, order: u8) -> Result<f64> {
    if !(1..=2).contains(&order) {
        return Err(Error::Argument(format!("derivative order must be 1 or 2, got {order}")));
    }
    term.check_single_column()?;
    Ok(term.jet(params, t)?[order as usize])
}

/// Evaluates the value (`order = 0`) or a derivative of every expanded
/// column of `terms` at `t`, in design-matrix column order.
pub fn eval_columns(
    terms: &[BasisTerm],
    params: &NonlinearParams,
    t: f64,
    order: u8,
) -> Result<Vec<f64>> {
    if order > 2 {
        return Err(Error::Argument(format!("derivative order must be 0..=2, got {order}")));
    }
    let mut out = Vec::with_capacity(expanded_width(terms));
    for term in terms {
        for col in term.expand() {
            out.push(col.jet(params, t)?[order as usize]);
        }
    }
    Ok(out)
}

pub fn expanded_width(terms: &[BasisTerm]) -> usize {
    terms.iter().map(BasisTerm::width).sum()
}

/// Distinct nonlinear families used by a subset, in canonical order.
pub fn subset_families(terms: &[BasisTerm]) -> Vec<Family> {
    let mut out: Vec<Family> = terms.iter().flat_map(|t| t.families()).collect();
    out.sort();
    out.dedup();
    out
}

/// Design matrix: row `i`, column `j` is expanded column `j` evaluated at `times[i]`.
pub fn build_design_matrix(
    terms: &[BasisTerm],
    params: &NonlinearParams,
    times: &[f64],
) -> Result<DMatrix<f64>> {
    if terms.is_empty() {
        return Err(Error::Argument("empty term subset".into()));
    }
    if times.is_empty() {
        return Err(Error::Argument("empty time grid".into()));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Argument("non-finite sample time".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Argument("sample times must be strictly increasing".into()));
    }
    params.validate(&subset_families(terms))?;

    let columns: Vec<BasisTerm> = terms.iter().flat_map(BasisTerm::expand).collect();
    let mut m = DMatrix::from_element(times.len(), columns.len(), 1.0);
    // Each distinct non-polynomial factor is evaluated once and reused.
    let mut cache: Vec<(PrimitiveKind, Vec<f64>)> = Vec::new();
    for (j, col) in columns.iter().enumerate() {
        let out = m.column_mut(j).data.into_slice_mut();
        for &factor in col.factors() {
            if factor.family().is_none() {
                multiply_factor(factor, params, times, out)?;
                continue;
            }
            let i = match cache.iter().position(|(k, _)| *k == factor) {
                Some(i) => i,
                None => {
                    let mut v = vec![1.0; times.len()];
                    multiply_factor(factor, params, times, &mut v)?;
                    cache.push((factor, v));
                    cache.len() - 1
                }
            };
            out.iter_mut().zip(&cache[i].1).for_each(|(o, v)| *o *= v);
        }
    }
    Ok(m)
}

/// `out[i] *= factor(times[i])`; the column-wise fast path of `jet`.
fn multiply_factor(kind: PrimitiveKind, params: &NonlinearParams, times: &[f64], out: &mut [f64]) -> Result<()> {
    let zip = times.iter().zip(out.iter_mut());
    match kind {
        PrimitiveKind::Constant => {}
        PrimitiveKind::Linear => zip.for_each(|(t, o)| *o *= t),
        PrimitiveKind::Quadratic => zip.for_each(|(t, o)| *o *= t * t),
        PrimitiveKind::Harmonic(HarmonicPart::Sin) => {
            let w = params.require(Family::Omega)?;
            zip.for_each(|(t, o)| *o *= (w * t).sin());
        }
        PrimitiveKind::Harmonic(_) => {
            let w = params.require(Family::Omega)?;
            zip.for_each(|(t, o)| *o *= (w * t).cos());
        }
        PrimitiveKind::ExpDecay => {
            let g = params.require(Family::Gamma)?;
            zip.for_each(|(t, o)| *o *= (-g * t).exp());
        }
        PrimitiveKind::LogShift => {
            let tau = params.require(Family::Tau)?;
            // Times are increasing, so the first one is the binding domain check.
            kind.jet(params, times[0])?;
            zip.for_each(|(t, o)| *o *= (t / tau).ln_1p());
        }
    }
    Ok(())
}

/// Converts cos/sin coefficients `(A, B)` of `A cos ωt + B sin ωt` into
/// amplitude and phase `(a, φ)` with `a cos(ωt − φ)`.
pub fn amplitude_phase(cos_coef: f64, sin_coef: f64) -> (f64, f64) {
    (cos_coef.hypot(sin_coef), sin_coef.atan2(cos_coef))
}

/// Library restriction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LibraryMode {
    Full,
    /// Products of polynomial primitives only.
    #[serde(rename = "poly")]
    PolynomialOnly,
}

impl LibraryMode {
    pub fn name(self) -> &'static str {
        match self {
            LibraryMode::Full => "full",
            LibraryMode::PolynomialOnly => "poly",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "full" => Some(LibraryMode::Full),
            "poly" => Some(LibraryMode::PolynomialOnly),
            _ => None,
        }
    }
}

/// An ordered set of basis terms, ascending by complexity rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Library {
    pub mode: LibraryMode,
    terms: Vec<BasisTerm>,
}

impl Library {
    pub fn new(mode: LibraryMode) -> Self {
        use HarmonicPart::{Cos, Sin};
        use PrimitiveKind::*;
        let terms = match mode {
            LibraryMode::Full => vec![
                BasisTerm::single(Constant),
                BasisTerm::single(Linear),
                BasisTerm::single(Quadratic),
                BasisTerm::single(Harmonic(Cos)),
                BasisTerm::single(Harmonic(Sin)),
                BasisTerm::single(ExpDecay),
                BasisTerm::single(LogShift),
                BasisTerm::product(ExpDecay, Harmonic(Cos)),
                BasisTerm::product(ExpDecay, Harmonic(Sin)),
                BasisTerm::product(Linear, Harmonic(Cos)),
            ],
            // Products that duplicate a single primitive (1·x, t·t) are omitted.
            LibraryMode::PolynomialOnly => vec![
                BasisTerm::single(Constant),
                BasisTerm::single(Linear),
                BasisTerm::single(Quadratic),
                BasisTerm::product(Linear, Quadratic),
                BasisTerm::product(Quadratic, Quadratic),
            ],
        };
        Self::from_terms(mode, terms)
    }

    pub fn full() -> Self {
        Self::new(LibraryMode::Full)
    }

    pub fn polynomial_only() -> Self {
        Self::new(LibraryMode::PolynomialOnly)
    }

    fn from_terms(mode: LibraryMode, mut terms: Vec<BasisTerm>) -> Self {
        terms.sort_by_key(BasisTerm::complexity_rank);
        Self { mode, terms }
    }

    pub fn terms(&self) -> &[BasisTerm] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms selected by library indices.
    pub fn subset(&self, indices: &[usize]) -> Vec<BasisTerm> {
        indices.iter().map(|&i| self.terms[i].clone()).collect()
    }
}

/// All non-empty subsets (as ascending library indices) of size
/// `<= max_terms`, ordered by size, then summed complexity rank, then
/// lexicographically.
pub fn enumerate_candidates(
    library: &Library,
    max_terms: usize,
) -> Result<impl Iterator<Item = Vec<usize>>> {
    if max_terms == 0 {
        return Err(Error::Argument("max_terms must be at least 1".into()));
    }
    if max_terms > library.len() {
        return Err(Error::Argument(format!(
            "max_terms {max_terms} exceeds library size {}",
            library.len()
        )));
    }
    let ranks: Vec<u32> = library.terms.iter().map(BasisTerm::complexity_rank).collect();
    let mut out = Vec::new();
    for k in 1..=max_terms {
        let mut level = Vec::new();
        combinations(library.len(), k, 0, &mut Vec::with_capacity(k), &mut level);
        // `combinations` emits lexicographic order; the stable sort keeps it within ties.
        level.sort_by_key(|s| s.iter().map(|&i| ranks[i]).sum::<u32>());
        out.extend(level);
    }
    Ok(out.into_iter())
}

fn combinations(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in start..n {
        if n - i < k - cur.len() {
            break;
        }
        cur.push(i);
        combinations(n, k, i + 1, cur, out);
        cur.pop();
    }
}
