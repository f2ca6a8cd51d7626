//! Versioned JSON model descriptor for a [`FitResult`].
//!
//! ```json
//! {
//!   "format": "newton-model",
//!   "version": 1,
//!   "library": "full",
//!   "window": [0.0, 9.99],
//!   "channels": [{
//!     "channel": "x",
//!     "terms": [
//!       {"factors": [{"kind": "exp_decay", "gamma": 0.1}, {"kind": "harmonic_cos", "omega": 6.283185307179586}],
//!        "coefficients": [0.8660254037844387]}
//!     ],
//!     "rmse": 1e-16, "condition_estimate": 1.2, "converged": true,
//!     "data_scale": 1.0, "threshold": 1e-8, "candidates_evaluated": 55, "accepted": true
//!   }]
//! }
//! ```
//!
//! Each factor carries the value of its nonlinear parameter, so a parameter
//! shared by several factors is repeated; on reading, the copies must agree.
//! Floats are written in shortest round-trip form, so reading a written
//! descriptor reproduces the result bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CandidateModel, ChannelFit, FitResult};
use crate::basis::{BasisTerm, LibraryMode, NonlinearParams, PrimitiveKind};
use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "newton-model";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDescriptor {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDescriptor {
    pub factors: Vec<FactorDescriptor>,
    pub coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDescriptor {
    pub channel: String,
    pub terms: Vec<TermDescriptor>,
    pub rmse: f64,
    pub condition_estimate: f64,
    pub converged: bool,
    pub data_scale: f64,
    pub threshold: f64,
    pub candidates_evaluated: usize,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    pub format: String,
    pub version: u32,
    pub library: LibraryMode,
    pub window: [f64; 2],
    pub channels: Vec<ChannelDescriptor>,
}

fn describe_factor(kind: PrimitiveKind, params: &NonlinearParams) -> FactorDescriptor {
    let mut f = FactorDescriptor {
        kind: kind.name().to_string(),
        gamma: None,
        omega: None,
        tau: None,
    };
    if let Some(family) = kind.family() {
        let value = params.get(family);
        match family {
            crate::basis::Family::Gamma => f.gamma = value,
            crate::basis::Family::Omega => f.omega = value,
            crate::basis::Family::Tau => f.tau = value,
        }
    }
    f
}

fn describe_channel(c: &ChannelFit) -> ChannelDescriptor {
    let m = &c.model;
    let terms = m
        .terms
        .iter()
        .zip(m.term_coefficients())
        .map(|(term, coefs)| TermDescriptor {
            factors: term.factors().iter().map(|&k| describe_factor(k, &m.params)).collect(),
            coefficients: coefs.to_vec(),
        })
        .collect();
    ChannelDescriptor {
        channel: c.channel.clone(),
        terms,
        rmse: m.rmse,
        condition_estimate: m.condition_estimate,
        converged: m.converged,
        data_scale: c.data_scale,
        threshold: c.threshold,
        candidates_evaluated: c.candidates_evaluated,
        accepted: c.accepted,
    }
}

fn read_channel(d: &ChannelDescriptor) -> Result<ChannelFit> {
    let bad = |msg: String| Error::Format(format!("channel {:?}: {msg}", d.channel));
    let mut params = NonlinearParams::none();
    let mut terms = Vec::with_capacity(d.terms.len());
    let mut coefficients = Vec::new();
    for td in &d.terms {
        let mut kinds = Vec::with_capacity(td.factors.len());
        for f in &td.factors {
            let kind = PrimitiveKind::from_name(&f.kind).ok_or_else(|| bad(format!("unknown factor kind {:?}", f.kind)))?;
            let given = [
                (crate::basis::Family::Gamma, f.gamma),
                (crate::basis::Family::Omega, f.omega),
                (crate::basis::Family::Tau, f.tau),
            ];
            for (family, value) in given {
                let Some(v) = value else { continue };
                if kind.family() != Some(family) {
                    return Err(bad(format!("{} does not take {}", f.kind, family.name())));
                }
                match params.get(family) {
                    Some(prev) if prev.to_bits() != v.to_bits() => {
                        return Err(bad(format!("conflicting {} values {prev} and {v}", family.name())));
                    }
                    _ => params.set(family, v),
                }
            }
            if let Some(family) = kind.family() {
                if params.get(family).is_none() {
                    return Err(bad(format!("{} is missing {}", f.kind, family.name())));
                }
            }
            kinds.push(kind);
        }
        let term = BasisTerm::new(kinds).map_err(|e| bad(e.to_string()))?;
        if td.coefficients.len() != term.width() {
            return Err(bad(format!(
                "term {term} needs {} coefficients, got {}",
                term.width(),
                td.coefficients.len()
            )));
        }
        coefficients.extend_from_slice(&td.coefficients);
        terms.push(term);
    }
    if terms.is_empty() {
        return Err(bad("no terms".into()));
    }
    let families = crate::basis::subset_families(&terms);
    params.validate(&families).map_err(|e| bad(e.to_string()))?;
    Ok(ChannelFit {
        channel: d.channel.clone(),
        model: CandidateModel {
            terms,
            params,
            coefficients,
            rmse: d.rmse,
            condition_estimate: d.condition_estimate,
            converged: d.converged,
        },
        data_scale: d.data_scale,
        threshold: d.threshold,
        candidates_evaluated: d.candidates_evaluated,
        accepted: d.accepted,
    })
}

impl ModelDescriptor {
    pub fn from_result(result: &FitResult) -> Self {
        Self {
            format: FORMAT_NAME.to_string(),
            version: FORMAT_VERSION,
            library: result.library,
            window: result.window,
            channels: result.channels.iter().map(describe_channel).collect(),
        }
    }

    pub fn to_result(&self) -> Result<FitResult> {
        if self.format != FORMAT_NAME {
            return Err(Error::Format(format!("not a model descriptor (format {:?})", self.format)));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported descriptor version {}", self.version)));
        }
        if self.channels.is_empty() {
            return Err(Error::Format("descriptor has no channels".into()));
        }
        Ok(FitResult {
            library: self.library,
            window: self.window,
            channels: self.channels.iter().map(read_channel).collect::<Result<_>>()?,
        })
    }
}

impl FitResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelDescriptor::from_result(self)).expect("descriptor is serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: ModelDescriptor = serde_json::from_str(text).map_err(|e| Error::Format(format!("model descriptor: {e}")))?;
        d.to_result()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Family, HarmonicPart, Library};
    use crate::fit::{fit_trajectory, FitConfig};
    use crate::scenario::ScenarioSpec;
    use proptest::prelude::*;

    fn pendulum_result() -> FitResult {
        let spec = ScenarioSpec::new(ScenarioSpec::damped_pendulum(1.0, 0.1, 2.0 * std::f64::consts::PI, 0.3), 0.0, 3.0, 50.0);
        fit_trajectory(&spec.generate().unwrap(), &Library::full(), &FitConfig::default()).unwrap()
    }

    #[test]
    fn shared_parameter_is_written_per_factor() {
        let r = pendulum_result();
        let d = ModelDescriptor::from_result(&r);
        assert_eq!(d.format, "newton-model");
        let ch = &d.channels[0];
        assert_eq!(ch.terms.len(), 2);
        let omegas: Vec<f64> = ch.terms.iter().filter_map(|t| t.factors[1].omega).collect();
        assert_eq!(omegas.len(), 2);
        assert_eq!(omegas[0], omegas[1]);
        assert_eq!(FitResult::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn rejects_malformed_documents() {
        let r = pendulum_result();
        let good = r.to_json();
        assert!(FitResult::from_json("{").is_err());
        assert!(FitResult::from_json(&good.replace("\"version\": 1", "\"version\": 2")).is_err());
        assert!(FitResult::from_json(&good.replace("exp_decay", "exp_growth")).is_err());

        let mut d = ModelDescriptor::from_result(&r);
        d.channels[0].terms[0].factors[1].omega = Some(1.0);
        assert!(matches!(d.to_result(), Err(Error::Format(_))));

        let mut d = ModelDescriptor::from_result(&r);
        d.channels[0].terms[0].coefficients.push(0.0);
        assert!(d.to_result().is_err());

        let mut d = ModelDescriptor::from_result(&r);
        d.channels[0].terms[0].factors[0].gamma = None;
        d.channels[0].terms[1].factors[0].gamma = None;
        assert!(d.to_result().is_err());

        let mut d = ModelDescriptor::from_result(&r);
        d.channels[0].terms[0].factors[0].omega = Some(2.0);
        assert!(d.to_result().is_err());
    }

    fn arb_float() -> impl Strategy<Value = f64> {
        prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e3f64..1e3]
    }

    fn arb_kind() -> impl Strategy<Value = PrimitiveKind> {
        prop_oneof![
            Just(PrimitiveKind::Constant),
            Just(PrimitiveKind::Linear),
            Just(PrimitiveKind::Quadratic),
            Just(PrimitiveKind::Harmonic(HarmonicPart::Cos)),
            Just(PrimitiveKind::Harmonic(HarmonicPart::Sin)),
            Just(PrimitiveKind::Harmonic(HarmonicPart::Pair)),
            Just(PrimitiveKind::ExpDecay),
            Just(PrimitiveKind::LogShift),
        ]
    }

    fn arb_channel() -> impl Strategy<Value = ChannelFit> {
        let terms = prop::collection::vec(prop::collection::vec(arb_kind(), 1..=2), 1..=3).prop_filter_map(
            "valid terms",
            |kinds| kinds.into_iter().map(|k| BasisTerm::new(k).ok()).collect::<Option<Vec<_>>>(),
        );
        (
            terms,
            (0.0f64..50.0, 1e-3f64..100.0, 1e-6f64..1e6),
            prop::collection::vec(arb_float(), 6),
            (0.0f64..1.0, 1.0f64..1e8, any::<bool>(), 1.0f64..1e6, 0usize..200, any::<bool>()),
            "[a-z]{1,6}",
        )
            .prop_map(|(terms, (g, w, tau), coefs, (rmse, cond, conv, scale, n, acc), name)| {
                let mut params = NonlinearParams::none();
                for f in crate::basis::subset_families(&terms) {
                    params.set(f, match f {
                        Family::Gamma => g,
                        Family::Omega => w,
                        Family::Tau => tau,
                    });
                }
                let width: usize = terms.iter().map(BasisTerm::width).sum();
                ChannelFit {
                    channel: name,
                    model: CandidateModel {
                        terms,
                        params,
                        coefficients: coefs.into_iter().cycle().take(width).collect(),
                        rmse,
                        condition_estimate: cond,
                        converged: conv,
                    },
                    data_scale: scale,
                    threshold: 1e-8 * scale,
                    candidates_evaluated: n,
                    accepted: acc,
                }
            })
    }

    proptest! {
        #[test]
        fn descriptor_round_trip_is_lossless(
            channels in prop::collection::vec(arb_channel(), 1..4),
            poly in any::<bool>(),
            a in arb_float(),
            b in arb_float(),
        ) {
            let r = FitResult {
                library: if poly { LibraryMode::PolynomialOnly } else { LibraryMode::Full },
                window: [a, b],
                channels,
            };
            let back = FitResult::from_json(&r.to_json()).unwrap();
            prop_assert_eq!(&back, &r);
            prop_assert_eq!(back.to_json(), r.to_json());
        }
    }
}
