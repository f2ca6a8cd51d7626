//! Building a [`ScenarioSpec`] from command-line flags.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{bail, Context, Result};
use newton_scheme::scenario::{CurveBall, ScenarioKind, ScenarioSpec, STANDARD_GRAVITY};

use crate::args::ScenarioArgs;

const DEFAULT_RATE: f64 = 100.0;
const DEFAULT_DURATION: f64 = 10.0;

/// Flags that belong to each built-in scenario.
fn allowed(kind: &str) -> &'static [&'static str] {
    match kind {
        "free_fall" => &["x0", "v0", "accel"],
        "damped_pendulum" => &["amplitude", "gamma", "omega", "phi"],
        "curve_ball" => &[
            "theta0", "lambda", "radius", "omega0", "v0xy", "tau", "length", "with_gravity", "z0",
        ],
        "regime_switch" => &["v0", "accel", "switch_time"],
        _ => &[],
    }
}

fn given(a: &ScenarioArgs) -> Vec<&'static str> {
    let opts = [
        ("x0", a.x0.is_some()),
        ("v0", a.v0.is_some()),
        ("accel", a.accel.is_some()),
        ("amplitude", a.amplitude.is_some()),
        ("gamma", a.gamma.is_some()),
        ("omega", a.omega.is_some()),
        ("phi", a.phi.is_some()),
        ("theta0", a.theta0.is_some()),
        ("lambda", a.lambda.is_some()),
        ("radius", a.radius.is_some()),
        ("omega0", a.omega0.is_some()),
        ("v0xy", a.v0xy.is_some()),
        ("tau", a.tau.is_some()),
        ("length", a.length.is_some()),
        ("with_gravity", a.with_gravity),
        ("z0", a.z0.is_some()),
        ("switch_time", a.switch_time.is_some()),
    ];
    opts.into_iter().filter(|o| o.1).map(|o| o.0).collect()
}

/// Resolves `--scenario` and the parameter flags into a validated spec.
pub fn build(a: &ScenarioArgs) -> Result<ScenarioSpec> {
    let name = a.scenario.as_str();
    let flags = given(a);
    let spec = if allowed(name).is_empty() {
        let path = Path::new(name);
        if !path.is_file() {
            bail!("unknown scenario {name:?} (expected free_fall, damped_pendulum, curve_ball, regime_switch or a TOML file)");
        }
        if let Some(f) = flags.first() {
            bail!("--{} cannot be combined with a scenario file", f.replace('_', "-"));
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut spec = ScenarioSpec::from_toml(&text)?;
        if let Some(rate) = a.rate {
            spec.sample_rate = rate;
        }
        if let Some(d) = a.duration {
            spec.t_end = spec.t_start + d;
        }
        if let Some(m) = a.mass {
            spec.mass = m;
        }
        spec
    } else {
        if let Some(f) = flags.iter().find(|f| !allowed(name).contains(f)) {
            bail!("--{} does not apply to scenario {name}", f.replace('_', "-"));
        }
        let rate = a.rate.unwrap_or(DEFAULT_RATE);
        let duration = a.duration.unwrap_or(DEFAULT_DURATION);
        let kind = match name {
            "free_fall" => ScenarioSpec::free_fall(
                a.x0.unwrap_or(10.0),
                a.v0.unwrap_or(0.0),
                a.accel.unwrap_or(-STANDARD_GRAVITY),
            ),
            "damped_pendulum" => ScenarioSpec::damped_pendulum(
                a.amplitude.unwrap_or(1.0),
                a.gamma.unwrap_or(0.1),
                a.omega.unwrap_or(2.0 * PI),
                a.phi.unwrap_or(PI / 6.0),
            ),
            "curve_ball" => ScenarioKind::CurveBall(CurveBall {
                theta0: a.theta0.unwrap_or(0.3),
                lambda: a.lambda.unwrap_or(1.2),
                radius: a.radius.unwrap_or(0.11),
                omega0: a.omega0.unwrap_or(50.0),
                v0xy: a.v0xy.unwrap_or(25.0),
                tau: a.tau.unwrap_or(1.0),
                length: a.length.unwrap_or(20.0),
                with_gravity: a.with_gravity,
                z0: a.z0.unwrap_or(0.0),
                g: STANDARD_GRAVITY,
            }),
            "regime_switch" => {
                let switch = a.switch_time.unwrap_or(duration / 2.0);
                if !(switch > 0.0 && switch < duration) {
                    bail!("--switch-time must lie strictly inside (0, duration)");
                }
                ScenarioSpec::regime_switch(a.v0.unwrap_or(1.0), a.accel.unwrap_or(-STANDARD_GRAVITY), switch, duration, rate)
                    .kind
            }
            _ => unreachable!("checked above"),
        };
        let mut spec = ScenarioSpec::new(kind, 0.0, duration, rate);
        if let Some(m) = a.mass {
            spec.mass = m;
        }
        spec
    };
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Wrap {
        #[command(flatten)]
        s: ScenarioArgs,
    }

    fn parse(args: &[&str]) -> Result<ScenarioSpec> {
        let w = Wrap::try_parse_from(std::iter::once("x").chain(args.iter().copied()))?;
        build(&w.s)
    }

    #[test]
    fn builtin_defaults() {
        let s = parse(&["--scenario", "free_fall", "--x0", "10", "--accel", "-9.8", "--duration", "20"]).unwrap();
        assert_eq!(s.kind, ScenarioSpec::free_fall(10.0, 0.0, -9.8));
        assert_eq!(s.sample_times().len(), 2000);
        let s = parse(&["--scenario", "damped_pendulum"]).unwrap();
        assert_eq!(s.kind, ScenarioSpec::damped_pendulum(1.0, 0.1, 2.0 * PI, PI / 6.0));
        let s = parse(&["--scenario", "curve_ball"]).unwrap();
        let ScenarioKind::CurveBall(cb) = &s.kind else { panic!() };
        assert!((cb.theta_rate() - 0.264).abs() < 1e-12);
    }

    #[test]
    fn rejects_foreign_flags_and_bad_values() {
        assert!(parse(&["--scenario", "free_fall", "--omega", "1"]).is_err());
        assert!(parse(&["--scenario", "nope"]).is_err());
        assert!(parse(&["--scenario", "damped_pendulum", "--gamma", "-1"]).is_err());
        assert!(parse(&["--scenario", "regime_switch", "--switch-time", "20"]).is_err());
    }

    #[test]
    fn scenario_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.toml");
        let spec = ScenarioSpec::regime_switch(1.0, -9.8, 5.0, 10.0, 100.0);
        std::fs::write(&path, spec.to_toml()).unwrap();
        let p = path.to_str().unwrap();
        assert_eq!(parse(&["--scenario", p]).unwrap(), spec);
        assert!(parse(&["--scenario", p, "--x0", "1"]).is_err());
    }
}
