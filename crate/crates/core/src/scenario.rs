//! Closed-form trajectory generators.
//!
//! Every generator evaluates its analytic solution directly at the sample
//! times, so the outputs double as exact oracles for the fitting code. The
//! one exception is the Cartesian reconstruction of the curve ball, which
//! integrates the arc-length rate along the heading with composite Simpson
//! quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::Trajectory;

/// Standard gravity, m/s².
pub const STANDARD_GRAVITY: f64 = 9.80665;

fn default_mass() -> f64 {
    1.0
}

fn default_g() -> f64 {
    STANDARD_GRAVITY
}

/// Generator configuration: the scenario kind with its parameters plus the
/// sampling grid. Serializes to a flat key-value TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(flatten)]
    pub kind: ScenarioKind,
    #[serde(default)]
    pub t_start: f64,
    pub t_end: f64,
    pub sample_rate: f64,
    /// Object mass in kg; only used for force reporting.
    #[serde(default = "default_mass")]
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioKind {
    /// `x(t) = x0 + v0·t + accel·t²/2`.
    FreeFall {
        x0: f64,
        #[serde(default)]
        v0: f64,
        accel: f64,
    },
    /// `x(t) = a·exp(−γt)·cos(ωt − φ)`.
    DampedPendulum {
        a: f64,
        gamma: f64,
        omega: f64,
        #[serde(default)]
        phi: f64,
    },
    CurveBall(CurveBall),
    /// Position-continuous concatenation of segments.
    Piecewise { segments: Vec<Segment> },
}

/// Spinning-ball spiral in the horizontal plane.
///
/// Heading `θ(t) = θ0 + (λ·S_spin/τ)·t`, arc length `s(t) = L·ln(t/τ + 1)`
/// with spin parameter `S_spin = R·ω0/v0xy`. Gravity, when enabled, acts on
/// a separate vertical channel `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBall {
    pub theta0: f64,
    pub lambda: f64,
    /// Ball radius R, m.
    pub radius: f64,
    /// Initial spin rate ω0, rad/s.
    pub omega0: f64,
    /// Initial horizontal speed, m/s.
    pub v0xy: f64,
    pub tau: f64,
    /// Characteristic penetration length L, m.
    pub length: f64,
    #[serde(default)]
    pub with_gravity: bool,
    #[serde(default)]
    pub z0: f64,
    #[serde(default = "default_g")]
    pub g: f64,
}

impl CurveBall {
    pub fn spin_parameter(&self) -> f64 {
        self.radius * self.omega0 / self.v0xy
    }

    /// Heading rate `λ·S_spin/τ`, rad/s.
    pub fn theta_rate(&self) -> f64 {
        self.lambda * self.spin_parameter() / self.tau
    }

    pub fn arc_length(&self, t: f64) -> f64 {
        self.length * (t / self.tau).ln_1p()
    }

    pub fn arc_rate(&self, t: f64) -> f64 {
        self.length / (t + self.tau)
    }

    pub fn heading(&self, t: f64) -> f64 {
        self.theta0 + self.theta_rate() * t
    }
}

/// `λ = 4·C_n/C_D` from the lift and drag coefficients.
pub fn lambda_from_coefficients(c_n: f64, c_d: f64) -> f64 {
    4.0 * c_n / c_d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub spec: ScenarioSpec,
    pub duration: f64,
}

/// Output of [`gen_piecewise`].
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseTrajectory {
    pub trajectory: Trajectory,
    /// Start time of every segment after the first.
    pub switch_times: Vec<f64>,
}

/// Gaussian measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must be finite and > 0, got {v}")))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must be finite, got {v}")))
    }
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, t_start: f64, t_end: f64, sample_rate: f64) -> Self {
        Self {
            kind,
            t_start,
            t_end,
            sample_rate,
            mass: default_mass(),
        }
    }

    pub fn free_fall(x0: f64, v0: f64, accel: f64) -> ScenarioKind {
        ScenarioKind::FreeFall { x0, v0, accel }
    }

    pub fn damped_pendulum(a: f64, gamma: f64, omega: f64, phi: f64) -> ScenarioKind {
        ScenarioKind::DampedPendulum { a, gamma, omega, phi }
    }

    /// The reference drop: a 10 mg object released from rest at 10 m,
    /// sampled at 100 Hz for 20 s (the first 10 s are the fitting window).
    pub fn reference_drop() -> Self {
        Self {
            mass: 1e-5,
            ..Self::new(Self::free_fall(10.0, 0.0, -STANDARD_GRAVITY), 0.0, 20.0, 100.0)
        }
    }

    /// Uniform motion at `velocity` from `x = 0`, switching at `switch_time`
    /// to constant acceleration `accel` with continuous position and velocity.
    pub fn regime_switch(velocity: f64, accel: f64, switch_time: f64, t_end: f64, sample_rate: f64) -> Self {
        let seg = |kind, duration| Segment {
            spec: Self::new(kind, 0.0, duration, sample_rate),
            duration,
        };
        let segments = vec![
            seg(Self::free_fall(0.0, velocity, 0.0), switch_time),
            seg(Self::free_fall(0.0, velocity, accel), t_end - switch_time),
        ];
        Self::new(ScenarioKind::Piecewise { segments }, 0.0, t_end, sample_rate)
    }

    pub fn with_mass(mut self, mass: f64) -> Self {
        self.mass = mass;
        self
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ScenarioKind::FreeFall { .. } => "free_fall",
            ScenarioKind::DampedPendulum { .. } => "damped_pendulum",
            ScenarioKind::CurveBall(_) => "curve_ball",
            ScenarioKind::Piecewise { .. } => "piecewise",
        }
    }

    pub fn channel_names(&self) -> Vec<String> {
        let names: &[&str] = match &self.kind {
            ScenarioKind::FreeFall { .. } | ScenarioKind::DampedPendulum { .. } => &["x"],
            ScenarioKind::CurveBall(cb) if cb.with_gravity => &["s", "theta", "x", "y", "z"],
            ScenarioKind::CurveBall(_) => &["s", "theta", "x", "y"],
            ScenarioKind::Piecewise { segments } => {
                return segments.first().map(|s| s.spec.channel_names()).unwrap_or_default()
            }
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Checks the sampling grid and the per-kind parameter bounds.
    pub fn validate(&self) -> Result<()> {
        finite("t_start", self.t_start)?;
        finite("t_end", self.t_end)?;
        if self.t_end <= self.t_start {
            return Err(Error::Argument(format!(
                "t_end ({}) must exceed t_start ({})",
                self.t_end, self.t_start
            )));
        }
        positive("sample_rate", self.sample_rate)?;
        positive("mass", self.mass)?;
        self.validate_kind()
    }

    fn validate_kind(&self) -> Result<()> {
        match &self.kind {
            ScenarioKind::FreeFall { x0, v0, accel } => {
                finite("x0", *x0)?;
                finite("v0", *v0)?;
                finite("accel", *accel)
            }
            ScenarioKind::DampedPendulum { a, gamma, omega, phi } => {
                finite("a", *a)?;
                finite("phi", *phi)?;
                positive("omega", *omega)?;
                if !(gamma.is_finite() && *gamma >= 0.0) {
                    return Err(Error::Argument(format!("gamma must be >= 0, got {gamma}")));
                }
                Ok(())
            }
            ScenarioKind::CurveBall(cb) => {
                for (n, v) in [("theta0", cb.theta0), ("lambda", cb.lambda), ("z0", cb.z0), ("radius", cb.radius), ("omega0", cb.omega0)] {
                    finite(n, v)?;
                }
                positive("tau", cb.tau)?;
                positive("length", cb.length)?;
                positive("v0xy", cb.v0xy)?;
                positive("g", cb.g)?;
                if self.t_start < 0.0 {
                    return Err(Error::Argument("curve ball time starts at the kick (t_start >= 0)".into()));
                }
                Ok(())
            }
            ScenarioKind::Piecewise { segments } => {
                if segments.len() < 2 {
                    return Err(Error::Argument("piecewise scenario needs at least 2 segments".into()));
                }
                let names = segments[0].spec.channel_names();
                for seg in segments {
                    positive("segment duration", seg.duration)?;
                    if matches!(seg.spec.kind, ScenarioKind::Piecewise { .. }) {
                        return Err(Error::Argument("nested piecewise segments are not supported".into()));
                    }
                    seg.spec.validate_kind()?;
                    if seg.spec.channel_names() != names {
                        return Err(Error::Argument(format!(
                            "segment channels {:?} do not match {:?}",
                            seg.spec.channel_names(),
                            names
                        )));
                    }
                }
                let total: f64 = segments.iter().map(|s| s.duration).sum();
                if (self.t_start + total - self.t_end).abs() > 1e-9 * total.max(1.0) {
                    return Err(Error::Argument(format!(
                        "t_end must equal t_start + total segment duration ({})",
                        self.t_start + total
                    )));
                }
                Ok(())
            }
        }
    }

    /// Sample times `t_start + k/rate` for every `k` with the time strictly below `t_end`.
    pub fn sample_times(&self) -> Vec<f64> {
        sample_grid(self.t_start, self.t_end, self.sample_rate)
    }

    /// Generates the sampled trajectory.
    pub fn generate(&self) -> Result<Trajectory> {
        self.validate()?;
        match &self.kind {
            ScenarioKind::Piecewise { segments } => {
                Ok(piecewise(segments, self.t_start, self.sample_rate)?.trajectory)
            }
            _ => self.evaluate_at(&self.sample_times()),
        }
    }

    /// Evaluates the closed form at arbitrary increasing times.
    pub fn evaluate_at(&self, times: &[f64]) -> Result<Trajectory> {
        self.validate_kind()?;
        if times.is_empty() {
            return Err(Error::Argument("no evaluation times".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("evaluation times must be strictly increasing".into()));
        }
        let names = self.channel_names();
        let columns = match &self.kind {
            &ScenarioKind::FreeFall { x0, v0, accel } => {
                vec![times.iter().map(|&t| x0 + v0 * t + accel * t * t / 2.0).collect()]
            }
            &ScenarioKind::DampedPendulum { a, gamma, omega, phi } => vec![times
                .iter()
                .map(|&t| a * (-gamma * t).exp() * (omega * t - phi).cos())
                .collect()],
            ScenarioKind::CurveBall(cb) => curve_ball_columns(cb, times, self.sample_rate)?,
            ScenarioKind::Piecewise { segments } => {
                return piecewise_at(segments, self.t_start, times, self.sample_rate).map(|p| p.trajectory)
            }
        };
        Trajectory::from_columns(names, times.to_vec(), columns)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario specs serialize to toml")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Ok(spec)
    }
}

pub(crate) fn sample_grid(t_start: f64, t_end: f64, rate: f64) -> Vec<f64> {
    let n = ((t_end - t_start) * rate * (1.0 - 1e-12)).ceil().max(0.0) as usize;
    (0..n).map(|k| t_start + k as f64 / rate).collect()
}

/// Cumulative Simpson integral of `f` over consecutive `times`, starting
/// from `origin` at `t = 0` (integrated at `step` up to `times[0]`).
pub(crate) fn cumulative_simpson(f: impl Fn(f64) -> f64, times: &[f64], step: f64) -> Vec<f64> {
    let panel = |a: f64, b: f64| (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
    let mut acc = 0.0;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for (i, &t) in times.iter().enumerate() {
        if i == 0 {
            // Walk from the kick to the first requested time at the native step.
            while prev + step < t {
                acc += panel(prev, prev + step);
                prev += step;
            }
        }
        if t > prev {
            acc += panel(prev, t);
        }
        prev = t;
        out.push(acc);
    }
    out
}

fn curve_ball_columns(cb: &CurveBall, times: &[f64], sample_rate: f64) -> Result<Vec<Vec<f64>>> {
    if times[0] < 0.0 {
        return Err(Error::Argument("curve ball times must be >= 0".into()));
    }
    let step = 1.0 / sample_rate;
    let s = times.iter().map(|&t| cb.arc_length(t)).collect();
    let theta = times.iter().map(|&t| cb.heading(t)).collect();
    let x = cumulative_simpson(|u| cb.arc_rate(u) * cb.heading(u).cos(), times, step);
    let y = cumulative_simpson(|u| cb.arc_rate(u) * cb.heading(u).sin(), times, step);
    let mut cols = vec![s, theta, x, y];
    if cb.with_gravity {
        cols.push(times.iter().map(|&t| cb.z0 - cb.g * t * t / 2.0).collect());
    }
    Ok(cols)
}

pub fn gen_free_fall(spec: &ScenarioSpec) -> Result<Trajectory> {
    expect_kind(spec, "free_fall")?;
    spec.generate()
}

pub fn gen_damped_pendulum(spec: &ScenarioSpec) -> Result<Trajectory> {
    expect_kind(spec, "damped_pendulum")?;
    spec.generate()
}

pub fn gen_curve_ball(spec: &ScenarioSpec) -> Result<Trajectory> {
    expect_kind(spec, "curve_ball")?;
    spec.generate()
}

fn expect_kind(spec: &ScenarioSpec, kind: &str) -> Result<()> {
    if spec.kind_name() == kind {
        Ok(())
    } else {
        Err(Error::Argument(format!("expected a {kind} scenario, got {}", spec.kind_name())))
    }
}

/// Concatenates segments starting at `t_start`, each shifted so that every
/// channel is continuous at the switch. Samples at exactly a switch time
/// belong to the later segment.
pub fn gen_piecewise(segments: &[Segment], t_start: f64, sample_rate: f64) -> Result<PiecewiseTrajectory> {
    let total: f64 = segments.iter().map(|s| s.duration).sum();
    let spec = ScenarioSpec::new(
        ScenarioKind::Piecewise {
            segments: segments.to_vec(),
        },
        t_start,
        t_start + total,
        sample_rate,
    );
    spec.validate()?;
    piecewise(segments, t_start, sample_rate)
}

fn piecewise(segments: &[Segment], t_start: f64, sample_rate: f64) -> Result<PiecewiseTrajectory> {
    let total: f64 = segments.iter().map(|s| s.duration).sum();
    piecewise_at(segments, t_start, &sample_grid(t_start, t_start + total, sample_rate), sample_rate)
}

fn piecewise_at(segments: &[Segment], t_start: f64, times: &[f64], sample_rate: f64) -> Result<PiecewiseTrajectory> {
    let names = segments[0].spec.channel_names();
    let mut columns = vec![Vec::with_capacity(times.len()); names.len()];
    let mut switch_times = Vec::new();
    let mut offset = vec![0.0; names.len()];
    let mut seg_start = t_start;
    let mut cursor = 0;
    for (k, seg) in segments.iter().enumerate() {
        let last = k + 1 == segments.len();
        let seg_end = seg_start + seg.duration;
        if k > 0 {
            switch_times.push(seg_start);
        }
        let local0 = seg.spec.t_start;
        let mut local: Vec<f64> = vec![local0];
        let first = cursor;
        while cursor < times.len() && (last || times[cursor] < seg_end) {
            let u = local0 + (times[cursor] - seg_start);
            if u > *local.last().unwrap() {
                local.push(u);
            }
            cursor += 1;
        }
        let end_u = local0 + seg.duration;
        if end_u > *local.last().unwrap() {
            local.push(end_u);
        }
        let eval = seg.spec.evaluate_at_with_rate(&local, sample_rate)?;
        let base = eval.row(0);
        if k > 0 {
            for c in 0..names.len() {
                offset[c] -= base[c];
            }
        }
        // Index of each sample within `local`.
        let mut li = 0;
        for i in first..cursor {
            let u = local0 + (times[i] - seg_start);
            while local[li] < u {
                li += 1;
            }
            for c in 0..names.len() {
                columns[c].push(eval.column(c)[li] + offset[c]);
            }
        }
        let end = eval.row(eval.len() - 1);
        for c in 0..names.len() {
            offset[c] += end[c];
        }
        seg_start = seg_end;
    }
    Ok(PiecewiseTrajectory {
        trajectory: Trajectory::from_columns(names, times.to_vec(), columns)?,
        switch_times,
    })
}

impl ScenarioSpec {
    fn evaluate_at_with_rate(&self, times: &[f64], rate: f64) -> Result<Trajectory> {
        let mut s = self.clone();
        s.sample_rate = rate;
        s.evaluate_at(times)
    }
}

/// Adds i.i.d. zero-mean Gaussian noise to every channel value.
pub fn add_noise(traj: &Trajectory, noise: &NoiseSpec) -> Result<Trajectory> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    if !(noise.sigma.is_finite() && noise.sigma >= 0.0) {
        return Err(Error::Argument(format!("noise sigma must be >= 0, got {}", noise.sigma)));
    }
    if noise.sigma == 0.0 {
        return Ok(traj.clone());
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = Normal::new(0.0, noise.sigma).expect("valid sigma");
    // Draws run sample-major so the stream does not depend on channel layout
    // beyond the channel count.
    let n = traj.len();
    let width = traj.channel_names().len();
    let draws: Vec<f64> = (0..n * width).map(|_| normal.sample(&mut rng)).collect();
    traj.map_columns(|c, col| col.iter().enumerate().map(|(i, v)| v + draws[i * width + c]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn spec(kind: ScenarioKind, t_end: f64, rate: f64) -> ScenarioSpec {
        ScenarioSpec::new(kind, 0.0, t_end, rate)
    }

    fn curve_ball(with_gravity: bool) -> CurveBall {
        CurveBall {
            theta0: 0.3,
            lambda: 1.2,
            radius: 0.11,
            omega0: 50.0,
            v0xy: 25.0,
            tau: 1.0,
            length: 20.0,
            with_gravity,
            z0: 1.0,
            g: STANDARD_GRAVITY,
        }
    }

    #[test]
    fn free_fall_examples() {
        let t = gen_free_fall(&spec(ScenarioSpec::free_fall(10.0, 0.0, -9.8), 2.0, 10.0)).unwrap();
        assert_eq!(t.column(0)[0], 10.0);
        let t = gen_free_fall(&spec(ScenarioSpec::free_fall(0.0, 0.0, 9.8), 2.0, 10.0)).unwrap();
        assert_eq!(t.times()[10], 1.0);
        assert!((t.column(0)[10] - 4.9).abs() < 1e-15);
    }

    #[test]
    fn reference_drop_config() {
        let s = ScenarioSpec::reference_drop();
        assert_eq!(s.mass, 1e-5);
        assert_eq!(s.generate().unwrap().len(), 2000);
        assert_eq!(s.generate().unwrap().column(0)[0], 10.0);
    }

    #[test]
    fn pendulum_examples() {
        let t = gen_damped_pendulum(&spec(ScenarioSpec::damped_pendulum(1.0, 0.1, 2.0 * PI, 0.0), 2.0, 4.0)).unwrap();
        assert_eq!(t.column(0)[0], 1.0);
        assert!((t.column(0)[4] - 0.904837).abs() < 1e-6);
        let t = gen_damped_pendulum(&spec(ScenarioSpec::damped_pendulum(2.0, 0.0, PI, 0.0), 2.0, 4.0)).unwrap();
        assert!((t.column(0)[4] + 2.0).abs() < 1e-15);
    }

    #[test]
    fn curve_ball_examples() {
        let cb = curve_ball(false);
        assert!((cb.spin_parameter() - 0.22).abs() < 1e-15);
        let t = gen_curve_ball(&spec(ScenarioKind::CurveBall(cb.clone()), 3.0, 10.0)).unwrap();
        assert_eq!(t.channel_names(), &["s", "theta", "x", "y"]);
        assert_eq!(t.channel("s").unwrap()[0], 0.0);
        assert_eq!(t.channel("theta").unwrap()[0], 0.3);
        assert!((t.channel("s").unwrap()[10] - 20.0 * 2f64.ln()).abs() < 1e-12);
        assert!((t.channel("s").unwrap()[10] - 13.8629).abs() < 1e-4);

        let g = gen_curve_ball(&spec(ScenarioKind::CurveBall(curve_ball(true)), 3.0, 10.0)).unwrap();
        let z = g.channel("z").unwrap();
        assert_eq!(z[0], 1.0);
        assert!((z[10] - (1.0 - STANDARD_GRAVITY / 2.0)).abs() < 1e-15);
        assert!((lambda_from_coefficients(0.3, 1.0) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn curve_ball_arc_length_consistency() {
        let t = gen_curve_ball(&spec(ScenarioKind::CurveBall(curve_ball(false)), 3.0, 1000.0)).unwrap();
        let x = t.channel("x").unwrap();
        let y = t.channel("y").unwrap();
        let chord: f64 = x.windows(2).zip(y.windows(2)).map(|(a, b)| (a[1] - a[0]).hypot(b[1] - b[0])).sum();
        let t_last = *t.times().last().unwrap();
        let s_last = curve_ball(false).arc_length(t_last);
        assert!(((chord - s_last) / s_last).abs() < 1e-4, "chord {chord} vs arc {s_last}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(spec(ScenarioSpec::free_fall(0.0, 0.0, 1.0), 0.0, 10.0).generate().is_err());
        assert!(spec(ScenarioSpec::free_fall(0.0, 0.0, 1.0), 1.0, 0.0).generate().is_err());
        assert!(spec(ScenarioSpec::damped_pendulum(1.0, -0.1, 1.0, 0.0), 1.0, 10.0).generate().is_err());
        assert!(spec(ScenarioSpec::damped_pendulum(1.0, 0.1, 0.0, 0.0), 1.0, 10.0).generate().is_err());
        let mut cb = curve_ball(false);
        cb.tau = 0.0;
        assert!(spec(ScenarioKind::CurveBall(cb), 1.0, 10.0).generate().is_err());
        assert!(gen_free_fall(&spec(ScenarioSpec::damped_pendulum(1.0, 0.1, 1.0, 0.0), 1.0, 10.0)).is_err());
    }

    #[test]
    fn sampling_is_half_open() {
        assert_eq!(sample_grid(0.0, 20.0, 100.0).len(), 2000);
        assert_eq!(sample_grid(0.0, 0.5, 1.0).len(), 1);
        assert_eq!(sample_grid(0.0, 3.0, 1000.0).len(), 3000);
    }

    fn uniform_then_free_fall() -> Vec<Segment> {
        vec![
            Segment {
                spec: spec(ScenarioSpec::free_fall(0.0, 1.0, 0.0), 5.0, 100.0),
                duration: 5.0,
            },
            Segment {
                spec: spec(ScenarioSpec::free_fall(0.0, 0.0, -9.8), 5.0, 100.0),
                duration: 5.0,
            },
        ]
    }

    #[test]
    fn piecewise_is_position_continuous() {
        let p = gen_piecewise(&uniform_then_free_fall(), 0.0, 100.0).unwrap();
        assert_eq!(p.switch_times, vec![5.0]);
        let t = &p.trajectory;
        let i = t.times().iter().position(|&x| x == 5.0).unwrap();
        assert_eq!(t.column(0)[i], 5.0);
        assert!((t.column(0)[i - 1] - 4.99).abs() < 1e-12);
        // Second segment: 5 − 4.9·(t−5)².
        assert!((t.column(0)[i + 10] - (5.0 - 4.9 * 0.01)).abs() < 1e-12);
    }

    #[test]
    fn piecewise_velocity_jumps_at_switch() {
        // Free fall from rest for 5 s, then at rest. Left derivative at the
        // joint is accel·5 = −49, right derivative is 0.
        let segs = vec![
            Segment {
                spec: spec(ScenarioSpec::free_fall(10.0, 0.0, -9.8), 5.0, 1000.0),
                duration: 5.0,
            },
            Segment {
                spec: spec(ScenarioSpec::free_fall(0.0, 0.0, 0.0), 5.0, 1000.0),
                duration: 5.0,
            },
        ];
        let p = gen_piecewise(&segs, 0.0, 1000.0).unwrap();
        let t = &p.trajectory;
        let x = t.column(0);
        let i = t.times().iter().position(|&s| s == p.switch_times[0]).unwrap();
        let h = 1e-3;
        let left = (x[i] - x[i - 1]) / h;
        let right = (x[i + 1] - x[i]) / h;
        assert!((left + 49.0).abs() < 0.01, "left {left}");
        assert_eq!(right, 0.0);
        assert!((x[i] - (10.0 - 4.9 * 25.0)).abs() < 1e-12);
    }

    #[test]
    fn piecewise_single_segment_matches_plain_generator() {
        let s = spec(ScenarioSpec::free_fall(10.0, 2.0, -9.8), 4.0, 50.0);
        let plain = s.generate().unwrap();
        let seg = Segment { spec: s.clone(), duration: 4.0 };
        let wrapped = piecewise(&[seg], 0.0, 50.0).unwrap();
        assert_eq!(wrapped.trajectory, plain);
        assert!(wrapped.switch_times.is_empty());
    }

    #[test]
    fn piecewise_rejects_channel_mismatch() {
        let segs = vec![
            Segment {
                spec: spec(ScenarioSpec::free_fall(0.0, 1.0, 0.0), 1.0, 10.0),
                duration: 1.0,
            },
            Segment {
                spec: spec(ScenarioKind::CurveBall(curve_ball(false)), 1.0, 10.0),
                duration: 1.0,
            },
        ];
        assert!(matches!(gen_piecewise(&segs, 0.0, 10.0), Err(Error::Argument(_))));
        assert!(gen_piecewise(&segs[..1], 0.0, 10.0).is_err());
    }

    #[test]
    fn noise_contract() {
        let clean = spec(ScenarioSpec::damped_pendulum(1.0, 0.1, 2.0 * PI, 0.0), 100.0, 100.0).generate().unwrap();
        assert_eq!(clean.len(), 10_000);
        let same = add_noise(&clean, &NoiseSpec { sigma: 0.0, seed: 1 }).unwrap();
        assert_eq!(same, clean);

        let noise = NoiseSpec { sigma: 0.01, seed: 42 };
        let a = add_noise(&clean, &noise).unwrap();
        let b = add_noise(&clean, &noise).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.times(), clean.times());
        assert_eq!(a.channel_names(), clean.channel_names());

        let d: Vec<f64> = a.column(0).iter().zip(clean.column(0)).map(|(x, y)| x - y).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
        assert!((0.008..=0.012).contains(&sd), "sd {sd}");
        assert!(add_noise(&clean, &NoiseSpec { sigma: -1.0, seed: 0 }).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let specs = vec![
            ScenarioSpec::reference_drop(),
            spec(ScenarioSpec::damped_pendulum(1.0, 0.1, 2.0 * PI, PI / 6.0), 20.0, 100.0),
            spec(ScenarioKind::CurveBall(curve_ball(true)), 3.0, 1000.0),
            spec(ScenarioKind::Piecewise { segments: uniform_then_free_fall() }, 10.0, 100.0),
        ];
        for s in specs {
            let text = s.to_toml();
            assert_eq!(ScenarioSpec::from_toml(&text).unwrap(), s, "{text}");
        }
        let flat = ScenarioSpec::from_toml("kind = \"free_fall\"\nx0 = 10\naccel = -9.8\nt_end = 20\nsample_rate = 100\n").unwrap();
        assert_eq!(flat.kind, ScenarioSpec::free_fall(10.0, 0.0, -9.8));
        assert_eq!(flat.mass, 1.0);
    }
}
