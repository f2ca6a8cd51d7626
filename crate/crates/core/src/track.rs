//! Streaming checker: collect a window, lock a fitted model, compare each
//! new sample against the model's prediction, and refit after `K`
//! consecutive mismatches.

use std::collections::VecDeque;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::basis::{enumerate_candidates, expanded_width, Library, LibraryMode};
use crate::error::{Error, Result};
use crate::fit::{fit_trajectory, FitConfig, FitResult};
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Samples per fitting window.
    pub window: usize,
    /// Mismatch threshold relative to the locked fit's data scale.
    pub check_eps: f64,
    /// Consecutive mismatches that trigger a refit.
    pub consecutive_k: usize,
    pub fit_config: FitConfig,
    pub library: LibraryMode,
    /// Object mass in kg, carried for force reporting.
    pub mass: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            window: 100,
            check_eps: 1e-4,
            consecutive_k: 3,
            fit_config: FitConfig::default(),
            library: LibraryMode::Full,
            mass: 1.0,
        }
    }
}

impl TrackerConfig {
    /// Smallest window the fit accepts for this library and term budget.
    pub fn min_window(&self) -> usize {
        let library = Library::new(self.library);
        let max_terms = self.fit_config.max_terms.clamp(1, library.len());
        let widest = enumerate_candidates(&library, max_terms)
            .map(|it| it.map(|s| expanded_width(&library.subset(&s))).max().unwrap_or(1))
            .unwrap_or(1);
        (2 * widest).max(4)
    }

    pub fn validate(&self) -> Result<()> {
        self.fit_config.validate()?;
        if self.window < self.min_window() {
            return Err(Error::Argument(format!(
                "window {} is below the minimum of {} samples",
                self.window,
                self.min_window()
            )));
        }
        if self.consecutive_k == 0 {
            return Err(Error::Argument("consecutive_k must be >= 1".into()));
        }
        if !(self.check_eps.is_finite() && self.check_eps > 0.0) {
            return Err(Error::Argument(format!("check_eps must be > 0, got {}", self.check_eps)));
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::Argument(format!("mass must be > 0, got {}", self.mass)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Collecting,
    Locked,
    /// Collecting again after a mismatch discarded the locked model.
    Refitting,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    LockAcquired,
    Checked,
    MismatchDetected,
    RefitTriggered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackEvent {
    pub kind: EventKind,
    pub t: f64,
    /// `Checked`/`MismatchDetected`: largest |prediction − observation| over
    /// channels. `LockAcquired`: largest fit rmse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

type Sample = (f64, Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub phase: Phase,
    channel_names: Vec<String>,
    buffer: VecDeque<Sample>,
    locked_model: Option<FitResult>,
    mismatch_count: usize,
    mismatch_run: Vec<Sample>,
    event_log: Vec<TrackEvent>,
    last_t: Option<f64>,
    fits_run: usize,
}

impl TrackerState {
    pub fn new(channel_names: Vec<String>) -> Self {
        Self {
            phase: Phase::Collecting,
            channel_names,
            buffer: VecDeque::new(),
            locked_model: None,
            mismatch_count: 0,
            mismatch_run: Vec::new(),
            event_log: Vec::new(),
            last_t: None,
            fits_run: 0,
        }
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn locked_model(&self) -> Option<&FitResult> {
        self.locked_model.as_ref()
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn mismatch_count(&self) -> usize {
        self.mismatch_count
    }

    pub fn event_log(&self) -> &[TrackEvent] {
        &self.event_log
    }

    /// Number of model selections run so far.
    pub fn fits_run(&self) -> usize {
        self.fits_run
    }

    /// Feeds one sample. On error the state is left unchanged.
    pub fn observe(&mut self, t: f64, values: &[f64], config: &TrackerConfig) -> Result<Vec<TrackEvent>> {
        if let Some(last) = self.last_t {
            if !(t > last) {
                return Err(Error::Ordering { t, last });
            }
        }
        if !t.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("non-finite sample at t = {t}")));
        }
        if values.len() != self.channel_names.len() {
            return Err(Error::Argument(format!(
                "sample has {} values for {} channels",
                values.len(),
                self.channel_names.len()
            )));
        }
        let mut next = self.clone();
        let events = next.step(t, values, config)?;
        next.last_t = Some(t);
        next.event_log.extend(events.iter().cloned());
        *self = next;
        Ok(events)
    }

    fn step(&mut self, t: f64, values: &[f64], config: &TrackerConfig) -> Result<Vec<TrackEvent>> {
        match self.phase {
            Phase::Collecting | Phase::Refitting => {
                self.buffer.push_back((t, values.to_vec()));
                self.try_lock(config)
            }
            Phase::Locked => self.check(t, values, config),
        }
    }

    fn try_lock(&mut self, config: &TrackerConfig) -> Result<Vec<TrackEvent>> {
        while self.buffer.len() > config.window {
            self.buffer.pop_front();
        }
        if self.buffer.len() < config.window {
            return Ok(Vec::new());
        }
        let samples: Vec<Sample> = self.buffer.iter().cloned().collect();
        let window = Trajectory::from_samples(self.channel_names.clone(), &samples)?;
        let fit = fit_trajectory(&window, &Library::new(config.library), &config.fit_config)?;
        self.fits_run += 1;
        let t = samples[samples.len() - 1].0;
        if !fit.accepted() {
            // Slide: drop the oldest sample and wait for the next one.
            self.buffer.pop_front();
            return Ok(Vec::new());
        }
        let rmse = fit.channels.iter().map(|c| c.model.rmse).fold(0.0, f64::max);
        self.locked_model = Some(fit);
        self.phase = Phase::Locked;
        self.buffer.clear();
        self.mismatch_count = 0;
        self.mismatch_run.clear();
        Ok(vec![TrackEvent {
            kind: EventKind::LockAcquired,
            t,
            residual: Some(rmse),
        }])
    }

    fn check(&mut self, t: f64, values: &[f64], config: &TrackerConfig) -> Result<Vec<TrackEvent>> {
        let model = self.locked_model.as_ref().expect("locked phase has a model");
        let predicted = model.predict(t)?;
        let mut worst: f64 = 0.0;
        let mut matched = true;
        for ((p, o), ch) in predicted.iter().zip(values).zip(&model.channels) {
            let err = (p - o).abs();
            worst = worst.max(err);
            if !(err <= config.check_eps * ch.data_scale) {
                matched = false;
            }
        }
        if matched {
            self.mismatch_count = 0;
            self.mismatch_run.clear();
            return Ok(vec![TrackEvent {
                kind: EventKind::Checked,
                t,
                residual: Some(worst),
            }]);
        }
        self.mismatch_count += 1;
        self.mismatch_run.push((t, values.to_vec()));
        if self.mismatch_count < config.consecutive_k {
            return Ok(Vec::new());
        }
        let mut events = vec![
            TrackEvent {
                kind: EventKind::MismatchDetected,
                t,
                residual: Some(worst),
            },
            TrackEvent {
                kind: EventKind::RefitTriggered,
                t,
                residual: None,
            },
        ];
        // Restart from the first sample of the mismatch run.
        self.locked_model = None;
        self.phase = Phase::Refitting;
        self.mismatch_count = 0;
        self.buffer = std::mem::take(&mut self.mismatch_run).into();
        events.extend(self.try_lock(config)?);
        Ok(events)
    }
}

/// Prediction of the locked model at `t`.
pub fn predict_at(state: &TrackerState, t: f64) -> Result<Vec<f64>> {
    match (&state.phase, &state.locked_model) {
        (Phase::Locked, Some(model)) => model.predict(t),
        _ => Err(Error::State(format!("tracker is not locked (phase {:?})", state.phase))),
    }
}

/// A tracker owning its configuration and state.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    state: TrackerState,
}

impl Tracker {
    pub fn new(channel_names: Vec<String>, config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        if channel_names.is_empty() {
            return Err(Error::Argument("tracker needs at least one channel".into()));
        }
        Ok(Self {
            config,
            state: TrackerState::new(channel_names),
        })
    }

    pub fn observe(&mut self, t: f64, values: &[f64]) -> Result<Vec<TrackEvent>> {
        self.state.observe(t, values, &self.config)
    }

    pub fn predict_at(&self, t: f64) -> Result<Vec<f64>> {
        predict_at(&self.state, t)
    }

    pub fn state(&self) -> &TrackerState {
        &self.state
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// Feeds every sample of `traj` in order.
    pub fn run(&mut self, traj: &Trajectory) -> Result<()> {
        if traj.channel_names() != self.state.channel_names() {
            return Err(Error::Argument("trajectory channels differ from the tracker's".into()));
        }
        for (t, values) in traj.samples() {
            self.observe(t, &values)?;
        }
        Ok(())
    }
}

/// Writes one JSON record per line.
pub fn write_event_log<W: Write>(events: &[TrackEvent], mut writer: W) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut writer, e)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_event_log<R: BufRead>(reader: R) -> Result<Vec<TrackEvent>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{gen_piecewise, ScenarioSpec, Segment};
    use std::f64::consts::PI;

    fn names() -> Vec<String> {
        vec!["x".into()]
    }

    fn count(events: &[TrackEvent], kind: EventKind) -> usize {
        events.iter().filter(|e| e.kind == kind).count()
    }

    #[test]
    fn stays_collecting_below_window() {
        let mut tr = Tracker::new(names(), TrackerConfig::default()).unwrap();
        for k in 0..99 {
            let t = k as f64 / 100.0;
            assert!(tr.observe(t, &[t]).unwrap().is_empty());
        }
        assert_eq!(tr.state().phase, Phase::Collecting);
        assert_eq!(tr.state().buffered(), 99);
        assert!(tr.state().event_log().is_empty());
        assert!(matches!(tr.predict_at(1.0), Err(Error::State(_))));
    }

    #[test]
    fn rejects_non_monotonic_time() {
        let mut tr = Tracker::new(names(), TrackerConfig::default()).unwrap();
        tr.observe(1.0, &[0.0]).unwrap();
        let before = tr.state().clone();
        assert!(matches!(tr.observe(1.0, &[0.0]), Err(Error::Ordering { .. })));
        assert!(matches!(tr.observe(0.5, &[0.0]), Err(Error::Ordering { .. })));
        assert_eq!(tr.state(), &before);
        assert!(tr.observe(2.0, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let small = TrackerConfig { window: 3, ..Default::default() };
        assert!(Tracker::new(names(), small).is_err());
        let k0 = TrackerConfig { consecutive_k: 0, ..Default::default() };
        assert!(Tracker::new(names(), k0).is_err());
        let eps = TrackerConfig { check_eps: 0.0, ..Default::default() };
        assert!(Tracker::new(names(), eps).is_err());
    }

    #[test]
    fn locked_predictions() {
        let spec = ScenarioSpec::new(ScenarioSpec::free_fall(10.0, 0.0, -9.8), 0.0, 2.0, 100.0);
        let mut tr = Tracker::new(names(), TrackerConfig::default()).unwrap();
        tr.run(&spec.generate().unwrap()).unwrap();
        assert_eq!(tr.state().phase, Phase::Locked);
        let x20 = tr.predict_at(20.0).unwrap()[0];
        assert!((x20 + 1950.0).abs() < 1e-6, "{x20}");

        let mut tr = Tracker::new(names(), TrackerConfig::default()).unwrap();
        for k in 0..150 {
            tr.observe(k as f64 / 100.0, &[3.0]).unwrap();
        }
        assert!((tr.predict_at(1234.5).unwrap()[0] - 3.0).abs() < 1e-12);

        let spec = ScenarioSpec::new(ScenarioSpec::damped_pendulum(1.0, 0.1, 2.0 * PI, 0.0), 0.0, 2.0, 100.0);
        let mut tr = Tracker::new(names(), TrackerConfig::default()).unwrap();
        tr.run(&spec.generate().unwrap()).unwrap();
        let x10 = tr.predict_at(10.0).unwrap()[0];
        assert!((x10 - (-1.0f64).exp()).abs() < 1e-6, "{x10}");
        assert!((x10 - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn self_generated_stream_only_checks() {
        let spec = ScenarioSpec::new(ScenarioSpec::free_fall(3.0, 1.0, -2.0), 0.0, 1.0, 100.0);
        let mut tr = Tracker::new(names(), TrackerConfig::default()).unwrap();
        tr.run(&spec.generate().unwrap()).unwrap();
        let model = tr.state().locked_model().unwrap().clone();
        for k in 100..600 {
            let t = k as f64 / 100.0;
            let x = model.predict(t).unwrap();
            let ev = tr.observe(t, &x).unwrap();
            assert_eq!(ev.len(), 1);
            assert_eq!(ev[0].kind, EventKind::Checked);
        }
    }

    #[test]
    fn fractional_data_use() {
        let spec = ScenarioSpec::new(ScenarioSpec::free_fall(10.0, 0.0, -9.8), 0.0, 10.0, 100.0);
        let mut tr = Tracker::new(names(), TrackerConfig::default()).unwrap();
        tr.run(&spec.generate().unwrap()).unwrap();
        let log = tr.state().event_log();
        assert_eq!(tr.state().fits_run(), 1);
        assert_eq!(log[0].kind, EventKind::LockAcquired);
        assert!((log[0].t - 0.99).abs() < 1e-12);
        assert_eq!(count(log, EventKind::Checked), 900);
        assert_eq!(count(log, EventKind::RefitTriggered), 0);
    }

    #[test]
    fn regime_switch_triggers_one_refit() {
        let seg = |kind| Segment {
            spec: ScenarioSpec::new(kind, 0.0, 5.0, 100.0),
            duration: 5.0,
        };
        let p = gen_piecewise(
            &[seg(ScenarioSpec::free_fall(0.0, 1.0, 0.0)), seg(ScenarioSpec::free_fall(0.0, 1.0, -9.8))],
            0.0,
            100.0,
        )
        .unwrap();
        let mut tr = Tracker::new(names(), TrackerConfig::default()).unwrap();
        tr.run(&p.trajectory).unwrap();
        let log = tr.state().event_log();
        assert_eq!(count(log, EventKind::RefitTriggered), 1);
        assert_eq!(count(log, EventKind::LockAcquired), 2);
        let refit = log.iter().find(|e| e.kind == EventKind::RefitTriggered).unwrap();
        assert!(refit.t > 5.0 && refit.t < 5.05);
        assert!(log.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn event_log_round_trip() {
        let events = vec![
            TrackEvent { kind: EventKind::LockAcquired, t: 0.99, residual: Some(1e-15) },
            TrackEvent { kind: EventKind::Checked, t: 1.0, residual: Some(0.0) },
            TrackEvent { kind: EventKind::RefitTriggered, t: 5.03, residual: None },
        ];
        let mut buf = Vec::new();
        write_event_log(&events, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(2).unwrap() == r#"{"kind":"refit_triggered","t":5.03}"#);
        assert_eq!(read_event_log(buf.as_slice()).unwrap(), events);
    }
}
