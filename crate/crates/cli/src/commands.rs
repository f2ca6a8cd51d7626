use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, Context};
use newton_scheme::basis::{Library, LibraryMode};
use newton_scheme::fit::{fit_trajectory, force_of, FitConfig, FitResult};
use newton_scheme::scenario::{add_noise, NoiseSpec, ScenarioSpec};
use newton_scheme::track::{write_event_log, EventKind, Tracker, TrackerConfig};
use newton_scheme::trajectory::Trajectory;

use crate::args::{BenchArgs, FitArgs, FitFlags, GenerateArgs, NoiseArgs, PredictArgs, TrackArgs};
use crate::manifest::{sibling, sidecar_path, RunManifest};
use crate::output::Outputs;
use crate::scenario_args;
use crate::{Failure, UsageExt};

type Result<T> = std::result::Result<T, Failure>;

fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .usage()?;
    Trajectory::read_csv(file)
        .with_context(|| format!("reading trajectory {}", path.display()))
        .usage()
}

fn noise_spec(n: &NoiseArgs) -> Result<Option<NoiseSpec>> {
    match n.noise_sigma {
        None => Ok(None),
        Some(s) if s.is_finite() && s >= 0.0 => Ok(Some(NoiseSpec { sigma: s, seed: n.seed })),
        Some(s) => Err(Failure::Usage(anyhow!("--noise-sigma must be >= 0, got {s}"))),
    }
}

fn fit_config(f: &FitFlags) -> Result<FitConfig> {
    let config = FitConfig {
        rmse_accept: f.rmse_accept,
        max_terms: f.max_terms,
        noise_sigma: f.noise_sigma,
        ..FitConfig::default()
    };
    config.validate().usage()?;
    Ok(config)
}

fn record_fit_flags(m: &mut RunManifest, f: &FitFlags) {
    m.set("library", LibraryMode::from(f.library).name());
    m.set("max_terms", f.max_terms);
    m.set("rmse_accept", f.rmse_accept);
    m.set("noise_sigma", f.noise_sigma);
}

/// Copies scenario provenance from the manifest beside `input`, if any.
fn inherit_provenance(m: &mut RunManifest, input: &Path) -> Result<()> {
    if let Some(src) = RunManifest::read_beside(input).usage()? {
        m.scenario = src.scenario;
        m.noise = src.noise;
        m.seed = src.seed;
    }
    Ok(())
}

fn finish(mut outputs: Outputs, mut manifest: RunManifest, primary: &Path) -> Result<()> {
    manifest.outputs = outputs.paths();
    outputs.add(sidecar_path(primary), manifest.to_json());
    outputs.commit()?;
    Ok(())
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let spec = scenario_args::build(&a.scenario).usage()?;
    let noise = noise_spec(&a.noise)?;
    let mut traj = spec.generate()?;
    if let Some(n) = &noise {
        traj = add_noise(&traj, n)?;
    }
    let mut m = RunManifest::new("generate");
    m.scenario = Some(spec);
    m.noise = noise;
    m.seed = noise.map(|n| n.seed);

    let mut out = Outputs::default();
    out.add(&a.out, traj.to_csv_string());
    finish(out, m, &a.out)?;
    println!(
        "wrote {} samples of [{}] to {}",
        traj.len(),
        traj.channel_names().join(", "),
        a.out.display()
    );
    Ok(())
}

fn residual_report(result: &FitResult, traj: &Trajectory) -> Result<String> {
    let mut s = String::from("t");
    for c in traj.channel_names() {
        write!(s, ",{c}_observed,{c}_fitted,{c}_residual").unwrap();
    }
    s.push('\n');
    let fitted = result.predict_trajectory(traj.times())?;
    for (i, &t) in traj.times().iter().enumerate() {
        write!(s, "{t}").unwrap();
        for c in 0..traj.channel_names().len() {
            let (o, f) = (traj.column(c)[i], fitted.column(c)[i]);
            write!(s, ",{o},{f},{}", o - f).unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn fit(a: &FitArgs) -> Result<()> {
    let mut traj = read_trajectory(&a.input)?;
    let mut m = RunManifest::new("fit");
    inherit_provenance(&mut m, &a.input)?;
    if let Some(w) = a.window {
        if !(w.is_finite() && w > 0.0) {
            return Err(Failure::Usage(anyhow!("--window must be > 0 seconds, got {w}")));
        }
        let t0 = traj.times()[0];
        traj = traj.window(t0, t0 + w).usage()?;
    }
    let config = fit_config(&a.fit)?;
    let mass = a.mass.or(m.scenario.as_ref().map(|s| s.mass)).unwrap_or(1.0);
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Failure::Usage(anyhow!("--mass must be > 0, got {mass}")));
    }
    let library = Library::new(a.fit.library.into());
    let result = fit_trajectory(&traj, &library, &config)?;

    m.inputs.push(a.input.display().to_string());
    m.set("window", a.window);
    m.set("mass", mass);
    record_fit_flags(&mut m, &a.fit);

    let mut out = Outputs::default();
    out.add(&a.out, result.to_json() + "\n");
    out.add(sibling(&a.out, "residuals.csv"), residual_report(&result, &traj)?);
    finish(out, m, &a.out)?;

    let t0 = result.window[0];
    for c in &result.channels {
        let terms: Vec<String> = c.model.terms.iter().map(|t| t.to_string()).collect();
        let force = force_of(&c.model, mass, t0)?;
        println!(
            "{}: [{}] rmse={:e} threshold={:e} accepted={} candidates={} force(t={t0})={:e} N",
            c.channel,
            terms.join(", "),
            c.model.rmse,
            c.threshold,
            c.accepted,
            c.candidates_evaluated,
            force.total
        );
    }
    Ok(())
}

/// `start, start + 1/rate, …` below `end`, then `end` itself.
fn prediction_grid(start: f64, end: f64, rate: f64) -> Vec<f64> {
    let mut times: Vec<f64> = (0..)
        .map(|k| start + k as f64 / rate)
        .take_while(|&t| t < end - 1e-9 / rate)
        .collect();
    times.push(end);
    times
}

fn oracle_for(scenario: Option<&ScenarioSpec>, channels: &[String], times: &[f64]) -> Result<Option<Vec<Vec<f64>>>> {
    let Some(spec) = scenario else { return Ok(None) };
    let truth = spec.evaluate_at(times).context("evaluating the scenario oracle")?;
    let cols = channels
        .iter()
        .map(|c| {
            truth
                .channel(c)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Failure::Usage(anyhow!("scenario has no channel {c:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(cols))
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let result = FitResult::read_json(&a.input)
        .with_context(|| format!("reading model {}", a.input.display()))
        .usage()?;
    let mut m = RunManifest::new("predict");
    inherit_provenance(&mut m, &a.input)?;
    let rate = a.rate.or(m.scenario.as_ref().map(|s| s.sample_rate)).unwrap_or(100.0);
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Failure::Usage(anyhow!("--rate must be > 0, got {rate}")));
    }
    let start = result.window[0];
    if !(a.to.is_finite() && a.to >= start) {
        return Err(Failure::Usage(anyhow!("--to must be >= the fit window start {start}")));
    }
    let times = prediction_grid(start, a.to, rate);
    let channels = result.channel_names();
    let predicted = result.predict_trajectory(&times)?;
    let oracle = oracle_for(m.scenario.as_ref(), &channels, &times)?;

    let mut s = String::from("t");
    for c in &channels {
        write!(s, ",{c}_predicted").unwrap();
        if oracle.is_some() {
            write!(s, ",{c}_oracle,{c}_abs_error").unwrap();
        }
    }
    s.push('\n');
    for (i, &t) in times.iter().enumerate() {
        write!(s, "{t}").unwrap();
        for c in 0..channels.len() {
            let p = predicted.column(c)[i];
            write!(s, ",{p}").unwrap();
            if let Some(o) = &oracle {
                write!(s, ",{},{}", o[c][i], (p - o[c][i]).abs()).unwrap();
            }
        }
        s.push('\n');
    }

    m.inputs.push(a.input.display().to_string());
    m.set("to", a.to);
    m.set("rate", rate);
    let mut out = Outputs::default();
    out.add(&a.out, s);
    finish(out, m, &a.out)?;

    let last = times.len() - 1;
    for (c, name) in channels.iter().enumerate() {
        let p = predicted.column(c)[last];
        match &oracle {
            Some(o) => println!("{name}({}) = {p} (oracle {}, abs_error {:e})", a.to, o[c][last], (p - o[c][last]).abs()),
            None => println!("{name}({}) = {p}", a.to),
        }
    }
    Ok(())
}

pub fn track(a: &TrackArgs) -> Result<()> {
    let traj = read_trajectory(&a.input)?;
    let mut m = RunManifest::new("track");
    inherit_provenance(&mut m, &a.input)?;
    let config = TrackerConfig {
        window: a.window,
        check_eps: a.check_eps,
        consecutive_k: a.consecutive_k,
        fit_config: fit_config(&a.fit)?,
        library: a.fit.library.into(),
        mass: a.mass,
    };
    let mut tracker = Tracker::new(traj.channel_names().to_vec(), config).usage()?;

    let mut stitched = String::from("t");
    for c in traj.channel_names() {
        write!(stitched, ",{c}_observed,{c}_predicted").unwrap();
    }
    stitched.push('\n');
    for (t, values) in traj.samples() {
        let pred = tracker.predict_at(t).ok();
        tracker.observe(t, &values)?;
        write!(stitched, "{t}").unwrap();
        for (c, v) in values.iter().enumerate() {
            match &pred {
                Some(p) => write!(stitched, ",{v},{}", p[c]).unwrap(),
                None => write!(stitched, ",{v},").unwrap(),
            }
        }
        stitched.push('\n');
    }

    let events = tracker.state().event_log();
    let mut log = Vec::new();
    write_event_log(events, &mut log)?;

    m.inputs.push(a.input.display().to_string());
    m.set("window", a.window);
    m.set("check_eps", a.check_eps);
    m.set("consecutive_k", a.consecutive_k);
    m.set("mass", a.mass);
    record_fit_flags(&mut m, &a.fit);
    let mut out = Outputs::default();
    out.add(&a.out, log);
    out.add(sibling(&a.out, "predictions.csv"), stitched);
    finish(out, m, &a.out)?;

    let count = |k: EventKind| events.iter().filter(|e| e.kind == k).count();
    println!(
        "locks={} checked={} mismatches={} refits={} fits_run={}",
        count(EventKind::LockAcquired),
        count(EventKind::Checked),
        count(EventKind::MismatchDetected),
        count(EventKind::RefitTriggered),
        tracker.state().fits_run()
    );
    for e in events.iter().filter(|e| e.kind == EventKind::RefitTriggered) {
        println!("refit triggered at t={}", e.t);
    }
    Ok(())
}

struct BenchRow {
    method: &'static str,
    channel: String,
    accepted: Option<bool>,
    abs_error: f64,
    rmse_span: f64,
}

fn span_errors(pred: &[f64], truth: &[f64]) -> (f64, f64) {
    let n = pred.len();
    let sq: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    ((pred[n - 1] - truth[n - 1]).abs(), (sq / n as f64).sqrt())
}

pub fn bench(a: &BenchArgs) -> Result<()> {
    let spec = scenario_args::build(&a.scenario).usage()?;
    let noise = noise_spec(&a.noise)?;
    let t0 = spec.t_start;
    let fit_end = t0 + a.window;
    if !(a.window.is_finite() && a.window > 0.0) {
        return Err(Failure::Usage(anyhow!("--window must be > 0 seconds")));
    }
    if !(a.horizon.is_finite() && a.horizon >= fit_end) {
        return Err(Failure::Usage(anyhow!("--horizon must be >= the end of the fit window ({fit_end})")));
    }
    let rate = spec.sample_rate;
    let all = prediction_grid(t0, a.horizon, rate);
    let split = all.iter().position(|&t| t >= fit_end - 1e-9 / rate).unwrap_or(all.len() - 1);
    let (fit_times, span) = all.split_at(split);
    if fit_times.len() < 2 {
        return Err(Failure::Usage(anyhow!("fit window holds fewer than 2 samples")));
    }
    let mut data = spec.evaluate_at(fit_times)?;
    if let Some(n) = &noise {
        data = add_noise(&data, n)?;
    }
    let truth = spec.evaluate_at(span)?;
    let config = FitConfig {
        rmse_accept: a.rmse_accept,
        max_terms: a.max_terms,
        noise_sigma: noise.map(|n| n.sigma),
        ..FitConfig::default()
    };
    config.validate().usage()?;

    let mut rows = Vec::new();
    for (method, mode) in [("full", LibraryMode::Full), ("poly", LibraryMode::PolynomialOnly)] {
        let result = fit_trajectory(&data, &Library::new(mode), &config)?;
        let pred = result.predict_trajectory(span)?;
        for (c, fit) in result.channels.iter().enumerate() {
            let (abs_error, rmse_span) = span_errors(pred.column(c), truth.column(c));
            rows.push(BenchRow { method, channel: fit.channel.clone(), accepted: Some(fit.accepted), abs_error, rmse_span });
        }
    }
    let n = fit_times.len();
    let (ta, tb) = (fit_times[n - 2], fit_times[n - 1]);
    for (c, name) in data.channel_names().iter().enumerate() {
        let (xa, xb) = (data.column(c)[n - 2], data.column(c)[n - 1]);
        let slope = (xb - xa) / (tb - ta);
        let pred: Vec<f64> = span.iter().map(|&t| xb + slope * (t - tb)).collect();
        let (abs_error, rmse_span) = span_errors(&pred, truth.column(c));
        rows.push(BenchRow { method: "linear_extrapolation", channel: name.clone(), accepted: None, abs_error, rmse_span });
    }

    println!("scenario {}: fit [{t0}, {fit_end}), horizon t={}", spec.kind_name(), a.horizon);
    println!("{:<22} {:<8} {:<9} {:>22} {:>22}", "method", "channel", "accepted", "abs_error_at_horizon", "rmse_span");
    let mut csv = String::from("method,channel,accepted,abs_error_at_horizon,rmse_span\n");
    for r in &rows {
        let acc = r.accepted.map_or("-".to_string(), |b| b.to_string());
        println!("{:<22} {:<8} {:<9} {:>22e} {:>22e}", r.method, r.channel, acc, r.abs_error, r.rmse_span);
        writeln!(csv, "{},{},{},{},{}", r.method, r.channel, acc, r.abs_error, r.rmse_span).unwrap();
    }

    if let Some(path) = &a.out {
        let mut m = RunManifest::new("bench");
        m.scenario = Some(spec);
        m.noise = noise;
        m.seed = noise.map(|n| n.seed);
        m.set("window", a.window);
        m.set("horizon", a.horizon);
        m.set("max_terms", a.max_terms);
        m.set("rmse_accept", a.rmse_accept);
        let mut out = Outputs::default();
        out.add(path, csv);
        finish(out, m, path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_ends_exactly_at_target() {
        let g = prediction_grid(0.0, 20.0, 100.0);
        assert_eq!(g.len(), 2001);
        assert_eq!(*g.last().unwrap(), 20.0);
        let g = prediction_grid(0.0, 0.015, 100.0);
        assert_eq!(g, vec![0.0, 0.01, 0.015]);
        assert_eq!(prediction_grid(1.0, 1.0, 10.0), vec![1.0]);
    }

    #[test]
    fn span_error_metrics() {
        let (e, r) = span_errors(&[1.0, 2.0], &[1.0, 4.0]);
        assert_eq!(e, 2.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }
}
