//! Time-ordered multi-channel observations and their CSV form.
//!
//! CSV layout: a header `t,<channel>[,<channel>...]` followed by one sample
//! per line. Values are written with Rust's shortest round-trip formatting,
//! so reading a file back reproduces every `f64` bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    channel_names: Vec<String>,
    times: Vec<f64>,
    /// Column-major: `columns[c][i]` is channel `c` at `times[i]`.
    columns: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Builds a trajectory from per-channel columns.
    pub fn from_columns(channel_names: Vec<String>, times: Vec<f64>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if channel_names.is_empty() {
            return Err(Error::Argument("a trajectory needs at least one channel".into()));
        }
        if channel_names.len() != columns.len() {
            return Err(Error::Argument(format!(
                "{} channel names but {} columns",
                channel_names.len(),
                columns.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &channel_names {
            if name.is_empty() || name == "t" || !seen.insert(name.as_str()) {
                return Err(Error::Argument(format!("invalid or duplicate channel name {name:?}")));
            }
        }
        if let Some(bad) = columns.iter().position(|c| c.len() != times.len()) {
            return Err(Error::Argument(format!(
                "channel {} has {} values for {} times",
                channel_names[bad],
                columns[bad].len(),
                times.len()
            )));
        }
        if times.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Argument("trajectory contains non-finite values".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Argument("sample times must be strictly increasing".into()));
        }
        Ok(Self {
            channel_names,
            times,
            columns,
        })
    }

    /// Builds a trajectory from `(t, values)` rows.
    pub fn from_samples(channel_names: Vec<String>, samples: &[(f64, Vec<f64>)]) -> Result<Self> {
        let width = channel_names.len();
        let mut columns = vec![Vec::with_capacity(samples.len()); width];
        let mut times = Vec::with_capacity(samples.len());
        for (t, values) in samples {
            if values.len() != width {
                return Err(Error::Argument(format!(
                    "sample at t = {t} has {} values for {width} channels",
                    values.len()
                )));
            }
            times.push(*t);
            for (col, v) in columns.iter_mut().zip(values) {
                col.push(*v);
            }
        }
        Self::from_columns(channel_names, times, columns)
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|n| n == name)
    }

    pub fn column(&self, index: usize) -> &[f64] {
        &self.columns[index]
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channel_index(name).map(|i| self.column(i))
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Values of every channel at sample `i`.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, Vec<f64>)> + '_ {
        (0..self.len()).map(|i| (self.times[i], self.row(i)))
    }

    /// Samples with `start <= t < end`.
    pub fn window(&self, start: f64, end: f64) -> Result<Self> {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.times[i] >= start && self.times[i] < end)
            .collect();
        let times = idx.iter().map(|&i| self.times[i]).collect();
        let columns = self
            .columns
            .iter()
            .map(|c| idx.iter().map(|&i| c[i]).collect())
            .collect();
        Self::from_columns(self.channel_names.clone(), times, columns)
    }

    /// Keeps only the named channels, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            let i = self
                .channel_index(name)
                .ok_or_else(|| Error::Argument(format!("no channel named {name:?}")))?;
            columns.push(self.columns[i].clone());
        }
        Self::from_columns(names.iter().map(|s| s.to_string()).collect(), self.times.clone(), columns)
    }

    pub(crate) fn map_columns(&self, f: impl FnMut(usize, &[f64]) -> Vec<f64>) -> Result<Self> {
        let mut f = f;
        let columns = self.columns.iter().enumerate().map(|(i, c)| f(i, c)).collect();
        Self::from_columns(self.channel_names.clone(), self.times.clone(), columns)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend(self.channel_names.iter().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut record = vec![self.times[i].to_string()];
            record.extend(self.columns.iter().map(|c| c[i].to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = r.headers()?.clone();
        if header.get(0) != Some("t") || header.len() < 2 {
            return Err(Error::Format("trajectory CSV header must be `t,<channel>...`".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut samples = Vec::new();
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: not a number: {s:?}", line + 2)))
            };
            if record.len() != names.len() + 1 {
                return Err(Error::Format(format!("line {}: wrong field count", line + 2)));
            }
            let t = parse(&record[0])?;
            let values = record.iter().skip(1).map(parse).collect::<Result<Vec<_>>>()?;
            samples.push((t, values));
        }
        if samples.is_empty() {
            return Err(Error::Format("trajectory CSV has no samples".into()));
        }
        Self::from_samples(names, &samples).map_err(|e| match e {
            Error::Argument(m) => Error::Format(m),
            other => other,
        })
    }
}
