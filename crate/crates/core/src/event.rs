//! Frequency traces: recorded traces from disk and parametric synthetic events.
//!
//! A synthetic dip falls with its steepest slope at onset and flattens out
//! toward the nadir, then relaxes to a settled offset:
//!
//! ```text
//! onset    d(t) = N · u · e^(1-u),                u = t / τ_f,  τ_f = e·N / R
//! recovery d(t) = S + (N - S) · (1 + v) · e^(-v), v = (t - τ_f) / τ_r
//! ```
//!
//! `N` is the nadir deviation, `R` the initial ROCOF, `S` the settled offset
//! and `τ_r` the recovery time constant. Both pieces have zero slope at the
//! nadir, so the trajectory is C¹. A cascade superposes several dips.

use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

/// Frequencies outside this band are rejected as corrupt, Hz.
pub const SANITY_BAND: (f64, f64) = (55.0, 65.0);

/// One frequency excursion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dip<S> {
    /// s
    pub start_time: S,
    /// Hz, magnitude of the extreme excursion from nominal.
    pub nadir_deviation: S,
    /// Hz/s, magnitude of the slope at onset.
    pub initial_rocof: S,
    /// s
    pub recovery_time_constant: S,
    /// Hz, residual deviation after recovery.
    pub settle_offset: S,
}

impl<S: Scalar> Dip<S> {
    pub fn validate(&self) -> Result<()> {
        let n = self.nadir_deviation;
        if !self.start_time.is_finite() || self.start_time < S::zero() {
            return Err(invalid("start_time", format!("must be >= 0, got {}", self.start_time)));
        }
        if !(n.is_finite() && n >= S::zero()) {
            return Err(invalid("nadir_deviation", format!("must be >= 0, got {n}")));
        }
        if n == S::zero() {
            return Ok(());
        }
        if !(self.initial_rocof.is_finite() && self.initial_rocof > S::zero()) {
            return Err(invalid("initial_rocof", format!("must be > 0, got {}", self.initial_rocof)));
        }
        if !(self.recovery_time_constant.is_finite() && self.recovery_time_constant > S::zero()) {
            return Err(invalid(
                "recovery_time_constant",
                format!("must be > 0, got {}", self.recovery_time_constant),
            ));
        }
        if !(self.settle_offset >= S::zero() && self.settle_offset <= n) {
            return Err(invalid(
                "settle_offset",
                format!("must lie in [0, nadir_deviation], got {}", self.settle_offset),
            ));
        }
        // the recovery may not be steeper than the onset
        let recovery_peak = (n - self.settle_offset) / (S::E() * self.recovery_time_constant);
        if recovery_peak > self.initial_rocof {
            return Err(invalid(
                "initial_rocof",
                format!(
                    "recovery slope {recovery_peak} exceeds initial rocof {}; no consistent dip",
                    self.initial_rocof
                ),
            ));
        }
        Ok(())
    }

    /// Onset time constant `τ_f`; the nadir is reached `τ_f` after start.
    pub fn fall_time(&self) -> S {
        S::E() * self.nadir_deviation / self.initial_rocof
    }

    pub fn nadir_time(&self) -> S {
        self.start_time + self.fall_time()
    }

    /// Unsigned deviation from nominal at absolute time `t`.
    pub fn deviation(&self, t: S) -> S {
        let n = self.nadir_deviation;
        if n == S::zero() || t <= self.start_time {
            return S::zero();
        }
        let tau_f = self.fall_time();
        let local = t - self.start_time;
        if local <= tau_f {
            let u = local / tau_f;
            n * u * (S::one() - u).exp()
        } else {
            let v = (local - tau_f) / self.recovery_time_constant;
            self.settle_offset + (n - self.settle_offset) * (S::one() + v) * (-v).exp()
        }
    }

    /// Slope magnitude of [`Dip::deviation`] at absolute time `t`.
    pub fn deviation_rate(&self, t: S) -> S {
        let n = self.nadir_deviation;
        if n == S::zero() || t < self.start_time {
            return S::zero();
        }
        let tau_f = self.fall_time();
        let local = t - self.start_time;
        if local <= tau_f {
            let u = local / tau_f;
            self.initial_rocof * (S::one() - u) * (-u).exp()
        } else {
            let v = (local - tau_f) / self.recovery_time_constant;
            -(n - self.settle_offset) * v * (-v).exp() / self.recovery_time_constant
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum EventSpec<S> {
    UnderFreq(Dip<S>),
    OverFreq(Dip<S>),
    /// Superposed under-frequency dips, e.g. a contingency followed by
    /// secondary trips.
    Cascade(Vec<Dip<S>>),
}

impl<S: Scalar> EventSpec<S> {
    pub fn dips(&self) -> &[Dip<S>] {
        match self {
            EventSpec::UnderFreq(d) | EventSpec::OverFreq(d) => std::slice::from_ref(d),
            EventSpec::Cascade(ds) => ds,
        }
    }

    fn sign(&self) -> S {
        match self {
            EventSpec::OverFreq(_) => S::one(),
            _ => -S::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dips().is_empty() {
            return Err(Error::Empty("cascade without dips"));
        }
        self.dips().iter().try_for_each(Dip::validate)
    }

    /// Frequency at time `t` around nominal `omega_0`.
    pub fn frequency(&self, omega_0: S, t: S) -> S {
        let dev: S = self.dips().iter().map(|d| d.deviation(t)).sum();
        omega_0 + self.sign() * dev
    }

    /// Latest time by which every dip has essentially recovered.
    pub fn required_duration(&self) -> S {
        self.dips()
            .iter()
            .map(|d| d.start_time + S::lit(5.0) * d.recovery_time_constant)
            .fold(S::zero(), S::max)
    }
}

/// Uniformly sampled frequency signal.
#[derive(Clone, Debug, PartialEq)]
pub struct FrequencyTrace<S> {
    /// Time of the first sample, s.
    pub start: S,
    /// Sample period, s.
    pub period: S,
    /// Hz
    pub values: Vec<S>,
    /// Onset times of the events in the trace, when known. Used to split the
    /// trace into events for per-event metrics.
    pub event_starts: Vec<S>,
}

impl<S: Scalar> FrequencyTrace<S> {
    pub fn constant(omega: S, duration: S, period: S) -> Result<Self> {
        let n = sample_count(duration, period)?;
        let trace = FrequencyTrace {
            start: S::zero(),
            period,
            values: vec![omega; n],
            event_starts: Vec::new(),
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> S {
        self.start + self.period * S::from_usize(i).unwrap()
    }

    pub fn end_time(&self) -> S {
        self.time(self.values.len().saturating_sub(1))
    }

    pub fn samples(&self) -> impl Iterator<Item = (S, S)> + '_ {
        self.values.iter().enumerate().map(|(i, &f)| (self.time(i), f))
    }

    /// Linear interpolation between samples; clamped outside the trace.
    pub fn at(&self, t: S) -> S {
        let last = self.values.len() - 1;
        let pos = (t - self.start) / self.period;
        if !(pos > S::zero()) {
            return self.values[0];
        }
        let i = pos.floor().to_usize().unwrap_or(usize::MAX);
        if i >= last {
            return self.values[last];
        }
        let frac = pos - S::from_usize(i).unwrap();
        self.values[i] + (self.values[i + 1] - self.values[i]) * frac
    }

    /// Finite-difference slope between the samples bracketing `t`, Hz/s.
    pub fn rocof_at(&self, t: S) -> S {
        let last = self.values.len() - 1;
        let pos = ((t - self.start) / self.period).max(S::zero());
        let i = pos.floor().to_usize().unwrap_or(usize::MAX).min(last.saturating_sub(1));
        (self.values[i + 1] - self.values[i]) / self.period
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 2 {
            return Err(Error::Trace("need at least two samples".into()));
        }
        if !(self.period.is_finite() && self.period > S::zero()) {
            return Err(Error::Trace(format!("sample period must be > 0, got {}", self.period)));
        }
        let (lo, hi) = (S::lit(SANITY_BAND.0), S::lit(SANITY_BAND.1));
        for (t, f) in self.samples() {
            if !f.is_finite() || f < lo || f > hi {
                return Err(Error::Trace(format!("frequency {f} Hz at t={t} s outside [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Builds a trace from arbitrary increasing samples. Uniform input is
    /// kept as is unless `period` asks for a different spacing; anything else
    /// is resampled by linear interpolation (to the smallest input spacing
    /// when no period is given).
    pub fn from_samples(samples: &[(S, S)], period: Option<S>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::Trace("need at least two samples".into()));
        }
        let mut min_gap = S::infinity();
        let mut max_gap = S::zero();
        for w in samples.windows(2) {
            let gap = w[1].0 - w[0].0;
            if !(gap > S::zero()) {
                return Err(Error::Trace(format!("time not strictly increasing at t={}", w[1].0)));
            }
            min_gap = min_gap.min(gap);
            max_gap = max_gap.max(gap);
        }
        let uniform = (max_gap - min_gap) <= S::lit(1e-6) * max_gap;
        let t0 = samples[0].0;
        let span = samples[samples.len() - 1].0 - t0;
        let target = period.unwrap_or(if uniform { span / S::from_usize(samples.len() - 1).unwrap() } else { min_gap });
        if !(target.is_finite() && target > S::zero()) {
            return Err(Error::Trace(format!("invalid resampling period {target}")));
        }
        let values = if uniform && period.is_none_or(|p| (p - target).abs() <= S::lit(1e-9) * target) {
            samples.iter().map(|s| s.1).collect()
        } else {
            let n = (span / target + S::lit(1e-9)).floor().to_usize().unwrap() + 1;
            let mut out = Vec::with_capacity(n);
            let mut j = 0;
            for i in 0..n {
                let t = t0 + target * S::from_usize(i).unwrap();
                while j + 2 < samples.len() && samples[j + 1].0 < t {
                    j += 1;
                }
                let (ta, fa) = samples[j];
                let (tb, fb) = samples[j + 1];
                let frac = ((t - ta) / (tb - ta)).max(S::zero()).min(S::one());
                out.push(fa + (fb - fa) * frac);
            }
            out
        };
        let trace = FrequencyTrace {
            start: t0,
            period: target,
            values,
            event_starts: Vec::new(),
        };
        trace.validate()?;
        Ok(trace)
    }

    /// Trace shifted so that the sample at `offset` becomes time zero.
    pub fn shifted(&self, offset: S) -> Self {
        FrequencyTrace {
            start: self.start - offset,
            period: self.period,
            values: self.values.clone(),
            event_starts: self.event_starts.iter().map(|&t| t - offset).collect(),
        }
    }
}

fn sample_count<S: Scalar>(duration: S, dt: S) -> Result<usize> {
    if !(dt.is_finite() && dt > S::zero()) {
        return Err(invalid("dt", format!("must be > 0, got {dt}")));
    }
    if !(duration.is_finite() && duration >= dt) {
        return Err(invalid("duration", format!("must be >= dt, got {duration}")));
    }
    Ok((duration / dt + S::lit(1e-9)).floor().to_usize().unwrap() + 1)
}

/// Samples a parametric event on `[0, duration]` at spacing `dt`.
pub fn synthesize<S: Scalar>(spec: &EventSpec<S>, omega_0: S, duration: S, dt: S) -> Result<FrequencyTrace<S>> {
    spec.validate()?;
    let needed = spec.required_duration();
    if duration < needed {
        return Err(invalid(
            "duration",
            format!("{duration} s does not cover the event (need {needed} s)"),
        ));
    }
    let n = sample_count(duration, dt)?;
    let values = (0..n)
        .map(|i| spec.frequency(omega_0, dt * S::from_usize(i).unwrap()))
        .collect();
    let trace = FrequencyTrace {
        start: S::zero(),
        period: dt,
        values,
        event_starts: spec
            .dips()
            .iter()
            .filter(|d| d.nadir_deviation > S::zero())
            .map(|d| d.start_time)
            .collect(),
    };
    trace.validate()?;
    Ok(trace)
}

/// Reads a `time_s,freq_hz` file with one header line.
pub fn ingest<S: Scalar>(path: impl AsRef<Path>, period: Option<S>) -> Result<FrequencyTrace<S>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let mut samples = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        if row.len() < 2 {
            return Err(Error::Parse { line, reason: "expected two columns".into() });
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map(S::lit)
                .map_err(|e| Error::Parse { line, reason: format!("`{s}`: {e}") })
        };
        samples.push((parse(&row[0])?, parse(&row[1])?));
    }
    FrequencyTrace::from_samples(&samples, period)
}
