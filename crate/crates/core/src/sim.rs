//! Fixed-step simulation of an ensemble responding autonomously to a
//! frequency trace, and the error metrics evaluated on its output.
//!
//! Every controller tick each committed device samples the frequency; a
//! threshold crossing takes effect at the next tick. A device only honours a
//! request the thermostat would allow: an AC at or above its on edge keeps
//! running, a water heater at or below its on edge keeps heating. When the
//! thermostat overrides a held device it is released for the rest of the
//! excursion and re-armed once the frequency is back on the nominal side of
//! its threshold.
//!
//! The counterfactual consumption is a thermostat-only copy of the committed
//! devices stepped in lockstep. Uncommitted devices follow identical
//! trajectories in both worlds, so they are simulated once.

use std::collections::HashMap;

use crate::allocation::ThresholdAssignment;
use crate::device::DeviceRecord;
use crate::error::{invalid, Error, Result};
use crate::event::FrequencyTrace;
use crate::fitness::Service;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum ResponseMode {
    /// Held devices are released as soon as the frequency recovers past their threshold.
    #[default]
    Tracking,
    /// Held devices stay held until the window ends or the thermostat intervenes.
    Latching,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimConfig<S> {
    /// Controller sampling period, s.
    pub dt: S,
    /// Control window length, s. Must be a multiple of `dt`.
    pub window: S,
    pub mode: ResponseMode,
}

impl<S: Scalar> SimConfig<S> {
    pub fn new(dt: S, window: S) -> Self {
        SimConfig { dt, window, mode: ResponseMode::Tracking }
    }

    /// Number of controller steps in the window.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt.is_finite() && self.dt > S::zero()) {
            return Err(invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if !(self.window.is_finite() && self.window > S::zero()) {
            return Err(invalid("window", format!("must be > 0, got {}", self.window)));
        }
        let ratio = self.window / self.dt;
        let n = ratio.round();
        if (ratio - n).abs() > S::lit(1e-6) * n.max(S::one()) || n < S::one() {
            return Err(invalid("window", format!("{} s is not a multiple of dt = {} s", self.window, self.dt)));
        }
        Ok(n.to_usize().unwrap())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SwitchCause {
    Thermostat,
    Grid,
}

impl SwitchCause {
    pub fn as_str(self) -> &'static str {
        match self {
            SwitchCause::Thermostat => "thermostat",
            SwitchCause::Grid => "grid",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SwitchEvent<S> {
    pub time: S,
    pub device_id: u32,
    /// New discrete state.
    pub on: bool,
    pub cause: SwitchCause,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplePoint<S> {
    pub time: S,
    /// Hz
    pub freq: S,
    /// Ensemble consumption, kW.
    pub p_sigma: S,
    /// Counterfactual consumption without any grid response, kW.
    pub baseline: S,
    /// Droop target at this frequency, kW.
    pub target: S,
    /// Response actually delivered relative to the baseline, kW.
    pub achieved: S,
}

/// Requested and delivered response at the deepest point of one event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventResponse<S> {
    pub time: S,
    pub freq: S,
    pub requested: S,
    pub provided: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationResult<S> {
    pub series: Vec<SamplePoint<S>>,
    pub switches: Vec<SwitchEvent<S>>,
    pub events: Vec<EventResponse<S>>,
    pub committed_capacity: S,
    pub total_rating: S,
    pub direction: Service,
    /// Nadir RMVT, `None` when no event requested any response.
    pub rmvt: Option<S>,
}

impl<S: Scalar> SimulationResult<S> {
    pub fn grid_switches(&self) -> impl Iterator<Item = &SwitchEvent<S>> {
        self.switches.iter().filter(|s| s.cause == SwitchCause::Grid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RmvtMode {
    /// Ratio at the deepest sample of each event, averaged over events.
    #[default]
    AtNadir,
    /// Mean ratio over all samples requesting more than 1% of capacity.
    TimeAveraged,
}

#[derive(Clone, Copy, Debug)]
struct Slot<S> {
    dev: DeviceRecord<S>,
    eq_on: S,
    eq_off: S,
    decay: S,
}

impl<S: Scalar> Slot<S> {
    fn new(dev: DeviceRecord<S>, dt: S) -> Self {
        let th = dev.thermal();
        Slot {
            dev,
            eq_on: th.eq_on,
            eq_off: th.eq_off,
            decay: (-th.rate * dt).exp(),
        }
    }

    /// Exact thermal update over one tick, then hysteresis. Returns whether
    /// the thermostat switched the device.
    fn tick(&mut self) -> Result<bool> {
        let eq = if self.dev.on { self.eq_on } else { self.eq_off };
        self.dev.temp = eq + (self.dev.temp - eq) * self.decay;
        self.dev.check_finite()?;
        Ok(self.dev.apply_hysteresis())
    }
}

#[derive(Clone, Copy, Debug)]
struct Responder<S> {
    /// Index into the live device slots.
    slot: usize,
    threshold: S,
    shadow: Slot<S>,
    held: bool,
    /// Released by the thermostat during the current excursion.
    overridden: bool,
    /// Discrete state at the end of the previous tick.
    last_on: bool,
}

/// Simulates one control window. Time zero is the window start; the trace
/// must cover `[0, window]`.
pub fn run<S: Scalar>(
    population: &[DeviceRecord<S>],
    assignment: &ThresholdAssignment<S>,
    trace: &FrequencyTrace<S>,
    config: &SimConfig<S>,
) -> Result<SimulationResult<S>> {
    let steps = config.steps()?;
    trace.validate()?;
    let eps = S::lit(1e-9) * config.window.max(S::one());
    if trace.start > eps || trace.end_time() + eps < config.window {
        return Err(Error::Trace(format!(
            "trace covers [{}, {}] s, window needs [0, {}] s",
            trace.start,
            trace.end_time(),
            config.window
        )));
    }

    let dt = config.dt;
    let mut index = HashMap::with_capacity(population.len());
    for (i, d) in population.iter().enumerate() {
        d.check_finite()?;
        if index.insert(d.id, i).is_some() {
            return Err(Error::DuplicateDevice(d.id));
        }
    }
    let mut live: Vec<Slot<S>> = population.iter().map(|&d| Slot::new(d, dt)).collect();
    let mut responders = Vec::with_capacity(assignment.len());
    for a in &assignment.devices {
        let slot = *index.get(&a.device_id).ok_or(Error::UnknownDevice(a.device_id))?;
        live[slot].dev.threshold = Some(a.threshold);
        responders.push(Responder {
            slot,
            threshold: a.threshold,
            shadow: live[slot],
            held: false,
            overridden: false,
            last_on: live[slot].dev.on,
        });
    }

    let direction = assignment.spec.direction;
    // under-frequency service sheds running devices, over-frequency starts idle ones
    let responding_state = direction == Service::OverFreq;
    let total_rating: S = population.iter().map(|d| d.power_rating()).sum();
    let mut series = Vec::with_capacity(steps + 1);
    let mut switches = Vec::new();
    let mut prev_freq: Option<S> = None;

    for k in 0..=steps {
        let t = dt * S::from_usize(k).unwrap();
        let freq = trace.at(t);

        if k > 0 {
            for slot in live.iter_mut() {
                let before = slot.dev.on;
                if slot.tick()? {
                    switches.push(SwitchEvent {
                        time: t,
                        device_id: slot.dev.id,
                        on: slot.dev.on,
                        cause: SwitchCause::Thermostat,
                    });
                    debug_assert_ne!(before, slot.dev.on);
                }
            }
            let sampled = prev_freq.expect("sampled on the previous tick");
            for r in responders.iter_mut() {
                r.shadow.tick()?;
                let slot = &mut live[r.slot];
                let called = assignment.triggered(r.threshold, sampled);
                let thermostat_moved_back = slot.dev.on != responding_state && r.last_on == responding_state;
                if thermostat_moved_back && (r.held || called) {
                    // the end-use constraint won
                    r.held = false;
                    r.overridden = true;
                    slot.dev.responded = false;
                }
                if called {
                    let idle = !r.held && !r.overridden && slot.dev.on != responding_state;
                    let permitted = if responding_state { !slot.dev.demands_off() } else { !slot.dev.demands_on() };
                    if idle && permitted {
                        slot.dev.on = responding_state;
                        slot.dev.responded = true;
                        r.held = true;
                        switches.push(SwitchEvent {
                            time: t,
                            device_id: slot.dev.id,
                            on: slot.dev.on,
                            cause: SwitchCause::Grid,
                        });
                    } else if idle {
                        r.overridden = true;
                    }
                } else {
                    r.overridden = false;
                    if r.held && config.mode == ResponseMode::Tracking {
                        r.held = false;
                        slot.dev.responded = false;
                        let restore_ok = if responding_state { !slot.dev.demands_on() } else { !slot.dev.demands_off() };
                        if restore_ok {
                            slot.dev.on = !responding_state;
                            switches.push(SwitchEvent {
                                time: t,
                                device_id: slot.dev.id,
                                on: slot.dev.on,
                                cause: SwitchCause::Grid,
                            });
                        }
                    }
                }
                r.last_on = slot.dev.on;
            }
        }

        let p_sigma: S = live.iter().map(|s| s.dev.power()).sum();
        let committed_live: S = responders.iter().map(|r| live[r.slot].dev.power()).sum();
        let committed_shadow: S = responders.iter().map(|r| r.shadow.dev.power()).sum();
        let baseline = p_sigma - committed_live + committed_shadow;
        let achieved = match direction {
            Service::UnderFreq => baseline - p_sigma,
            Service::OverFreq => p_sigma - baseline,
        };
        series.push(SamplePoint {
            time: t,
            freq,
            p_sigma,
            baseline,
            target: assignment.target(freq),
            achieved,
        });
        prev_freq = Some(freq);
    }

    let events = nadir_responses(&series, assignment, trace, config.window, dt);
    let mut result = SimulationResult {
        series,
        switches,
        events,
        committed_capacity: assignment.committed_capacity,
        total_rating,
        direction,
        rmvt: None,
    };
    result.rmvt = compute_rmvt(&result, RmvtMode::AtNadir).ok();
    Ok(result)
}

/// Splits the window into events and picks the deepest sample of each. An
/// event still deepening when the window closes has its nadir in the next
/// window and is not scored here.
fn nadir_responses<S: Scalar>(
    series: &[SamplePoint<S>],
    assignment: &ThresholdAssignment<S>,
    trace: &FrequencyTrace<S>,
    window: S,
    dt: S,
) -> Vec<EventResponse<S>> {
    let mut segments: Vec<(usize, usize)> = Vec::new();
    let mut starts: Vec<S> = trace.event_starts.iter().copied().filter(|&t| t < window).collect();
    starts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if starts.is_empty() {
        // contiguous excursions into the band
        let mut open: Option<usize> = None;
        for (i, p) in series.iter().enumerate() {
            match (open, p.target > S::zero()) {
                (None, true) => open = Some(i),
                (Some(s), false) => {
                    segments.push((s, i));
                    open = None;
                }
                _ => {}
            }
        }
        if let Some(s) = open {
            segments.push((s, series.len()));
        }
    } else {
        let idx = |t: S| series.iter().position(|p| p.time >= t).unwrap_or(series.len());
        for (j, &s) in starts.iter().enumerate() {
            let end = starts.get(j + 1).map_or(series.len(), |&e| idx(e));
            segments.push((idx(s), end));
        }
    }

    let spec = &assignment.spec;
    segments
        .into_iter()
        .filter(|(a, b)| a < b)
        .filter_map(|(a, b)| {
            let deepest = series[a..b].iter().fold(None::<&SamplePoint<S>>, |best, p| match best {
                // ties go to the later sample, so a flat nadir is judged once settled
                Some(q) if spec.raw_depth(q.freq) > spec.raw_depth(p.freq) => Some(q),
                _ => Some(p),
            })?;
            let last = series.last()?;
            let after = window + dt;
            if deepest.time == last.time && after <= trace.end_time() && spec.raw_depth(trace.at(after)) > spec.raw_depth(last.freq) {
                return None;
            }
            (deepest.target > S::zero()).then_some(EventResponse {
                time: deepest.time,
                freq: deepest.freq,
                requested: deepest.target,
                provided: deepest.achieved,
            })
        })
        .collect()
}

/// Reserve margin variability target `|1 - provided / requested|`.
pub fn compute_rmvt<S: Scalar>(result: &SimulationResult<S>, mode: RmvtMode) -> Result<S> {
    let ratios: Vec<S> = match mode {
        RmvtMode::AtNadir => result
            .events
            .iter()
            .filter(|e| e.requested > S::zero())
            .map(|e| (S::one() - e.provided / e.requested).abs())
            .collect(),
        RmvtMode::TimeAveraged => {
            let floor = S::lit(0.01) * result.committed_capacity;
            result
                .series
                .iter()
                .filter(|p| p.target > floor)
                .map(|p| (S::one() - p.achieved / p.target).abs())
                .collect()
        }
    };
    if ratios.is_empty() {
        return Err(Error::Undefined("no response was requested".into()));
    }
    let n = S::from_usize(ratios.len()).unwrap();
    Ok(ratios.into_iter().sum::<S>() / n)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DroopPoint<S> {
    pub omega: S,
    /// Quasi-static response of the staircase, kW.
    pub shed: S,
    /// Ideal droop line, kW.
    pub ideal: S,
}

/// Evaluates the staircase response on `points` frequencies spanning the
/// band (inclusive), from the nominal edge to the far edge.
pub fn static_droop_sweep<S: Scalar>(assignment: &ThresholdAssignment<S>, points: usize) -> Vec<DroopPoint<S>> {
    let spec = &assignment.spec;
    let n = points.max(2);
    (0..n)
        .map(|i| {
            let frac = S::from_usize(i).unwrap() / S::from_usize(n - 1).unwrap();
            let omega = match spec.direction {
                Service::UnderFreq => spec.omega_u - spec.band() * frac,
                Service::OverFreq => spec.omega_l + spec.band() * frac,
            };
            let omega = if i == n - 1 {
                match spec.direction {
                    Service::UnderFreq => spec.omega_l,
                    Service::OverFreq => spec.omega_u,
                }
            } else {
                omega
            };
            DroopPoint {
                omega,
                shed: assignment.staircase(omega),
                ideal: assignment.target(omega),
            }
        })
        .collect()
}

/// Largest single jump of the staircase (the height of one step).
pub fn staircase_max_step<S: Scalar>(assignment: &ThresholdAssignment<S>) -> S {
    // consecutive thresholds are strictly ordered, so each step is one device
    assignment.max_rating()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplingErrorRow<S> {
    pub dt: S,
    /// Largest `(target - achieved) / Δp` over the run.
    pub peak_error: S,
    /// Trace slope where the frequency enters the band, Hz/s.
    pub rocof_at_crossing: S,
    /// `dt · |rocof| / (ω_u - ω_l)`.
    pub estimate: S,
}

/// Linear sampling-lag estimate of the relative tracking error.
pub fn sampling_error_estimate<S: Scalar>(dt: S, rocof: S, band: S) -> S {
    dt * rocof.abs() / band
}

/// Runs the same scenario at several controller periods and reports the
/// measured peak shortfall next to the linear estimate.
pub fn evaluate_sampling_error<S: Scalar>(
    population: &[DeviceRecord<S>],
    assignment: &ThresholdAssignment<S>,
    trace: &FrequencyTrace<S>,
    dts: &[S],
    mode: ResponseMode,
) -> Result<Vec<SamplingErrorRow<S>>> {
    let spec = &assignment.spec;
    let entered = |f: S| match spec.direction {
        Service::UnderFreq => f < spec.omega_u,
        Service::OverFreq => f > spec.omega_l,
    };
    let crossing = trace
        .samples()
        .find(|&(_, f)| entered(f))
        .map(|(t, _)| t)
        .ok_or_else(|| Error::Trace("trace never enters the response band".into()))?;
    let rocof = trace.rocof_at(crossing - trace.period);
    dts.iter()
        .map(|&dt| {
            let steps = ((trace.end_time() - trace.start.max(S::zero())) / dt).floor();
            let config = SimConfig { dt, window: steps * dt, mode };
            let result = run(population, assignment, trace, &config)?;
            let peak = result
                .series
                .iter()
                .map(|p| (p.target - p.achieved) / result.committed_capacity)
                .fold(S::zero(), S::max);
            Ok(SamplingErrorRow {
                dt,
                peak_error: peak,
                rocof_at_crossing: rocof,
                estimate: sampling_error_estimate(dt, rocof, spec.band()),
            })
        })
        .collect()
}
