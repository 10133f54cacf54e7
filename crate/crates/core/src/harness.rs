//! Scenario configuration, population generation and the Monte Carlo drivers.
//!
//! Everything here runs on `f64`. A run is a pure function of the config and
//! the master seed: sub-seeds are derived per purpose and per run index, runs
//! fan out over rayon and are reduced in index order.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{
    assign_thresholds, max_guaranteed_capacity, prioritize, select_committed, shuffled, ResponseCurveSpec, Selection,
    ThresholdAssignment, Tolerance,
};
use crate::device::{AcParams, DeviceParams, DeviceRecord, EwhParams};
use crate::error::{Error, Result};
use crate::event::{ingest, synthesize, Dip, EventSpec, FrequencyTrace};
use crate::fitness::{fitness_table, FitnessReport, QualityParams, Service};
use crate::sim::{self, compute_rmvt, ResponseMode, RmvtMode, SimConfig, SimulationResult};

/// Closed interval sampled uniformly. Written as `[lo, hi]` in config files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub const fn point(v: f64) -> Self {
        Range { lo: v, hi: v }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.gen_range(self.lo..=self.hi)
        }
    }

    fn check(&self, name: &str) -> Result<()> {
        if self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi {
            Ok(())
        } else {
            Err(Error::Config(format!("range `{name}` = [{}, {}] is empty or not finite", self.lo, self.hi)))
        }
    }
}

impl TryFrom<[f64; 2]> for Range {
    type Error = String;

    fn try_from([lo, hi]: [f64; 2]) -> std::result::Result<Self, String> {
        if lo <= hi {
            Ok(Range { lo, hi })
        } else {
            Err(format!("range [{lo}, {hi}] is empty"))
        }
    }
}

impl From<Range> for [f64; 2] {
    fn from(r: Range) -> Self {
        [r.lo, r.hi]
    }
}

/// Air conditioner parameter ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcRanges {
    /// kW
    pub power_kw: Range,
    /// °F/kW
    pub resistance: Range,
    /// kWh/°F
    pub capacitance: Range,
    pub efficiency: Range,
    /// °F
    pub setpoint: Range,
    /// Full deadband width, °F.
    pub deadband: Range,
    /// °F
    pub ambient: Range,
}

impl Default for AcRanges {
    fn default() -> Self {
        AcRanges {
            power_kw: Range::new(5.5, 6.5),
            resistance: Range::new(2.0, 2.4),
            capacitance: Range::new(3.24, 3.96),
            efficiency: Range::point(2.5),
            setpoint: Range::new(70.0, 74.0),
            deadband: Range::point(2.0),
            ambient: Range::new(80.0, 95.0),
        }
    }
}

/// Electric water heater parameter ranges. The defaults describe a 4.5 kW
/// class tank under a constant hot-water draw for the window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EwhRanges {
    /// kW
    pub power_kw: Range,
    /// kWh/°F
    pub tank_capacitance: Range,
    /// lb/h
    pub flow_rate: Range,
    /// kWh/(lb·°F)
    pub specific_heat: Range,
    /// kW/°F
    pub loss_coeff: Range,
    /// °F
    pub inlet_temp: Range,
    /// °F
    pub ambient: Range,
    /// °F
    pub setpoint: Range,
    /// Full deadband width, °F.
    pub deadband: Range,
}

impl Default for EwhRanges {
    fn default() -> Self {
        EwhRanges {
            power_kw: Range::new(4.0, 5.0),
            tank_capacitance: Range::new(0.12, 0.2),
            flow_rate: Range::new(5.0, 30.0),
            specific_heat: Range::point(2.93e-4),
            loss_coeff: Range::new(0.001, 0.002),
            inlet_temp: Range::new(55.0, 65.0),
            ambient: Range::new(65.0, 75.0),
            setpoint: Range::new(118.0, 125.0),
            deadband: Range::point(4.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    pub ac_count: usize,
    pub ewh_count: usize,
    pub ac: AcRanges,
    pub ewh: EwhRanges,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            ac_count: 200,
            ewh_count: 200,
            ac: AcRanges::default(),
            ewh: EwhRanges::default(),
        }
    }
}

impl PopulationSpec {
    pub fn validate(&self) -> Result<()> {
        let a = &self.ac;
        let e = &self.ewh;
        for (name, r) in [
            ("ac.power_kw", a.power_kw),
            ("ac.resistance", a.resistance),
            ("ac.capacitance", a.capacitance),
            ("ac.efficiency", a.efficiency),
            ("ac.setpoint", a.setpoint),
            ("ac.deadband", a.deadband),
            ("ac.ambient", a.ambient),
            ("ewh.power_kw", e.power_kw),
            ("ewh.tank_capacitance", e.tank_capacitance),
            ("ewh.flow_rate", e.flow_rate),
            ("ewh.specific_heat", e.specific_heat),
            ("ewh.loss_coeff", e.loss_coeff),
            ("ewh.inlet_temp", e.inlet_temp),
            ("ewh.ambient", e.ambient),
            ("ewh.setpoint", e.setpoint),
            ("ewh.deadband", e.deadband),
        ] {
            r.check(name)?;
        }
        if self.ac_count + self.ewh_count > u32::MAX as usize {
            return Err(Error::Config("population too large for 32-bit ids".into()));
        }
        Ok(())
    }
}

/// Frequency band limits per service direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bands {
    pub nominal_hz: f64,
    /// `[ω_l, ω_u]` for under-frequency response.
    pub under_hz: Range,
    /// `[ω_l, ω_u]` for over-frequency response.
    pub over_hz: Range,
}

impl Default for Bands {
    fn default() -> Self {
        Bands {
            nominal_hz: 60.0,
            under_hz: Range::new(59.7, 59.995),
            over_hz: Range::new(60.005, 60.3),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Start,
    Middle,
    End,
    /// Onset drawn per run, uniform between the start and end placements.
    Uniform,
}

impl Placement {
    pub const ALL: [Placement; 3] = [Placement::Start, Placement::Middle, Placement::End];

    /// Event onset as a fraction of the window; `None` when drawn per run.
    pub fn fraction(self) -> Option<f64> {
        match self {
            Placement::Start => Some(0.05),
            Placement::Middle => Some(0.5),
            Placement::End => Some(0.9),
            Placement::Uniform => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Placement::Start => "start",
            Placement::Middle => "middle",
            Placement::End => "end",
            Placement::Uniform => "uniform",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Allocation {
    /// Fitness-ordered commitment.
    Priority,
    /// Same pipeline with the order replaced by a seeded uniform shuffle.
    Shuffled,
}

impl Allocation {
    pub fn as_str(self) -> &'static str {
        match self {
            Allocation::Priority => "priority",
            Allocation::Shuffled => "shuffled",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Under,
    Over,
    Cascade,
}

macro_rules! lowercase_from_str {
    ($($t:ty => [$($v:ident),*]),*) => {$(
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                $(if s.eq_ignore_ascii_case(stringify!($v)) {
                    return Ok(<$t>::$v);
                })*
                Err(Error::Config(format!("unknown {} `{s}`", stringify!($t))))
            }
        }
    )*};
}

lowercase_from_str!(
    Placement => [Start, Middle, End, Uniform],
    Allocation => [Priority, Shuffled],
    EventKind => [Under, Over, Cascade]
);

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Random event generator. Each run draws one primary dip and
/// `follow_ups` further dips, each starting `follow_up_gap_s` after the
/// previous nadir (cascade only).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticEvents {
    pub kind: EventKind,
    /// Hz below (or above) nominal.
    pub nadir_hz: Range,
    /// Hz/s
    pub rocof_hz_per_s: Range,
    /// s
    pub recovery_s: Range,
    /// Post-event offset as a fraction of the nadir deviation.
    pub settle_fraction: Range,
    pub follow_ups: usize,
    /// s
    pub follow_up_gap_s: Range,
    /// Hz
    pub follow_up_nadir_hz: Range,
    /// Trace sample spacing, s.
    pub trace_dt_s: f64,
}

impl Default for SyntheticEvents {
    fn default() -> Self {
        SyntheticEvents {
            kind: EventKind::Cascade,
            nadir_hz: Range::new(0.31, 0.36),
            rocof_hz_per_s: Range::new(0.03, 0.06),
            recovery_s: Range::new(20.0, 40.0),
            settle_fraction: Range::new(0.3, 0.5),
            follow_ups: 1,
            follow_up_gap_s: Range::new(5.0, 15.0),
            follow_up_nadir_hz: Range::new(0.08, 0.15),
            trace_dt_s: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum TraceSource {
    Synthetic(SyntheticEvents),
    /// A recorded `time_s,freq_hz` file; time zero is the window start.
    File {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        period_s: Option<f64>,
    },
}

impl Default for TraceSource {
    fn default() -> Self {
        TraceSource::Synthetic(SyntheticEvents::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeCfg {
    #[default]
    Tracking,
    Latching,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RmvtCfg {
    #[default]
    Nadir,
    Average,
}

/// Everything needed to reproduce a scenario, a sweep or a Monte Carlo table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Master seed. Population, initial states, events and shuffles derive from it.
    pub seed: u64,
    /// Monte Carlo run count.
    pub runs: usize,
    /// Fraction of the guaranteed capacity offered.
    pub commitment: f64,
    /// Commitment tolerance, kW. Absent: the largest committed rating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance_kw: Option<f64>,
    pub window_s: f64,
    pub placement: Placement,
    pub allocation: Allocation,
    /// Controller sampling period, s.
    pub dt_s: f64,
    pub mode: ModeCfg,
    pub rmvt: RmvtCfg,
    /// Quality model rate, 1/s.
    pub quality_beta: f64,
    /// Estimated response delay, s.
    pub quality_delay_s: f64,
    pub bands: Bands,
    pub population: PopulationSpec,
    pub trace: TraceSource,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 1,
            runs: 50,
            commitment: 0.6,
            tolerance_kw: None,
            window_s: 300.0,
            placement: Placement::Middle,
            allocation: Allocation::Priority,
            dt_s: 1.0,
            mode: ModeCfg::Tracking,
            rmvt: RmvtCfg::Nadir,
            quality_beta: 0.1,
            quality_delay_s: 0.0,
            bands: Bands::default(),
            population: PopulationSpec::default(),
            trace: TraceSource::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Sets one field by its dotted path, e.g. `population.ac.power_kw` to
    /// `[5, 6]` or `placement` to `end`. Values are TOML literals; a bare word
    /// is taken as a string. Only the shape is checked here, so overrides that
    /// must change together can be applied in any order; call
    /// [`validate`](Self::validate) after the last one.
    pub fn set(&mut self, path: &str, value: &str) -> Result<()> {
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));
        let mut keys = path.split('.').peekable();
        let mut node = &mut root;
        while let Some(key) = keys.next() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("`{path}`: `{key}` is not inside a table")))?;
            if keys.peek().is_none() {
                table.insert(key.to_string(), parsed);
                break;
            }
            node = table
                .get_mut(key)
                .ok_or_else(|| Error::Config(format!("`{path}`: no field `{key}`")))?;
        }
        *self = root.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.commitment.is_finite() && self.commitment > 0.0) {
            return bad(format!("commitment must be > 0, got {}", self.commitment));
        }
        if self.runs == 0 {
            return bad("runs must be >= 1".into());
        }
        if !(self.window_s.is_finite() && self.window_s > 0.0) {
            return bad(format!("window_s must be > 0, got {}", self.window_s));
        }
        if !(self.dt_s.is_finite() && self.dt_s > 0.0) {
            return bad(format!("dt_s must be > 0, got {}", self.dt_s));
        }
        SimConfig::new(self.dt_s, self.window_s).steps()?;
        if let Some(t) = self.tolerance_kw {
            if !(t.is_finite() && t >= 0.0) {
                return bad(format!("tolerance_kw must be >= 0, got {t}"));
            }
        }
        self.quality().validate()?;
        self.population.validate()?;
        self.bands.under_hz.check("bands.under_hz")?;
        self.bands.over_hz.check("bands.over_hz")?;
        self.curve(Service::UnderFreq, 1.0).validate()?;
        self.curve(Service::OverFreq, 1.0).validate()?;
        if let TraceSource::Synthetic(ev) = &self.trace {
            for (name, r) in [
                ("trace.nadir_hz", ev.nadir_hz),
                ("trace.rocof_hz_per_s", ev.rocof_hz_per_s),
                ("trace.recovery_s", ev.recovery_s),
                ("trace.settle_fraction", ev.settle_fraction),
                ("trace.follow_up_gap_s", ev.follow_up_gap_s),
                ("trace.follow_up_nadir_hz", ev.follow_up_nadir_hz),
            ] {
                r.check(name)?;
            }
            if !(ev.trace_dt_s.is_finite() && ev.trace_dt_s > 0.0) {
                return bad(format!("trace.trace_dt_s must be > 0, got {}", ev.trace_dt_s));
            }
            if ev.kind != EventKind::Cascade && ev.follow_ups > 0 {
                return bad("follow_ups requires a cascade event".into());
            }
        }
        Ok(())
    }

    pub fn quality(&self) -> QualityParams<f64> {
        QualityParams {
            beta: self.quality_beta,
            delay_estimate: self.quality_delay_s,
        }
    }

    pub fn service(&self) -> Service {
        match &self.trace {
            TraceSource::Synthetic(SyntheticEvents { kind: EventKind::Over, .. }) => Service::OverFreq,
            _ => Service::UnderFreq,
        }
    }

    pub fn curve(&self, service: Service, capacity: f64) -> ResponseCurveSpec<f64> {
        let mut spec = match service {
            Service::UnderFreq => ResponseCurveSpec::under(self.bands.under_hz.lo, self.bands.under_hz.hi, capacity),
            Service::OverFreq => ResponseCurveSpec::over(self.bands.over_hz.lo, self.bands.over_hz.hi, capacity),
        };
        spec.omega_0 = self.bands.nominal_hz;
        spec
    }

    pub fn sim_config(&self) -> SimConfig<f64> {
        SimConfig {
            dt: self.dt_s,
            window: self.window_s,
            mode: match self.mode {
                ModeCfg::Tracking => ResponseMode::Tracking,
                ModeCfg::Latching => ResponseMode::Latching,
            },
        }
    }

    pub fn rmvt_mode(&self) -> RmvtMode {
        match self.rmvt {
            RmvtCfg::Nadir => RmvtMode::AtNadir,
            RmvtCfg::Average => RmvtMode::TimeAveraged,
        }
    }

    fn tolerance(&self) -> Tolerance<f64> {
        self.tolerance_kw.map_or(Tolerance::LargestCommitted, Tolerance::Fixed)
    }
}

/// Purposes a sub-seed can be derived for.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    Population = 1,
    InitialState = 2,
    Event = 3,
    Shuffle = 4,
}

/// Derives an independent seed for `(stream, index)` from the master seed.
pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    // splitmix64 finaliser over a simple combination
    let mut z = master
        .wrapping_add((stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws a population. AC ids come first, then water heaters; ids start at 0.
pub fn generate_population(spec: &PopulationSpec, seed: u64) -> Result<Vec<DeviceRecord<f64>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.ac_count + spec.ewh_count);
    let a = &spec.ac;
    for _ in 0..spec.ac_count {
        let params = DeviceParams::Ac(AcParams {
            power_rating: a.power_kw.sample(&mut rng),
            thermal_resistance: a.resistance.sample(&mut rng),
            thermal_capacitance: a.capacitance.sample(&mut rng),
            efficiency: a.efficiency.sample(&mut rng),
            setpoint: a.setpoint.sample(&mut rng),
            deadband: a.deadband.sample(&mut rng),
            ambient: a.ambient.sample(&mut rng),
        });
        out.push(new_device(out.len() as u32, params, &mut rng)?);
    }
    let e = &spec.ewh;
    for _ in 0..spec.ewh_count {
        let params = DeviceParams::Ewh(EwhParams {
            power_rating: e.power_kw.sample(&mut rng),
            tank_capacitance: e.tank_capacitance.sample(&mut rng),
            flow_rate: e.flow_rate.sample(&mut rng),
            specific_heat: e.specific_heat.sample(&mut rng),
            loss_coeff: e.loss_coeff.sample(&mut rng),
            inlet_temp: e.inlet_temp.sample(&mut rng),
            ambient: e.ambient.sample(&mut rng),
            setpoint: e.setpoint.sample(&mut rng),
            deadband: e.deadband.sample(&mut rng),
        });
        out.push(new_device(out.len() as u32, params, &mut rng)?);
    }
    Ok(out)
}

fn new_device<R: Rng>(id: u32, params: DeviceParams<f64>, rng: &mut R) -> Result<DeviceRecord<f64>> {
    params.validate()?;
    let mut dev = DeviceRecord::new(id, params, params.setpoint(), false);
    randomize_state(&mut dev, rng);
    Ok(dev)
}

/// Temperature uniform in the deadband, on with the steady-state duty cycle.
pub fn randomize_state<R: Rng>(dev: &mut DeviceRecord<f64>, rng: &mut R) {
    let lo = dev.params.lower_edge();
    let hi = dev.params.upper_edge();
    dev.temp = if lo < hi { rng.gen_range(lo..=hi) } else { lo };
    dev.on = rng.gen_bool(dev.duty_cycle().clamp(0.0, 1.0));
    dev.threshold = None;
    dev.responded = false;
}

/// Copy of `population` with fresh initial conditions for run `run`.
pub fn reinitialize(population: &[DeviceRecord<f64>], master: u64, run: u64) -> Vec<DeviceRecord<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, Stream::InitialState, run));
    population
        .iter()
        .map(|d| {
            let mut d = *d;
            randomize_state(&mut d, &mut rng);
            d
        })
        .collect()
}

/// Event for run `run`, placed at `placement` within a window of `window_s`.
pub fn draw_event(ev: &SyntheticEvents, master: u64, run: u64, window_s: f64, placement: Placement) -> Result<EventSpec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master, Stream::Event, run));
    let dip = |start: f64, nadir: Range, rng: &mut ChaCha8Rng| {
        let n = nadir.sample(rng);
        Dip {
            start_time: start,
            nadir_deviation: n,
            initial_rocof: ev.rocof_hz_per_s.sample(rng),
            recovery_time_constant: ev.recovery_s.sample(rng),
            settle_offset: ev.settle_fraction.sample(rng) * n,
        }
    };
    let (lo, hi) = (Placement::Start.fraction().unwrap(), Placement::End.fraction().unwrap());
    let fraction = match placement.fraction() {
        Some(f) => f,
        None => rng.gen_range(lo..=hi),
    };
    let first = dip(fraction * window_s, ev.nadir_hz, &mut rng);
    let spec = match ev.kind {
        EventKind::Under => EventSpec::UnderFreq(first),
        EventKind::Over => EventSpec::OverFreq(first),
        EventKind::Cascade => {
            let mut dips = vec![first];
            for _ in 0..ev.follow_ups {
                let prev = dips.last().unwrap().nadir_time();
                let gap = ev.follow_up_gap_s.sample(&mut rng);
                dips.push(dip(prev + gap, ev.follow_up_nadir_hz, &mut rng));
            }
            EventSpec::Cascade(dips)
        }
    };
    spec.validate()?;
    Ok(spec)
}

/// Frequency trace for run `run` covering at least the window.
pub fn build_trace(cfg: &ScenarioConfig, run: u64, window_s: f64, placement: Placement) -> Result<FrequencyTrace<f64>> {
    match &cfg.trace {
        TraceSource::Synthetic(ev) => {
            let spec = draw_event(ev, cfg.seed, run, window_s, placement)?;
            let span = spec.required_duration().max(window_s + cfg.dt_s);
            let duration = (span / ev.trace_dt_s).ceil() * ev.trace_dt_s;
            synthesize(&spec, cfg.bands.nominal_hz, duration, ev.trace_dt_s)
        }
        TraceSource::File { path, period_s } => ingest(path, *period_s),
    }
}

/// Everything a single scenario produces.
#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub reports: Vec<FitnessReport<f64>>,
    pub guaranteed_capacity: f64,
    pub selection: Selection<f64>,
    pub assignment: ThresholdAssignment<f64>,
    pub trace: FrequencyTrace<f64>,
    pub result: SimulationResult<f64>,
    /// RMVT in the configured mode; `None` if no response was requested.
    pub rmvt: Option<f64>,
}

/// Fitness, ordering, selection and thresholds for a population at the
/// start of a window.
#[derive(Clone, Debug)]
pub struct Allocated {
    pub reports: Vec<FitnessReport<f64>>,
    pub guaranteed_capacity: f64,
    pub selection: Selection<f64>,
    pub assignment: ThresholdAssignment<f64>,
}

pub fn allocate(cfg: &ScenarioConfig, population: &[DeviceRecord<f64>], run: u64) -> Result<Allocated> {
    let service = cfg.service();
    let reports = fitness_table(population, service, cfg.window_s, &cfg.quality())?;
    let cap = max_guaranteed_capacity(&reports);
    if cap <= 0.0 {
        return Err(Error::Undefined("no device is certain to respond in this window".into()));
    }
    let order = match cfg.allocation {
        Allocation::Priority => prioritize(&reports)?,
        Allocation::Shuffled => shuffled(&reports, derive_seed(cfg.seed, Stream::Shuffle, run))?,
    };
    let selection = select_committed(&order, cfg.commitment * cap, cfg.tolerance())?;
    let assignment = assign_thresholds(&selection.committed, &cfg.curve(service, selection.committed_capacity))?;
    Ok(Allocated { reports, guaranteed_capacity: cap, selection, assignment })
}

/// Runs the full pipeline on a given population with the event and shuffle
/// of run index `run`. The population's current state is used as is.
pub fn run_with_population(cfg: &ScenarioConfig, population: &[DeviceRecord<f64>], run: u64) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let Allocated { reports, guaranteed_capacity, selection, assignment } = allocate(cfg, population, run)?;
    let trace = build_trace(cfg, run, cfg.window_s, cfg.placement)?;
    let result = sim::run(population, &assignment, &trace, &cfg.sim_config())?;
    let rmvt = compute_rmvt(&result, cfg.rmvt_mode()).ok();
    Ok(ScenarioOutcome {
        reports,
        guaranteed_capacity,
        selection,
        assignment,
        trace,
        result,
        rmvt,
    })
}

/// Single scenario from the config alone.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let population = generate_population(&cfg.population, derive_seed(cfg.seed, Stream::Population, 0))?;
    run_with_population(cfg, &population, 0)
}

/// RMVT of Monte Carlo run `run`; `None` when no response was requested.
fn one_run(cfg: &ScenarioConfig, base: &[DeviceRecord<f64>], run: u64) -> Result<Option<f64>> {
    let population = reinitialize(base, cfg.seed, run);
    Ok(run_with_population(cfg, &population, run)?.rmvt)
}

/// Mean and sample standard deviation of the defined RMVTs over `runs` runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    /// Runs with a defined RMVT.
    pub runs: usize,
}

impl Stats {
    fn of(values: &[Option<f64>]) -> Stats {
        let v: Vec<f64> = values.iter().flatten().copied().collect();
        let n = v.len();
        if n == 0 {
            return Stats { mean: f64::NAN, std: f64::NAN, runs: 0 };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stats { mean, std, runs: n }
    }
}

fn ensemble(cfg: &ScenarioConfig, base: &[DeviceRecord<f64>], runs: usize) -> Result<Stats> {
    let values = (0..runs as u64)
        .into_par_iter()
        .map(|r| one_run(cfg, base, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(Stats::of(&values))
}

fn base_population(cfg: &ScenarioConfig) -> Result<Vec<DeviceRecord<f64>>> {
    generate_population(&cfg.population, derive_seed(cfg.seed, Stream::Population, 0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub level: f64,
    pub stats: Stats,
}

pub const SWEEP_HEADER: &str = "level_pct,mean_rmvt_pct,std_rmvt_pct,runs";

/// Monte Carlo mean RMVT at each commitment level. Runs are paired across
/// levels: run `r` sees the same initial state and event at every level.
pub fn commitment_sweep(cfg: &ScenarioConfig, levels: &[f64]) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    if let Some(&l) = levels.iter().find(|&&l| !(l > 0.0 && l <= 1.3)) {
        return Err(Error::Config(format!("commitment level {l} outside (0, 1.3]")));
    }
    let base = base_population(cfg)?;
    levels
        .iter()
        .map(|&level| {
            let mut c = cfg.clone();
            c.commitment = level;
            Ok(SweepRow { level, stats: ensemble(&c, &base, cfg.runs)? })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{:.1},{:.6},{:.6},{}\n",
            100.0 * r.level,
            100.0 * r.stats.mean,
            100.0 * r.stats.std,
            r.stats.runs
        ));
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloCell {
    pub window_s: f64,
    pub placement: Placement,
    pub priority: Stats,
    pub shuffled: Stats,
}

pub const MONTECARLO_HEADER: &str =
    "window_min,event_time,priority_mean_rmvt_pct,priority_std_rmvt_pct,shuffled_mean_rmvt_pct,shuffled_std_rmvt_pct,priority_runs,shuffled_runs";

pub const MONTECARLO_WINDOWS_S: [f64; 2] = [300.0, 900.0];

/// Window × event-time grid of mean RMVT for both allocation modes. Both
/// modes see the same population, initial states and events per run.
pub fn montecarlo(cfg: &ScenarioConfig, n_runs: usize) -> Result<Vec<MonteCarloCell>> {
    if n_runs == 0 {
        return Err(Error::Config("n_runs must be >= 1".into()));
    }
    cfg.validate()?;
    let base = base_population(cfg)?;
    let mut cells = Vec::new();
    for window_s in MONTECARLO_WINDOWS_S {
        for placement in Placement::ALL {
            let mut c = cfg.clone();
            c.window_s = window_s;
            c.placement = placement;
            c.allocation = Allocation::Priority;
            let priority = ensemble(&c, &base, n_runs)?;
            c.allocation = Allocation::Shuffled;
            let shuffled = ensemble(&c, &base, n_runs)?;
            cells.push(MonteCarloCell { window_s, placement, priority, shuffled });
        }
    }
    Ok(cells)
}

pub fn montecarlo_csv(cells: &[MonteCarloCell]) -> String {
    let mut s = format!("{MONTECARLO_HEADER}\n");
    for c in cells {
        s.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{:.6},{},{}\n",
            c.window_s / 60.0,
            c.placement,
            100.0 * c.priority.mean,
            100.0 * c.priority.std,
            100.0 * c.shuffled.mean,
            100.0 * c.shuffled.std,
            c.priority.runs,
            c.shuffled.runs
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let cfg = ScenarioConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);

        let mut file_cfg = cfg.clone();
        file_cfg.trace = TraceSource::File { path: "trace.csv".into(), period_s: Some(0.5) };
        file_cfg.tolerance_kw = Some(3.0);
        let text = file_cfg.to_toml().unwrap();
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), file_cfg);
    }

    #[test]
    fn dotted_overrides() {
        let mut cfg = ScenarioConfig::default();
        cfg.set("commitment", "0.8").unwrap();
        cfg.set("placement", "end").unwrap();
        cfg.set("population.ac.power_kw", "[5.0, 6.0]").unwrap();
        cfg.set("trace.follow_ups", "2").unwrap();
        assert_eq!(cfg.commitment, 0.8);
        assert_eq!(cfg.placement, Placement::End);
        assert_eq!(cfg.population.ac.power_kw, Range::new(5.0, 6.0));
        assert!(matches!(&cfg.trace, TraceSource::Synthetic(e) if e.follow_ups == 2));
        cfg.set("commitment", "0").unwrap();
        assert!(cfg.validate().is_err());
        cfg.set("commitment", "0.8").unwrap();
        assert!(cfg.set("population.nope.x", "1").is_err());
        assert!(cfg.set("population.ac.power_kw", "[6.0, 5.0]").is_err());
        assert_eq!(cfg.commitment, 0.8);
        // a cascade-only field may be cleared after the kind changes
        cfg.set("trace.kind", "under").unwrap();
        cfg.set("trace.follow_ups", "0").unwrap();
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_degenerate_config() {
        assert!(ScenarioConfig { commitment: 0.0, ..Default::default() }.validate().is_err());
        assert!(ScenarioConfig { runs: 0, ..Default::default() }.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.population.ac.setpoint = Range { lo: 74.0, hi: 70.0 };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_population() {
        let spec = PopulationSpec { ac_count: 0, ewh_count: 0, ..Default::default() };
        assert!(generate_population(&spec, 3).unwrap().is_empty());
    }

    #[test]
    fn population_is_seeded() {
        let spec = PopulationSpec { ac_count: 20, ewh_count: 20, ..Default::default() };
        let a = generate_population(&spec, 11).unwrap();
        assert_eq!(a, generate_population(&spec, 11).unwrap());
        assert_ne!(a, generate_population(&spec, 12).unwrap());
        for d in &a {
            assert!(d.temp >= d.params.lower_edge() && d.temp <= d.params.upper_edge());
        }
    }

    #[test]
    fn seeds_differ_by_stream_and_index() {
        let s = [
            derive_seed(1, Stream::Event, 0),
            derive_seed(1, Stream::Event, 1),
            derive_seed(1, Stream::Shuffle, 0),
            derive_seed(2, Stream::Event, 0),
        ];
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                assert_ne!(s[i], s[j]);
            }
        }
    }

    #[test]
    fn event_placement() {
        let ev = SyntheticEvents::default();
        for p in Placement::ALL {
            let spec = draw_event(&ev, 5, 0, 300.0, p).unwrap();
            assert_eq!(spec.dips()[0].start_time, p.fraction().unwrap() * 300.0);
            assert_eq!(spec.dips().len(), 2);
        }
        let starts: Vec<f64> = (0..20)
            .map(|r| draw_event(&ev, 5, r, 300.0, Placement::Uniform).unwrap().dips()[0].start_time)
            .collect();
        assert!(starts.iter().all(|&t| (15.0..=270.0).contains(&t)));
        assert!(starts.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn sweep_rejects_bad_levels() {
        let cfg = ScenarioConfig::default();
        assert!(commitment_sweep(&cfg, &[0.0]).is_err());
        assert!(commitment_sweep(&cfg, &[1.4]).is_err());
    }
}
