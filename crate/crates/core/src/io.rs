//! Comma-separated file formats.
//!
//! Population file columns (one header line, one device per row; columns not
//! used by a device class are left empty):
//!
//! ```text
//! id,kind,power_kw,setpoint_f,deadband_f,ambient_f,
//! resistance_f_per_kw,capacitance_kwh_per_f,efficiency,
//! tank_capacitance_kwh_per_f,flow_rate_lb_per_h,specific_heat_kwh_per_lb_f,
//! loss_coeff_kw_per_f,inlet_temp_f,temp_f,on
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::allocation::ThresholdAssignment;
use crate::device::{AcParams, DeviceKind, DeviceParams, DeviceRecord, EwhParams};
use crate::error::{invalid, Error, Result};
use crate::event::FrequencyTrace;
use crate::fitness::FitnessReport;
use crate::scalar::Scalar;
use crate::sim::{SimulationResult, SamplingErrorRow};

pub const POPULATION_HEADER: &str = "id,kind,power_kw,setpoint_f,deadband_f,ambient_f,resistance_f_per_kw,capacitance_kwh_per_f,efficiency,tank_capacitance_kwh_per_f,flow_rate_lb_per_h,specific_heat_kwh_per_lb_f,loss_coeff_kw_per_f,inlet_temp_f,temp_f,on";
pub const FITNESS_HEADER: &str = "device_id,service,availability,quality,fitness";
pub const ASSIGNMENT_HEADER: &str = "rank,device_id,power_kw,fitness,threshold_hz";
pub const TRACE_HEADER: &str = "time_s,freq_hz";
pub const SERIES_HEADER: &str = "t_s,freq_hz,p_sigma_kw,target_kw,achieved_kw";
pub const SWITCH_HEADER: &str = "t_s,device_id,cause,state";
pub const SAMPLING_HEADER: &str = "dt_s,peak_error,rocof_at_crossing_hz_per_s,estimate";

#[derive(Debug, Serialize, Deserialize)]
struct PopulationRow {
    id: u32,
    kind: String,
    power_kw: f64,
    setpoint_f: f64,
    deadband_f: f64,
    ambient_f: f64,
    resistance_f_per_kw: Option<f64>,
    capacitance_kwh_per_f: Option<f64>,
    efficiency: Option<f64>,
    tank_capacitance_kwh_per_f: Option<f64>,
    flow_rate_lb_per_h: Option<f64>,
    specific_heat_kwh_per_lb_f: Option<f64>,
    loss_coeff_kw_per_f: Option<f64>,
    inlet_temp_f: Option<f64>,
    temp_f: f64,
    on: u8,
}

fn opt<S: Scalar>(v: S) -> Option<f64> {
    Some(v.as_f64())
}

impl PopulationRow {
    fn from_device<S: Scalar>(d: &DeviceRecord<S>) -> Self {
        let mut row = PopulationRow {
            id: d.id,
            kind: d.kind().as_str().to_string(),
            power_kw: d.power_rating().as_f64(),
            setpoint_f: d.params.setpoint().as_f64(),
            deadband_f: d.params.deadband().as_f64(),
            ambient_f: 0.0,
            resistance_f_per_kw: None,
            capacitance_kwh_per_f: None,
            efficiency: None,
            tank_capacitance_kwh_per_f: None,
            flow_rate_lb_per_h: None,
            specific_heat_kwh_per_lb_f: None,
            loss_coeff_kw_per_f: None,
            inlet_temp_f: None,
            temp_f: d.temp.as_f64(),
            on: d.on as u8,
        };
        match &d.params {
            DeviceParams::Ac(p) => {
                row.ambient_f = p.ambient.as_f64();
                row.resistance_f_per_kw = opt(p.thermal_resistance);
                row.capacitance_kwh_per_f = opt(p.thermal_capacitance);
                row.efficiency = opt(p.efficiency);
            }
            DeviceParams::Ewh(p) => {
                row.ambient_f = p.ambient.as_f64();
                row.tank_capacitance_kwh_per_f = opt(p.tank_capacitance);
                row.flow_rate_lb_per_h = opt(p.flow_rate);
                row.specific_heat_kwh_per_lb_f = opt(p.specific_heat);
                row.loss_coeff_kw_per_f = opt(p.loss_coeff);
                row.inlet_temp_f = opt(p.inlet_temp);
            }
        }
        row
    }

    fn into_device<S: Scalar>(self, line: usize) -> Result<DeviceRecord<S>> {
        let need = |name: &'static str, v: Option<f64>| {
            v.map(S::lit).ok_or_else(|| Error::Parse {
                line,
                reason: format!("missing `{name}`"),
            })
        };
        let kind: DeviceKind = self.kind.parse()?;
        let params = match kind {
            DeviceKind::Ac => DeviceParams::Ac(AcParams {
                power_rating: S::lit(self.power_kw),
                thermal_resistance: need("resistance_f_per_kw", self.resistance_f_per_kw)?,
                thermal_capacitance: need("capacitance_kwh_per_f", self.capacitance_kwh_per_f)?,
                efficiency: need("efficiency", self.efficiency)?,
                setpoint: S::lit(self.setpoint_f),
                deadband: S::lit(self.deadband_f),
                ambient: S::lit(self.ambient_f),
            }),
            DeviceKind::Ewh => DeviceParams::Ewh(EwhParams {
                power_rating: S::lit(self.power_kw),
                tank_capacitance: need("tank_capacitance_kwh_per_f", self.tank_capacitance_kwh_per_f)?,
                flow_rate: need("flow_rate_lb_per_h", self.flow_rate_lb_per_h)?,
                specific_heat: need("specific_heat_kwh_per_lb_f", self.specific_heat_kwh_per_lb_f)?,
                loss_coeff: need("loss_coeff_kw_per_f", self.loss_coeff_kw_per_f)?,
                inlet_temp: need("inlet_temp_f", self.inlet_temp_f)?,
                ambient: S::lit(self.ambient_f),
                setpoint: S::lit(self.setpoint_f),
                deadband: S::lit(self.deadband_f),
            }),
        };
        let on = match self.on {
            0 => false,
            1 => true,
            v => return Err(Error::Parse { line, reason: format!("on must be 0 or 1, got {v}") }),
        };
        let dev = DeviceRecord::new(self.id, params, S::lit(self.temp_f), on);
        dev.validate().map_err(|e| Error::Parse { line, reason: e.to_string() })?;
        Ok(dev)
    }
}

pub fn write_population<S: Scalar, W: Write>(w: W, population: &[DeviceRecord<S>]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for d in population {
        out.serialize(PopulationRow::from_device(d))?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_population_from<S: Scalar, R: std::io::Read>(r: R) -> Result<Vec<DeviceRecord<S>>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<PopulationRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse { line, reason: e.to_string() })?;
        let dev = row.into_device(line)?;
        if !seen.insert(dev.id) {
            return Err(Error::DuplicateDevice(dev.id));
        }
        out.push(dev);
    }
    Ok(out)
}

pub fn read_population<S: Scalar>(path: impl AsRef<Path>) -> Result<Vec<DeviceRecord<S>>> {
    read_population_from(std::fs::File::open(path)?)
}

pub fn write_fitness<S: Scalar, W: Write>(mut w: W, reports: &[FitnessReport<S>]) -> Result<()> {
    writeln!(w, "{FITNESS_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.device_id,
            r.service.as_str(),
            r.availability,
            r.quality,
            r.fitness
        )?;
    }
    Ok(())
}

pub fn write_assignment<S: Scalar, W: Write>(mut w: W, a: &ThresholdAssignment<S>) -> Result<()> {
    writeln!(w, "{ASSIGNMENT_HEADER}")?;
    for (rank, d) in a.devices.iter().enumerate() {
        writeln!(w, "{},{},{},{},{}", rank + 1, d.device_id, d.power_rating, d.fitness, d.threshold)?;
    }
    Ok(())
}

pub fn write_trace<S: Scalar, W: Write>(mut w: W, trace: &FrequencyTrace<S>) -> Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for (t, f) in trace.samples() {
        writeln!(w, "{t},{f}")?;
    }
    Ok(())
}

pub fn write_series<S: Scalar, W: Write>(mut w: W, r: &SimulationResult<S>) -> Result<()> {
    writeln!(w, "{SERIES_HEADER}")?;
    for p in &r.series {
        writeln!(w, "{},{},{},{},{}", p.time, p.freq, p.p_sigma, p.target, p.achieved)?;
    }
    Ok(())
}

pub fn write_switch_log<S: Scalar, W: Write>(mut w: W, r: &SimulationResult<S>) -> Result<()> {
    writeln!(w, "{SWITCH_HEADER}")?;
    for s in &r.switches {
        writeln!(w, "{},{},{},{}", s.time, s.device_id, s.cause.as_str(), if s.on { "on" } else { "off" })?;
    }
    Ok(())
}

pub fn write_sampling_errors<S: Scalar, W: Write>(mut w: W, rows: &[SamplingErrorRow<S>]) -> Result<()> {
    writeln!(w, "{SAMPLING_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.dt, r.peak_error, r.rocof_at_crossing, r.estimate)?;
    }
    Ok(())
}

/// One-record summary of a simulation, as TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub rmvt: Option<f64>,
    pub requested_kw: f64,
    pub provided_kw: f64,
    pub event_count: usize,
    pub committed_kw: f64,
    pub committed_devices: usize,
}

impl RunSummary {
    pub fn new<S: Scalar>(r: &SimulationResult<S>, committed_devices: usize) -> Self {
        RunSummary {
            rmvt: r.rmvt.map(Scalar::as_f64),
            requested_kw: r.events.iter().map(|e| e.requested.as_f64()).sum(),
            provided_kw: r.events.iter().map(|e| e.provided.as_f64()).sum(),
            event_count: r.events.len(),
            committed_kw: r.committed_capacity.as_f64(),
            committed_devices,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| invalid("summary", e.to_string()))
    }
}
