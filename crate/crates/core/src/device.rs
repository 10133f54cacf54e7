//! Switching thermostatic loads: air-conditioners and electric water-heaters.
//!
//! Both device classes are first-order linear systems in their temperature
//! with a two-valued power input and a hysteresis switch:
//!
//! ```text
//! dx/dt = a x + b + c p,     p ∈ {0, P}
//! p⁺ = 0  if h1 x + h2 ≥  δ/2
//! p⁺ = P  if h1 x + h2 ≤ -δ/2
//! ```
//!
//! Parameters are given in hourly units (kW, kWh/°F, °F/kW, lb/h) and the
//! simulation clock runs in seconds; the conversion happens once, in
//! [`DeviceRecord::thermal`]. Between switching instants the temperature is
//! advanced with the exact exponential solution, never with an Euler step.
//!
//! Sign conventions of the generic form:
//!
//! | class | x   | h1 | h2     | turns off at | turns on at |
//! |-------|-----|----|--------|--------------|-------------|
//! | AC    | T   | -1 | T_set  | T_set - δ/2  | T_set + δ/2 |
//! | EWH   | T_w | +1 | -T_set | T_set + δ/2  | T_set - δ/2 |

use crate::error::{invalid, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceKind {
    Ac,
    Ewh,
}

impl DeviceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DeviceKind::Ac => "AC",
            DeviceKind::Ewh => "EWH",
        }
    }
}

impl std::str::FromStr for DeviceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "AC" => Ok(DeviceKind::Ac),
            "EWH" => Ok(DeviceKind::Ewh),
            other => Err(invalid("kind", format!("unknown device kind `{other}`"))),
        }
    }
}

/// Residential air-conditioner (cooling, single thermal mass).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcParams<S> {
    /// kW
    pub power_rating: S,
    /// °F/kW
    pub thermal_resistance: S,
    /// kWh/°F
    pub thermal_capacitance: S,
    pub efficiency: S,
    /// °F
    pub setpoint: S,
    /// °F, full width of the hysteresis band
    pub deadband: S,
    /// °F, held constant over a control window
    pub ambient: S,
}

/// Electric water-heater, one-mass tank model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EwhParams<S> {
    /// kW
    pub power_rating: S,
    /// kWh/°F
    pub tank_capacitance: S,
    /// lb/h of hot water drawn (and replaced by inlet water)
    pub flow_rate: S,
    /// kWh/(lb·°F)
    pub specific_heat: S,
    /// kW/°F standby loss
    pub loss_coeff: S,
    /// °F
    pub inlet_temp: S,
    /// °F
    pub ambient: S,
    /// °F
    pub setpoint: S,
    /// °F
    pub deadband: S,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeviceParams<S> {
    Ac(AcParams<S>),
    Ewh(EwhParams<S>),
}

/// Coefficients of the generic switching model in per-second units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenericDeviceParams<S> {
    /// 1/s
    pub a: S,
    /// state units / s
    pub b: S,
    /// state units / (s·kW)
    pub c: S,
    pub h1: S,
    pub h2: S,
    pub delta: S,
    pub power_rating: S,
}

impl<S: Scalar> GenericDeviceParams<S> {
    /// `h1 x + h2`, compared against `±δ/2` by the switching law.
    pub fn switching_output(&self, x: S) -> S {
        self.h1 * x + self.h2
    }

    /// Right-hand side of the state equation at the given discrete state.
    pub fn derivative(&self, x: S, on: bool) -> S {
        let p = if on { self.power_rating } else { S::zero() };
        self.a * x + self.b + self.c * p
    }
}

/// First-order thermal response at a fixed discrete state: the temperature
/// relaxes exponentially toward `eq_on` or `eq_off` at `rate` (1/s).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Thermal<S> {
    pub rate: S,
    pub eq_on: S,
    pub eq_off: S,
}

impl<S: Scalar> Thermal<S> {
    pub fn equilibrium(&self, on: bool) -> S {
        if on {
            self.eq_on
        } else {
            self.eq_off
        }
    }

    /// Exact solution of the linear ODE after `dt` seconds.
    pub fn advance(&self, temp: S, on: bool, dt: S) -> S {
        let eq = self.equilibrium(on);
        eq + (temp - eq) * (-self.rate * dt).exp()
    }
}

impl<S: Scalar> DeviceParams<S> {
    pub fn kind(&self) -> DeviceKind {
        match self {
            DeviceParams::Ac(_) => DeviceKind::Ac,
            DeviceParams::Ewh(_) => DeviceKind::Ewh,
        }
    }

    pub fn power_rating(&self) -> S {
        match self {
            DeviceParams::Ac(p) => p.power_rating,
            DeviceParams::Ewh(p) => p.power_rating,
        }
    }

    pub fn setpoint(&self) -> S {
        match self {
            DeviceParams::Ac(p) => p.setpoint,
            DeviceParams::Ewh(p) => p.setpoint,
        }
    }

    pub fn deadband(&self) -> S {
        match self {
            DeviceParams::Ac(p) => p.deadband,
            DeviceParams::Ewh(p) => p.deadband,
        }
    }

    pub fn lower_edge(&self) -> S {
        self.setpoint() - self.deadband() * S::half()
    }

    pub fn upper_edge(&self) -> S {
        self.setpoint() + self.deadband() * S::half()
    }

    /// Temperature at which the thermostat switches the device on.
    pub fn on_edge(&self) -> S {
        match self {
            DeviceParams::Ac(_) => self.upper_edge(),
            DeviceParams::Ewh(_) => self.lower_edge(),
        }
    }

    /// Temperature at which the thermostat switches the device off.
    pub fn off_edge(&self) -> S {
        match self {
            DeviceParams::Ac(_) => self.lower_edge(),
            DeviceParams::Ewh(_) => self.upper_edge(),
        }
    }

    /// Whether running the device raises the temperature.
    pub fn heats(&self) -> bool {
        matches!(self, DeviceParams::Ewh(_))
    }

    pub fn thermal(&self) -> Thermal<S> {
        let hour = S::seconds_per_hour();
        match self {
            DeviceParams::Ac(p) => {
                let tau_h = p.thermal_capacitance * p.thermal_resistance;
                Thermal {
                    rate: S::one() / (tau_h * hour),
                    eq_on: p.ambient - p.efficiency * p.power_rating * p.thermal_resistance,
                    eq_off: p.ambient,
                }
            }
            DeviceParams::Ewh(p) => {
                let g = p.flow_rate * p.specific_heat + p.loss_coeff;
                let drive = p.flow_rate * p.specific_heat * p.inlet_temp + p.loss_coeff * p.ambient;
                Thermal {
                    rate: g / (p.tank_capacitance * hour),
                    eq_on: (drive + p.power_rating) / g,
                    eq_off: drive / g,
                }
            }
        }
    }

    /// `a(t)` of the water-heater model, in 1/h.
    pub fn ewh_a(p: &EwhParams<S>) -> S {
        (p.flow_rate * p.specific_heat + p.loss_coeff) / p.tank_capacitance
    }

    /// `b(s, t)` of the water-heater model, in °F/h.
    pub fn ewh_b(p: &EwhParams<S>, on: bool) -> S {
        let s = if on { S::one() } else { S::zero() };
        (s * p.power_rating + p.flow_rate * p.specific_heat * p.inlet_temp + p.loss_coeff * p.ambient)
            / p.tank_capacitance
    }

    pub fn generic(&self) -> GenericDeviceParams<S> {
        let hour = S::seconds_per_hour();
        match self {
            DeviceParams::Ac(p) => {
                let cr = p.thermal_capacitance * p.thermal_resistance * hour;
                GenericDeviceParams {
                    a: -S::one() / cr,
                    b: p.ambient / cr,
                    c: -p.efficiency / (p.thermal_capacitance * hour),
                    h1: -S::one(),
                    h2: p.setpoint,
                    delta: p.deadband,
                    power_rating: p.power_rating,
                }
            }
            DeviceParams::Ewh(p) => GenericDeviceParams {
                a: -Self::ewh_a(p) / hour,
                b: Self::ewh_b(p, false) / hour,
                c: S::one() / (p.tank_capacitance * hour),
                h1: S::one(),
                h2: -p.setpoint,
                delta: p.deadband,
                power_rating: p.power_rating,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, v: S| {
            if v.is_finite() && v > S::zero() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        match self {
            DeviceParams::Ac(p) => {
                pos("power_rating", p.power_rating)?;
                pos("thermal_resistance", p.thermal_resistance)?;
                pos("thermal_capacitance", p.thermal_capacitance)?;
                pos("efficiency", p.efficiency)?;
                pos("deadband", p.deadband)?;
                if !(p.setpoint.is_finite() && p.ambient.is_finite()) {
                    return Err(invalid("setpoint", "non-finite temperature"));
                }
                if self.upper_edge() >= p.ambient {
                    return Err(invalid(
                        "ambient",
                        format!("AC never cycles: ambient {} not above deadband top {}", p.ambient, self.upper_edge()),
                    ));
                }
            }
            DeviceParams::Ewh(p) => {
                pos("power_rating", p.power_rating)?;
                pos("tank_capacitance", p.tank_capacitance)?;
                pos("specific_heat", p.specific_heat)?;
                pos("loss_coeff", p.loss_coeff)?;
                pos("deadband", p.deadband)?;
                if !(p.flow_rate.is_finite() && p.flow_rate >= S::zero()) {
                    return Err(invalid("flow_rate", format!("must be finite and >= 0, got {}", p.flow_rate)));
                }
                if !(p.setpoint.is_finite() && p.ambient.is_finite() && p.inlet_temp.is_finite()) {
                    return Err(invalid("setpoint", "non-finite temperature"));
                }
                if p.inlet_temp >= self.lower_edge() {
                    return Err(invalid(
                        "inlet_temp",
                        format!("inlet {} must be below deadband bottom {}", p.inlet_temp, self.lower_edge()),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Returns the time for a first-order response starting at `temp` to reach
/// `edge` while relaxing toward `eq`. Zero when the edge is already reached,
/// infinite when the equilibrium lies short of the edge.
fn time_to_reach<S: Scalar>(temp: S, edge: S, eq: S, rate: S, rising: bool) -> S {
    let reached = if rising { temp >= edge } else { temp <= edge };
    if reached {
        return S::zero();
    }
    let beyond = if rising { eq > edge } else { eq < edge };
    if !beyond {
        return S::infinity();
    }
    ((temp - eq) / (edge - eq)).ln() / rate
}

/// One switching load together with its continuous and discrete state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceRecord<S> {
    pub id: u32,
    pub params: DeviceParams<S>,
    /// °F
    pub temp: S,
    pub on: bool,
    /// Frequency threshold (Hz) assigned for the current control window.
    pub threshold: Option<S>,
    /// Set while the device is held in a grid-forced state.
    pub responded: bool,
}

impl<S: Scalar> DeviceRecord<S> {
    pub fn new(id: u32, params: DeviceParams<S>, temp: S, on: bool) -> Self {
        DeviceRecord {
            id,
            params,
            temp,
            on,
            threshold: None,
            responded: false,
        }
    }

    pub fn kind(&self) -> DeviceKind {
        self.params.kind()
    }

    pub fn power_rating(&self) -> S {
        self.params.power_rating()
    }

    /// Instantaneous draw: exactly `0` or exactly `P`.
    pub fn power(&self) -> S {
        if self.on {
            self.params.power_rating()
        } else {
            S::zero()
        }
    }

    pub fn thermal(&self) -> Thermal<S> {
        self.params.thermal()
    }

    /// The thermostat insists on the device running (at or past its on edge).
    pub fn demands_on(&self) -> bool {
        let edge = self.params.on_edge();
        if self.params.heats() {
            self.temp <= edge
        } else {
            self.temp >= edge
        }
    }

    /// The thermostat insists on the device being idle (at or past its off edge).
    pub fn demands_off(&self) -> bool {
        let edge = self.params.off_edge();
        if self.params.heats() {
            self.temp >= edge
        } else {
            self.temp <= edge
        }
    }

    /// Applies the hysteresis law to the current temperature. Returns whether
    /// the discrete state changed.
    pub fn apply_hysteresis(&mut self) -> bool {
        let before = self.on;
        if self.demands_on() {
            self.on = true;
        } else if self.demands_off() {
            self.on = false;
        }
        before != self.on
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.temp.is_finite() {
            Ok(())
        } else {
            Err(Error::StateCorruption {
                id: self.id,
                detail: format!("temperature {}", self.temp),
            })
        }
    }

    /// Advances the device by `dt` seconds: exact temperature update at the
    /// current discrete state, then hysteresis evaluated at the step
    /// boundary. A deadband edge crossed inside the step takes effect at the
    /// end of the step.
    pub fn step(&self, dt: S) -> Result<Self> {
        if !(dt > S::zero()) {
            return Err(Error::Contract(format!("step length must be > 0, got {dt}")));
        }
        self.check_finite()?;
        let mut next = *self;
        next.temp = self.thermal().advance(self.temp, self.on, dt);
        next.check_finite()?;
        next.apply_hysteresis();
        Ok(next)
    }

    /// Seconds until an `on` device reaches its off edge, under constant
    /// exogenous inputs. `+∞` if the edge is never reached.
    pub fn time_to_switch_off(&self) -> Result<S> {
        if !self.on {
            return Err(Error::Contract(format!("device {} is off; t_on^off undefined", self.id)));
        }
        self.check_finite()?;
        let th = self.thermal();
        Ok(time_to_reach(self.temp, self.params.off_edge(), th.eq_on, th.rate, self.params.heats()))
    }

    /// Seconds until an `off` device reaches its on edge.
    pub fn time_to_switch_on(&self) -> Result<S> {
        if self.on {
            return Err(Error::Contract(format!("device {} is on; t_off^on undefined", self.id)));
        }
        self.check_finite()?;
        let th = self.thermal();
        Ok(time_to_reach(self.temp, self.params.on_edge(), th.eq_off, th.rate, !self.params.heats()))
    }

    /// Time spent on and off during a window starting now, assuming at most
    /// one thermostat switch in the window.
    pub fn window_on_off_durations(&self, window: S) -> Result<(S, S)> {
        if !(window > S::zero() && window.is_finite()) {
            return Err(invalid("window", format!("must be finite and > 0, got {window}")));
        }
        let t_on = if self.on {
            window.min(self.time_to_switch_off()?)
        } else {
            (window - self.time_to_switch_on()?).max(S::zero())
        };
        Ok((t_on, window - t_on))
    }

    /// Full on and off phase lengths of the steady limit cycle (edge to edge).
    pub fn cycle_durations(&self) -> (S, S) {
        let th = self.thermal();
        let heats = self.params.heats();
        let on_phase = time_to_reach(self.params.on_edge(), self.params.off_edge(), th.eq_on, th.rate, heats);
        let off_phase = time_to_reach(self.params.off_edge(), self.params.on_edge(), th.eq_off, th.rate, !heats);
        (on_phase, off_phase)
    }

    /// Steady-state fraction of time spent on.
    pub fn duty_cycle(&self) -> S {
        let (on, off) = self.cycle_durations();
        match (on.is_finite(), off.is_finite()) {
            (true, true) => on / (on + off),
            (false, true) => S::one(),
            (true, false) => S::zero(),
            (false, false) => S::half(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.check_finite()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn midpoint_ac(temp: f64, on: bool) -> DeviceRecord<f64> {
        DeviceRecord::new(
            1,
            DeviceParams::Ac(AcParams {
                power_rating: 6.0,
                thermal_resistance: 2.2,
                thermal_capacitance: 3.6,
                efficiency: 2.5,
                setpoint: 72.0,
                deadband: 2.0,
                ambient: 90.0,
            }),
            temp,
            on,
        )
    }

    fn midpoint_ewh(temp: f64, on: bool, flow: f64) -> DeviceRecord<f64> {
        DeviceRecord::new(
            2,
            DeviceParams::Ewh(EwhParams {
                power_rating: 4.5,
                tank_capacitance: 0.16,
                flow_rate: flow,
                specific_heat: 2.93e-4,
                loss_coeff: 0.0015,
                inlet_temp: 60.0,
                ambient: 70.0,
                setpoint: 120.0,
                deadband: 4.0,
            }),
            temp,
            on,
        )
    }

    /// Fixed-state RK4 integration of the generic form, used as the oracle.
    fn rk4(g: &GenericDeviceParams<f64>, x0: f64, on: bool, horizon: f64, h: f64) -> f64 {
        let n = (horizon / h).round() as usize;
        let mut x = x0;
        for _ in 0..n {
            let k1 = g.derivative(x, on);
            let k2 = g.derivative(x + 0.5 * h * k1, on);
            let k3 = g.derivative(x + 0.5 * h * k2, on);
            let k4 = g.derivative(x + h * k3, on);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        x
    }

    #[test]
    fn interior_state_keeps_discrete_state() {
        let d = midpoint_ac(72.0, true);
        let next = d.step(1e-9).unwrap();
        assert!((next.temp - 72.0).abs() < 1e-9);
        assert!(next.on);
    }

    #[test]
    fn ac_step_matches_rk4() {
        let d = midpoint_ac(72.0, true);
        let next = d.step(1.0).unwrap();
        let oracle = rk4(&d.params.generic(), 72.0, true, 1.0, 1e-3);
        assert!((next.temp - oracle).abs() < 1e-9, "{} vs {}", next.temp, oracle);
    }

    #[test]
    fn ewh_without_draw_matches_rk4() {
        let d = midpoint_ewh(119.0, true, 0.0);
        let g = d.params.generic();
        // with no draw the model collapses to C_w dT/dt = -W T + s P + W T_a
        if let DeviceParams::Ewh(p) = d.params {
            let hour = 3600.0;
            assert!((g.a + p.loss_coeff / p.tank_capacitance / hour).abs() < 1e-15);
            assert!((g.b - p.loss_coeff * p.ambient / p.tank_capacitance / hour).abs() < 1e-15);
        }
        for dt in [1.0, 30.0] {
            let next = d.step(dt).unwrap();
            let oracle = rk4(&g, 119.0, true, dt, 1e-3);
            assert!((next.temp - oracle).abs() < 1e-9);
        }
    }

    #[test]
    fn generic_signs_agree_with_edges() {
        for d in [midpoint_ac(72.0, true), midpoint_ewh(120.0, true, 10.0)] {
            let g = d.params.generic();
            let half = g.delta / 2.0;
            assert!((g.switching_output(d.params.off_edge()) - half).abs() < 1e-12);
            assert!((g.switching_output(d.params.on_edge()) + half).abs() < 1e-12);
        }
    }

    #[test]
    fn hysteresis_edges() {
        let mut ac = midpoint_ac(73.0, false);
        assert!(ac.apply_hysteresis());
        assert!(ac.on);
        ac.temp = 71.0;
        ac.apply_hysteresis();
        assert!(!ac.on);
        let mut ewh = midpoint_ewh(118.0, false, 0.0);
        ewh.apply_hysteresis();
        assert!(ewh.on);
        ewh.temp = 122.0;
        ewh.apply_hysteresis();
        assert!(!ewh.on);
    }

    #[test]
    fn residence_time_at_boundary_is_zero() {
        assert_eq!(midpoint_ac(71.0, true).time_to_switch_off().unwrap(), 0.0);
        assert_eq!(midpoint_ac(73.0, false).time_to_switch_on().unwrap(), 0.0);
        assert_eq!(midpoint_ewh(118.0, false, 0.0).time_to_switch_on().unwrap(), 0.0);
    }

    #[test]
    fn residence_time_contract() {
        assert!(matches!(midpoint_ac(72.0, false).time_to_switch_off(), Err(Error::Contract(_))));
        assert!(matches!(midpoint_ac(72.0, true).time_to_switch_on(), Err(Error::Contract(_))));
    }

    #[test]
    fn never_reaching_edge_is_infinite() {
        // too weak to cool past 71 °F against a 90 °F ambient
        let mut d = midpoint_ac(72.0, true);
        if let DeviceParams::Ac(p) = &mut d.params {
            p.power_rating = 1.0;
        }
        assert!(d.time_to_switch_off().unwrap().is_infinite());
    }

    #[test]
    fn matches_reference_closed_form() {
        let d = midpoint_ac(72.5, true);
        let (c, r, eta, p, ta): (f64, f64, f64, f64, f64) = (3.6, 2.2, 2.5, 6.0, 90.0);
        let expected = c * r * (((72.5 - ta) + eta * p * r) / ((71.0 - ta) + eta * p * r)).ln() * 3600.0;
        assert!((d.time_to_switch_off().unwrap() - expected).abs() < 1e-9);

        let e = midpoint_ewh(119.0, false, 12.0);
        if let DeviceParams::Ewh(ep) = &e.params {
            let a = DeviceParams::ewh_a(ep);
            let b0 = DeviceParams::ewh_b(ep, false);
            let expected = (1.0 / a) * ((-a * 119.0 + b0) / (-a * 118.0 + b0)).ln() * 3600.0;
            assert!((e.time_to_switch_on().unwrap() - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn window_durations_clamp() {
        let on_long = midpoint_ac(72.0, true);
        let (t_on, t_off) = on_long.window_on_off_durations(300.0).unwrap();
        assert_eq!((t_on, t_off), (300.0, 0.0));
        let off_long = midpoint_ac(71.0, false);
        assert_eq!(off_long.window_on_off_durations(300.0).unwrap().0, 0.0);
        assert!(on_long.window_on_off_durations(0.0).is_err());
    }

    #[test]
    fn nonfinite_state_rejected() {
        let d = midpoint_ac(f64::NAN, true);
        assert!(matches!(d.step(1.0), Err(Error::StateCorruption { .. })));
    }

    #[test]
    fn power_is_discrete() {
        assert_eq!(midpoint_ac(72.0, true).power(), 6.0);
        assert_eq!(midpoint_ac(72.0, false).power(), 0.0);
    }

    #[test]
    fn validation() {
        let mut d = midpoint_ac(72.0, true);
        assert!(d.validate().is_ok());
        if let DeviceParams::Ac(p) = &mut d.params {
            p.ambient = 72.5;
        }
        assert!(d.validate().is_err());
        let mut e = midpoint_ewh(120.0, true, 0.0);
        if let DeviceParams::Ewh(p) = &mut e.params {
            p.inlet_temp = 119.0;
        }
        assert!(e.validate().is_err());
    }

    #[test]
    fn duty_cycle_in_unit_interval() {
        let d = midpoint_ac(72.0, true);
        let duty = d.duty_cycle();
        assert!(duty > 0.3 && duty < 0.7, "{duty}");
    }

    #[test]
    fn runs_in_single_precision() {
        let d = DeviceRecord::<f32>::new(
            1,
            DeviceParams::Ac(AcParams {
                power_rating: 6.0,
                thermal_resistance: 2.2,
                thermal_capacitance: 3.6,
                efficiency: 2.5,
                setpoint: 72.0,
                deadband: 2.0,
                ambient: 90.0,
            }),
            72.0,
            true,
        );
        let t64 = midpoint_ac(72.0, true).time_to_switch_off().unwrap();
        let t32 = d.time_to_switch_off().unwrap() as f64;
        assert!((t64 - t32).abs() / t64 < 1e-4);
    }
}
