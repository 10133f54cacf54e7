//! Independent oracles shared by the integration tests. Nothing here calls
//! the closed-form code under test: thermal trajectories are integrated with
//! RK4 straight from the physical equations.

#![allow(dead_code)]

use tcl_response::harness::{generate_population, PopulationSpec};
use tcl_response::{Device, DeviceParams};

/// Temperature derivative in °F/s from the physical model.
pub fn dtemp(params: &DeviceParams<f64>, temp: f64, on: bool) -> f64 {
    let u = if on { 1.0 } else { 0.0 };
    match params {
        DeviceParams::Ac(p) => {
            (p.ambient - temp - u * p.efficiency * p.power_rating * p.thermal_resistance)
                / (p.thermal_capacitance * p.thermal_resistance * 3600.0)
        }
        DeviceParams::Ewh(p) => {
            (-p.loss_coeff * (temp - p.ambient) - p.flow_rate * p.specific_heat * (temp - p.inlet_temp)
                + u * p.power_rating)
                / (p.tank_capacitance * 3600.0)
        }
    }
}

pub fn rk4(params: &DeviceParams<f64>, temp: f64, on: bool, h: f64) -> f64 {
    let f = |x: f64| dtemp(params, x, on);
    let k1 = f(temp);
    let k2 = f(temp + 0.5 * h * k1);
    let k3 = f(temp + 0.5 * h * k2);
    let k4 = f(temp + h * k3);
    temp + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

fn heats(params: &DeviceParams<f64>) -> bool {
    matches!(params, DeviceParams::Ewh(_))
}

fn edges(params: &DeviceParams<f64>) -> (f64, f64) {
    let (set, band) = match params {
        DeviceParams::Ac(p) => (p.setpoint, p.deadband),
        DeviceParams::Ewh(p) => (p.setpoint, p.deadband),
    };
    (set - 0.5 * band, set + 0.5 * band)
}

/// Edge that ends the current state, and whether it lies above.
fn target_edge(params: &DeviceParams<f64>, on: bool) -> (f64, bool) {
    let (lo, hi) = edges(params);
    // heaters run up to the top edge, coolers down to the bottom one
    match (heats(params), on) {
        (true, true) | (false, false) => (hi, true),
        _ => (lo, false),
    }
}

/// Seconds until the device in state `on` at `temp` reaches the edge that
/// ends that state: RK4 at step `h`, then bisection on the step length
/// inside the bracketing step. `INFINITY` past `horizon`.
pub fn switch_time(params: &DeviceParams<f64>, temp: f64, on: bool, h: f64, horizon: f64) -> f64 {
    let (edge, rising) = target_edge(params, on);
    let past = |x: f64| if rising { x >= edge } else { x <= edge };
    if past(temp) {
        return 0.0;
    }
    let mut t = 0.0;
    let mut x = temp;
    while t < horizon {
        let next = rk4(params, x, on, h);
        if past(next) {
            let (mut lo, mut hi) = (0.0, h);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if past(rk4(params, x, on, mid)) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return t + 0.5 * (lo + hi);
        }
        x = next;
        t += h;
    }
    f64::INFINITY
}

/// Hybrid trajectory by RK4 with thermostat switching, sampled every `h`
/// seconds on `[0, duration]`; returns the discrete state at each sample.
pub fn on_states(dev: &Device, duration: f64, h: f64) -> Vec<bool> {
    let (lo, hi) = edges(&dev.params);
    let mut x = dev.temp;
    let mut on = dev.on;
    let n = (duration / h).round() as usize;
    let mut out = Vec::with_capacity(n + 1);
    out.push(on);
    for _ in 0..n {
        x = rk4(&dev.params, x, on, h);
        let (want_on, want_off) = if heats(&dev.params) { (x <= lo, x >= hi) } else { (x >= hi, x <= lo) };
        if want_on {
            on = true;
        } else if want_off {
            on = false;
        }
        out.push(on);
    }
    out
}

/// `(P[all succeed], P[at least one fails])` by enumerating all 2^n outcomes
/// of independent devices.
pub fn enumerate_outcomes(fitness: &[f64]) -> (f64, f64) {
    let n = fitness.len();
    let mut all = 0.0;
    let mut some_fail = 0.0;
    for mask in 0u32..(1 << n) {
        let p: f64 = (0..n)
            .map(|i| if mask >> i & 1 == 1 { fitness[i] } else { 1.0 - fitness[i] })
            .product();
        if mask == (1 << n) - 1 {
            all += p;
        } else {
            some_fail += p;
        }
    }
    (all, some_fail)
}

/// Mixed AC and water heater population with default parameter ranges.
pub fn population(ac: usize, ewh: usize, seed: u64) -> Vec<Device> {
    let spec = PopulationSpec { ac_count: ac, ewh_count: ewh, ..Default::default() };
    generate_population(&spec, seed).expect("default ranges are valid")
}
