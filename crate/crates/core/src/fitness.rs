//! Availability, quality and fitness scores of a device for one control window.

use crate::device::DeviceRecord;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Direction of the frequency service.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Service {
    /// Shed load when frequency drops.
    UnderFreq,
    /// Pick up load when frequency rises.
    OverFreq,
}

impl Service {
    pub fn as_str(self) -> &'static str {
        match self {
            Service::UnderFreq => "under",
            Service::OverFreq => "over",
        }
    }
}

/// Delay-based quality model: `exp(-beta * delay)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QualityParams<S> {
    /// 1/s
    pub beta: S,
    /// Estimated response delay, seconds. May be `+∞` for a device that never responds.
    pub delay_estimate: S,
}

impl<S: Scalar> Default for QualityParams<S> {
    fn default() -> Self {
        QualityParams {
            beta: S::lit(0.1),
            delay_estimate: S::zero(),
        }
    }
}

impl<S: Scalar> QualityParams<S> {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta > S::zero()) {
            return Err(invalid("beta", format!("must be finite and > 0, got {}", self.beta)));
        }
        if self.delay_estimate.is_nan() || self.delay_estimate < S::zero() {
            return Err(invalid("delay_estimate", format!("must be >= 0, got {}", self.delay_estimate)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitnessReport<S> {
    pub device_id: u32,
    /// Carried along for the priority tie-break.
    pub power_rating: S,
    pub service: Service,
    pub availability: S,
    pub quality: S,
    pub fitness: S,
    pub window: (S, S),
}

/// Probability the device is on at a uniformly distributed event time.
pub fn availability_under<S: Scalar>(dev: &DeviceRecord<S>, window: S) -> Result<S> {
    let (t_on, _) = dev.window_on_off_durations(window)?;
    Ok((t_on / window).min(S::one()).max(S::zero()))
}

/// Probability the device is off at a uniformly distributed event time.
pub fn availability_over<S: Scalar>(dev: &DeviceRecord<S>, window: S) -> Result<S> {
    // t_off / window, written as the complement so the two availabilities
    // sum to exactly one in floating point
    Ok(S::one() - availability_under(dev, window)?)
}

pub fn availability<S: Scalar>(dev: &DeviceRecord<S>, service: Service, window: S) -> Result<S> {
    match service {
        Service::UnderFreq => availability_under(dev, window),
        Service::OverFreq => availability_over(dev, window),
    }
}

pub fn quality<S: Scalar>(q: &QualityParams<S>) -> S {
    if q.delay_estimate.is_infinite() {
        return S::zero();
    }
    (-q.beta * q.delay_estimate).exp()
}

pub fn fitness<S: Scalar>(
    dev: &DeviceRecord<S>,
    service: Service,
    window: S,
    q: &QualityParams<S>,
) -> Result<FitnessReport<S>> {
    q.validate()?;
    let availability = availability(dev, service, window)?;
    let quality = quality(q);
    Ok(FitnessReport {
        device_id: dev.id,
        power_rating: dev.power_rating(),
        service,
        availability,
        quality,
        fitness: availability * quality,
        window: (S::zero(), window),
    })
}

/// Fitness of every device in a population with a common quality model.
pub fn fitness_table<S: Scalar>(
    population: &[DeviceRecord<S>],
    service: Service,
    window: S,
    q: &QualityParams<S>,
) -> Result<Vec<FitnessReport<S>>> {
    population.iter().map(|d| fitness(d, service, window, q)).collect()
}
