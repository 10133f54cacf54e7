//! Fitness-ordered commitment and frequency-threshold assignment.
//!
//! The aggregator sorts devices by fitness, commits the shortest prefix whose
//! ratings add up to the requested capacity, and spreads the committed
//! devices' thresholds along the droop band so that the cumulative rating
//! shed at frequency `ω` follows the line from `ω_u` (nothing shed) to `ω_l`
//! (everything shed). The fittest device sits closest to nominal.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::fitness::{FitnessReport, Service};
use crate::scalar::Scalar;

/// Droop band and committed capacity for one direction of service.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResponseCurveSpec<S> {
    pub direction: Service,
    /// Hz
    pub omega_l: S,
    /// Hz
    pub omega_u: S,
    /// Hz
    pub omega_0: S,
    /// Requested capacity, kW.
    pub capacity: S,
}

impl<S: Scalar> ResponseCurveSpec<S> {
    pub fn under(omega_l: S, omega_u: S, capacity: S) -> Self {
        ResponseCurveSpec {
            direction: Service::UnderFreq,
            omega_l,
            omega_u,
            omega_0: S::lit(60.0),
            capacity,
        }
    }

    pub fn over(omega_l: S, omega_u: S, capacity: S) -> Self {
        ResponseCurveSpec {
            direction: Service::OverFreq,
            ..Self::under(omega_l, omega_u, capacity)
        }
    }

    pub fn band(&self) -> S {
        self.omega_u - self.omega_l
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.omega_l.is_finite() && self.omega_u.is_finite() && self.omega_0.is_finite();
        if !finite || !(self.omega_l < self.omega_u) {
            return Err(invalid("band", format!("need omega_l < omega_u, got [{}, {}]", self.omega_l, self.omega_u)));
        }
        match self.direction {
            Service::UnderFreq if self.omega_u > self.omega_0 => {
                return Err(invalid("band", "under-frequency band must lie at or below nominal"))
            }
            Service::OverFreq if self.omega_l < self.omega_0 => {
                return Err(invalid("band", "over-frequency band must lie at or above nominal"))
            }
            _ => {}
        }
        if !(self.capacity.is_finite() && self.capacity > S::zero()) {
            return Err(invalid("capacity", format!("must be > 0, got {}", self.capacity)));
        }
        Ok(())
    }

    /// Fraction of the band traversed at frequency `omega`, clamped to [0, 1].
    pub fn depth(&self, omega: S) -> S {
        let raw = match self.direction {
            Service::UnderFreq => (self.omega_u - omega) / self.band(),
            Service::OverFreq => (omega - self.omega_l) / self.band(),
        };
        raw.max(S::zero()).min(S::one())
    }

    /// Unclamped band depth; exceeds one beyond the far edge.
    pub fn raw_depth(&self, omega: S) -> S {
        match self.direction {
            Service::UnderFreq => (self.omega_u - omega) / self.band(),
            Service::OverFreq => (omega - self.omega_l) / self.band(),
        }
    }

    /// Ideal droop response at `omega` for a curve of height `capacity`.
    pub fn target(&self, omega: S, capacity: S) -> S {
        capacity * self.depth(omega)
    }
}

/// A device as seen by the aggregator when building the priority list.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate<S> {
    pub device_id: u32,
    pub power_rating: S,
    pub fitness: S,
}

impl<S: Scalar> From<&FitnessReport<S>> for Candidate<S> {
    fn from(r: &FitnessReport<S>) -> Self {
        Candidate {
            device_id: r.device_id,
            power_rating: r.power_rating,
            fitness: r.fitness,
        }
    }
}

fn check_unique<S>(reports: &[FitnessReport<S>]) -> Result<()> {
    let mut seen = HashSet::with_capacity(reports.len());
    for r in reports {
        if !seen.insert(r.device_id) {
            return Err(Error::DuplicateDevice(r.device_id));
        }
    }
    Ok(())
}

/// Orders devices by non-increasing fitness. Ties go to the larger rating,
/// then to the smaller id.
pub fn prioritize<S: Scalar>(reports: &[FitnessReport<S>]) -> Result<Vec<Candidate<S>>> {
    check_unique(reports)?;
    let mut order: Vec<Candidate<S>> = reports.iter().map(Candidate::from).collect();
    order.sort_by(|a, b| {
        b.fitness
            .partial_cmp(&a.fitness)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| b.power_rating.partial_cmp(&a.power_rating).unwrap_or(std::cmp::Ordering::Equal))
            .then_with(|| a.device_id.cmp(&b.device_id))
    });
    Ok(order)
}

/// Baseline ordering that ignores fitness: a seeded uniform shuffle.
pub fn shuffled<S: Scalar>(reports: &[FitnessReport<S>], seed: u64) -> Result<Vec<Candidate<S>>> {
    check_unique(reports)?;
    let mut order: Vec<Candidate<S>> = reports.iter().map(Candidate::from).collect();
    order.sort_by_key(|c| c.device_id);
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(order)
}

/// Capacity-matching tolerance `ε_p` for the prefix search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tolerance<S> {
    Fixed(S),
    /// The largest rating among the devices committed so far.
    LargestCommitted,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection<S> {
    pub committed: Vec<Candidate<S>>,
    pub committed_capacity: S,
    pub requested_capacity: S,
    /// `|requested - committed|`, kW.
    pub residual: S,
    /// False when no prefix met the tolerance and the closest one was taken.
    pub within_tolerance: bool,
}

/// Commits the smallest prefix `m` of `order` with
/// `|capacity - Σ_{i≤m} P_i| ≤ ε_p`. When no prefix qualifies, the prefix
/// closest to `capacity` is committed and flagged.
pub fn select_committed<S: Scalar>(order: &[Candidate<S>], capacity: S, eps_p: Tolerance<S>) -> Result<Selection<S>> {
    if order.is_empty() {
        return Err(Error::Empty("priority order"));
    }
    if !(capacity.is_finite() && capacity > S::zero()) {
        return Err(invalid("capacity", format!("must be > 0, got {capacity}")));
    }
    if let Tolerance::Fixed(e) = eps_p {
        if !(e >= S::zero()) {
            return Err(invalid("eps_p", format!("must be >= 0, got {e}")));
        }
    }
    let mut sum = S::zero();
    let mut largest = S::zero();
    let mut best = (S::infinity(), 0usize, S::zero());
    let mut chosen = None;
    for (i, c) in order.iter().enumerate() {
        sum = sum + c.power_rating;
        largest = largest.max(c.power_rating);
        let err = (capacity - sum).abs();
        let tol = match eps_p {
            Tolerance::Fixed(e) => e,
            Tolerance::LargestCommitted => largest,
        };
        if err <= tol {
            chosen = Some((i + 1, sum));
            break;
        }
        if err < best.0 {
            best = (err, i + 1, sum);
        }
    }
    let (m, committed_capacity, within_tolerance) = match chosen {
        Some((m, s)) => (m, s, true),
        None => (best.1, best.2, false),
    };
    Ok(Selection {
        committed: order[..m].to_vec(),
        committed_capacity,
        requested_capacity: capacity,
        residual: (capacity - committed_capacity).abs(),
        within_tolerance,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdedDevice<S> {
    pub device_id: u32,
    pub power_rating: S,
    pub fitness: S,
    /// Hz
    pub threshold: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdAssignment<S> {
    /// Band and direction; `spec.capacity` is the capacity that was requested.
    pub spec: ResponseCurveSpec<S>,
    /// Committed devices in priority order.
    pub devices: Vec<ThresholdedDevice<S>>,
    /// `Σ P` over the committed devices; the height of the droop curve.
    pub committed_capacity: S,
    pub capacity_error: S,
    pub success_prob: S,
    pub failure_lb: S,
}

impl<S: Scalar> ThresholdAssignment<S> {
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn threshold_of(&self, id: u32) -> Option<S> {
        self.devices.iter().find(|d| d.device_id == id).map(|d| d.threshold)
    }

    /// Whether a device with threshold `threshold` is called at frequency `omega`.
    pub fn triggered(&self, threshold: S, omega: S) -> bool {
        match self.spec.direction {
            Service::UnderFreq => omega <= threshold,
            Service::OverFreq => omega >= threshold,
        }
    }

    /// Quasi-static response: total rating of devices whose thresholds have been crossed.
    pub fn staircase(&self, omega: S) -> S {
        self.devices
            .iter()
            .filter(|d| self.triggered(d.threshold, omega))
            .map(|d| d.power_rating)
            .sum()
    }

    /// Ideal droop line at `omega` with the committed capacity as height.
    pub fn target(&self, omega: S) -> S {
        self.spec.target(omega, self.committed_capacity)
    }

    pub fn max_rating(&self) -> S {
        self.devices.iter().map(|d| d.power_rating).fold(S::zero(), S::max)
    }
}

/// Places thresholds for the committed devices along the band. The droop
/// height is the committed rating sum, so the last device lands exactly on
/// the far band edge.
pub fn assign_thresholds<S: Scalar>(committed: &[Candidate<S>], spec: &ResponseCurveSpec<S>) -> Result<ThresholdAssignment<S>> {
    if committed.is_empty() {
        return Err(Error::Empty("committed device list"));
    }
    spec.validate()?;
    let total: S = committed.iter().map(|c| c.power_rating).sum();
    let band = spec.band();
    let mut cumulative = S::zero();
    let mut devices = Vec::with_capacity(committed.len());
    for c in committed {
        if !(c.power_rating > S::zero()) {
            return Err(invalid("power_rating", format!("device {} has rating {}", c.device_id, c.power_rating)));
        }
        cumulative = cumulative + c.power_rating;
        // interpolate from the far edge so the final device sits on it exactly
        let remaining = S::one() - cumulative / total;
        let threshold = match spec.direction {
            Service::UnderFreq => spec.omega_l + band * remaining,
            Service::OverFreq => spec.omega_u - band * remaining,
        };
        if threshold < spec.omega_l || threshold > spec.omega_u {
            return Err(Error::Consistency(format!(
                "threshold {threshold} for device {} outside band [{}, {}]",
                c.device_id, spec.omega_l, spec.omega_u
            )));
        }
        devices.push(ThresholdedDevice {
            device_id: c.device_id,
            power_rating: c.power_rating,
            fitness: c.fitness,
            threshold,
        });
    }
    let mut assignment = ThresholdAssignment {
        spec: *spec,
        devices,
        committed_capacity: total,
        capacity_error: (spec.capacity - total).abs(),
        success_prob: S::zero(),
        failure_lb: S::zero(),
    };
    let (success, failure) = success_probability(&assignment);
    assignment.success_prob = success;
    assignment.failure_lb = failure;
    Ok(assignment)
}

/// Probability that every committed device responds, and the lower bound
/// `1 - min π` on the probability that at least one fails.
pub fn success_probability<S: Scalar>(assignment: &ThresholdAssignment<S>) -> (S, S) {
    let success = assignment.devices.iter().fold(S::one(), |acc, d| acc * d.fitness);
    let weakest = assignment.devices.iter().map(|d| d.fitness).fold(S::one(), S::min);
    (success, S::one() - weakest)
}

/// Fitness at or above this value counts as certain.
pub const CERTAIN_FITNESS_TOL: f64 = 1e-12;

/// Capacity committable with probability one: ratings of all devices with fitness 1.
pub fn max_guaranteed_capacity<S: Scalar>(reports: &[FitnessReport<S>]) -> S {
    let cutoff = S::one() - S::lit(CERTAIN_FITNESS_TOL);
    reports.iter().filter(|r| r.fitness >= cutoff).map(|r| r.power_rating).sum()
}

/// Upper bound on the relative staircase error: `max P / Σ P`.
pub fn discrete_error_bound<S: Scalar>(assignment: &ThresholdAssignment<S>) -> S {
    assignment.max_rating() / assignment.committed_capacity
}

/// Smallest committed capacity for which the staircase error stays below `eps`.
pub fn required_capacity<S: Scalar>(max_rating: S, eps: S) -> Result<S> {
    if !(eps > S::zero()) {
        return Err(invalid("eps", format!("must be > 0, got {eps}")));
    }
    Ok(max_rating / eps)
}
