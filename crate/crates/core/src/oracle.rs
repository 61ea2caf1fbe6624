//! Deterministic synthetic traffic.
//!
//! Two generators:
//!
//! - [`sample_from_fd`] draws points from the speed-flow curve itself plus
//!   Gaussian speed noise. Estimators fitted to this data should recover the
//!   generating parameters (an inverse-crime self-test).
//! - [`simulate_segment`] derives speeds from an independent signal-delay
//!   model: free-flow travel time over the segment plus Webster's uniform
//!   delay `d = C (1 - g)^2 / (2 (1 - q / (g s)))`. Fitting the curve to
//!   this data checks how well the curve family describes signalized
//!   traffic.
//!
//! Observations are stamped on consecutive weekday study hours starting
//! Monday 2024-01-01 07:00, so they survive the default study filter.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fd::{self, FdParams, GreenSplit};
use crate::ingest::{EventKind, SegmentObservation, SignalEvent, StudyWindow};

/// A segment of the delay-model oracle.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSegmentSpec {
    pub segment_id: String,
    /// metres
    pub length: f64,
    /// Speed limit, km/h.
    pub v_max: f64,
    /// Cycle length, seconds.
    pub cycle: f64,
    pub g: GreenSplit,
    /// Saturation flow, veh/hr-lane.
    pub sat_flow: f64,
    /// Per-lane demands, veh/hr-lane; one observation each.
    pub demand: Vec<f64>,
    /// Standard deviation of speed noise, km/h.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSegmentSpec {
    /// Flow at which the uniform delay diverges, `g * sat_flow`.
    pub fn capacity(&self) -> f64 {
        self.g.value() * self.sat_flow
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("length", self.length),
            ("v_max", self.v_max),
            ("cycle", self.cycle),
            ("sat_flow", self.sat_flow),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Param(format!(
                    "segment '{}': {name} must be > 0, got {v}",
                    self.segment_id
                )));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Param(format!(
                "segment '{}': noise_sigma must be >= 0",
                self.segment_id
            )));
        }
        let cap = self.capacity();
        if let Some(&q) = self.demand.iter().find(|&&q| !(q >= 0.0 && q < cap)) {
            return Err(Error::Domain(format!(
                "segment '{}': demand {q} not in [0, g*s = {cap}); the uniform delay diverges at saturation",
                self.segment_id
            )));
        }
        Ok(())
    }
}

/// Webster's uniform delay per vehicle, seconds.
pub fn webster_delay(cycle: f64, g: GreenSplit, q: f64, sat_flow: f64) -> Result<f64> {
    let x = q / (g.value() * sat_flow);
    if !(q >= 0.0 && x < 1.0) {
        return Err(Error::Domain(format!(
            "flow {q} not in [0, g*s = {})",
            g.value() * sat_flow
        )));
    }
    let red = 1.0 - g.value();
    Ok(cycle * red * red / (2.0 * (1.0 - x)))
}

/// Noise-free space-mean speed over the segment, km/h.
pub fn webster_speed(spec: &SyntheticSegmentSpec, q: f64) -> Result<f64> {
    let free_flow_time = spec.length / (spec.v_max / 3.6);
    let delay = webster_delay(spec.cycle, spec.g, q, spec.sat_flow)?;
    Ok(3.6 * spec.length / (free_flow_time + delay))
}

/// The `n` first hours inside the default study window, from Monday
/// 2024-01-01 07:00.
pub fn study_hour_slots(n: usize) -> Vec<NaiveDateTime> {
    let window = StudyWindow::default();
    let mut t = NaiveDate::from_ymd_opt(2024, 1, 1)
        .expect("valid date")
        .and_hms_opt(window.start_hour, 0, 0)
        .expect("valid time");
    let mut slots = Vec::with_capacity(n);
    while slots.len() < n {
        if window.contains(t) {
            slots.push(t);
        }
        t += Duration::hours(1);
        // jump over weekends in one go
        if matches!(t.weekday(), Weekday::Sat) {
            t += Duration::days(2);
        }
    }
    slots
}

fn noise(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("sigma is finite and positive"))
}

/// One observation per demand value, speeds from the delay model plus
/// seeded Gaussian noise, clipped into `(0, v_max]`.
pub fn simulate_segment(spec: &SyntheticSegmentSpec) -> Result<Vec<SegmentObservation>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = noise(spec.noise_sigma);
    let floor = 1e-6 * spec.v_max;
    spec.demand
        .iter()
        .zip(study_hour_slots(spec.demand.len()))
        .map(|(&q, hour_start)| {
            let mut speed = webster_speed(spec, q)?;
            if let Some(n) = &normal {
                speed = (speed + n.sample(&mut rng)).clamp(floor, spec.v_max);
            }
            Ok(SegmentObservation {
                segment_id: spec.segment_id.clone(),
                hour_start,
                flow: q,
                speed,
            })
        })
        .collect()
}

/// `n` points with flows uniform on `(0.02 q_cap, 0.98 q_cap)` and speeds on
/// the curve plus seeded Gaussian noise, clipped to `[0, v_max]`.
pub fn sample_from_fd(
    segment_id: &str,
    params: &FdParams,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<SegmentObservation>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Param("n must be >= 1".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Param(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = noise(noise_sigma);
    let (lo, hi) = (0.02 * params.q_cap, 0.98 * params.q_cap);
    Ok(study_hour_slots(n)
        .into_iter()
        .map(|hour_start| {
            let flow = rng.random_range(lo..hi);
            let mut speed = fd::speed_unchecked(params, flow);
            if let Some(n) = &normal {
                speed = (speed + n.sample(&mut rng)).clamp(0.0, params.v_max);
            }
            SegmentObservation {
                segment_id: segment_id.into(),
                hour_start,
                flow,
                speed,
            }
        })
        .collect())
}

/// One observation per demand value with speeds on the curve plus seeded
/// Gaussian noise, clipped to `[0, v_max]`. Hours follow [`study_hour_slots`].
pub fn sample_fd_at_demand(
    segment_id: &str,
    params: &FdParams,
    demand: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<SegmentObservation>> {
    params.validate()?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Param(format!("noise_sigma must be >= 0, got {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = noise(noise_sigma);
    demand
        .iter()
        .zip(study_hour_slots(demand.len()))
        .map(|(&q, hour_start)| {
            let mut speed = fd::eval_speed(params, q)?;
            if let Some(n) = &normal {
                speed = (speed + n.sample(&mut rng)).clamp(0.0, params.v_max);
            }
            Ok(SegmentObservation {
                segment_id: segment_id.into(),
                hour_start,
                flow: q,
                speed,
            })
        })
        .collect()
}

/// A fixed-time phase log: `n_cycles` cycles of length `cycle` starting at
/// `t0`, each opening every phase in `phases` at the cycle start for
/// `g * cycle` seconds. A closing `cycle_start` ends the last cycle.
pub fn fixed_time_log(t0: f64, cycle: f64, g: GreenSplit, n_cycles: usize, phases: &[u32]) -> Vec<SignalEvent> {
    let green = g.value() * cycle;
    let mut events = Vec::with_capacity(n_cycles * (1 + 2 * phases.len()) + 1);
    for k in 0..n_cycles {
        let start = t0 + k as f64 * cycle;
        events.push(SignalEvent {
            timestamp: start,
            phase: 0,
            kind: EventKind::CycleStart,
        });
        for &phase in phases {
            events.push(SignalEvent {
                timestamp: start,
                phase,
                kind: EventKind::GreenStart,
            });
            events.push(SignalEvent {
                timestamp: start + green,
                phase,
                kind: EventKind::GreenEnd,
            });
        }
    }
    events.push(SignalEvent {
        timestamp: t0 + n_cycles as f64 * cycle,
        phase: 0,
        kind: EventKind::CycleStart,
    });
    events
}
