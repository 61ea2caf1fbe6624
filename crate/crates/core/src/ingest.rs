//! Detector, speed and signal-event processing: hourly per-lane
//! aggregation, study filters, green-split extraction and flow binning.
//!
//! Parsing lives in the `sigfd` crate; everything here works on parsed
//! records.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::ops::Range;

use chrono::{Datelike, NaiveDateTime, NaiveTime, Timelike, Weekday};

use crate::error::{Error, Result};
use crate::fd::GreenSplit;

/// Bin width for flows, veh/hr-lane.
pub const DEFAULT_BIN_WIDTH: f64 = 30.0;
/// Target average cycle length, seconds.
pub const DEFAULT_CYCLE_TARGET: f64 = 114.0;
/// Accepted deviation from the target cycle length, seconds (inclusive).
pub const DEFAULT_CYCLE_TOLERANCE: f64 = 5.0;
/// Major-street protected through phases.
pub const DEFAULT_PHASES: [u32; 2] = [2, 6];

/// One detector count: vehicles seen on a lane since the previous record.
#[derive(Debug, Clone, PartialEq)]
pub struct CountRecord {
    pub segment_id: String,
    pub lane_id: String,
    pub timestamp: NaiveDateTime,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedRecord {
    pub segment_id: String,
    pub timestamp: NaiveDateTime,
    /// Space-mean speed, km/h.
    pub speed_kmh: f64,
}

/// One segment-hour: per-lane flow and space-mean speed.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentObservation {
    pub segment_id: String,
    pub hour_start: NaiveDateTime,
    /// veh/hr-lane
    pub flow: f64,
    /// km/h
    pub speed: f64,
}

/// Aggregate of the observations whose flow falls in
/// `[bin_index * width, (bin_index + 1) * width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedPoint {
    pub bin_index: i64,
    pub bin_center: f64,
    pub mean_speed: f64,
    pub count: usize,
}

impl BinnedPoint {
    pub fn width(&self) -> f64 {
        self.bin_center / (self.bin_index as f64 + 0.5)
    }

    pub fn lower_edge(&self) -> f64 {
        self.bin_index as f64 * self.width()
    }

    pub fn upper_edge(&self) -> f64 {
        (self.bin_index + 1) as f64 * self.width()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    GreenStart,
    GreenEnd,
    CycleStart,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::GreenStart => "green_start",
            EventKind::GreenEnd => "green_end",
            EventKind::CycleStart => "cycle_start",
        }
    }

    // Ties at one instant: close greens first, then open the cycle, then
    // open greens, so back-to-back intervals pair up correctly.
    fn tie_rank(self) -> u8 {
        match self {
            EventKind::GreenEnd => 0,
            EventKind::CycleStart => 1,
            EventKind::GreenStart => 2,
        }
    }
}

impl core::str::FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "green_start" => Ok(EventKind::GreenStart),
            "green_end" => Ok(EventKind::GreenEnd),
            "cycle_start" => Ok(EventKind::CycleStart),
            other => Err(Error::Data(format!("unknown event kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalEvent {
    /// Seconds on the log's clock.
    pub timestamp: f64,
    pub phase: u32,
    pub kind: EventKind,
}

/// Average signal plan of one segment's controlled approach.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPlanStats {
    pub segment_id: String,
    /// seconds
    pub mean_cycle: f64,
    /// seconds
    pub mean_green: f64,
    pub g: GreenSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SkipReason {
    MissingSpeed,
    MissingCounts,
    AboveCapacity,
    CycleLength,
    NoSignalPlan,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::MissingSpeed => "missing_speed",
            SkipReason::MissingCounts => "missing_counts",
            SkipReason::AboveCapacity => "above_capacity",
            SkipReason::CycleLength => "cycle_length",
            SkipReason::NoSignalPlan => "no_signal_plan",
        }
    }
}

/// Something left out of the fit and why.
#[derive(Debug, Clone, PartialEq)]
pub struct Skipped {
    pub segment_id: String,
    /// `None` when a whole segment was dropped.
    pub hour_start: Option<NaiveDateTime>,
    pub reason: SkipReason,
}

fn hour_floor(t: NaiveDateTime) -> NaiveDateTime {
    t.date()
        .and_time(NaiveTime::from_hms_opt(t.hour(), 0, 0).expect("valid hour"))
}

/// Builds per-lane hourly flows and hourly mean speeds.
///
/// `flow = (sum of all lane counts in the hour) / lane_count`; the speed is
/// the record-weighted mean of speed records in the hour. Segment-hours that
/// lack either side are dropped and listed in the returned skip list. Output
/// is ordered by segment then hour.
pub fn aggregate_hourly(
    counts: &[CountRecord],
    speeds: &[SpeedRecord],
    lane_counts: &BTreeMap<String, u32>,
) -> Result<(Vec<SegmentObservation>, Vec<Skipped>)> {
    let mut volume: BTreeMap<(&str, NaiveDateTime), u64> = BTreeMap::new();
    for c in counts {
        match lane_counts.get(&c.segment_id) {
            Some(&n) if n >= 1 => {}
            Some(_) => {
                return Err(Error::Config(format!(
                    "segment '{}' has lane_count 0",
                    c.segment_id
                )))
            }
            None => {
                return Err(Error::Config(format!(
                    "segment '{}' has no lane_count entry",
                    c.segment_id
                )))
            }
        }
        *volume
            .entry((c.segment_id.as_str(), hour_floor(c.timestamp)))
            .or_default() += c.count;
    }

    let mut speed_sums: BTreeMap<(&str, NaiveDateTime), (f64, usize)> = BTreeMap::new();
    for s in speeds {
        let e = speed_sums
            .entry((s.segment_id.as_str(), hour_floor(s.timestamp)))
            .or_default();
        e.0 += s.speed_kmh;
        e.1 += 1;
    }

    let mut observations = Vec::new();
    let mut skipped = Vec::new();
    for (&(segment, hour), &vehicles) in &volume {
        match speed_sums.get(&(segment, hour)) {
            Some(&(sum, n)) => observations.push(SegmentObservation {
                segment_id: segment.into(),
                hour_start: hour,
                flow: vehicles as f64 / lane_counts[segment] as f64,
                speed: sum / n as f64,
            }),
            None => skipped.push(Skipped {
                segment_id: segment.into(),
                hour_start: Some(hour),
                reason: SkipReason::MissingSpeed,
            }),
        }
    }
    for &(segment, hour) in speed_sums.keys() {
        if !volume.contains_key(&(segment, hour)) {
            skipped.push(Skipped {
                segment_id: segment.into(),
                hour_start: Some(hour),
                reason: SkipReason::MissingCounts,
            });
        }
    }
    Ok((observations, skipped))
}

fn event_order(a: &SignalEvent, b: &SignalEvent) -> Ordering {
    a.timestamp
        .total_cmp(&b.timestamp)
        .then(a.kind.tie_rank().cmp(&b.kind.tie_rank()))
        .then(a.phase.cmp(&b.phase))
}

/// Sorts events and checks that every phase alternates `green_start`,
/// `green_end`. A trailing open green is allowed.
pub fn normalize_events(mut events: Vec<SignalEvent>) -> Result<Vec<SignalEvent>> {
    if let Some(bad) = events.iter().find(|e| !e.timestamp.is_finite()) {
        return Err(Error::Data(format!("non-finite event timestamp {}", bad.timestamp)));
    }
    events.sort_by(event_order);
    let mut open: BTreeMap<u32, f64> = BTreeMap::new();
    for e in &events {
        match e.kind {
            EventKind::GreenStart => {
                if let Some(start) = open.insert(e.phase, e.timestamp) {
                    return Err(Error::Order(format!(
                        "phase {} green_start at {} while green from {} is still open",
                        e.phase, e.timestamp, start
                    )));
                }
            }
            EventKind::GreenEnd => {
                if open.remove(&e.phase).is_none() {
                    return Err(Error::Order(format!(
                        "phase {} green_end at {} has no preceding green_start",
                        e.phase, e.timestamp
                    )));
                }
            }
            EventKind::CycleStart => {}
        }
    }
    Ok(events)
}

/// Average cycle length, green time and green split from a phase-event log.
///
/// Only events with timestamps in `window` are used (`None` uses the whole
/// log). Green intervals of the selected phases that are complete inside the
/// window are merged by union, so concurrent phases are not double counted,
/// and the mean length of the merged intervals is the mean green. The mean
/// cycle is the mean gap between consecutive `cycle_start` events.
pub fn compute_green_split(
    segment_id: &str,
    events: &[SignalEvent],
    phases: &[u32],
    window: Option<Range<f64>>,
) -> Result<SignalPlanStats> {
    let mut events: Vec<SignalEvent> = events
        .iter()
        .filter(|e| window.as_ref().is_none_or(|w| w.contains(&e.timestamp)))
        .copied()
        .collect();
    events.sort_by(event_order);

    let cycles: Vec<f64> = events
        .iter()
        .filter(|e| e.kind == EventKind::CycleStart)
        .map(|e| e.timestamp)
        .collect();
    if cycles.len() < 2 {
        return Err(Error::Data(format!(
            "segment '{segment_id}': need at least 2 cycle_start events, found {}",
            cycles.len()
        )));
    }
    let gaps = cycles.windows(2).map(|w| w[1] - w[0]);
    let mean_cycle = gaps.sum::<f64>() / (cycles.len() - 1) as f64;

    let mut open: BTreeMap<u32, f64> = BTreeMap::new();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for e in events.iter().filter(|e| phases.contains(&e.phase)) {
        match e.kind {
            EventKind::GreenStart => {
                open.insert(e.phase, e.timestamp);
            }
            EventKind::GreenEnd => {
                if let Some(start) = open.remove(&e.phase) {
                    intervals.push((start, e.timestamp));
                }
            }
            EventKind::CycleStart => {}
        }
    }
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (start, end) in intervals {
        match merged.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(end),
            _ => merged.push((start, end)),
        }
    }
    if merged.is_empty() {
        return Err(Error::Data(format!(
            "segment '{segment_id}': no complete green interval for phases {phases:?}"
        )));
    }
    let mean_green = merged.iter().map(|(s, e)| e - s).sum::<f64>() / merged.len() as f64;
    if !(mean_green > 0.0 && mean_green < mean_cycle) {
        return Err(Error::Invariant(format!(
            "segment '{segment_id}': mean green {mean_green} s not inside (0, {mean_cycle}) s"
        )));
    }
    let g = GreenSplit::new(mean_green / mean_cycle)?;
    Ok(SignalPlanStats {
        segment_id: segment_id.into(),
        mean_cycle,
        mean_green,
        g,
    })
}

/// Hours and days the study keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StudyWindow {
    /// First hour kept (inclusive).
    pub start_hour: u32,
    /// First hour dropped (exclusive).
    pub end_hour: u32,
    pub weekdays_only: bool,
}

impl Default for StudyWindow {
    fn default() -> Self {
        Self {
            start_hour: 7,
            end_hour: 20,
            weekdays_only: true,
        }
    }
}

impl StudyWindow {
    pub fn contains(&self, t: NaiveDateTime) -> bool {
        let weekday_ok = !self.weekdays_only || !matches!(t.weekday(), Weekday::Sat | Weekday::Sun);
        let start = NaiveTime::from_hms_opt(self.start_hour.min(23), 0, 0).expect("valid hour");
        let time = t.time();
        let after_start = time >= start;
        let before_end = self.end_hour >= 24
            || time < NaiveTime::from_hms_opt(self.end_hour, 0, 0).expect("valid hour");
        weekday_ok && after_start && before_end
    }
}

/// Keeps observations whose hour starts inside the study window, in order.
pub fn filter_study_window(obs: &[SegmentObservation], window: &StudyWindow) -> Vec<SegmentObservation> {
    obs.iter()
        .filter(|o| window.contains(o.hour_start))
        .cloned()
        .collect()
}

/// Keeps plans with `|mean_cycle - target| <= tol`.
pub fn filter_cycle_length(stats: &[SignalPlanStats], target: f64, tol: f64) -> Vec<SignalPlanStats> {
    stats
        .iter()
        .filter(|s| (s.mean_cycle - target).abs() <= tol)
        .cloned()
        .collect()
}

/// Drops observations with flow above `q_cap`, or whose flow bin of the
/// given width is centred at or beyond `q_cap` (such a bin could not be fitted).
pub fn drop_above_capacity(
    obs: Vec<SegmentObservation>,
    q_cap: f64,
    width: f64,
) -> (Vec<SegmentObservation>, Vec<Skipped>) {
    let (kept, dropped): (Vec<_>, Vec<_>) = obs.into_iter().partition(|o| {
        let center = (libm::floor(o.flow / width) + 0.5) * width;
        o.flow <= q_cap && center < q_cap
    });
    let skipped = dropped
        .into_iter()
        .map(|o| Skipped {
            segment_id: o.segment_id,
            hour_start: Some(o.hour_start),
            reason: SkipReason::AboveCapacity,
        })
        .collect();
    (kept, skipped)
}

/// Groups observations into half-open flow bins of the given width.
///
/// Empty bins are omitted and the result is sorted by bin index. The caller
/// passes one segment's observations.
pub fn bin_flows(obs: &[SegmentObservation], width: f64) -> Result<Vec<BinnedPoint>> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::Param(format!("bin width must be > 0, got {width}")));
    }
    let mut bins: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for o in obs {
        let index = libm::floor(o.flow / width) as i64;
        let bin = bins.entry(index).or_default();
        bin.0 += o.speed;
        bin.1 += 1;
    }
    Ok(bins
        .into_iter()
        .map(|(bin_index, (sum, count))| BinnedPoint {
            bin_index,
            bin_center: (bin_index as f64 + 0.5) * width,
            mean_speed: sum / count as f64,
            count,
        })
        .collect())
}

/// Splits observations by segment id, keeping each segment's order.
pub fn group_by_segment(obs: Vec<SegmentObservation>) -> BTreeMap<String, Vec<SegmentObservation>> {
    let mut groups: BTreeMap<String, Vec<SegmentObservation>> = BTreeMap::new();
    for o in obs {
        groups.entry(o.segment_id.clone()).or_default().push(o);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn at(day: u32, h: u32, m: u32) -> NaiveDateTime {
        // 2024-01-01 is a Monday
        NaiveDate::from_ymd_opt(2024, 1, day)
            .unwrap()
            .and_hms_opt(h, m, 0)
            .unwrap()
    }

    fn count(seg: &str, lane: &str, t: NaiveDateTime, n: u64) -> CountRecord {
        CountRecord {
            segment_id: seg.into(),
            lane_id: lane.into(),
            timestamp: t,
            count: n,
        }
    }

    fn speed(seg: &str, t: NaiveDateTime, v: f64) -> SpeedRecord {
        SpeedRecord {
            segment_id: seg.into(),
            timestamp: t,
            speed_kmh: v,
        }
    }

    fn lanes(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|&(s, n)| (s.into(), n)).collect()
    }

    fn obs(flow: f64, speed: f64) -> SegmentObservation {
        SegmentObservation {
            segment_id: "A".into(),
            hour_start: at(2, 8, 0),
            flow,
            speed,
        }
    }

    fn ev(t: f64, phase: u32, kind: EventKind) -> SignalEvent {
        SignalEvent {
            timestamp: t,
            phase,
            kind,
        }
    }

    #[test]
    fn hourly_flow_is_per_lane() {
        let counts = [
            count("A", "1", at(2, 8, 0), 300),
            count("A", "2", at(2, 8, 0), 330),
        ];
        let speeds = [speed("A", at(2, 8, 30), 42.0)];
        let (o, skipped) = aggregate_hourly(&counts, &speeds, &lanes(&[("A", 2)])).unwrap();
        assert_eq!(o.len(), 1);
        assert_eq!(o[0].flow, 315.0);
        assert_eq!(o[0].speed, 42.0);
        assert_eq!(o[0].hour_start, at(2, 8, 0));
        assert!(skipped.is_empty());
    }

    #[test]
    fn hours_missing_a_side_are_reported() {
        let counts = [count("A", "1", at(2, 8, 0), 300), count("A", "1", at(2, 9, 0), 200)];
        let speeds = [speed("A", at(2, 9, 10), 40.0), speed("A", at(2, 10, 10), 40.0)];
        let (o, skipped) = aggregate_hourly(&counts, &speeds, &lanes(&[("A", 1)])).unwrap();
        assert_eq!(o.len(), 1);
        assert_eq!(o[0].hour_start, at(2, 9, 0));
        assert_eq!(skipped.len(), 2);
        assert_eq!(skipped[0].reason, SkipReason::MissingSpeed);
        assert_eq!(skipped[0].hour_start, Some(at(2, 8, 0)));
        assert_eq!(skipped[1].reason, SkipReason::MissingCounts);
    }

    #[test]
    fn zero_flow_hour_is_kept() {
        let counts = [count("A", "1", at(2, 8, 0), 0), count("A", "1", at(2, 8, 45), 0)];
        let speeds = [speed("A", at(2, 8, 5), 55.0), speed("A", at(2, 8, 35), 45.0)];
        let (o, _) = aggregate_hourly(&counts, &speeds, &lanes(&[("A", 1)])).unwrap();
        assert_eq!((o[0].flow, o[0].speed), (0.0, 50.0));
    }

    #[test]
    fn missing_lane_count_is_a_config_error() {
        let counts = [count("B", "1", at(2, 8, 0), 10)];
        let err = aggregate_hourly(&counts, &[], &lanes(&[("A", 1)]));
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn sub_hour_records_sum() {
        let whole = [count("A", "1", at(2, 8, 0), 500)];
        let split = [count("A", "1", at(2, 8, 0), 123), count("A", "1", at(2, 8, 59), 377)];
        let speeds = [speed("A", at(2, 8, 0), 40.0)];
        let l = lanes(&[("A", 2)]);
        assert_eq!(
            aggregate_hourly(&whole, &speeds, &l).unwrap(),
            aggregate_hourly(&split, &speeds, &l).unwrap()
        );
    }

    fn constant_plan(cycle: f64, green: f64, n: usize, phases: &[u32]) -> Vec<SignalEvent> {
        let mut events = Vec::new();
        for k in 0..n {
            let t = k as f64 * cycle;
            events.push(ev(t, 0, EventKind::CycleStart));
            for &p in phases {
                events.push(ev(t, p, EventKind::GreenStart));
                events.push(ev(t + green, p, EventKind::GreenEnd));
            }
        }
        events.push(ev(n as f64 * cycle, 0, EventKind::CycleStart));
        events
    }

    #[test]
    fn constant_plan_split() {
        let events = constant_plan(100.0, 40.0, 10, &[2]);
        let s = compute_green_split("A", &events, &DEFAULT_PHASES, None).unwrap();
        assert_eq!(s.mean_cycle, 100.0);
        assert_eq!(s.mean_green, 40.0);
        assert_eq!(s.g.value(), 0.4);
    }

    #[test]
    fn coincident_phases_are_merged() {
        let events = constant_plan(100.0, 40.0, 10, &[2, 6]);
        let s = compute_green_split("A", &events, &DEFAULT_PHASES, None).unwrap();
        assert_eq!(s.g.value(), 0.4);
    }

    #[test]
    fn overlapping_phases_take_the_union() {
        // phase 2 on [0, 40), phase 6 on [10, 50): union is 50 s
        let mut events = vec![
            ev(0.0, 0, EventKind::CycleStart),
            ev(100.0, 0, EventKind::CycleStart),
        ];
        events.extend([
            ev(0.0, 2, EventKind::GreenStart),
            ev(40.0, 2, EventKind::GreenEnd),
            ev(10.0, 6, EventKind::GreenStart),
            ev(50.0, 6, EventKind::GreenEnd),
        ]);
        let s = compute_green_split("A", &events, &DEFAULT_PHASES, None).unwrap();
        assert_eq!(s.mean_green, 50.0);
        assert_eq!(s.g.value(), 0.5);
    }

    #[test]
    fn other_phases_and_window_are_respected() {
        let mut events = constant_plan(100.0, 30.0, 10, &[2]);
        events.extend(
            constant_plan(100.0, 70.0, 10, &[4])
                .into_iter()
                .filter(|e| e.kind != EventKind::CycleStart),
        );
        let s = compute_green_split("A", &events, &[2, 6], None).unwrap();
        assert!((s.g.value() - 0.3).abs() < 1e-12);
        // only cycles 2..5 are inside the window; the cut cycle-5 green is dropped
        let s = compute_green_split("A", &constant_plan(100.0, 30.0, 10, &[2]), &[2], Some(200.0..520.0)).unwrap();
        assert_eq!(s.mean_cycle, 100.0);
        assert_eq!(s.mean_green, 30.0);
    }

    #[test]
    fn split_needs_two_cycles_and_a_green() {
        let one_cycle = vec![
            ev(0.0, 0, EventKind::CycleStart),
            ev(0.0, 2, EventKind::GreenStart),
            ev(40.0, 2, EventKind::GreenEnd),
        ];
        assert!(matches!(compute_green_split("A", &one_cycle, &[2], None), Err(Error::Data(_))));
        let no_green = constant_plan(100.0, 40.0, 3, &[]);
        assert!(matches!(compute_green_split("A", &no_green, &[2], None), Err(Error::Data(_))));
    }

    #[test]
    fn impossible_split_is_an_invariant_error() {
        // green spans the entire cycle
        let events = vec![
            ev(0.0, 0, EventKind::CycleStart),
            ev(0.0, 2, EventKind::GreenStart),
            ev(100.0, 2, EventKind::GreenEnd),
            ev(100.0, 0, EventKind::CycleStart),
        ];
        assert!(matches!(compute_green_split("A", &events, &[2], None), Err(Error::Invariant(_))));
    }

    #[test]
    fn event_order_checks() {
        let events = vec![
            ev(40.0, 2, EventKind::GreenEnd),
            ev(0.0, 0, EventKind::CycleStart),
            ev(0.0, 2, EventKind::GreenStart),
        ];
        let sorted = normalize_events(events).unwrap();
        assert_eq!(sorted[0].kind, EventKind::CycleStart);
        assert_eq!(sorted[2].kind, EventKind::GreenEnd);

        let bad = vec![ev(10.0, 2, EventKind::GreenEnd), ev(20.0, 2, EventKind::GreenStart)];
        assert!(matches!(normalize_events(bad), Err(Error::Order(_))));
        let twice = vec![ev(10.0, 2, EventKind::GreenStart), ev(20.0, 2, EventKind::GreenStart)];
        assert!(matches!(normalize_events(twice), Err(Error::Order(_))));
        // an end and the next start at the same instant pair correctly
        let back_to_back = vec![
            ev(50.0, 2, EventKind::GreenStart),
            ev(50.0, 2, EventKind::GreenEnd),
            ev(0.0, 2, EventKind::GreenStart),
        ];
        assert!(normalize_events(back_to_back).is_ok());
    }

    #[test]
    fn study_window_edges() {
        let w = StudyWindow::default();
        assert!(!w.contains(at(6, 10, 0))); // Saturday
        assert!(!w.contains(at(7, 10, 0))); // Sunday
        assert!(!w.contains(at(2, 6, 0))); // Tuesday
        assert!(!w.contains(at(2, 6, 59)));
        assert!(w.contains(at(2, 7, 0)));
        assert!(w.contains(at(2, 19, 0)));
        assert!(!w.contains(at(2, 20, 0)));
        assert!(w.contains(at(5, 12, 0))); // Friday
        let all = StudyWindow {
            start_hour: 0,
            end_hour: 24,
            weekdays_only: false,
        };
        assert!(all.contains(at(6, 23, 0)) && all.contains(at(7, 0, 0)));
    }

    #[test]
    fn cycle_filter_edges() {
        let plan = |c: f64| SignalPlanStats {
            segment_id: format!("{c}"),
            mean_cycle: c,
            mean_green: 40.0,
            g: GreenSplit::new(40.0 / c).unwrap(),
        };
        let stats: Vec<_> = [108.9, 109.0, 114.0, 119.0, 119.5].into_iter().map(plan).collect();
        let kept: Vec<f64> = filter_cycle_length(&stats, DEFAULT_CYCLE_TARGET, DEFAULT_CYCLE_TOLERANCE)
            .iter()
            .map(|s| s.mean_cycle)
            .collect();
        assert_eq!(kept, vec![109.0, 114.0, 119.0]);
        assert!(filter_cycle_length(&[], 114.0, 5.0).is_empty());
    }

    #[test]
    fn binning_examples() {
        let bins = bin_flows(&[obs(10.0, 50.0), obs(20.0, 40.0)], 30.0).unwrap();
        assert_eq!(
            bins,
            vec![BinnedPoint {
                bin_index: 0,
                bin_center: 15.0,
                mean_speed: 45.0,
                count: 2
            }]
        );
        let bins = bin_flows(&[obs(30.0, 50.0), obs(29.999, 40.0)], 30.0).unwrap();
        assert_eq!(bins.iter().map(|b| b.bin_index).collect::<Vec<_>>(), vec![0, 1]);
        assert!(bin_flows(&[], 30.0).unwrap().is_empty());
        assert!(bin_flows(&[obs(1.0, 1.0)], 0.0).is_err());
        let b = &bin_flows(&[obs(50.0, 1.0)], 30.0).unwrap()[0];
        assert_eq!((b.lower_edge(), b.upper_edge()), (30.0, 60.0));
    }

    #[test]
    fn capacity_drop_reports() {
        let (kept, skipped) = drop_above_capacity(vec![obs(100.0, 1.0), obs(700.0, 1.0), obs(595.0, 1.0)], 600.0, 30.0);
        assert_eq!(kept.iter().map(|o| o.flow).collect::<Vec<_>>(), vec![100.0, 595.0]);
        assert_eq!(skipped.len(), 1);
        assert_eq!(skipped[0].reason, SkipReason::AboveCapacity);
        // below q_cap but the bin [570, 600) is centred at 585 > 580
        let (kept, skipped) = drop_above_capacity(vec![obs(575.0, 1.0), obs(569.0, 1.0)], 580.0, 30.0);
        assert_eq!(kept.iter().map(|o| o.flow).collect::<Vec<_>>(), vec![569.0]);
        assert_eq!(skipped.len(), 1);
    }

    proptest! {
        #[test]
        fn bins_partition_observations(flows in proptest::collection::vec(0.0..2000.0f64, 0..200)) {
            let o: Vec<_> = flows.iter().map(|&f| obs(f, f / 10.0)).collect();
            let bins = bin_flows(&o, 30.0).unwrap();
            prop_assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), o.len());
            for w in bins.windows(2) {
                prop_assert!(w[0].bin_index < w[1].bin_index);
            }
            for b in &bins {
                prop_assert_eq!(b.bin_center, (b.bin_index as f64 + 0.5) * 30.0);
                let members = o.iter().filter(|x| libm::floor(x.flow / 30.0) as i64 == b.bin_index).count();
                prop_assert_eq!(members, b.count);
            }
        }

        #[test]
        fn study_filter_is_idempotent(hours in proptest::collection::vec((1u32..15, 0u32..24), 0..60)) {
            let o: Vec<_> = hours
                .iter()
                .map(|&(d, h)| SegmentObservation { hour_start: at(d, h, 0), ..obs(1.0, 1.0) })
                .collect();
            let w = StudyWindow::default();
            let once = filter_study_window(&o, &w);
            prop_assert_eq!(filter_study_window(&once, &w), once.clone());
            prop_assert!(once.iter().all(|x| w.contains(x.hour_start)));
        }

        #[test]
        fn green_split_ignores_row_order(seed in any::<u64>(), greens in proptest::collection::vec(20.0..60.0f64, 3..12)) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut events = Vec::new();
            for (k, &gr) in greens.iter().enumerate() {
                let t = k as f64 * 100.0;
                events.push(ev(t, 0, EventKind::CycleStart));
                events.push(ev(t, 2, EventKind::GreenStart));
                events.push(ev(t + gr, 2, EventKind::GreenEnd));
                events.push(ev(t + 5.0, 6, EventKind::GreenStart));
                events.push(ev(t + gr - 5.0, 6, EventKind::GreenEnd));
            }
            events.push(ev(greens.len() as f64 * 100.0, 0, EventKind::CycleStart));
            let reference = compute_green_split("A", &events, &[2, 6], None).unwrap();
            let expected = greens.iter().sum::<f64>() / greens.len() as f64 / 100.0;
            prop_assert!((reference.g.value() - expected).abs() < 1e-9);
            let mut shuffled = events.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(compute_green_split("A", &shuffled, &[2, 6], None).unwrap(), reference);
        }
    }
}
