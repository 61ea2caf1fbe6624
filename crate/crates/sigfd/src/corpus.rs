//! Synthetic corpora written in the ingestion file formats.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::Duration;
use serde::Deserialize;
use sigfd_core::fd::{FdParams, GreenSplit, SignalTheta};
use sigfd_core::ingest::{CountRecord, SegmentObservation, SpeedRecord, DEFAULT_BIN_WIDTH, DEFAULT_PHASES};
use sigfd_core::oracle::{fixed_time_log, sample_fd_at_demand, simulate_segment, SyntheticSegmentSpec};

use crate::config::{SegmentEntry, SegmentsConfig};
use crate::error::{CliError, Result};
use crate::formats;

/// Coefficients behind the default corpus: over g in [0.3, 0.8], beta falls
/// from 1.1 to 0.6 and alpha rises from 1.375 to 2, so curves move up with g.
pub const DEMO_THETA: [f64; 4] = [1.4, -1.0, 1.1, -1.0];

/// Cycles written to each event log.
const LOG_CYCLES: usize = 32;

/// How speeds are generated for a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    /// Free-flow travel time plus uniform signal delay.
    Webster,
    /// The speed-flow curve itself, with capacity `g * sat_flow`.
    Fd { alpha: f64, beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSegment {
    pub spec: SyntheticSegmentSpec,
    pub lane_count: u32,
    pub model: Model,
}

impl CorpusSegment {
    pub fn capacity(&self) -> f64 {
        self.spec.capacity()
    }

    pub fn observations(&self) -> Result<Vec<SegmentObservation>> {
        let s = &self.spec;
        Ok(match self.model {
            Model::Webster => simulate_segment(s)?,
            Model::Fd { alpha, beta } => {
                s.validate()?;
                let params = FdParams::new(s.v_max, s.capacity(), alpha, beta)?;
                sample_fd_at_demand(&s.segment_id, &params, &s.demand, s.noise_sigma, s.seed)?
            }
        })
    }
}

/// Bin centres of the given width strictly below `fraction * capacity`.
pub fn bin_center_demand(capacity: f64, fraction: f64, width: f64) -> Vec<f64> {
    (0..)
        .map(|k| (k as f64 + 0.5) * width)
        .take_while(|&q| q < fraction * capacity)
        .collect()
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

fn default_length() -> f64 {
    400.0
}
fn default_v_max() -> f64 {
    50.0
}
fn default_cycle() -> f64 {
    114.0
}
fn default_sat_flow() -> f64 {
    1800.0
}
fn default_lanes() -> u32 {
    2
}
fn default_fraction() -> f64 {
    0.95
}
fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    #[default]
    Webster,
    Fd,
}

/// One `[[segment]]` table of a simulate spec file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpecToml {
    pub segment_id: String,
    #[serde(default)]
    pub model: ModelName,
    pub g: f64,
    #[serde(default = "default_length")]
    pub length_m: f64,
    #[serde(default = "default_v_max")]
    pub v_max_kmh: f64,
    #[serde(default = "default_cycle")]
    pub cycle_s: f64,
    #[serde(default = "default_sat_flow")]
    pub sat_flow: f64,
    #[serde(default = "default_lanes")]
    pub lane_count: u32,
    pub demand: Option<Vec<f64>>,
    #[serde(default = "default_fraction")]
    pub demand_fraction: f64,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

/// A simulate spec file: optional `theta` for `fd` segments without their
/// own `alpha`/`beta`, and a list of `[[segment]]` tables.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub theta: Option<[f64; 4]>,
    #[serde(rename = "segment")]
    pub segments: Vec<SegmentSpecToml>,
}

impl SimulateSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn build(&self) -> Result<Vec<CorpusSegment>> {
        self.segments.iter().map(|s| self.build_one(s)).collect()
    }

    fn build_one(&self, s: &SegmentSpecToml) -> Result<CorpusSegment> {
        let g = GreenSplit::new(s.g)?;
        let capacity = s.g * s.sat_flow;
        let base = match &s.demand {
            Some(d) => d.clone(),
            None => bin_center_demand(capacity, s.demand_fraction, DEFAULT_BIN_WIDTH),
        };
        let demand = (0..s.repeats.max(1)).flat_map(|_| base.iter().copied()).collect();
        let model = match s.model {
            ModelName::Webster => Model::Webster,
            ModelName::Fd => match (s.alpha, s.beta, self.theta) {
                (Some(alpha), Some(beta), _) => Model::Fd { alpha, beta },
                (None, None, Some(t)) => {
                    let p = sigfd_core::fd::params_from_signal(&SignalTheta::from_coefficients(t), g, 1.0, 1.0)?;
                    Model::Fd { alpha: p.alpha, beta: p.beta }
                }
                _ => {
                    return Err(CliError::Config(format!(
                        "segment '{}': fd model needs alpha and beta, or a top-level theta",
                        s.segment_id
                    )))
                }
            },
        };
        Ok(CorpusSegment {
            spec: SyntheticSegmentSpec {
                segment_id: s.segment_id.clone(),
                length: s.length_m,
                v_max: s.v_max_kmh,
                cycle: s.cycle_s,
                g,
                sat_flow: s.sat_flow,
                demand,
                noise_sigma: s.noise_sigma,
                seed: s.seed,
            },
            lane_count: s.lane_count,
            model,
        })
    }
}

/// Ten segments with green splits evenly spaced over [0.3, 0.8], speeds on
/// the curves implied by [`DEMO_THETA`] with 0.5 km/h noise, three hours per
/// demand level.
pub fn default_corpus() -> Vec<CorpusSegment> {
    let theta = SignalTheta::from_coefficients(DEMO_THETA);
    linspace(0.3, 0.8, 10)
        .into_iter()
        .enumerate()
        .map(|(i, g)| {
            let g = GreenSplit::new(g).expect("grid inside (0, 1)");
            let p = sigfd_core::fd::params_from_signal(&theta, g, 1.0, 1.0).expect("demo theta is feasible");
            let base = bin_center_demand(g.value() * 1800.0, 0.95, DEFAULT_BIN_WIDTH);
            CorpusSegment {
                spec: SyntheticSegmentSpec {
                    segment_id: format!("S{:02}", i + 1),
                    length: 400.0,
                    v_max: 50.0,
                    cycle: 114.0,
                    g,
                    sat_flow: 1800.0,
                    demand: (0..3).flat_map(|_| base.iter().copied()).collect(),
                    noise_sigma: 0.5,
                    seed: i as u64 + 1,
                },
                lane_count: 2,
                model: Model::Fd { alpha: p.alpha, beta: p.beta },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusFiles {
    pub counts: PathBuf,
    pub speeds: PathBuf,
    pub segments: PathBuf,
    pub events_dir: PathBuf,
}

/// Splits `total` into `parts` integers differing by at most one, larger
/// parts first.
fn split_even(total: u64, parts: u64) -> impl Iterator<Item = u64> {
    (0..parts).map(move |i| total / parts + u64::from(i < total % parts))
}

fn count_records(seg: &CorpusSegment, obs: &[SegmentObservation]) -> Result<Vec<CountRecord>> {
    let lanes = u64::from(seg.lane_count);
    let mut out = Vec::with_capacity(obs.len() * lanes as usize * 4);
    for o in obs {
        let exact = o.flow * lanes as f64;
        let total = exact.round();
        if (exact - total).abs() > 1e-9 || total < 0.0 {
            return Err(CliError::Config(format!(
                "segment '{}': demand {} x {} lanes is not a whole number of vehicles",
                seg.spec.segment_id, o.flow, lanes
            )));
        }
        for (lane, lane_total) in split_even(total as u64, lanes).enumerate() {
            for (quarter, c) in split_even(lane_total, 4).enumerate() {
                out.push(CountRecord {
                    segment_id: seg.spec.segment_id.clone(),
                    lane_id: format!("L{}", lane + 1),
                    timestamp: o.hour_start + Duration::minutes(15 * quarter as i64),
                    count: c,
                });
            }
        }
    }
    Ok(out)
}

/// Writes `counts.csv`, `speeds.csv`, `segments.toml` and one event log per
/// segment under `events/`. Returns the paths and the observations the
/// files encode.
pub fn generate_corpus(segments: &[CorpusSegment], out_dir: &Path) -> Result<(CorpusFiles, Vec<SegmentObservation>)> {
    if segments.is_empty() {
        return Err(CliError::Config("corpus needs at least one segment".into()));
    }
    let mut seen = BTreeSet::new();
    for s in segments {
        if !seen.insert(s.spec.segment_id.as_str()) {
            return Err(CliError::Config(format!("duplicate segment_id '{}'", s.spec.segment_id)));
        }
        if s.lane_count == 0 {
            return Err(CliError::Config(format!("segment '{}': lane_count must be >= 1", s.spec.segment_id)));
        }
    }

    let mut counts = Vec::new();
    let mut speeds = Vec::new();
    let mut all_obs = Vec::new();
    let mut config = SegmentsConfig::default();
    let mut logs = Vec::new();
    for seg in segments {
        let obs = seg.observations()?;
        counts.extend(count_records(seg, &obs)?);
        speeds.extend(obs.iter().map(|o| SpeedRecord {
            segment_id: o.segment_id.clone(),
            timestamp: o.hour_start,
            speed_kmh: o.speed,
        }));
        let id = &seg.spec.segment_id;
        let rel = PathBuf::from("events").join(format!("{id}.csv"));
        config.segments.insert(
            id.clone(),
            SegmentEntry {
                lane_count: seg.lane_count,
                v_max_kmh: seg.spec.v_max,
                q_cap: Some(seg.capacity()),
                events: Some(rel.clone()),
            },
        );
        logs.push((rel, fixed_time_log(0.0, seg.spec.cycle, seg.spec.g, LOG_CYCLES, &DEFAULT_PHASES)));
        all_obs.extend(obs);
    }

    let files = CorpusFiles {
        counts: out_dir.join("counts.csv"),
        speeds: out_dir.join("speeds.csv"),
        segments: out_dir.join("segments.toml"),
        events_dir: out_dir.join("events"),
    };
    std::fs::create_dir_all(&files.events_dir).map_err(|e| CliError::io(&files.events_dir, e))?;
    formats::write_counts(&files.counts, &counts)?;
    formats::write_speeds(&files.speeds, &speeds)?;
    for (rel, log) in &logs {
        formats::write_signal_events(&out_dir.join(rel), log)?;
    }
    formats::write_atomic(&files.segments, &config.to_toml())?;
    Ok((files, all_obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sigfd_core::fd::audit_monotone_in_green;

    #[test]
    fn demand_grid_and_linspace() {
        assert_eq!(bin_center_demand(100.0, 0.95, 30.0), vec![15.0, 45.0, 75.0]);
        assert_eq!(bin_center_demand(10.0, 0.95, 30.0), Vec::<f64>::new());
        let g = linspace(0.3, 0.8, 10);
        assert_eq!(g.len(), 10);
        assert_eq!((g[0], g[9]), (0.3, 0.8));
        assert!((g[1] - 0.3 - 0.5 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn splits_sum_back() {
        assert_eq!(split_even(15, 4).collect::<Vec<_>>(), vec![4, 4, 4, 3]);
        assert_eq!(split_even(2, 4).collect::<Vec<_>>(), vec![1, 1, 0, 0]);
        for total in 0..50 {
            assert_eq!(split_even(total, 3).sum::<u64>(), total);
        }
    }

    #[test]
    fn demo_theta_shifts_curves_up() {
        let theta = SignalTheta::from_coefficients(DEMO_THETA);
        theta.check_feasible().unwrap();
        let gs: Vec<_> = linspace(0.3, 0.8, 10).into_iter().map(|g| GreenSplit::new(g).unwrap()).collect();
        let qs = linspace(0.0, 1.0, 101);
        assert!(audit_monotone_in_green(&theta, 1.0, 1.0, &gs, &qs).unwrap().pass);
    }

    #[test]
    fn default_corpus_shape() {
        let c = default_corpus();
        assert_eq!(c.len(), 10);
        for s in &c {
            s.spec.validate().unwrap();
            assert!(s.spec.demand.iter().all(|&q| q < 0.95 * s.capacity()));
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = default_corpus();
        c.truncate(2);
        c[1].spec.segment_id = c[0].spec.segment_id.clone();
        assert!(matches!(generate_corpus(&c, dir.path()), Err(CliError::Config(_))));
        assert!(matches!(generate_corpus(&[], dir.path()), Err(CliError::Config(_))));
    }

    #[test]
    fn fractional_vehicle_counts_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = default_corpus();
        c.truncate(1);
        c[0].spec.demand = vec![15.25];
        assert!(matches!(generate_corpus(&c, dir.path()), Err(CliError::Config(_))));
    }

    #[test]
    fn spec_file_builds_both_models() {
        let spec: SimulateSpec = toml::from_str(
            "theta = [1.4, -1.0, 1.1, -1.0]\n\
             [[segment]]\nsegment_id = \"A\"\ng = 0.5\nseed = 3\n\
             [[segment]]\nsegment_id = \"B\"\nmodel = \"fd\"\ng = 0.5\ndemand = [15.0, 45.0]\nrepeats = 2\n",
        )
        .unwrap();
        let segs = spec.build().unwrap();
        assert_eq!(segs[0].model, Model::Webster);
        assert_eq!(segs[0].spec.demand, bin_center_demand(900.0, 0.95, 30.0));
        assert_eq!(segs[1].spec.demand, vec![15.0, 45.0, 15.0, 45.0]);
        match segs[1].model {
            Model::Fd { alpha, beta } => {
                assert!((beta - 0.9).abs() < 1e-12);
                assert!((alpha - 0.9 / 0.6).abs() < 1e-12);
            }
            other => panic!("unexpected model {other:?}"),
        }
        let no_theta: SimulateSpec =
            toml::from_str("[[segment]]\nsegment_id = \"B\"\nmodel = \"fd\"\ng = 0.5\n").unwrap();
        assert!(matches!(no_theta.build(), Err(CliError::Config(_))));
    }
}
