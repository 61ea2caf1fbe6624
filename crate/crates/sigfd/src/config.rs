//! TOML configuration: the per-segment table and the optional run file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sigfd_core::calibration::FitOptions;
use sigfd_core::ingest::{
    StudyWindow, DEFAULT_BIN_WIDTH, DEFAULT_CYCLE_TARGET, DEFAULT_CYCLE_TOLERANCE, DEFAULT_PHASES,
};

use crate::error::{CliError, Result};

/// Minimum observations a bin needs to count towards the estimated capacity.
pub const DEFAULT_MIN_BIN_COUNT: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub lane_count: u32,
    pub v_max_kmh: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_cap: Option<f64>,
    /// Event log path; relative paths are taken from the config file's
    /// directory. Defaults to `events/<segment_id>.csv`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentsConfig {
    pub segments: BTreeMap<String, SegmentEntry>,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl SegmentsConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: SegmentsConfig = read_toml(path)?;
        let base = base_dir(path);
        for (id, s) in &mut cfg.segments {
            if s.lane_count == 0 {
                return Err(CliError::Config(format!("segment '{id}': lane_count must be >= 1")));
            }
            if !(s.v_max_kmh > 0.0 && s.v_max_kmh.is_finite()) {
                return Err(CliError::Config(format!("segment '{id}': v_max_kmh must be > 0")));
            }
            if let Some(q) = s.q_cap {
                if !(q > 0.0 && q.is_finite()) {
                    return Err(CliError::Config(format!("segment '{id}': q_cap must be > 0")));
                }
            }
            if let Some(events) = &s.events {
                s.events = Some(resolve(&base, events));
            }
        }
        Ok(cfg)
    }

    pub fn lane_counts(&self) -> BTreeMap<String, u32> {
        self.segments
            .iter()
            .map(|(id, s)| (id.clone(), s.lane_count))
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("segments config serializes")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub max_iter: Option<usize>,
    pub grad_tol: Option<f64>,
    pub step_tol: Option<f64>,
    pub initial_alpha: Option<f64>,
    pub initial_beta: Option<f64>,
    pub weighted: Option<bool>,
}

/// Optional run file. Every field may also be given as a flag; flags win.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub counts: Option<PathBuf>,
    pub speeds: Option<PathBuf>,
    pub segments: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub bin_width: Option<f64>,
    pub cycle_target: Option<f64>,
    pub cycle_tolerance: Option<f64>,
    pub phases: Option<Vec<u32>>,
    pub start_hour: Option<u32>,
    pub end_hour: Option<u32>,
    pub weekdays_only: Option<bool>,
    pub min_bin_count: Option<usize>,
    #[serde(default)]
    pub fit: FitSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = read_toml(path)?;
        let base = base_dir(path);
        for p in [&mut cfg.counts, &mut cfg.speeds, &mut cfg.segments, &mut cfg.out_dir]
            .into_iter()
            .flatten()
        {
            *p = resolve(&base, p);
        }
        Ok(cfg)
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Overlays `other` (the flags) on `self` (the file).
    pub fn merged(self, other: RunConfig) -> RunConfig {
        RunConfig {
            counts: other.counts.or(self.counts),
            speeds: other.speeds.or(self.speeds),
            segments: other.segments.or(self.segments),
            out_dir: other.out_dir.or(self.out_dir),
            bin_width: other.bin_width.or(self.bin_width),
            cycle_target: other.cycle_target.or(self.cycle_target),
            cycle_tolerance: other.cycle_tolerance.or(self.cycle_tolerance),
            phases: other.phases.or(self.phases),
            start_hour: other.start_hour.or(self.start_hour),
            end_hour: other.end_hour.or(self.end_hour),
            weekdays_only: other.weekdays_only.or(self.weekdays_only),
            min_bin_count: other.min_bin_count.or(self.min_bin_count),
            fit: FitSection {
                max_iter: other.fit.max_iter.or(self.fit.max_iter),
                grad_tol: other.fit.grad_tol.or(self.fit.grad_tol),
                step_tol: other.fit.step_tol.or(self.fit.step_tol),
                initial_alpha: other.fit.initial_alpha.or(self.fit.initial_alpha),
                initial_beta: other.fit.initial_beta.or(self.fit.initial_beta),
                weighted: other.fit.weighted.or(self.fit.weighted),
            },
        }
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width.unwrap_or(DEFAULT_BIN_WIDTH)
    }

    pub fn cycle_target(&self) -> f64 {
        self.cycle_target.unwrap_or(DEFAULT_CYCLE_TARGET)
    }

    pub fn cycle_tolerance(&self) -> f64 {
        self.cycle_tolerance.unwrap_or(DEFAULT_CYCLE_TOLERANCE)
    }

    pub fn phases(&self) -> Vec<u32> {
        self.phases.clone().unwrap_or_else(|| DEFAULT_PHASES.to_vec())
    }

    pub fn min_bin_count(&self) -> usize {
        self.min_bin_count.unwrap_or(DEFAULT_MIN_BIN_COUNT)
    }

    pub fn study_window(&self) -> Result<StudyWindow> {
        let d = StudyWindow::default();
        let w = StudyWindow {
            start_hour: self.start_hour.unwrap_or(d.start_hour),
            end_hour: self.end_hour.unwrap_or(d.end_hour),
            weekdays_only: self.weekdays_only.unwrap_or(d.weekdays_only),
        };
        if w.start_hour > 23 || w.end_hour > 24 || w.start_hour >= w.end_hour {
            return Err(CliError::Config(format!(
                "study window [{}:00, {}:00) is empty or invalid",
                w.start_hour, w.end_hour
            )));
        }
        Ok(w)
    }

    pub fn fit_options(&self) -> Result<FitOptions> {
        let d = FitOptions::default();
        let opts = FitOptions {
            max_iter: self.fit.max_iter.unwrap_or(d.max_iter),
            grad_tol: self.fit.grad_tol.unwrap_or(d.grad_tol),
            step_tol: self.fit.step_tol.unwrap_or(d.step_tol),
            initial_alpha: self.fit.initial_alpha.unwrap_or(d.initial_alpha),
            initial_beta: self.fit.initial_beta.unwrap_or(d.initial_beta),
            weight_by_count: self.fit.weighted.unwrap_or(d.weight_by_count),
            ..d
        };
        opts.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(opts)
    }

    pub fn require<'a>(&self, value: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("no {name} given (flag or config file)")))
    }
}
