//! CSV readers and writers.
//!
//! Readers check the header exactly and report the 1-based file line of any
//! malformed row. Writers build the whole file in memory and replace the
//! destination atomically. Decimal columns of the binned file use six
//! decimal places; every other float column uses the shortest text that
//! reads back to the same `f64`.

use std::fmt::Write as _;
use std::fs::File;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use csv::StringRecord;
use sigfd_core::calibration::{FitMethod, Metrics, SegmentFit};
use sigfd_core::fd::{GreenSplit, SignalTheta};
use sigfd_core::ingest::{
    BinnedPoint, CountRecord, SignalEvent, SignalPlanStats, Skipped, SpeedRecord,
};

use crate::error::{CliError, Result};

pub const COUNTS_HEADER: &[&str] = &["segment_id", "lane_id", "timestamp", "count"];
pub const SPEEDS_HEADER: &[&str] = &["segment_id", "timestamp", "speed_kmh"];
pub const EVENTS_HEADER: &[&str] = &["timestamp", "phase", "kind"];
pub const BINNED_HEADER: &[&str] = &["segment_id", "bin_index", "bin_center", "mean_speed", "count"];
pub const PLAN_HEADER: &[&str] = &["segment_id", "mean_cycle", "mean_green", "g", "v_max_kmh", "q_cap"];
pub const SKIPPED_HEADER: &[&str] = &["segment_id", "hour_start", "reason"];
pub const FITS_HEADER: &[&str] = &[
    "segment_id", "g", "alpha", "beta", "q_cap", "rmse", "r2", "n", "converged",
];
pub const THETA_HEADER: &[&str] = &[
    "theta0", "theta1", "theta2", "theta3", "g_lo", "g_hi", "method", "pooled_rmse", "pooled_r2", "pooled_n",
];
pub const CURVE_HEADER: &[&str] = &["segment_id", "g", "flow", "speed"];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// One segment's signal plan together with the speed limit and capacity
/// used downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRecord {
    pub stats: SignalPlanStats,
    pub v_max: f64,
    pub q_cap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub segment_id: String,
    pub g: f64,
    pub alpha: f64,
    pub beta: f64,
    pub q_cap: f64,
    pub rmse: f64,
    pub r2: f64,
    pub n: usize,
    pub converged: bool,
}

impl From<&SegmentFit> for FitRecord {
    fn from(f: &SegmentFit) -> Self {
        Self {
            segment_id: f.segment_id.clone(),
            g: f.g.value(),
            alpha: f.params.alpha,
            beta: f.params.beta,
            q_cap: f.params.q_cap,
            rmse: f.rmse,
            r2: f.r2,
            n: f.n_points,
            converged: f.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaRecord {
    pub theta: SignalTheta,
    pub method: FitMethod,
    pub pooled: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub segment_id: String,
    pub g: f64,
    pub flow: f64,
    pub speed: f64,
}

pub fn parse_timestamp(s: &str) -> std::result::Result<NaiveDateTime, String> {
    let s = s.trim();
    NaiveDateTime::from_str(s)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .map_err(|_| format!("invalid timestamp '{s}'"))
}

pub fn format_timestamp(t: NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

/// Event times are plain seconds or ISO-8601 timestamps; the latter become
/// seconds since 1970-01-01T00:00:00 in the same local clock.
fn parse_event_time(s: &str) -> std::result::Result<f64, String> {
    if let Ok(x) = s.trim().parse::<f64>() {
        return if x.is_finite() {
            Ok(x)
        } else {
            Err(format!("non-finite timestamp '{s}'"))
        };
    }
    let t = parse_timestamp(s)?.and_utc();
    Ok(t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9)
}

fn field<'r>(rec: &'r StringRecord, i: usize, name: &str) -> std::result::Result<&'r str, String> {
    rec.get(i)
        .map(str::trim)
        .ok_or_else(|| format!("missing column '{name}'"))
}

fn nonempty<'r>(rec: &'r StringRecord, i: usize, name: &str) -> std::result::Result<&'r str, String> {
    let s = field(rec, i, name)?;
    if s.is_empty() {
        Err(format!("empty {name}"))
    } else {
        Ok(s)
    }
}

fn number<T: FromStr>(rec: &StringRecord, i: usize, name: &str) -> std::result::Result<T, String> {
    let s = field(rec, i, name)?;
    s.parse().map_err(|_| format!("invalid {name} '{s}'"))
}

fn finite(rec: &StringRecord, i: usize, name: &str) -> std::result::Result<f64, String> {
    let x: f64 = number(rec, i, name)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(format!("non-finite {name} '{x}'"))
    }
}

fn non_negative(rec: &StringRecord, i: usize, name: &str) -> std::result::Result<f64, String> {
    let x = finite(rec, i, name)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("negative {name} {x}"))
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

/// Reads a CSV file with the given exact header. An empty file is an
/// empty table.
fn read_table<T>(
    path: &Path,
    header: &[&str],
    mut row: impl FnMut(&StringRecord) -> std::result::Result<T, String>,
) -> Result<Vec<T>> {
    let file = open(path)?;
    if file.metadata().map_err(|e| CliError::io(path, e))?.len() == 0 {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let found = reader
        .headers()
        .map_err(|e| CliError::parse(path, 1, e.to_string()))?
        .clone();
    if found.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(CliError::parse(
            path,
            1,
            format!("expected header '{}', found '{}'", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    let mut rec = StringRecord::new();
    loop {
        match reader.read_record(&mut rec) {
            Ok(false) => break,
            Ok(true) => {
                let line = rec.position().map_or(0, |p| p.line());
                out.push(row(&rec).map_err(|reason| CliError::parse(path, line, reason))?);
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(CliError::parse(path, line, e.to_string()));
            }
        }
    }
    Ok(out)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(contents.as_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn header_line(header: &[&str]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    s
}

pub fn parse_counts(path: &Path) -> Result<Vec<CountRecord>> {
    read_table(path, COUNTS_HEADER, |r| {
        let count = field(r, 3, "count")?;
        let count = count.parse::<u64>().map_err(|_| {
            if count.starts_with('-') {
                format!("negative count {count}")
            } else {
                format!("invalid count '{count}'")
            }
        })?;
        Ok(CountRecord {
            segment_id: nonempty(r, 0, "segment_id")?.into(),
            lane_id: nonempty(r, 1, "lane_id")?.into(),
            timestamp: parse_timestamp(field(r, 2, "timestamp")?)?,
            count,
        })
    })
}

pub fn parse_speeds(path: &Path) -> Result<Vec<SpeedRecord>> {
    read_table(path, SPEEDS_HEADER, |r| {
        Ok(SpeedRecord {
            segment_id: nonempty(r, 0, "segment_id")?.into(),
            timestamp: parse_timestamp(field(r, 1, "timestamp")?)?,
            speed_kmh: non_negative(r, 2, "speed_kmh")?,
        })
    })
}

/// Events come back sorted; an end without a start (per phase) is an
/// order error.
pub fn parse_signal_events(path: &Path) -> Result<Vec<SignalEvent>> {
    let events = read_table(path, EVENTS_HEADER, |r| {
        Ok(SignalEvent {
            timestamp: parse_event_time(field(r, 0, "timestamp")?)?,
            phase: number(r, 1, "phase")?,
            kind: field(r, 2, "kind")?.parse().map_err(|e: sigfd_core::Error| e.to_string())?,
        })
    })?;
    sigfd_core::ingest::normalize_events(events).map_err(|e| match e {
        sigfd_core::Error::Order(m) => CliError::Core(sigfd_core::Error::Order(format!("{}: {m}", path.display()))),
        other => other.into(),
    })
}

pub fn write_counts(path: &Path, rows: &[CountRecord]) -> Result<()> {
    let mut s = header_line(COUNTS_HEADER);
    for r in rows {
        writeln!(s, "{},{},{},{}", r.segment_id, r.lane_id, format_timestamp(r.timestamp), r.count).unwrap();
    }
    write_atomic(path, &s)
}

pub fn write_speeds(path: &Path, rows: &[SpeedRecord]) -> Result<()> {
    let mut s = header_line(SPEEDS_HEADER);
    for r in rows {
        writeln!(s, "{},{},{}", r.segment_id, format_timestamp(r.timestamp), r.speed_kmh).unwrap();
    }
    write_atomic(path, &s)
}

pub fn write_signal_events(path: &Path, events: &[SignalEvent]) -> Result<()> {
    let mut s = header_line(EVENTS_HEADER);
    for e in events {
        writeln!(s, "{},{},{}", e.timestamp, e.phase, e.kind.as_str()).unwrap();
    }
    write_atomic(path, &s)
}

pub fn format_binned(rows: &[(String, BinnedPoint)]) -> String {
    let mut s = header_line(BINNED_HEADER);
    for (id, b) in rows {
        writeln!(s, "{id},{},{:.6},{:.6},{}", b.bin_index, b.bin_center, b.mean_speed, b.count).unwrap();
    }
    s
}

pub fn write_binned(path: &Path, rows: &[(String, BinnedPoint)]) -> Result<()> {
    write_atomic(path, &format_binned(rows))
}

pub fn read_binned(path: &Path) -> Result<Vec<(String, BinnedPoint)>> {
    read_table(path, BINNED_HEADER, |r| {
        let count: usize = number(r, 4, "count")?;
        if count == 0 {
            return Err("count must be >= 1".into());
        }
        Ok((
            nonempty(r, 0, "segment_id")?.into(),
            BinnedPoint {
                bin_index: number(r, 1, "bin_index")?,
                bin_center: finite(r, 2, "bin_center")?,
                mean_speed: non_negative(r, 3, "mean_speed")?,
                count,
            },
        ))
    })
}

pub fn write_plan_stats(path: &Path, rows: &[PlanRecord]) -> Result<()> {
    let mut s = header_line(PLAN_HEADER);
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{}",
            r.stats.segment_id,
            r.stats.mean_cycle,
            r.stats.mean_green,
            r.stats.g.value(),
            r.v_max,
            r.q_cap
        )
        .unwrap();
    }
    write_atomic(path, &s)
}

pub fn read_plan_stats(path: &Path) -> Result<Vec<PlanRecord>> {
    read_table(path, PLAN_HEADER, |r| {
        let g = finite(r, 3, "g")?;
        Ok(PlanRecord {
            stats: SignalPlanStats {
                segment_id: nonempty(r, 0, "segment_id")?.into(),
                mean_cycle: finite(r, 1, "mean_cycle")?,
                mean_green: finite(r, 2, "mean_green")?,
                g: GreenSplit::new(g).map_err(|e| e.to_string())?,
            },
            v_max: finite(r, 4, "v_max_kmh")?,
            q_cap: finite(r, 5, "q_cap")?,
        })
    })
}

pub fn write_skipped(path: &Path, rows: &[Skipped]) -> Result<()> {
    let mut s = header_line(SKIPPED_HEADER);
    for r in rows {
        let hour = r.hour_start.map(format_timestamp).unwrap_or_default();
        writeln!(s, "{},{hour},{}", r.segment_id, r.reason.as_str()).unwrap();
    }
    write_atomic(path, &s)
}

pub fn write_fits(path: &Path, rows: &[FitRecord]) -> Result<()> {
    let mut s = header_line(FITS_HEADER);
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.segment_id, r.g, r.alpha, r.beta, r.q_cap, r.rmse, r.r2, r.n, r.converged
        )
        .unwrap();
    }
    write_atomic(path, &s)
}

pub fn read_fits(path: &Path) -> Result<Vec<FitRecord>> {
    read_table(path, FITS_HEADER, |r| {
        Ok(FitRecord {
            segment_id: nonempty(r, 0, "segment_id")?.into(),
            g: finite(r, 1, "g")?,
            alpha: finite(r, 2, "alpha")?,
            beta: finite(r, 3, "beta")?,
            q_cap: finite(r, 4, "q_cap")?,
            rmse: number(r, 5, "rmse")?,
            r2: number(r, 6, "r2")?,
            n: number(r, 7, "n")?,
            converged: number(r, 8, "converged")?,
        })
    })
}

pub fn write_theta(path: &Path, rec: &ThetaRecord) -> Result<()> {
    let mut s = header_line(THETA_HEADER);
    let t = &rec.theta;
    let (rmse, r2, n) = match rec.pooled {
        Some(m) => (m.rmse.to_string(), m.r2.to_string(), m.n.to_string()),
        None => Default::default(),
    };
    writeln!(
        s,
        "{},{},{},{},{},{},{},{rmse},{r2},{n}",
        t.theta0,
        t.theta1,
        t.theta2,
        t.theta3,
        t.g_lo,
        t.g_hi,
        rec.method.as_str()
    )
    .unwrap();
    write_atomic(path, &s)
}

pub fn read_theta(path: &Path) -> Result<ThetaRecord> {
    let mut rows = read_table(path, THETA_HEADER, |r| {
        let theta = SignalTheta::new(
            finite(r, 0, "theta0")?,
            finite(r, 1, "theta1")?,
            finite(r, 2, "theta2")?,
            finite(r, 3, "theta3")?,
        )
        .with_range(finite(r, 4, "g_lo")?, finite(r, 5, "g_hi")?);
        let method = field(r, 6, "method")?.parse().map_err(|e: sigfd_core::Error| e.to_string())?;
        let pooled = if field(r, 7, "pooled_rmse")?.is_empty() {
            None
        } else {
            Some(Metrics {
                rmse: number(r, 7, "pooled_rmse")?,
                r2: number(r, 8, "pooled_r2")?,
                n: number(r, 9, "pooled_n")?,
            })
        };
        Ok(ThetaRecord { theta, method, pooled })
    })?;
    match rows.len() {
        1 => Ok(rows.remove(0)),
        n => Err(CliError::parse(path, 2, format!("expected exactly one theta row, found {n}"))),
    }
}

pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut s = header_line(CURVE_HEADER);
    for r in rows {
        writeln!(s, "{},{},{},{}", r.segment_id, r.g, r.flow, r.speed).unwrap();
    }
    write_atomic(path, &s)
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveRow>> {
    read_table(path, CURVE_HEADER, |r| {
        Ok(CurveRow {
            segment_id: nonempty(r, 0, "segment_id")?.into(),
            g: finite(r, 1, "g")?,
            flow: finite(r, 2, "flow")?,
            speed: finite(r, 3, "speed")?,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use sigfd_core::ingest::{EventKind, SkipReason};

    fn tmp(contents: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, contents).unwrap();
        (dir, path)
    }

    fn line_of(e: CliError) -> u64 {
        match e {
            CliError::Parse { line, .. } => line,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn counts_parse() {
        let (_d, p) = tmp(
            "segment_id,lane_id,timestamp,count\n\
             S1,L1,2024-01-02T07:00:00,100\n\
             S1,L2,2024-01-02T07:15:00,80\n\
             S2,L1,2024-01-02 08:00:00,0\n",
        );
        let rows = parse_counts(&p).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].count, 80);
        assert_eq!(format_timestamp(rows[2].timestamp), "2024-01-02T08:00:00");
    }

    #[test]
    fn negative_count_names_line() {
        let (_d, p) = tmp("segment_id,lane_id,timestamp,count\nS1,L1,2024-01-02T07:00:00,1\nS1,L1,2024-01-02T07:15:00,-4\n");
        let err = parse_counts(&p).unwrap_err();
        assert!(err.to_string().contains(":3: negative count"), "{err}");
        assert_eq!(line_of(err), 3);
    }

    #[test]
    fn empty_files_are_empty_tables() {
        let (_d, p) = tmp("");
        assert!(parse_counts(&p).unwrap().is_empty());
        assert!(parse_speeds(&p).unwrap().is_empty());
        assert!(read_binned(&p).unwrap().is_empty());
        let (_d, p) = tmp("segment_id,timestamp,speed_kmh\n");
        assert!(parse_speeds(&p).unwrap().is_empty());
    }

    #[test]
    fn speeds_parse_and_reject() {
        let (_d, p) = tmp("segment_id,timestamp,speed_kmh\nS1,2024-01-02T07:10:00,42.5\n");
        assert_eq!(parse_speeds(&p).unwrap()[0].speed_kmh, 42.5);
        let (_d, p) = tmp("segment_id,timestamp,speed_kmh\nS1,2024-01-02T07:10:00,42.5\nS1,2024-01-02T07:20:00,fast\n");
        assert_eq!(line_of(parse_speeds(&p).unwrap_err()), 3);
        let (_d, p) = tmp("segment_id,timestamp,speed_kmh\nS1,2024-01-02T07:10:00,-1\n");
        assert_eq!(line_of(parse_speeds(&p).unwrap_err()), 2);
    }

    #[test]
    fn wrong_header_and_ragged_rows() {
        let (_d, p) = tmp("segment,timestamp,speed_kmh\nS1,2024-01-02T07:10:00,42.5\n");
        assert_eq!(line_of(parse_speeds(&p).unwrap_err()), 1);
        let (_d, p) = tmp("segment_id,timestamp,speed_kmh\nS1,2024-01-02T07:10:00\n");
        assert_eq!(line_of(parse_speeds(&p).unwrap_err()), 2);
        let (_d, p) = tmp("segment_id,lane_id,timestamp,count\nS1,L1,2024-13-02T07:00:00,1\n");
        assert_eq!(line_of(parse_counts(&p).unwrap_err()), 2);
    }

    #[test]
    fn missing_file_is_io() {
        let err = parse_counts(Path::new("/nonexistent/counts.csv")).unwrap_err();
        assert!(matches!(err, CliError::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/counts.csv"));
    }

    #[test]
    fn events_parse_sorted() {
        let (_d, p) = tmp("timestamp,phase,kind\n40,2,green_end\n0,2,green_start\n0,0,cycle_start\n100,0,cycle_start\n");
        let ev = parse_signal_events(&p).unwrap();
        assert_eq!(ev.iter().map(|e| e.timestamp).collect::<Vec<_>>(), vec![0.0, 0.0, 40.0, 100.0]);
        assert_eq!(ev[0].kind, EventKind::CycleStart);
        assert_eq!(ev[1].kind, EventKind::GreenStart);
    }

    #[test]
    fn events_end_before_start_is_order_error() {
        let (_d, p) = tmp("timestamp,phase,kind\n10,2,green_end\n20,2,green_start\n");
        let err = parse_signal_events(&p).unwrap_err();
        assert!(matches!(err, CliError::Core(sigfd_core::Error::Order(_))), "{err:?}");
        let (_d, p) = tmp("timestamp,phase,kind\n10,2,green_on\n");
        assert_eq!(line_of(parse_signal_events(&p).unwrap_err()), 2);
    }

    #[test]
    fn iso_event_times() {
        let (_d, p) = tmp(
            "timestamp,phase,kind\n2024-01-02T07:00:00,2,green_start\n2024-01-02T07:00:40.5,2,green_end\n",
        );
        let ev = parse_signal_events(&p).unwrap();
        assert_eq!(ev[1].timestamp - ev[0].timestamp, 40.5);
    }

    #[test]
    fn tables_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let plan = PlanRecord {
            stats: SignalPlanStats {
                segment_id: "S1".into(),
                mean_cycle: 114.0,
                mean_green: 34.2,
                g: GreenSplit::new(0.3).unwrap(),
            },
            v_max: 50.0,
            q_cap: 540.0,
        };
        let p = dir.path().join("plan.csv");
        write_plan_stats(&p, std::slice::from_ref(&plan)).unwrap();
        assert_eq!(read_plan_stats(&p).unwrap(), vec![plan]);

        let fit = FitRecord {
            segment_id: "S1".into(),
            g: 0.3,
            alpha: 1.0 / 3.0,
            beta: 2.5,
            q_cap: 540.0,
            rmse: 1e-9,
            r2: 0.99,
            n: 12,
            converged: true,
        };
        let p = dir.path().join("fits.csv");
        write_fits(&p, std::slice::from_ref(&fit)).unwrap();
        assert_eq!(read_fits(&p).unwrap(), vec![fit]);

        let theta = ThetaRecord {
            theta: SignalTheta::new(0.2, 1.0, 0.1, 0.5).with_range(0.3, 0.8),
            method: FitMethod::Joint,
            pooled: Some(Metrics { rmse: 0.01, r2: 0.9, n: 30 }),
        };
        let p = dir.path().join("theta.csv");
        write_theta(&p, &theta).unwrap();
        assert_eq!(read_theta(&p).unwrap(), theta);
        let bare = ThetaRecord { pooled: None, ..theta };
        write_theta(&p, &bare).unwrap();
        assert_eq!(read_theta(&p).unwrap(), bare);

        let curve = vec![CurveRow { segment_id: "S1".into(), g: 0.3, flow: 0.1, speed: 49.999 }];
        let p = dir.path().join("curve.csv");
        write_curves(&p, &curve).unwrap();
        assert_eq!(read_curves(&p).unwrap(), curve);

        let p = dir.path().join("skipped.csv");
        let t = parse_timestamp("2024-01-02T07:00:00").unwrap();
        write_skipped(
            &p,
            &[
                Skipped { segment_id: "S1".into(), hour_start: Some(t), reason: SkipReason::MissingSpeed },
                Skipped { segment_id: "S2".into(), hour_start: None, reason: SkipReason::CycleLength },
            ],
        )
        .unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().nth(1), Some("S1,2024-01-02T07:00:00,missing_speed"));
        assert!(text.lines().nth(2).unwrap().starts_with("S2,,"));
    }

    #[test]
    fn binned_six_decimals() {
        let row = ("S1".to_string(), BinnedPoint { bin_index: 0, bin_center: 15.0, mean_speed: 45.0, count: 2 });
        assert_eq!(format_binned(&[row]), "segment_id,bin_index,bin_center,mean_speed,count\nS1,0,15.000000,45.000000,2\n");
    }

    proptest! {
        #[test]
        fn binned_round_trip(
            rows in proptest::collection::vec((0i64..200, 0.0..130.0f64, 1usize..50), 0..30),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("binned.csv");
            let rows: Vec<_> = rows
                .into_iter()
                .map(|(k, v, n)| ("S".to_string(), BinnedPoint { bin_index: k, bin_center: (k as f64 + 0.5) * 30.0, mean_speed: v, count: n }))
                .collect();
            write_binned(&p, &rows).unwrap();
            let first = std::fs::read_to_string(&p).unwrap();
            let back = read_binned(&p).unwrap();
            for ((_, a), (_, b)) in rows.iter().zip(&back) {
                prop_assert_eq!(a.bin_index, b.bin_index);
                prop_assert_eq!(a.count, b.count);
                prop_assert_eq!(a.bin_center, b.bin_center);
                prop_assert!((a.mean_speed - b.mean_speed).abs() <= 5e-7);
            }
            // once at six decimals, values survive further trips bit for bit
            write_binned(&p, &back).unwrap();
            prop_assert_eq!(&std::fs::read_to_string(&p).unwrap(), &first);
            prop_assert_eq!(read_binned(&p).unwrap(), back);
        }
    }
}
