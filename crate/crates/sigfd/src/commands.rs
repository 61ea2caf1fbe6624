//! The pipeline steps behind each subcommand. Each returns a short summary
//! for the terminal; all output goes to files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sigfd_core::calibration::{
    fit_segment, fit_theta_joint, fit_theta_two_stage, fit_theta_two_stage_from_data, estimate_qcap, pooled_metrics,
    FitMethod, FitOptions, Sample, SegmentData, SegmentFit, ThetaFit,
};
use sigfd_core::fd::{audit_monotone_in_green, predict_curve, FdParams, GreenSplit, SignalTheta};
use sigfd_core::ingest::{
    aggregate_hourly, bin_flows, compute_green_split, drop_above_capacity, filter_cycle_length, filter_study_window,
    group_by_segment, BinnedPoint, SkipReason, Skipped,
};

use crate::config::{RunConfig, SegmentsConfig};
use crate::corpus::{default_corpus, generate_corpus, linspace, SimulateSpec};
use crate::error::{CliError, Result};
use crate::formats::{self, CurveRow, FitRecord, PlanRecord, ThetaRecord};
use crate::plot::render_svg;

pub const BINNED_FILE: &str = "binned.csv";
pub const PLAN_FILE: &str = "plan_stats.csv";
pub const SKIPPED_FILE: &str = "skipped.csv";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Parses counts, speeds and event logs, aggregates to hourly per-lane
/// observations, applies the study filters and writes `binned.csv`,
/// `plan_stats.csv` and `skipped.csv` into the output directory.
pub fn ingest(cfg: &RunConfig) -> Result<String> {
    let counts_path = cfg.require(&cfg.counts, "counts file")?;
    let speeds_path = cfg.require(&cfg.speeds, "speeds file")?;
    let segments_path = cfg.require(&cfg.segments, "segments config")?;
    let out_dir = cfg.require(&cfg.out_dir, "output directory")?;
    let window = cfg.study_window()?;
    let width = cfg.bin_width();
    if !(width > 0.0 && width.is_finite()) {
        return Err(CliError::Config(format!("bin width must be > 0, got {width}")));
    }
    let phases = cfg.phases();

    let segments = SegmentsConfig::load(segments_path)?;
    let counts = formats::parse_counts(counts_path)?;
    let speeds = formats::parse_speeds(speeds_path)?;
    let (obs, mut skipped) = aggregate_hourly(&counts, &speeds, &segments.lane_counts())?;
    let obs = filter_study_window(&obs, &window);
    let events_base = segments_path.parent().unwrap_or(Path::new("")).join("events");

    let mut binned: Vec<(String, BinnedPoint)> = Vec::new();
    let mut plans = Vec::new();
    for (id, seg_obs) in group_by_segment(obs) {
        let entry = &segments.segments[&id];
        let events_path = match &entry.events {
            Some(p) => p.clone(),
            None => {
                let p = events_base.join(format!("{id}.csv"));
                if !p.exists() {
                    skipped.push(Skipped { segment_id: id, hour_start: None, reason: SkipReason::NoSignalPlan });
                    continue;
                }
                p
            }
        };
        let events = formats::parse_signal_events(&events_path)?;
        let stats = compute_green_split(&id, &events, &phases, None)?;
        if filter_cycle_length(std::slice::from_ref(&stats), cfg.cycle_target(), cfg.cycle_tolerance()).is_empty() {
            skipped.push(Skipped { segment_id: id, hour_start: None, reason: SkipReason::CycleLength });
            continue;
        }
        let q_cap = match entry.q_cap {
            Some(q) => q,
            None => estimate_qcap(&bin_flows(&seg_obs, width)?, cfg.min_bin_count())?,
        };
        let (kept, dropped) = drop_above_capacity(seg_obs, q_cap, width);
        skipped.extend(dropped);
        binned.extend(bin_flows(&kept, width)?.into_iter().map(|b| (id.clone(), b)));
        plans.push(PlanRecord { stats, v_max: entry.v_max_kmh, q_cap });
    }
    skipped.sort_by(|a, b| {
        (&a.segment_id, a.hour_start, a.reason.as_str()).cmp(&(&b.segment_id, b.hour_start, b.reason.as_str()))
    });

    create_dir(out_dir)?;
    formats::write_binned(&out_dir.join(BINNED_FILE), &binned)?;
    formats::write_plan_stats(&out_dir.join(PLAN_FILE), &plans)?;
    formats::write_skipped(&out_dir.join(SKIPPED_FILE), &skipped)?;
    Ok(format!(
        "ingested {} segments: {} bins, {} skipped rows -> {}",
        plans.len(),
        binned.len(),
        skipped.len(),
        out_dir.display()
    ))
}

fn plan_map(plans: Vec<PlanRecord>) -> BTreeMap<String, PlanRecord> {
    plans.into_iter().map(|p| (p.stats.segment_id.clone(), p)).collect()
}

/// Binned points grouped by segment, each paired with its plan row.
fn segment_data(binned: Vec<(String, BinnedPoint)>, plans: &BTreeMap<String, PlanRecord>) -> Result<Vec<SegmentData>> {
    let mut grouped: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
    for (id, b) in &binned {
        grouped.entry(id.clone()).or_default().push(Sample::from(b));
    }
    grouped
        .into_iter()
        .map(|(id, samples)| {
            let plan = plans
                .get(&id)
                .ok_or_else(|| CliError::Mismatch(format!("segment '{id}' is binned but has no plan row")))?;
            Ok(SegmentData { segment_id: id, samples, v_max: plan.v_max, q_cap: plan.q_cap, g: plan.stats.g })
        })
        .collect()
}

fn read_segment_data(binned: &Path, plans: &BTreeMap<String, PlanRecord>) -> Result<Vec<SegmentData>> {
    let rows = formats::read_binned(binned)?;
    if rows.is_empty() {
        return Err(sigfd_core::Error::Data(format!("{}: no binned points", binned.display())).into());
    }
    segment_data(rows, plans)
}

pub struct FitArgs {
    pub binned: PathBuf,
    pub plan_stats: PathBuf,
    pub out: PathBuf,
    pub options: FitOptions,
}

/// Fits `(alpha, beta)` per segment and writes one row per segment.
pub fn fit(args: &FitArgs) -> Result<String> {
    let plans = plan_map(formats::read_plan_stats(&args.plan_stats)?);
    let data = read_segment_data(&args.binned, &plans)?;
    let fits = data
        .iter()
        .map(|s| fit_segment(&s.segment_id, &s.samples, s.v_max, s.q_cap, s.g, &args.options))
        .collect::<sigfd_core::Result<Vec<_>>>()?;
    let rows: Vec<FitRecord> = fits.iter().map(FitRecord::from).collect();
    formats::write_fits(&args.out, &rows)?;
    let unconverged = fits.iter().filter(|f| !f.converged).count();
    Ok(format!(
        "fitted {} segments ({unconverged} not converged) -> {}",
        fits.len(),
        args.out.display()
    ))
}

pub struct FitThetaArgs {
    pub plan_stats: PathBuf,
    pub binned: Option<PathBuf>,
    pub fits: Option<PathBuf>,
    pub method: FitMethod,
    pub out: PathBuf,
    pub options: FitOptions,
}

fn fits_from_file(path: &Path, plans: &BTreeMap<String, PlanRecord>) -> Result<Vec<SegmentFit>> {
    formats::read_fits(path)?
        .into_iter()
        .map(|r| {
            let plan = plans
                .get(&r.segment_id)
                .ok_or_else(|| CliError::Mismatch(format!("fit for segment '{}' has no plan row", r.segment_id)))?;
            Ok(SegmentFit {
                params: FdParams::new(plan.v_max, r.q_cap, r.alpha, r.beta)?,
                g: GreenSplit::new(r.g)?,
                segment_id: r.segment_id,
                rmse: r.rmse,
                r2: r.r2,
                n_points: r.n,
                converged: r.converged,
                iterations: 0,
            })
        })
        .collect()
}

fn two_stage(args: &FitThetaArgs, plans: &BTreeMap<String, PlanRecord>, data: Option<&[SegmentData]>) -> Result<ThetaFit> {
    match (&args.fits, data) {
        (Some(path), data) => {
            let mut fit = fit_theta_two_stage(&fits_from_file(path, plans)?)?;
            if let Some(data) = data {
                fit.residual_summary = Some(pooled_metrics(&fit.theta, data, args.options.weight_by_count)?);
            }
            Ok(fit)
        }
        (None, Some(data)) => Ok(fit_theta_two_stage_from_data(data, &args.options)?),
        (None, None) => Err(CliError::Config("two-stage fit needs --fits or --binned".into())),
    }
}

/// Fits the city-wide coefficients. The joint fit starts from the
/// two-stage estimate.
pub fn fit_theta(args: &FitThetaArgs) -> Result<String> {
    let plans = plan_map(formats::read_plan_stats(&args.plan_stats)?);
    let data = match &args.binned {
        Some(p) => Some(read_segment_data(p, &plans)?),
        None => None,
    };
    let fit = match args.method {
        FitMethod::TwoStage => two_stage(args, &plans, data.as_deref())?,
        FitMethod::Joint => {
            let data = data.as_deref().ok_or_else(|| CliError::Config("joint fit needs --binned".into()))?;
            let init = two_stage(args, &plans, Some(data))?;
            fit_theta_joint(data, &init.theta, &args.options)?
        }
    };
    formats::write_theta(
        &args.out,
        &ThetaRecord { theta: fit.theta, method: fit.method, pooled: fit.residual_summary },
    )?;
    let t = fit.theta;
    let mut msg = format!(
        "theta ({}) = [{:.6}, {:.6}, {:.6}, {:.6}] on g in [{:.4}, {:.4}]",
        fit.method.as_str(),
        t.theta0,
        t.theta1,
        t.theta2,
        t.theta3,
        t.g_lo,
        t.g_hi
    );
    if let Some(m) = fit.residual_summary {
        msg.push_str(&format!("; pooled normalized rmse {:.6}, r2 {:.4}", m.rmse, m.r2));
    }
    Ok(msg)
}

/// Where the curves to predict come from.
pub enum PredictTarget {
    Single { segment_id: String, g: f64, v_max: f64, q_cap: f64 },
    Plans(PathBuf),
}

pub struct PredictArgs {
    pub theta: PathBuf,
    pub target: PredictTarget,
    pub n_points: usize,
    pub out: PathBuf,
}

/// Green splits this far outside the fitted range are still accepted, to
/// absorb rounding in the range itself.
const RANGE_SLACK: f64 = 1e-9;

fn curve_rows(theta: &SignalTheta, id: &str, g: f64, v_max: f64, q_cap: f64, n: usize) -> Result<Vec<CurveRow>> {
    if g < theta.g_lo - RANGE_SLACK || g > theta.g_hi + RANGE_SLACK {
        return Err(sigfd_core::Error::Param(format!(
            "g = {g} is outside the range [{}, {}] theta was fitted on",
            theta.g_lo, theta.g_hi
        ))
        .into());
    }
    let curve = predict_curve(theta, GreenSplit::new(g)?, v_max, q_cap, n)?;
    Ok(curve
        .points
        .into_iter()
        .map(|(flow, speed)| CurveRow { segment_id: id.into(), g, flow, speed })
        .collect())
}

/// Samples the signal-parametrized curve for one green split or for every
/// segment of a plan-stats file.
pub fn predict(args: &PredictArgs) -> Result<String> {
    let rec = formats::read_theta(&args.theta)?;
    rec.theta.check_feasible()?;
    let rows = match &args.target {
        PredictTarget::Single { segment_id, g, v_max, q_cap } => {
            curve_rows(&rec.theta, segment_id, *g, *v_max, *q_cap, args.n_points)?
        }
        PredictTarget::Plans(path) => {
            let mut rows = Vec::new();
            for p in formats::read_plan_stats(path)? {
                rows.extend(curve_rows(&rec.theta, &p.stats.segment_id, p.stats.g.value(), p.v_max, p.q_cap, args.n_points)?);
            }
            rows
        }
    };
    formats::write_curves(&args.out, &rows)?;
    Ok(format!("wrote {} curve points -> {}", rows.len(), args.out.display()))
}

/// Writes a corpus from a spec file, or the built-in ten-segment corpus.
pub fn simulate(spec: Option<&Path>, out_dir: &Path) -> Result<String> {
    let segments = match spec {
        Some(p) => SimulateSpec::load(p)?.build()?,
        None => default_corpus(),
    };
    create_dir(out_dir)?;
    let (_, obs) = generate_corpus(&segments, out_dir)?;
    Ok(format!(
        "simulated {} segments, {} hourly observations -> {}",
        segments.len(),
        obs.len(),
        out_dir.display()
    ))
}

pub struct AuditArgs {
    pub theta: PathBuf,
    pub g_lo: Option<f64>,
    pub g_hi: Option<f64>,
    pub n_g: usize,
    pub n_q: usize,
    pub v_max: f64,
    pub q_cap: f64,
}

/// Checks that the curves implied by a theta file move up with the green
/// split. Violations are returned as an audit error.
pub fn audit(args: &AuditArgs) -> Result<String> {
    let rec = formats::read_theta(&args.theta)?;
    let g_lo = args.g_lo.unwrap_or(rec.theta.g_lo);
    let g_hi = args.g_hi.unwrap_or(rec.theta.g_hi);
    if args.n_g < 2 || args.n_q < 2 {
        return Err(CliError::Config("audit grids need at least 2 points".into()));
    }
    let g_grid = linspace(g_lo, g_hi, args.n_g)
        .into_iter()
        .map(GreenSplit::new)
        .collect::<sigfd_core::Result<Vec<_>>>()?;
    let q_grid = linspace(0.0, args.q_cap, args.n_q);
    let report = audit_monotone_in_green(&rec.theta, args.v_max, args.q_cap, &g_grid, &q_grid)?;
    let head = format!(
        "audit over g in [{g_lo:.4}, {g_hi:.4}] on a {} x {} grid",
        args.n_g, args.n_q
    );
    if report.pass {
        return Ok(format!("{head}: pass ({} comparisons)", report.comparisons));
    }
    let mut text = format!(
        "{head}: {} of {} comparisons violate",
        report.violations.len(),
        report.comparisons
    );
    for v in report.violations.iter().take(10) {
        text.push_str(&format!(
            "\n  q={:.4}: v(g={:.4}) - v(g={:.4}) = {:.6e}",
            v.q, v.g_upper, v.g_lower, v.delta_v
        ));
    }
    if report.violations.len() > 10 {
        text.push_str(&format!("\n  ... {} more", report.violations.len() - 10));
    }
    Err(CliError::Audit(text))
}

pub struct PlotArgs {
    pub binned: PathBuf,
    pub plan_stats: PathBuf,
    pub curves: Vec<PathBuf>,
    pub out: PathBuf,
}

pub fn plot(args: &PlotArgs) -> Result<String> {
    let binned = formats::read_binned(&args.binned)?;
    let plans = formats::read_plan_stats(&args.plan_stats)?;
    let mut curves = Vec::new();
    for p in &args.curves {
        curves.extend(formats::read_curves(p)?);
    }
    let svg = render_svg(&binned, &plans, &curves)?;
    formats::write_atomic(&args.out, &svg)?;
    Ok(format!("wrote {}", args.out.display()))
}
