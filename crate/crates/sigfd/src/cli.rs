//! Argument parsing and dispatch for the `sigfd` binary.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sigfd_core::calibration::FitMethod;

use crate::commands::{self, AuditArgs, FitArgs, FitThetaArgs, PlotArgs, PredictArgs, PredictTarget};
use crate::config::{FitSection, RunConfig};
use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "sigfd", version, about = "Signal-parametrized speed-flow diagrams: ingest, fit, predict, simulate, audit, plot")]
pub struct Cli {
    /// Optional TOML run file; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct FitFlags {
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub grad_tol: Option<f64>,
    #[arg(long)]
    pub step_tol: Option<f64>,
    #[arg(long)]
    pub initial_alpha: Option<f64>,
    #[arg(long)]
    pub initial_beta: Option<f64>,
    /// Give every binned point weight 1 instead of its observation count.
    #[arg(long)]
    pub unweighted: bool,
}

impl FitFlags {
    fn section(&self) -> FitSection {
        FitSection {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            step_tol: self.step_tol,
            initial_alpha: self.initial_alpha,
            initial_beta: self.initial_beta,
            weighted: self.unweighted.then_some(false),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Method {
    #[value(alias = "two_stage")]
    TwoStage,
    Joint,
}

impl From<Method> for FitMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::TwoStage => FitMethod::TwoStage,
            Method::Joint => FitMethod::Joint,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Aggregate counts and speeds, extract green splits, filter and bin.
    Ingest {
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long)]
        speeds: Option<PathBuf>,
        /// Segments TOML (lane_count, v_max_kmh, optional q_cap and events).
        #[arg(long)]
        segments: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        bin_width: Option<f64>,
        #[arg(long)]
        cycle_target: Option<f64>,
        #[arg(long)]
        cycle_tolerance: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        phases: Option<Vec<u32>>,
        #[arg(long)]
        start_hour: Option<u32>,
        #[arg(long)]
        end_hour: Option<u32>,
        /// Keep weekends too.
        #[arg(long)]
        all_days: bool,
        /// Observations a bin needs to count towards the estimated capacity.
        #[arg(long)]
        min_bin_count: Option<usize>,
    },
    /// Fit (alpha, beta) per segment from binned data.
    Fit {
        #[arg(long)]
        binned: PathBuf,
        #[arg(long)]
        plan_stats: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fit: FitFlags,
    },
    /// Fit the city-wide coefficients linking (alpha, beta) to the green split.
    FitTheta {
        #[arg(long)]
        plan_stats: PathBuf,
        #[arg(long)]
        binned: Option<PathBuf>,
        /// Per-segment fits to regress instead of refitting from --binned.
        #[arg(long)]
        fits: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "two-stage")]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fit: FitFlags,
    },
    /// Sample predicted curves from a theta file.
    Predict {
        #[arg(long)]
        theta: PathBuf,
        /// Predict one curve per segment of this plan-stats file.
        #[arg(long, conflicts_with_all = ["g", "v_max", "q_cap"])]
        plan_stats: Option<PathBuf>,
        #[arg(long, requires_all = ["v_max", "q_cap"])]
        g: Option<f64>,
        #[arg(long)]
        v_max: Option<f64>,
        #[arg(long)]
        q_cap: Option<f64>,
        #[arg(long, default_value = "curve")]
        segment_id: String,
        #[arg(long, default_value_t = 50)]
        n_points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic corpus (built-in ten segments unless --spec is given).
    Simulate {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Check that predicted curves move up as the green split grows.
    Audit {
        #[arg(long)]
        theta: PathBuf,
        #[arg(long)]
        g_lo: Option<f64>,
        #[arg(long)]
        g_hi: Option<f64>,
        #[arg(long, default_value_t = 10)]
        n_g: usize,
        #[arg(long, default_value_t = 101)]
        n_q: usize,
        #[arg(long, default_value_t = 1.0)]
        v_max: f64,
        #[arg(long, default_value_t = 1.0)]
        q_cap: f64,
    },
    /// Overlay binned data and predicted curves in an SVG.
    Plot {
        #[arg(long)]
        binned: PathBuf,
        #[arg(long)]
        plan_stats: PathBuf,
        #[arg(long, num_args = 0..)]
        curves: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run_config(file: Option<&std::path::Path>, flags: RunConfig) -> Result<RunConfig> {
    Ok(RunConfig::load_optional(file)?.merged(flags))
}

pub fn run(cli: Cli) -> Result<String> {
    let file = cli.config.as_deref();
    match cli.command {
        Command::Ingest {
            counts,
            speeds,
            segments,
            out_dir,
            bin_width,
            cycle_target,
            cycle_tolerance,
            phases,
            start_hour,
            end_hour,
            all_days,
            min_bin_count,
        } => {
            let flags = RunConfig {
                counts,
                speeds,
                segments,
                out_dir,
                bin_width,
                cycle_target,
                cycle_tolerance,
                phases,
                start_hour,
                end_hour,
                weekdays_only: all_days.then_some(false),
                min_bin_count,
                fit: FitSection::default(),
            };
            commands::ingest(&run_config(file, flags)?)
        }
        Command::Fit { binned, plan_stats, out, fit } => {
            let cfg = run_config(file, RunConfig { fit: fit.section(), ..RunConfig::default() })?;
            commands::fit(&FitArgs { binned, plan_stats, out, options: cfg.fit_options()? })
        }
        Command::FitTheta { plan_stats, binned, fits, method, out, fit } => {
            let cfg = run_config(file, RunConfig { fit: fit.section(), ..RunConfig::default() })?;
            commands::fit_theta(&FitThetaArgs {
                plan_stats,
                binned,
                fits,
                method: method.into(),
                out,
                options: cfg.fit_options()?,
            })
        }
        Command::Predict { theta, plan_stats, g, v_max, q_cap, segment_id, n_points, out } => {
            let target = match (plan_stats, g, v_max, q_cap) {
                (Some(p), ..) => PredictTarget::Plans(p),
                (None, Some(g), Some(v_max), Some(q_cap)) => PredictTarget::Single { segment_id, g, v_max, q_cap },
                _ => return Err(CliError::Config("predict needs --plan-stats or all of --g, --v-max, --q-cap".into())),
            };
            commands::predict(&PredictArgs { theta, target, n_points, out })
        }
        Command::Simulate { spec, out_dir } => commands::simulate(spec.as_deref(), &out_dir),
        Command::Audit { theta, g_lo, g_hi, n_g, n_q, v_max, q_cap } => {
            commands::audit(&AuditArgs { theta, g_lo, g_hi, n_g, n_q, v_max, q_cap })
        }
        Command::Plot { binned, plan_stats, curves, out } => {
            commands::plot(&PlotArgs { binned, plan_stats, curves, out })
        }
    }
}
