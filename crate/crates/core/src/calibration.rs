//! Calibration of the speed-flow curve.
//!
//! Per segment, `(alpha, beta)` are fitted by weighted least squares on
//! speeds with `v_max` and `q_cap` held fixed. The solver works on
//! `(ln alpha, ln beta)` so both stay positive, and on speeds normalized by
//! `v_max`, which leaves the minimizer unchanged.
//!
//! City-wide coefficients come either from two ordinary least-squares lines
//! through the per-segment estimates (two-stage) or from one pooled fit of
//! all segments' data (joint).

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fd::{self, params_from_signal, FdParams, GreenSplit, SignalTheta};
use crate::ingest::{BinnedPoint, SegmentObservation};
use crate::lm::{lm_minimize, LmOptions, LmReport, Matrix};

/// One weighted `(flow, speed)` point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    /// veh/hr-lane
    pub flow: f64,
    /// km/h
    pub speed: f64,
    /// Number of hourly observations behind the point.
    pub weight: f64,
}

impl From<&BinnedPoint> for Sample {
    fn from(b: &BinnedPoint) -> Self {
        Self {
            flow: b.bin_center,
            speed: b.mean_speed,
            weight: b.count as f64,
        }
    }
}

impl From<&SegmentObservation> for Sample {
    fn from(o: &SegmentObservation) -> Self {
        Self {
            flow: o.flow,
            speed: o.speed,
            weight: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub initial_alpha: f64,
    pub initial_beta: f64,
    pub lambda0: f64,
    /// Weight each point by its observation count instead of 1.
    pub weight_by_count: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-10,
            step_tol: 1e-12,
            initial_alpha: 1.0,
            initial_beta: 1.0,
            lambda0: 1e-3,
            weight_by_count: true,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("step_tol", self.step_tol),
            ("initial_alpha", self.initial_alpha),
            ("initial_beta", self.initial_beta),
            ("lambda0", self.lambda0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Param(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn lm_options(&self) -> LmOptions {
        LmOptions {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            step_tol: self.step_tol,
            lambda0: self.lambda0,
        }
    }

    fn weight(&self, s: &Sample) -> f64 {
        if self.weight_by_count {
            s.weight
        } else {
            1.0
        }
    }
}

/// Goodness of fit: weighted rmse and weighted coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rmse: f64,
    pub r2: f64,
    pub n: usize,
}

/// Weighted rmse and r2 of `predicted` against `observed`.
///
/// r2 is `1 - SSE/SST` with SST taken about the weighted mean. When the
/// observations are all equal, SST is zero and r2 is reported as 1 for a
/// perfect prediction and 0 otherwise.
pub fn metrics_from_predictions(observed: &[f64], predicted: &[f64], weights: &[f64]) -> Result<Metrics> {
    if observed.is_empty() {
        return Err(Error::Data("no points to evaluate".into()));
    }
    if observed.len() != predicted.len() || observed.len() != weights.len() {
        return Err(Error::Data("observed, predicted and weights differ in length".into()));
    }
    let w_sum: f64 = weights.iter().sum();
    if w_sum.is_nan() || w_sum <= 0.0 {
        return Err(Error::Data("weights sum to zero".into()));
    }
    let mean = observed.iter().zip(weights).map(|(y, w)| w * y).sum::<f64>() / w_sum;
    let mut sse = 0.0;
    let mut sst = 0.0;
    for ((y, p), w) in observed.iter().zip(predicted).zip(weights) {
        sse += w * (y - p) * (y - p);
        sst += w * (y - mean) * (y - mean);
    }
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else if sse == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(Metrics {
        rmse: libm::sqrt(sse / w_sum),
        r2,
        n: observed.len(),
    })
}

/// Weighted goodness of `params` on `data`, speeds in km/h.
pub fn goodness(params: &FdParams, data: &[Sample], weighted: bool) -> Result<Metrics> {
    let predicted = data
        .iter()
        .map(|s| params.speed(s.flow))
        .collect::<Result<Vec<_>>>()?;
    let observed: Vec<f64> = data.iter().map(|s| s.speed).collect();
    let weights: Vec<f64> = data.iter().map(|s| if weighted { s.weight } else { 1.0 }).collect();
    metrics_from_predictions(&observed, &predicted, &weights)
}

/// Per-segment estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFit {
    pub segment_id: String,
    pub params: FdParams,
    pub g: GreenSplit,
    /// Weighted rmse, km/h.
    pub rmse: f64,
    pub r2: f64,
    pub n_points: usize,
    pub converged: bool,
    pub iterations: usize,
}

impl SegmentFit {
    pub fn goodness(&self, data: &[Sample], weighted: bool) -> Result<Metrics> {
        goodness(&self.params, data, weighted)
    }
}

/// Capacity estimate: the upper edge of the highest-flow bin holding at
/// least `min_count` observations. Every bin center at or below that bin is
/// then strictly inside `(0, q_cap)`.
pub fn estimate_qcap(binned: &[BinnedPoint], min_count: usize) -> Result<f64> {
    binned
        .iter()
        .filter(|b| b.count >= min_count)
        .max_by(|a, b| a.bin_index.cmp(&b.bin_index))
        .map(BinnedPoint::upper_edge)
        .ok_or_else(|| Error::Data(format!("no bin holds at least {min_count} observations")))
}

fn check_samples(data: &[Sample], v_max: f64, q_cap: f64, min_points: usize) -> Result<()> {
    if data.len() < min_points {
        return Err(Error::Data(format!(
            "need at least {min_points} points, got {}",
            data.len()
        )));
    }
    for s in data {
        if !(s.flow > 0.0 && s.flow < q_cap) {
            return Err(Error::Data(format!(
                "flow {} is not strictly inside (0, {q_cap})",
                s.flow
            )));
        }
        if !(s.speed >= 0.0 && s.speed <= v_max) {
            return Err(Error::Data(format!("speed {} outside [0, {v_max}]", s.speed)));
        }
        if !(s.weight > 0.0 && s.weight.is_finite()) {
            return Err(Error::Data(format!("weight {} must be > 0", s.weight)));
        }
    }
    Ok(())
}

struct Residual {
    flow: f64,
    target: f64,
    sqrt_w: f64,
}

fn residual_terms(data: &[Sample], v_max: f64, opts: &FitOptions) -> Vec<Residual> {
    data.iter()
        .map(|s| Residual {
            flow: s.flow,
            target: s.speed / v_max,
            sqrt_w: libm::sqrt(opts.weight(s)),
        })
        .collect()
}

/// Fits `(alpha, beta)` for one segment with `v_max` and `q_cap` fixed.
///
/// Points must number at least three and lie strictly inside `(0, q_cap)`.
pub fn fit_segment(
    segment_id: &str,
    data: &[Sample],
    v_max: f64,
    q_cap: f64,
    g: GreenSplit,
    opts: &FitOptions,
) -> Result<SegmentFit> {
    opts.validate()?;
    FdParams::new(v_max, q_cap, 1.0, 1.0)?;
    check_samples(data, v_max, q_cap, 3)
        .map_err(|e| Error::Data(format!("segment '{segment_id}': {e}")))?;
    let terms = residual_terms(data, v_max, opts);
    let unit = |p: &[f64]| FdParams::new(1.0, q_cap, libm::exp(p[0]), libm::exp(p[1]));

    let residual = |p: &[f64]| {
        let params = unit(p)?;
        Ok(terms
            .iter()
            .map(|t| t.sqrt_w * (fd::speed_unchecked(&params, t.flow) - t.target))
            .collect())
    };
    let jacobian = |p: &[f64]| {
        let params = unit(p)?;
        let mut jac = Matrix::zeros(terms.len(), 2);
        for (i, t) in terms.iter().enumerate() {
            let grad = fd::eval_speed_grad(&params, t.flow)?;
            let row = jac.row_mut(i);
            row[0] = t.sqrt_w * params.alpha * grad.dv_dalpha;
            row[1] = t.sqrt_w * params.beta * grad.dv_dbeta;
        }
        Ok(jac)
    };
    let init = [libm::log(opts.initial_alpha), libm::log(opts.initial_beta)];
    let report = lm_minimize(residual, jacobian, &init, &opts.lm_options())?;

    let params = FdParams::new(
        v_max,
        q_cap,
        libm::exp(report.solution[0]),
        libm::exp(report.solution[1]),
    )?;
    let metrics = goodness(&params, data, opts.weight_by_count)?;
    Ok(SegmentFit {
        segment_id: segment_id.into(),
        params,
        g,
        rmse: metrics.rmse,
        r2: metrics.r2,
        n_points: data.len(),
        converged: report.converged,
        iterations: report.iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMethod {
    TwoStage,
    Joint,
}

impl FitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::TwoStage => "two_stage",
            FitMethod::Joint => "joint",
        }
    }
}

impl core::str::FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_stage" | "two-stage" => Ok(FitMethod::TwoStage),
            "joint" => Ok(FitMethod::Joint),
            other => Err(Error::Param(format!("unknown fit method '{other}'"))),
        }
    }
}

/// One segment's data for the city-wide fits.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentData {
    pub segment_id: String,
    pub samples: Vec<Sample>,
    pub v_max: f64,
    pub q_cap: f64,
    pub g: GreenSplit,
}

/// City-wide coefficients and the per-segment curves they came from (two
/// stage) or imply (joint).
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaFit {
    pub theta: SignalTheta,
    pub method: FitMethod,
    pub per_segment: Vec<SegmentFit>,
    /// Pooled goodness on speeds normalized by `v_max`; set once data has
    /// been evaluated.
    pub residual_summary: Option<Metrics>,
    pub converged: bool,
    pub iterations: usize,
    pub accepted_steps: usize,
}

impl ThetaFit {
    /// Pooled goodness of this fit's coefficients on `segments`.
    pub fn goodness(&self, segments: &[SegmentData], weighted: bool) -> Result<Metrics> {
        pooled_metrics(&self.theta, segments, weighted)
    }
}

/// Pooled weighted rmse and r2 of normalized speeds when every segment
/// takes its curve from `theta` at its own green split.
pub fn pooled_metrics(theta: &SignalTheta, segments: &[SegmentData], weighted: bool) -> Result<Metrics> {
    let mut observed = Vec::new();
    let mut predicted = Vec::new();
    let mut weights = Vec::new();
    for seg in segments {
        let params = params_from_signal(theta, seg.g, seg.v_max, seg.q_cap)?;
        for s in &seg.samples {
            observed.push(s.speed / seg.v_max);
            predicted.push(params.speed(s.flow)? / seg.v_max);
            weights.push(if weighted { s.weight } else { 1.0 });
        }
    }
    metrics_from_predictions(&observed, &predicted, &weights)
}

/// `(intercept, slope)` of the ordinary least-squares line of `y` on `x`.
fn ols_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

fn green_span(gs: impl Iterator<Item = f64>) -> (f64, f64) {
    gs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), g| (lo.min(g), hi.max(g)))
}

/// Regresses `beta` and `beta / alpha` on the green split.
///
/// The returned coefficients are declared on the observed green-split span.
pub fn fit_theta_two_stage(fits: &[SegmentFit]) -> Result<ThetaFit> {
    if fits.len() < 2 {
        return Err(Error::Data(format!("need at least 2 segment fits, got {}", fits.len())));
    }
    if let Some(bad) = fits.iter().find(|f| !f.converged) {
        return Err(Error::Data(format!("segment '{}' did not converge", bad.segment_id)));
    }
    let g: Vec<f64> = fits.iter().map(|f| f.g.value()).collect();
    let (g_lo, g_hi) = green_span(g.iter().copied());
    if g_lo == g_hi {
        return Err(Error::Data(format!(
            "all segments share green split {g_lo}; the lines are not identifiable"
        )));
    }
    let beta: Vec<f64> = fits.iter().map(|f| f.params.beta).collect();
    let ratio: Vec<f64> = fits.iter().map(|f| f.params.beta / f.params.alpha).collect();
    let (theta0, theta1) = ols_line(&g, &beta);
    let (theta2, theta3) = ols_line(&g, &ratio);
    let theta = SignalTheta::new(theta0, theta1, theta2, theta3).with_range(g_lo, g_hi);
    theta.check_feasible()?;
    Ok(ThetaFit {
        theta,
        method: FitMethod::TwoStage,
        per_segment: fits.to_vec(),
        residual_summary: None,
        converged: true,
        iterations: 0,
        accepted_steps: 0,
    })
}

/// Fits every segment, then runs the two-stage regression and attaches the
/// pooled goodness.
pub fn fit_theta_two_stage_from_data(segments: &[SegmentData], opts: &FitOptions) -> Result<ThetaFit> {
    let fits = segments
        .iter()
        .map(|s| fit_segment(&s.segment_id, &s.samples, s.v_max, s.q_cap, s.g, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut fit = fit_theta_two_stage(&fits)?;
    fit.residual_summary = Some(pooled_metrics(&fit.theta, segments, opts.weight_by_count)?);
    Ok(fit)
}

struct PooledTerm {
    flow: f64,
    q_cap: f64,
    g: f64,
    target: f64,
    sqrt_w: f64,
}

fn theta_params(theta: &[f64], g: f64, q_cap: f64) -> Result<FdParams> {
    let beta = theta[0] + theta[1] * g;
    let ratio = theta[2] + theta[3] * g;
    if !(beta > 0.0 && ratio > 0.0) {
        return Err(Error::Param(format!(
            "theta {theta:?} infeasible at g={g}: beta={beta}, beta/alpha={ratio}"
        )));
    }
    FdParams::new(1.0, q_cap, beta / ratio, beta)
}

/// Fits the four coefficients directly to all segments' normalized speeds.
///
/// Steps that make `beta` or `beta / alpha` non-positive at an observed
/// green split are rejected by the solver; `init` must be feasible there.
pub fn fit_theta_joint(segments: &[SegmentData], init: &SignalTheta, opts: &FitOptions) -> Result<ThetaFit> {
    opts.validate()?;
    if segments.len() < 2 {
        return Err(Error::Data(format!("need at least 2 segments, got {}", segments.len())));
    }
    let (g_lo, g_hi) = green_span(segments.iter().map(|s| s.g.value()));
    if g_lo == g_hi {
        return Err(Error::Data(format!(
            "all segments share green split {g_lo}; the lines are not identifiable"
        )));
    }
    let mut terms = Vec::new();
    for seg in segments {
        check_samples(&seg.samples, seg.v_max, seg.q_cap, 1)
            .map_err(|e| Error::Data(format!("segment '{}': {e}", seg.segment_id)))?;
        terms.extend(seg.samples.iter().map(|s| PooledTerm {
            flow: s.flow,
            q_cap: seg.q_cap,
            g: seg.g.value(),
            target: s.speed / seg.v_max,
            sqrt_w: libm::sqrt(opts.weight(s)),
        }));
    }
    let init_range = init.with_range(g_lo, g_hi);
    init_range.check_feasible()?;

    let residual = |theta: &[f64]| {
        terms
            .iter()
            .map(|t| {
                let params = theta_params(theta, t.g, t.q_cap)?;
                Ok(t.sqrt_w * (fd::speed_unchecked(&params, t.flow) - t.target))
            })
            .collect::<Result<Vec<f64>>>()
    };
    let jacobian = |theta: &[f64]| {
        let mut jac = Matrix::zeros(terms.len(), 4);
        for (i, t) in terms.iter().enumerate() {
            let params = theta_params(theta, t.g, t.q_cap)?;
            let grad = fd::eval_speed_grad(&params, t.flow)?;
            let ratio = theta[2] + theta[3] * t.g;
            let beta = params.beta;
            // alpha = beta / ratio
            let da = [1.0 / ratio, t.g / ratio, -beta / (ratio * ratio), -beta * t.g / (ratio * ratio)];
            let db = [1.0, t.g, 0.0, 0.0];
            let row = jac.row_mut(i);
            for k in 0..4 {
                row[k] = t.sqrt_w * (grad.dv_dalpha * da[k] + grad.dv_dbeta * db[k]);
            }
        }
        Ok(jac)
    };
    let report: LmReport = lm_minimize(residual, jacobian, &init.coefficients(), &opts.lm_options())?;

    let theta = SignalTheta::from_coefficients([
        report.solution[0],
        report.solution[1],
        report.solution[2],
        report.solution[3],
    ])
    .with_range(g_lo, g_hi);
    theta.check_feasible()?;

    let per_segment = segments
        .iter()
        .map(|seg| {
            let params = params_from_signal(&theta, seg.g, seg.v_max, seg.q_cap)?;
            let m = goodness(&params, &seg.samples, opts.weight_by_count)?;
            Ok(SegmentFit {
                segment_id: seg.segment_id.clone(),
                params,
                g: seg.g,
                rmse: m.rmse,
                r2: m.r2,
                n_points: seg.samples.len(),
                converged: report.converged,
                iterations: report.iterations,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = pooled_metrics(&theta, segments, opts.weight_by_count)?;
    Ok(ThetaFit {
        theta,
        method: FitMethod::Joint,
        per_segment,
        residual_summary: Some(summary),
        converged: report.converged,
        iterations: report.iterations,
        accepted_steps: report.accepted_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fd::eval_speed;
    use alloc::vec;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    fn g(x: f64) -> GreenSplit {
        GreenSplit::new(x).unwrap()
    }

    fn bin(index: i64, count: usize) -> BinnedPoint {
        BinnedPoint {
            bin_index: index,
            bin_center: (index as f64 + 0.5) * 30.0,
            mean_speed: 1.0,
            count,
        }
    }

    fn on_curve(p: &FdParams, flows: impl Iterator<Item = f64>) -> Vec<Sample> {
        flows
            .map(|q| Sample {
                flow: q,
                speed: eval_speed(p, q).unwrap(),
                weight: 1.0,
            })
            .collect()
    }

    fn interior_grid(q_cap: f64, n: usize) -> impl Iterator<Item = f64> {
        (0..n).map(move |i| q_cap * (i as f64 + 0.5) / n as f64)
    }

    #[test]
    fn qcap_examples() {
        assert_eq!(estimate_qcap(&[bin(0, 9), bin(1, 7), bin(2, 1)], 2).unwrap(), 60.0);
        assert_eq!(estimate_qcap(&[bin(0, 3)], 2).unwrap(), 30.0);
        assert!(matches!(estimate_qcap(&[bin(0, 1), bin(3, 1)], 2), Err(Error::Data(_))));
        assert!(estimate_qcap(&[], 1).is_err());
    }

    #[test]
    fn noiseless_segment_recovery() {
        let truth = FdParams::new(50.0, 900.0, 2.0, 1.5).unwrap();
        let data = on_curve(&truth, interior_grid(900.0, 20));
        let fit = fit_segment("A", &data, 50.0, 900.0, g(0.5), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!((fit.params.alpha / 2.0 - 1.0).abs() < 1e-6);
        assert!((fit.params.beta / 1.5 - 1.0).abs() < 1e-6);
        assert!(fit.rmse < 1e-9 * 50.0);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert_eq!(fit.n_points, 20);
    }

    #[test]
    fn segment_fit_rejects_bad_input() {
        let truth = FdParams::new(50.0, 900.0, 2.0, 1.5).unwrap();
        let two = on_curve(&truth, [100.0, 200.0].into_iter());
        assert!(matches!(
            fit_segment("A", &two, 50.0, 900.0, g(0.5), &FitOptions::default()),
            Err(Error::Data(_))
        ));
        let edge = on_curve(&truth, [100.0, 200.0, 900.0].into_iter());
        assert!(matches!(
            fit_segment("A", &edge, 50.0, 900.0, g(0.5), &FitOptions::default()),
            Err(Error::Data(_))
        ));
        let zero = on_curve(&truth, [0.0, 200.0, 300.0].into_iter());
        assert!(fit_segment("A", &zero, 50.0, 900.0, g(0.5), &FitOptions::default()).is_err());
    }

    #[test]
    fn rescaled_flows_give_the_same_fit() {
        let truth = FdParams::new(50.0, 900.0, 1.3, 2.2).unwrap();
        let mut data = on_curve(&truth, interior_grid(900.0, 15));
        for (i, s) in data.iter_mut().enumerate() {
            s.speed *= 1.0 + 0.01 * libm::sin(i as f64);
            s.speed = s.speed.min(50.0);
        }
        let c = 3.7;
        let scaled: Vec<Sample> = data.iter().map(|s| Sample { flow: s.flow * c, ..*s }).collect();
        let opts = FitOptions::default();
        let a = fit_segment("A", &data, 50.0, 900.0, g(0.5), &opts).unwrap();
        let b = fit_segment("A", &scaled, 50.0, 900.0 * c, g(0.5), &opts).unwrap();
        assert!((a.params.alpha / b.params.alpha - 1.0).abs() < 1e-9);
        assert!((a.params.beta / b.params.beta - 1.0).abs() < 1e-9);
    }

    #[test]
    fn count_weight_equals_repetition() {
        let truth = FdParams::new(50.0, 900.0, 2.5, 1.2).unwrap();
        let mut data = on_curve(&truth, interior_grid(900.0, 12));
        for (i, s) in data.iter_mut().enumerate() {
            s.speed = (s.speed + 1.5 * libm::cos(3.0 * i as f64)).clamp(0.0, 50.0);
        }
        let mut weighted = data.clone();
        weighted[3].weight = 4.0;
        weighted[7].weight = 3.0;
        let mut repeated = data.clone();
        repeated.extend([data[3]; 3]);
        repeated.extend([data[7]; 2]);
        let opts = FitOptions::default();
        let a = fit_segment("A", &weighted, 50.0, 900.0, g(0.5), &opts).unwrap();
        let b = fit_segment("A", &repeated, 50.0, 900.0, g(0.5), &opts).unwrap();
        assert!((a.params.alpha / b.params.alpha - 1.0).abs() < 1e-12, "{a:?} {b:?}");
        assert!((a.params.beta / b.params.beta - 1.0).abs() < 1e-12);
        assert!((a.rmse - b.rmse).abs() < 1e-12);
    }

    fn exact_fit(id: &str, gv: f64, theta: &SignalTheta) -> SegmentFit {
        let params = params_from_signal(theta, g(gv), 50.0, 900.0).unwrap();
        SegmentFit {
            segment_id: id.into(),
            params,
            g: g(gv),
            rmse: 0.0,
            r2: 1.0,
            n_points: 10,
            converged: true,
            iterations: 3,
        }
    }

    #[test]
    fn two_stage_exact_lines() {
        let truth = SignalTheta::new(0.2, 1.0, 0.1, 0.5);
        let fits: Vec<_> = [0.3, 0.55, 0.8]
            .iter()
            .enumerate()
            .map(|(i, &gv)| exact_fit(&format!("S{i}"), gv, &truth))
            .collect();
        let fit = fit_theta_two_stage(&fits).unwrap();
        for (a, b) in fit.theta.coefficients().iter().zip(truth.coefficients()) {
            assert!((a - b).abs() < 1e-12, "{:?}", fit.theta);
        }
        assert_eq!((fit.theta.g_lo, fit.theta.g_hi), (0.3, 0.8));
        assert_eq!(fit.method, FitMethod::TwoStage);

        // two points: line through both
        let t = SignalTheta::new(1.0, -0.5, 0.4, 0.2);
        let fit = fit_theta_two_stage(&[exact_fit("a", 0.35, &t), exact_fit("b", 0.7, &t)]).unwrap();
        for (a, b) in fit.theta.coefficients().iter().zip(t.coefficients()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_stage_degenerate_inputs() {
        let t = SignalTheta::new(0.2, 1.0, 0.1, 0.5);
        let same = [exact_fit("a", 0.5, &t), exact_fit("b", 0.5, &t), exact_fit("c", 0.5, &t)];
        assert!(matches!(fit_theta_two_stage(&same), Err(Error::Data(_))));
        assert!(matches!(fit_theta_two_stage(&same[..1]), Err(Error::Data(_))));
        let mut unconverged = [exact_fit("a", 0.3, &t), exact_fit("b", 0.6, &t)];
        unconverged[1].converged = false;
        assert!(matches!(fit_theta_two_stage(&unconverged), Err(Error::Data(_))));
    }

    fn theta_segments(theta: &SignalTheta, gs: &[f64]) -> Vec<SegmentData> {
        gs.iter()
            .enumerate()
            .map(|(i, &gv)| {
                let q_cap = 1800.0 * gv;
                let p = params_from_signal(theta, g(gv), 50.0, q_cap).unwrap();
                SegmentData {
                    segment_id: format!("S{i:02}"),
                    samples: on_curve(&p, interior_grid(q_cap, 12)),
                    v_max: 50.0,
                    q_cap,
                    g: g(gv),
                }
            })
            .collect()
    }

    #[test]
    fn joint_recovers_theta_and_fixed_point() {
        let truth = SignalTheta::new(0.2, 1.0, 0.1, 0.5);
        let gs: Vec<f64> = (0..10).map(|i| 0.3 + 0.5 * i as f64 / 9.0).collect();
        let segments = theta_segments(&truth, &gs);
        let opts = FitOptions::default();

        let fit = fit_theta_joint(&segments, &SignalTheta::new(0.3, 0.8, 0.2, 0.3), &opts).unwrap();
        assert!(fit.converged);
        for (a, b) in fit.theta.coefficients().iter().zip(truth.coefficients()) {
            assert!((a / b - 1.0).abs() < 1e-6, "{:?}", fit.theta);
        }
        let fixed = fit_theta_joint(&segments, &truth, &opts).unwrap();
        assert!(fixed.accepted_steps <= 1);
        assert_eq!(fixed.per_segment.len(), 10);
    }

    #[test]
    fn joint_degenerate_inputs() {
        let truth = SignalTheta::new(0.2, 1.0, 0.1, 0.5);
        let one = theta_segments(&truth, &[0.4]);
        assert!(matches!(fit_theta_joint(&one, &truth, &FitOptions::default()), Err(Error::Data(_))));
        let same = theta_segments(&truth, &[0.4, 0.4]);
        assert!(matches!(fit_theta_joint(&same, &truth, &FitOptions::default()), Err(Error::Data(_))));
        let two = theta_segments(&truth, &[0.4, 0.6]);
        let infeasible = SignalTheta::new(0.0, -1.0, 0.1, 0.5);
        assert!(matches!(
            fit_theta_joint(&two, &infeasible, &FitOptions::default()),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn metrics_definitions() {
        let perfect = metrics_from_predictions(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[1.0, 2.0, 1.0]).unwrap();
        assert_eq!((perfect.rmse, perfect.r2, perfect.n), (0.0, 1.0, 3));

        let obs = [40.0, 30.0, 20.0, 35.0];
        let w = [2.0, 1.0, 1.0, 4.0];
        let mean = (80.0 + 30.0 + 20.0 + 140.0) / 8.0;
        let m = metrics_from_predictions(&obs, &[mean; 4], &w).unwrap();
        assert!(m.r2.abs() < 1e-15);

        assert!(matches!(metrics_from_predictions(&[], &[], &[]), Err(Error::Data(_))));
    }

    #[test]
    fn goodness_hand_dataset() {
        // v = 50 (1 - (q/1000)^2), hand-evaluated at q = 100..500
        let p = FdParams::new(50.0, 1000.0, 2.0, 1.0).unwrap();
        let data = [
            (100.0, 50.0, 1.0),  // model 49.5, err  0.5
            (200.0, 47.0, 2.0),  // model 48.0, err -1.0
            (300.0, 45.5, 1.0),  // model 45.5, err  0.0
            (400.0, 43.0, 1.0),  // model 42.0, err  1.0
            (500.0, 37.0, 3.0),  // model 37.5, err -0.5
        ]
        .map(|(flow, speed, weight)| Sample { flow, speed, weight });
        // weighted SSE = 0.25 + 2 + 0 + 1 + 0.75 = 4.0 over weight 8
        let m = goodness(&p, &data, true).unwrap();
        assert!((m.rmse - libm::sqrt(0.5)).abs() < 1e-12);
        // weighted mean 42.9375, weighted SST = 195.21875
        assert!((m.r2 - (1.0 - 4.0 / 195.21875)).abs() < 1e-12);
        // unweighted: SSE = 2.5 over 5
        let u = goodness(&p, &data, false).unwrap();
        assert!((u.rmse - libm::sqrt(0.5)).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]
        #[test]
        fn noiseless_recovery_over_shapes(alpha in 0.5..4.0f64, beta in 0.5..4.0f64) {
            let truth = FdParams::new(60.0, 1200.0, alpha, beta).unwrap();
            let data = on_curve(&truth, interior_grid(1200.0, 25));
            let fit = fit_segment("A", &data, 60.0, 1200.0, g(0.5), &FitOptions::default()).unwrap();
            prop_assert!(fit.converged);
            prop_assert!((fit.params.alpha / alpha - 1.0).abs() < 1e-6);
            prop_assert!((fit.params.beta / beta - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn two_stage_from_data_matches_truth() {
        let truth = SignalTheta::new(0.2, 1.0, 0.1, 0.5);
        let segments = theta_segments(&truth, &[0.3, 0.5, 0.8]);
        let fit = fit_theta_two_stage_from_data(&segments, &FitOptions::default()).unwrap();
        for (a, b) in fit.theta.coefficients().iter().zip(truth.coefficients()) {
            assert!((a / b - 1.0).abs() < 1e-6);
        }
        let summary = fit.residual_summary.unwrap();
        assert!(summary.rmse < 1e-8);
        assert_eq!(summary.n, 36);
        assert_eq!(vec![fit.per_segment.len()], vec![3]);
    }
}
