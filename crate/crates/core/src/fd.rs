//! Speed-flow fundamental diagram and its green-split parameterization.
//!
//! A segment's curve is
//!
//! ```text
//! v(q) = v_max * (1 - (q / q_cap)^alpha)^beta,    0 <= q <= q_cap
//! ```
//!
//! and the shape exponents follow the average green split `g` through two
//! straight lines shared by every segment of a city:
//!
//! ```text
//! beta         = theta0 + theta1 * g
//! beta / alpha = theta2 + theta3 * g
//! ```

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default lower end of the green-split range a [`SignalTheta`] is declared on.
pub const DEFAULT_G_LO: f64 = 0.3;
/// Default upper end of the green-split range a [`SignalTheta`] is declared on.
pub const DEFAULT_G_HI: f64 = 0.8;

/// One segment's speed-flow curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdParams {
    /// Speed limit, km/h.
    pub v_max: f64,
    /// Flow capacity, veh/hr-lane.
    pub q_cap: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl FdParams {
    pub fn new(v_max: f64, q_cap: f64, alpha: f64, beta: f64) -> Result<Self> {
        let params = Self {
            v_max,
            q_cap,
            alpha,
            beta,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks that every field is finite and strictly positive.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("v_max", self.v_max),
            ("q_cap", self.q_cap),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Param(format!("{name} must be finite and > 0, got {value}")));
            }
        }
        Ok(())
    }

    pub fn speed(&self, q: f64) -> Result<f64> {
        eval_speed(self, q)
    }
}

/// Average ratio of green time to cycle length, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GreenSplit(f64);

impl GreenSplit {
    pub fn new(g: f64) -> Result<Self> {
        if g.is_finite() && g > 0.0 && g < 1.0 {
            Ok(Self(g))
        } else {
            Err(Error::Invariant(format!("green split must lie in (0, 1), got {g}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// City-wide coefficients mapping a green split to `(alpha, beta)`, together
/// with the green-split range they are declared valid on.
///
/// Construction does not check feasibility so that incompatible coefficients
/// can still be represented and reported; use [`SignalTheta::check_feasible`]
/// to enforce positivity over `[g_lo, g_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalTheta {
    pub theta0: f64,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub g_lo: f64,
    pub g_hi: f64,
}

impl SignalTheta {
    pub fn new(theta0: f64, theta1: f64, theta2: f64, theta3: f64) -> Self {
        Self {
            theta0,
            theta1,
            theta2,
            theta3,
            g_lo: DEFAULT_G_LO,
            g_hi: DEFAULT_G_HI,
        }
    }

    pub fn with_range(mut self, g_lo: f64, g_hi: f64) -> Self {
        self.g_lo = g_lo;
        self.g_hi = g_hi;
        self
    }

    pub fn coefficients(&self) -> [f64; 4] {
        [self.theta0, self.theta1, self.theta2, self.theta3]
    }

    pub fn from_coefficients(c: [f64; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn beta_at(&self, g: f64) -> f64 {
        self.theta0 + self.theta1 * g
    }

    /// `beta / alpha` at green split `g`.
    pub fn ratio_at(&self, g: f64) -> f64 {
        self.theta2 + self.theta3 * g
    }

    /// Both lines are positive over the declared range. Since they are
    /// linear, checking the two endpoints is enough.
    pub fn check_feasible(&self) -> Result<()> {
        if !(self.g_lo.is_finite() && self.g_hi.is_finite() && self.g_lo <= self.g_hi) {
            return Err(Error::Param(format!(
                "invalid green-split range [{}, {}]",
                self.g_lo, self.g_hi
            )));
        }
        for g in [self.g_lo, self.g_hi] {
            let (beta, ratio) = (self.beta_at(g), self.ratio_at(g));
            if !(beta > 0.0 && ratio > 0.0) {
                return Err(Error::Param(format!(
                    "theta infeasible at g={g}: beta={beta}, beta/alpha={ratio}"
                )));
            }
        }
        Ok(())
    }
}

/// Sampled curve, ordered by flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FdCurve {
    /// `(flow veh/hr-lane, speed km/h)` pairs.
    pub points: Vec<(f64, f64)>,
    pub params: FdParams,
    pub g: Option<GreenSplit>,
}

fn check_domain(params: &FdParams, q: f64) -> Result<()> {
    if q.is_nan() || q < 0.0 || q > params.q_cap {
        return Err(Error::Domain(format!(
            "flow {q} outside [0, {}]",
            params.q_cap
        )));
    }
    Ok(())
}

/// Space-mean speed at per-lane flow `q`.
///
/// Exact at the ends: `v_max` at `q = 0` and `0` at `q = q_cap`.
pub fn eval_speed(params: &FdParams, q: f64) -> Result<f64> {
    check_domain(params, q)?;
    Ok(speed_unchecked(params, q))
}

pub(crate) fn speed_unchecked(params: &FdParams, q: f64) -> f64 {
    let u = q / params.q_cap;
    let base = 1.0 - libm::pow(u, params.alpha);
    params.v_max * libm::pow(base.max(0.0), params.beta)
}

/// Partial derivatives of the speed with respect to the shape exponents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedGrad {
    pub dv_dalpha: f64,
    pub dv_dbeta: f64,
}

/// Analytic `(dv/dalpha, dv/dbeta)` at an interior flow `0 < q < q_cap`.
pub fn eval_speed_grad(params: &FdParams, q: f64) -> Result<SpeedGrad> {
    check_domain(params, q)?;
    if q == 0.0 || q == params.q_cap {
        return Err(Error::Domain(format!(
            "gradient undefined at the domain endpoint q={q}"
        )));
    }
    let u = q / params.q_cap;
    let u_alpha = libm::pow(u, params.alpha);
    let base = 1.0 - u_alpha;
    let v = params.v_max * libm::pow(base, params.beta);
    // ln(1 - u^alpha) without cancellation when u^alpha is tiny
    let log_base = libm::log1p(-u_alpha);
    Ok(SpeedGrad {
        dv_dalpha: -params.v_max
            * params.beta
            * libm::pow(base, params.beta - 1.0)
            * u_alpha
            * libm::log(u),
        dv_dbeta: v * log_base,
    })
}

/// Segment parameters implied by `theta` at green split `g`.
pub fn params_from_signal(
    theta: &SignalTheta,
    g: GreenSplit,
    v_max: f64,
    q_cap: f64,
) -> Result<FdParams> {
    let beta = theta.beta_at(g.value());
    let ratio = theta.ratio_at(g.value());
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Param(format!(
            "beta = {beta} at g = {} (must be > 0)",
            g.value()
        )));
    }
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::Param(format!(
            "beta/alpha = {ratio} at g = {} (must be > 0)",
            g.value()
        )));
    }
    FdParams::new(v_max, q_cap, beta / ratio, beta)
}

/// Samples the curve for green split `g` on a uniform flow grid over
/// `[0, q_cap]` with `n_points` points.
pub fn predict_curve(
    theta: &SignalTheta,
    g: GreenSplit,
    v_max: f64,
    q_cap: f64,
    n_points: usize,
) -> Result<FdCurve> {
    if n_points < 2 {
        return Err(Error::Param(format!("n_points must be >= 2, got {n_points}")));
    }
    let params = params_from_signal(theta, g, v_max, q_cap)?;
    let last = n_points - 1;
    let points = (0..n_points)
        .map(|i| {
            let q = if i == last {
                q_cap
            } else {
                q_cap * i as f64 / last as f64
            };
            (q, speed_unchecked(&params, q))
        })
        .collect();
    Ok(FdCurve {
        points,
        params,
        g: Some(g),
    })
}

/// A place where a higher green split gives a lower speed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    pub q: f64,
    pub g_lower: f64,
    pub g_upper: f64,
    /// `v(g_upper) - v(g_lower)`, negative by more than the tolerance.
    pub delta_v: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub pass: bool,
    pub violations: Vec<Violation>,
    pub comparisons: usize,
}

/// Checks that curves move up as the green split grows: for every flow in
/// `q_grid` and each adjacent pair of `g_grid`, the speed at the larger
/// green split is not below the speed at the smaller one (tolerance
/// `1e-9 * v_max`).
///
/// This is a diagnostic on a given `theta`, not a property every `theta`
/// has.
pub fn audit_monotone_in_green(
    theta: &SignalTheta,
    v_max: f64,
    q_cap: f64,
    g_grid: &[GreenSplit],
    q_grid: &[f64],
) -> Result<AuditReport> {
    let curves = g_grid
        .iter()
        .map(|&g| params_from_signal(theta, g, v_max, q_cap).map(|p| (g, p)))
        .collect::<Result<Vec<_>>>()?;
    audit_curves(&curves, q_grid)
}

/// Same ordering check for arbitrary per-green-split curves, which may carry
/// different capacities. A flow is compared only where both curves of a
/// pair are defined.
pub fn audit_curves(curves: &[(GreenSplit, FdParams)], q_grid: &[f64]) -> Result<AuditReport> {
    if curves.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(Error::Param("green-split grid must be strictly increasing".into()));
    }
    let mut report = AuditReport {
        pass: true,
        ..AuditReport::default()
    };
    for pair in curves.windows(2) {
        let ((g0, p0), (g1, p1)) = (pair[0], pair[1]);
        let tol = 1e-9 * p0.v_max.max(p1.v_max);
        for &q in q_grid {
            if q < 0.0 || q > p0.q_cap || q > p1.q_cap {
                continue;
            }
            report.comparisons += 1;
            let delta_v = speed_unchecked(&p1, q) - speed_unchecked(&p0, q);
            if delta_v < -tol {
                report.pass = false;
                report.violations.push(Violation {
                    q,
                    g_lower: g0.value(),
                    g_upper: g1.value(),
                    delta_v,
                });
            }
        }
    }
    Ok(report)
}
