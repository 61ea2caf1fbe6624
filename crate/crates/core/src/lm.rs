//! Dense Levenberg-Marquardt for small unconstrained least-squares problems.
//!
//! Minimizes `F(x) = 1/2 |r(x)|^2` given the residual vector `r` and its
//! Jacobian `J`. Each trial step solves
//!
//! ```text
//! (J^T J + lambda * D) dx = -J^T r,    D = diag(J^T J)
//! ```
//!
//! with a Cholesky factorization, and is accepted only if it lowers `F`.
//! The damping update follows Nielsen's gain-ratio rule.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data does not match shape");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// `J^T J` and `J^T r`.
    fn normal_equations(&self, r: &[f64]) -> (Matrix, Vec<f64>) {
        let n = self.cols;
        let mut jtj = Matrix::zeros(n, n);
        let mut jtr = vec![0.0; n];
        for (i, &ri) in r.iter().enumerate() {
            let row = self.row(i);
            for a in 0..n {
                jtr[a] += row[a] * ri;
                for b in a..n {
                    jtj.data[a * n + b] += row[a] * row[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj.data[a * n + b] = jtj.data[b * n + a];
            }
        }
        (jtj, jtr)
    }
}

/// Solves `A x = b` for symmetric positive definite `A`. Returns `None` when
/// the factorization breaks down.
#[allow(clippy::needless_range_loop)]
pub fn cholesky_solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    let n = a.rows;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l.get(j, k) * l.get(j, k);
        }
        if !d.is_finite() || d <= 0.0 {
            return None;
        }
        let d = libm::sqrt(d);
        l.set(j, j, d);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / d);
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when `max |J^T r| <= grad_tol`.
    pub grad_tol: f64,
    /// Stop when `|dx| <= step_tol * (|x| + step_tol)`.
    pub step_tol: f64,
    /// Initial damping; it multiplies `diag(J^T J)`, so it is dimensionless.
    pub lambda0: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-10,
            step_tol: 1e-12,
            lambda0: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Gradient infinity-norm fell below `grad_tol`.
    Gradient,
    /// Step length fell below `step_tol`.
    Step,
    /// `max_iter` trial steps used without meeting either criterion.
    MaxIterations,
    /// Damping grew without bound and no step lowered the objective.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub solution: Vec<f64>,
    pub converged: bool,
    pub termination: Termination,
    /// Trial steps taken, accepted or not.
    pub iterations: usize,
    pub accepted_steps: usize,
    /// `1/2 |r|^2` at the solution.
    pub cost: f64,
    /// Gradient infinity-norm at the solution.
    pub grad_norm: f64,
    /// Cost at the start and after each accepted step.
    pub cost_history: Vec<f64>,
}

fn half_sq_norm(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

fn norm(x: &[f64]) -> f64 {
    libm::sqrt(x.iter().map(|v| v * v).sum())
}

fn inf_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn check_finite(what: &str, values: &[f64], x: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite {what} at x = {x:?}")))
    }
}

/// Minimizes `1/2 |residual(x)|^2` from `init`.
///
/// `residual` may return an error at a trial point (for instance when the
/// point leaves a feasible region); that trial is rejected and the damping
/// increased. An error or a non-finite value at the starting point, or a
/// non-finite Jacobian at an accepted point, aborts the solve.
pub fn lm_minimize<R, J>(
    mut residual: R,
    mut jacobian: J,
    init: &[f64],
    opts: &LmOptions,
) -> Result<LmReport>
where
    R: FnMut(&[f64]) -> Result<Vec<f64>>,
    J: FnMut(&[f64]) -> Result<Matrix>,
{
    let n = init.len();
    check_finite("initial point", init, init)?;
    let mut x = init.to_vec();
    let mut r = residual(&x)?;
    check_finite("residual", &r, &x)?;
    let mut cost = half_sq_norm(&r);
    let mut jac = jacobian(&x)?;
    if jac.rows != r.len() || jac.cols != n {
        return Err(Error::Numerical(format!(
            "jacobian is {}x{}, expected {}x{}",
            jac.rows,
            jac.cols,
            r.len(),
            n
        )));
    }
    check_finite("jacobian", &jac.data, &x)?;
    let (mut jtj, mut jtr) = jac.normal_equations(&r);

    let mut lambda = opts.lambda0;
    let mut nu = 2.0;
    let mut cost_history = vec![cost];
    let mut accepted_steps = 0;
    let mut iterations = 0;

    let finish = |x: Vec<f64>, term: Termination, iterations, accepted_steps, cost, grad_norm, cost_history| {
        Ok(LmReport {
            solution: x,
            converged: matches!(term, Termination::Gradient | Termination::Step),
            termination: term,
            iterations,
            accepted_steps,
            cost,
            grad_norm,
            cost_history,
        })
    };

    loop {
        let grad_norm = inf_norm(&jtr);
        if grad_norm <= opts.grad_tol {
            return finish(x, Termination::Gradient, iterations, accepted_steps, cost, grad_norm, cost_history);
        }
        if iterations >= opts.max_iter {
            return finish(x, Termination::MaxIterations, iterations, accepted_steps, cost, grad_norm, cost_history);
        }
        if !lambda.is_finite() || lambda > 1e300 {
            return finish(x, Termination::Stalled, iterations, accepted_steps, cost, grad_norm, cost_history);
        }
        iterations += 1;

        let mut damped = jtj.clone();
        for i in 0..n {
            let d = jtj.get(i, i).max(1e-300);
            damped.set(i, i, jtj.get(i, i) + lambda * d);
        }
        let neg_grad: Vec<f64> = jtr.iter().map(|g| -g).collect();
        let Some(step) = cholesky_solve(&damped, &neg_grad) else {
            lambda *= nu;
            nu *= 2.0;
            continue;
        };

        if norm(&step) <= opts.step_tol * (norm(&x) + opts.step_tol) {
            return finish(x, Termination::Step, iterations, accepted_steps, cost, grad_norm, cost_history);
        }

        let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + b).collect();
        let trial_r = match residual(&trial) {
            Ok(tr) if tr.len() == r.len() && tr.iter().all(|v| v.is_finite()) => Some(tr),
            _ => None,
        };
        // predicted reduction of the local quadratic model
        let predicted: f64 = 0.5
            * step
                .iter()
                .enumerate()
                .map(|(i, s)| s * (lambda * jtj.get(i, i).max(1e-300) * s - jtr[i]))
                .sum::<f64>();

        let accepted = trial_r.and_then(|tr| {
            let trial_cost = half_sq_norm(&tr);
            let rho = (cost - trial_cost) / predicted;
            (trial_cost < cost && predicted > 0.0).then_some((tr, trial_cost, rho))
        });

        match accepted {
            Some((tr, trial_cost, rho)) => {
                let trial_jac = jacobian(&trial)?;
                check_finite("jacobian", &trial_jac.data, &trial)?;
                x = trial;
                r = tr;
                cost = trial_cost;
                jac = trial_jac;
                (jtj, jtr) = jac.normal_equations(&r);
                accepted_steps += 1;
                cost_history.push(cost);
                let t = 2.0 * rho - 1.0;
                lambda *= (1.0 / 3.0f64).max(1.0 - t * t * t);
                nu = 2.0;
            }
            None => {
                lambda *= nu;
                nu *= 2.0;
            }
        }
    }
}
