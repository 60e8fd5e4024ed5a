//! Gradient ascent with backtracking line search.
//!
//! Model training and patient adaptation both maximize a smooth objective
//! through this one routine, so the acceptance rule is identical in both
//! places: a step `x' = x + a*g` is accepted only if it clears the Armijo
//! bound `f(x') >= f(x) + c * a * ||g||^2`. Since `c`, `a` and `||g||^2` are
//! all non-negative, the sequence of accepted objective values can never
//! decrease; tests rely on that trace.
//!
//! The step length backtracks by [`AscentConfig::step_shrink`] until the
//! bound holds and grows by [`AscentConfig::step_grow`] after an accepted
//! step, so no global step tuning is needed.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct AscentConfig {
    pub max_iters: usize,
    /// Terminate once the gradient 2-norm falls below this.
    pub grad_tolerance: f64,
    pub initial_step: f64,
    /// Multiplier applied while backtracking; in (0, 1).
    pub step_shrink: f64,
    /// Multiplier applied to the accepted step length; >= 1.
    pub step_grow: f64,
    /// Armijo slope fraction `c`.
    pub armijo_c: f64,
    /// Step length below which the line search gives up.
    pub min_step: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            grad_tolerance: 1e-5,
            initial_step: 1e-3,
            step_shrink: 0.5,
            step_grow: 2.0,
            // A loose c (1e-4) admits near-reflection steps on quadratic
            // bowls, contracting by ~1 per iteration; 0.1 keeps accepted
            // steps genuinely productive.
            armijo_c: 0.1,
            min_step: 1e-16,
        }
    }
}

impl AscentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grad_tolerance < 0.0 || !self.grad_tolerance.is_finite() {
            return Err(Error::InvalidInput(
                "grad_tolerance must be finite and >= 0".into(),
            ));
        }
        if !(self.initial_step.is_finite() && self.initial_step > 0.0) {
            return Err(Error::InvalidInput("initial_step must be > 0".into()));
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return Err(Error::InvalidInput("step_shrink must be in (0, 1)".into()));
        }
        if self.step_grow < 1.0 {
            return Err(Error::InvalidInput("step_grow must be >= 1".into()));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return Err(Error::InvalidInput("armijo_c must be in (0, 1)".into()));
        }
        if !(self.min_step > 0.0 && self.min_step < self.initial_step) {
            return Err(Error::InvalidInput(
                "min_step must be positive and below initial_step".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    /// Gradient norm fell below the tolerance.
    GradientTolerance,
    /// Iteration budget exhausted.
    MaxIterations,
    /// Line search could not find an acceptable step above `min_step`;
    /// the iterate is at a local maximum to working precision.
    StepUnderflow,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StopReason::GradientTolerance => "gradient-tolerance",
            StopReason::MaxIterations => "max-iterations",
            StopReason::StepUnderflow => "step-underflow",
        })
    }
}

#[derive(Clone, Debug)]
pub struct AscentResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective at the start plus after every accepted step; non-decreasing.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub grad_norm: f64,
    pub stop: StopReason,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Maximize `f` from `x0`. `f` returns the objective value and its gradient.
///
/// An `Err` or a non-finite value from `f` at a *trial* point rejects that
/// step and backtracks, so the search can skirt regions where the objective
/// is undefined (e.g. a Gram matrix that stops factorizing at extreme
/// hyperparameters). An error at the starting point itself is propagated.
pub fn maximize<F>(mut f: F, x0: &[f64], cfg: &AscentConfig) -> Result<AscentResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    if x0.is_empty() {
        return Err(Error::InvalidInput("maximize: empty parameter vector".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "maximize: starting point contains non-finite values".into(),
        ));
    }

    let mut x = x0.to_vec();
    let (mut value, mut grad) = f(&x)?;
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "maximize: objective is {value} at the starting point"
        )));
    }
    if grad.len() != x.len() {
        return Err(Error::InvalidInput(format!(
            "maximize: gradient length {} != parameter length {}",
            grad.len(),
            x.len()
        )));
    }

    let mut trace = vec![value];
    let mut step = cfg.initial_step;
    let mut iterations = 0;
    let mut grad_norm = norm(&grad);

    let stop = loop {
        if grad_norm < cfg.grad_tolerance {
            break StopReason::GradientTolerance;
        }
        if iterations >= cfg.max_iters {
            break StopReason::MaxIterations;
        }

        let slope = grad_norm * grad_norm;
        let mut accepted = false;
        while step >= cfg.min_step {
            let candidate: Vec<f64> = x
                .iter()
                .zip(&grad)
                .map(|(xi, gi)| xi + step * gi)
                .collect();
            match f(&candidate) {
                Ok((cand_value, cand_grad))
                    if cand_value.is_finite()
                        && cand_value >= value + cfg.armijo_c * step * slope =>
                {
                    x = candidate;
                    value = cand_value;
                    grad = cand_grad;
                    grad_norm = norm(&grad);
                    trace.push(value);
                    step *= cfg.step_grow;
                    accepted = true;
                    break;
                }
                // Rejected: insufficient increase, non-finite value, or an
                // evaluation error at the trial point.
                _ => step *= cfg.step_shrink,
            }
        }
        if !accepted {
            break StopReason::StepUnderflow;
        }
        iterations += 1;
    };

    Ok(AscentResult {
        x,
        value,
        trace,
        iterations,
        grad_norm,
        stop,
    })
}
