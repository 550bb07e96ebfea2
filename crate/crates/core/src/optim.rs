//! Damped Newton ascent with step halving.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadratics::repair_spd;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    pub max_iter: usize,
    /// Convergence threshold on the gradient infinity-norm.
    pub grad_tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            grad_tol: 1e-9,
            max_halvings: 20,
        }
    }
}

/// Value, gradient and negative Hessian (possibly approximate) at a point.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub value: f64,
    pub grad: DVector<f64>,
    pub neg_hessian: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
    /// Curvature needed SPD repair at some iterate.
    pub clamped: bool,
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub x: DVector<f64>,
    pub local: LocalModel,
    pub diagnostics: NewtonDiagnostics,
    pub converged: bool,
}

/// Best iterate when the gradient tolerance was not met.
#[derive(Debug, Clone)]
pub struct NewtonFailure {
    pub best: DVector<f64>,
    pub value: f64,
    pub diagnostics: NewtonDiagnostics,
    pub reason: &'static str,
}

impl fmt::Display for NewtonFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} after {} iterations (gradient norm {:.3e})",
            self.reason, self.diagnostics.iterations, self.diagnostics.grad_norm
        )
    }
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Maximize `objective` from `x0`.
///
/// The search direction solves `neg_hessian * step = grad` after SPD repair.
/// A trial point is accepted when it raises the objective; at the round-off
/// floor a point that keeps the value and shrinks the gradient is accepted
/// too. With `require_convergence == false` the last iterate is returned when
/// the budget runs out instead of an error.
pub fn maximize<F>(
    objective: F,
    x0: DVector<f64>,
    config: &NewtonConfig,
    require_convergence: bool,
) -> Result<NewtonOutcome>
where
    F: Fn(&DVector<f64>) -> LocalModel,
{
    let mut x = x0;
    let mut local = objective(&x);
    let mut clamped = false;
    let fail = |x: DVector<f64>, local: &LocalModel, iterations, clamped, reason| {
        Error::NonConvergence {
            time_index: None,
            failure: Box::new(NewtonFailure {
                best: x,
                value: local.value,
                diagnostics: NewtonDiagnostics {
                    iterations,
                    grad_norm: inf_norm(&local.grad),
                    clamped,
                },
                reason,
            }),
        }
    };
    if !local.value.is_finite() || local.grad.iter().any(|g| !g.is_finite()) {
        return Err(fail(x, &local, 0, clamped, "objective not finite at the start point"));
    }

    for iter in 0..=config.max_iter {
        let grad_norm = inf_norm(&local.grad);
        if grad_norm <= config.grad_tol || iter == config.max_iter {
            let converged = grad_norm <= config.grad_tol;
            if !converged && require_convergence {
                return Err(fail(x, &local, iter, clamped, "iteration budget exhausted"));
            }
            let diagnostics = NewtonDiagnostics {
                iterations: iter,
                grad_norm,
                clamped,
            };
            return Ok(NewtonOutcome {
                x,
                local,
                diagnostics,
                converged,
            });
        }

        let repaired = match repair_spd(&local.neg_hessian) {
            Ok(r) => r,
            Err(_) => return Err(fail(x, &local, iter, clamped, "degenerate curvature")),
        };
        clamped |= repaired.clamped;
        let step = match repaired.matrix.clone().cholesky() {
            Some(c) => c.solve(&local.grad),
            None => return Err(fail(x, &local, iter, clamped, "singular Newton system")),
        };

        // Once the predicted gain drops below what the value can resolve,
        // rank candidates by gradient norm instead.
        let predicted_gain = local.grad.dot(&step);
        let floor = if predicted_gain < 1e-10 * local.value.abs().max(1.0) {
            1e-10 * local.value.abs().max(1.0)
        } else {
            4.0 * f64::EPSILON * local.value.abs().max(1.0)
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=config.max_halvings {
            let cand = &x + &step * scale;
            let cand_local = objective(&cand);
            let finite = cand_local.value.is_finite() && cand_local.grad.iter().all(|g| g.is_finite());
            if finite
                && (cand_local.value > local.value
                    || (cand_local.value >= local.value - floor
                        && inf_norm(&cand_local.grad) < grad_norm))
            {
                accepted = Some((cand, cand_local));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((cand, cand_local)) => {
                x = cand;
                local = cand_local;
            }
            None => {
                return Err(fail(x, &local, iter, clamped, "line search found no ascent"));
            }
        }
    }
    unreachable!("loop returns at iter == max_iter")
}
