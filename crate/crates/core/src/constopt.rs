//! Constant fitting for generated skeletons.
//!
//! Each start is refined by damped least-squares steps on the mean squared
//! error: the residual Jacobian comes from central finite differences over
//! the constants, the step solves the Marquardt-damped normal equations, and
//! the damping grows on a rejected step and shrinks on an accepted one. Only
//! improving steps are accepted, so the recorded error of a start never
//! increases.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::datagen::Point;
use crate::expression::{evaluate_skeleton, substitute, Expression, Skeleton};
use crate::seed::{derive_seed, rng};

/// Squared-error contribution of a point whose prediction faults.
pub const FAULT_PENALTY: f64 = 1e6;
/// Finite-difference step over constants.
pub const FD_STEP: f64 = 1e-6;
/// Range of random initial constants.
pub const INIT_RANGE: (f64, f64) = (-5.0, 5.0);

const INITIAL_DAMPING: f64 = 1e-3;
const MAX_DAMPING: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitBudget {
    /// Random starts in addition to the all-ones start.
    pub restarts: usize,
    /// Step attempts per start, accepted or not.
    pub max_iterations: usize,
    /// A start stops once an accepted step improves the error by less than this.
    pub tolerance: f64,
}

impl Default for FitBudget {
    fn default() -> Self {
        FitBudget {
            restarts: 8,
            max_iterations: 200,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub expression: Expression,
    pub constants: Vec<f64>,
    /// Mean squared error over the points, faults counted at [`FAULT_PENALTY`].
    pub residual: f64,
    pub converged: bool,
    /// Starts evaluated, including the all-ones start.
    pub restarts_used: usize,
}

/// Outcome of refining one start.
#[derive(Debug, Clone, PartialEq)]
pub struct StartOutcome {
    pub constants: Vec<f64>,
    pub mse: f64,
    /// Error after the initial point and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Stopped on tolerance or exhausted damping rather than the iteration cap.
    pub converged: bool,
    /// At least one point evaluated without a fault at the final constants.
    pub finite: bool,
}

struct Objective<'a> {
    skeleton: &'a Skeleton,
    points: &'a [Point],
}

impl Objective<'_> {
    fn prediction(&self, constants: &[f64], point: &Point) -> Option<f64> {
        evaluate_skeleton(self.skeleton, constants, &point.x).ok()
    }

    /// Residual per point; `None` marks a fault.
    fn residuals(&self, constants: &[f64]) -> Vec<Option<f64>> {
        self.points
            .iter()
            .map(|p| {
                self.prediction(constants, p)
                    .map(|v| v - p.y)
                    .filter(|r| (r * r).is_finite())
            })
            .collect()
    }

    fn mse_of(residuals: &[Option<f64>]) -> f64 {
        let total: f64 = residuals
            .iter()
            .map(|r| r.map_or(FAULT_PENALTY, |v| v * v))
            .sum();
        total / residuals.len() as f64
    }

    /// Central-difference Jacobian, one row per point; rows touching a fault
    /// on either side are zero.
    fn jacobian(&self, constants: &[f64]) -> Vec<Vec<f64>> {
        let m = constants.len();
        let mut jac = vec![vec![0.0; m]; self.points.len()];
        let mut probe = constants.to_vec();
        for j in 0..m {
            let h = FD_STEP * constants[j].abs().max(1.0);
            probe[j] = constants[j] + h;
            let plus = self.residuals(&probe);
            probe[j] = constants[j] - h;
            let minus = self.residuals(&probe);
            probe[j] = constants[j];
            for (i, (p, q)) in plus.iter().zip(&minus).enumerate() {
                if let (Some(p), Some(q)) = (p, q) {
                    let d = (p - q) / (2.0 * h);
                    if d.is_finite() {
                        jac[i][j] = d;
                    }
                }
            }
        }
        jac
    }
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Refines a single start.
pub fn refine_start(
    skeleton: &Skeleton,
    points: &[Point],
    init: &[f64],
    budget: &FitBudget,
) -> StartOutcome {
    let objective = Objective { skeleton, points };
    let m = init.len();
    let mut constants = init.to_vec();
    let mut residuals = objective.residuals(&constants);
    let mut mse = Objective::mse_of(&residuals);
    let mut trace = vec![mse];
    let mut damping = INITIAL_DAMPING;
    let mut iterations = 0;
    let mut converged = false;

    'outer: while iterations < budget.max_iterations {
        let jac = objective.jacobian(&constants);
        let mut jtj = vec![vec![0.0; m]; m];
        let mut jtr = vec![0.0; m];
        for (row, r) in jac.iter().zip(&residuals) {
            let Some(r) = r else { continue };
            for a in 0..m {
                jtr[a] += row[a] * r;
                for b in 0..m {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        loop {
            if iterations >= budget.max_iterations {
                break 'outer;
            }
            if damping > MAX_DAMPING {
                converged = true;
                break 'outer;
            }
            iterations += 1;
            let mut lhs = jtj.clone();
            for (a, row) in lhs.iter_mut().enumerate() {
                row[a] += damping * (jtj[a][a] + 1e-12);
            }
            let rhs: Vec<f64> = jtr.iter().map(|g| -g).collect();
            let Some(step) = solve(lhs, rhs) else {
                damping *= 10.0;
                continue;
            };
            let candidate: Vec<f64> = constants.iter().zip(&step).map(|(c, s)| c + s).collect();
            let cand_residuals = objective.residuals(&candidate);
            let cand_mse = Objective::mse_of(&cand_residuals);
            if cand_mse < mse {
                let improvement = mse - cand_mse;
                constants = candidate;
                residuals = cand_residuals;
                mse = cand_mse;
                trace.push(mse);
                damping = (damping / 10.0).max(1e-12);
                if improvement < budget.tolerance {
                    converged = true;
                    break 'outer;
                }
                continue 'outer;
            }
            damping *= 10.0;
        }
    }
    let finite = residuals.iter().any(Option::is_some) && constants.iter().all(|c| c.is_finite());
    StartOutcome {
        constants,
        mse,
        trace,
        iterations,
        converged,
        finite,
    }
}

/// Multi-start fit of the skeleton's constants to `points`.
pub fn fit_constants(
    skeleton: &Skeleton,
    points: &[Point],
    budget: &FitBudget,
    seed: u64,
) -> FitResult {
    let m = skeleton.placeholder_count();
    let objective = Objective { skeleton, points };
    if m == 0 {
        let residuals = objective.residuals(&[]);
        return FitResult {
            expression: substitute(skeleton, &[]).expect("no placeholders"),
            constants: Vec::new(),
            residual: Objective::mse_of(&residuals),
            converged: true,
            restarts_used: 0,
        };
    }

    let mut best: Option<StartOutcome> = None;
    for start in 0..=budget.restarts {
        let init: Vec<f64> = if start == 0 {
            vec![1.0; m]
        } else {
            let mut r = rng(derive_seed(seed, start as u64));
            (0..m)
                .map(|_| r.random_range(INIT_RANGE.0..INIT_RANGE.1))
                .collect()
        };
        let outcome = refine_start(skeleton, points, &init, budget);
        // strict comparison keeps the lowest ordinal on ties
        let better = match &best {
            None => true,
            Some(b) => (outcome.finite && !b.finite) || (outcome.finite == b.finite && outcome.mse < b.mse),
        };
        if better {
            best = Some(outcome);
        }
    }
    let best = best.expect("at least one start");
    FitResult {
        expression: substitute(skeleton, &best.constants).expect("arity matches"),
        residual: best.mse,
        converged: best.converged && best.finite,
        constants: best.constants,
        restarts_used: budget.restarts + 1,
    }
}

/// Mean squared error of a concrete expression, faults counted at the penalty.
pub fn expression_mse(expr: &Expression, points: &[Point]) -> f64 {
    let total: f64 = points
        .iter()
        .map(|p| match crate::expression::evaluate(expr, &p.x) {
            Ok(v) if ((v - p.y) * (v - p.y)).is_finite() => (v - p.y) * (v - p.y),
            _ => FAULT_PENALTY,
        })
        .sum();
    total / points.len() as f64
}
