//! Log-barrier interior-point method with damped Newton centering.

use nalgebra::{DMatrix, DVector};

use super::problem::{ConvexSubproblem, Objective};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSettings {
    pub t0: f64,
    pub mu: f64,
    /// Stop once `m/t` drops below this.
    pub gap: f64,
    /// Newton iterations allowed per centering step.
    pub max_newton: usize,
}

impl Default for BarrierSettings {
    fn default() -> Self {
        Self { t0: 1.0, mu: 10.0, gap: 1e-7, max_newton: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierSolution {
    pub x: Vec<f64>,
    /// Objective in its own sense (slack or surrogate value).
    pub objective: f64,
    pub newton_iterations: usize,
    pub centering_steps: usize,
}

const NEWTON_TOL: f64 = 1e-10;
const ARMIJO: f64 = 0.25;
const MIN_STEP: f64 = 1e-14;

struct Barrier<'a> {
    prob: &'a ConvexSubproblem,
    t: f64,
}

impl Barrier<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let f0 = match &self.prob.objective {
            Objective::Slack { index } => x[*index],
            Objective::Lse(s) => -s.value(x),
        };
        let mut phi = self.t * f0;
        for c in &self.prob.constraints {
            let v = c.value(x);
            if !(v < 0.0) {
                return f64::INFINITY;
            }
            phi -= (-v).ln();
        }
        for &i in &self.prob.nonneg {
            if !(x[i] > 0.0) {
                return f64::INFINITY;
            }
            phi -= x[i].ln();
        }
        if phi.is_nan() {
            f64::INFINITY
        } else {
            phi
        }
    }

    /// Objective and barrier derivatives, unweighted by `t`.
    fn parts(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let (g0, h0) = match &self.prob.objective {
            Objective::Slack { index } => {
                let mut g = DVector::zeros(n);
                g[*index] = 1.0;
                (g, DMatrix::zeros(n, n))
            }
            Objective::Lse(s) => {
                let (_, g, h) = s.derivatives(x);
                (-g, -h)
            }
        };
        let mut gb = DVector::zeros(n);
        let mut hb = DMatrix::zeros(n, n);
        for c in &self.prob.constraints {
            let slack = -c.value(x);
            let gc = c.gradient(x);
            gb += &gc / slack;
            c.add_hessian(1.0 / slack, &mut hb);
            hb += &gc * gc.transpose() / (slack * slack);
        }
        for &i in &self.prob.nonneg {
            gb[i] -= 1.0 / x[i];
            hb[(i, i)] += 1.0 / (x[i] * x[i]);
        }
        (g0, h0, gb, hb)
    }

    fn derivatives(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let (g0, h0, gb, hb) = self.parts(x);
        (g0 * self.t + gb, h0 * self.t + hb)
    }
}

/// `t` minimizing the Newton-norm residual `‖t∇f₀ + ∇φ‖` of the centrality
/// condition at `x`, so warm starts near the central path skip the early
/// centering steps.
fn fitted_t(bar: &Barrier, x: &[f64]) -> Option<f64> {
    let (g0, _, gb, hb) = bar.parts(x);
    let y = newton_direction(&g0, hb)?;
    // y = −Hb⁻¹ g0
    let num = y.dot(&gb);
    let den = -y.dot(&g0);
    (den > 0.0 && num.is_finite()).then(|| num / den)
}

/// Solves `H Δ = −g` on the Jacobi-scaled system. An indefinite system has
/// its eigenvalues replaced by their magnitudes (floored), which keeps the
/// direction a descent direction without collapsing it to a gradient step.
fn newton_direction(g: &DVector<f64>, h: DMatrix<f64>) -> Option<DVector<f64>> {
    let n = g.len();
    let scale: Vec<f64> = (0..n).map(|i| if h[(i, i)] > 0.0 { h[(i, i)].sqrt().recip() } else { 1.0 }).collect();
    let hs = DMatrix::from_fn(n, n, |i, j| h[(i, j)] * scale[i] * scale[j]);
    let gs = DVector::from_fn(n, |i, _| -g[i] * scale[i]);
    // Near-singular PSD systems get a small shift; genuinely indefinite ones
    // the eigenvalue treatment.
    let shifted = [0.0, 1e-12, 1e-10, 1e-8].into_iter().find_map(|shift| {
        let mut m = hs.clone();
        for i in 0..n {
            m[(i, i)] += shift;
        }
        m.cholesky()
    });
    let y = match shifted {
        Some(ch) => ch.solve(&gs),
        None => {
            let eig = hs.symmetric_eigen();
            let top = eig.eigenvalues.amax();
            if !(top > 0.0 && top.is_finite()) {
                return None;
            }
            let proj = eig.eigenvectors.transpose() * gs;
            let inv = DVector::from_fn(n, |i, _| proj[i] / eig.eigenvalues[i].abs().max(1e-10 * top));
            eig.eigenvectors * inv
        }
    };
    y.iter().all(|v| v.is_finite()).then(|| DVector::from_fn(n, |i, _| y[i] * scale[i]))
}

/// Runs the barrier method from a strictly feasible `start`.
pub fn barrier_solve(prob: &ConvexSubproblem, start: &[f64], settings: &BarrierSettings) -> Result<BarrierSolution> {
    if start.len() != prob.dim {
        return Err(Error::Dimension(format!("start has {} entries, problem has {}", start.len(), prob.dim)));
    }
    if !prob.is_strictly_feasible(start) {
        return Err(Error::Domain("barrier start is not strictly feasible".into()));
    }
    let m = prob.num_inequalities() as f64;
    let mut x = DVector::from_column_slice(start);
    let mut bar = Barrier { prob, t: settings.t0 };
    if let Some(t) = fitted_t(&bar, start) {
        bar.t = t.clamp(settings.t0, (m / settings.gap).max(settings.t0));
    }
    let mut newton_iterations = 0;
    let mut centering_steps = 0;
    loop {
        centering_steps += 1;
        let mut converged = false;
        for _ in 0..settings.max_newton {
            let (g, h) = bar.derivatives(x.as_slice());
            let Some(dx) = newton_direction(&g, h) else {
                return Err(Error::Solver {
                    reason: "Newton system could not be regularized".into(),
                    last_iterate: x.as_slice().to_vec(),
                });
            };
            newton_iterations += 1;
            let slope = g.dot(&dx);
            if -slope / 2.0 <= NEWTON_TOL {
                converged = true;
                break;
            }
            let phi = bar.value(x.as_slice());
            let mut step = 1.0;
            let mut accepted = false;
            while step >= MIN_STEP {
                let trial = &x + &dx * step;
                let value = bar.value(trial.as_slice());
                if value < phi && value <= phi + ARMIJO * step * slope {
                    x = trial;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                // No representable decrease left: centered to working precision.
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Solver {
                reason: format!("Newton centering did not converge within {} iterations", settings.max_newton),
                last_iterate: x.as_slice().to_vec(),
            });
        }
        if m / bar.t < settings.gap {
            break;
        }
        bar.t *= settings.mu;
    }
    let x = x.as_slice().to_vec();
    Ok(BarrierSolution { objective: prob.objective_value(&x), x, newton_iterations, centering_steps })
}
