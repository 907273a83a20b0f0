//! Description of the convexified subproblems handed to the barrier solver.

use nalgebra::{DMatrix, DVector};

/// Sparse real linear form `Σ_i val_i x_{idx_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseRow {
    pub fn dot(&self, x: &[f64]) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, v)| v * x[i]).sum()
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.val.iter_mut().for_each(|v| *v *= s);
        self
    }
}

/// Convex quadratic `Σ_r (a_r·x)² + l·x + c`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadForm {
    pub squares: Vec<SparseRow>,
    pub linear: Vec<(usize, f64)>,
    pub constant: f64,
}

impl QuadForm {
    pub fn value(&self, x: &[f64]) -> f64 {
        let sq: f64 = self.squares.iter().map(|r| r.dot(x).powi(2)).sum();
        let lin: f64 = self.linear.iter().map(|&(i, v)| v * x[i]).sum();
        sq + lin + self.constant
    }

    /// Adds `w·∇q(x)` into `grad`.
    pub fn add_gradient(&self, x: &[f64], w: f64, grad: &mut DVector<f64>) {
        for r in &self.squares {
            let s = 2.0 * w * r.dot(x);
            for (&i, v) in r.idx.iter().zip(&r.val) {
                grad[i] += s * v;
            }
        }
        for &(i, v) in &self.linear {
            grad[i] += w * v;
        }
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(x.len());
        self.add_gradient(x, 1.0, &mut g);
        g
    }

    /// Adds `w·∇²q` (constant) into `hess`.
    pub fn add_hessian(&self, w: f64, hess: &mut DMatrix<f64>) {
        for r in &self.squares {
            for (&i, vi) in r.idx.iter().zip(&r.val) {
                for (&j, vj) in r.idx.iter().zip(&r.val) {
                    hess[(i, j)] += 2.0 * w * vi * vj;
                }
            }
        }
    }

    /// Positive multiple of the form.
    pub fn scaled(self, s: f64) -> Self {
        debug_assert!(s > 0.0);
        let r = s.sqrt();
        Self {
            squares: self.squares.into_iter().map(|row| row.scaled(r)).collect(),
            linear: self.linear.into_iter().map(|(i, v)| (i, v * s)).collect(),
            constant: self.constant * s,
        }
    }
}

/// Affine function `c + Σ_i a_i x_{idx_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub row: SparseRow,
    pub constant: f64,
}

impl Affine {
    pub fn value(&self, x: &[f64]) -> f64 {
        self.constant + self.row.dot(x)
    }
}

/// Smoothed max-min surrogate `−(1/υ) ln Σ_k exp(−υ a_k(x)/f_k(x))`, maximized.
#[derive(Debug, Clone, PartialEq)]
pub struct LseSurrogate {
    pub sharpness: f64,
    pub numerators: Vec<Affine>,
    pub denominators: Vec<QuadForm>,
}

impl LseSurrogate {
    fn ratios(&self, x: &[f64]) -> Vec<f64> {
        self.numerators.iter().zip(&self.denominators).map(|(a, f)| a.value(x) / f.value(x)).collect()
    }

    fn weights(&self, r: &[f64]) -> (f64, Vec<f64>) {
        let u = self.sharpness;
        let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
        let e: Vec<f64> = r.iter().map(|&ri| (-u * (ri - lo)).exp()).collect();
        let s: f64 = e.iter().sum();
        (lo - s.ln() / u, e.into_iter().map(|x| x / s).collect())
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.weights(&self.ratios(x)).0
    }

    fn ratio_gradient(&self, k: usize, x: &[f64]) -> (f64, f64, DVector<f64>, DVector<f64>) {
        let a = &self.numerators[k];
        let f = &self.denominators[k];
        let (av, fv) = (a.value(x), f.value(x));
        let mut ga = DVector::zeros(x.len());
        for (&i, v) in a.row.idx.iter().zip(&a.row.val) {
            ga[i] += v;
        }
        (av, fv, ga, f.gradient(x))
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let r = self.ratios(x);
        let (_, pi) = self.weights(&r);
        let mut g = DVector::zeros(x.len());
        for k in 0..r.len() {
            let (av, fv, ga, gf) = self.ratio_gradient(k, x);
            g += (ga / fv - gf * (av / (fv * fv))) * pi[k];
        }
        g
    }

    /// Value, gradient and Hessian of the surrogate.
    pub fn derivatives(&self, x: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = x.len();
        let r = self.ratios(x);
        let (value, pi) = self.weights(&r);
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        let mut outer = DMatrix::zeros(n, n);
        for k in 0..r.len() {
            let (av, fv, ga, gf) = self.ratio_gradient(k, x);
            let gr = &ga / fv - &gf * (av / (fv * fv));
            // ∇²r = −(∇a∇fᵀ + ∇f∇aᵀ)/f² + 2a∇f∇fᵀ/f³ − a∇²f/f²
            let mut hf = DMatrix::zeros(n, n);
            self.denominators[k].add_hessian(1.0, &mut hf);
            let cross = &ga * gf.transpose();
            let hr = -(&cross + cross.transpose()) / (fv * fv) + &gf * gf.transpose() * (2.0 * av / fv.powi(3))
                - hf * (av / (fv * fv));
            hess += hr * pi[k];
            outer += &gr * gr.transpose() * pi[k];
            grad += gr * pi[k];
        }
        hess -= (outer - &grad * grad.transpose()) * self.sharpness;
        (value, grad, hess)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Minimize `x[index]`.
    Slack { index: usize },
    /// Maximize the smoothed surrogate.
    Lse(LseSurrogate),
}

/// `optimize objective  s.t.  q_i(x) ≤ 0,  x_j ≥ 0 (j ∈ nonneg)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexSubproblem {
    pub dim: usize,
    pub constraints: Vec<QuadForm>,
    pub nonneg: Vec<usize>,
    pub objective: Objective,
}

impl ConvexSubproblem {
    /// Number of inequality constraints seen by the barrier.
    pub fn num_inequalities(&self) -> usize {
        self.constraints.len() + self.nonneg.len()
    }

    pub fn max_residual(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(x))
            .chain(self.nonneg.iter().map(|&i| -x[i]))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_strictly_feasible(&self, x: &[f64]) -> bool {
        self.max_residual(x) < 0.0
    }

    /// Objective in its own sense: the slack (minimized) or the surrogate
    /// (maximized).
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        match &self.objective {
            Objective::Slack { index } => x[*index],
            Objective::Lse(s) => s.value(x),
        }
    }
}
