//! Fully connected networks on column-major batches (one sample per column).

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Layer widths `m_0 … m_L` (input first) and one activation per layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        let spec = Self { layer_sizes, activations };
        spec.validate()?;
        Ok(spec)
    }

    /// Pyramid with a linear first hidden layer and ReLU everywhere else,
    /// including the output.
    pub fn pyramid(input: usize, hidden: &[usize], output: usize) -> Self {
        let mut layer_sizes = vec![input];
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(output);
        let activations = (0..layer_sizes.len() - 1)
            .map(|i| if i == 0 && !hidden.is_empty() { Activation::Linear } else { Activation::Relu })
            .collect();
        Self { layer_sizes, activations }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 || self.activations.len() != self.layer_sizes.len() - 1 {
            return Err(Error::Dimension("an MLP needs L+1 widths and L activations".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Dimension("layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("validated spec")
    }

    /// `Σ_i (m_{i−1} + 1)·m_i`.
    pub fn num_params(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }
}

/// Per-layer weights (`m_i × m_{i−1}`) and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec) -> Self {
        let (weights, biases) = spec
            .layer_sizes
            .windows(2)
            .map(|w| (DMatrix::zeros(w[1], w[0]), DVector::zeros(w[1])))
            .unzip();
        Self { weights, biases }
    }

    /// Uniform `±√(6/(fan_in + fan_out))` weights, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec);
        for w in &mut p.weights {
            let limit = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
            w.iter_mut().for_each(|x| *x = rng.random_range(-limit..limit));
        }
        p
    }

    pub fn matches(&self, spec: &MlpSpec) -> bool {
        self.weights.len() == spec.num_layers()
            && spec.layer_sizes.windows(2).zip(&self.weights).zip(&self.biases).all(|((w, mat), b)| {
                mat.nrows() == w[1] && mat.ncols() == w[0] && b.len() == w[1]
            })
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// `‖W‖²` summed over layers (biases excluded).
    pub fn weight_norm_sqr(&self) -> f64 {
        self.weights.iter().map(|w| w.norm_squared()).sum()
    }
}

fn affine(w: &DMatrix<f64>, b: &DVector<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = w * a;
    for mut col in z.column_iter_mut() {
        col += b;
    }
    z
}

/// Outputs for a batch (columns are samples).
pub fn forward_batch(params: &MlpParams, spec: &MlpSpec, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = x.clone();
    for ((w, b), act) in params.weights.iter().zip(&params.biases).zip(&spec.activations) {
        a = affine(w, b, &a).map(|z| act.apply(z));
    }
    a
}

pub fn forward(params: &MlpParams, spec: &MlpSpec, x: &[f64]) -> Vec<f64> {
    let out = forward_batch(params, spec, &DMatrix::from_column_slice(x.len(), 1, x));
    out.as_slice().to_vec()
}

/// Mean absolute error over every entry of the batch.
pub fn mae(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    (pred - target).iter().map(|e| e.abs()).sum::<f64>() / pred.len() as f64
}

/// `mean|ŷ − y| + (l2/2)·‖W‖²` and its gradient; the subgradient of `|·|`
/// at zero is taken as zero.
pub fn backward(
    params: &MlpParams,
    spec: &MlpSpec,
    x: &DMatrix<f64>,
    y: &DMatrix<f64>,
    l2: f64,
) -> (f64, MlpParams) {
    let layers = spec.num_layers();
    let mut pre = Vec::with_capacity(layers);
    let mut post = Vec::with_capacity(layers + 1);
    post.push(x.clone());
    for ((w, b), act) in params.weights.iter().zip(&params.biases).zip(&spec.activations) {
        let z = affine(w, b, post.last().expect("input pushed"));
        post.push(z.map(|v| act.apply(v)));
        pre.push(z);
    }
    let out = post.last().expect("at least one layer");
    let scale = 1.0 / out.len() as f64;
    let loss = mae(out, y) + 0.5 * l2 * params.weight_norm_sqr();
    let mut delta = (out - y).map(|e| scale * if e > 0.0 { 1.0 } else if e < 0.0 { -1.0 } else { 0.0 });
    let mut grads = MlpParams::zeros(spec);
    for i in (0..layers).rev() {
        let act = spec.activations[i];
        delta.zip_apply(&pre[i], |d, z| *d *= act.derivative(z));
        grads.weights[i] = &delta * post[i].transpose() + &params.weights[i] * l2;
        grads.biases[i] = delta.column_sum();
        if i > 0 {
            delta = params.weights[i].transpose() * &delta;
        }
    }
    (loss, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn full_size_parameter_counts() {
        assert_eq!(MlpSpec::pyramid(40, &[1024, 512, 256, 128, 64], 40).num_params(), 741_864);
        assert_eq!(MlpSpec::pyramid(8, &[64, 32, 16], 8).num_params(), 3_320);
        assert_eq!(MlpSpec::pyramid(40, &[128], 40).num_params(), 10_408);
        let spec = MlpSpec::pyramid(40, &[128], 40);
        assert_eq!(spec.activations, vec![Activation::Linear, Activation::Relu]);
        assert_eq!(MlpParams::zeros(&spec).num_params(), spec.num_params());
    }

    #[test]
    fn zero_params_give_zero_output() {
        let spec = MlpSpec::pyramid(3, &[5, 4], 2);
        assert_eq!(forward(&MlpParams::zeros(&spec), &spec, &[1.0, -2.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let spec = MlpSpec::new(vec![3, 3], vec![Activation::Linear]).unwrap();
        let mut p = MlpParams::zeros(&spec);
        p.weights[0] = DMatrix::identity(3, 3);
        assert_eq!(forward(&p, &spec, &[1.5, -2.0, 0.25]), vec![1.5, -2.0, 0.25]);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(MlpSpec::new(vec![3], vec![]).is_err());
        assert!(MlpSpec::new(vec![3, 0], vec![Activation::Relu]).is_err());
        assert!(MlpSpec::new(vec![3, 2], vec![]).is_err());
    }

    fn flat(p: &MlpParams) -> Vec<f64> {
        p.weights.iter().flat_map(|w| w.iter().copied()).chain(p.biases.iter().flat_map(|b| b.iter().copied())).collect()
    }

    fn set_flat(p: &mut MlpParams, i: usize, v: f64) {
        let mut idx = i;
        for w in p.weights.iter_mut() {
            if idx < w.len() {
                w.as_mut_slice()[idx] = v;
                return;
            }
            idx -= w.len();
        }
        for b in p.biases.iter_mut() {
            if idx < b.len() {
                b[idx] = v;
                return;
            }
            idx -= b.len();
        }
    }

    fn check_gradients(spec: &MlpSpec, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = MlpParams::init(spec, &mut rng);
        let x = DMatrix::from_fn(spec.input_dim(), 6, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(spec.output_dim(), 6, |_, _| rng.random_range(0.0..1.0));
        let l2 = 1e-3;
        let (_, grads) = backward(&params, spec, &x, &y, l2);
        let g = flat(&grads);
        let base = flat(&params);
        let h = 1e-6;
        for (i, (&gi, &p0)) in g.iter().zip(&base).enumerate() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            set_flat(&mut plus, i, p0 + h);
            set_flat(&mut minus, i, p0 - h);
            let lp = backward(&plus, spec, &x, &y, l2).0;
            let lm = backward(&minus, spec, &x, &y, l2).0;
            let fd = (lp - lm) / (2.0 * h);
            // Central differences straddling a kink are not informative.
            let kink = {
                let fp = forward_batch(&plus, spec, &x);
                let fm = forward_batch(&minus, spec, &x);
                let e0 = forward_batch(&params, spec, &x) - &y;
                (fp - &y).iter().zip((fm - &y).iter()).zip(e0.iter()).any(|((a, b), c)| a.signum() != b.signum() || *c == 0.0)
            };
            if !kink {
                assert!((fd - gi).abs() <= 1e-5 * fd.abs().max(gi.abs()).max(1e-3), "param {i}: fd {fd} vs {gi}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        check_gradients(&MlpSpec::pyramid(4, &[6, 5], 3), 1);
        for acts in [
            [Activation::Linear, Activation::Linear, Activation::Linear],
            [Activation::Relu, Activation::Linear, Activation::Relu],
            [Activation::Relu, Activation::Relu, Activation::Linear],
        ] {
            check_gradients(&MlpSpec::new(vec![3, 5, 4, 2], acts.to_vec()).unwrap(), 2);
        }
    }

    #[test]
    fn perfect_fit_leaves_only_weight_decay() {
        let spec = MlpSpec::pyramid(3, &[4], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = MlpParams::init(&spec, &mut rng);
        let x = DMatrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
        let y = forward_batch(&params, &spec, &x);
        let (loss, grads) = backward(&params, &spec, &x, &y, 0.01);
        assert!((loss - 0.005 * params.weight_norm_sqr()).abs() < 1e-15);
        for (g, w) in grads.weights.iter().zip(&params.weights) {
            assert_eq!(g, &(w * 0.01));
        }
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let spec = MlpSpec::pyramid(3, &[4], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = MlpParams::init(&spec, &mut rng);
        let x = DMatrix::from_fn(3, 4, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(2, 4, |_, _| rng.random_range(0.0..1.0));
        let x2 = DMatrix::from_fn(3, 8, |i, j| x[(i, j % 4)]);
        let y2 = DMatrix::from_fn(2, 8, |i, j| y[(i, j % 4)]);
        let (_, g1) = backward(&params, &spec, &x, &y, 1e-4);
        let (_, g2) = backward(&params, &spec, &x2, &y2, 1e-4);
        for (a, b) in flat(&g1).iter().zip(flat(&g2).iter()) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }
}
