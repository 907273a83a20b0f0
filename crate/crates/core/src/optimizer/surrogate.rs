//! Tangent lower bounds of the SINR numerators and the smooth minimum.

use crate::linalg::C64;

/// Affine minorant `g̃(d) = constant + gradient·d` of `g(d) = |cᵀd|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorBound {
    pub gradient: Vec<f64>,
    pub constant: f64,
}

impl TaylorBound {
    pub fn value(&self, d: &[f64]) -> f64 {
        self.constant + self.gradient.iter().zip(d).map(|(a, x)| a * x).sum::<f64>()
    }
}

/// First-order expansion of `|cᵀd|²` at `d_prev`, a global lower bound since
/// the function is convex.
pub fn taylor_lower_bound(d_prev: &[f64], c: &[C64]) -> TaylorBound {
    let re: f64 = c.iter().zip(d_prev).map(|(z, x)| z.re * x).sum();
    let im: f64 = c.iter().zip(d_prev).map(|(z, x)| z.im * x).sum();
    // ∇g(d⁰) = 2 Re{c cᴴ} d⁰ and g(d⁰) − ∇g(d⁰)·d⁰ = −g(d⁰).
    let gradient = c.iter().map(|z| 2.0 * (z.re * re + z.im * im)).collect();
    TaylorBound { gradient, constant: -(re * re + im * im) }
}

/// `−(1/υ) ln Σ_k exp(−υ x_k)`, never above `min_k x_k` and within `ln K / υ`
/// of it.
pub fn lse(values: &[f64], sharpness: f64) -> f64 {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = values.iter().map(|&x| (-sharpness * (x - lo)).exp()).sum();
    lo - s.ln() / sharpness
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g(d: &[f64], c: &[C64]) -> f64 {
        c.iter().zip(d).map(|(z, &x)| z * x).sum::<C64>().norm_sqr()
    }

    #[test]
    fn tangent_at_expansion_point() {
        let c = [C64::new(0.3, -1.2), C64::new(2.0, 0.4), C64::new(-0.7, 0.1)];
        let d0 = [0.5, 0.2, 0.9];
        let t = taylor_lower_bound(&d0, &c);
        assert!((t.value(&d0) - g(&d0, &c)).abs() < 1e-14);
    }

    #[test]
    fn minorant_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let c: Vec<C64> = (0..4).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let d: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0)).collect();
            let d0: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0)).collect();
            assert!(taylor_lower_bound(&d0, &c).value(&d) <= g(&d, &c) + 1e-12);
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let c: Vec<C64> = (0..3).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let d0: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..2.0)).collect();
            let t = taylor_lower_bound(&d0, &c);
            for i in 0..3 {
                let h = 1e-6;
                let mut p = d0.clone();
                let mut m = d0.clone();
                p[i] += h;
                m[i] -= h;
                let fd = (g(&p, &c) - g(&m, &c)) / (2.0 * h);
                assert!((fd - t.gradient[i]).abs() <= 1e-6 * t.gradient[i].abs().max(1.0));
            }
        }
    }

    #[test]
    fn smooth_minimum_bounds() {
        let v = lse(&[1.0, 2.0, 3.0], 1.0);
        let expect = -((-1f64).exp() + (-2f64).exp() + (-3f64).exp()).ln();
        assert!((v - expect).abs() < 1e-14);
        assert!((v - 0.5924).abs() < 1e-4);
        assert!(v <= 1.0 && 1.0 - v <= 3f64.ln());
        assert_eq!(lse(&[4.2], 0.3), 4.2);
        // Shifted form survives huge arguments.
        assert!((lse(&[1e6, 1e6], 1.0) - (1e6 - 2f64.ln())).abs() < 1e-9);
    }
}
