//! Small complex linear-algebra helpers shared by the channel, estimation and
//! beamforming code.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex<f64>;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Draws a length-`len` vector with i.i.d. CN(0, 1) entries.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, len: usize) -> CVector {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CVector::from_fn(len, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// `a^H b`.
pub fn inner(a: &CVector, b: &CVector) -> C64 {
    a.dotc(b)
}

pub fn norm_sqr(a: &CVector) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Inverse of a Hermitian positive-definite matrix via Cholesky.
pub fn hpd_inverse(m: &CMatrix, what: &'static str) -> crate::Result<CMatrix> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(crate::Error::Singular(what))
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watt(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn watt_to_dbm(w: f64) -> f64 {
    linear_to_db(w) + 30.0
}

/// Quantile with linear interpolation between order statistics
/// (`q` in `[0, 1]`, input need not be sorted).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn quartiles_interpolate_linearly() {
        let x = [5.0, 1.0, 4.0, 2.0, 3.0];
        assert_eq!(quantile(&x, 0.25), 2.0);
        assert_eq!(median(&x), 3.0);
        assert_eq!(quantile(&x, 0.75), 4.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn dbm_conversions() {
        assert!((dbm_to_watt(20.0) - 0.1).abs() < 1e-15);
        assert!((watt_to_dbm(0.01) - 10.0).abs() < 1e-12);
    }

    #[test]
    fn complex_gaussian_has_unit_power() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let v = complex_gaussian(&mut rng, n);
        let p = norm_sqr(&v) / n as f64;
        assert!((p - 1.0).abs() < 0.03, "{p}");
    }
}
