//! Closed-form exponent algebra.
//!
//! Half-plane exponents `xi_tilde`, full-plane exponents `xi = eta(xi_tilde)`,
//! the two-sided derivative exponent `lambda_kappa(w1, w2)`, its boundary
//! exponents `a_j` and the eigenfunction `G(x) = x^a1 (1 - x)^a2`.
//!
//! Everything here is a pure function of its arguments.

use crate::error::{Error, Result};

/// `sqrt(1/24)`.
const ROOT_24TH: f64 = 0.204_124_145_231_931_5;

/// Lower end of the domain on which `eta` is known in closed form, `xi_tilde(1, 1)`.
pub const ETA_DOMAIN_MIN: f64 = 10.0 / 3.0;

/// Ordered pack weights `(w_1, ..., w_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::domain("weight vector must be nonempty"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::domain(format!("weight {w} is not a finite nonnegative real")));
        }
        Ok(Self(weights))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Weights `j..` (zero based) as a new vector; `None` if the range is empty.
    fn tail(&self, j: usize) -> Option<Self> {
        (j < self.0.len()).then(|| Self(self.0[j..].to_vec()))
    }
}

impl TryFrom<&[f64]> for WeightVector {
    type Error = Error;

    fn try_from(w: &[f64]) -> Result<Self> {
        Self::new(w.to_vec())
    }
}

/// `kappa` and the two derivative weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentParams {
    pub kappa: f64,
    pub w1: f64,
    pub w2: f64,
}

impl ExponentParams {
    pub fn new(kappa: f64, w1: f64, w2: f64) -> Result<Self> {
        let p = Self::exploratory(kappa, w1, w2)?;
        if w1 <= 0.0 || w2 <= 0.0 {
            return Err(Error::domain(format!("weights must be positive, got ({w1}, {w2})")));
        }
        Ok(p)
    }

    /// Also admits `w1 = 0` and/or `w2 = 0`. The formulas stay finite there
    /// but no decay bound is claimed for those values.
    pub fn exploratory(kappa: f64, w1: f64, w2: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::domain(format!("kappa must be positive, got {kappa}")));
        }
        for w in [w1, w2] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::domain(format!("weight {w} is not a finite nonnegative real")));
            }
        }
        Ok(Self { kappa, w1, w2 })
    }

    /// `lambda_kappa(w1, w2)`.
    pub fn lambda(&self) -> f64 {
        lambda_kappa(self)
    }

    /// `(a1, a2)`.
    pub fn boundary_exponents(&self) -> (f64, f64) {
        boundary_exponents(self)
    }
}

/// Feynman-Kac weights `(w1, w2)` applied to `(alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeWeights {
    pub w1: f64,
    pub w2: f64,
}

impl DerivativeWeights {
    pub fn new(w1: f64, w2: f64) -> Result<Self> {
        if !(w1.is_finite() && w2.is_finite() && w1 > 0.0 && w2 > 0.0) {
            return Err(Error::domain(format!("weights must be positive, got ({w1}, {w2})")));
        }
        Ok(Self { w1, w2 })
    }

    /// Admits zero weights; no decay law is asserted for them.
    pub fn exploratory(w1: f64, w2: f64) -> Result<Self> {
        if !(w1.is_finite() && w2.is_finite() && w1 >= 0.0 && w2 >= 0.0) {
            return Err(Error::domain(format!("weights must be nonnegative, got ({w1}, {w2})")));
        }
        Ok(Self { w1, w2 })
    }

    /// `w1 * alpha + w2 * beta`.
    #[inline]
    pub fn exponent(&self, alpha: f64, beta: f64) -> f64 {
        self.w1 * alpha + self.w2 * beta
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<ExponentParams> {
        ExponentParams::exploratory(kappa, self.w1, self.w2)
    }
}

/// `U(x) = sqrt(x + 1/24) - sqrt(1/24)`.
pub fn u_map(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("u_map needs x >= 0, got {x}")));
    }
    Ok((x + 1.0 / 24.0).sqrt() - ROOT_24TH)
}

/// Inverse of [`u_map`]: `(y + sqrt(1/24))^2 - 1/24`.
pub fn u_inverse(y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::domain(format!("u_inverse needs y >= 0, got {y}")));
    }
    // Expanded form; avoids cancellation between (y + c)^2 and c^2 for small y.
    Ok(y * (y + 2.0 * ROOT_24TH))
}

fn root24(w: f64) -> f64 {
    (24.0 * w + 1.0).sqrt()
}

/// Half-plane exponent `xi_tilde(w_1, ..., w_k)`.
///
/// A single weight is returned unchanged, which is what the cascade
/// relations require.
pub fn xi_tilde(w: &WeightVector) -> f64 {
    let k = w.len() as f64;
    let sum: f64 = w.as_slice().iter().map(|&x| root24(x)).sum();
    let t = sum - (k - 1.0);
    (t * t - 1.0) / 24.0
}

/// Full-plane exponent `eta` on `x >= 10/3`.
pub fn eta(x: f64) -> Result<f64> {
    eta_with(x, EtaDomain::Proven)
}

/// Which part of the real line `eta` accepts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EtaDomain {
    /// `x >= 10/3`.
    #[default]
    Proven,
    /// `x >= 1`, the analytic continuation of the same formula.
    Extended,
}

pub fn eta_with(x: f64, domain: EtaDomain) -> Result<f64> {
    let min = match domain {
        EtaDomain::Proven => ETA_DOMAIN_MIN,
        EtaDomain::Extended => 1.0,
    };
    if !(x.is_finite() && x >= min) {
        return Err(Error::domain(format!("eta needs x >= {min}, got {x}")));
    }
    let t = root24(x) - 1.0;
    Ok((t * t - 4.0) / 48.0)
}

/// Full-plane exponent `xi(w_1, ..., w_k)`; needs `k >= 2` and two weights `>= 1`.
pub fn xi(w: &WeightVector) -> Result<f64> {
    if w.len() < 2 {
        return Err(Error::domain("xi needs at least two weights"));
    }
    let big = w.as_slice().iter().filter(|&&x| x >= 1.0).count();
    if big < 2 {
        return Err(Error::domain(format!(
            "xi needs at least two weights >= 1, got {:?}",
            w.as_slice()
        )));
    }
    let k = w.len() as f64;
    let t = w.as_slice().iter().map(|&x| root24(x)).sum::<f64>() - k;
    Ok((t * t - 4.0) / 48.0)
}

/// Two-sided derivative exponent `lambda_kappa(w1, w2)`.
pub fn lambda_kappa(p: &ExponentParams) -> f64 {
    let ExponentParams { kappa, w1, w2 } = *p;
    let d = (kappa - 4.0) * (kappa - 4.0);
    let r1 = (d + 16.0 * kappa * w1).sqrt();
    let r2 = (d + 16.0 * kappa * w2).sqrt();
    let t = r1 + r2 + kappa;
    (t * t - (8.0 - kappa) * (8.0 - kappa)) / (16.0 * kappa)
}

fn boundary_exponent(kappa: f64, w: f64) -> f64 {
    (kappa - 4.0 + ((4.0 - kappa) * (4.0 - kappa) + 16.0 * w * kappa).sqrt()) / (2.0 * kappa)
}

/// `(a1, a2)` with `a_j = (kappa - 4 + sqrt((4 - kappa)^2 + 16 w_j kappa)) / (2 kappa)`.
pub fn boundary_exponents(p: &ExponentParams) -> (f64, f64) {
    (boundary_exponent(p.kappa, p.w1), boundary_exponent(p.kappa, p.w2))
}

/// `G(x) = x^a1 (1 - x)^a2` on `[0, 1]`.
pub fn eigenfunction_g(p: &ExponentParams, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("G is defined on [0, 1], got x = {x}")));
    }
    let (a1, a2) = boundary_exponents(p);
    Ok(g_unchecked(a1, a2, x))
}

#[inline]
pub(crate) fn g_unchecked(a1: f64, a2: f64, x: f64) -> f64 {
    x.powf(a1) * (1.0 - x).powf(a2)
}

/// `|xi_tilde(w) - xi_tilde(w_1, ..., w_j, xi_tilde(w_{j+1}, ..., w_k))|`.
///
/// `j` is one based, `1 <= j <= k - 1`.
pub fn cascade_residual(w: &WeightVector, j: usize) -> Result<f64> {
    let (head, collapsed) = split_cascade(w, j)?;
    let mut folded = head;
    folded.push(xi_tilde(&collapsed));
    Ok((xi_tilde(w) - xi_tilde(&WeightVector(folded))).abs())
}

/// The full-plane variant of [`cascade_residual`], with `xi` on both sides.
pub fn cascade_residual_xi(w: &WeightVector, j: usize) -> Result<f64> {
    let (head, collapsed) = split_cascade(w, j)?;
    let mut folded = head;
    folded.push(xi_tilde(&collapsed));
    Ok((xi(w)? - xi(&WeightVector(folded))?).abs())
}

fn split_cascade(w: &WeightVector, j: usize) -> Result<(Vec<f64>, WeightVector)> {
    if j == 0 || j >= w.len() {
        return Err(Error::domain(format!(
            "cascade index {j} outside 1..={}",
            w.len().saturating_sub(1)
        )));
    }
    let tail = w.tail(j).expect("j < len");
    Ok((w.as_slice()[..j].to_vec(), tail))
}

/// `|lambda_6(xi_tilde(w, 1, w'), w'') - xi_tilde(w, 1, lambda_6(w', w''))|`.
pub fn cook_residual(w: f64, w_prime: f64, w_dprime: f64) -> Result<f64> {
    if !(w >= 0.0) {
        return Err(Error::domain(format!("w must be >= 0, got {w}")));
    }
    let inner = xi_tilde(&WeightVector::new(vec![w, 1.0, w_prime])?);
    let lhs = lambda_kappa(&ExponentParams::new(6.0, inner, w_dprime)?);
    let lam = lambda_kappa(&ExponentParams::new(6.0, w_prime, w_dprime)?);
    let rhs = xi_tilde(&WeightVector::new(vec![w, 1.0, lam])?);
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wv(w: &[f64]) -> WeightVector {
        WeightVector::new(w.to_vec()).unwrap()
    }

    /// Independent route: fold through `U` and its inverse.
    fn xi_tilde_via_u(w: &[f64]) -> f64 {
        let s: f64 = w.iter().map(|&x| u_map(x).unwrap()).sum();
        u_inverse(s).unwrap()
    }

    #[test]
    fn u_map_values() {
        assert_eq!(u_map(0.0).unwrap(), 0.0);
        let expect = (25.0f64 / 24.0).sqrt() - (1.0f64 / 24.0).sqrt();
        assert!((u_map(1.0).unwrap() - expect).abs() < 1e-15);
        assert!((u_map(1.0).unwrap() - 0.816497).abs() < 1e-6);
        assert!(u_map(-1e-3).is_err());
        assert!(u_inverse(-1e-3).is_err());
        assert_eq!(u_inverse(0.0).unwrap(), 0.0);
        for x in [0.1, 1.0, 5.0, 7.0] {
            assert!((u_inverse(u_map(x).unwrap()).unwrap() - x).abs() < 1e-14);
        }
    }

    #[test]
    fn xi_tilde_anchors() {
        assert!((xi_tilde(&wv(&[1.0, 1.0])) - 10.0 / 3.0).abs() < 1e-12);
        assert!((xi_tilde(&wv(&[1.0, 1.0, 1.0])) - 7.0).abs() < 1e-12);
        assert!((xi_tilde(&wv(&[1.0, 2.0])) - 5.0).abs() < 1e-12);
        for w in [0.0, 0.3, 1.0, 17.5] {
            assert!((xi_tilde(&wv(&[w])) - w).abs() < 1e-12);
        }
        assert!(WeightVector::new(vec![1.0, -0.5]).is_err());
        assert!(WeightVector::new(vec![]).is_err());
    }

    #[test]
    fn eta_and_xi_anchors() {
        assert!((eta(10.0 / 3.0).unwrap() - 1.25).abs() < 1e-14);
        assert!((eta(7.0).unwrap() - 35.0 / 12.0).abs() < 1e-13);
        assert!(eta(3.0).is_err());
        assert!(eta_with(3.0, EtaDomain::Extended).is_ok());
        assert!(eta_with(0.5, EtaDomain::Extended).is_err());

        assert_eq!(xi(&wv(&[1.0, 1.0])).unwrap(), 1.25);
        let x33 = xi(&wv(&[3.0, 3.0])).unwrap();
        assert!((12.0 * x33 + 2.0 * 73f64.sqrt() - 73.0).abs() < 1e-10);
        assert!((x33 - 4.659333).abs() < 1e-6);
        for k in 2..=4 {
            let w = wv(&vec![1.0; k]);
            assert!((xi(&w).unwrap() - eta(xi_tilde(&w)).unwrap()).abs() < 1e-12);
        }
        assert!(xi(&wv(&[1.0, 0.5])).is_err());
        assert!(xi(&wv(&[3.0])).is_err());
    }

    #[test]
    fn lambda_and_boundary_exponents() {
        let p = ExponentParams::new(6.0, 1.0, 1.0).unwrap();
        assert!((lambda_kappa(&p) - 7.0).abs() < 1e-12);
        assert_eq!(boundary_exponents(&p), (1.0, 1.0));
        let p = ExponentParams::new(6.0, 1.0, 2.0).unwrap();
        assert!((lambda_kappa(&p) - 28.0 / 3.0).abs() < 1e-12);
        assert!((boundary_exponents(&p).1 - 4.0 / 3.0).abs() < 1e-15);
        let q = ExponentParams::new(6.0, 2.0, 1.0).unwrap();
        assert_eq!(lambda_kappa(&p), lambda_kappa(&q));
        assert!(ExponentParams::new(0.0, 1.0, 1.0).is_err());
        assert!(ExponentParams::new(6.0, 0.0, 1.0).is_err());
        assert!(ExponentParams::exploratory(6.0, 0.0, 1.0).is_ok());
    }

    #[test]
    fn eigenfunction_values() {
        let p = ExponentParams::new(6.0, 1.0, 1.0).unwrap();
        assert!((eigenfunction_g(&p, 0.5).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(eigenfunction_g(&p, 0.0).unwrap(), 0.0);
        assert_eq!(eigenfunction_g(&p, 1.0).unwrap(), 0.0);
        assert!(eigenfunction_g(&p, 1.5).is_err());
        let argmax = (1..1000)
            .map(|i| i as f64 / 1000.0)
            .max_by(|a, b| {
                let ga = eigenfunction_g(&p, *a).unwrap();
                let gb = eigenfunction_g(&p, *b).unwrap();
                ga.partial_cmp(&gb).unwrap()
            })
            .unwrap();
        assert!((argmax - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cascade_and_cook_examples() {
        assert!(cascade_residual(&wv(&[1.0, 1.0, 1.0]), 2).unwrap() < 1e-12);
        assert!(cascade_residual(&wv(&[0.5, 2.0, 3.0, 0.1]), 1).unwrap() < 1e-12);
        assert!(cascade_residual(&wv(&[0.7, 4.0]), 1).unwrap() < 1e-12);
        assert!(cascade_residual(&wv(&[1.0, 1.0]), 0).is_err());
        assert!(cascade_residual(&wv(&[1.0, 1.0]), 2).is_err());
        assert!(cascade_residual_xi(&wv(&[3.0, 3.0, 0.2]), 1).unwrap() < 1e-12);

        assert!(cook_residual(1.0, 1.0, 1.0).unwrap() < 1e-12);
        assert!(cook_residual(0.0, 0.4, 2.5).unwrap() < 1e-12);
        assert!(cook_residual(2.0, 0.5, 3.0).unwrap() < 1e-12);
        assert!(cook_residual(-1.0, 0.5, 3.0).is_err());
    }

    proptest! {
        #[test]
        fn closed_form_matches_u_fold(w in prop::collection::vec(0.0f64..50.0, 1..7)) {
            let direct = xi_tilde(&wv(&w));
            let folded = xi_tilde_via_u(&w);
            prop_assert!((direct - folded).abs() <= 1e-12 * direct.max(1.0));
        }

        #[test]
        fn u_round_trip(x in 0.0f64..100.0) {
            let back = u_inverse(u_map(x).unwrap()).unwrap();
            prop_assert!((back - x).abs() <= 1e-12 * x.max(1e-3));
        }

        #[test]
        fn permutation_symmetry(mut w in prop::collection::vec(1.0f64..20.0, 2..7), rot in 0usize..6) {
            let a = xi_tilde(&wv(&w));
            let b = xi(&wv(&w)).unwrap();
            let len = w.len();
            w.rotate_left(rot % len);
            w.reverse();
            prop_assert!((a - xi_tilde(&wv(&w))).abs() <= 1e-12 * a);
            prop_assert!((b - xi(&wv(&w)).unwrap()).abs() <= 1e-12 * b);
        }

        #[test]
        fn strictly_increasing(w in prop::collection::vec(0.0f64..10.0, 1..6), i in 0usize..6, bump in 1e-3f64..1.0) {
            let i = i % w.len();
            let mut v = w.clone();
            v[i] += bump;
            prop_assert!(xi_tilde(&wv(&v)) > xi_tilde(&wv(&w)));
        }

        #[test]
        fn cascade_holds(w in prop::collection::vec(0.0f64..10.0, 2..7), j in 1usize..6) {
            let j = 1 + (j - 1) % (w.len() - 1);
            prop_assert!(cascade_residual(&wv(&w), j).unwrap() < 1e-12 * xi_tilde(&wv(&w)).max(1.0));
        }

        #[test]
        fn composition(w in prop::collection::vec(0.0f64..10.0, 0..4), a in 1.0f64..10.0, b in 1.0f64..10.0) {
            let mut v = vec![a, b];
            v.extend(w);
            let v = wv(&v);
            prop_assert!((xi(&v).unwrap() - eta(xi_tilde(&v)).unwrap()).abs() < 1e-12 * xi(&v).unwrap().max(1.0));
        }

        #[test]
        fn bridge_to_half_plane(w in 1e-6f64..4.0, wp in 1e-6f64..4.0) {
            let lam = lambda_kappa(&ExponentParams::new(6.0, w, wp).unwrap());
            prop_assert!((lam - xi_tilde(&wv(&[w, 1.0, wp]))).abs() < 1e-12);
        }

        #[test]
        fn boundary_exponents_positive(kappa in 1e-3f64..20.0, w in 1e-6f64..20.0) {
            let (a1, a2) = boundary_exponents(&ExponentParams::new(kappa, w, w).unwrap());
            prop_assert!(a1 > 0.0 && a2 > 0.0);
        }
    }
}
