//! SCAD and lasso penalties.
//!
//! SCAD is defined through its derivative
//! `rho'(t) = lambda * [ 1{t <= lambda} + (a*lambda - t)_+ / ((a - 1) lambda) * 1{t > lambda} ]`
//! and its local linear approximation turns a SCAD problem into a sequence of
//! weighted lasso problems with weights `rho'(|current_j|)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SCAD_A: f64 = 3.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyFamily {
    Scad,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub family: PenaltyFamily,
    pub lambda: f64,
    /// SCAD shape parameter; ignored for L1.
    pub a: f64,
}

impl PenaltySpec {
    pub fn scad(lambda: f64) -> Result<Self> {
        Self::new(PenaltyFamily::Scad, lambda, DEFAULT_SCAD_A)
    }

    pub fn l1(lambda: f64) -> Result<Self> {
        Self::new(PenaltyFamily::L1, lambda, DEFAULT_SCAD_A)
    }

    pub fn new(family: PenaltyFamily, lambda: f64, a: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if family == PenaltyFamily::Scad && !(a > 2.0 && a.is_finite()) {
            return Err(Error::InvalidArgument(format!("SCAD requires a > 2, got {a}")));
        }
        Ok(Self { family, lambda, a })
    }

    pub fn with_lambda(self, lambda: f64) -> Result<Self> {
        Self::new(self.family, lambda, self.a)
    }

    #[inline]
    fn derivative_unchecked(&self, t: f64) -> f64 {
        let lam = self.lambda;
        match self.family {
            PenaltyFamily::L1 => lam,
            PenaltyFamily::Scad => {
                if t <= lam {
                    lam
                } else {
                    (self.a * lam - t).max(0.0) / (self.a - 1.0)
                }
            }
        }
    }

    #[inline]
    pub(crate) fn value_unchecked(&self, t: f64) -> f64 {
        let lam = self.lambda;
        match self.family {
            PenaltyFamily::L1 => lam * t,
            PenaltyFamily::Scad => {
                let a = self.a;
                if t <= lam {
                    lam * t
                } else if t <= a * lam {
                    (2.0 * a * lam * t - t * t - lam * lam) / (2.0 * (a - 1.0))
                } else {
                    lam * lam * (a + 1.0) / 2.0
                }
            }
        }
    }

    /// `sum_j rho(|v_j|)` over penalized positions.
    pub fn total(&self, v: &[f64], penalized: &[bool]) -> f64 {
        v.iter()
            .zip(penalized)
            .filter(|(_, &pen)| pen)
            .map(|(x, _)| self.value_unchecked(x.abs()))
            .sum()
    }
}

fn check_t(t: f64) -> Result<()> {
    if t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("penalty argument must be >= 0, got {t}")))
    }
}

/// `rho'_lambda(t)` for `t >= 0`, with `rho'(0) = lambda`.
pub fn penalty_derivative(spec: &PenaltySpec, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(spec.derivative_unchecked(t))
}

/// `rho_lambda(t) = int_0^t rho'_lambda(u) du`.
pub fn penalty_value(spec: &PenaltySpec, t: f64) -> Result<f64> {
    check_t(t)?;
    Ok(spec.value_unchecked(t))
}

/// LLA weights `rho'(|current_j|)`, zero wherever `penalized[j]` is false.
/// An empty mask means every position is penalized.
pub fn lla_weights(spec: &PenaltySpec, current: &[f64], penalized: &[bool]) -> Vec<f64> {
    debug_assert!(penalized.is_empty() || penalized.len() == current.len());
    current
        .iter()
        .enumerate()
        .map(|(j, c)| {
            if penalized.get(j).copied().unwrap_or(true) {
                spec.derivative_unchecked(c.abs())
            } else {
                0.0
            }
        })
        .collect()
}

/// `sign(z) * max(|z| - t, 0)`.
#[inline]
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    debug_assert!(t >= 0.0);
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scad1() -> PenaltySpec {
        PenaltySpec::scad(1.0).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(PenaltySpec::scad(-1.0).is_err());
        assert!(PenaltySpec::new(PenaltyFamily::Scad, 1.0, 2.0).is_err());
        assert!(PenaltySpec::new(PenaltyFamily::L1, 1.0, 1.0).is_ok());
        assert!(PenaltySpec::l1(f64::NAN).is_err());
    }

    #[test]
    fn derivative_examples() {
        let s = scad1();
        assert_eq!(penalty_derivative(&s, 0.5).unwrap(), 1.0);
        assert!((penalty_derivative(&s, 2.0).unwrap() - 1.7 / 2.7).abs() < 1e-15);
        assert!((penalty_derivative(&s, 2.0).unwrap() - 0.62963).abs() < 1e-5);
        assert_eq!(penalty_derivative(&s, 5.0).unwrap(), 0.0);
        assert!(penalty_derivative(&s, -0.1).is_err());
        assert_eq!(penalty_derivative(&PenaltySpec::l1(0.3).unwrap(), 9.0).unwrap(), 0.3);
    }

    #[test]
    fn value_examples() {
        let s = scad1();
        assert_eq!(penalty_value(&s, 1.0).unwrap(), 1.0);
        assert!((penalty_value(&s, 3.7).unwrap() - 2.35).abs() < 1e-12);
        assert!((penalty_value(&s, 10.0).unwrap() - 2.35).abs() < 1e-12);
        assert!((penalty_value(&s, 2.0).unwrap() - 9.8 / 5.4).abs() < 1e-12);
        assert!(penalty_value(&s, -1.0).is_err());
    }

    /// Composite Simpson integration of the derivative, split at the kinks.
    fn integrate_derivative(s: &PenaltySpec, t: f64) -> f64 {
        let knots = [0.0, s.lambda, s.a * s.lambda];
        let mut pts: Vec<f64> = knots.iter().copied().filter(|&k| k < t).collect();
        pts.push(t);
        let mut total = 0.0;
        for w in pts.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let m = 2000;
            let h = (hi - lo) / m as f64;
            let mut acc = 0.0;
            for i in 0..=m {
                let u = lo + h * i as f64;
                // Interior of each piece: nudge endpoints inward.
                let u = u.clamp(lo + 1e-14, hi - 1e-14);
                let c = if i == 0 || i == m { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += c * penalty_derivative(s, u).unwrap();
            }
            total += acc * h / 3.0;
        }
        total
    }

    #[test]
    fn value_matches_numeric_integration() {
        let s = scad1();
        assert!((integrate_derivative(&s, 2.0) - 1.814_814_814_8).abs() < 1e-8);
        for s in [scad1(), PenaltySpec::new(PenaltyFamily::Scad, 0.4, 3.0).unwrap()] {
            let top = 2.0 * s.a * s.lambda;
            for k in 0..=50 {
                let t = top * k as f64 / 50.0;
                let v = penalty_value(&s, t).unwrap();
                assert!((v - integrate_derivative(&s, t)).abs() < 1e-8, "t={t}");
            }
        }
    }

    #[test]
    fn lla_weight_examples() {
        let w = lla_weights(&scad1(), &[0.0, 2.0, 5.0], &[]);
        assert_eq!(w[0], 1.0);
        assert!((w[1] - 0.62963).abs() < 1e-5);
        assert_eq!(w[2], 0.0);
        let l1 = PenaltySpec::l1(0.3).unwrap();
        assert_eq!(lla_weights(&l1, &[4.0, -1.0, 0.0], &[]), vec![0.3; 3]);
        assert!(lla_weights(&l1, &[], &[]).is_empty());
        assert_eq!(lla_weights(&l1, &[4.0, 1.0], &[false, true]), vec![0.0, 0.3]);
    }

    #[test]
    fn lla_weights_at_zero_equal_l1() {
        let s = PenaltySpec::scad(0.7).unwrap();
        let l1 = PenaltySpec::l1(0.7).unwrap();
        let z = vec![0.0; 5];
        assert_eq!(lla_weights(&s, &z, &[]), lla_weights(&l1, &z, &[]));
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-2.5, 0.0), -2.5);
        assert_eq!(soft_threshold(-2.5, 1.0), -1.5);
    }

    proptest! {
        #[test]
        fn scad_derivative_non_increasing(lam in 0.01..5.0f64, a in 2.01..6.0f64, t1 in 0.0..40.0f64, t2 in 0.0..40.0f64) {
            let s = PenaltySpec::new(PenaltyFamily::Scad, lam, a).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            prop_assert!(penalty_derivative(&s, hi).unwrap() <= penalty_derivative(&s, lo).unwrap());
            let l1 = PenaltySpec::l1(lam).unwrap();
            prop_assert_eq!(penalty_derivative(&l1, hi).unwrap(), penalty_derivative(&l1, lo).unwrap());
        }

        #[test]
        fn scad_below_l1(lam in 0.01..5.0f64, a in 2.01..6.0f64, t in 0.0..40.0f64, dt in 0.0..1.0f64) {
            let s = PenaltySpec::new(PenaltyFamily::Scad, lam, a).unwrap();
            let v = penalty_value(&s, t).unwrap();
            prop_assert!(v <= lam * t + 1e-12);
            if t <= lam {
                prop_assert!((v - lam * t).abs() < 1e-12);
            }
            prop_assert!(penalty_value(&s, t + dt).unwrap() >= v - 1e-12);
        }

        #[test]
        fn scad_value_continuous_at_knots(lam in 0.01..5.0f64, a in 2.01..6.0f64) {
            let s = PenaltySpec::new(PenaltyFamily::Scad, lam, a).unwrap();
            for k in [lam, a * lam] {
                let eps = 1e-9 * k;
                let gap = penalty_value(&s, k + eps).unwrap() - penalty_value(&s, k - eps).unwrap();
                prop_assert!(gap.abs() < 1e-7 * (1.0 + lam));
            }
        }
    }
}
