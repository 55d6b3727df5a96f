//! Student-t tail probabilities and Welch's unequal-variance t-test from
//! summary statistics.

use serde::{Deserialize, Serialize};

use super::fisher::{TailMode, TestResult};
use super::special::beta_inc_split;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub sd: f64,
    pub n: u64,
}

impl SummaryStats {
    pub fn new(mean: f64, sd: f64, n: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::validation("n", format!("{n} < 2, sample variance undefined")));
        }
        if !mean.is_finite() {
            return Err(Error::validation("mean", "must be finite"));
        }
        if !sd.is_finite() || sd < 0.0 {
            return Err(Error::validation("sd", format!("{sd} must be finite and >= 0")));
        }
        Ok(Self { mean, sd, n })
    }

    /// Sample mean and (n − 1)-denominator standard deviation.
    pub fn from_sample(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::validation("n", format!("{n} < 2, sample variance undefined")));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        Self::new(mean, (ss / (n - 1) as f64).sqrt(), n as u64)
    }

    fn var_of_mean(&self) -> f64 {
        self.sd * self.sd / self.n as f64
    }
}

/// P(T > t) for Student's t with `df` degrees of freedom.
pub fn student_t_sf(t: f64, df: f64) -> Result<f64> {
    if !df.is_finite() || df <= 0.0 {
        return Err(Error::validation("df", format!("{df} must be > 0")));
    }
    if t.is_nan() {
        return Err(Error::validation("t", "NaN"));
    }
    if t.is_infinite() {
        return Ok(if t > 0.0 { 0.0 } else { 1.0 });
    }
    let t2 = t * t;
    let x = df / (df + t2);
    let y = t2 / (df + t2);
    // I_x(df/2, 1/2) = P(|T| > |t|)
    let two_tail = beta_inc_split(df / 2.0, 0.5, x, y)?;
    let upper = 0.5 * two_tail;
    Ok(if t >= 0.0 { upper } else { 1.0 - upper })
}

/// Two-sided Welch test with Welch–Satterthwaite degrees of freedom.
///
/// When both standard deviations are zero the test degenerates: equal means
/// give t = 0, p = 1; different means give t = ±∞, p = 0.
pub fn welch_t_from_summary(g1: &SummaryStats, g2: &SummaryStats) -> Result<TestResult> {
    let (v1, v2) = (g1.var_of_mean(), g2.var_of_mean());
    let diff = g1.mean - g2.mean;
    let se2 = v1 + v2;
    if se2 == 0.0 {
        let (t, p) = if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        };
        return Ok(TestResult {
            p_value: p,
            statistic: t,
            df: Some((g1.n + g2.n - 2) as f64),
            tail: TailMode::TwoSided,
        });
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (v1 * v1 / (g1.n - 1) as f64 + v2 * v2 / (g2.n - 1) as f64);
    let p = (2.0 * student_t_sf(t.abs(), df)?).min(1.0);
    Ok(TestResult {
        p_value: p,
        statistic: t,
        df: Some(df),
        tail: TailMode::TwoSided,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn sf_at_zero_is_half() {
        for df in [0.5, 1.0, 3.0, 30.0, 1e6] {
            assert!((student_t_sf(0.0, df).unwrap() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn cauchy_closed_form() {
        for t in [-5.0, -1.0, -0.3, 0.3, 1.0, 2.0, 10.0] {
            let expected = 0.5 - f64::atan(t) / PI;
            assert!((student_t_sf(t, 1.0).unwrap() - expected).abs() < 1e-12, "t={t}");
        }
        assert!((student_t_sf(1.0, 1.0).unwrap() - 0.25).abs() < 1e-14);
    }

    #[test]
    fn df_two_closed_form() {
        // P(T > t) = 1/2 - t / (2 sqrt(t^2 + 2))
        for t in [-3.0, -0.5, 0.7, 4.0] {
            let expected = 0.5 - t / (2.0 * (t * t + 2.0f64).sqrt());
            assert!((student_t_sf(t, 2.0).unwrap() - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn quadrature_reference_point() {
        // mpmath quad of the density on [2, ∞), 40 digits
        let v = student_t_sf(2.0, 10.0).unwrap();
        assert!((v - 0.036_694_017_385_370_18).abs() < 1e-12);
    }

    #[test]
    fn bad_df() {
        assert!(student_t_sf(1.0, 0.0).is_err());
        assert!(student_t_sf(1.0, -2.0).is_err());
    }

    #[test]
    fn welch_examples() {
        let g = SummaryStats::new(0.3, 0.1, 20).unwrap();
        let r = welch_t_from_summary(&g, &g).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_value - 1.0).abs() < 1e-15);

        let a = SummaryStats::new(1.0, 0.0, 10).unwrap();
        let b = SummaryStats::new(0.0, 0.0, 10).unwrap();
        let r = welch_t_from_summary(&a, &b).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert_eq!(r.statistic, f64::INFINITY);

        assert!(SummaryStats::new(0.0, 1.0, 1).is_err());
        assert!(SummaryStats::new(0.0, -1.0, 5).is_err());
    }

    #[test]
    fn welch_iou_comparison() {
        // mpmath oracle: t = 1.2116496526105075, df = 806.71738561414128,
        // p = 0.22600129997679113
        let a = SummaryStats::new(0.1824, 0.1547, 405).unwrap();
        let b = SummaryStats::new(0.1710, 0.1544, 810).unwrap();
        let r = welch_t_from_summary(&a, &b).unwrap();
        assert!((r.statistic - 1.211_649_652_610_507_5).abs() < 1e-12);
        assert!((r.df.unwrap() - 806.717_385_614_141_3).abs() < 1e-8);
        assert!((r.p_value - 0.226_001_299_976_791_13).abs() < 1e-10);
    }

    #[test]
    fn from_sample_two_points() {
        let s = SummaryStats::from_sample(&[0.0, 1.0]).unwrap();
        assert!((s.mean - 0.5).abs() < 1e-15);
        assert!((s.sd - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn sf_reflection(t in -50.0f64..50.0, df in 0.2f64..5000.0) {
            let s = student_t_sf(t, df).unwrap() + student_t_sf(-t, df).unwrap();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn welch_antisymmetric(m1 in -5.0f64..5.0, s1 in 0.01f64..3.0, n1 in 2u64..500,
                               m2 in -5.0f64..5.0, s2 in 0.01f64..3.0, n2 in 2u64..500) {
            let a = SummaryStats::new(m1, s1, n1).unwrap();
            let b = SummaryStats::new(m2, s2, n2).unwrap();
            let ab = welch_t_from_summary(&a, &b).unwrap();
            let ba = welch_t_from_summary(&b, &a).unwrap();
            prop_assert!((ab.statistic + ba.statistic).abs() < 1e-12 * ab.statistic.abs().max(1.0));
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        }
    }
}
