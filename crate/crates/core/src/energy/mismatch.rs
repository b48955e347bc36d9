//! Intensity mismatch terms `f(c1, c2, δ)`, `δ = det Dy`.
//!
//! * [`MismatchForm::Weighted`]: `(1 + δ)|c1 − c2|²`.
//! * [`MismatchForm::Density`]: `(1 + δ⁻¹)|c1 − c2 δ|²`, comparing `c1` with `c2`
//!   transported as a density.
//!
//! Both satisfy `f(c1, c2, δ) = δ f(c2, c1, 1/δ)`, are convex in `δ`, and
//! vanish at `δ = 1` exactly when `c1 = c2`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::image::MAX_CHANNELS;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MismatchForm {
    /// Config key `8a`.
    #[serde(rename = "8a")]
    Weighted,
    /// Config key `8b`.
    #[serde(rename = "8b")]
    Density,
}

impl FromStr for MismatchForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "8a" => Ok(MismatchForm::Weighted),
            "8b" => Ok(MismatchForm::Density),
            other => Err(Error::InvalidParams(format!(
                "mismatch form must be 8a or 8b, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for MismatchForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MismatchForm::Weighted => "8a",
            MismatchForm::Density => "8b",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchParams {
    pub form: MismatchForm,
    pub weight: f64,
}

impl Default for MismatchParams {
    fn default() -> Self {
        Self {
            form: MismatchForm::Weighted,
            weight: 1.0,
        }
    }
}

/// `(∂f/∂c2, ∂f/∂δ)`; inactive channels of the first entry are zero.
pub type MismatchGradient = ([f64; MAX_CHANNELS], f64);

impl MismatchParams {
    pub fn new(form: MismatchForm, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "mismatch weight must be finite and non-negative, got {weight}"
            )));
        }
        Ok(Self { form, weight })
    }

    pub fn eval(&self, c1: &[f64], c2: &[f64], delta: f64) -> Result<f64> {
        check_delta(delta)?;
        Ok(self.eval_unchecked(c1, c2, delta))
    }

    pub(crate) fn eval_unchecked(&self, c1: &[f64], c2: &[f64], delta: f64) -> f64 {
        if self.weight == 0.0 {
            return 0.0;
        }
        let raw = match self.form {
            MismatchForm::Weighted => (1.0 + delta) * sq_dist(c1, c2, 1.0),
            MismatchForm::Density => (1.0 + 1.0 / delta) * sq_dist(c1, c2, delta),
        };
        self.weight * raw
    }

    pub fn grad(&self, c1: &[f64], c2: &[f64], delta: f64) -> Result<MismatchGradient> {
        check_delta(delta)?;
        Ok(self.grad_unchecked(c1, c2, delta))
    }

    pub(crate) fn grad_unchecked(&self, c1: &[f64], c2: &[f64], delta: f64) -> MismatchGradient {
        let mut dc2 = [0.0; MAX_CHANNELS];
        if self.weight == 0.0 {
            return (dc2, 0.0);
        }
        let w = self.weight;
        let ddelta = match self.form {
            MismatchForm::Weighted => {
                for (k, (a, b)) in c1.iter().zip(c2).enumerate() {
                    dc2[k] = -2.0 * w * (1.0 + delta) * (a - b);
                }
                w * sq_dist(c1, c2, 1.0)
            }
            MismatchForm::Density => {
                let s = 1.0 + 1.0 / delta;
                let mut cross = 0.0;
                for (k, (a, b)) in c1.iter().zip(c2).enumerate() {
                    let r = a - b * delta;
                    dc2[k] = -2.0 * w * s * delta * r;
                    cross += r * b;
                }
                w * (-sq_dist(c1, c2, delta) / (delta * delta) - 2.0 * s * cross)
            }
        };
        (dc2, ddelta)
    }
}

/// `|c1 − c2 δ|²`.
fn sq_dist(c1: &[f64], c2: &[f64], delta: f64) -> f64 {
    c1.iter()
        .zip(c2)
        .map(|(a, b)| (a - b * delta).powi(2))
        .sum()
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::OrientationViolation { det: delta })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::volumetric::min_second_difference;

    const FORMS: [MismatchForm; 2] = [MismatchForm::Weighted, MismatchForm::Density];

    #[test]
    fn vanishes_on_matching_intensities() {
        for form in FORMS {
            let p = MismatchParams::new(form, 1.0).unwrap();
            assert_eq!(
                p.eval(&[0.3, 0.1, 0.9], &[0.3, 0.1, 0.9], 1.0).unwrap(),
                0.0
            );
            assert!(p.eval(&[0.3], &[0.31], 1.0).unwrap() > 0.0);
        }
    }

    #[test]
    fn weighted_form_value() {
        let p = MismatchParams::default();
        assert!((p.eval(&[0.2], &[0.7], 1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interchange_identity() {
        for form in FORMS {
            let p = MismatchParams::new(form, 1.0).unwrap();
            let lhs = p.eval(&[0.2], &[0.7], 2.0).unwrap();
            let rhs = 2.0 * p.eval(&[0.7], &[0.2], 0.5).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-12 * lhs.max(1.0),
                "{form}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn convex_in_delta() {
        for form in FORMS {
            let p = MismatchParams::new(form, 1.0).unwrap();
            for (a, b) in [(0.2, 0.7), (0.9, 0.1), (0.5, 0.5), (0.0, 1.0)] {
                let m = min_second_difference(|d| p.eval(&[a], &[b], d).unwrap(), 121);
                assert!(m >= -1e-10, "{form} ({a},{b}): {m}");
            }
        }
    }

    #[test]
    fn gradient_matches_differences() {
        let c1 = [0.2, 0.55, 0.9];
        let c2 = [0.7, 0.4, 0.1];
        for form in FORMS {
            let p = MismatchParams::new(form, 1.7).unwrap();
            for delta in [0.3, 1.0, 2.5] {
                let (g, gd) = p.grad(&c1, &c2, delta).unwrap();
                let h = 1e-6;
                let fd = (p.eval(&c1, &c2, delta + h).unwrap()
                    - p.eval(&c1, &c2, delta - h).unwrap())
                    / (2.0 * h);
                assert!((fd - gd).abs() < 1e-7 * (1.0 + gd.abs()));
                for k in 0..3 {
                    let mut cp = c2;
                    let mut cm = c2;
                    cp[k] += h;
                    cm[k] -= h;
                    let fd = (p.eval(&c1, &cp, delta).unwrap() - p.eval(&c1, &cm, delta).unwrap())
                        / (2.0 * h);
                    assert!((fd - g[k]).abs() < 1e-7 * (1.0 + g[k].abs()));
                }
            }
        }
    }

    #[test]
    fn rejects_non_positive_delta() {
        let p = MismatchParams::default();
        assert!(p.eval(&[0.0], &[0.0], 0.0).is_err());
        assert!(p.grad(&[0.0], &[0.0], -1.0).is_err());
    }

    #[test]
    fn parse_forms() {
        assert_eq!(
            "8a".parse::<MismatchForm>().unwrap(),
            MismatchForm::Weighted
        );
        assert_eq!("8b".parse::<MismatchForm>().unwrap(), MismatchForm::Density);
        assert!("8c".parse::<MismatchForm>().is_err());
    }
}
