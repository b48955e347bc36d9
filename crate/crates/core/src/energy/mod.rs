//! The integrand `ψ(c1, c2, A) = Ψ(A) + f(c1, c2, det A)`.
//!
//! Two elastic families are provided. The singular-value energy
//!
//! ```text
//! Ψ(A) = v1^α + v2^α + det A·(v1^{-α} + v2^{-α}) + h(det A)
//! ```
//!
//! is isotropic, satisfies `Ψ(A) = det A·Ψ(A⁻¹)` and vanishes exactly on
//! `SO(2)`. The fluid energy `Ψ(A) = H(det A)` with
//! `H(δ) = 2(δ^{α/2} + δ^{1−α/2}) + h(δ)` depends on volume change only; on
//! conformal matrices `λQ` both families agree.

mod certify;
mod mismatch;
pub mod svd;
mod volumetric;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::{cofactor, Mat2};
use crate::{Error, Result};

pub use certify::{
    cauchy_stress, certify_coercivity, CoercivityCertificate, CoercivityConstants, StressReport,
};
pub use mismatch::{MismatchForm, MismatchGradient, MismatchParams};
pub use svd::{rotation_svd, singular_values, ConformalSplit, RotationSvd};
pub use volumetric::{golden_section, min_second_difference, PowerTerm, Volumetric, DIM};

/// Below this relative gap `(v1 − v2)/(v1 + v2)` the anticonformal part of
/// `∂Ψ/∂A` uses the equal-singular-value limit.
const EQUAL_STRETCH_GAP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElasticFamily {
    SingularValue,
    Fluid,
}

impl FromStr for ElasticFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sv" | "singular-value" => Ok(ElasticFamily::SingularValue),
            "fluid" => Ok(ElasticFamily::Fluid),
            other => Err(Error::InvalidParams(format!(
                "family must be sv or fluid, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for ElasticFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElasticFamily::SingularValue => "sv",
            ElasticFamily::Fluid => "fluid",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticParams {
    family: ElasticFamily,
    alpha: f64,
    volumetric: Volumetric,
}

impl Default for ElasticParams {
    fn default() -> Self {
        Self::new(ElasticFamily::SingularValue, 4.0, Volumetric::default())
            .expect("default elastic parameters are valid")
    }
}

impl ElasticParams {
    /// Validates `α > 2` and certifies convexity of `H` by sampled second differences.
    pub fn new(family: ElasticFamily, alpha: f64, volumetric: Volumetric) -> Result<Self> {
        if !(alpha > DIM && alpha.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "alpha must exceed n = 2, got {alpha}"
            )));
        }
        let p = Self {
            family,
            alpha,
            volumetric,
        };
        let convexity = min_second_difference(|d| p.big_h(d), 241);
        if convexity < -1e-10 {
            return Err(Error::InvalidParams(format!(
                "H is not convex (second difference {convexity:e})"
            )));
        }
        Ok(p)
    }

    pub fn with_family(&self, family: ElasticFamily) -> Self {
        Self {
            family,
            ..self.clone()
        }
    }

    pub fn family(&self) -> ElasticFamily {
        self.family
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn volumetric(&self) -> &Volumetric {
        &self.volumetric
    }

    /// `H(δ) = 2(δ^{α/2} + δ^{1−α/2}) + h(δ)`.
    pub fn big_h(&self, d: f64) -> f64 {
        let e = 0.5 * self.alpha;
        DIM * (d.powf(e) + d.powf(1.0 - e)) + self.volumetric.value(d)
    }

    pub fn big_h_prime(&self, d: f64) -> f64 {
        let e = 0.5 * self.alpha;
        DIM * (e * d.powf(e - 1.0) + (1.0 - e) * d.powf(-e)) + self.volumetric.derivative(d)
    }

    /// Stored energy `Ψ(A)`.
    pub fn stored_energy(&self, a: &Mat2) -> Result<f64> {
        let s = ConformalSplit::new(a)?;
        Ok(self.stored_energy_split(&s))
    }

    pub(crate) fn stored_energy_split(&self, s: &ConformalSplit) -> f64 {
        match self.family {
            ElasticFamily::Fluid => self.big_h(s.det),
            ElasticFamily::SingularValue => {
                let (v1, v2) = s.singular_values();
                self.stretch_energy(v1, v2) + self.volumetric.value(s.det)
            }
        }
    }

    /// `∂Ψ/∂A`.
    pub fn stored_energy_grad(&self, a: &Mat2) -> Result<Mat2> {
        let s = ConformalSplit::new(a)?;
        Ok(self.stored_energy_grad_split(a, &s))
    }

    pub(crate) fn stored_energy_grad_split(&self, a: &Mat2, s: &ConformalSplit) -> Mat2 {
        match self.family {
            ElasticFamily::Fluid => cofactor(a) * self.big_h_prime(s.det),
            ElasticFamily::SingularValue => {
                let (v1, v2) = s.singular_values();
                let (w1, w2) = self.stretch_gradient(v1, v2);
                // U diag(w1, w2) Vᵀ = ½(w1 + w2)·C/Q + (w1 − w2)/(v1 − v2)·K
                let gap = v1 - v2;
                let anti = if gap < EQUAL_STRETCH_GAP * (v1 + v2) {
                    self.stretch_gap_limit(0.5 * (v1 + v2))
                } else {
                    (w1 - w2) / gap
                };
                s.conformal * (0.5 * (w1 + w2) / s.q)
                    + s.anticonformal * anti
                    + cofactor(a) * self.volumetric.derivative(s.det)
            }
        }
    }

    /// `W(v1, v2) = v1^α + v2^α + v1 v2 (v1^{-α} + v2^{-α})`.
    fn stretch_energy(&self, v1: f64, v2: f64) -> f64 {
        let a = self.alpha;
        v1.powf(a) + v2.powf(a) + v1.powf(1.0 - a) * v2 + v1 * v2.powf(1.0 - a)
    }

    /// `(∂W/∂v1, ∂W/∂v2)`.
    fn stretch_gradient(&self, v1: f64, v2: f64) -> (f64, f64) {
        let a = self.alpha;
        let d = |x: f64, y: f64| a * x.powf(a - 1.0) + (1.0 - a) * x.powf(-a) * y + y.powf(1.0 - a);
        (d(v1, v2), d(v2, v1))
    }

    /// `lim (∂W/∂v1 − ∂W/∂v2)/(v1 − v2)` at `v1 = v2 = v`.
    fn stretch_gap_limit(&self, v: f64) -> f64 {
        let a = self.alpha;
        a * (a - 1.0) * v.powf(a - 2.0) + (a - 1.0) * (a + 2.0) * v.powf(-a)
    }
}

/// `Ψ(A) = H(det A)` for the fluid form built from `params` (its family is ignored).
pub fn fluid_energy(params: &ElasticParams, a: &Mat2) -> Result<f64> {
    let s = ConformalSplit::new(a)?;
    Ok(params.big_h(s.det))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EnergyModel {
    pub elastic: ElasticParams,
    pub mismatch: MismatchParams,
}

/// Value of `ψ` split into its parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsiParts {
    pub elastic: f64,
    pub mismatch: f64,
}

impl PsiParts {
    pub fn total(&self) -> f64 {
        self.elastic + self.mismatch
    }
}

impl EnergyModel {
    pub fn new(elastic: ElasticParams, mismatch: MismatchParams) -> Self {
        Self { elastic, mismatch }
    }

    pub fn psi_parts(&self, c1: &[f64], c2: &[f64], a: &Mat2) -> Result<PsiParts> {
        check_channels(c1, c2)?;
        let s = ConformalSplit::new(a)?;
        Ok(PsiParts {
            elastic: self.elastic.stored_energy_split(&s),
            mismatch: self.mismatch.eval_unchecked(c1, c2, s.det),
        })
    }

    /// `ψ(c1, c2, A)`.
    pub fn psi(&self, c1: &[f64], c2: &[f64], a: &Mat2) -> Result<f64> {
        Ok(self.psi_parts(c1, c2, a)?.total())
    }

    /// `∂ψ/∂A`.
    pub fn psi_grad_a(&self, c1: &[f64], c2: &[f64], a: &Mat2) -> Result<Mat2> {
        check_channels(c1, c2)?;
        let s = ConformalSplit::new(a)?;
        let (_, dd) = self.mismatch.grad_unchecked(c1, c2, s.det);
        Ok(self.elastic.stored_energy_grad_split(a, &s) + cofactor(a) * dd)
    }
}

fn check_channels(c1: &[f64], c2: &[f64]) -> Result<()> {
    if c1.len() != c2.len() || c1.is_empty() || c1.len() > crate::image::MAX_CHANNELS {
        return Err(Error::InvalidInput(format!(
            "intensity channel mismatch: {} vs {}",
            c1.len(),
            c2.len()
        )));
    }
    Ok(())
}
