//! The volumetric term `h(δ)` of the singular-value energy, as a sum of power
//! laws `Σ kᵢ δ^{pᵢ}`, plus the scalar convexity machinery shared with `H(δ)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Space dimension; fixed.
pub const DIM: f64 = 2.0;

/// Sample points used by the convexity and symmetry checks: log-spaced in `[1e-3, 1e3]`.
pub(crate) fn log_grid(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| 10f64.powf(-3.0 + 6.0 * i as f64 / (n - 1) as f64))
}

/// Smallest sampled second difference `f(δe^s) − 2f(δ) + f(δe^{-s})`,
/// relative to `1 + |f(δ)|`, on a log grid. Convex functions give `≥ 0` up to rounding.
pub fn min_second_difference(f: impl Fn(f64) -> f64, samples: usize) -> f64 {
    let s = 1e-2_f64;
    log_grid(samples)
        .map(|d| {
            let (lo, hi) = (d * (-s).exp(), d * s.exp());
            // non-uniform three-point second difference
            let (hl, hh) = (d - lo, hi - d);
            let dd = 2.0 * (f(lo) * hh + f(hi) * hl - f(d) * (hl + hh)) / (hl * hh * (hl + hh));
            dd * hl * hh / (1.0 + f(d).abs())
        })
        .fold(f64::INFINITY, f64::min)
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while (hi - lo) > tol * (1.0 + a.abs()) {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub coef: f64,
    pub power: f64,
}

/// `h(δ) = Σ coef·δ^power`, certified at construction to be convex, bounded
/// below, to satisfy `h(δ) = δ h(1/δ)` and `h′(1) = −2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Volumetric {
    terms: Vec<PowerTerm>,
    min_value: f64,
    argmin: f64,
}

impl Default for Volumetric {
    /// `h(δ) = δ² + δ⁻¹ − 6√δ`.
    fn default() -> Self {
        Self::new(vec![
            PowerTerm {
                coef: 1.0,
                power: 2.0,
            },
            PowerTerm {
                coef: 1.0,
                power: -1.0,
            },
            PowerTerm {
                coef: -6.0,
                power: 0.5,
            },
        ])
        .expect("default volumetric term is certified")
    }
}

impl Volumetric {
    pub fn new(terms: Vec<PowerTerm>) -> Result<Self> {
        if terms
            .iter()
            .any(|t| !t.coef.is_finite() || !t.power.is_finite())
        {
            return Err(Error::InvalidParams("h: non-finite coefficient".into()));
        }
        let mut h = Self {
            terms,
            min_value: f64::NAN,
            argmin: f64::NAN,
        };

        for d in log_grid(61) {
            let lhs = h.value(d);
            let rhs = d * h.value(1.0 / d);
            if (lhs - rhs).abs() > 1e-12 * (1.0 + lhs.abs()) {
                return Err(Error::InvalidParams(format!(
                    "h(δ) = δ h(1/δ) fails at δ = {d}: {lhs} vs {rhs}"
                )));
            }
        }
        let slope = h.derivative(1.0);
        if (slope + DIM).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "h'(1) must equal -2, got {slope}"
            )));
        }
        let convexity = min_second_difference(|d| h.value(d), 241);
        if convexity < -1e-10 {
            return Err(Error::InvalidParams(format!(
                "h is not convex (second difference {convexity:e})"
            )));
        }
        let (lo, hi) = (1e-6, 1e6);
        let (argmin, min_value) = golden_section(|d| h.value(d), lo, hi, 1e-14);
        if !(argmin > 2.0 * lo && argmin < 0.5 * hi) || !min_value.is_finite() {
            return Err(Error::InvalidParams(
                "h is not bounded below on (0, ∞)".into(),
            ));
        }
        h.min_value = min_value;
        h.argmin = argmin;
        Ok(h)
    }

    pub fn terms(&self) -> &[PowerTerm] {
        &self.terms
    }

    pub fn value(&self, d: f64) -> f64 {
        self.terms.iter().map(|t| t.coef * d.powf(t.power)).sum()
    }

    pub fn derivative(&self, d: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * t.power * d.powf(t.power - 1.0))
            .sum()
    }

    pub fn second_derivative(&self, d: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coef * t.power * (t.power - 1.0) * d.powf(t.power - 2.0))
            .sum()
    }

    /// `min_{δ>0} h(δ)`, found numerically at construction.
    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn argmin(&self) -> f64 {
        self.argmin
    }
}
