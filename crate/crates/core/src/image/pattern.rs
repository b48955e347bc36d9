//! Deterministic analytic test images.

use std::str::FromStr;
use std::sync::Arc;

use super::{Domain2, Field, Image, MAX_CHANNELS};
use crate::linalg::{inverse, Mat2, Vec2};
use crate::{Error, Result};

/// Closed forms, with `s = min(width, height)` of the creation domain and
/// `r = |x − centre|`:
///
/// * `smooth-blob`: `exp(−r² / 2σ_k²)`, `σ_k = 0.2 s (1 − 0.15 k)` for channel `k`.
/// * `checker`: 2×2 cells over the domain's local frame, values alternate in `{0, 1}`.
/// * `radial-gradient`: `clamp(1 − r / R, 0, 1)` with `R = s / 2`.
/// * `piecewise-constant-disk`: `1` for `r ≤ 0.3 s`, else `0` (discontinuous).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    SmoothBlob,
    Checker,
    RadialGradient,
    PiecewiseConstantDisk,
}

impl Pattern {
    pub const ALL: [Pattern; 4] = [
        Pattern::SmoothBlob,
        Pattern::Checker,
        Pattern::RadialGradient,
        Pattern::PiecewiseConstantDisk,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Pattern::SmoothBlob => "smooth-blob",
            Pattern::Checker => "checker",
            Pattern::RadialGradient => "radial-gradient",
            Pattern::PiecewiseConstantDisk => "piecewise-constant-disk",
        }
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pattern::ALL
            .into_iter()
            .find(|p| p.id() == s)
            .ok_or_else(|| Error::UnknownPattern(s.to_string()))
    }
}

#[derive(Debug)]
struct PatternField {
    pattern: Pattern,
    channels: usize,
    center: Vec2,
    origin: Vec2,
    frame_inv: Mat2,
    size: f64,
}

impl PatternField {
    fn sigma(&self, k: usize) -> f64 {
        0.2 * self.size * (1.0 - 0.15 * k as f64)
    }
}

impl Field for PatternField {
    fn channels(&self) -> usize {
        self.channels
    }

    fn range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn eval(&self, p: Vec2, out: &mut [f64]) {
        let mut grad = [Vec2::zeros(); MAX_CHANNELS];
        self.eval_grad(p, out, &mut grad[..self.channels]);
    }

    fn eval_grad(&self, p: Vec2, out: &mut [f64], grad: &mut [Vec2]) {
        let d = p - self.center;
        let r = d.norm();
        for k in 0..self.channels {
            let (v, g) = match self.pattern {
                Pattern::SmoothBlob => {
                    let s2 = self.sigma(k).powi(2);
                    let v = (-d.norm_squared() / (2.0 * s2)).exp();
                    (v, -d * (v / s2))
                }
                Pattern::Checker => {
                    let l = self.frame_inv * (p - self.origin);
                    let cell = |t: f64| (2.0 * t.clamp(0.0, 1.0)).floor().min(1.0) as i64;
                    let v = ((cell(l.x) + cell(l.y)) % 2) as f64;
                    (v, Vec2::zeros())
                }
                Pattern::RadialGradient => {
                    let big_r = 0.5 * self.size;
                    if r < big_r {
                        let g = if r > 0.0 {
                            -d / (r * big_r)
                        } else {
                            Vec2::zeros()
                        };
                        (1.0 - r / big_r, g)
                    } else {
                        (0.0, Vec2::zeros())
                    }
                }
                Pattern::PiecewiseConstantDisk => {
                    let v = if r <= 0.3 * self.size { 1.0 } else { 0.0 };
                    (v, Vec2::zeros())
                }
            };
            out[k] = v;
            grad[k] = g;
        }
    }
}

/// Builds a synthetic analytic image over `domain` from a pattern id.
pub fn synthetic_image(kind: &str, domain: Domain2, channels: usize) -> Result<Image> {
    let pattern: Pattern = kind.parse()?;
    if !(channels == 1 || channels == 3) {
        return Err(Error::InvalidInput(format!(
            "channels must be 1 or 3, got {channels}"
        )));
    }
    let field = PatternField {
        pattern,
        channels,
        center: domain.center(),
        origin: domain.origin(),
        frame_inv: inverse(domain.frame()),
        size: domain.width().min(domain.height()),
    };
    Image::from_field(domain, Arc::new(field))
}
