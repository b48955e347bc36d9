//! Closed-form singular-value calculus for 2×2 matrices with positive determinant.
//!
//! Every `A` splits as `A = C + K` with `C = [[E, −H], [H, E]]` conformal and
//! `K = [[F, G], [G, −F]]` anticonformal. With `Q = |C|/√2`, `R = |K|/√2` the
//! singular values are `Q ± R`, `C/Q` is the rotation of the polar
//! decomposition and `K/R = U diag(1, −1) Vᵀ`.

use crate::linalg::{det, is_finite_mat, mat2, rotation, Mat2};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ConformalSplit {
    pub conformal: Mat2,
    pub anticonformal: Mat2,
    /// `(v1 + v2) / 2`.
    pub q: f64,
    /// `(v1 − v2) / 2`.
    pub r: f64,
    pub det: f64,
}

impl ConformalSplit {
    pub fn new(a: &Mat2) -> Result<Self> {
        let d = det(a);
        if !is_finite_mat(a) {
            return Err(Error::InvalidInput("matrix has non-finite entries".into()));
        }
        if !(d > 0.0) {
            return Err(Error::OrientationViolation { det: d });
        }
        let e = 0.5 * (a[(0, 0)] + a[(1, 1)]);
        let f = 0.5 * (a[(0, 0)] - a[(1, 1)]);
        let g = 0.5 * (a[(1, 0)] + a[(0, 1)]);
        let h = 0.5 * (a[(1, 0)] - a[(0, 1)]);
        Ok(Self {
            conformal: mat2(e, -h, h, e),
            anticonformal: mat2(f, g, g, -f),
            q: e.hypot(h),
            r: f.hypot(g),
            det: d,
        })
    }

    /// `(v1, v2)`, `v1 ≥ v2 > 0`; the smaller one is recovered as `det / v1`
    /// to avoid cancellation.
    pub fn singular_values(&self) -> (f64, f64) {
        let v1 = self.q + self.r;
        (v1, self.det / v1)
    }

    /// Rotation factor of the polar decomposition, `U Vᵀ`.
    pub fn polar_rotation(&self) -> Mat2 {
        self.conformal / self.q
    }
}

pub fn singular_values(a: &Mat2) -> Result<(f64, f64)> {
    Ok(ConformalSplit::new(a)?.singular_values())
}

/// `A = U diag(v1, v2) Vᵀ` with `U, V ∈ SO(2)`.
#[derive(Debug, Clone, Copy)]
pub struct RotationSvd {
    pub u: Mat2,
    pub sigma: (f64, f64),
    pub v: Mat2,
}

impl RotationSvd {
    pub fn reconstruct(&self) -> Mat2 {
        self.u * Mat2::new(self.sigma.0, 0.0, 0.0, self.sigma.1) * self.v.transpose()
    }
}

pub fn rotation_svd(a: &Mat2) -> Result<RotationSvd> {
    let s = ConformalSplit::new(a)?;
    let c = &s.conformal;
    let k = &s.anticonformal;
    // C/Q = Rot(a2), K/R = Rot(φ) diag(1,-1) Rot(ψ) with φ - ψ = a1
    let a2 = c[(1, 0)].atan2(c[(0, 0)]);
    let a1 = k[(1, 0)].atan2(k[(0, 0)]);
    let phi = 0.5 * (a1 + a2);
    let psi = 0.5 * (a2 - a1);
    Ok(RotationSvd {
        u: rotation(phi),
        sigma: s.singular_values(),
        v: rotation(-psi),
    })
}

/// Distance from `A` (with `det A > 0`) to `SO(2)` in the Frobenius norm,
/// `sqrt((v1 − 1)² + (v2 − 1)²)`.
pub fn distance_to_rotations(a: &Mat2) -> Result<f64> {
    let (v1, v2) = singular_values(a)?;
    Ok((v1 - 1.0).hypot(v2 - 1.0))
}
