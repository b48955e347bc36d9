//! Small fixed-size helpers on top of `nalgebra` for the 2×2 calculus used everywhere.

use nalgebra::{Matrix2, Vector2};

pub type Vec2 = Vector2<f64>;
pub type Mat2 = Matrix2<f64>;

#[inline]
pub fn vec2(x: f64, y: f64) -> Vec2 {
    Vec2::new(x, y)
}

/// Row-major constructor, `[[a, b], [c, d]]`.
#[inline]
pub fn mat2(a: f64, b: f64, c: f64, d: f64) -> Mat2 {
    Mat2::new(a, b, c, d)
}

#[inline]
pub fn rotation(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    mat2(c, -s, s, c)
}

/// Derivative of [`rotation`] with respect to the angle.
#[inline]
pub fn rotation_derivative(theta: f64) -> Mat2 {
    let (s, c) = theta.sin_cos();
    mat2(-s, -c, c, -s)
}

#[inline]
pub fn det(a: &Mat2) -> f64 {
    a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)]
}

/// Cofactor matrix, `∂ det A / ∂A`.
#[inline]
pub fn cofactor(a: &Mat2) -> Mat2 {
    mat2(a[(1, 1)], -a[(1, 0)], -a[(0, 1)], a[(0, 0)])
}

#[inline]
pub fn frobenius(a: &Mat2) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Inverse of a matrix with nonzero determinant (no singularity check).
#[inline]
pub fn inverse(a: &Mat2) -> Mat2 {
    cofactor(a).transpose() / det(a)
}

/// Frobenius inner product `A : B`.
#[inline]
pub fn contract(a: &Mat2, b: &Mat2) -> f64 {
    a.component_mul(b).sum()
}

/// Matrix with columns `e1`, `e2`.
#[inline]
pub fn from_columns(e1: Vec2, e2: Vec2) -> Mat2 {
    mat2(e1.x, e2.x, e1.y, e2.y)
}

pub fn is_finite_mat(a: &Mat2) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Max-norm of a slice, 0 for an empty slice.
pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cofactor_is_det_derivative() {
        let a = mat2(1.3, -0.4, 0.7, 2.1);
        let h = 1e-7;
        let cof = cofactor(&a);
        for i in 0..2 {
            for j in 0..2 {
                let mut ap = a;
                let mut am = a;
                ap[(i, j)] += h;
                am[(i, j)] -= h;
                let fd = (det(&ap) - det(&am)) / (2.0 * h);
                assert!((fd - cof[(i, j)]).abs() < 1e-8);
            }
        }
        assert!((cof * a.transpose() - Mat2::identity() * det(&a)).norm() < 1e-14);
    }

    #[test]
    fn rotation_derivative_matches() {
        let t = 0.37;
        let h = 1e-6;
        let fd = (rotation(t + h) - rotation(t - h)) / (2.0 * h);
        assert!((fd - rotation_derivative(t)).norm() < 1e-9);
    }
}
