//! Analytic fixture images without rotational or reflection symmetry.

use std::sync::Arc;

use crate::error::Result;
use crate::image::{Domain2, Field, Image};
use crate::linalg::{inverse, Mat2, Vec2};

/// `(centre u, centre v, width u, width v, weight)` in local coordinates.
const BUMPS: [(f64, f64, f64, f64, f64); 3] = [
    (0.35, 0.40, 0.18, 0.12, 0.5),
    (0.68, 0.62, 0.10, 0.16, 0.3),
    (0.55, 0.22, 0.08, 0.08, 0.2),
];

#[derive(Debug)]
struct AsymmetricField {
    channels: usize,
    origin: Vec2,
    frame_inv: Mat2,
}

impl Field for AsymmetricField {
    fn channels(&self) -> usize {
        self.channels
    }

    fn range(&self) -> (f64, f64) {
        (0.0, 1.0)
    }

    fn eval(&self, p: Vec2, out: &mut [f64]) {
        let mut g = [Vec2::zeros(); 3];
        self.eval_grad(p, out, &mut g[..self.channels]);
    }

    fn eval_grad(&self, p: Vec2, out: &mut [f64], grad: &mut [Vec2]) {
        let l = self.frame_inv * (p - self.origin);
        for k in 0..self.channels {
            let (mut v, mut gl) = (0.0, Vec2::zeros());
            for (j, &(cu, cv, wu, wv, a)) in BUMPS.iter().enumerate() {
                // channels reweight the bumps so colour images are not grey
                let a = a * if (j + k) % 3 == 0 {
                    1.0
                } else {
                    1.0 - 0.15 * k as f64
                };
                let (du, dv) = ((l.x - cu) / wu, (l.y - cv) / wv);
                let e = a * (-0.5 * (du * du + dv * dv)).exp();
                v += e;
                gl -= Vec2::new(du / wu, dv / wv) * e;
            }
            out[k] = v;
            grad[k] = self.frame_inv.transpose() * gl;
        }
    }
}

/// Smooth image with three anisotropic off-centre bumps laid out in the local
/// frame of `domain`; values lie in `(0, 1)`.
pub fn asymmetric_image(domain: Domain2, channels: usize) -> Result<Image> {
    let field = AsymmetricField {
        channels,
        origin: domain.origin(),
        frame_inv: inverse(domain.frame()),
    };
    Image::from_field(domain, Arc::new(field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vec2;

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn gradient_matches_finite_differences() {
        let d = Domain2::rect(vec2(0.2, -0.1), 1.3, 0.9).unwrap();
        let img = asymmetric_image(d, 3).unwrap();
        for p in [vec2(0.5, 0.3), vec2(1.1, 0.6), vec2(0.3, 0.0)] {
            let (_, g) = img.sample_with_gradient(p);
            for k in 0..3 {
                for (c, e) in [(0, vec2(1e-6, 0.0)), (1, vec2(0.0, 1e-6))] {
                    let fd = (img.sample(p + e).unwrap().as_slice()[k]
                        - img.sample(p - e).unwrap().as_slice()[k])
                        / 2e-6;
                    assert!((fd - g[k][c]).abs() < 1e-7, "{fd} vs {}", g[k][c]);
                }
            }
        }
    }

    #[test]
    fn not_symmetric_under_half_turn() {
        let img = asymmetric_image(Domain2::unit(), 1).unwrap();
        let p = vec2(0.35, 0.4);
        let q = vec2(0.65, 0.6);
        let (a, b) = (
            img.sample(p).unwrap().as_slice()[0],
            img.sample(q).unwrap().as_slice()[0],
        );
        assert!((a - b).abs() > 0.1);
    }
}
