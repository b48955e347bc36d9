use serde::Serialize;

use crate::image::Domain2;
use crate::linalg::Vec2;

/// Arc-length parameterisation `t ∈ [0, L)` of the boundary of a target
/// domain, starting at its origin corner and running through the corners in
/// positive order. Parameters outside `[0, L)` wrap around.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryChart {
    domain: Domain2,
    corners: [Vec2; 4],
    directions: [Vec2; 4],
    lengths: [f64; 4],
    /// Parameter of each corner; `cumulative[4] = L`.
    cumulative: [f64; 5],
}

impl BoundaryChart {
    pub fn new(domain: &Domain2) -> Self {
        let corners = domain.corners();
        let mut directions = [Vec2::zeros(); 4];
        let mut lengths = [0.0; 4];
        let mut cumulative = [0.0; 5];
        for s in 0..4 {
            let e = corners[(s + 1) % 4] - corners[s];
            lengths[s] = e.norm();
            directions[s] = e / lengths[s];
            cumulative[s + 1] = cumulative[s] + lengths[s];
        }
        Self {
            domain: *domain,
            corners,
            directions,
            lengths,
            cumulative,
        }
    }

    pub fn domain(&self) -> &Domain2 {
        &self.domain
    }

    pub fn perimeter(&self) -> f64 {
        self.cumulative[4]
    }

    /// Parameter of corner `s` (0..4).
    pub fn corner_param(&self, s: usize) -> f64 {
        self.cumulative[s]
    }

    pub fn side_length(&self, s: usize) -> f64 {
        self.lengths[s]
    }

    /// Parameter of the point at fraction `frac ∈ [0, 1]` along side `s`.
    pub fn param_on_side(&self, s: usize, frac: f64) -> f64 {
        self.cumulative[s] + frac * self.lengths[s]
    }

    /// Side containing `t` and the arc length past its starting corner. A
    /// parameter within `1e-12·L` of a corner belongs to the outgoing side.
    fn locate(&self, t: f64) -> (usize, f64) {
        let l = self.perimeter();
        let mut tm = t.rem_euclid(l);
        if l - tm <= 1e-12 * l {
            tm = 0.0;
        }
        let mut s = 3;
        for k in 0..4 {
            if tm < self.cumulative[k + 1] - 1e-12 * l {
                s = k;
                break;
            }
        }
        (s, (tm - self.cumulative[s]).max(0.0))
    }

    pub fn point(&self, t: f64) -> Vec2 {
        let (s, off) = self.locate(t);
        self.corners[s] + self.directions[s] * off
    }

    /// Unit tangent; one-sided (outgoing) at corners.
    pub fn tangent(&self, t: f64) -> Vec2 {
        self.directions[self.locate(t).0]
    }

    /// Parameter in `[0, L)` of the boundary point nearest to `x`.
    pub fn project(&self, x: Vec2) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for s in 0..4 {
            let off = (x - self.corners[s])
                .dot(&self.directions[s])
                .clamp(0.0, self.lengths[s]);
            let d = (self.corners[s] + self.directions[s] * off - x).norm();
            if d < best.0 {
                best = (d, self.cumulative[s] + off);
            }
        }
        best.1.rem_euclid(self.perimeter())
    }
}
