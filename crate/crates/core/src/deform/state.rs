use serde::{Deserialize, Serialize};

use super::chart::BoundaryChart;
use super::mesh::{NodeKind, TriMesh};
use crate::error::{Error, Result};
use crate::image::AffineMap2;
use crate::linalg::{det, inverse, Vec2};

/// Nodal values of a piecewise-affine map: images of interior nodes and
/// chart parameters of boundary nodes (in boundary-cycle order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationState {
    pub interior: Vec<Vec2>,
    pub boundary: Vec<f64>,
}

impl DeformationState {
    /// Samples `f` at the nodes, projecting boundary images onto the chart.
    /// Corner nodes go to the chart corners.
    pub fn from_map(mesh: &TriMesh, chart: &BoundaryChart, f: impl Fn(Vec2) -> Vec2) -> Self {
        let x = mesh.nodes();
        let interior = mesh.interior_nodes().iter().map(|&n| f(x[n])).collect();
        let corners = mesh.corner_positions();
        let boundary = mesh
            .boundary_nodes()
            .iter()
            .enumerate()
            .map(|(b, &n)| match corners.iter().position(|&c| c == b) {
                Some(s) => chart.corner_param(s),
                None => chart.project(f(x[n])),
            })
            .collect();
        Self { interior, boundary }
    }

    pub fn check_shape(&self, mesh: &TriMesh) -> Result<()> {
        if self.interior.len() != mesh.interior_nodes().len()
            || self.boundary.len() != mesh.boundary_nodes().len()
        {
            return Err(Error::InvalidInput(format!(
                "state has {}+{} nodal values, mesh expects {}+{}",
                self.interior.len(),
                self.boundary.len(),
                mesh.interior_nodes().len(),
                mesh.boundary_nodes().len()
            )));
        }
        Ok(())
    }
}

/// The frame-to-frame affine map `Ω1 → Ω2`, which sends corners to corners.
pub fn initial_guess(mesh: &TriMesh, chart: &BoundaryChart) -> DeformationState {
    let (d1, d2) = (mesh.domain(), chart.domain());
    let a = d2.frame() * inverse(d1.frame());
    let map = AffineMap2::new(a, d2.origin() - a * d1.origin());
    let x = mesh.nodes();
    DeformationState {
        interior: mesh
            .interior_nodes()
            .iter()
            .map(|&n| map.apply(x[n]))
            .collect(),
        boundary: (0..mesh.boundary_nodes().len())
            .map(|b| {
                let (s, frac) = mesh.boundary_side(b);
                chart.param_on_side(s, frac)
            })
            .collect(),
    }
}

/// Strictly increasing chart parameters spanning less than one perimeter.
pub fn boundary_monotone(t: &[f64], perimeter: f64) -> bool {
    t.windows(2).all(|w| w[1] > w[0])
        && t.iter().all(|v| v.is_finite())
        && t.last()
            .zip(t.first())
            .is_none_or(|(l, f)| l - f < perimeter)
}

fn nodal_images(state: &DeformationState, mesh: &TriMesh, chart: &BoundaryChart) -> Vec<Vec2> {
    let mut y = vec![Vec2::zeros(); mesh.num_nodes()];
    for (k, &n) in mesh.interior_nodes().iter().enumerate() {
        y[n] = state.interior[k];
    }
    for (b, &n) in mesh.boundary_nodes().iter().enumerate() {
        y[n] = chart.point(state.boundary[b]);
    }
    y
}

/// Nodal images of every mesh node.
pub fn realize(
    state: &DeformationState,
    mesh: &TriMesh,
    chart: &BoundaryChart,
) -> Result<Vec<Vec2>> {
    state.check_shape(mesh)?;
    if !boundary_monotone(&state.boundary, chart.perimeter()) {
        return Err(Error::Infeasible(
            "boundary chart coordinates are not strictly cyclically increasing".into(),
        ));
    }
    Ok(nodal_images(state, mesh, chart))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityReport {
    pub min_det: f64,
    pub min_det_triangle: usize,
    pub boundary_monotone: bool,
    pub nodes_in_domain: bool,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.min_det > 0.0 && self.boundary_monotone && self.nodes_in_domain
    }

    pub(crate) fn ensure(&self) -> Result<()> {
        if !self.boundary_monotone {
            return Err(Error::Infeasible(
                "boundary chart coordinates are not strictly cyclically increasing".into(),
            ));
        }
        if !(self.min_det > 0.0) {
            return Err(Error::Infeasible(format!(
                "triangle {} has det Dy = {:e}",
                self.min_det_triangle, self.min_det
            )));
        }
        if !self.nodes_in_domain {
            return Err(Error::Infeasible("a nodal image lies outside Ω2".into()));
        }
        Ok(())
    }
}

pub fn feasibility_report(
    state: &DeformationState,
    mesh: &TriMesh,
    chart: &BoundaryChart,
) -> FeasibilityReport {
    if state.check_shape(mesh).is_err() {
        return FeasibilityReport {
            min_det: f64::NAN,
            min_det_triangle: 0,
            boundary_monotone: false,
            nodes_in_domain: false,
        };
    }
    let y = nodal_images(state, mesh, chart);
    let tri = mesh.triangulation();
    let (mut min_det, mut worst) = (f64::INFINITY, 0);
    for t in 0..tri.num_triangles() {
        let d = det(&tri.gradient(t, &y));
        // NaN compares false, so record it explicitly
        if d < min_det || d.is_nan() {
            min_det = d;
            worst = t;
            if d.is_nan() {
                break;
            }
        }
    }
    let tol = 1e-12 * chart.domain().diameter();
    FeasibilityReport {
        min_det,
        min_det_triangle: worst,
        boundary_monotone: boundary_monotone(&state.boundary, chart.perimeter()),
        nodes_in_domain: state
            .interior
            .iter()
            .all(|&p| chart.domain().contains(p, tol)),
    }
}

/// Shoelace area of a closed polygon.
pub fn polygon_area(points: &[Vec2]) -> f64 {
    let n = points.len();
    0.5 * (0..n)
        .map(|i| {
            let (p, q) = (points[i], points[(i + 1) % n]);
            p.x * q.y - q.x * p.y
        })
        .sum::<f64>()
}

/// Full gradient in state layout: 2-vectors for interior nodes, tangential
/// scalars for boundary nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DofGradient {
    pub interior: Vec<Vec2>,
    pub boundary: Vec<f64>,
}

/// Packing of the unfrozen state entries into a flat vector. Corners are
/// always frozen; further nodes (landmarks) can be frozen on request.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    interior_slot: Vec<Option<usize>>,
    boundary_slot: Vec<Option<usize>>,
    len: usize,
}

impl DofMap {
    pub fn new(mesh: &TriMesh) -> Self {
        Self::with_frozen_nodes(mesh, &[])
    }

    pub fn with_frozen_nodes(mesh: &TriMesh, frozen: &[usize]) -> Self {
        let mut fi = vec![false; mesh.interior_nodes().len()];
        let mut fb = vec![false; mesh.boundary_nodes().len()];
        for p in mesh.corner_positions() {
            fb[p] = true;
        }
        for &n in frozen {
            match mesh.kind(n) {
                NodeKind::Interior(k) => fi[k] = true,
                NodeKind::Boundary(b) => fb[b] = true,
            }
        }
        let mut len = 0;
        let mut slot = |frozen: bool, width: usize| {
            (!frozen).then(|| {
                len += width;
                len - width
            })
        };
        let interior_slot = fi.iter().map(|&f| slot(f, 2)).collect();
        let boundary_slot = fb.iter().map(|&f| slot(f, 1)).collect();
        Self {
            interior_slot,
            boundary_slot,
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn gather(&self, state: &DeformationState) -> Vec<f64> {
        let mut x = vec![0.0; self.len];
        for (k, s) in self.interior_slot.iter().enumerate() {
            if let Some(s) = *s {
                x[s] = state.interior[k].x;
                x[s + 1] = state.interior[k].y;
            }
        }
        for (b, s) in self.boundary_slot.iter().enumerate() {
            if let Some(s) = *s {
                x[s] = state.boundary[b];
            }
        }
        x
    }

    /// `base` with its free entries replaced by `x`.
    pub fn scatter(&self, x: &[f64], base: &DeformationState) -> DeformationState {
        let mut st = base.clone();
        for (k, s) in self.interior_slot.iter().enumerate() {
            if let Some(s) = *s {
                st.interior[k] = Vec2::new(x[s], x[s + 1]);
            }
        }
        for (b, s) in self.boundary_slot.iter().enumerate() {
            if let Some(s) = *s {
                st.boundary[b] = x[s];
            }
        }
        st
    }

    pub fn restrict(&self, g: &DofGradient) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for (k, s) in self.interior_slot.iter().enumerate() {
            if let Some(s) = *s {
                out[s] = g.interior[k].x;
                out[s + 1] = g.interior[k].y;
            }
        }
        for (b, s) in self.boundary_slot.iter().enumerate() {
            if let Some(s) = *s {
                out[s] = g.boundary[b];
            }
        }
        out
    }
}
