use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{solve_with_dofs, SolveReport, SolverConfig};
use crate::deform::{
    feasibility_report, realize, Assembler, BoundaryChart, DeformationState, DofMap, NodeKind,
    TriMesh,
};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::image::{Domain2, Image};
use crate::linalg::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    /// Point of Ω1.
    pub source: Vec2,
    /// Required image in closure(Ω2).
    pub target: Vec2,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub pairs: Vec<Landmark>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LandmarkSnap {
    pub landmark: usize,
    pub node: usize,
    /// Distance from the landmark source to the node it was snapped to.
    pub distance: f64,
}

/// Snaps each landmark source to its nearest mesh node. Boundary nodes need
/// targets on ∂Ω2, corner nodes need the matching corner of Ω2.
pub fn snap_landmarks(
    mesh: &TriMesh,
    chart: &BoundaryChart,
    set: &LandmarkSet,
) -> Result<Vec<LandmarkSnap>> {
    let tol = 1e-9 * chart.domain().diameter();
    let mut used = BTreeMap::new();
    let mut snaps = Vec::with_capacity(set.pairs.len());
    for (k, lm) in set.pairs.iter().enumerate() {
        if !mesh.domain().contains(lm.source, tol) {
            return Err(Error::InvalidLandmarks(format!(
                "source of landmark {k} lies outside Ω1"
            )));
        }
        if !chart.domain().contains(lm.target, tol) {
            return Err(Error::InvalidLandmarks(format!(
                "target of landmark {k} lies outside Ω2"
            )));
        }
        let node = mesh.nearest_node(lm.source);
        if let Some(other) = used.insert(node, k) {
            return Err(Error::InvalidLandmarks(format!(
                "landmarks {other} and {k} snap to the same node {node}"
            )));
        }
        if let NodeKind::Boundary(b) = mesh.kind(node) {
            let on_boundary = (chart.point(chart.project(lm.target)) - lm.target).norm() <= tol;
            let corner = mesh.corner_positions().iter().position(|&c| c == b);
            let corner_ok = corner
                .is_none_or(|s| (chart.point(chart.corner_param(s)) - lm.target).norm() <= tol);
            if !on_boundary || !corner_ok {
                return Err(Error::InvalidLandmarks(format!(
                    "landmark {k} snaps to a boundary node but its target is not the matching boundary point"
                )));
            }
        }
        snaps.push(LandmarkSnap {
            landmark: k,
            node,
            distance: (mesh.nodes()[node] - lm.source).norm(),
        });
    }
    Ok(snaps)
}

fn distance_to_boundary(d: &Domain2, x: Vec2) -> f64 {
    let l = d.to_local(x);
    let (h1, h2) = (d.area() / d.edge1().norm(), d.area() / d.edge2().norm());
    (l.y * h1)
        .min((1.0 - l.y) * h1)
        .min(l.x * h2)
        .min((1.0 - l.x) * h2)
}

/// Moves the landmark nodes of `state` onto their targets, carrying the
/// surrounding interior nodes along with a smooth bump that vanishes on ∂Ω1.
fn seed_with_landmarks(
    mesh: &TriMesh,
    chart: &BoundaryChart,
    state: &DeformationState,
    set: &LandmarkSet,
    snaps: &[LandmarkSnap],
) -> Result<DeformationState> {
    let y = realize(state, mesh, chart)?;
    let x = mesh.nodes();
    let mut out = state.clone();
    for snap in snaps {
        let target = set.pairs[snap.landmark].target;
        match mesh.kind(snap.node) {
            NodeKind::Boundary(b) => {
                out.boundary[b] = chart_param_near(chart, target, state.boundary[b])
            }
            NodeKind::Interior(_) => {
                let d = target - y[snap.node];
                let c = x[snap.node];
                let r = distance_to_boundary(mesh.domain(), c);
                for (k, &n) in mesh.interior_nodes().iter().enumerate() {
                    let s = (x[n] - c).norm_squared() / (r * r);
                    if s < 1.0 {
                        out.interior[k] += d * (1.0 - s).powi(2);
                    }
                }
            }
        }
    }
    for snap in snaps {
        if let NodeKind::Interior(k) = mesh.kind(snap.node) {
            out.interior[k] = set.pairs[snap.landmark].target;
        }
    }
    feasibility_report(&out, mesh, chart)
        .ensure()
        .map_err(|e| {
            Error::Infeasible(format!(
                "landmark targets cannot be reached from the seed: {e}"
            ))
        })?;
    Ok(out)
}

/// Chart parameter of `target` on the same sheet (mod `L`) as `near`.
fn chart_param_near(chart: &BoundaryChart, target: Vec2, near: f64) -> f64 {
    let l = chart.perimeter();
    let t = chart.project(target);
    let shift = ((near - t) / l).round();
    t + shift * l
}

/// [`super::minimize`] with landmark nodes frozen at their targets.
#[allow(clippy::too_many_arguments)]
pub fn minimize_with_landmarks(
    model: &EnergyModel,
    p1: &Image,
    p2: &Image,
    mesh: &TriMesh,
    chart: &BoundaryChart,
    config: &SolverConfig,
    state0: &DeformationState,
    landmarks: &LandmarkSet,
) -> Result<SolveReport> {
    let snaps = snap_landmarks(mesh, chart, landmarks)?;
    let seed = seed_with_landmarks(mesh, chart, state0, landmarks, &snaps)?;
    let frozen: Vec<usize> = snaps.iter().map(|s| s.node).collect();
    let asm = Assembler::new(model, p1, p2, mesh, chart, config.h2_weight)?;
    let mut report = solve_with_dofs(
        &asm,
        &DofMap::with_frozen_nodes(mesh, &frozen),
        &seed,
        config,
    )?;
    report.landmark_snaps = snaps;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::{build_mesh, initial_guess};
    use crate::image::synthetic_image;
    use crate::linalg::vec2;
    use crate::solver::{minimize, TerminationReason};

    fn setup(n: usize) -> (Domain2, Image, TriMesh, BoundaryChart) {
        let d = Domain2::unit();
        let p = synthetic_image("smooth-blob", d, 1).unwrap();
        (d, p, build_mesh(&d, n, n).unwrap(), BoundaryChart::new(&d))
    }

    #[test]
    fn empty_set_matches_minimize() {
        let (_, p, mesh, _) = setup(5);
        let q = crate::image::transform_image(&p, &crate::image::AffineMap2::scaling(1.2)).unwrap();
        let chart2 = BoundaryChart::new(q.domain());
        let mut st = initial_guess(&mesh, &chart2);
        st.interior[4] += vec2(0.01, -0.02);
        let cfg = SolverConfig::default();
        let model = EnergyModel::default();
        let a = minimize(&model, &p, &q, &mesh, &chart2, &cfg, &st).unwrap();
        let b = minimize_with_landmarks(
            &model,
            &p,
            &q,
            &mesh,
            &chart2,
            &cfg,
            &st,
            &LandmarkSet::default(),
        )
        .unwrap();
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn pinning_center_to_itself_keeps_identity() {
        let (_, p, mesh, chart) = setup(9);
        let set = LandmarkSet {
            pairs: vec![Landmark {
                source: vec2(0.5, 0.5),
                target: vec2(0.5, 0.5),
            }],
        };
        let r = minimize_with_landmarks(
            &EnergyModel::default(),
            &p,
            &p,
            &mesh,
            &chart,
            &SolverConfig::default(),
            &initial_guess(&mesh, &chart),
            &set,
        )
        .unwrap();
        assert_eq!(r.final_energy(), 0.0);
        assert_eq!(r.landmark_snaps[0].distance, 0.0);
    }

    #[test]
    fn displaced_center_gives_positive_energy_at_stationarity() {
        let (_, p, mesh, chart) = setup(9);
        let set = LandmarkSet {
            pairs: vec![Landmark {
                source: vec2(0.5, 0.5),
                target: vec2(0.6, 0.5),
            }],
        };
        let r = minimize_with_landmarks(
            &EnergyModel::default(),
            &p,
            &p,
            &mesh,
            &chart,
            &SolverConfig::default(),
            &initial_guess(&mesh, &chart),
            &set,
        )
        .unwrap();
        assert!(r.final_energy() > 0.0);
        assert_eq!(r.termination, TerminationReason::Converged);
        assert!(r.gradient_norm <= 1e-6 * r.initial_gradient_norm);
        assert!((r.nodes[mesh.node_index(4, 4)] - vec2(0.6, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn duplicate_snaps_are_rejected() {
        let (_, _, mesh, chart) = setup(5);
        let set = LandmarkSet {
            pairs: vec![
                Landmark {
                    source: vec2(0.5, 0.5),
                    target: vec2(0.5, 0.5),
                },
                Landmark {
                    source: vec2(0.52, 0.49),
                    target: vec2(0.4, 0.5),
                },
            ],
        };
        assert!(matches!(
            snap_landmarks(&mesh, &chart, &set),
            Err(Error::InvalidLandmarks(_))
        ));
        let off = LandmarkSet {
            pairs: vec![Landmark {
                source: vec2(0.0, 0.5),
                target: vec2(0.3, 0.5),
            }],
        };
        assert!(matches!(
            snap_landmarks(&mesh, &chart, &off),
            Err(Error::InvalidLandmarks(_))
        ));
    }
}
