//! Feasibility-preserving minimization of the discrete energy, with
//! multiresolution continuation and landmark and template variants.

mod landmarks;
mod lbfgs;
mod template;

pub use landmarks::{minimize_with_landmarks, snap_landmarks, Landmark, LandmarkSet, LandmarkSnap};
pub use lbfgs::{lbfgs, Iterate, LbfgsConfig, LbfgsResult, Objective, TerminationReason};
pub use template::{register_template, TemplatePose};

use serde::{Deserialize, Serialize};

use crate::deform::{
    build_mesh, feasibility_report, initial_guess, realize, Assembler, BoundaryChart,
    DeformationState, DiscreteEnergyReport, DofMap, FeasibilityReport, TriMesh,
};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative to the initial gradient infinity norm.
    pub gradient_tolerance: f64,
    /// Absolute projected-gradient floor below which a state counts as stationary.
    pub absolute_tolerance: f64,
    pub armijo: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub memory: usize,
    pub levels: usize,
    /// Weight of the second-gradient term; 0 disables it.
    pub h2_weight: f64,
    /// Largest nodal move of a memoryless step, in units of the mesh spacing.
    pub initial_step: f64,
    /// Raster blur on coarse pyramid levels, in units of that level's mesh
    /// spacing; the finest level always sees the original images.
    pub coarse_smoothing: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            gradient_tolerance: 1e-6,
            absolute_tolerance: 1e-12,
            armijo: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            memory: 10,
            levels: 3,
            h2_weight: 0.0,
            initial_step: 0.25,
            coarse_smoothing: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.gradient_tolerance,
            self.armijo,
            self.backtrack,
            self.initial_step,
        ];
        let ok = positive.iter().all(|v| *v > 0.0 && v.is_finite())
            && self.gradient_tolerance < 1.0
            && self.armijo < 1.0
            && self.backtrack < 1.0
            && self.max_iterations > 0
            && self.max_backtracks > 0
            && self.memory > 0
            && self.levels > 0
            && self.absolute_tolerance >= 0.0
            && self.absolute_tolerance.is_finite()
            && self.h2_weight >= 0.0
            && self.h2_weight.is_finite()
            && self.coarse_smoothing >= 0.0
            && self.coarse_smoothing.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "invalid solver configuration {self:?}"
            )))
        }
    }

    pub(crate) fn lbfgs(&self, spacing: f64) -> LbfgsConfig {
        LbfgsConfig {
            max_iterations: self.max_iterations,
            tolerance: self.gradient_tolerance,
            absolute_tolerance: self.absolute_tolerance,
            armijo: self.armijo,
            backtrack: self.backtrack,
            max_backtracks: self.max_backtracks,
            memory: self.memory,
            initial_step: self.initial_step * spacing,
        }
    }
}

/// Energy parts recorded for one accepted iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub total: f64,
    pub elastic: f64,
    pub mismatch: f64,
    pub second_gradient: f64,
    pub min_det: f64,
    pub step: f64,
}

impl TraceEntry {
    pub(crate) fn from_report(r: &DiscreteEnergyReport) -> Self {
        Self {
            iteration: 0,
            total: r.total,
            elastic: r.elastic,
            mismatch: r.mismatch,
            second_gradient: r.second_gradient,
            min_det: r.min_det,
            step: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryMetrics {
    /// Largest distance between a nodal image and the reference map.
    pub max_deviation: f64,
    /// `max_deviation / diam(Ω2)`.
    pub relative: f64,
}

/// Largest nodal distance between `nodes` and `f` applied to the mesh nodes.
pub fn recovery_metrics(
    mesh: &TriMesh,
    nodes: &[Vec2],
    target_diameter: f64,
    f: impl Fn(Vec2) -> Vec2,
) -> RecoveryMetrics {
    let max_deviation = mesh
        .nodes()
        .iter()
        .zip(nodes)
        .map(|(x, y)| (f(*x) - y).norm())
        .fold(0.0, f64::max);
    RecoveryMetrics {
        max_deviation,
        relative: max_deviation / target_diameter,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub resolution: (usize, usize),
    pub state: DeformationState,
    /// Image of every mesh node under the final map.
    pub nodes: Vec<Vec2>,
    pub trace: Vec<TraceEntry>,
    pub termination: TerminationReason,
    pub iterations: usize,
    pub energy: DiscreteEnergyReport,
    pub feasibility: FeasibilityReport,
    pub initial_gradient_norm: f64,
    pub gradient_norm: f64,
    pub recovery: Option<RecoveryMetrics>,
    /// Final energy of every multiresolution level, coarsest first.
    pub level_energies: Vec<f64>,
    pub landmark_snaps: Vec<LandmarkSnap>,
}

impl SolveReport {
    /// Records the deviation of the final map from `f`.
    pub fn attach_recovery(
        &mut self,
        mesh: &TriMesh,
        target_diameter: f64,
        f: impl Fn(Vec2) -> Vec2,
    ) {
        self.recovery = Some(recovery_metrics(mesh, &self.nodes, target_diameter, f));
    }

    pub fn final_energy(&self) -> f64 {
        self.energy.total
    }
}

/// The discrete energy as a function of the free DOFs.
pub(crate) struct StateObjective<'a> {
    pub asm: &'a Assembler<'a>,
    pub dofs: &'a DofMap,
    pub base: DeformationState,
}

impl Objective for StateObjective<'_> {
    type Info = DiscreteEnergyReport;

    fn dim(&self) -> usize {
        self.dofs.len()
    }

    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Option<(f64, DiscreteEnergyReport)> {
        let st = self.dofs.scatter(x, &self.base);
        let (report, g) = self.asm.energy_and_gradient(&st).ok()?;
        grad.copy_from_slice(&self.dofs.restrict(&g));
        report.total.is_finite().then_some((report.total, report))
    }
}

pub(crate) fn trace_from<I>(
    result: &LbfgsResult<I>,
    report: impl Fn(&I) -> &DiscreteEnergyReport,
) -> Vec<TraceEntry> {
    result
        .trace
        .iter()
        .enumerate()
        .map(|(k, it)| TraceEntry {
            iteration: k,
            step: it.step,
            ..TraceEntry::from_report(report(&it.info))
        })
        .collect()
}

pub(crate) fn solve_with_dofs(
    asm: &Assembler<'_>,
    dofs: &DofMap,
    state0: &DeformationState,
    config: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    let (mesh, chart) = (asm.mesh(), asm.chart());
    feasibility_report(state0, mesh, chart).ensure()?;
    let mut obj = StateObjective {
        asm,
        dofs,
        base: state0.clone(),
    };
    let x0 = dofs.gather(state0);
    let result = lbfgs(&mut obj, &x0, &config.lbfgs(mesh.spacing()))
        .ok_or_else(|| Error::Infeasible("initial state could not be assembled".into()))?;
    let state = dofs.scatter(&result.x, state0);
    let nodes = realize(&state, mesh, chart)?;
    Ok(SolveReport {
        resolution: mesh.resolution(),
        trace: trace_from(&result, |r| r),
        termination: result.reason,
        iterations: result.iterations(),
        energy: result.last().info.clone(),
        feasibility: feasibility_report(&state, mesh, chart),
        initial_gradient_norm: result.initial_gradient_norm,
        gradient_norm: result.gradient_norm,
        recovery: None,
        level_energies: vec![result.last().value],
        landmark_snaps: Vec::new(),
        state,
        nodes,
    })
}

/// Quasi-Newton descent from a feasible `state0`; corner nodes stay pinned.
pub fn minimize(
    model: &EnergyModel,
    p1: &Image,
    p2: &Image,
    mesh: &TriMesh,
    chart: &BoundaryChart,
    config: &SolverConfig,
    state0: &DeformationState,
) -> Result<SolveReport> {
    let asm = Assembler::new(model, p1, p2, mesh, chart, config.h2_weight)?;
    solve_with_dofs(&asm, &DofMap::new(mesh), state0, config)
}

/// Evaluates the piecewise-affine map of `coarse` at the nodes of `fine`.
/// Boundary parameters are interpolated along the chart between consecutive
/// coarse boundary nodes.
pub fn prolong(
    coarse_mesh: &TriMesh,
    coarse: &DeformationState,
    fine_mesh: &TriMesh,
    chart: &BoundaryChart,
) -> Result<DeformationState> {
    let y = realize(coarse, coarse_mesh, chart)?;
    let (cx, cy) = coarse_mesh.resolution();
    let (fx, fy) = fine_mesh.resolution();
    let at = |u: f64, v: f64| {
        let (su, sv) = (u * (cx - 1) as f64, v * (cy - 1) as f64);
        let i = (su.floor() as usize).min(cx - 2);
        let j = (sv.floor() as usize).min(cy - 2);
        let (r, s) = (su - i as f64, sv - j as f64);
        let n = |a: usize, b: usize| y[coarse_mesh.node_index(a, b)];
        let (ya, yb, yc, yd) = (n(i, j), n(i + 1, j), n(i + 1, j + 1), n(i, j + 1));
        if r >= s {
            ya + (yb - ya) * r + (yc - yb) * s
        } else {
            ya + (yd - ya) * s + (yc - yd) * r
        }
    };
    let local = |i: usize, j: usize| (i as f64 / (fx - 1) as f64, j as f64 / (fy - 1) as f64);
    let interior = fine_mesh
        .interior_nodes()
        .iter()
        .map(|&n| {
            let (u, v) = local(n % fx, n / fx);
            at(u, v)
        })
        .collect();

    let l = chart.perimeter();
    let cb = &coarse.boundary;
    let ccorners = coarse_mesh.corner_positions();
    let seg = [cx - 1, cy - 1, cx - 1, cy - 1];
    let boundary = (0..fine_mesh.boundary_nodes().len())
        .map(|b| {
            let (side, frac) = fine_mesh.boundary_side(b);
            if frac == 0.0 {
                return chart.corner_param(side);
            }
            let scaled = frac * seg[side] as f64;
            let k = (scaled.floor() as usize).min(seg[side] - 1);
            let r = scaled - k as f64;
            let p = ccorners[side] + k;
            let t0 = cb[p];
            let t1 = if p + 1 == cb.len() {
                cb[0] + l
            } else {
                cb[p + 1]
            };
            t0 + r * (t1 - t0)
        })
        .collect();
    Ok(DeformationState { interior, boundary })
}

/// Mesh resolutions of a `levels`-deep pyramid ending at `nx × ny`; each
/// coarser level halves the cell count while that keeps at least 2 nodes.
pub fn pyramid(nx: usize, ny: usize, levels: usize) -> Vec<(usize, usize)> {
    let mut out = vec![(nx, ny)];
    for _ in 1..levels {
        let (px, py) = *out.last().unwrap();
        let (qx, qy) = ((px - 1).div_ceil(2) + 1, (py - 1).div_ceil(2) + 1);
        if (qx, qy) == (px, py) {
            break;
        }
        out.push((qx.max(2), qy.max(2)));
    }
    out.reverse();
    out
}

/// Coarse-to-fine solve starting from the frame-affine map on the coarsest
/// level of [`pyramid`]. Raster inputs are blurred on every level but the
/// last by [`SolverConfig::coarse_smoothing`] mesh spacings, so coarse
/// meshes fit the features they can resolve.
pub fn minimize_multiresolution(
    model: &EnergyModel,
    p1: &Image,
    p2: &Image,
    resolution: (usize, usize),
    config: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    let chart = BoundaryChart::new(p2.domain());
    let mut previous: Option<(TriMesh, DeformationState)> = None;
    let mut level_energies = Vec::new();
    let mut last = None;
    let levels = pyramid(resolution.0, resolution.1, config.levels);
    let finest = levels.len() - 1;
    for (k, (nx, ny)) in levels.into_iter().enumerate() {
        let mesh = build_mesh(p1.domain(), nx, ny)?;
        let seed = match &previous {
            Some((cm, cs)) => {
                let s = prolong(cm, cs, &mesh, &chart)?;
                if feasibility_report(&s, &mesh, &chart).is_feasible() {
                    s
                } else {
                    initial_guess(&mesh, &chart)
                }
            }
            None => initial_guess(&mesh, &chart),
        };
        let report = if k == finest || config.coarse_smoothing == 0.0 {
            minimize(model, p1, p2, &mesh, &chart, config, &seed)?
        } else {
            // the finer axis sets the width
            let sigma = config.coarse_smoothing / (nx.max(ny) - 1) as f64;
            minimize(
                model,
                &p1.smoothed(sigma),
                &p2.smoothed(sigma),
                &mesh,
                &chart,
                config,
                &seed,
            )?
        };
        level_energies.push(report.final_energy());
        previous = Some((mesh, report.state.clone()));
        last = Some(report);
    }
    let mut report = last.expect("pyramid has at least one level");
    report.level_energies = level_energies;
    Ok(report)
}
