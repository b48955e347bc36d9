//! Piecewise-affine maps `y: Ω1 → Ω2` on a triangulated grid with sliding boundary nodes.

mod assemble;
mod chart;
mod mesh;
mod state;

pub use assemble::{
    assemble_energy, assemble_gradient, integrate, second_gradient_at_nodes,
    second_gradient_energy, Assembler, DiscreteEnergyReport, ElementContribution, NodalAssembly,
};
pub use chart::BoundaryChart;
pub use mesh::{build_mesh, InteriorEdge, NodeKind, TriMesh, Triangulation};
pub use state::{
    feasibility_report, initial_guess, polygon_area, realize, DeformationState, DofGradient,
    DofMap, FeasibilityReport,
};
