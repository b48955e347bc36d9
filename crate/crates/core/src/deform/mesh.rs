use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Domain2;
use crate::linalg::{det, from_columns, inverse, Mat2, Vec2};

/// Positively oriented triangle soup with precomputed reference geometry.
#[derive(Debug, Clone, Serialize)]
pub struct Triangulation {
    nodes: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    areas: Vec<f64>,
    /// Inverse of `[x_b − x_a, x_c − x_a]` per triangle.
    ref_inv: Vec<Mat2>,
}

impl Triangulation {
    pub fn new(nodes: Vec<Vec2>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut areas = Vec::with_capacity(triangles.len());
        let mut ref_inv = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nodes.len()) {
                return Err(Error::InvalidInput(format!(
                    "triangle {t} references a missing node"
                )));
            }
            let x = edge_matrix(&nodes, tri);
            let d = det(&x);
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "triangle {t} is not positively oriented (det = {d:e})"
                )));
            }
            areas.push(0.5 * d);
            ref_inv.push(inverse(&x));
        }
        Ok(Self {
            nodes,
            triangles,
            areas,
            ref_inv,
        })
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn area(&self, t: usize) -> f64 {
        self.areas[t]
    }

    pub fn total_area(&self) -> f64 {
        self.areas.iter().sum()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// `Dy` on triangle `t` for nodal images `y`.
    pub fn gradient(&self, t: usize, y: &[Vec2]) -> Mat2 {
        edge_matrix(y, &self.triangles[t]) * self.ref_inv[t]
    }

    pub(crate) fn ref_inv(&self, t: usize) -> &Mat2 {
        &self.ref_inv[t]
    }

    /// Longest edge of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let p = &self.nodes;
        (p[b] - p[a])
            .norm()
            .max((p[c] - p[b]).norm())
            .max((p[a] - p[c]).norm())
    }
}

pub(crate) fn edge_matrix(p: &[Vec2], tri: &[usize; 3]) -> Mat2 {
    let [a, b, c] = *tri;
    from_columns(p[b] - p[a], p[c] - p[a])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeKind {
    /// Index into the interior-node list.
    Interior(usize),
    /// Position in the boundary cycle.
    Boundary(usize),
}

/// Edge shared by two triangles, with the weight `|e| / h_e` of its
/// gradient jump (`h_e` is the mean diameter of the two triangles).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct InteriorEdge {
    pub nodes: [usize; 2],
    pub triangles: [usize; 2],
    pub weight: f64,
}

/// Structured grid of `nx × ny` nodes on a parallelogram domain. Node `(i, j)`
/// has index `j·nx + i` and sits at local coordinates `(i/(nx−1), j/(ny−1))`.
/// Each cell is split along its `(i, j)–(i+1, j+1)` diagonal.
#[derive(Debug, Clone, Serialize)]
pub struct TriMesh {
    domain: Domain2,
    nx: usize,
    ny: usize,
    tri: Triangulation,
    kinds: Vec<NodeKind>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    /// Side index and fraction along that side, per boundary position.
    boundary_sides: Vec<(usize, f64)>,
    corners: [usize; 4],
    edges: Vec<InteriorEdge>,
}

pub fn build_mesh(domain: &Domain2, nx: usize, ny: usize) -> Result<TriMesh> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidInput(format!(
            "mesh resolution {nx}×{ny} is too small (need at least 2 nodes per side)"
        )));
    }
    let node = |i: usize, j: usize| j * nx + i;
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            nodes.push(domain.from_local(i as f64 / (nx - 1) as f64, j as f64 / (ny - 1) as f64));
        }
    }
    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (a, b, c, d) = (
                node(i, j),
                node(i + 1, j),
                node(i + 1, j + 1),
                node(i, j + 1),
            );
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let tri = Triangulation::new(nodes, triangles)?;

    let (fx, fy) = ((nx - 1) as f64, (ny - 1) as f64);
    let mut boundary = Vec::new();
    let mut boundary_sides = Vec::new();
    for i in 0..nx - 1 {
        boundary.push(node(i, 0));
        boundary_sides.push((0, i as f64 / fx));
    }
    for j in 0..ny - 1 {
        boundary.push(node(nx - 1, j));
        boundary_sides.push((1, j as f64 / fy));
    }
    for i in (1..nx).rev() {
        boundary.push(node(i, ny - 1));
        boundary_sides.push((2, (nx - 1 - i) as f64 / fx));
    }
    for j in (1..ny).rev() {
        boundary.push(node(0, j));
        boundary_sides.push((3, (ny - 1 - j) as f64 / fy));
    }
    let corners = [0, nx - 1, nx - 1 + ny - 1, 2 * (nx - 1) + ny - 1];

    let mut kinds = vec![NodeKind::Interior(usize::MAX); nx * ny];
    for (b, &n) in boundary.iter().enumerate() {
        kinds[n] = NodeKind::Boundary(b);
    }
    let mut interior = Vec::new();
    for (n, kind) in kinds.iter_mut().enumerate() {
        if let NodeKind::Interior(k) = kind {
            *k = interior.len();
            interior.push(n);
        }
    }

    let mut owners: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (t, tr) in tri.triangles().iter().enumerate() {
        for k in 0..3 {
            let (p, q) = (tr[k], tr[(k + 1) % 3]);
            owners.entry((p.min(q), p.max(q))).or_default().push(t);
        }
    }
    let mut edges = Vec::new();
    let mut boundary_edges = 0;
    for ((p, q), ts) in owners {
        match ts.as_slice() {
            [t0, t1] => {
                let len = (tri.nodes()[q] - tri.nodes()[p]).norm();
                let h = 0.5 * (tri.diameter(*t0) + tri.diameter(*t1));
                edges.push(InteriorEdge {
                    nodes: [p, q],
                    triangles: [*t0, *t1],
                    weight: len / h,
                });
            }
            [_] => boundary_edges += 1,
            _ => unreachable!("structured grid edges have one or two owners"),
        }
    }
    debug_assert_eq!(boundary_edges, boundary.len());

    Ok(TriMesh {
        domain: *domain,
        nx,
        ny,
        tri,
        kinds,
        interior,
        boundary,
        boundary_sides,
        corners,
        edges,
    })
}

impl TriMesh {
    pub fn domain(&self) -> &Domain2 {
        &self.domain
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn triangulation(&self) -> &Triangulation {
        &self.tri
    }

    pub fn nodes(&self) -> &[Vec2] {
        self.tri.nodes()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        self.tri.triangles()
    }

    pub fn num_nodes(&self) -> usize {
        self.tri.num_nodes()
    }

    pub fn num_triangles(&self) -> usize {
        self.tri.num_triangles()
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn kind(&self, node: usize) -> NodeKind {
        self.kinds[node]
    }

    /// Node indices of interior nodes, in increasing order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior
    }

    /// Node indices of boundary nodes in cyclic order, starting at node `(0, 0)`.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    /// Boundary positions of the four corners.
    pub fn corner_positions(&self) -> [usize; 4] {
        self.corners
    }

    pub fn is_corner_position(&self, b: usize) -> bool {
        self.corners.contains(&b)
    }

    /// Side (0..4) and fraction along that side for boundary position `b`.
    pub fn boundary_side(&self, b: usize) -> (usize, f64) {
        self.boundary_sides[b]
    }

    pub fn interior_edges(&self) -> &[InteriorEdge] {
        &self.edges
    }

    /// Cell edge lengths in the reference domain.
    pub fn spacing(&self) -> f64 {
        (self.domain.width() / (self.nx - 1) as f64)
            .max(self.domain.height() / (self.ny - 1) as f64)
    }

    /// Nearest node to `x`.
    pub fn nearest_node(&self, x: Vec2) -> usize {
        let l = self.domain.to_local(x);
        let i = (l.x * (self.nx - 1) as f64)
            .round()
            .clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = (l.y * (self.ny - 1) as f64)
            .round()
            .clamp(0.0, (self.ny - 1) as f64) as usize;
        self.node_index(i, j)
    }
}
