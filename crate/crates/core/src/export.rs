//! Artifact writers: deformation and trace CSVs, JSON reports, pullback
//! warps and template overlays.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::deform::{DeformationState, NodeKind, TriMesh};
use crate::error::{Error, Result};
use crate::image::{Domain2, Image, Raster};
use crate::linalg::{det, from_columns, inverse, Vec2};
use crate::solver::TraceEntry;

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?).map_err(|e| Error::io(path, e))
}

/// One row per node: reference position, image position, boundary flag and
/// chart parameter (empty for interior nodes).
pub fn write_deformation_csv(
    path: &Path,
    mesh: &TriMesh,
    state: &DeformationState,
    nodes: &[Vec2],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "ref_x", "ref_y", "image_x", "image_y", "boundary", "chart_t",
    ])?;
    for (n, (x, y)) in mesh.nodes().iter().zip(nodes).enumerate() {
        let (flag, t) = match mesh.kind(n) {
            NodeKind::Boundary(b) => ("1", state.boundary[b].to_string()),
            NodeKind::Interior(_) => ("0", String::new()),
        };
        w.write_record([
            x.x.to_string(),
            x.y.to_string(),
            y.x.to_string(),
            y.y.to_string(),
            flag.to_string(),
            t,
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_trace_csv(path: &Path, trace: &[TraceEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in trace {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Point location in the deformed mesh through a uniform bucket grid.
struct Locator<'a> {
    mesh: &'a TriMesh,
    nodes: &'a [Vec2],
    lo: Vec2,
    cell: Vec2,
    dims: (usize, usize),
    buckets: Vec<Vec<usize>>,
}

impl<'a> Locator<'a> {
    fn new(mesh: &'a TriMesh, nodes: &'a [Vec2]) -> Self {
        let (mut lo, mut hi) = (nodes[0], nodes[0]);
        for p in nodes {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let side = ((mesh.num_triangles() as f64).sqrt().ceil() as usize).max(1);
        let dims = (side, side);
        let span = (hi - lo).map(|v| v.max(f64::MIN_POSITIVE));
        let cell = Vec2::new(span.x / side as f64, span.y / side as f64);
        let mut buckets = vec![Vec::new(); side * side];
        let mut loc = Self {
            mesh,
            nodes,
            lo,
            cell,
            dims,
            buckets: Vec::new(),
        };
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let (mut a, mut b) = (nodes[tri[0]], nodes[tri[0]]);
            for &k in &tri[1..] {
                a = a.inf(&nodes[k]);
                b = b.sup(&nodes[k]);
            }
            let (i0, j0) = loc.bucket(a);
            let (i1, j1) = loc.bucket(b);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * side + i].push(t);
                }
            }
        }
        loc.buckets = buckets;
        loc
    }

    fn bucket(&self, p: Vec2) -> (usize, usize) {
        let f = |v: f64, c: f64, n: usize| (((v / c).floor()).max(0.0) as usize).min(n - 1);
        let d = p - self.lo;
        (
            f(d.x, self.cell.x, self.dims.0),
            f(d.y, self.cell.y, self.dims.1),
        )
    }

    /// Reference point mapped to `p`; outside the deformed mesh, the triangle
    /// with the least negative barycentric coordinate is extrapolated.
    fn preimage(&self, p: Vec2) -> Vec2 {
        let (i, j) = self.bucket(p);
        let candidates = &self.buckets[j * self.dims.0 + i];
        let candidate = |t: usize| -> Option<(f64, Vec2)> {
            let tri = self.mesh.triangles()[t];
            let (a, b, c) = (self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]);
            let m = from_columns(b - a, c - a);
            if det(&m) <= 0.0 {
                return None;
            }
            let l = inverse(&m) * (p - a);
            let x = self.mesh.nodes();
            let r = x[tri[0]] + (x[tri[1]] - x[tri[0]]) * l.x + (x[tri[2]] - x[tri[0]]) * l.y;
            Some((l.x.min(l.y).min(1.0 - l.x - l.y), r))
        };
        let pick = |best: Option<(f64, Vec2)>, c: Option<(f64, Vec2)>| match (best, c) {
            (Some(b), Some(c)) if c.0 > b.0 => Some(c),
            (None, c) => c,
            (b, _) => b,
        };
        let mut best = candidates.iter().map(|&t| candidate(t)).fold(None, pick);
        if best.is_none_or(|(s, _)| s < -1e-9) {
            best = (0..self.mesh.num_triangles())
                .map(candidate)
                .fold(best, pick);
        }
        best.map(|(_, r)| r).unwrap_or(p)
    }
}

/// `P1 ∘ y⁻¹` sampled at the pixel centres of a `width × height` raster on
/// `target`, locating each centre in the deformed mesh.
pub fn warp_pullback(
    p1: &Image,
    mesh: &TriMesh,
    nodes: &[Vec2],
    target: &Domain2,
    width: usize,
    height: usize,
) -> Result<Raster> {
    let loc = Locator::new(mesh, nodes);
    let m = p1.channels();
    let mut data = vec![0.0; width * height * m];
    for j in 0..height {
        for i in 0..width {
            let p = target.from_local(
                (i as f64 + 0.5) / width as f64,
                (j as f64 + 0.5) / height as f64,
            );
            let c = p1.sample(loc.preimage(p))?;
            let base = (j * width + i) * m;
            data[base..base + m].copy_from_slice(c.as_slice());
        }
    }
    Raster::new(width, height, m, data)
}

/// Rasterizes `image` on its own domain.
pub fn render(image: &Image, width: usize, height: usize) -> Result<Raster> {
    let d = *image.domain();
    let m = image.channels();
    let mut data = vec![0.0; width * height * m];
    for j in 0..height {
        for i in 0..width {
            let c = image.sample(d.from_local(
                (i as f64 + 0.5) / width as f64,
                (j as f64 + 0.5) / height as f64,
            ))?;
            let base = (j * width + i) * m;
            data[base..base + m].copy_from_slice(c.as_slice());
        }
    }
    Raster::new(width, height, m, data)
}

/// Draws the closed polygon `outline` (world coordinates) into `raster`,
/// which covers `domain`. Grey rasters get white lines, colour rasters red.
pub fn draw_overlay(raster: &Raster, domain: &Domain2, outline: &[Vec2]) -> Result<Raster> {
    let (w, h, m) = (raster.width(), raster.height(), raster.channels());
    let mut data = raster.data().to_vec();
    let colour: &[f64] = if m == 3 { &[1.0, 0.0, 0.0] } else { &[1.0] };
    for k in 0..outline.len() {
        let (a, b) = (
            domain.to_local(outline[k]),
            domain.to_local(outline[(k + 1) % outline.len()]),
        );
        let (pa, pb) = (
            Vec2::new(a.x * w as f64, a.y * h as f64),
            Vec2::new(b.x * w as f64, b.y * h as f64),
        );
        let steps = ((pb - pa).amax().ceil() as usize * 2).max(1);
        for s in 0..=steps {
            let p = pa + (pb - pa) * (s as f64 / steps as f64);
            let (i, j) = (p.x.floor(), p.y.floor());
            if i >= 0.0 && j >= 0.0 && (i as usize) < w && (j as usize) < h {
                let base = (j as usize * w + i as usize) * m;
                data[base..base + m].copy_from_slice(colour);
            }
        }
    }
    Raster::new(w, h, m, data)
}
