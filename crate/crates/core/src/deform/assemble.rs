use rayon::prelude::*;
use serde::Serialize;

use super::chart::BoundaryChart;
use super::mesh::{InteriorEdge, TriMesh, Triangulation};
use super::state::{feasibility_report, DeformationState, DofGradient};
use crate::energy::{ConformalSplit, EnergyModel};
use crate::error::{Error, Result};
use crate::image::{Image, Intensity};
use crate::linalg::{cofactor, det, Mat2, Vec2};

const WORST_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ElementContribution {
    pub triangle: usize,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteEnergyReport {
    pub total: f64,
    pub elastic: f64,
    pub mismatch: f64,
    pub second_gradient: f64,
    pub min_det: f64,
    /// Largest per-triangle contributions of `ψ`, in decreasing order.
    pub worst: Vec<ElementContribution>,
}

/// Energy report together with `∂E/∂y_i` for every node.
#[derive(Debug, Clone)]
pub struct NodalAssembly {
    pub report: DiscreteEnergyReport,
    pub forces: Option<Vec<Vec2>>,
}

struct Element {
    dy: Mat2,
    det: f64,
    elastic: f64,
    mismatch: f64,
    /// Area-weighted `∂(elastic + mismatch)/∂Dy` at fixed intensities.
    stress: Mat2,
    /// Spatial mismatch force at each edge midpoint.
    midpoint: [Vec2; 3],
}

/// Intensity of `image` at the three edge midpoints of every triangle.
fn midpoint_intensities(image: &Image, tri: &Triangulation) -> Result<Vec<[Intensity; 3]>> {
    let x = tri.nodes();
    tri.triangles()
        .iter()
        .map(|t| {
            Ok([
                image.sample(0.5 * (x[t[0]] + x[t[1]]))?,
                image.sample(0.5 * (x[t[1]] + x[t[2]]))?,
                image.sample(0.5 * (x[t[2]] + x[t[0]]))?,
            ])
        })
        .collect()
}

fn element(
    model: &EnergyModel,
    p2: &Image,
    tri: &Triangulation,
    c1: &[Intensity; 3],
    y: &[Vec2],
    t: usize,
    with_forces: bool,
) -> Result<Element> {
    let dy = tri.gradient(t, y);
    let d = det(&dy);
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Infeasible(format!(
            "triangle {t} has det Dy = {d:e}"
        )));
    }
    let split = ConformalSplit::new(&dy)?;
    let area = tri.area(t);
    let nodes = tri.triangles()[t];
    let elastic = area * model.elastic.stored_energy_split(&split);
    let mut mismatch = 0.0;
    let mut d_delta = 0.0;
    let mut midpoint = [Vec2::zeros(); 3];
    for q in 0..3 {
        let yq = 0.5 * (y[nodes[q]] + y[nodes[(q + 1) % 3]]);
        let c1q = c1[q].as_slice();
        if with_forces {
            let (c2, g2) = p2.sample_with_gradient(yq);
            mismatch += model.mismatch.eval_unchecked(c1q, c2.as_slice(), d);
            let (dc2, dd) = model.mismatch.grad_unchecked(c1q, c2.as_slice(), d);
            d_delta += dd;
            midpoint[q] = (0..c2.channels())
                .map(|k| g2[k] * dc2[k])
                .fold(Vec2::zeros(), |a, b| a + b)
                * (area / 3.0);
        } else {
            let c2 = p2.sample(yq)?;
            mismatch += model.mismatch.eval_unchecked(c1q, c2.as_slice(), d);
        }
    }
    mismatch *= area / 3.0;
    let stress = if with_forces {
        (model.elastic.stored_energy_grad_split(&dy, &split) + cofactor(&dy) * (d_delta / 3.0))
            * area
    } else {
        Mat2::zeros()
    };
    Ok(Element {
        dy,
        det: d,
        elastic,
        mismatch,
        stress,
        midpoint,
    })
}

/// Spreads `∂E/∂Dy` on triangle `t` onto its vertices.
fn scatter_stress(tri: &Triangulation, t: usize, g: &Mat2, forces: &mut [Vec2]) {
    let [a, b, c] = tri.triangles()[t];
    let e = g * tri.ref_inv(t).transpose();
    let (fb, fc) = (e.column(0).into_owned(), e.column(1).into_owned());
    forces[b] += fb;
    forces[c] += fc;
    forces[a] -= fb + fc;
}

fn assemble_nodes(
    model: &EnergyModel,
    p2: &Image,
    tri: &Triangulation,
    c1: &[[Intensity; 3]],
    y: &[Vec2],
    h2: Option<(&[InteriorEdge], f64)>,
    with_forces: bool,
) -> Result<NodalAssembly> {
    if y.len() != tri.num_nodes() {
        return Err(Error::InvalidInput(format!(
            "{} nodal images for {} nodes",
            y.len(),
            tri.num_nodes()
        )));
    }
    let results: Vec<Result<Element>> = (0..tri.num_triangles())
        .into_par_iter()
        .map(|t| element(model, p2, tri, &c1[t], y, t, with_forces))
        .collect();
    let elements = results.into_iter().collect::<Result<Vec<_>>>()?;

    let (mut elastic, mut mismatch, mut min_det) = (0.0, 0.0, f64::INFINITY);
    for e in &elements {
        elastic += e.elastic;
        mismatch += e.mismatch;
        min_det = min_det.min(e.det);
    }
    let mut extra = if with_forces && h2.is_some() {
        vec![Mat2::zeros(); elements.len()]
    } else {
        Vec::new()
    };
    let mut second_gradient = 0.0;
    if let Some((edges, w)) = h2.filter(|(_, w)| *w > 0.0) {
        for edge in edges {
            let [tp, tm] = edge.triangles;
            let jump = elements[tp].dy - elements[tm].dy;
            second_gradient += w * edge.weight * jump.norm_squared();
            if with_forces {
                let g = jump * (2.0 * w * edge.weight);
                extra[tp] += g;
                extra[tm] -= g;
            }
        }
    }

    let mut order: Vec<usize> = (0..elements.len()).collect();
    let contribution = |t: usize| elements[t].elastic + elements[t].mismatch;
    order.sort_by(|&a, &b| contribution(b).total_cmp(&contribution(a)).then(a.cmp(&b)));
    let worst = order
        .iter()
        .take(WORST_COUNT)
        .map(|&t| ElementContribution {
            triangle: t,
            energy: contribution(t),
        })
        .collect();

    let forces = with_forces.then(|| {
        let mut f = vec![Vec2::zeros(); tri.num_nodes()];
        for (t, e) in elements.iter().enumerate() {
            let g = if extra.is_empty() {
                e.stress
            } else {
                e.stress + extra[t]
            };
            scatter_stress(tri, t, &g, &mut f);
            let nodes = tri.triangles()[t];
            for q in 0..3 {
                let half = e.midpoint[q] * 0.5;
                f[nodes[q]] += half;
                f[nodes[(q + 1) % 3]] += half;
            }
        }
        f
    });

    Ok(NodalAssembly {
        report: DiscreteEnergyReport {
            total: elastic + mismatch + second_gradient,
            elastic,
            mismatch,
            second_gradient,
            min_det,
            worst,
        },
        forces,
    })
}

/// Energy (and optionally nodal forces) of the map `x_i ↦ y_i` on an arbitrary
/// triangulation, with `c1` sampled at reference edge midpoints.
pub fn integrate(
    model: &EnergyModel,
    p1: &Image,
    p2: &Image,
    tri: &Triangulation,
    y: &[Vec2],
    with_forces: bool,
) -> Result<NodalAssembly> {
    check_channels(p1, p2)?;
    let c1 = midpoint_intensities(p1, tri)?;
    assemble_nodes(model, p2, tri, &c1, y, None, with_forces)
}

fn check_channels(p1: &Image, p2: &Image) -> Result<()> {
    if p1.channels() != p2.channels() {
        return Err(Error::InvalidInput(format!(
            "images have {} and {} channels",
            p1.channels(),
            p2.channels()
        )));
    }
    Ok(())
}

/// Energy assembly for a fixed problem, caching the reference intensities.
#[derive(Debug)]
pub struct Assembler<'a> {
    model: &'a EnergyModel,
    p2: &'a Image,
    mesh: &'a TriMesh,
    chart: &'a BoundaryChart,
    h2_weight: f64,
    c1: Vec<[Intensity; 3]>,
}

impl<'a> Assembler<'a> {
    pub fn new(
        model: &'a EnergyModel,
        p1: &Image,
        p2: &'a Image,
        mesh: &'a TriMesh,
        chart: &'a BoundaryChart,
        h2_weight: f64,
    ) -> Result<Self> {
        check_channels(p1, p2)?;
        if !(h2_weight >= 0.0) || !h2_weight.is_finite() {
            return Err(Error::InvalidParams(format!(
                "second-gradient weight must be finite and ≥ 0, got {h2_weight}"
            )));
        }
        Ok(Self {
            model,
            p2,
            mesh,
            chart,
            h2_weight,
            c1: midpoint_intensities(p1, mesh.triangulation())?,
        })
    }

    pub fn mesh(&self) -> &TriMesh {
        self.mesh
    }

    pub fn chart(&self) -> &BoundaryChart {
        self.chart
    }

    pub fn model(&self) -> &EnergyModel {
        self.model
    }

    /// Assembly at raw nodal images; only orientation is checked.
    pub fn at_nodes(&self, y: &[Vec2], with_forces: bool) -> Result<NodalAssembly> {
        let h2 = (self.h2_weight > 0.0).then(|| (self.mesh.interior_edges(), self.h2_weight));
        assemble_nodes(
            self.model,
            self.p2,
            self.mesh.triangulation(),
            &self.c1,
            y,
            h2,
            with_forces,
        )
    }

    fn nodal_state(&self, state: &DeformationState) -> Result<Vec<Vec2>> {
        feasibility_report(state, self.mesh, self.chart).ensure()?;
        super::realize(state, self.mesh, self.chart)
    }

    pub fn energy(&self, state: &DeformationState) -> Result<DiscreteEnergyReport> {
        let y = self.nodal_state(state)?;
        Ok(self.at_nodes(&y, false)?.report)
    }

    pub fn energy_and_gradient(
        &self,
        state: &DeformationState,
    ) -> Result<(DiscreteEnergyReport, DofGradient)> {
        let y = self.nodal_state(state)?;
        let NodalAssembly { report, forces } = self.at_nodes(&y, true)?;
        let forces = forces.expect("forces requested");
        Ok((report, self.forces_to_state(state, &forces)))
    }

    /// Chain rule through the chart: boundary entries are forces dotted with
    /// the chart tangent.
    pub fn forces_to_state(&self, state: &DeformationState, forces: &[Vec2]) -> DofGradient {
        DofGradient {
            interior: self
                .mesh
                .interior_nodes()
                .iter()
                .map(|&n| forces[n])
                .collect(),
            boundary: self
                .mesh
                .boundary_nodes()
                .iter()
                .enumerate()
                .map(|(b, &n)| forces[n].dot(&self.chart.tangent(state.boundary[b])))
                .collect(),
        }
    }
}

pub fn assemble_energy(
    model: &EnergyModel,
    p1: &Image,
    p2: &Image,
    mesh: &TriMesh,
    chart: &BoundaryChart,
    state: &DeformationState,
) -> Result<DiscreteEnergyReport> {
    Assembler::new(model, p1, p2, mesh, chart, 0.0)?.energy(state)
}

pub fn assemble_gradient(
    model: &EnergyModel,
    p1: &Image,
    p2: &Image,
    mesh: &TriMesh,
    chart: &BoundaryChart,
    state: &DeformationState,
) -> Result<DofGradient> {
    Ok(Assembler::new(model, p1, p2, mesh, chart, 0.0)?
        .energy_and_gradient(state)?
        .1)
}

/// `w·Σ_e (|e|/h_e)·|Dy|_{T+} − Dy|_{T−}|²` for nodal images `y`.
pub fn second_gradient_at_nodes(mesh: &TriMesh, y: &[Vec2], weight: f64) -> f64 {
    let tri = mesh.triangulation();
    mesh.interior_edges()
        .iter()
        .map(|e| {
            let jump = tri.gradient(e.triangles[0], y) - tri.gradient(e.triangles[1], y);
            weight * e.weight * jump.norm_squared()
        })
        .sum()
}

pub fn second_gradient_energy(
    mesh: &TriMesh,
    chart: &BoundaryChart,
    state: &DeformationState,
    weight: f64,
) -> Result<f64> {
    feasibility_report(state, mesh, chart).ensure()?;
    let y = super::realize(state, mesh, chart)?;
    Ok(second_gradient_at_nodes(mesh, &y, weight))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::{build_mesh, initial_guess, realize};
    use crate::image::{synthetic_image, transform_image, AffineMap2, Domain2};
    use crate::linalg::{mat2, vec2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blob(d: &Domain2) -> Image {
        synthetic_image("smooth-blob", *d, 1).unwrap()
    }

    #[test]
    fn identity_on_equal_images_is_zero() {
        let d = Domain2::unit();
        let (mesh, chart) = (build_mesh(&d, 9, 9).unwrap(), BoundaryChart::new(&d));
        let p = blob(&d);
        let model = EnergyModel::default();
        let st = initial_guess(&mesh, &chart);
        let r = assemble_energy(&model, &p, &p, &mesh, &chart, &st).unwrap();
        assert_eq!(r.total, 0.0);
        let g = assemble_gradient(&model, &p, &p, &mesh, &chart, &st).unwrap();
        let free = crate::deform::DofMap::new(&mesh).restrict(&g);
        assert!(crate::linalg::inf_norm(&free) <= 1e-10);
    }

    #[test]
    fn uniform_scaling_energy_is_area_times_psi() {
        let d1 = Domain2::unit();
        let lambda = 2.0;
        let p1 = blob(&d1);
        let p2 = transform_image(&p1, &AffineMap2::scaling(lambda)).unwrap();
        let chart = BoundaryChart::new(p2.domain());
        let mesh = build_mesh(&d1, 9, 9).unwrap();
        let model = EnergyModel::default();
        let st = initial_guess(&mesh, &chart);
        let r = assemble_energy(&model, &p1, &p2, &mesh, &chart, &st).unwrap();
        assert!((r.total - 36.75).abs() < 1e-12 * 36.75, "{}", r.total);
        assert!(r.mismatch.abs() < 1e-12);
        assert!((r.total - (r.elastic + r.mismatch + r.second_gradient)).abs() <= 1e-12 * r.total);
        let g = assemble_gradient(&model, &p1, &p2, &mesh, &chart, &st).unwrap();
        let free = crate::deform::DofMap::new(&mesh).restrict(&g);
        assert!(
            crate::linalg::inf_norm(&free) <= 1e-8,
            "{}",
            crate::linalg::inf_norm(&free)
        );
    }

    fn random_state(
        mesh: &TriMesh,
        chart: &BoundaryChart,
        rng: &mut ChaCha8Rng,
        amp: f64,
    ) -> DeformationState {
        let mut st = initial_guess(mesh, chart);
        let h = mesh.spacing();
        for p in st.interior.iter_mut() {
            *p += vec2(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * amp * h;
        }
        for (b, t) in st.boundary.iter_mut().enumerate() {
            if !mesh.is_corner_position(b) {
                *t += rng.gen_range(-1.0..1.0) * amp * h;
            }
        }
        st
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let d1 = Domain2::unit();
        let p1 = synthetic_image("smooth-blob", d1, 3).unwrap();
        let p2 = transform_image(
            &p1,
            &AffineMap2::new(mat2(1.1, 0.2, -0.1, 0.9), vec2(0.05, -0.02)),
        )
        .unwrap();
        let chart = BoundaryChart::new(p2.domain());
        let mesh = build_mesh(&d1, 6, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for model in [
            EnergyModel::default(),
            EnergyModel::new(
                Default::default(),
                crate::energy::MismatchParams::new(crate::energy::MismatchForm::Density, 3.0)
                    .unwrap(),
            ),
        ] {
            let st = random_state(&mesh, &chart, &mut rng, 0.2);
            let asm = Assembler::new(&model, &p1, &p2, &mesh, &chart, 0.3).unwrap();
            let (_, g) = asm.energy_and_gradient(&st).unwrap();
            let e = |s: &DeformationState| asm.energy(s).unwrap().total;
            let eps = 1e-6;
            for k in 0..st.interior.len() {
                for c in 0..2 {
                    let (mut sp, mut sm) = (st.clone(), st.clone());
                    sp.interior[k][c] += eps;
                    sm.interior[k][c] -= eps;
                    let fd = (e(&sp) - e(&sm)) / (2.0 * eps);
                    let an = g.interior[k][c];
                    assert!(
                        (fd - an).abs() <= 1e-5 * (1.0 + an.abs()),
                        "interior {k}: {fd} vs {an}"
                    );
                }
            }
            for b in 0..st.boundary.len() {
                if mesh.is_corner_position(b) {
                    continue;
                }
                let (mut sp, mut sm) = (st.clone(), st.clone());
                sp.boundary[b] += eps;
                sm.boundary[b] -= eps;
                let fd = (e(&sp) - e(&sm)) / (2.0 * eps);
                let an = g.boundary[b];
                assert!(
                    (fd - an).abs() <= 1e-5 * (1.0 + an.abs()),
                    "boundary {b}: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn boundary_scalar_is_force_along_tangent() {
        let d = Domain2::unit();
        let p1 = blob(&d);
        let p2 = transform_image(&p1, &AffineMap2::rotation_about(0.2, d.center())).unwrap();
        let chart = BoundaryChart::new(p2.domain());
        let mesh = build_mesh(&d, 5, 5).unwrap();
        let model = EnergyModel::default();
        let st = random_state(&mesh, &chart, &mut ChaCha8Rng::seed_from_u64(3), 0.15);
        let asm = Assembler::new(&model, &p1, &p2, &mesh, &chart, 0.0).unwrap();
        let y = realize(&st, &mesh, &chart).unwrap();
        let f = asm.at_nodes(&y, true).unwrap().forces.unwrap();
        let g = asm.energy_and_gradient(&st).unwrap().1;
        for (b, &n) in mesh.boundary_nodes().iter().enumerate() {
            let expect = f[n].dot(&chart.tangent(st.boundary[b]));
            assert_eq!(g.boundary[b], expect);
        }
    }

    #[test]
    fn area_identity_and_jensen() {
        let d1 = Domain2::unit();
        let d2 = Domain2::rect(vec2(0.0, 0.0), 1.5, 1.5).unwrap();
        let chart = BoundaryChart::new(&d2);
        let mesh = build_mesh(&d1, 8, 8).unwrap();
        let params = crate::energy::ElasticParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let tri = mesh.triangulation();
        for _ in 0..200 {
            let st = random_state(&mesh, &chart, &mut rng, 0.25);
            let y = realize(&st, &mesh, &chart).unwrap();
            let dets: Vec<f64> = (0..tri.num_triangles())
                .map(|t| det(&tri.gradient(t, &y)))
                .collect();
            if dets.iter().any(|&d| d <= 0.0) {
                continue;
            }
            let image_area: f64 = dets.iter().enumerate().map(|(t, d)| tri.area(t) * d).sum();
            let poly: Vec<Vec2> = mesh.boundary_nodes().iter().map(|&n| y[n]).collect();
            assert!((image_area - super::super::polygon_area(&poly)).abs() < 1e-10);
            let mean_h: f64 = dets
                .iter()
                .enumerate()
                .map(|(t, &d)| tri.area(t) * params.big_h(d))
                .sum();
            assert!(mean_h >= params.big_h(image_area) - 1e-10);
        }
    }

    #[test]
    fn infeasible_states_are_reported() {
        let d = Domain2::unit();
        let (mesh, chart) = (build_mesh(&d, 4, 4).unwrap(), BoundaryChart::new(&d));
        let p = blob(&d);
        let mut st = initial_guess(&mesh, &chart);
        st.interior[0] = vec2(0.9, 0.9);
        let r = assemble_energy(&EnergyModel::default(), &p, &p, &mesh, &chart, &st);
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn second_gradient_properties() {
        let d = Domain2::unit();
        let mesh = build_mesh(&d, 9, 9).unwrap();
        let x = mesh.nodes();
        let m = mat2(1.2, 0.3, -0.4, 0.8);
        let affine: Vec<Vec2> = x.iter().map(|p| m * p + vec2(0.3, -1.0)).collect();
        assert!(second_gradient_at_nodes(&mesh, &affine, 1.0) < 1e-24);

        let node = mesh.node_index(4, 4);
        let bump = |eps: f64| {
            let mut y = x.to_vec();
            y[node].x += eps;
            second_gradient_at_nodes(&mesh, &y, 1.0)
        };
        let ratio = bump(1e-3) / bump(5e-4);
        assert!((ratio - 4.0).abs() < 1e-9, "{ratio}");

        // adding an affine map leaves the value unchanged
        let q = |p: &Vec2| vec2(p.x * p.x + 0.5 * p.x * p.y, p.y * p.y - p.x);
        let base: Vec<Vec2> = x.iter().map(q).collect();
        let shifted: Vec<Vec2> = x.iter().map(|p| q(p) + m * p).collect();
        let (a, b) = (
            second_gradient_at_nodes(&mesh, &base, 1.0),
            second_gradient_at_nodes(&mesh, &shifted, 1.0),
        );
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn second_gradient_converges_under_refinement() {
        let q = |p: &Vec2| vec2(p.x * p.x + 0.5 * p.x * p.y, p.y * p.y - p.x);
        let values: Vec<f64> = [9, 17, 33, 65]
            .iter()
            .map(|&n| {
                let mesh = build_mesh(&Domain2::unit(), n, n).unwrap();
                let y: Vec<Vec2> = mesh.nodes().iter().map(q).collect();
                second_gradient_at_nodes(&mesh, &y, 1.0)
            })
            .collect();
        let (a, b) = (values[2], values[3]);
        assert!((a - b).abs() <= 0.05 * b, "{values:?}");
    }

    #[test]
    fn assembly_is_bitwise_deterministic() {
        let d = Domain2::unit();
        let p1 = synthetic_image("checker", d, 1).unwrap();
        let p2 = transform_image(&p1, &AffineMap2::rotation_about(0.3, d.center())).unwrap();
        let chart = BoundaryChart::new(p2.domain());
        let mesh = build_mesh(&d, 17, 17).unwrap();
        let st = random_state(&mesh, &chart, &mut ChaCha8Rng::seed_from_u64(5), 0.1);
        let model = EnergyModel::default();
        let asm = Assembler::new(&model, &p1, &p2, &mesh, &chart, 0.1).unwrap();
        let a = asm.energy_and_gradient(&st).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool.install(|| asm.energy_and_gradient(&st).unwrap());
        assert_eq!(a.0.total.to_bits(), b.0.total.to_bits());
        assert_eq!(a.1, b.1);
    }
}
