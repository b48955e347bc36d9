use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::fixtures::asymmetric_image;
use super::{Bound, Certificate, Check, ExperimentId, ExperimentSpec};
use crate::deform::{
    build_mesh, feasibility_report, initial_guess, integrate, realize, Assembler, BoundaryChart,
    DeformationState, DofMap, TriMesh, Triangulation,
};
use crate::energy::{
    cauchy_stress, certify_coercivity, svd::distance_to_rotations, CoercivityConstants,
    ElasticFamily, EnergyModel, MismatchForm, MismatchParams,
};
use crate::error::Result;
use crate::export::{warp_pullback, write_deformation_csv, write_json, write_trace_csv};
use crate::image::{pnm::write_raster, transform_image, AffineMap2, Domain2, Image};
use crate::linalg::{det, frobenius, inf_norm, inverse, mat2, rotation, vec2, Mat2, Vec2};
use crate::solver::{minimize, SolveReport, SolverConfig};

/// Regression floor for the scale-normalized sliding gradient of the
/// singular-value energy at `y = Mx`, `M = [[1, 1], [0, 1]]`. Frozen at about
/// 90% of the first measured value.
pub const SHEAR_THRESHOLD: f64 = 0.53;

/// Intensity gap and distance to `SO(2)` that `ψ < MATCH_PSI` must rule out.
const MATCH_PSI: f64 = 1e-6;
const MATCH_INTENSITY: f64 = 1e-3;
const MATCH_ROTATION: f64 = 1e-2;
const INTERCHANGE_DISCRETE: f64 = 2e-2;
const JENSEN_EQUALITY_GAP: f64 = 1e-6;
const JENSEN_EQUALITY_DEVIATION: f64 = 1e-4;
const JENSEN_LAMBDA: f64 = 2.0;
const SCALES: [f64; 3] = [0.75, 1.5, 2.0];
const RIGID_ENERGY_RATIO: f64 = 1e-8;
const FLUID_MIN_SEPARATION: f64 = 1e-2;
const SEED_AMPLITUDE: f64 = 0.03;
const H2_SCHEDULE: [f64; 2] = [1e-1, 1e-2];

pub(super) fn run(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    match spec.id {
        ExperimentId::Isotropy => isotropy(spec, model),
        ExperimentId::Matching => matching(spec, model),
        ExperimentId::Interchange => interchange(spec, model),
        ExperimentId::Coercivity => coercivity(spec, model),
        ExperimentId::JensenScaling => jensen(spec, model),
        ExperimentId::ScalingRecovery => scaling_recovery(spec, model),
        ExperimentId::RigidRecovery => rigid_recovery(spec, model),
        ExperimentId::ShearNonstationarity => shear(spec, model),
        ExperimentId::FluidDegeneracy => fluid_degeneracy(spec, model),
        ExperimentId::Gradcheck => gradcheck(spec, model),
        ExperimentId::SecondGradientRecovery => second_gradient(spec, model),
        ExperimentId::StressFormula => stress_formula(spec, model),
    }
}

fn rng(spec: &ExperimentSpec, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(spec.seed);
    r.set_stream(stream);
    r
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..=hi.ln()).exp()
}

fn random_rotation(rng: &mut impl Rng) -> Mat2 {
    rotation(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI))
}

/// `Q diag(v1, v2) R` with log-uniform singular values in `[lo, hi]`.
fn random_matrix(rng: &mut impl Rng, lo: f64, hi: f64) -> Mat2 {
    let (v1, v2) = (log_uniform(rng, lo, hi), log_uniform(rng, lo, hi));
    random_rotation(rng) * mat2(v1, 0.0, 0.0, v2) * random_rotation(rng)
}

fn with_family(model: &EnergyModel, family: ElasticFamily) -> EnergyModel {
    EnergyModel::new(model.elastic.with_family(family), model.mismatch)
}

fn with_weight(model: &EnergyModel, weight: f64) -> Result<EnergyModel> {
    Ok(EnergyModel::new(
        model.elastic.clone(),
        MismatchParams::new(model.mismatch.form, weight)?,
    ))
}

fn isotropy(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    let mut rng = rng(spec, 1);
    let mut worst = 0.0f64;
    for _ in 0..spec.samples {
        let a = random_matrix(&mut rng, 0.1, 10.0);
        let (q, r) = (random_rotation(&mut rng), random_rotation(&mut rng));
        let (c1, c2): (f64, f64) = (rng.gen(), rng.gen());
        let psi = model.psi(&[c1], &[c2], &a)?;
        let turned = model.psi(&[c1], &[c2], &(q * a * r))?;
        worst = worst.max((psi - turned).abs() / (1.0 + psi.abs()));
    }
    Ok(Certificate::new(
        spec,
        model,
        vec![Check::at_most(
            "max |ψ(QAR) − ψ(A)| / (1 + ψ)",
            worst,
            spec.tolerance,
        )],
    ))
}

fn matching(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    let mut rng = rng(spec, 2);
    let mut on_rotations = 0.0f64;
    for _ in 0..spec.samples {
        let c: f64 = rng.gen();
        on_rotations = on_rotations.max(model.psi(&[c], &[c], &random_rotation(&mut rng))?);
    }

    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    let stretches = [
        0.5, 0.9, 0.99, 0.995, 0.999, 1.0, 1.001, 1.005, 1.01, 1.1, 2.0,
    ];
    let angles = [(0.0, 0.0), (0.7, -1.1), (2.0, 0.3)];
    let mut pairs = Vec::new();
    for &c1 in &levels {
        for d in [0.0, 5e-4, -5e-4, 2e-3, -2e-3, 0.25, 0.5, 1.0] {
            let c2: f64 = c1 + d;
            if (0.0..=1.0).contains(&c2) {
                pairs.push((c1, c2));
            }
        }
    }
    let (mut violations, mut grid, mut far_min) = (0usize, 0usize, f64::INFINITY);
    for &(phi, chi) in &angles {
        for &s1 in &stretches {
            for &s2 in &stretches {
                let a = rotation(phi) * mat2(s1, 0.0, 0.0, s2) * rotation(chi);
                let dist = distance_to_rotations(&a)?;
                for &(c1, c2) in &pairs {
                    grid += 1;
                    let psi = model.psi(&[c1], &[c2], &a)?;
                    let far = (c1 - c2).abs() >= MATCH_INTENSITY || dist >= MATCH_ROTATION;
                    if far {
                        far_min = far_min.min(psi);
                        if psi < MATCH_PSI {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    let mut cert = Certificate::new(
        spec,
        model,
        vec![
            Check::at_most(
                "max ψ(c, c, Q) over random rotations",
                on_rotations,
                spec.tolerance,
            ),
            Check::at_most(
                "grid samples with ψ < 1e-6 but |c1 − c2| ≥ 1e-3 or dist(A, SO(2)) ≥ 1e-2",
                violations as f64,
                0.0,
            ),
        ],
    );
    cert.notes.push(format!(
        "grid size {grid}; min ψ over separated grid samples {far_min:e}"
    ));
    Ok(cert)
}

fn interchange(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    let mut checks = Vec::new();
    for (k, form) in [MismatchForm::Weighted, MismatchForm::Density]
        .into_iter()
        .enumerate()
    {
        let m = EnergyModel::new(
            model.elastic.clone(),
            MismatchParams::new(form, model.mismatch.weight)?,
        );
        let mut rng = rng(spec, 10 + k as u64);
        let mut worst = 0.0f64;
        for _ in 0..spec.samples {
            let a = random_matrix(&mut rng, 0.2, 5.0);
            let (c1, c2): (f64, f64) = (rng.gen(), rng.gen());
            let lhs = m.psi(&[c1], &[c2], &a)?;
            let rhs = det(&a) * m.psi(&[c2], &[c1], &inverse(&a))?;
            worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        }
        checks.push(Check::at_most(
            format!("form {form}: max |ψ(c1,c2,A) − det A·ψ(c2,c1,A⁻¹)| / (1 + ψ)"),
            worst,
            spec.tolerance,
        ));
    }

    // discrete form: I_{P1,P2}(y) against I_{P2,P1}(y⁻¹) on the pushed-forward mesh
    let p1 = asymmetric_image(Domain2::unit(), 1)?;
    let map = AffineMap2::new(mat2(1.2, 0.1, -0.05, 0.9), vec2(0.1, 0.0));
    let p2 = transform_image(&p1, &map)?;
    let n = spec.resolution;
    let mesh = build_mesh(p1.domain(), n, n)?;
    let chart = BoundaryChart::new(p2.domain());
    let state = smooth_seed(&mesh, &chart, &map, &mut rng(spec, 12), 0.05);
    let y = realize(&state, &mesh, &chart)?;
    let forward = integrate(model, &p1, &p2, mesh.triangulation(), &y, false)?
        .report
        .total;
    let pushed = Triangulation::new(y, mesh.triangles().to_vec())?;
    let backward = integrate(model, &p2, &p1, &pushed, mesh.nodes(), false)?
        .report
        .total;
    checks.push(Check::at_most(
        format!("{n}×{n} mesh: |I(P1,P2)(y) − I(P2,P1)(y⁻¹)| / I(P1,P2)(y)"),
        (forward - backward).abs() / forward.abs(),
        INTERCHANGE_DISCRETE,
    ));
    Ok(Certificate::new(spec, model, checks))
}

fn coercivity(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    let sv = with_family(model, ElasticFamily::SingularValue);
    let constants = CoercivityConstants::for_params(&sv.elastic);
    let a = certify_coercivity(&sv, constants, spec.samples, 1, spec.seed)?;
    let fluid = with_family(model, ElasticFamily::Fluid);
    let b = certify_coercivity(&fluid, constants, spec.samples, 1, spec.seed)?;
    let mut cert = Certificate::new(
        spec,
        model,
        vec![
            Check::at_least(
                "singular-value family: worst margin",
                a.worst_margin,
                -spec.tolerance,
            ),
            Check::at_least(
                "singular-value family: worst margin of ψ ≥ C1 (det A)^(1−p/n) − C0",
                a.worst_det_bound_margin,
                -spec.tolerance,
            ),
            Check::at_least(
                "Hadamard bound on cof A: worst relative margin",
                a.worst_hadamard_margin,
                -1e-15,
            ),
            Check::new(
                "fluid family: worst margin (must fail)",
                b.worst_margin,
                Bound::Below,
                0.0,
            ),
        ],
    );
    cert.notes.push(format!(
        "C = {}, p = {}, C0 = {}, C1 = {}; singular-value worst matrix {:?}",
        constants.c, constants.p, constants.c0, a.c1, a.worst_matrix
    ));
    Ok(cert)
}

fn stress_formula(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    let fluid = model.elastic.with_family(ElasticFamily::Fluid);
    let sv = model.elastic.with_family(ElasticFamily::SingularValue);
    let mut rng = rng(spec, 3);
    let (mut fluid_worst, mut sv_worst) = (0.0f64, 0.0f64);
    for _ in 0..spec.samples {
        let m = random_matrix(&mut rng, 0.5, 2.0);
        let s = cauchy_stress(&fluid, &m)?;
        let d = det(&m);
        let expect = Mat2::identity() * (fluid.big_h_prime(d) * d);
        fluid_worst = fluid_worst.max(frobenius(&(s.stress - expect)));
        let conformal = random_rotation(&mut rng) * log_uniform(&mut rng, 0.5, 2.0);
        sv_worst = sv_worst.max(cauchy_stress(&sv, &conformal)?.deviation);
    }
    let shear = cauchy_stress(&sv, &mat2(1.0, 1.0, 0.0, 1.0))?.deviation;
    Ok(Certificate::new(
        spec,
        model,
        vec![
            Check::at_most(
                "fluid: max |DΨ(M)Mᵀ − H'(det M) det M·1|",
                fluid_worst,
                spec.tolerance,
            ),
            Check::at_most(
                "singular-value at λQ: max spherical deviation",
                sv_worst,
                spec.tolerance,
            ),
            Check::new(
                "singular-value at [[1,1],[0,1]]: spherical deviation",
                shear,
                Bound::Above,
                1e-3,
            ),
        ],
    ))
}

/// Perturbs every non-corner DOF of `base` by up to `amplitude` (boundary
/// parameters along the chart), halving the amplitude until the state is
/// feasible. Returns `base` if no feasible amplitude is found.
pub fn random_feasible_state(
    mesh: &TriMesh,
    chart: &BoundaryChart,
    base: &DeformationState,
    rng: &mut impl Rng,
    amplitude: f64,
) -> DeformationState {
    let di: Vec<Vec2> = base
        .interior
        .iter()
        .map(|_| vec2(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)))
        .collect();
    let db: Vec<f64> = (0..base.boundary.len())
        .map(|b| {
            if mesh.is_corner_position(b) {
                0.0
            } else {
                rng.gen_range(-1.0..=1.0)
            }
        })
        .collect();
    let mut a = amplitude;
    for _ in 0..60 {
        let st = DeformationState {
            interior: base
                .interior
                .iter()
                .zip(&di)
                .map(|(p, d)| p + d * a)
                .collect(),
            boundary: base
                .boundary
                .iter()
                .zip(&db)
                .map(|(t, d)| t + d * a)
                .collect(),
        };
        if feasibility_report(&st, mesh, chart).is_feasible() {
            return st;
        }
        a *= 0.5;
    }
    base.clone()
}

/// `map` plus a random low-frequency displacement of size `amplitude·diam(Ω2)`
/// vanishing on ∂Ω1, with boundary nodes shifted smoothly along each side;
/// the amplitude is halved until the seed is feasible.
pub fn smooth_seed(
    mesh: &TriMesh,
    chart: &BoundaryChart,
    map: &AffineMap2,
    rng: &mut impl Rng,
    amplitude: f64,
) -> DeformationState {
    let base = DeformationState::from_map(mesh, chart, |x| map.apply(x));
    let diam = chart.domain().diameter();
    let modes: Vec<(f64, f64, Vec2)> = (0..3)
        .map(|_| {
            let p = rng.gen_range(1..=2) as f64;
            let q = rng.gen_range(1..=2) as f64;
            (
                p,
                q,
                vec2(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)),
            )
        })
        .collect();
    let shifts: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..=1.0));
    let pi = std::f64::consts::PI;
    let mut a = amplitude;
    for _ in 0..60 {
        let interior = mesh
            .interior_nodes()
            .iter()
            .zip(&base.interior)
            .map(|(&n, y)| {
                let l = mesh.domain().to_local(mesh.nodes()[n]);
                let d = modes
                    .iter()
                    .map(|(p, q, c)| c * ((p * pi * l.x).sin() * (q * pi * l.y).sin()))
                    .fold(Vec2::zeros(), |s, v| s + v);
                y + d * (a * diam)
            })
            .collect();
        let boundary = base
            .boundary
            .iter()
            .enumerate()
            .map(|(b, t)| {
                let (side, frac) = mesh.boundary_side(b);
                t + a * shifts[side] * (pi * frac).sin() * chart.side_length(side) / pi
            })
            .collect();
        let st = DeformationState { interior, boundary };
        if feasibility_report(&st, mesh, chart).is_feasible() {
            return st;
        }
        a *= 0.5;
    }
    base
}

fn gradcheck(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    let mut rng = rng(spec, 4);
    let mut pointwise = 0.0f64;
    for s in 0..spec.samples {
        let a = if s % 4 == 0 {
            random_rotation(&mut rng) * log_uniform(&mut rng, 0.3, 3.0)
        } else {
            random_matrix(&mut rng, 0.3, 3.0)
        };
        let (c1, c2): (f64, f64) = (rng.gen(), rng.gen());
        let g = model.psi_grad_a(&[c1], &[c2], &a)?;
        let mut fd = Mat2::zeros();
        let eps = 1e-6;
        for i in 0..2 {
            for j in 0..2 {
                let (mut ap, mut am) = (a, a);
                ap[(i, j)] += eps;
                am[(i, j)] -= eps;
                fd[(i, j)] =
                    (model.psi(&[c1], &[c2], &ap)? - model.psi(&[c1], &[c2], &am)?) / (2.0 * eps);
            }
        }
        pointwise = pointwise.max((fd - g).amax() / g.amax().max(1e-8));
    }

    // conformal M keeps v1 = v2 exactly on triangles the perturbation misses
    let p1 = asymmetric_image(Domain2::unit(), 1)?;
    let map = AffineMap2::new(rotation(0.2) * 1.1, vec2(0.05, -0.03));
    let p2 = transform_image(&p1, &map)?;
    let n = spec.resolution;
    let mesh = build_mesh(p1.domain(), n, n)?;
    let chart = BoundaryChart::new(p2.domain());
    let dofs = DofMap::new(&mesh);
    let base = initial_guess(&mesh, &chart);
    let mut assembled = 0.0f64;
    let mut equal_stretch_states = 0;
    for s in 0..spec.samples {
        let form = if s % 2 == 0 {
            MismatchForm::Weighted
        } else {
            MismatchForm::Density
        };
        let m = EnergyModel::new(
            model.elastic.clone(),
            MismatchParams::new(form, model.mismatch.weight.max(1.0))?,
        );
        let h2 = if s % 3 == 0 { 0.05 } else { 0.0 };
        let asm = Assembler::new(&m, &p1, &p2, &mesh, &chart, h2)?;
        let mut st = random_feasible_state(&mesh, &chart, &base, &mut rng, 0.2 * mesh.spacing());
        if s % 2 == 1 {
            // restore the left half so its triangles keep Dy = M
            for (k, &node) in mesh.interior_nodes().iter().enumerate() {
                if mesh.domain().to_local(mesh.nodes()[node]).x < 0.5 {
                    st.interior[k] = base.interior[k];
                }
            }
            equal_stretch_states += 1;
        }
        let g = dofs.restrict(&asm.energy_and_gradient(&st)?.1);
        let x = dofs.gather(&st);
        let eps = 1e-6;
        let mut err = 0.0f64;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += eps;
            xm[i] -= eps;
            let ep = asm.energy(&dofs.scatter(&xp, &st))?.total;
            let em = asm.energy(&dofs.scatter(&xm, &st))?.total;
            err = err.max(((ep - em) / (2.0 * eps) - g[i]).abs());
        }
        assembled = assembled.max(err / inf_norm(&g).max(1e-8));
    }
    let mut cert = Certificate::new(
        spec,
        model,
        vec![
            Check::at_most(
                "dψ/dA: max relative finite-difference error",
                pointwise,
                spec.tolerance,
            ),
            Check::at_most(
                format!(
                    "assembled DOF gradient on {n}×{n} mesh: max relative finite-difference error"
                ),
                assembled,
                spec.tolerance,
            ),
        ],
    );
    cert.notes.push(format!(
        "{equal_stretch_states} of {} assembled states contain triangles with v1 = v2",
        spec.samples
    ));
    Ok(cert)
}

fn jensen(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    let d1 = Domain2::unit();
    let d2 = Domain2::rect(Vec2::zeros(), JENSEN_LAMBDA, JENSEN_LAMBDA)?;
    let n = spec.resolution;
    let mesh = build_mesh(&d1, n, n)?;
    let chart = BoundaryChart::new(&d2);
    let base = initial_guess(&mesh, &chart);
    let tri = mesh.triangulation();
    let target = model
        .elastic
        .stored_energy(&(Mat2::identity() * JENSEN_LAMBDA))?;
    let h = mesh.spacing();
    let mut rng = rng(spec, 5);
    let (mut min_slack, mut near_dev, mut near_count) = (f64::INFINITY, 0.0f64, 0usize);
    for _ in 0..spec.samples {
        let amp = log_uniform(&mut rng, 1e-7, 1e-1) * h;
        let st = random_feasible_state(&mesh, &chart, &base, &mut rng, amp);
        let y = realize(&st, &mesh, &chart)?;
        let mut mean = 0.0;
        for t in 0..tri.num_triangles() {
            mean += tri.area(t) * model.elastic.stored_energy(&tri.gradient(t, &y))?;
        }
        mean /= tri.total_area();
        let slack = mean - target;
        min_slack = min_slack.min(slack);
        if slack < JENSEN_EQUALITY_GAP {
            near_count += 1;
            let dev = mesh
                .nodes()
                .iter()
                .zip(&y)
                .map(|(x, y)| (x * JENSEN_LAMBDA - y).norm())
                .fold(0.0, f64::max);
            near_dev = near_dev.max(dev);
        }
    }
    let mut cert = Certificate::new(
        spec,
        model,
        vec![
            Check::at_least(
                "min over states of mean elastic energy − Ψ(λ·1)",
                min_slack,
                -spec.tolerance,
            ),
            Check::at_most(
                "max nodal distance from λx among states with gap < 1e-6",
                near_dev,
                JENSEN_EQUALITY_DEVIATION,
            ),
        ],
    );
    cert.notes.push(format!(
        "λ = {JENSEN_LAMBDA}; {near_count} states within the equality gap"
    ));
    Ok(cert)
}

struct Recovery {
    report: SolveReport,
    mesh: TriMesh,
    initial_energy: f64,
}

fn recover(
    model: &EnergyModel,
    p1: &Image,
    p2: &Image,
    map: &AffineMap2,
    n: usize,
    config: &SolverConfig,
    rng: &mut impl Rng,
) -> Result<Recovery> {
    let mesh = build_mesh(p1.domain(), n, n)?;
    let chart = BoundaryChart::new(p2.domain());
    let seed = smooth_seed(&mesh, &chart, map, rng, SEED_AMPLITUDE);
    let mut report = minimize(model, p1, p2, &mesh, &chart, config, &seed)?;
    report.attach_recovery(&mesh, p2.domain().diameter(), |x| map.apply(x));
    Ok(Recovery {
        initial_energy: report.trace[0].total,
        report,
        mesh,
    })
}

fn write_run(
    dir: &Path,
    id: ExperimentId,
    prefix: &str,
    p1: &Image,
    p2: &Image,
    run: &Recovery,
) -> Result<Vec<String>> {
    let names = [
        format!("{prefix}-deformation.csv"),
        format!("{prefix}-trace.csv"),
        format!("{prefix}-report.json"),
        format!(
            "{prefix}-warped.{}",
            if p1.channels() == 1 { "pgm" } else { "ppm" }
        ),
    ];
    write_deformation_csv(
        &dir.join(&names[0]),
        &run.mesh,
        &run.report.state,
        &run.report.nodes,
    )?;
    write_trace_csv(&dir.join(&names[1]), &run.report.trace)?;
    write_json(&dir.join(&names[2]), &run.report)?;
    let warped = warp_pullback(p1, &run.mesh, &run.report.nodes, p2.domain(), 64, 64)?;
    write_raster(&dir.join(&names[3]), &warped)?;
    Ok(names.iter().map(|n| format!("{}/{n}", id.id())).collect())
}

fn run_note(label: &str, r: &SolveReport) -> String {
    format!(
        "{label}: {:?} after {} iterations, energy {:e}, min det {:e}",
        r.termination, r.iterations, r.energy.total, r.feasibility.min_det
    )
}

fn scaling_recovery(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    let dir = spec.artifacts()?;
    let p1 = asymmetric_image(Domain2::unit(), 1)?;
    let config = SolverConfig::default();
    let (mut checks, mut notes, mut artifacts) = (Vec::new(), Vec::new(), Vec::new());
    for (k, &lambda) in SCALES.iter().take(spec.samples).enumerate() {
        let map = AffineMap2::scaling(lambda);
        let p2 = transform_image(&p1, &map)?;
        let run = recover(
            model,
            &p1,
            &p2,
            &map,
            spec.resolution,
            &config,
            &mut rng(spec, 20 + k as u64),
        )?;
        let m = run.report.recovery.expect("recovery attached");
        checks.push(Check::at_most(
            format!("λ = {lambda}: max nodal deviation from λx / diam(Ω2)"),
            m.relative,
            spec.tolerance,
        ));
        notes.push(run_note(&format!("λ = {lambda}"), &run.report));
        if let Some(d) = &dir {
            artifacts.extend(write_run(
                d,
                spec.id,
                &format!("lambda-{lambda}"),
                &p1,
                &p2,
                &run,
            )?);
        }
    }
    let mut cert = Certificate::new(spec, model, checks);
    cert.notes = notes;
    cert.artifacts = artifacts;
    Ok(cert)
}

fn rigid_recovery(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    let p1 = asymmetric_image(Domain2::unit(), 1)?;
    let map = AffineMap2::rigid(0.3, vec2(0.25, -0.1));
    let p2 = transform_image(&p1, &map)?;
    let run = recover(
        model,
        &p1,
        &p2,
        &map,
        spec.resolution,
        &SolverConfig::default(),
        &mut rng(spec, 30),
    )?;
    let m = run.report.recovery.expect("recovery attached");
    let mut cert = Certificate::new(
        spec,
        model,
        vec![
            Check::at_most(
                "final energy / seed energy",
                run.report.final_energy() / run.initial_energy,
                RIGID_ENERGY_RATIO,
            ),
            Check::at_most(
                "max nodal deviation from the rigid map / diam(Ω2)",
                m.relative,
                spec.tolerance,
            ),
        ],
    );
    cert.notes.push(run_note(
        "rotation 0.3 rad + translation (0.25, -0.1)",
        &run.report,
    ));
    if let Some(d) = spec.artifacts()? {
        cert.artifacts = write_run(&d, spec.id, "rigid", &p1, &p2, &run)?;
    }
    Ok(cert)
}

/// `‖∇E(y = Mx)‖∞ / (h·|DΨ(M)|)` over the free DOFs, with zero mismatch weight.
fn sliding_gradient(model: &EnergyModel, m: &Mat2, n: usize) -> Result<f64> {
    let p1 = asymmetric_image(Domain2::unit(), 1)?;
    let p2 = transform_image(&p1, &AffineMap2::linear(*m))?;
    let mesh = build_mesh(p1.domain(), n, n)?;
    let chart = BoundaryChart::new(p2.domain());
    let asm = Assembler::new(model, &p1, &p2, &mesh, &chart, 0.0)?;
    let g = asm.energy_and_gradient(&initial_guess(&mesh, &chart))?.1;
    let scale = mesh.spacing() * frobenius(&model.elastic.stored_energy_grad(m)?);
    Ok(inf_norm(&DofMap::new(&mesh).restrict(&g)) / scale)
}

fn shear(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    let m = mat2(1.0, 1.0, 0.0, 1.0);
    let sv = with_weight(&with_family(model, ElasticFamily::SingularValue), 0.0)?;
    let fluid = with_weight(&with_family(model, ElasticFamily::Fluid), 0.0)?;
    let a = sliding_gradient(&sv, &m, spec.resolution)?;
    // H'(1) = 0 makes the fluid stress vanish at det M = 1; scale M to load it
    let b = sliding_gradient(&fluid, &(m * 1.2), spec.resolution)?;
    Ok(Certificate::new(
        spec,
        model,
        vec![
            Check::at_least(
                "singular-value: normalized sliding gradient at y = Mx",
                a,
                spec.tolerance,
            ),
            Check::at_most("fluid: normalized sliding gradient at y = 1.2·Mx", b, 1e-10),
        ],
    ))
}

/// Divergence-free swirl `±amplitude·curl(sin²πu sin²πv)` added to `map`.
fn swirl_seed(
    mesh: &TriMesh,
    chart: &BoundaryChart,
    map: &AffineMap2,
    amplitude: f64,
) -> DeformationState {
    let pi = std::f64::consts::PI;
    let mut st = DeformationState::from_map(mesh, chart, |x| map.apply(x));
    for (k, &n) in mesh.interior_nodes().iter().enumerate() {
        let l = mesh.domain().to_local(mesh.nodes()[n]);
        let (su, sv) = ((pi * l.x).sin(), (pi * l.y).sin());
        let d = vec2(
            su * su * 2.0 * pi * sv * (pi * l.y).cos(),
            -sv * sv * 2.0 * pi * su * (pi * l.x).cos(),
        );
        st.interior[k] += map.linear * d * amplitude;
    }
    st
}

fn fluid_degeneracy(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    let fluid = with_weight(&with_family(model, ElasticFamily::Fluid), 0.0)?;
    let p1 = asymmetric_image(Domain2::unit(), 1)?;
    let map = AffineMap2::scaling(1.5);
    let p2 = transform_image(&p1, &map)?;
    let n = spec.resolution;
    let mesh = build_mesh(p1.domain(), n, n)?;
    let chart = BoundaryChart::new(p2.domain());
    let config = SolverConfig::default();
    let mut runs = Vec::new();
    for k in 0..spec.samples.max(2) {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let amp = 0.02 * (1.0 + (k / 2) as f64);
        let seed = swirl_seed(&mesh, &chart, &map, sign * amp);
        runs.push(minimize(&fluid, &p1, &p2, &mesh, &chart, &config, &seed)?);
    }
    let energies: Vec<f64> = runs.iter().map(|r| r.final_energy()).collect();
    let (lo, hi) = energies
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &e| {
            (a.min(e), b.max(e))
        });
    let separation = runs[0]
        .nodes
        .iter()
        .zip(&runs[1].nodes)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let bound = mesh.triangulation().total_area()
        * fluid.elastic.big_h(p2.domain().area() / p1.domain().area());
    let mut cert = Certificate::new(
        spec,
        model,
        vec![
            Check::at_most(
                "relative spread of final energies",
                (hi - lo) / lo.abs(),
                spec.tolerance,
            ),
            Check::at_least(
                "max nodal distance between final maps",
                separation,
                FLUID_MIN_SEPARATION,
            ),
        ],
    );
    cert.notes
        .push(format!("Jensen lower bound |Ω1|·H(|Ω2|/|Ω1|) = {bound}"));
    for (k, r) in runs.iter().enumerate() {
        cert.notes.push(run_note(&format!("seed {k}"), r));
    }
    Ok(cert)
}

fn second_gradient(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    let fluid = with_family(model, ElasticFamily::Fluid);
    let p1 = asymmetric_image(Domain2::unit(), 1)?;
    let map = AffineMap2::linear(mat2(1.0, 0.3, 0.0, 1.0));
    let p2 = transform_image(&p1, &map)?;
    let n = spec.resolution;
    let mesh = build_mesh(p1.domain(), n, n)?;
    let chart = BoundaryChart::new(p2.domain());
    let mut state = smooth_seed(&mesh, &chart, &map, &mut rng(spec, 40), SEED_AMPLITUDE);
    let mut notes = Vec::new();
    let mut last = None;
    for w in H2_SCHEDULE {
        let config = SolverConfig {
            h2_weight: w,
            ..SolverConfig::default()
        };
        let mut r = minimize(&fluid, &p1, &p2, &mesh, &chart, &config, &state)?;
        r.attach_recovery(&mesh, p2.domain().diameter(), |x| map.apply(x));
        notes.push(format!(
            "{}; deviation / diam {:e}",
            run_note(&format!("h2 weight {w}"), &r),
            r.recovery.unwrap().relative
        ));
        state = r.state.clone();
        last = Some(r);
    }
    let r = last.expect("schedule is non-empty");
    let mut cert = Certificate::new(
        spec,
        model,
        vec![Check::at_most(
            "max nodal deviation from Mx / diam(Ω2), M = [[1, 0.3], [0, 1]]",
            r.recovery.unwrap().relative,
            spec.tolerance,
        )],
    );
    cert.notes = notes;
    cert.notes.push("exploratory: the linear-recovery property of the second-gradient model is conjectured, not proven".into());
    Ok(cert)
}
