//! Property tests for the pointwise, geometric and discrete invariants.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use elastreg::deform::{
    build_mesh, feasibility_report, initial_guess, polygon_area, realize, second_gradient_at_nodes,
    BoundaryChart, DeformationState, DofMap,
};
use elastreg::energy::{ElasticParams, EnergyModel, MismatchForm, MismatchParams};
use elastreg::image::{transform_image, AffineMap2, Domain2, Image, Raster};
use elastreg::linalg::{det, inverse, mat2, rotation, vec2, Mat2, Vec2};
use elastreg::verification::fixtures::asymmetric_image;
use elastreg::verification::random_feasible_state;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

/// `R(θ1) diag(e^{l1}, e^{l2}) R(θ2)`.
fn matrix(l1: f64, l2: f64, t1: f64, t2: f64) -> Mat2 {
    rotation(t1) * mat2(l1.exp(), 0.0, 0.0, l2.exp()) * rotation(t2)
}

fn any_matrix(log_range: f64) -> impl Strategy<Value = Mat2> {
    (
        -log_range..log_range,
        -log_range..log_range,
        -3.2..3.2f64,
        -3.2..3.2f64,
    )
        .prop_map(|(a, b, c, d)| matrix(a, b, c, d))
}

fn intensity() -> impl Strategy<Value = f64> {
    0.0..1.0f64
}

fn model(form: MismatchForm) -> EnergyModel {
    EnergyModel::new(
        ElasticParams::default(),
        MismatchParams::new(form, 1.0).unwrap(),
    )
}

fn form() -> impl Strategy<Value = MismatchForm> {
    prop_oneof![Just(MismatchForm::Weighted), Just(MismatchForm::Density)]
}

/// Parallelogram with origin in `[-1, 1]²`, edges of length in `[0.5, 2]`
/// and an angle between them in `[0.6, π − 0.6]`.
fn domain() -> impl Strategy<Value = Domain2> {
    (
        -1.0..1.0f64,
        -1.0..1.0f64,
        0.5..2.0f64,
        0.5..2.0f64,
        -3.2..3.2f64,
        0.6..2.5f64,
    )
        .prop_map(|(x, y, a, b, phi, gap)| {
            let e1 = vec2(phi.cos(), phi.sin()) * a;
            let e2 = vec2((phi + gap).cos(), (phi + gap).sin()) * b;
            Domain2::from_frame(vec2(x, y), Mat2::from_columns(&[e1, e2])).unwrap()
        })
}

fn affine() -> impl Strategy<Value = AffineMap2> {
    (any_matrix(0.7), -1.0..1.0f64, -1.0..1.0f64)
        .prop_map(|(m, x, y)| AffineMap2::new(m, vec2(x, y)))
}

fn frobenius(a: &Mat2) -> f64 {
    a.norm()
}

proptest! {
    #![proptest_config(config(256))]

    #[test]
    fn raster_sampling_stays_within_sample_range(
        data in prop::collection::vec(0.0..1.0f64, 12),
        u in 0.0..1.0f64,
        v in 0.0..1.0f64,
    ) {
        let raster = Raster::new(4, 3, 1, data.clone()).unwrap();
        let img = Image::from_raster(Domain2::rect(vec2(0.3, -0.2), 2.0, 1.5).unwrap(), raster).unwrap();
        let c = img.sample(img.domain().from_local(u, v)).unwrap().as_slice()[0];
        let lo = data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(c >= lo - 1e-15 && c <= hi + 1e-15, "{c} outside [{lo}, {hi}]");
    }

    #[test]
    fn transform_is_functorial_and_invertible(t1 in affine(), t2 in affine(), u in 0.0..1.0f64, v in 0.0..1.0f64) {
        let p = asymmetric_image(Domain2::unit(), 1).unwrap();
        let twice = transform_image(&transform_image(&p, &t1).unwrap(), &t2).unwrap();
        let once = transform_image(&p, &t2.compose(&t1)).unwrap();
        let x = once.domain().from_local(u, v);
        let (a, b) = (twice.sample(x).unwrap(), once.sample(x).unwrap());
        prop_assert!((a.as_slice()[0] - b.as_slice()[0]).abs() <= 1e-12);

        let back = transform_image(&transform_image(&p, &t1).unwrap(), &t1.inverse().unwrap()).unwrap();
        let x = p.domain().from_local(u, v);
        let (a, b) = (back.sample(x).unwrap(), p.sample(x).unwrap());
        prop_assert!((a.as_slice()[0] - b.as_slice()[0]).abs() <= 1e-12);
    }

    #[test]
    fn psi_is_isotropic(
        c1 in intensity(), c2 in intensity(), a in any_matrix(3.0),
        q in -3.2..3.2f64, r in -3.2..3.2f64, f in form(),
    ) {
        let m = model(f);
        let psi = m.psi(&[c1], &[c2], &a).unwrap();
        let rotated = m.psi(&[c1], &[c2], &(rotation(q) * a * rotation(r))).unwrap();
        prop_assert!((psi - rotated).abs() <= 1e-12 * (1.0 + psi), "{psi} vs {rotated}");
    }

    #[test]
    fn psi_interchange_symmetry(c1 in intensity(), c2 in intensity(), a in any_matrix(2.0), f in form()) {
        let m = model(f);
        let lhs = m.psi(&[c1], &[c2], &a).unwrap();
        let rhs = det(&a) * m.psi(&[c2], &[c1], &inverse(&a)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs), "{lhs} vs {rhs}");
    }

    #[test]
    fn conformal_energy_is_h_of_det(l in -3.0..3.0f64, q in -3.2..3.2f64) {
        let p = ElasticParams::default();
        let lambda = l.exp();
        let psi = p.stored_energy(&(rotation(q) * lambda)).unwrap();
        let h = p.big_h(lambda * lambda);
        prop_assert!((psi - h).abs() <= 1e-12 * (1.0 + h.abs()), "{psi} vs {h}");
    }

    #[test]
    fn stored_energy_is_nonnegative(a in any_matrix(3.0)) {
        let psi = ElasticParams::default().stored_energy(&a).unwrap();
        prop_assert!(psi >= -1e-12 * (1.0 + psi.abs()), "{psi}");
    }

    #[test]
    fn psi_gradient_matches_central_differences(
        c1 in intensity(), c2 in intensity(),
        l1 in -1.5..1.5f64, l2 in -1.5..1.5f64, t1 in -3.2..3.2f64, t2 in -3.2..3.2f64,
        equal in any::<bool>(), f in form(),
    ) {
        let a = matrix(l1, if equal { l1 } else { l2 }, t1, t2);
        let m = model(f);
        let g = m.psi_grad_a(&[c1], &[c2], &a).unwrap();
        let h = 1e-6 * frobenius(&a);
        let mut fd = Mat2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                let (mut ap, mut am) = (a, a);
                ap[(i, j)] += h;
                am[(i, j)] -= h;
                fd[(i, j)] = (m.psi(&[c1], &[c2], &ap).unwrap() - m.psi(&[c1], &[c2], &am).unwrap()) / (2.0 * h);
            }
        }
        let err = frobenius(&(fd - g)) / (1.0 + frobenius(&g));
        prop_assert!(err <= 1e-5, "relative error {err:e} at v1 = v2: {equal}");
    }

    #[test]
    fn volumetric_and_mismatch_are_convex_in_det(
        d in -4.0..4.0f64, s in 1e-3..0.5f64, c1 in intensity(), c2 in intensity(), f in form(),
    ) {
        let p = ElasticParams::default();
        let mm = MismatchParams::new(f, 1.0).unwrap();
        let d = d.exp();
        let (lo, hi) = (d * (-s).exp(), d * s.exp());
        // second divided difference on the non-uniform stencil (lo, d, hi)
        let second = |g: &dyn Fn(f64) -> f64| {
            let (hl, hh) = (d - lo, hi - d);
            2.0 * (g(lo) * hh + g(hi) * hl - g(d) * (hl + hh)) / (hl * hh * (hl + hh))
        };
        let big_h = |x: f64| p.big_h(x);
        let mis = |x: f64| mm.eval(&[c1], &[c2], x).unwrap();
        let sh = second(&big_h) * (d - lo) * (hi - d) / (1.0 + big_h(d).abs());
        let sm = second(&mis) * (d - lo) * (hi - d) / (1.0 + mis(d).abs());
        prop_assert!(sh >= -1e-10 && sm >= -1e-10, "H: {sh:e}, f: {sm:e}");
    }
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn affine_states_reproduce_the_map_exactly(d1 in domain(), t in affine(), n in 3usize..8) {
        let d2 = d1.transformed(&t).unwrap();
        let mesh = build_mesh(&d1, n, n + 1).unwrap();
        let chart = BoundaryChart::new(&d2);
        let y = realize(&initial_guess(&mesh, &chart), &mesh, &chart).unwrap();
        let tri = mesh.triangulation();
        let scale = 1.0 + frobenius(&t.linear);
        for k in 0..mesh.num_triangles() {
            prop_assert!(frobenius(&(tri.gradient(k, &y) - t.linear)) <= 1e-12 * scale);
        }
    }

    #[test]
    fn quadrature_is_exact_for_affine_states(d1 in domain(), t in affine(), n in 3usize..7) {
        let p1 = asymmetric_image(d1, 1).unwrap();
        let p2 = transform_image(&p1, &t).unwrap();
        let mesh = build_mesh(&d1, n, n).unwrap();
        let chart = BoundaryChart::new(p2.domain());
        let m = EnergyModel::new(ElasticParams::default(), MismatchParams::new(MismatchForm::Weighted, 0.0).unwrap());
        let r = elastreg::deform::assemble_energy(&m, &p1, &p2, &mesh, &chart, &initial_guess(&mesh, &chart)).unwrap();
        let exact = d1.area() * ElasticParams::default().stored_energy(&t.linear).unwrap();
        prop_assert!((r.elastic - exact).abs() <= 1e-12 * exact.abs().max(1e-300) + 1e-14, "{} vs {exact}", r.elastic);
    }

    #[test]
    fn discrete_area_identity_and_jensen(seed in any::<u64>(), lambda in 0.5..2.5f64, amp in 0.01..0.2f64) {
        let d1 = Domain2::unit();
        let d2 = d1.transformed(&AffineMap2::scaling(lambda)).unwrap();
        let mesh = build_mesh(&d1, 7, 7).unwrap();
        let chart = BoundaryChart::new(&d2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = random_feasible_state(&mesh, &chart, &initial_guess(&mesh, &chart), &mut rng, amp * lambda);
        prop_assert!(feasibility_report(&st, &mesh, &chart).is_feasible());
        let y = realize(&st, &mesh, &chart).unwrap();
        let tri = mesh.triangulation();
        let dets: Vec<(f64, f64)> = (0..mesh.num_triangles()).map(|k| (tri.area(k), det(&tri.gradient(k, &y)))).collect();
        let swept: f64 = dets.iter().map(|(a, d)| a * d).sum();
        let outline: Vec<Vec2> = mesh.boundary_nodes().iter().map(|&k| y[k]).collect();
        prop_assert!((swept - polygon_area(&outline)).abs() <= 1e-10);

        let p = ElasticParams::default();
        let area = tri.total_area();
        let mean_h: f64 = dets.iter().map(|(a, d)| a * p.big_h(*d)).sum::<f64>() / area;
        prop_assert!(mean_h >= p.big_h(swept / area) - 1e-10);
    }

    #[test]
    fn second_gradient_ignores_added_affine_maps(seed in any::<u64>(), t in affine(), w in 0.01..10.0f64) {
        let d1 = Domain2::unit();
        let mesh = build_mesh(&d1, 6, 5).unwrap();
        let chart = BoundaryChart::new(&d1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let st = random_feasible_state(&mesh, &chart, &initial_guess(&mesh, &chart), &mut rng, 0.05);
        let y = realize(&st, &mesh, &chart).unwrap();
        let shifted: Vec<Vec2> = y.iter().zip(mesh.nodes()).map(|(p, x)| p + t.apply(*x)).collect();
        let (a, b) = (second_gradient_at_nodes(&mesh, &y, w), second_gradient_at_nodes(&mesh, &shifted, w));
        prop_assert!((a - b).abs() <= 1e-10 * (1.0 + a), "{a} vs {b}");
    }

    #[test]
    fn chart_projection_inverts_evaluation(d in domain(), s in 0.0..1.0f64) {
        let chart = BoundaryChart::new(&d);
        let t = s * chart.perimeter();
        let back = chart.project(chart.point(t));
        let l = chart.perimeter();
        let gap = (back - t).abs().min(l - (back - t).abs());
        prop_assert!(gap <= 1e-10 * l, "{t} -> {back}");
    }

    #[test]
    fn dof_gather_scatter_round_trip(seed in any::<u64>(), nx in 3usize..8, ny in 3usize..8) {
        let d = Domain2::rect(Vec2::zeros(), 1.5, 1.0).unwrap();
        let mesh = build_mesh(&d, nx, ny).unwrap();
        let chart = BoundaryChart::new(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = initial_guess(&mesh, &chart);
        let st = random_feasible_state(&mesh, &chart, &base, &mut rng, 0.05);
        let dofs = DofMap::new(&mesh);
        let back: DeformationState = dofs.scatter(&dofs.gather(&st), &base);
        prop_assert_eq!(back, st);
    }
}
