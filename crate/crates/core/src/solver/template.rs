use serde::{Deserialize, Serialize};

use super::{lbfgs, trace_from, Objective, SolveReport, SolverConfig};
use crate::deform::{
    feasibility_report, initial_guess, realize, Assembler, BoundaryChart, DeformationState,
    DiscreteEnergyReport, DofMap, TriMesh,
};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::image::{AffineMap2, Domain2, Image};
use crate::linalg::{rotation, rotation_derivative, Vec2};

/// Similarity `x ↦ a + λR(θ)x` placing the template domain inside the scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemplatePose {
    pub translation: Vec2,
    pub angle: f64,
    pub scale: f64,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl TemplatePose {
    pub fn validate(&self) -> Result<()> {
        let ok = self.scale_min > 0.0
            && self.scale_min <= self.scale_max
            && self.scale_max.is_finite()
            && (self.scale_min..=self.scale_max).contains(&self.scale)
            && self.angle.is_finite()
            && self.translation.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParams(format!(
                "invalid template pose {self:?}"
            )))
        }
    }

    pub fn map(&self) -> AffineMap2 {
        AffineMap2::new(rotation(self.angle) * self.scale, self.translation)
    }

    /// Whether `a + λR·Ω1` lies in `scene`, checked at the four corners.
    pub fn fits(&self, template: &Domain2, scene: &Domain2) -> bool {
        let m = self.map();
        let tol = 1e-12 * scene.diameter();
        template
            .corners()
            .iter()
            .all(|&c| scene.contains(m.apply(c), tol))
    }

    fn with_params(&self, p: &[f64]) -> Self {
        Self {
            translation: Vec2::new(p[0], p[1]),
            angle: p[2],
            scale: p[3],
            ..*self
        }
    }
}

/// Joint objective over the inner deformation `z: Ω1 → Ω1` and the pose.
struct TemplateObjective<'a> {
    asm: &'a Assembler<'a>,
    dofs: &'a DofMap,
    base: DeformationState,
    pose: TemplatePose,
    scene: Domain2,
}

impl TemplateObjective<'_> {
    fn split<'x>(&self, x: &'x [f64]) -> (DeformationState, TemplatePose, &'x [f64]) {
        let m = self.dofs.len();
        (
            self.dofs.scatter(&x[..m], &self.base),
            self.pose.with_params(&x[m..]),
            &x[m..],
        )
    }
}

impl Objective for TemplateObjective<'_> {
    type Info = DiscreteEnergyReport;

    fn dim(&self) -> usize {
        self.dofs.len() + 4
    }

    fn bounds(&self, i: usize) -> (f64, f64) {
        if i == self.dofs.len() + 3 {
            (self.pose.scale_min, self.pose.scale_max)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    }

    fn evaluate(&mut self, x: &[f64], grad: &mut [f64]) -> Option<(f64, DiscreteEnergyReport)> {
        let (mesh, chart) = (self.asm.mesh(), self.asm.chart());
        let (z, pose, _) = self.split(x);
        if !feasibility_report(&z, mesh, chart).is_feasible()
            || !pose.fits(mesh.domain(), &self.scene)
        {
            return None;
        }
        let zn = realize(&z, mesh, chart).ok()?;
        let map = pose.map();
        let y: Vec<Vec2> = zn.iter().map(|&p| map.apply(p)).collect();
        let out = self.asm.at_nodes(&y, true).ok()?;
        let f = out.forces?;
        let rt = map.linear.transpose();
        let fz: Vec<Vec2> = f.iter().map(|v| rt * v).collect();
        let m = self.dofs.len();
        grad[..m].copy_from_slice(&self.dofs.restrict(&self.asm.forces_to_state(&z, &fz)));
        let (r, dr) = (
            rotation(pose.angle),
            rotation_derivative(pose.angle) * pose.scale,
        );
        let mut gp = [0.0; 4];
        for (fi, zi) in f.iter().zip(&zn) {
            gp[0] += fi.x;
            gp[1] += fi.y;
            gp[2] += fi.dot(&(dr * zi));
            gp[3] += fi.dot(&(r * zi));
        }
        grad[m..].copy_from_slice(&gp);
        let total = out.report.total;
        total.is_finite().then_some((total, out.report))
    }
}

/// Registers `template` into `scene` as `y = (a + λR·)∘z`, descending jointly
/// over the pose and an inner sliding deformation `z` of the template domain.
pub fn register_template(
    model: &EnergyModel,
    template: &Image,
    scene: &Image,
    pose0: &TemplatePose,
    mesh: &TriMesh,
    config: &SolverConfig,
) -> Result<(TemplatePose, SolveReport)> {
    config.validate()?;
    pose0.validate()?;
    if !pose0.fits(template.domain(), scene.domain()) {
        return Err(Error::Infeasible(
            "initial template subdomain is not contained in the scene".into(),
        ));
    }
    let chart = BoundaryChart::new(template.domain());
    let asm = Assembler::new(model, template, scene, mesh, &chart, config.h2_weight)?;
    let dofs = DofMap::new(mesh);
    let z0 = initial_guess(mesh, &chart);
    let mut obj = TemplateObjective {
        asm: &asm,
        dofs: &dofs,
        base: z0.clone(),
        pose: *pose0,
        scene: *scene.domain(),
    };
    let mut x0 = dofs.gather(&z0);
    x0.extend([
        pose0.translation.x,
        pose0.translation.y,
        pose0.angle,
        pose0.scale,
    ]);
    let result = lbfgs(&mut obj, &x0, &config.lbfgs(mesh.spacing()))
        .ok_or_else(|| Error::Infeasible("initial template state could not be assembled".into()))?;
    let (z, pose, _) = obj.split(&result.x);
    let map = pose.map();
    let nodes = realize(&z, mesh, &chart)?
        .into_iter()
        .map(|p| map.apply(p))
        .collect();
    let report = SolveReport {
        resolution: mesh.resolution(),
        trace: trace_from(&result, |r| r),
        termination: result.reason,
        iterations: result.iterations(),
        energy: result.last().info.clone(),
        feasibility: feasibility_report(&z, mesh, &chart),
        initial_gradient_norm: result.initial_gradient_norm,
        gradient_norm: result.gradient_norm,
        recovery: None,
        level_energies: vec![result.last().value],
        landmark_snaps: Vec::new(),
        state: z,
        nodes,
    };
    Ok((pose, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deform::build_mesh;
    use crate::energy::{MismatchForm, MismatchParams};
    use crate::image::{synthetic_image, transform_image, IntensitySource};
    use crate::linalg::vec2;
    use crate::verification::fixtures::asymmetric_image;

    pub(crate) fn embedded_scene(template: &Image, truth: &TemplatePose, scene: Domain2) -> Image {
        let moved = transform_image(template, &truth.map()).unwrap();
        let source: IntensitySource = moved.source().clone();
        Image::new(scene, source).unwrap()
    }

    fn model() -> EnergyModel {
        EnergyModel::new(
            Default::default(),
            MismatchParams::new(MismatchForm::Weighted, 1000.0).unwrap(),
        )
    }

    #[test]
    fn rejects_subdomain_outside_scene() {
        let t = synthetic_image("smooth-blob", Domain2::unit(), 1).unwrap();
        let scene = synthetic_image(
            "smooth-blob",
            Domain2::rect(Vec2::zeros(), 0.8, 0.8).unwrap(),
            1,
        )
        .unwrap();
        let mesh = build_mesh(t.domain(), 5, 5).unwrap();
        let pose = TemplatePose {
            translation: Vec2::zeros(),
            angle: 0.0,
            scale: 1.0,
            scale_min: 0.9,
            scale_max: 1.1,
        };
        let r = register_template(&model(), &t, &scene, &pose, &mesh, &SolverConfig::default());
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn recovers_translation() {
        let t = asymmetric_image(Domain2::unit(), 1).unwrap();
        let truth = TemplatePose {
            translation: vec2(0.2, 0.0),
            angle: 0.0,
            scale: 1.0,
            scale_min: 0.5,
            scale_max: 2.0,
        };
        let scene = embedded_scene(
            &t,
            &truth,
            Domain2::rect(vec2(-0.3, -0.3), 1.8, 1.6).unwrap(),
        );
        let mesh = build_mesh(t.domain(), 9, 9).unwrap();
        let pose0 = TemplatePose {
            translation: vec2(0.15, 0.04),
            angle: 0.03,
            scale: 1.03,
            ..truth
        };
        let (pose, rep) = register_template(
            &model(),
            &t,
            &scene,
            &pose0,
            &mesh,
            &SolverConfig::default(),
        )
        .unwrap();
        assert!(
            (pose.translation - truth.translation).amax() < 1e-2,
            "{pose:?} {:?}",
            rep.termination
        );
        assert!(
            pose.angle.abs() < 1e-2 && (pose.scale - 1.0).abs() < 1e-2,
            "{pose:?} {:?} {} {} {}",
            rep.termination,
            rep.iterations,
            rep.gradient_norm / rep.initial_gradient_norm,
            rep.final_energy()
        );
    }

    #[test]
    fn scale_respects_bounds_exactly() {
        let t = asymmetric_image(Domain2::unit(), 1).unwrap();
        let truth = TemplatePose {
            translation: vec2(0.1, 0.1),
            angle: 0.0,
            scale: 1.3,
            scale_min: 0.5,
            scale_max: 2.0,
        };
        let scene = embedded_scene(&t, &truth, Domain2::rect(Vec2::zeros(), 1.6, 1.6).unwrap());
        let mesh = build_mesh(t.domain(), 9, 9).unwrap();
        let pose0 = TemplatePose {
            scale: 1.05,
            scale_min: 0.9,
            scale_max: 1.1,
            ..truth
        };
        let (pose, _) = register_template(
            &model(),
            &t,
            &scene,
            &pose0,
            &mesh,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(pose.scale, 1.1);
    }
}
