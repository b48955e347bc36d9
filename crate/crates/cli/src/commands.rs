//! Subcommand bodies. Each returns the process exit status.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use elastreg::deform::build_mesh;
use elastreg::energy::{
    cauchy_stress, ElasticFamily, ElasticParams, EnergyModel, MismatchForm, MismatchParams,
    Volumetric,
};
use elastreg::export::{
    draw_overlay, render, warp_pullback, write_deformation_csv, write_json, write_trace_csv,
};
use elastreg::image::pnm::{load_image, write_raster};
use elastreg::image::{
    synthetic_image, transform_image, AffineMap2, Domain2, Image, IntensitySource,
};
use elastreg::linalg::{mat2, Vec2};
use elastreg::solver::{
    minimize_multiresolution, register_template, SolveReport, SolverConfig, TemplatePose,
    TerminationReason,
};
use elastreg::verification::fixtures::asymmetric_image;
use elastreg::verification::{
    run_experiment, write_summary_csv, Certificate, ExperimentId, ExperimentSpec,
};
use elastreg::Error;

use crate::config::{ConfigError, RunConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_IO: u8 = 4;
pub const EXIT_CONFIG: u8 = 5;

/// A diagnostic together with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Infeasible(_)
            | Error::OrientationViolation { .. }
            | Error::InvalidLandmarks(_) => EXIT_INFEASIBLE,
            Error::Io { .. } | Error::Format { .. } | Error::Csv(_) | Error::Json(_) => EXIT_IO,
            Error::InvalidInput(_)
            | Error::InvalidParams(_)
            | Error::UnknownPattern(_)
            | Error::UnknownExperiment(_) => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Unreadable(..) => EXIT_IO,
            ConfigError::Invalid(_) => EXIT_CONFIG,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type Outcome = std::result::Result<u8, Failure>;

fn model(cfg: &RunConfig, default_weight: f64) -> Result<EnergyModel, Failure> {
    let family: ElasticFamily = cfg.required("family")?;
    let elastic = ElasticParams::new(family, cfg.required("alpha")?, Volumetric::default())?;
    let form: MismatchForm = cfg.required("mismatch-form")?;
    let weight = cfg.parsed("mismatch-weight")?.unwrap_or(default_weight);
    Ok(EnergyModel::new(
        elastic,
        MismatchParams::new(form, weight)?,
    ))
}

fn solver(cfg: &RunConfig) -> Result<SolverConfig, Failure> {
    let c = SolverConfig {
        max_iterations: cfg.required("max-iterations")?,
        gradient_tolerance: cfg.required("gradient-tolerance")?,
        absolute_tolerance: cfg.required("absolute-tolerance")?,
        memory: cfg.required("memory")?,
        levels: cfg.required("levels")?,
        h2_weight: cfg.required("h2-weight")?,
        initial_step: cfg.required("initial-step")?,
        coarse_smoothing: cfg.required("coarse-smoothing")?,
        ..SolverConfig::default()
    };
    c.validate()?;
    Ok(c)
}

fn resolution(cfg: &RunConfig) -> Result<usize, Failure> {
    let n: usize = cfg.required("resolution")?;
    if n < 2 {
        return Err(ConfigError::Invalid(format!("resolution must be at least 2, got {n}")).into());
    }
    Ok(n)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.path("out").expect("out has a default");
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

/// `asymmetric` names the analytic verification fixture; other ids are patterns.
fn pattern_image(id: &str, domain: Domain2, channels: usize) -> Result<Image, Failure> {
    Ok(match id {
        "asymmetric" => asymmetric_image(domain, channels)?,
        _ => synthetic_image(id, domain, channels)?,
    })
}

fn raster_size(image: &Image, cfg: &RunConfig) -> Result<(usize, usize), Failure> {
    if let IntensitySource::Raster(r) = image.source() {
        return Ok((r.width(), r.height()));
    }
    let [w, h] = cfg
        .fixed::<2>("warp-size")?
        .expect("warp-size has a default");
    if !(w >= 1.0 && h >= 1.0 && w.fract() == 0.0 && h.fract() == 0.0) {
        return Err(ConfigError::Invalid(format!(
            "warp-size must be positive integers, got {w},{h}"
        ))
        .into());
    }
    Ok((w as usize, h as usize))
}

fn raster_ext(image: &Image) -> &'static str {
    if image.channels() == 1 {
        "pgm"
    } else {
        "ppm"
    }
}

fn load(cfg: &RunConfig, path_key: &str, domain_key: &str) -> Result<Image, Failure> {
    let path = cfg.path(path_key).ok_or_else(|| {
        ConfigError::Invalid(format!("missing `{path_key}` (or set `synthetic`)"))
    })?;
    Ok(load_image(&path, cfg.domain(domain_key)?)?)
}

/// Timestamps live here so that every other artifact is reproducible.
fn write_metadata(dir: &Path, command: &str, cfg: &RunConfig) -> Result<(), Failure> {
    #[derive(Serialize)]
    struct Metadata<'a> {
        command: &'a str,
        version: &'a str,
        created_unix_seconds: u64,
        out: String,
    }
    let created = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = Metadata {
        command,
        version: env!("CARGO_PKG_VERSION"),
        created_unix_seconds: created,
        out: cfg.get("out").unwrap_or_default().to_string(),
    };
    Ok(write_json(&dir.join("metadata.json"), &meta)?)
}

fn exit_for(reason: TerminationReason) -> u8 {
    match reason {
        TerminationReason::Converged => EXIT_OK,
        TerminationReason::MaxIterations | TerminationReason::LineSearchFailed => {
            EXIT_NOT_CONVERGED
        }
    }
}

#[derive(Serialize)]
struct RegisterOutput<'a> {
    command: &'static str,
    config: BTreeMap<&'static str, String>,
    model: &'a EnergyModel,
    solver: &'a SolverConfig,
    exit_code: u8,
    report: &'a SolveReport,
}

pub fn register(cfg: &RunConfig) -> Outcome {
    let model = model(cfg, 1.0)?;
    let solver = solver(cfg)?;
    let n = resolution(cfg)?;
    let (p1, p2, truth) = match cfg.get("synthetic") {
        Some(id) => {
            let d1 = cfg.domain("domain1")?.unwrap_or_else(Domain2::unit);
            let p1 = pattern_image(id, d1, cfg.required("channels")?)?;
            let [ax, ay] = cfg.fixed::<2>("synthetic-shift")?.expect("default");
            let lambda: f64 = cfg.required("synthetic-scale")?;
            let t = AffineMap2::rigid(cfg.required("synthetic-angle")?, Vec2::new(ax, ay))
                .compose(&AffineMap2::scaling(lambda));
            let p2 = transform_image(&p1, &t)?;
            (p1, p2, Some(t))
        }
        None => (
            load(cfg, "image1", "domain1")?,
            load(cfg, "image2", "domain2")?,
            None,
        ),
    };
    let dir = out_dir(cfg)?;
    let mut report = minimize_multiresolution(&model, &p1, &p2, (n, n), &solver)?;
    let mesh = build_mesh(p1.domain(), n, n)?;
    if let Some(t) = truth {
        report.attach_recovery(&mesh, p2.domain().diameter(), |x| t.apply(x));
    }
    let code = exit_for(report.termination);
    let (w, h) = raster_size(&p2, cfg)?;
    let warped = warp_pullback(&p1, &mesh, &report.nodes, p2.domain(), w, h)?;
    write_raster(&dir.join(format!("warped.{}", raster_ext(&p1))), &warped)?;
    write_deformation_csv(
        &dir.join("deformation.csv"),
        &mesh,
        &report.state,
        &report.nodes,
    )?;
    write_trace_csv(&dir.join("trace.csv"), &report.trace)?;
    write_json(
        &dir.join("report.json"),
        &RegisterOutput {
            command: "register",
            config: cfg.echo(),
            model: &model,
            solver: &solver,
            exit_code: code,
            report: &report,
        },
    )?;
    write_metadata(&dir, "register", cfg)?;
    println!(
        "register: {:?} after {} iterations, energy {:e}, min det {:e}{}",
        report.termination,
        report.iterations,
        report.final_energy(),
        report.feasibility.min_det,
        report
            .recovery
            .map(|r| format!(", deviation / diam {:e}", r.relative))
            .unwrap_or_default()
    );
    Ok(code)
}

fn experiment_specs(
    cfg: &RunConfig,
    only: Option<ExperimentId>,
) -> Result<Vec<ExperimentSpec>, Failure> {
    let ids = match only {
        Some(id) => vec![id],
        None => match cfg.get("experiments").expect("default") {
            "all" => ExperimentId::ALL.to_vec(),
            list => list
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<_, Error>>()?,
        },
    };
    let seed: u64 = cfg.required("seed")?;
    let tolerance: Option<f64> = cfg.parsed("tolerance")?;
    let samples: Option<usize> = cfg.parsed("samples")?;
    ids.into_iter()
        .map(|id| {
            let mut spec = ExperimentSpec::new(id).with_seed(seed);
            if let Some(t) = tolerance {
                spec.tolerance = t;
            }
            if let Some(s) = samples {
                spec.samples = s;
            }
            if cfg.is_set("resolution") && spec.resolution > 0 {
                spec.resolution = cfg.required("resolution")?;
            }
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

fn run_certificates(cfg: &RunConfig, command: &str, only: Option<ExperimentId>) -> Outcome {
    let specs = experiment_specs(cfg, only)?;
    let model = model(cfg, 1.0)?;
    let dir = out_dir(cfg)?;
    let mut certs: Vec<Certificate> = Vec::new();
    for mut spec in specs {
        spec.artifact_dir = Some(dir.clone());
        let cert = run_experiment(&spec, &model)?;
        fs::write(dir.join(format!("{}.json", spec.id.id())), cert.to_json()?).map_err(|e| {
            Error::Io {
                path: dir.clone(),
                source: e,
            }
        })?;
        println!(
            "{:<26} {}{}  worst margin {:e}",
            spec.id.id(),
            if cert.passed { "PASS" } else { "FAIL" },
            if cert.exploratory {
                " (exploratory)"
            } else {
                ""
            },
            cert.worst_margin
        );
        certs.push(cert);
    }
    write_summary_csv(&dir.join("summary.csv"), &certs)?;
    write_metadata(&dir, command, cfg)?;
    Ok(if certs.iter().all(|c| c.passed) {
        EXIT_OK
    } else {
        EXIT_FAILED
    })
}

pub fn verify(cfg: &RunConfig) -> Outcome {
    run_certificates(cfg, "verify", None)
}

pub fn gradcheck(cfg: &RunConfig) -> Outcome {
    run_certificates(cfg, "gradcheck", Some(ExperimentId::Gradcheck))
}

fn pose(cfg: &RunConfig, key: &str, bounds: [f64; 2]) -> Result<TemplatePose, Failure> {
    let [x, y, angle, scale] = cfg.fixed::<4>(key)?.expect("pose keys have defaults");
    let p = TemplatePose {
        translation: Vec2::new(x, y),
        angle,
        scale,
        scale_min: bounds[0],
        scale_max: bounds[1],
    };
    p.validate()?;
    Ok(p)
}

#[derive(Serialize)]
struct TemplateOutput<'a> {
    command: &'static str,
    config: BTreeMap<&'static str, String>,
    model: &'a EnergyModel,
    exit_code: u8,
    pose: &'a TemplatePose,
    truth: Option<&'a TemplatePose>,
    termination: TerminationReason,
    iterations: usize,
    energy: f64,
}

pub fn template(cfg: &RunConfig) -> Outcome {
    let model = model(cfg, 1000.0)?;
    let solver = solver(cfg)?;
    let n = resolution(cfg)?;
    let bounds = cfg.fixed::<2>("scale-bounds")?.expect("default");
    let pose0 = pose(cfg, "pose", bounds)?;
    let (tmpl, scene, truth) = match cfg.get("synthetic") {
        Some(id) => {
            let tmpl = pattern_image(
                id,
                cfg.domain("template-domain")?.expect("default"),
                cfg.required("channels")?,
            )?;
            // scale bounds do not constrain the ground truth
            let [x, y, angle, scale] = cfg.fixed::<4>("truth-pose")?.expect("default");
            let truth = TemplatePose {
                translation: Vec2::new(x, y),
                angle,
                scale,
                scale_min: scale,
                scale_max: scale,
            };
            truth.validate()?;
            let moved = transform_image(&tmpl, &truth.map())?;
            let scene = Image::new(
                cfg.domain("scene-domain")?.expect("default"),
                moved.source().clone(),
            )?;
            (tmpl, scene, Some(truth))
        }
        None => (
            load(cfg, "template", "template-domain")?,
            load(cfg, "scene", "scene-domain")?,
            None,
        ),
    };
    let mesh = build_mesh(tmpl.domain(), n, n)?;
    let (found, report) = register_template(&model, &tmpl, &scene, &pose0, &mesh, &solver)?;
    let dir = out_dir(cfg)?;
    let code = exit_for(report.termination);
    let (w, h) = raster_size(&scene, cfg)?;
    let outline: Vec<Vec2> = mesh
        .boundary_nodes()
        .iter()
        .map(|&k| report.nodes[k])
        .collect();
    let overlay = draw_overlay(&render(&scene, w, h)?, scene.domain(), &outline)?;
    write_raster(
        &dir.join(format!("overlay.{}", raster_ext(&scene))),
        &overlay,
    )?;
    write_deformation_csv(
        &dir.join("deformation.csv"),
        &mesh,
        &report.state,
        &report.nodes,
    )?;
    write_trace_csv(&dir.join("trace.csv"), &report.trace)?;
    write_json(
        &dir.join("pose.json"),
        &TemplateOutput {
            command: "template",
            config: cfg.echo(),
            model: &model,
            exit_code: code,
            pose: &found,
            truth: truth.as_ref(),
            termination: report.termination,
            iterations: report.iterations,
            energy: report.final_energy(),
        },
    )?;
    write_metadata(&dir, "template", cfg)?;
    println!(
        "template: {:?} after {} iterations; translation ({:.6}, {:.6}), angle {:.6}, scale {:.6}",
        report.termination,
        report.iterations,
        found.translation.x,
        found.translation.y,
        found.angle,
        found.scale
    );
    Ok(code)
}

/// 17 significant digits round-trip every `f64`.
fn exact(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn psi_probe(cfg: &RunConfig) -> Outcome {
    let model = model(cfg, 1.0)?;
    let [a, b, c, d] = cfg.fixed::<4>("matrix")?.expect("default");
    let m = mat2(a, b, c, d);
    let c1 = cfg.list("c1")?.expect("default");
    let c2 = cfg.list("c2")?.expect("default");
    if c1.len() != c2.len() || !(c1.len() == 1 || c1.len() == 3) {
        return Err(
            ConfigError::Invalid("c1 and c2 need the same channel count, 1 or 3".into()).into(),
        );
    }
    let psi = model.psi(&c1, &c2, &m)?;
    let g = model.psi_grad_a(&c1, &c2, &m)?;
    let stress = cauchy_stress(&model.elastic, &m)?;
    println!("psi {}", exact(psi));
    println!(
        "dpsi_dA {} {} {} {}",
        exact(g[(0, 0)]),
        exact(g[(0, 1)]),
        exact(g[(1, 0)]),
        exact(g[(1, 1)])
    );
    println!("stress_deviation {}", exact(stress.deviation));
    Ok(EXIT_OK)
}
