//! Numbered, machine-checkable experiments emitting certificates.
//!
//! Every experiment turns into a list of [`Check`]s, each a measured value
//! compared against a threshold. A certificate passes iff all checks pass;
//! its `worst_margin` is the smallest signed margin among them. Given the
//! same [`ExperimentSpec`] and model, certificates are bit-for-bit identical.

mod experiments;
pub mod fixtures;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyModel;
use crate::error::{Error, Result};

pub use experiments::{random_feasible_state, smooth_seed, SHEAR_THRESHOLD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentId {
    Isotropy,
    Matching,
    Interchange,
    Coercivity,
    JensenScaling,
    ScalingRecovery,
    RigidRecovery,
    ShearNonstationarity,
    FluidDegeneracy,
    Gradcheck,
    SecondGradientRecovery,
    StressFormula,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 12] = [
        ExperimentId::Isotropy,
        ExperimentId::Matching,
        ExperimentId::Interchange,
        ExperimentId::Coercivity,
        ExperimentId::JensenScaling,
        ExperimentId::ScalingRecovery,
        ExperimentId::RigidRecovery,
        ExperimentId::ShearNonstationarity,
        ExperimentId::FluidDegeneracy,
        ExperimentId::Gradcheck,
        ExperimentId::SecondGradientRecovery,
        ExperimentId::StressFormula,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            ExperimentId::Isotropy => "isotropy",
            ExperimentId::Matching => "matching",
            ExperimentId::Interchange => "interchange",
            ExperimentId::Coercivity => "coercivity",
            ExperimentId::JensenScaling => "jensen-scaling",
            ExperimentId::ScalingRecovery => "scaling-recovery",
            ExperimentId::RigidRecovery => "rigid-recovery",
            ExperimentId::ShearNonstationarity => "shear-nonstationarity",
            ExperimentId::FluidDegeneracy => "fluid-degeneracy",
            ExperimentId::Gradcheck => "gradcheck",
            ExperimentId::SecondGradientRecovery => "second-gradient-recovery",
            ExperimentId::StressFormula => "stress-formula",
        }
    }

    /// Default `(samples, tolerance, mesh resolution)`. The tolerance is the
    /// threshold of the experiment's primary check:
    ///
    /// | id | primary check |
    /// |---|---|
    /// | isotropy | max `|ψ(QAR) − ψ(A)| / (1 + |ψ|)` ≤ tol |
    /// | matching | max `ψ(c, c, Q)` over rotations ≤ tol |
    /// | interchange | max relative `|ψ(c1,c2,A) − det A·ψ(c2,c1,A⁻¹)|` ≤ tol |
    /// | coercivity | worst margin ≥ −tol |
    /// | jensen-scaling | min slack ≥ −tol |
    /// | scaling-recovery, rigid-recovery, second-gradient-recovery | deviation / diam(Ω2) ≤ tol |
    /// | shear-nonstationarity | normalized sliding gradient ≥ tol |
    /// | fluid-degeneracy | relative energy gap ≤ tol |
    /// | gradcheck | relative finite-difference error ≤ tol |
    /// | stress-formula | stress deviation ≤ tol |
    pub fn defaults(&self) -> (usize, f64, usize) {
        match self {
            ExperimentId::Isotropy => (1000, 1e-12, 0),
            ExperimentId::Matching => (100, 1e-12, 0),
            ExperimentId::Interchange => (1000, 1e-10, 33),
            ExperimentId::Coercivity => (10_000, 0.0, 0),
            ExperimentId::JensenScaling => (1000, 1e-10, 33),
            ExperimentId::ScalingRecovery => (3, 1e-3, 33),
            ExperimentId::RigidRecovery => (1, 1e-3, 33),
            ExperimentId::ShearNonstationarity => (1, SHEAR_THRESHOLD, 33),
            ExperimentId::FluidDegeneracy => (2, 1e-6, 33),
            ExperimentId::Gradcheck => (100, 1e-5, 6),
            ExperimentId::SecondGradientRecovery => (1, 2e-2, 33),
            ExperimentId::StressFormula => (100, 1e-10, 0),
        }
    }

    /// Whether the experiment explores a conjecture rather than a proven claim.
    pub fn exploratory(&self) -> bool {
        matches!(self, ExperimentId::SecondGradientRecovery)
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentId::ALL
            .into_iter()
            .find(|e| e.id() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub seed: u64,
    pub samples: usize,
    pub tolerance: f64,
    /// Nodes per side of the mesh, for experiments that use one.
    pub resolution: usize,
    /// Root for per-experiment artifact directories; never echoed.
    #[serde(skip)]
    pub artifact_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(id: ExperimentId) -> Self {
        let (samples, tolerance, resolution) = id.defaults();
        Self {
            id,
            seed: 0,
            samples,
            tolerance,
            resolution,
            artifact_dir: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance >= 0.0) || !self.tolerance.is_finite() {
            return Err(Error::InvalidParams(format!(
                "tolerance must be finite and ≥ 0, got {}",
                self.tolerance
            )));
        }
        if self.samples == 0 {
            return Err(Error::InvalidParams("sample count must be positive".into()));
        }
        if self.id.defaults().2 > 0 && self.resolution < 2 {
            return Err(Error::InvalidParams(format!(
                "resolution {} is too small",
                self.resolution
            )));
        }
        Ok(())
    }

    /// Creates and returns the artifact directory of this experiment.
    fn artifacts(&self) -> Result<Option<PathBuf>> {
        let Some(root) = &self.artifact_dir else {
            return Ok(None);
        };
        let dir = root.join(self.id.id());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Some(dir))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    AtMost,
    AtLeast,
    Below,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub bound: Bound,
    pub threshold: f64,
    /// Signed distance to the threshold; negative when violated.
    pub margin: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, bound: Bound, threshold: f64) -> Self {
        let margin = match bound {
            Bound::AtMost | Bound::Below => threshold - measured,
            Bound::AtLeast | Bound::Above => measured - threshold,
        };
        let passed = match bound {
            Bound::AtMost | Bound::AtLeast => margin >= 0.0,
            Bound::Below | Bound::Above => margin > 0.0,
        };
        Self {
            name: name.into(),
            measured,
            bound,
            threshold,
            margin,
            passed,
        }
    }

    pub fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, Bound::AtMost, threshold)
    }

    pub fn at_least(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self::new(name, measured, Bound::AtLeast, threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub experiment: ExperimentId,
    pub passed: bool,
    pub exploratory: bool,
    pub worst_margin: f64,
    pub samples: usize,
    pub checks: Vec<Check>,
    pub config: ExperimentSpec,
    pub model: EnergyModel,
    /// Paths relative to the artifact root.
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
}

impl Certificate {
    fn new(spec: &ExperimentSpec, model: &EnergyModel, checks: Vec<Check>) -> Self {
        let worst_margin = checks
            .iter()
            .map(|c| c.margin)
            .fold(f64::INFINITY, f64::min);
        Self {
            experiment: spec.id,
            passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
            exploratory: spec.id.exploratory(),
            worst_margin,
            samples: spec.samples,
            checks,
            config: spec.clone(),
            model: model.clone(),
            artifacts: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        crate::export::to_json(self)
    }
}

/// Runs one experiment; deterministic given `(spec, model)`.
pub fn run_experiment(spec: &ExperimentSpec, model: &EnergyModel) -> Result<Certificate> {
    spec.validate()?;
    experiments::run(spec, model)
}

/// One row per certificate: id, pass flag, exploratory flag, worst margin, samples.
pub fn write_summary_csv(path: &Path, certificates: &[Certificate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "experiment",
        "passed",
        "exploratory",
        "worst_margin",
        "samples",
    ])?;
    for c in certificates {
        w.write_record([
            c.experiment.id().to_string(),
            c.passed.to_string(),
            c.exploratory.to_string(),
            c.worst_margin.to_string(),
            c.samples.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
