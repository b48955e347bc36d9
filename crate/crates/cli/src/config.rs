//! Flat UTF-8 `key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Keys are unique and
//! must appear in [`SCHEMA`]. Lists are comma-separated. Values from the file
//! are overridden by command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use elastreg::image::Domain2;
use elastreg::linalg::Vec2;

/// `(key, default, meaning)`; an empty default means unset.
pub const SCHEMA: &[(&str, &str, &str)] = &[
    (
        "family",
        "sv",
        "stored energy: sv (singular-value) or fluid (det-only)",
    ),
    ("alpha", "4", "singular-value exponent, > 2"),
    (
        "mismatch-form",
        "8a",
        "intensity mismatch: 8a (weighted) or 8b (density)",
    ),
    (
        "mismatch-weight",
        "",
        "mismatch weight; 1 for register and verify, 1000 for template",
    ),
    (
        "resolution",
        "33",
        "mesh nodes per side on the finest level",
    ),
    ("levels", "3", "multiresolution levels"),
    ("h2-weight", "0", "second-gradient weight"),
    ("max-iterations", "2000", "iterations per level"),
    (
        "gradient-tolerance",
        "1e-6",
        "stop when the projected gradient drops by this factor",
    ),
    (
        "absolute-tolerance",
        "1e-12",
        "or when the projected gradient is below this",
    ),
    ("memory", "10", "quasi-Newton history length"),
    (
        "initial-step",
        "0.25",
        "largest nodal move of a memoryless step, in mesh spacings",
    ),
    (
        "coarse-smoothing",
        "0.5",
        "raster blur on coarse levels, in mesh spacings of that level",
    ),
    ("seed", "0", "random seed"),
    ("out", "out", "output directory"),
    ("image1", "", "reference image P1 (PGM or PPM)"),
    ("image2", "", "target image P2 (PGM or PPM)"),
    (
        "domain1",
        "",
        "P1 domain as x0,y0,width,height; default unit height and aspect-ratio width",
    ),
    ("domain2", "", "P2 domain, same format"),
    (
        "synthetic",
        "",
        "pattern id (smooth-blob, checker, radial-gradient, piecewise-constant-disk, asymmetric)",
    ),
    ("channels", "1", "channels of synthetic images, 1 or 3"),
    (
        "synthetic-scale",
        "1.5",
        "scale of the synthetic register pair",
    ),
    (
        "synthetic-angle",
        "0",
        "rotation of the synthetic register pair, radians",
    ),
    (
        "synthetic-shift",
        "0,0",
        "translation of the synthetic register pair",
    ),
    (
        "warp-size",
        "64,64",
        "warped raster size when P2 is analytic",
    ),
    ("template", "", "template image path"),
    ("scene", "", "scene image path"),
    ("template-domain", "0,0,1,1", "template domain"),
    ("scene-domain", "-0.3,-0.3,1.8,1.6", "scene domain"),
    (
        "truth-pose",
        "0.2,0,0,1",
        "synthetic template placement as x,y,angle,scale",
    ),
    (
        "pose",
        "0.15,0.04,0.03,1.03",
        "initial template pose as x,y,angle,scale",
    ),
    (
        "scale-bounds",
        "0.5,2",
        "admissible template scales as min,max",
    ),
    (
        "experiments",
        "all",
        "comma-separated experiment ids, or all",
    ),
    (
        "tolerance",
        "",
        "override of every selected experiment's tolerance",
    ),
    (
        "samples",
        "",
        "override of every selected experiment's sample count",
    ),
    (
        "matrix",
        "1,0,0,1",
        "psi-probe matrix, row-major a11,a12,a21,a22",
    ),
    (
        "c1",
        "0",
        "psi-probe reference intensity, comma-separated channels",
    ),
    ("c2", "0", "psi-probe target intensity"),
];

/// Keys left out of the deterministic config echo.
const NOT_ECHOED: &[&str] = &["out"];

#[derive(Debug)]
pub enum ConfigError {
    /// The config file itself could not be read.
    Unreadable(PathBuf, std::io::Error),
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Unreadable(p, e) => write!(f, "{}: {e}", p.display()),
            ConfigError::Invalid(m) => write!(f, "invalid config: {m}"),
        }
    }
}

type Result<T> = std::result::Result<T, ConfigError>;

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

fn schema_key(key: &str) -> Result<&'static str> {
    SCHEMA
        .iter()
        .find(|(k, _, _)| *k == key)
        .map(|(k, _, _)| *k)
        .ok_or_else(|| invalid(format!("unknown key `{key}`")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {}: expected key = value", n + 1)))?;
            let key = schema_key(k.trim())?;
            if cfg.values.insert(key, v.trim().to_string()).is_some() {
                return Err(invalid(format!("line {}: duplicate key `{key}`", n + 1)));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Unreadable(path.to_path_buf(), e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        self.values.insert(schema_key(key)?, value.into());
        Ok(())
    }

    /// The explicit value, else the schema default; `None` when both are unset.
    pub fn get(&self, key: &str) -> Option<&str> {
        if let Some(v) = self.values.get(key) {
            return Some(v.as_str());
        }
        let (_, default, _) = SCHEMA.iter().find(|(k, _, _)| *k == key)?;
        (!default.is_empty()).then_some(*default)
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|e| invalid(format!("`{key}` = `{v}`: {e}")))
            })
            .transpose()
    }

    pub fn required<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        self.parsed(key)?
            .ok_or_else(|| invalid(format!("missing `{key}`")))
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.get(key) else {
            return Ok(None);
        };
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| invalid(format!("`{key}` = `{v}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    pub fn fixed<const N: usize>(&self, key: &str) -> Result<Option<[f64; N]>> {
        match self.list(key)? {
            None => Ok(None),
            Some(v) => v.try_into().map(Some).map_err(|v: Vec<f64>| {
                invalid(format!("`{key}` needs {N} numbers, got {}", v.len()))
            }),
        }
    }

    pub fn domain(&self, key: &str) -> Result<Option<Domain2>> {
        self.fixed::<4>(key)?
            .map(|[x, y, w, h]| {
                Domain2::rect(Vec2::new(x, y), w, h).map_err(|e| invalid(format!("`{key}`: {e}")))
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    /// Every explicitly set key except the output location.
    pub fn echo(&self) -> BTreeMap<&'static str, String> {
        self.values
            .iter()
            .filter(|(k, _)| !NOT_ECHOED.contains(k))
            .map(|(k, v)| (*k, v.clone()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_blank_lines_and_lists() {
        let c = RunConfig::parse("# run\n\nalpha = 5\ndomain1 = 0, 0, 2, 1\n").unwrap();
        assert_eq!(c.required::<f64>("alpha").unwrap(), 5.0);
        assert_eq!(c.get("family"), Some("sv"));
        assert_eq!(c.domain("domain1").unwrap().unwrap().width(), 2.0);
        assert!(c.get("image1").is_none());
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(matches!(
            RunConfig::parse("colour = red"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            RunConfig::parse("seed = 1\nseed = 2"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            RunConfig::parse("seed"),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn typed_errors() {
        let c = RunConfig::parse("seed = x\nmatrix = 1,2,3").unwrap();
        assert!(c.required::<u64>("seed").is_err());
        assert!(c.fixed::<4>("matrix").is_err());
    }

    #[test]
    fn echo_skips_output_dir() {
        let mut c = RunConfig::parse("out = /tmp/a\nseed = 3").unwrap();
        c.set("alpha", "5").unwrap();
        let e = c.echo();
        assert_eq!(e.len(), 2);
        assert!(!e.contains_key("out"));
    }
}
