//! Run configuration: a flat `key=value` file, overridden by command-line
//! flags, resolved into a validated [`RunConfig`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kdv_core::circulant::OperatorVariant;
use kdv_core::model::{Discretization, InitialCondition, KdVParams};
use kdv_core::preissman::{BoundaryAnchor, IterationControl};
use kdv_core::scheme::{Scheme, SimulationConfig};
use kdv_core::KdvError;
use thiserror::Error;

/// Keys a configuration may set, in manifest order.
pub const KEYS: [&str; 17] = [
    "scheme",
    "n",
    "tau",
    "steps",
    "ic",
    "eta",
    "delta",
    "xmin",
    "xmax",
    "variant",
    "anchor",
    "tol",
    "max-iter",
    "divergence-threshold",
    "snapshot-every",
    "out",
    "compare-with",
];

/// Keys a manifest adds about the run itself; accepted and ignored on input
/// so that a manifest can be fed back as a configuration.
pub const RECORD_KEYS: [&str; 4] = ["version", "status", "steps-completed", "wall-time-s"];

const REQUIRED: [&str; 5] = ["scheme", "n", "tau", "steps", "ic"];

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{origin}: unknown key {key:?} (known keys: {})", KEYS.join(", "))]
    UnknownKey { key: String, origin: String },
    #[error("{origin}: expected key=value, found {text:?}")]
    Syntax { text: String, origin: String },
    #[error("missing required key {0:?}")]
    Missing(&'static str),
    #[error("{key}={value:?}: expected {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: String,
    },
    #[error("cannot read {path}: {message}")]
    Unreadable { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] KdvError),
    #[error("{0}")]
    Misplaced(&'static str),
    #[error("two runs write to the same output directory {0:?}")]
    SharedOutput(String),
}

/// Normalizes `snake_case` spellings to the canonical kebab-case key.
fn canonical(key: &str) -> String {
    key.trim().replace('_', "-")
}

/// Unresolved key-value pairs, later sources overriding earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parses the file format: `key=value` lines, `#` starting a comment.
    pub fn parse(text: &str, source: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (idx, line) in text.lines().enumerate() {
            let origin = format!("{source}:{}", idx + 1);
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
                text: content.to_string(),
                origin: origin.clone(),
            })?;
            raw.set(key, value.trim(), &origin)?;
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: &str, origin: &str) -> Result<(), ConfigError> {
        let key = canonical(key);
        if RECORD_KEYS.contains(&key.as_str()) {
            return Ok(());
        }
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey {
                key,
                origin: origin.to_string(),
            });
        }
        self.values.insert(key, value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(
        &self,
        key: &'static str,
        default: Option<T>,
        expected: &str,
    ) -> Result<T, ConfigError> {
        match self.get(key) {
            Some(v) => v.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                value: v.to_string(),
                expected: expected.to_string(),
            }),
            None => default.ok_or(ConfigError::Missing(key)),
        }
    }

    /// Validates every key and builds the run configuration.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        for key in REQUIRED {
            if self.get(key).is_none() {
                return Err(ConfigError::Missing(key));
            }
        }
        let bad = |key: &str, expected: &str| ConfigError::BadValue {
            key: key.to_string(),
            value: self.get(key).unwrap_or_default().to_string(),
            expected: expected.to_string(),
        };
        let scheme: Scheme = self
            .get("scheme")
            .unwrap_or_default()
            .parse()
            .map_err(|e: KdvError| bad("scheme", &e.to_string()))?;
        let n: usize = self.parsed("n", None, "an integer grid size")?;
        let tau: f64 = self.parsed("tau", None, "a positive real time step")?;
        let steps: usize = self.parsed("steps", None, "a non-negative integer")?;
        let eta: f64 = self.parsed("eta", Some(6.0), "a real number")?;
        let delta: f64 = self.parsed("delta", Some(1.0), "a non-zero real number")?;
        let xmin: f64 = self.parsed("xmin", Some(-15.0), "a real number")?;
        let xmax: f64 = self.parsed("xmax", Some(15.0), "a real number")?;
        let variant: OperatorVariant = self
            .get("variant")
            .unwrap_or("exact")
            .parse()
            .map_err(|_| bad("variant", "exact or printed"))?;
        let tol: f64 = self.parsed("tol", Some(1e-12), "a positive real tolerance")?;
        let max_iter: usize = self.parsed("max-iter", Some(100), "a positive integer")?;
        let threshold: f64 =
            self.parsed("divergence-threshold", Some(1e8), "a positive real number")?;
        let snapshot_every: usize =
            self.parsed("snapshot-every", Some(10), "a positive integer")?;
        let out = PathBuf::from(self.get("out").unwrap_or("out"));
        let compare_with = match self.get("compare-with") {
            Some(s) => Some(
                s.parse::<Scheme>()
                    .map_err(|e| bad("compare-with", &e.to_string()))?,
            ),
            None => None,
        };

        let params = KdVParams::new(eta, delta, xmin, xmax)?;
        let grid = Discretization::new(&params, n, tau)?;
        let (anchor_index, anchor_value) = match self.get("anchor") {
            None => (1, 0.0),
            Some(s) => s
                .split_once(':')
                .and_then(|(i, v)| {
                    Some((
                        i.trim().parse::<usize>().ok()?,
                        v.trim().parse::<f64>().ok()?,
                    ))
                })
                .ok_or_else(|| bad("anchor", "index:value, e.g. 1:0"))?,
        };
        let anchor = BoundaryAnchor::new(anchor_index, anchor_value, n)?;
        let ctl = IterationControl::new(tol, max_iter, threshold)?;
        let ic_text = self.get("ic").unwrap_or_default();
        let ic = parse_ic(ic_text, n).map_err(|e| match e {
            IcError::Syntax => bad(
                "ic",
                "zero, cosine, soliton:A:x0, two-soliton:A1:x1:A2:x2 or file:PATH",
            ),
            IcError::Core(e) => ConfigError::Invalid(e),
        })?;

        let sim = SimulationConfig {
            scheme,
            params,
            grid,
            ic,
            steps,
            variant,
            anchor,
            ctl,
            snapshot_every,
        };
        sim.validate()?;
        if let Some(other) = compare_with {
            let mut second = sim.clone();
            second.scheme = other;
            second.validate()?;
        }
        Ok(RunConfig {
            sim,
            ic_text: ic_text.to_string(),
            out,
            compare_with,
        })
    }
}

enum IcError {
    Syntax,
    Core(KdvError),
}

fn parse_ic(text: &str, n: usize) -> Result<InitialCondition, IcError> {
    let nums = |parts: &[&str]| -> Result<Vec<f64>, IcError> {
        parts
            .iter()
            .map(|p| p.trim().parse::<f64>().map_err(|_| IcError::Syntax))
            .collect()
    };
    let mut parts = text.splitn(2, ':');
    let kind = parts.next().unwrap_or_default().trim();
    let rest = parts.next();
    match (kind, rest) {
        ("zero", None) => Ok(InitialCondition::Samples(vec![0.0; n])),
        ("cosine", None) => Ok(InitialCondition::Cosine),
        ("soliton", Some(r)) => match nums(&r.split(':').collect::<Vec<_>>())?[..] {
            [amplitude, center] => Ok(InitialCondition::Soliton { amplitude, center }),
            _ => Err(IcError::Syntax),
        },
        ("two-soliton", Some(r)) => match nums(&r.split(':').collect::<Vec<_>>())?[..] {
            [a1, x1, a2, x2] => Ok(InitialCondition::TwoSoliton {
                first: (a1, x1),
                second: (a2, x2),
            }),
            _ => Err(IcError::Syntax),
        },
        ("file", Some(path)) => {
            InitialCondition::from_file(Path::new(path.trim()), n).map_err(IcError::Core)
        }
        _ => Err(IcError::Syntax),
    }
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimulationConfig,
    /// The initial condition as written, kept for the manifest.
    pub ic_text: String,
    pub out: PathBuf,
    pub compare_with: Option<Scheme>,
}

impl RunConfig {
    /// The resolved values as `key=value` lines, in [`KEYS`] order, reals in
    /// shortest round-trip form. Reading them back yields the same
    /// configuration.
    pub fn to_manifest(&self) -> String {
        let s = &self.sim;
        let mut text = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(text, "{k}={v}");
        };
        line("scheme", s.scheme.to_string());
        line("n", s.grid.n.to_string());
        line("tau", format!("{:?}", s.grid.tau));
        line("steps", s.steps.to_string());
        line("ic", self.ic_text.clone());
        line("eta", format!("{:?}", s.params.eta));
        line("delta", format!("{:?}", s.params.delta));
        line("xmin", format!("{:?}", s.params.xmin));
        line("xmax", format!("{:?}", s.params.xmax));
        line("variant", s.variant.as_str().to_string());
        line("anchor", format!("{}:{:?}", s.anchor.index, s.anchor.value));
        line("tol", format!("{:?}", s.ctl.tol));
        line("max-iter", s.ctl.max_iter.to_string());
        line(
            "divergence-threshold",
            format!("{:?}", s.ctl.divergence_threshold),
        );
        line("snapshot-every", s.snapshot_every.to_string());
        line("out", self.out.display().to_string());
        if let Some(other) = self.compare_with {
            line("compare-with", other.to_string());
        }
        text
    }
}
