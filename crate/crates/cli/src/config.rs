//! Run configuration (TOML). Every table rejects unknown keys; optional values are
//! filled with their defaults at load time so the echo written next to each report
//! reproduces the run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use hormander::expr::ScalarExpr;
use hormander::{GridDomain, VectorFieldFamily};

/// Raised for anything wrong with the configuration itself (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub family: FamilyConfig,
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub tolerances: Tolerances,
    pub plot: Option<PlotConfig>,
    pub fields: Option<FieldsConfig>,
    pub eigen: Option<EigenConfig>,
    pub epspath: Option<EpsPathConfig>,
    pub logistic: Option<LogisticConfig>,
    pub yamabe: Option<YamabeConfig>,
    pub distance: Option<DistanceConfig>,
    pub ball: Option<BallConfig>,
    pub probe: Option<ProbeConfig>,
    pub verify: Option<VerifyConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    /// Built-in name: `euclidean(n)`, `heisenberg`, `grushin`.
    pub name: Option<String>,
    /// Family definition file, relative to the config file.
    pub file: Option<PathBuf>,
    /// Adds `eps` times the euclidean fields.
    #[serde(default)]
    pub regularize: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub h: f64,
    /// Per-axis spacing overriding `h`; `lo` should be a multiple of it.
    pub spacing: Option<Vec<f64>>,
    /// Keep nodes where this expression is positive.
    pub mask: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub eigen: f64,
    pub semilinear: f64,
    pub refine: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eigen: 1e-8,
            semilinear: 1e-9,
            refine: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlotConfig {
    /// The two plotted axes (0-based).
    #[serde(default = "default_axes")]
    pub axes: [usize; 2],
    /// Coordinates of the slice along the remaining axes; defaults to the box middle.
    pub at: Option<Vec<f64>>,
    #[serde(default = "default_cell")]
    pub cell_px: usize,
}

fn default_axes() -> [usize; 2] {
    [0, 1]
}

fn default_cell() -> usize {
    6
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsConfig {
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    #[serde(default = "default_max_step")]
    pub max_step: usize,
}

fn default_max_step() -> usize {
    4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    #[serde(default = "zero_expr")]
    pub potential: String,
}

fn zero_expr() -> String {
    "0".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsPathConfig {
    #[serde(default = "zero_expr")]
    pub potential: String,
    pub eps: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticConfig {
    #[serde(default = "one_expr")]
    pub a: String,
    #[serde(default = "one_expr")]
    pub b: String,
    /// `mu` as a multiple of the threshold `mu_1`.
    pub mu_factor: f64,
    #[serde(default = "two")]
    pub p: f64,
    #[serde(default = "one")]
    pub upper_factor: f64,
}

fn one_expr() -> String {
    "1".into()
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct YamabeConfig {
    pub f: String,
    pub theta: f64,
    pub eps: f64,
    #[serde(default = "three")]
    pub p: f64,
    /// Defaults to `theta * f`.
    pub k: Option<String>,
    /// Defaults to `theta * f`.
    pub big_k: Option<String>,
}

fn three() -> f64 {
    3.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceConfig {
    pub from: Vec<f64>,
    pub to: Vec<f64>,
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_true")]
    pub refine: bool,
    #[serde(default = "default_segments")]
    pub segments: usize,
}

fn default_directions() -> usize {
    hormander::ccmetric::DEFAULT_DIRECTIONS
}

fn default_segments() -> usize {
    hormander::ccmetric::DEFAULT_SEGMENTS
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallConfig {
    pub center: Vec<f64>,
    pub radius: f64,
    #[serde(default = "default_directions")]
    pub directions: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub center: Vec<f64>,
    pub radii: Vec<f64>,
    #[serde(default = "default_directions")]
    pub directions: usize,
    /// Explicit corpus; when empty a seeded random polynomial corpus is used.
    #[serde(default)]
    pub functions: Vec<String>,
    #[serde(default = "default_corpus")]
    pub corpus_size: usize,
    #[serde(default = "default_degree")]
    pub degree: u32,
    #[serde(default = "four")]
    pub q: f64,
    #[serde(default = "two")]
    pub p: f64,
}

fn default_corpus() -> usize {
    20
}

fn default_degree() -> u32 {
    2
}

fn four() -> f64 {
    4.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    // verify thm1.2
    pub u: Option<String>,
    #[serde(default = "default_subdomains")]
    pub subdomains: usize,
    // verify thm1.3
    pub g: Option<String>,
    pub g_plus: Option<String>,
    pub mu: Option<f64>,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub boxes: Vec<BoxSpec>,
    // verify prop4.2
    pub a: Option<String>,
    pub b: Option<String>,
    #[serde(default)]
    pub factors: Vec<f64>,
    // verify thm1.4
    pub f: Option<String>,
    #[serde(default)]
    pub thetas: Vec<f64>,
    #[serde(default)]
    pub eps: Vec<f64>,
    pub p: Option<f64>,
}

fn default_subdomains() -> usize {
    20
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        // resolve the family file against the config location so the echo is portable
        if let Some(file) = &cfg.family.file {
            if file.is_relative() {
                let joined = path.parent().unwrap_or(Path::new("")).join(file);
                cfg.family.file = Some(std::path::absolute(&joined).unwrap_or(joined));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn family(&self) -> anyhow::Result<VectorFieldFamily> {
        let fam = match (&self.family.name, &self.family.file) {
            (Some(name), None) => VectorFieldFamily::builtin(name).map_err(|e| config_err(e.to_string()))?,
            (None, Some(file)) => VectorFieldFamily::load(file).map_err(|e| config_err(format!("{}: {e}", file.display())))?,
            _ => return Err(config_err("family needs exactly one of `name` or `file`")),
        };
        let eps = self.family.regularize;
        if !(eps >= 0.0) {
            return Err(config_err("family.regularize must be non-negative"));
        }
        Ok(if eps > 0.0 { fam.regularized(eps) } else { fam })
    }

    pub fn grid_spec(&self) -> anyhow::Result<&GridConfig> {
        self.grid.as_ref().ok_or_else(|| config_err("missing [grid] table"))
    }

    pub fn grid(&self, n: usize) -> anyhow::Result<Arc<GridDomain>> {
        let g = self.grid_spec()?;
        if g.lo.len() != n || g.hi.len() != n {
            return Err(config_err(format!("grid box must have {n} coordinates")));
        }
        let bad = |e: hormander::Error| config_err(format!("grid: {e}"));
        let base = match &g.spacing {
            Some(s) => GridDomain::build_with_spacing(&g.lo, &g.hi, s).map_err(bad)?,
            None => GridDomain::build(&g.lo, &g.hi, g.h).map_err(bad)?,
        };
        Ok(Arc::new(match &g.mask {
            Some(src) => {
                let e = ScalarExpr::parse(src, n).map_err(|e| config_err(e.to_string()))?;
                base.mask_domain(|x| e.eval(x) > 0.0).map_err(bad)?
            }
            None => base,
        }))
    }

    pub fn section<'a, T>(value: &'a Option<T>, name: &str) -> anyhow::Result<&'a T> {
        value.as_ref().ok_or_else(|| config_err(format!("missing [{name}] table")))
    }
}

pub fn expr(src: &str, n: usize) -> anyhow::Result<ScalarExpr> {
    ScalarExpr::parse(src, n).map_err(|e| config_err(e.to_string()))
}
