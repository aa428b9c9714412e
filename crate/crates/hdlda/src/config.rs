//! Run configuration: one JSON document, unknown keys rejected. Command-line
//! flags override individual fields after loading.

use std::path::{Path, PathBuf};

use hdlda_core::classifier::RuleSpec;
use hdlda_core::precision::{GlassoConfig, GlassoSpec, GridScale, LamConfig, PrecisionKind, RhoSelection};
use hdlda_core::shrinkage::{MeanMethod, ShrinkageConfig};
use hdlda_core::simlab::SimSetting;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subcommand {
    Simulate,
    Classify,
    Regions,
    ShrinkCompare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub subcommand: Option<Subcommand>,
    pub seed: u64,
    /// Worker threads for replications, folds and draws; 0 picks the core count.
    pub threads: usize,
    pub output_dir: PathBuf,
    pub simulate: SimulateConfig,
    pub classify: ClassifyConfig,
    pub regions: RegionsConfig,
    pub shrink_compare: ShrinkCompareConfig,
    pub glasso: GlassoParams,
    pub lam: LamParams,
    pub shrinkage: ShrinkageParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            subcommand: None,
            seed: 0,
            threads: 0,
            output_dir: PathBuf::from("out"),
            simulate: SimulateConfig::default(),
            classify: ClassifyConfig::default(),
            regions: RegionsConfig::default(),
            shrink_compare: ShrinkCompareConfig::default(),
            glasso: GlassoParams::default(),
            lam: LamParams::default(),
            shrinkage: ShrinkageParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub settings: Vec<String>,
    pub replications: usize,
    /// Column labels: `Oracle.prec`, `glasso`, `LAM`, `IR`.
    pub precisions: Vec<String>,
    /// Row labels: `NPEB1`, `NPEB2`, `NPMLE1`, `NPMLE2`, `SM`, `HARD1`, ...
    pub rules: Vec<String>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            settings: SimSetting::PRESET_IDS.iter().map(|s| s.to_string()).collect(),
            replications: 100,
            precisions: PrecisionKind::ALL.iter().map(|k| k.label().to_string()).collect(),
            rules: table_rows(),
        }
    }
}

fn table_rows() -> Vec<String> {
    RuleSpec::TABLE_ROWS.iter().map(|r| r.label()).collect()
}

/// Which column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl LabelColumn {
    /// Integers select by position, anything else by header name.
    pub fn parse(s: &str) -> Self {
        s.parse().map(LabelColumn::Index).unwrap_or_else(|_| LabelColumn::Name(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub path: PathBuf,
    #[serde(default = "default_label_column")]
    pub label_column: LabelColumn,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_true")]
    pub has_header: bool,
}

fn default_label_column() -> LabelColumn {
    LabelColumn::Index(0)
}

fn default_delimiter() -> char {
    ','
}

fn default_true() -> bool {
    true
}

impl DatasetFile {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into(), label_column: default_label_column(), delimiter: ',', has_header: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub data: Option<DatasetFile>,
    pub precisions: Vec<String>,
    pub rules: Vec<String>,
    /// Fit the whitener once on all rows instead of once per fold.
    pub fast_whitener: bool,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            data: None,
            precisions: [PrecisionKind::Glasso, PrecisionKind::Lam, PrecisionKind::Ir]
                .iter()
                .map(|k| k.label().to_string())
                .collect(),
            rules: table_rows(),
            fast_whitener: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionsConfig {
    /// Cell width of the `(a, b)` grid over `(0, 1) × (−1/2, 1/2)`.
    pub grid_step: f64,
    pub scan: bool,
    /// `(a, b)` points probed by the V-statistic scan.
    pub scan_points: Vec<[f64; 2]>,
    pub p_list: Vec<usize>,
    pub draws: usize,
    pub methods: Vec<String>,
    pub n1: usize,
    pub n2: usize,
}

impl Default for RegionsConfig {
    fn default() -> Self {
        Self {
            grid_step: 0.01,
            scan: false,
            scan_points: vec![[0.2, 0.1], [0.75, -0.1]],
            p_list: vec![512, 4096],
            draws: 100,
            methods: ["SM", "NPEB", "NPMLE"].iter().map(|s| s.to_string()).collect(),
            n1: 50,
            n2: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShrinkCompareConfig {
    pub data: Option<DatasetFile>,
    pub precision: String,
}

impl Default for ShrinkCompareConfig {
    fn default() -> Self {
        Self { data: None, precision: PrecisionKind::Ir.label().to_string() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoRule {
    /// `multiplier · median(S_jj) · √(log p / n)`.
    Universal,
    /// `rho` as given.
    Fixed,
    /// Held-out likelihood over `multipliers` times the off-diagonal scale.
    CrossValidated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridScaleParam {
    MeanAbsOffDiag,
    MaxAbsOffDiag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlassoParams {
    pub selection: RhoRule,
    pub multiplier: f64,
    pub rho: Option<f64>,
    pub folds: usize,
    pub multipliers: Vec<f64>,
    pub grid_scale: GridScaleParam,
    pub max_outer_iters: usize,
    pub tol: Option<f64>,
    pub penalize_diagonal: bool,
}

impl Default for GlassoParams {
    fn default() -> Self {
        let RhoSelection::CrossValidated { folds, multipliers, .. } = RhoSelection::default_cv() else {
            unreachable!("default_cv is cross-validated")
        };
        let solver = GlassoConfig::new(1.0);
        Self {
            selection: RhoRule::Universal,
            multiplier: 1.0,
            rho: None,
            folds,
            multipliers,
            grid_scale: GridScaleParam::MeanAbsOffDiag,
            max_outer_iters: solver.max_outer_iters,
            tol: solver.tol,
            penalize_diagonal: solver.penalize_diagonal,
        }
    }
}

impl GlassoParams {
    pub fn to_spec(&self) -> Result<GlassoSpec, ConfigError> {
        let selection = match self.selection {
            RhoRule::Universal => RhoSelection::Universal { multiplier: self.multiplier },
            RhoRule::Fixed => {
                RhoSelection::Fixed(self.rho.ok_or_else(|| invalid("glasso.rho is required with fixed selection"))?)
            }
            RhoRule::CrossValidated => RhoSelection::CrossValidated {
                folds: self.folds,
                multipliers: self.multipliers.clone(),
                scale: match self.grid_scale {
                    GridScaleParam::MeanAbsOffDiag => GridScale::MeanAbsOffDiag,
                    GridScaleParam::MaxAbsOffDiag => GridScale::MaxAbsOffDiag,
                },
            },
        };
        let solver = GlassoConfig {
            max_outer_iters: self.max_outer_iters,
            tol: self.tol,
            penalize_diagonal: self.penalize_diagonal,
            ..GlassoConfig::new(self.rho.unwrap_or(1.0))
        };
        Ok(GlassoSpec { selection, solver })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LamParams {
    pub split_fraction: f64,
    pub num_splits: usize,
    /// Use the two classes as the split instead of splitting each class.
    pub cross_groups: bool,
}

impl Default for LamParams {
    fn default() -> Self {
        let d = LamConfig::default();
        Self { split_fraction: d.split_fraction, num_splits: d.num_splits, cross_groups: d.cross_groups }
    }
}

impl LamParams {
    /// The split seed is overridden per fit by the caller's derived seed.
    pub fn to_config(&self) -> LamConfig {
        LamConfig {
            split_fraction: self.split_fraction,
            num_splits: self.num_splits,
            seed: 0,
            cross_groups: self.cross_groups,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShrinkageParams {
    pub hard_lambda_mult: f64,
    pub npeb_bandwidth: Option<f64>,
    pub npmle_grid_size: Option<usize>,
    pub npmle_max_iters: usize,
    pub npmle_tol: f64,
}

impl Default for ShrinkageParams {
    fn default() -> Self {
        let d = ShrinkageConfig::default();
        Self {
            hard_lambda_mult: d.hard_lambda_mult,
            npeb_bandwidth: d.npeb_bandwidth,
            npmle_grid_size: d.npmle_grid_size,
            npmle_max_iters: d.npmle_max_iters,
            npmle_tol: d.npmle_tol,
        }
    }
}

impl ShrinkageParams {
    pub fn to_config(&self) -> ShrinkageConfig {
        ShrinkageConfig {
            hard_lambda_mult: self.hard_lambda_mult,
            npeb_bandwidth: self.npeb_bandwidth,
            npmle_grid_size: self.npmle_grid_size,
            npmle_max_iters: self.npmle_max_iters,
            npmle_tol: self.npmle_tol,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory and
    /// thread count, which do not affect results.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { output_dir: PathBuf::new(), threads: 0, ..self.clone() };
        let digest = Sha256::digest(serde_json::to_vec(&canonical).expect("config serialises"));
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_precisions(tags: &[String]) -> Result<Vec<PrecisionKind>, ConfigError> {
    tags.iter()
        .map(|t| PrecisionKind::parse(t).ok_or_else(|| invalid(format!("unknown precision method {t:?}"))))
        .collect()
}

pub fn parse_rules(labels: &[String]) -> Result<Vec<RuleSpec>, ConfigError> {
    labels.iter().map(|l| RuleSpec::parse(l).ok_or_else(|| invalid(format!("unknown rule {l:?}")))).collect()
}

pub fn parse_mean_methods(tags: &[String]) -> Result<Vec<MeanMethod>, ConfigError> {
    tags.iter().map(|t| MeanMethod::parse(t).ok_or_else(|| invalid(format!("unknown mean method {t:?}")))).collect()
}

pub fn parse_settings(ids: &[String]) -> Result<Vec<SimSetting>, ConfigError> {
    ids.iter().map(|id| SimSetting::preset(id).ok_or_else(|| invalid(format!("unknown setting {id:?}")))).collect()
}
