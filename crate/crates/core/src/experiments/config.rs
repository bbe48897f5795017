//! Declarative TOML experiment configuration.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::paramlaw::{FullyIidLaw, GeneralGaussianLaw, MatrixNormalLaw, NoiseMode, ParamLaw};
use crate::resnet::{eoc_solve, FeedforwardConfig};
use crate::train::GradientMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SanityCheck,
    FunctionSpace,
    CorrHeatmap,
    Sgd,
    Abc,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SanityCheck => "sanity_check",
            ExperimentKind::FunctionSpace => "function_space",
            ExperimentKind::CorrHeatmap => "corr_heatmap",
            ExperimentKind::Sgd => "sgd",
            ExperimentKind::Abc => "abc",
        }
    }
}

/// Size preset: `desk` (depth = width = 64) or `paper` (500).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

impl Scale {
    pub fn size(self) -> usize {
        match self {
            Scale::Desk => 64,
            Scale::Paper => 500,
        }
    }
}

impl std::str::FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::Config(format!("unknown scale `{other}` (expected desk or paper)"))),
        }
    }
}

/// Residual network with a diffusion limit, or the i.i.d. feedforward baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Diffusion,
    Eoc,
}

/// Map from raw inputs `z` to initial states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputLayer {
    /// `x_{0,d} = z_{d mod k}`.
    #[default]
    Copy,
    /// `x_0 = W_I z` with `W_I` standard normal, redrawn per parameter draw.
    Random,
}

/// A matrix given inline as rows or as a CSV file relative to the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSource {
    Rows(Vec<Vec<f64>>),
    File(PathBuf),
}

impl MatrixSource {
    pub fn load(&self, base: &Path, what: &str) -> Result<DMatrix<f64>> {
        let rows = match self {
            MatrixSource::Rows(r) => r.clone(),
            MatrixSource::File(p) => read_csv_matrix(&base.join(p))?,
        };
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        if n == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::Config(format!("{what}: matrix rows must be non-empty and equally long")));
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }
}

fn read_csv_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format { path: path.into(), msg: e.to_string() })?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format { path: path.into(), msg: e.to_string() })?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Format { path: path.into(), msg: format!("row {}: {e}", i + 1) })?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LawSpec {
    Iid {
        sigma_w2: f64,
        sigma_b2: f64,
    },
    MatrixNormal {
        sigma_wo: MatrixSource,
        sigma_wi: MatrixSource,
        sigma_b: MatrixSource,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_w: Option<MatrixSource>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_b: Option<Vec<f64>>,
    },
    General {
        cov_w: MatrixSource,
        cov_b: MatrixSource,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_w: Option<MatrixSource>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu_b: Option<Vec<f64>>,
    },
}

impl Default for LawSpec {
    fn default() -> Self {
        LawSpec::Iid { sigma_w2: 1.0, sigma_b2: 1.0 }
    }
}

impl LawSpec {
    pub fn build(&self, d: usize, base: &Path) -> Result<ParamLaw> {
        let mu = |m: &Option<MatrixSource>, b: &Option<Vec<f64>>| -> Result<(DMatrix<f64>, DVector<f64>)> {
            let mw = match m {
                Some(s) => s.load(base, "mu_w")?,
                None => DMatrix::zeros(d, d),
            };
            let mb = match b {
                Some(v) => DVector::from_column_slice(v),
                None => DVector::zeros(d),
            };
            Ok((mw, mb))
        };
        Ok(match self {
            LawSpec::Iid { sigma_w2, sigma_b2 } => ParamLaw::FullyIid(FullyIidLaw::from_variances(*sigma_w2, *sigma_b2)?),
            LawSpec::MatrixNormal { sigma_wo, sigma_wi, sigma_b, mu_w, mu_b } => {
                let (mw, mb) = mu(mu_w, mu_b)?;
                ParamLaw::MatrixNormal(MatrixNormalLaw::new(
                    mw,
                    mb,
                    sigma_wo.load(base, "sigma_wo")?,
                    sigma_wi.load(base, "sigma_wi")?,
                    sigma_b.load(base, "sigma_b")?,
                )?)
            }
            LawSpec::General { cov_w, cov_b, mu_w, mu_b } => {
                let (mw, mb) = mu(mu_w, mu_b)?;
                ParamLaw::General(GeneralGaussianLaw::new(
                    mw,
                    mb,
                    cov_w.load(base, "cov_w")?,
                    cov_b.load(base, "cov_b")?,
                )?)
            }
        })
    }
}

fn one() -> f64 {
    1.0
}

fn default_eoc_sigma_b2() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub kind: ModelKind,
    /// Overrides the scale preset when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "tanh")]
    pub phi: Activation,
    #[serde(default = "identity")]
    pub psi: Activation,
    #[serde(default)]
    pub law: LawSpec,
    #[serde(default)]
    pub noise: NoiseModeSpec,
    #[serde(default)]
    pub input_layer: InputLayer,
    /// Bias variance of the edge-of-chaos baseline (tanh only; relu uses 0).
    #[serde(default = "default_eoc_sigma_b2")]
    pub eoc_sigma_b2: f64,
}

fn tanh() -> Activation {
    Activation::Tanh
}

fn identity() -> Activation {
    Activation::Identity
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::Diffusion,
            depth: None,
            width: None,
            horizon: 1.0,
            phi: Activation::Tanh,
            psi: Activation::Identity,
            law: LawSpec::default(),
            noise: NoiseModeSpec::Auto,
            input_layer: InputLayer::Copy,
            eoc_sigma_b2: default_eoc_sigma_b2(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModeSpec {
    #[default]
    Auto,
    Materialized,
    Projected,
}

impl From<NoiseModeSpec> for NoiseMode {
    fn from(s: NoiseModeSpec) -> NoiseMode {
        match s {
            NoiseModeSpec::Auto => NoiseMode::Auto,
            NoiseModeSpec::Materialized => NoiseMode::Materialized,
            NoiseModeSpec::Projected => NoiseMode::Projected,
        }
    }
}

impl ModelSpec {
    pub fn depth(&self, scale: Scale) -> usize {
        self.depth.unwrap_or(scale.size())
    }

    pub fn width(&self, scale: Scale) -> usize {
        self.width.unwrap_or(scale.size())
    }

    pub fn build(&self, scale: Scale, base: &Path) -> Result<ModelConfig> {
        let d = self.width(scale);
        ModelConfig::new(self.depth(scale), d, self.horizon, self.phi, self.psi, self.law.build(d, base)?)
    }

    /// Edge-of-chaos feedforward network of the same depth and width.
    pub fn build_feedforward(&self, scale: Scale) -> Result<FeedforwardConfig> {
        let sb2 = match self.phi {
            Activation::Relu => 0.0,
            _ => self.eoc_sigma_b2,
        };
        let sw2 = eoc_solve(self.phi, sb2)?;
        FeedforwardConfig::new(self.depth(scale), self.width(scale), sw2, sb2, self.phi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputSpec {
    Scalars { values: Vec<f64> },
    Grid1d { lo: f64, hi: f64, n: usize },
    /// `n x n` points of `[lo, hi]^2`, row-major with the first coordinate slowest.
    Grid2d { lo: f64, hi: f64, n: usize },
}

impl InputSpec {
    pub fn points(&self) -> Result<Vec<Vec<f64>>> {
        let grid = |lo: f64, hi: f64, n: usize| -> Result<Vec<f64>> {
            if n == 0 || !(lo <= hi) {
                return Err(Error::Config(format!("invalid grid [{lo}, {hi}] with {n} points")));
            }
            Ok(crate::stats::linspace(lo, hi, n))
        };
        match self {
            InputSpec::Scalars { values } if values.is_empty() => Err(Error::Config("inputs.values is empty".into())),
            InputSpec::Scalars { values } => Ok(values.iter().map(|v| vec![*v]).collect()),
            InputSpec::Grid1d { lo, hi, n } => Ok(grid(*lo, *hi, *n)?.into_iter().map(|v| vec![v]).collect()),
            InputSpec::Grid2d { lo, hi, n } => {
                let g = grid(*lo, *hi, *n)?;
                Ok(g.iter().flat_map(|a| g.iter().map(move |b| vec![*a, *b])).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrawSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_draws: Option<usize>,
    /// Function draws written out in full.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_funcs: Option<usize>,
    /// Euler steps of the SDE sampler (default: the network depth).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kde_points: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(default = "both_modes")]
    pub modes: Vec<GradientMode>,
    pub learning_rate: f64,
    #[serde(default = "batch_200")]
    pub batch_size: usize,
    #[serde(default = "one_epoch")]
    pub epochs: usize,
    #[serde(default = "yes")]
    pub trainable_adaptation: bool,
    /// Leading training rows used (all when absent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_subset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_subset: Option<usize>,
    /// Use the built-in synthetic digits when no dataset root is configured.
    #[serde(default)]
    pub synthetic_fallback: bool,
}

fn both_modes() -> Vec<GradientMode> {
    vec![GradientMode::Reparametrized, GradientMode::Standard]
}

fn batch_200() -> usize {
    200
}

fn one_epoch() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl SgdSpec {
    pub fn grid(&self, scale: Scale) -> (Vec<usize>, Vec<usize>) {
        let (dl, dd) = match scale {
            Scale::Desk => (vec![8, 64], vec![32, 128]),
            Scale::Paper => (vec![100, 500], vec![100, 500]),
        };
        (
            self.depths.clone().unwrap_or(dl),
            self.widths.clone().unwrap_or(dd),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcSpec {
    /// `(z, y)` pairs.
    pub observations: Vec<[f64; 2]>,
    #[serde(default = "prior_1e4")]
    pub prior_draws: usize,
    #[serde(default = "keep_10")]
    pub keep: usize,
    /// Also run the edge-of-chaos feedforward arm.
    #[serde(default = "yes")]
    pub eoc_arm: bool,
}

fn prior_1e4() -> usize {
    10_000
}

fn keep_10() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<InputSpec>,
    #[serde(default)]
    pub draws: DrawSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sgd: Option<SgdSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abc: Option<AbcSpec>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
kind = "sanity_check"
seed = 7
scale = "desk"

[model]
depth = 16
phi = "swish"
psi = "tanh"
noise = "materialized"

[model.law]
kind = "matrix_normal"
sigma_wo = [[1.0, 0.0], [0.5, 1.0]]
sigma_wi = [[1.0, 0.0], [0.0, 2.0]]
sigma_b = [[1.0, 0.0], [0.0, 1.0]]
mu_b = [0.1, -0.1]

[inputs]
kind = "grid2d"
lo = -2.0
hi = 2.0
n = 3

[draws]
n_draws = 100
"#;

    #[test]
    fn round_trip_is_identity() {
        let a = ExperimentConfig::from_toml(FULL).unwrap();
        let b = ExperimentConfig::from_toml(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
        let empty = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(empty, ExperimentConfig::from_toml(&empty.to_toml().unwrap()).unwrap());
    }

    #[test]
    fn builds_models_and_inputs() {
        let c = ExperimentConfig::from_toml(FULL).unwrap();
        let m = c.model.clone();
        let mut m = m;
        m.width = Some(2);
        let cfg = m.build(Scale::Desk, Path::new(".")).unwrap();
        assert_eq!((cfg.depth, cfg.width), (16, 2));
        assert_eq!(c.inputs.unwrap().points().unwrap().len(), 9);
    }

    #[test]
    fn errors_carry_locations() {
        let err = ExperimentConfig::from_toml("[model]\ndepht = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("depht"), "{msg}");
        assert_eq!(err.category(), "config");
    }

    #[test]
    fn csv_matrix_source() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("s.csv"), "1, 0\n0, 3\n").unwrap();
        let m = MatrixSource::File("s.csv".into()).load(dir.path(), "s").unwrap();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]));
        std::fs::write(dir.path().join("bad.csv"), "1, x\n").unwrap();
        assert_eq!(MatrixSource::File("bad.csv".into()).load(dir.path(), "s").unwrap_err().category(), "format");
    }

    #[test]
    fn eoc_presets() {
        let mut m = ModelSpec { phi: Activation::Relu, ..ModelSpec::default() };
        let f = m.build_feedforward(Scale::Desk).unwrap();
        assert_eq!((f.sigma_w2, f.sigma_b2), (2.0, 0.0));
        m.phi = Activation::Tanh;
        let f = m.build_feedforward(Scale::Desk).unwrap();
        assert!((f.sigma_w2 - 1.760_954_639_6).abs() < 1e-6);
    }
}
