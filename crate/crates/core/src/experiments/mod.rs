//! The five experiments behind the command line: configuration, runners and
//! CSV/SVG output.

pub mod abc;
pub mod config;
pub mod corr;
pub mod function_space;
pub mod output;
pub mod sampler;
pub mod sanity;
pub mod sgd;

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::resnet::ForwardOptions;
use crate::rng::{experiment_id, SeedSpec};
use crate::sdelim::SdeCoefficients;

pub use config::{
    AbcSpec, DrawSpec, ExperimentConfig, ExperimentKind, InputLayer, InputSpec, LawSpec, MatrixSource, ModelKind,
    ModelSpec, NoiseModeSpec, Scale, SgdSpec,
};
pub use output::{heatmap_svg, parse_heatmap_metadata, OutputDir};
pub use sampler::{initial_states, Draw, Sampler};

/// Agreement gate on two-sample KS statistics used by the sanity check.
pub const KS_GATE: f64 = 0.05;

/// Everything a runner needs besides the configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunContext {
    pub seed: u64,
    pub scale: Scale,
    pub out_dir: PathBuf,
    /// Directory relative paths in the config are resolved against.
    pub base_dir: PathBuf,
    pub data_root: Option<PathBuf>,
}

impl RunContext {
    /// Seed and scale from the config, dataset root from the environment.
    pub fn new(cfg: &ExperimentConfig, out_dir: impl Into<PathBuf>) -> Self {
        RunContext {
            seed: cfg.seed,
            scale: cfg.scale.unwrap_or_default(),
            out_dir: out_dir.into(),
            base_dir: PathBuf::from("."),
            data_root: crate::train::data::data_root(),
        }
    }

    pub fn seed(&self, stream: &str) -> SeedSpec {
        SeedSpec::new(self.seed).with_experiment(experiment_id(stream))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub kind: ExperimentKind,
    pub files: Vec<PathBuf>,
    /// Ordered key/value pairs, also written to `summary.csv`.
    pub summary: Vec<(String, String)>,
}

/// Runs `kind` and writes its outputs plus `config.toml` (the effective
/// configuration) and `summary.csv` into `ctx.out_dir`.
pub fn run(kind: ExperimentKind, cfg: &ExperimentConfig, ctx: &RunContext) -> Result<RunReport> {
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(Error::Config(format!("config is for `{}`, not `{}`", k.name(), kind.name())));
        }
    }
    let mut out = OutputDir::create(&ctx.out_dir)?;
    let summary = match kind {
        ExperimentKind::SanityCheck => sanity::run(cfg, ctx)?.write(&mut out)?,
        ExperimentKind::FunctionSpace => function_space::run(cfg, ctx)?.write(&mut out)?,
        ExperimentKind::CorrHeatmap => corr::run(cfg, ctx)?.write(&mut out)?,
        ExperimentKind::Sgd => sgd::run(cfg, ctx)?.write(&mut out)?,
        ExperimentKind::Abc => abc::run(cfg, ctx)?.write(&mut out)?,
    };
    let effective = ExperimentConfig { kind: Some(kind), seed: ctx.seed, scale: Some(ctx.scale), ..cfg.clone() };
    out.text("config.toml", &effective.to_toml()?)?;
    out.csv("summary.csv", &["key", "value"], summary.iter().map(|(k, v)| [k.clone(), v.clone()]))?;
    Ok(RunReport { kind, files: out.written, summary })
}

/// Runs `f` on a dedicated pool of `threads` workers (the global pool when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::Config("thread count must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// The configured network: the residual network for diffusion models, the
/// edge-of-chaos feedforward baseline otherwise.
pub fn model_sampler(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Sampler> {
    let m = &cfg.model;
    Ok(match m.kind {
        ModelKind::Diffusion => {
            let model = m.build(ctx.scale, &ctx.base_dir)?;
            Sampler::Resnet(model, ForwardOptions::default().with_noise(m.noise.into()))
        }
        ModelKind::Eoc => Sampler::Feedforward(m.build_feedforward(ctx.scale)?, m.noise.into()),
    })
}

/// Euler-Maruyama sampler of the limiting diffusion of the configured network.
pub fn sde_sampler(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<Sampler> {
    let model = cfg.model.build(ctx.scale, &ctx.base_dir)?;
    Ok(Sampler::Sde {
        coeffs: SdeCoefficients::from_model(&model)?,
        width: model.width,
        steps: cfg.draws.sde_steps.unwrap_or(model.depth),
        horizon: model.horizon,
        opts: ForwardOptions::default().with_noise(cfg.model.noise.into()),
    })
}

pub(crate) fn input_points(cfg: &ExperimentConfig, default: InputSpec) -> Result<(InputSpec, Vec<Vec<f64>>)> {
    let spec = cfg.inputs.clone().unwrap_or(default);
    let pts = spec.points()?;
    Ok((spec, pts))
}

/// Column label(s) for an input point: `z` or `z1,z2,...`.
pub(crate) fn point_header(points: &[Vec<f64>]) -> Vec<String> {
    match points.first().map_or(1, |p| p.len()) {
        1 => vec!["z".into()],
        k => (1..=k).map(|i| format!("z{i}")).collect(),
    }
}

pub(crate) fn kv(k: impl Into<String>, v: impl ToString) -> (String, String) {
    (k.into(), v.to_string())
}
