//! Rejection ABC over random functions: keep the prior draws whose outputs at
//! the observed inputs are closest (l2) to the observed targets.

use crate::error::{Error, Result};
use crate::paramlaw::NoiseMode;
use crate::rng::SeedSpec;
use crate::stats::quantile_sorted;

use super::function_space::default_grid;
use super::output::{num, OutputDir};
use super::sampler::Sampler;
use super::{input_points, kv, model_sampler, AbcSpec, ExperimentConfig, InputLayer, InputSpec, ModelKind, RunContext};

pub const DEFAULT_FUNCS: usize = 10;
pub const DISTANCE_LEVELS: [f64; 5] = [0.001, 0.01, 0.05, 0.5, 1.0];

/// Indices of the `k` smallest distances in increasing order; ties go to the
/// lower index and `NaN` sorts last.
pub fn bottom_k(distances: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > distances.len() {
        return Err(Error::Config(format!("keep must be in 1..={} (got {k})", distances.len())));
    }
    let key = |i: usize| if distances[i].is_nan() { f64::INFINITY } else { distances[i] };
    let mut idx: Vec<usize> = (0..distances.len()).collect();
    idx.select_nth_unstable_by(k - 1, |&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
    Ok(idx)
}

pub fn l2_distance(outputs: &[f64], targets: &[f64]) -> f64 {
    outputs.iter().zip(targets).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbcArm {
    pub name: String,
    pub distances: Vec<f64>,
    pub accepted: Vec<usize>,
    /// `(draw, x_T1 on the grid)` for the first prior draws.
    pub prior: Vec<(usize, Vec<f64>)>,
    pub posterior: Vec<(usize, Vec<f64>)>,
}

impl AbcArm {
    pub fn accepted_mean_distance(&self) -> f64 {
        self.accepted.iter().map(|&i| self.distances[i]).sum::<f64>() / self.accepted.len() as f64
    }

    /// Empirical quantile of the finite prior distances.
    pub fn distance_quantile(&self, level: f64) -> f64 {
        let mut d: Vec<f64> = self.distances.iter().copied().filter(|v| v.is_finite()).collect();
        if d.is_empty() {
            return f64::NAN;
        }
        d.sort_by(f64::total_cmp);
        quantile_sorted(&d, level)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbcResult {
    pub grid: Vec<f64>,
    pub observations: Vec<[f64; 2]>,
    pub arms: Vec<AbcArm>,
}

/// Runs one arm. Noise is materialized so each column depends only on its own
/// input: re-running accepted draws on the grid reproduces their outputs at
/// the observed inputs exactly.
pub fn run_arm(
    name: &str,
    sampler: &Sampler,
    input: InputLayer,
    spec: &AbcSpec,
    grid: &[Vec<f64>],
    n_funcs: usize,
    seed: SeedSpec,
) -> Result<AbcArm> {
    let sampler = sampler.clone().with_noise(NoiseMode::Materialized);
    let obs: Vec<Vec<f64>> = spec.observations.iter().map(|o| vec![o[0]]).collect();
    let targets: Vec<f64> = spec.observations.iter().map(|o| o[1]).collect();
    if spec.keep > spec.prior_draws {
        return Err(Error::Config(format!("abc.keep ({}) exceeds abc.prior_draws ({})", spec.keep, spec.prior_draws)));
    }
    let draws = sampler.draws(&obs, input, spec.prior_draws, seed)?;
    let distances: Vec<f64> = draws
        .iter()
        .map(|d| if d.any_diverged() { f64::INFINITY } else { l2_distance(&d.first, &targets) })
        .collect();
    let accepted = bottom_k(&distances, spec.keep)?;
    let prior_idx: Vec<usize> = (0..n_funcs.min(spec.prior_draws)).collect();
    let on_grid = |idx: &[usize]| -> Result<Vec<(usize, Vec<f64>)>> {
        if idx.is_empty() {
            return Ok(Vec::new());
        }
        let d = sampler.draws_at(grid, input, idx, seed)?;
        Ok(idx.iter().copied().zip(d.into_iter().map(|d| d.first)).collect())
    };
    Ok(AbcArm {
        name: name.into(),
        prior: on_grid(&prior_idx)?,
        posterior: on_grid(&accepted)?,
        distances,
        accepted,
    })
}

pub fn run(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<AbcResult> {
    let spec = cfg.abc.as_ref().ok_or_else(|| Error::Config("missing [abc] section".into()))?;
    if spec.observations.is_empty() {
        return Err(Error::Config("abc.observations is empty".into()));
    }
    let (gspec, grid) = input_points(cfg, default_grid())?;
    let (lo, hi) = match gspec {
        InputSpec::Grid1d { lo, hi, .. } => (lo, hi),
        InputSpec::Scalars { ref values } => (
            values.iter().cloned().fold(f64::INFINITY, f64::min),
            values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ),
        InputSpec::Grid2d { .. } => return Err(Error::Config("abc takes scalar inputs".into())),
    };
    if let Some(o) = spec.observations.iter().find(|o| !(lo..=hi).contains(&o[0])) {
        return Err(Error::Config(format!("observation input {} lies outside the grid [{lo}, {hi}]", o[0])));
    }
    let n_funcs = cfg.draws.n_funcs.unwrap_or(DEFAULT_FUNCS);
    let input = cfg.model.input_layer;
    let mut arms = vec![run_arm(
        "model",
        &model_sampler(cfg, ctx)?,
        input,
        spec,
        &grid,
        n_funcs,
        ctx.seed("abc/model"),
    )?];
    if spec.eoc_arm && cfg.model.kind != ModelKind::Eoc {
        let eoc = Sampler::Feedforward(cfg.model.build_feedforward(ctx.scale)?, NoiseMode::Materialized);
        arms.push(run_arm("eoc", &eoc, input, spec, &grid, n_funcs, ctx.seed("abc/eoc"))?);
    }
    Ok(AbcResult { grid: grid.iter().map(|p| p[0]).collect(), observations: spec.observations.clone(), arms })
}

impl AbcResult {
    pub fn write(&self, out: &mut OutputDir) -> Result<Vec<(String, String)>> {
        out.csv(
            "abc_observations.csv",
            &["z", "y"],
            self.observations.iter().map(|o| vec![num(o[0]), num(o[1])]),
        )?;
        let mut s = vec![kv("n_observations", self.observations.len())];
        for arm in &self.arms {
            let a = &arm.name;
            let fn_rows = |set: &[(usize, Vec<f64>)], with_distance: bool| {
                let mut rows = Vec::new();
                for (rank, (draw, ys)) in set.iter().enumerate() {
                    for (z, y) in self.grid.iter().zip(ys) {
                        let mut row = vec![rank.to_string(), draw.to_string()];
                        if with_distance {
                            row.push(num(arm.distances[*draw]));
                        }
                        row.extend([num(*z), num(*y)]);
                        rows.push(row);
                    }
                }
                rows
            };
            out.csv(&format!("abc_{a}_prior.csv"), &["index", "draw", "z", "x_T1"], fn_rows(&arm.prior, false))?;
            out.csv(
                &format!("abc_{a}_posterior.csv"),
                &["rank", "draw", "distance", "z", "x_T1"],
                fn_rows(&arm.posterior, true),
            )?;
            out.csv(
                &format!("abc_{a}_distances.csv"),
                &["level", "distance"],
                DISTANCE_LEVELS.iter().map(|&l| vec![num(l), num(arm.distance_quantile(l))]),
            )?;
            s.push(kv(format!("{a}_prior_draws"), arm.distances.len()));
            s.push(kv(format!("{a}_accepted"), arm.accepted.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")));
            s.push(kv(format!("{a}_accepted_mean_distance"), num(arm.accepted_mean_distance())));
            s.push(kv(format!("{a}_prior_distance_q01"), num(arm.distance_quantile(0.01))));
        }
        Ok(s)
    }
}
