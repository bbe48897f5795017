//! Correlation of `x_{T,1}` between pairs of scalar inputs.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::stats::corr_over_inputs;

use super::function_space::values;
use super::output::{heatmap_svg, matrix_rows, num, OutputDir};
use super::sanity::{explosive_draws, refs};
use super::{input_points, kv, model_sampler, ExperimentConfig, InputSpec, RunContext};

pub const DEFAULT_DRAWS: usize = 2_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CorrResult {
    pub z: Vec<f64>,
    /// `NaN` rows and columns mark inputs without variance across draws.
    pub corr: DMatrix<f64>,
    pub degenerate: Vec<usize>,
    pub n_draws: usize,
    pub explosive_draws: usize,
}

pub fn run(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<CorrResult> {
    let (spec, points) = input_points(cfg, InputSpec::Grid1d { lo: -2.0, hi: 2.0, n: 21 })?;
    if matches!(spec, InputSpec::Grid2d { .. }) {
        return Err(crate::Error::Config("corr_heatmap takes scalar inputs (scalars or grid1d)".into()));
    }
    let sampler = model_sampler(cfg, ctx)?;
    let n = cfg.draws.n_draws.unwrap_or(DEFAULT_DRAWS);
    let draws = sampler.draws(&points, cfg.model.input_layer, n, ctx.seed("corr_heatmap"))?;
    let (corr, degenerate) = correlation_with_gaps(&values(&draws))?;
    Ok(CorrResult {
        z: points.iter().map(|p| p[0]).collect(),
        corr,
        degenerate,
        n_draws: n,
        explosive_draws: explosive_draws(&draws),
    })
}

/// Correlation over the inputs that vary; constant inputs get `NaN` entries
/// and are listed instead of failing the whole matrix.
pub fn correlation_with_gaps(v: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let k = v.ncols();
    let varies = |c: usize| v.column(c).iter().any(|x| *x != v[(0, c)]);
    let (live, dead): (Vec<usize>, Vec<usize>) = (0..k).partition(|&c| v.nrows() > 0 && varies(c));
    let mut out = DMatrix::from_element(k, k, f64::NAN);
    if !live.is_empty() {
        let sub = corr_over_inputs(&v.select_columns(&live))?;
        for (a, &i) in live.iter().enumerate() {
            for (b, &j) in live.iter().enumerate() {
                out[(i, j)] = sub[(a, b)];
            }
        }
    }
    Ok((out, dead))
}

impl CorrResult {
    /// Correlation between the first and last input.
    pub fn corner(&self) -> f64 {
        self.corr[(0, self.z.len() - 1)]
    }

    pub fn write(&self, out: &mut OutputDir) -> Result<Vec<(String, String)>> {
        let mut h = vec!["z".to_string()];
        h.extend(self.z.iter().map(|v| num(*v)));
        out.csv("corr.csv", &refs(&h), matrix_rows(&self.z, &self.corr))?;
        let title = format!("corr of x_T1 over {} draws", self.n_draws);
        out.text("corr.svg", &heatmap_svg(&title, &self.z, &self.corr))?;
        let dead: Vec<String> = self.degenerate.iter().map(|i| i.to_string()).collect();
        Ok(vec![
            kv("n_draws", self.n_draws),
            kv("n_inputs", self.z.len()),
            kv("corr_first_last", num(self.corner())),
            kv("explosive_draws", self.explosive_draws),
            kv("degenerate_inputs", dead.join(" ")),
        ])
    }
}
