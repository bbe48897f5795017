//! Random functions `z -> x_{T,1}(z)` on a grid, with pointwise quantile bands.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::stats::{summarize, SampleSummary};

use super::output::{line_chart_svg, num, OutputDir};
use super::sanity::{explosive_draws, refs};
use super::{input_points, kv, model_sampler, point_header, Draw, ExperimentConfig, InputSpec, RunContext};

pub const DEFAULT_DRAWS: usize = 500;
pub const DEFAULT_FUNCS: usize = 10;
pub const LEVELS: [f64; 3] = [0.05, 0.5, 0.95];

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSpaceResult {
    pub points: Vec<Vec<f64>>,
    pub draws: Vec<Draw>,
    pub n_funcs: usize,
    pub summary: SampleSummary,
}

pub fn default_grid() -> InputSpec {
    InputSpec::Grid1d { lo: -2.0, hi: 2.0, n: 400 }
}

pub fn run(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<FunctionSpaceResult> {
    let (_, points) = input_points(cfg, default_grid())?;
    let sampler = model_sampler(cfg, ctx)?;
    let n = cfg.draws.n_draws.unwrap_or(DEFAULT_DRAWS);
    let draws = sampler.draws(&points, cfg.model.input_layer, n, ctx.seed("function_space"))?;
    let summary = summarize(&values(&draws), &LEVELS)?;
    Ok(FunctionSpaceResult {
        points,
        n_funcs: cfg.draws.n_funcs.unwrap_or(DEFAULT_FUNCS).min(n),
        draws,
        summary,
    })
}

/// Draws x inputs matrix of `x_{T,1}`.
pub fn values(draws: &[Draw]) -> DMatrix<f64> {
    let n = draws.first().map_or(0, |d| d.first.len());
    DMatrix::from_fn(draws.len(), n, |r, i| draws[r].first[i])
}

fn sd(x: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = x.clone().count() as f64;
    let m = x.clone().sum::<f64>() / n;
    (x.map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

impl FunctionSpaceResult {
    /// Index of the grid point closest to the origin.
    pub fn origin_index(&self) -> usize {
        let r2 = |p: &Vec<f64>| p.iter().map(|v| v * v).sum::<f64>();
        (0..self.points.len())
            .min_by(|&a, &b| r2(&self.points[a]).total_cmp(&r2(&self.points[b])))
            .unwrap_or(0)
    }

    /// Mean over draws of the standard deviation across the grid.
    pub fn within_draw_sd(&self) -> f64 {
        let per: Vec<f64> = self.draws.iter().map(|d| sd(d.first.iter().copied())).collect();
        per.iter().sum::<f64>() / per.len() as f64
    }

    /// Standard deviation across draws at the grid point closest to the origin.
    pub fn across_draw_sd(&self) -> f64 {
        let o = self.origin_index();
        sd(self.draws.iter().map(|d| d.first[o]))
    }

    /// Small values mean nearly constant random functions.
    pub fn within_across_ratio(&self) -> f64 {
        self.within_draw_sd() / self.across_draw_sd()
    }

    pub fn write(&self, out: &mut OutputDir) -> Result<Vec<(String, String)>> {
        let zh = point_header(&self.points);
        let zcols = |i: usize| self.points[i].iter().map(|v| num(*v)).collect::<Vec<_>>();

        let mut h: Vec<String> = vec!["draw".into(), "input".into()];
        h.extend(zh.iter().cloned());
        h.push("x_T1".into());
        let mut rows = Vec::new();
        for (r, d) in self.draws.iter().take(self.n_funcs).enumerate() {
            for i in 0..self.points.len() {
                let mut row = vec![r.to_string(), i.to_string()];
                row.extend(zcols(i));
                row.push(num(d.first[i]));
                rows.push(row);
            }
        }
        out.csv("function_draws.csv", &refs(&h), rows)?;

        let mut h: Vec<String> = vec!["input".into()];
        h.extend(zh.iter().cloned());
        h.extend(["q05", "q50", "q95", "mean", "sd"].map(String::from));
        let s = &self.summary;
        let rows = (0..self.points.len()).map(|i| {
            let mut row = vec![i.to_string()];
            row.extend(zcols(i));
            row.extend(s.quantiles.iter().map(|(_, q)| num(q[i])));
            row.extend([num(s.mean[i]), num(s.variance[i].sqrt())]);
            row
        });
        out.csv("function_quantiles.csv", &refs(&h), rows)?;

        if zh.len() == 1 {
            let xs: Vec<f64> = self.points.iter().map(|p| p[0]).collect();
            let mut series: Vec<(String, Vec<f64>)> = s
                .quantiles
                .iter()
                .map(|(l, q)| (format!("quantile {l}"), q.clone()))
                .collect();
            series.extend(self.draws.iter().take(self.n_funcs).enumerate().map(|(r, d)| (format!("draw {r}"), d.first.clone())));
            out.text("function_space.svg", &line_chart_svg("x_T1 against z", &xs, &series))?;
        }

        Ok(vec![
            kv("n_draws", self.draws.len()),
            kv("n_inputs", self.points.len()),
            kv("explosive_draws", explosive_draws(&self.draws)),
            kv("within_draw_sd", num(self.within_draw_sd())),
            kv("across_draw_sd_at_origin", num(self.across_draw_sd())),
            kv("within_across_ratio", num(self.within_across_ratio())),
        ])
    }
}
