//! Discrete network against its diffusion limit, first output coordinate.

use crate::error::{Error, Result};
use crate::stats::{kde1d, ks_two_sample, linspace, summarize1, KsResult};

use super::output::{num, OutputDir};
use super::{input_points, kv, model_sampler, point_header, sde_sampler, Draw, ExperimentConfig, InputSpec, RunContext, KS_GATE};

pub const DEFAULT_DRAWS: usize = 10_000;
const KDE_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SanityResult {
    pub points: Vec<Vec<f64>>,
    pub resnet: Vec<Draw>,
    pub sde: Vec<Draw>,
    pub kde_points: usize,
}

pub fn run(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<SanityResult> {
    let (_, points) = input_points(cfg, InputSpec::Scalars { values: vec![0.0, 1.0] })?;
    let n = cfg.draws.n_draws.unwrap_or(DEFAULT_DRAWS);
    let net = model_sampler(cfg, ctx)?;
    if !matches!(net, super::Sampler::Resnet(..)) {
        return Err(Error::Config("sanity_check needs a diffusion model".into()));
    }
    let sde = sde_sampler(cfg, ctx)?;
    let input = cfg.model.input_layer;
    Ok(SanityResult {
        resnet: net.draws(&points, input, n, ctx.seed("sanity_check/resnet"))?,
        sde: sde.draws(&points, input, n, ctx.seed("sanity_check/sde"))?,
        points,
        kde_points: cfg.draws.kde_points.unwrap_or(KDE_POINTS),
    })
}

/// Finite (non-exploded) samples of input `i`.
pub fn samples(draws: &[Draw], i: usize) -> Vec<f64> {
    draws.iter().filter(|d| !d.diverged[i]).map(|d| d.first[i]).collect()
}

pub fn explosive_draws(draws: &[Draw]) -> usize {
    draws.iter().filter(|d| d.any_diverged()).count()
}

impl SanityResult {
    pub fn ks(&self, i: usize) -> Result<KsResult> {
        ks_two_sample(&samples(&self.resnet, i), &samples(&self.sde, i))
    }

    pub fn write(&self, out: &mut OutputDir) -> Result<Vec<(String, String)>> {
        let zh = point_header(&self.points);
        let zcols = |i: usize| self.points[i].iter().map(|v| num(*v)).collect::<Vec<_>>();

        let mut header: Vec<String> = vec!["sampler".into(), "draw".into(), "input".into()];
        header.extend(zh.iter().cloned());
        header.extend(["x_T1".into(), "diverged".into()]);
        let mut rows = Vec::new();
        for (name, draws) in [("resnet", &self.resnet), ("sde", &self.sde)] {
            for (r, d) in draws.iter().enumerate() {
                for i in 0..self.points.len() {
                    let mut row = vec![name.to_string(), r.to_string(), i.to_string()];
                    row.extend(zcols(i));
                    row.extend([num(d.first[i]), d.diverged[i].to_string()]);
                    rows.push(row);
                }
            }
        }
        out.csv("sanity_draws.csv", &refs(&header), rows)?;

        let mut kde_rows = Vec::new();
        let mut stat_rows = Vec::new();
        let mut summary = vec![kv("n_draws", self.resnet.len())];
        for i in 0..self.points.len() {
            let (a, b) = (samples(&self.resnet, i), samples(&self.sde, i));
            let ks = ks_two_sample(&a, &b)?;
            let lo = a.iter().chain(&b).cloned().fold(f64::INFINITY, f64::min);
            let hi = a.iter().chain(&b).cloned().fold(f64::NEG_INFINITY, f64::max);
            let grid = linspace(lo, hi, self.kde_points);
            // a point mass has no density; its KDE rows are simply left out
            if let (Ok(ka), Ok(kb)) = (kde1d(&a, &grid), kde1d(&b, &grid)) {
                for (k, x) in grid.iter().enumerate() {
                    let mut row = vec![i.to_string()];
                    row.extend(zcols(i));
                    row.extend([num(*x), num(ka.density[k]), num(kb.density[k])]);
                    kde_rows.push(row);
                }
            }
            for (name, s, draws) in [("resnet", &a, &self.resnet), ("sde", &b, &self.sde)] {
                let m = summarize1(s, &[])?;
                let mut row = vec![i.to_string()];
                row.extend(zcols(i));
                row.extend([
                    name.to_string(),
                    m.n.to_string(),
                    num(m.mean[0]),
                    num(m.variance[0]),
                    (draws.len() - s.len()).to_string(),
                ]);
                stat_rows.push(row);
            }
            summary.push(kv(format!("ks_statistic_{i}"), num(ks.statistic)));
            summary.push(kv(format!("ks_threshold_alpha_{i}"), num(ks.threshold)));
            summary.push(kv(format!("ks_pass_gate_{i}"), ks.statistic <= KS_GATE));
        }
        let mut kh: Vec<String> = vec!["input".into()];
        kh.extend(zh.iter().cloned());
        kh.extend(["x".into(), "density_resnet".into(), "density_sde".into()]);
        out.csv("sanity_kde.csv", &refs(&kh), kde_rows)?;

        let mut sh: Vec<String> = vec!["input".into()];
        sh.extend(zh.iter().cloned());
        sh.extend(["sampler", "n_finite", "mean", "variance", "explosive"].map(String::from));
        out.csv("sanity_stats.csv", &refs(&sh), stat_rows)?;

        if self.points.len() >= 2 {
            let mut rows = Vec::new();
            for (name, draws) in [("resnet", &self.resnet), ("sde", &self.sde)] {
                for (r, d) in draws.iter().enumerate() {
                    rows.push(vec![name.to_string(), r.to_string(), num(d.first[0]), num(d.first[1])]);
                }
            }
            out.csv("sanity_scatter.csv", &["sampler", "draw", "x_T1_input0", "x_T1_input1"], rows)?;
        }
        summary.push(kv("ks_gate", num(KS_GATE)));
        summary.push(kv("explosive_draws_resnet", explosive_draws(&self.resnet)));
        summary.push(kv("explosive_draws_sde", explosive_draws(&self.sde)));
        Ok(summary)
    }
}

pub(crate) fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}
