//! Training grid over depth, width and gradient mode.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rng::SeedSpec;
use crate::train::data::{load_mnist, synthetic_digits, Dataset, Split, DATA_ENV};
use crate::train::{moving_average, sgd_run, GradientMode, TrainConfig, TrainTrace};

use super::output::{line_chart_svg, num, OutputDir};
use super::{kv, ExperimentConfig, RunContext};

pub const MA_WINDOW: usize = 10;
const SYNTHETIC_TRAIN: usize = 2_000;
const SYNTHETIC_TEST: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct SgdResult {
    pub data_source: String,
    pub n_train: usize,
    pub traces: Vec<TrainTrace>,
}

/// Training and test sets: MNIST from the dataset root when one is set,
/// otherwise the synthetic digits if the config allows it.
pub fn load_data(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<(Dataset, Dataset, String)> {
    let spec = sgd_spec(cfg)?;
    let take = |d: Dataset, n: Option<usize>| -> Result<Dataset> {
        match n {
            Some(n) if n < d.len() => d.slice(0, n),
            _ => Ok(d),
        }
    };
    if let Some(root) = &ctx.data_root {
        let train = take(load_mnist(root, Split::Train)?, spec.train_subset)?;
        let test = take(load_mnist(root, Split::Test)?, spec.test_subset)?;
        return Ok((train, test, format!("mnist:{}", root.display())));
    }
    if !spec.synthetic_fallback {
        return Err(Error::Config(format!(
            "no dataset: set {DATA_ENV} to a directory with MNIST IDX files or enable sgd.synthetic_fallback"
        )));
    }
    let n_train = spec.train_subset.unwrap_or(SYNTHETIC_TRAIN);
    let n_test = spec.test_subset.unwrap_or(SYNTHETIC_TEST);
    // one pool so that both splits share the class prototypes
    let all = synthetic_digits(n_train + n_test, ctx.seed("sgd/data"));
    Ok((all.slice(0, n_train)?, all.slice(n_train, n_test)?, "synthetic".into()))
}

fn sgd_spec(cfg: &ExperimentConfig) -> Result<&super::SgdSpec> {
    cfg.sgd.as_ref().ok_or_else(|| Error::Config("missing [sgd] section".into()))
}

pub fn run(cfg: &ExperimentConfig, ctx: &RunContext) -> Result<SgdResult> {
    let (train, test, source) = load_data(cfg, ctx)?;
    run_on(cfg, ctx, &train, &test, source)
}

/// Same as [`run`] with the data supplied by the caller.
pub fn run_on(cfg: &ExperimentConfig, ctx: &RunContext, train: &Dataset, test: &Dataset, source: String) -> Result<SgdResult> {
    let spec = sgd_spec(cfg)?;
    let (depths, widths) = spec.grid(ctx.scale);
    let mut cells = Vec::new();
    for &mode in &spec.modes {
        for &l in &depths {
            for &d in &widths {
                cells.push((mode, l, d));
            }
        }
    }
    let m = &cfg.model;
    let seed = ctx.seed("sgd");
    let traces = cells
        .par_iter()
        .map(|&(mode, l, d)| {
            let model = ModelConfig::new(l, d, m.horizon, m.phi, m.psi, m.law.build(d, &ctx.base_dir)?)?;
            let tc = TrainConfig {
                mode,
                learning_rate: spec.learning_rate,
                batch_size: spec.batch_size,
                epochs: spec.epochs,
                trainable_adaptation: spec.trainable_adaptation,
            };
            sgd_run(&model, &tc, cell_seed(seed, l, d), train, Some(test))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SgdResult { data_source: source, n_train: train.len(), traces })
}

// both modes of a cell share the seed, hence the same initial function
fn cell_seed(seed: SeedSpec, depth: usize, width: usize) -> SeedSpec {
    seed.with_layer(((depth as u64) << 32) | width as u64)
}

/// Number of windows where the moving average fails to strictly decrease,
/// and the largest such rise.
pub fn moving_average_violations(losses: &[f64], window: usize) -> (usize, f64) {
    let ma = moving_average(losses, window);
    let mut count = 0;
    let mut worst: f64 = 0.0;
    for w in ma.windows(2) {
        if !(w[1] < w[0]) {
            count += 1;
            worst = worst.max(w[1] - w[0]);
        }
    }
    (count, worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSummary {
    pub cells: usize,
    pub all_ma_decreasing: bool,
    pub ma_violations: usize,
    pub any_diverged: bool,
    /// Largest over smallest final loss among non-diverged cells.
    pub final_loss_spread: f64,
}

impl SgdResult {
    pub fn mode_summary(&self, mode: GradientMode) -> ModeSummary {
        let cells: Vec<&TrainTrace> = self.traces.iter().filter(|t| t.mode == mode).collect();
        let mut violations = 0;
        let mut all_dec = !cells.is_empty();
        for t in &cells {
            let (v, _) = moving_average_violations(&t.losses, MA_WINDOW);
            violations += v;
            all_dec &= v == 0 && !t.diverged && t.losses.len() > MA_WINDOW;
        }
        let finals: Vec<f64> = cells.iter().filter(|t| !t.diverged).map(|t| t.final_loss()).collect();
        let max = finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = finals.iter().cloned().fold(f64::INFINITY, f64::min);
        ModeSummary {
            cells: cells.len(),
            all_ma_decreasing: all_dec,
            ma_violations: violations,
            any_diverged: cells.iter().any(|t| t.diverged),
            final_loss_spread: if finals.is_empty() { f64::NAN } else { max / min },
        }
    }

    pub fn write(&self, out: &mut OutputDir) -> Result<Vec<(String, String)>> {
        let mut table = Vec::new();
        let mut series = Vec::new();
        let mut longest = 0;
        for t in &self.traces {
            let name = format!("sgd_{}_L{}_D{}", t.mode.name(), t.depth, t.width);
            let ma = moving_average(&t.losses, MA_WINDOW);
            let rows = t.losses.iter().enumerate().map(|(b, l)| {
                let m = if b + 1 >= MA_WINDOW { num(ma[b + 1 - MA_WINDOW]) } else { String::new() };
                vec![b.to_string(), num(*l), m]
            });
            out.csv(&format!("{name}.csv"), &["batch", "loss", "moving_average"], rows)?;
            let (v, rise) = moving_average_violations(&t.losses, MA_WINDOW);
            table.push(vec![
                t.mode.name().to_string(),
                t.depth.to_string(),
                t.width.to_string(),
                t.losses.len().to_string(),
                num(t.final_loss()),
                num(t.train_accuracy),
                t.test_accuracy.map(num).unwrap_or_default(),
                t.diverged.to_string(),
                v.to_string(),
                num(rise),
            ]);
            longest = longest.max(t.losses.len());
            series.push((name, t.losses.iter().map(|l| l.ln()).collect::<Vec<f64>>()));
        }
        out.csv(
            "sgd_summary.csv",
            &["mode", "depth", "width", "batches", "final_loss", "train_accuracy", "test_accuracy", "diverged", "ma_violations", "ma_max_rise"],
            table,
        )?;
        let xs: Vec<f64> = (0..longest).map(|b| b as f64).collect();
        let series: Vec<(String, Vec<f64>)> = series
            .into_iter()
            .map(|(n, mut y)| {
                y.resize(longest, f64::NAN);
                (n, y)
            })
            .collect();
        out.text("sgd_losses.svg", &line_chart_svg("log batch loss", &xs, &series))?;

        let mut s = vec![kv("data_source", &self.data_source), kv("n_train", self.n_train)];
        for mode in [GradientMode::Reparametrized, GradientMode::Standard] {
            let m = self.mode_summary(mode);
            if m.cells == 0 {
                continue;
            }
            let p = mode.name();
            s.push(kv(format!("{p}_all_ma_decreasing"), m.all_ma_decreasing));
            s.push(kv(format!("{p}_ma_violations"), m.ma_violations));
            s.push(kv(format!("{p}_any_diverged"), m.any_diverged));
            s.push(kv(format!("{p}_final_loss_spread"), num(m.final_loss_spread)));
        }
        Ok(s)
    }
}
