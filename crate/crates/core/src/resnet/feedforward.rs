//! Plain i.i.d. feedforward network, `x_{l+1} = phi(A_l x_l + a_l)` with
//! `A_l ~ N(0, sigma_w2 / width)` and `a_l ~ N(0, sigma_b2)` entry-wise.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::paramlaw::{FullyIidLaw, NoiseMode, ParamLaw};
use crate::rng::SeedSpec;

use super::eoc::eoc_solve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedforwardConfig {
    pub depth: usize,
    pub width: usize,
    pub sigma_w2: f64,
    pub sigma_b2: f64,
    pub activation: Activation,
}

impl FeedforwardConfig {
    pub fn new(depth: usize, width: usize, sigma_w2: f64, sigma_b2: f64, activation: Activation) -> Result<Self> {
        let cfg = FeedforwardConfig { depth, width, sigma_w2, sigma_b2, activation };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Edge-of-chaos variances for `activation` (`sigma_b2` is ignored by relu).
    pub fn edge_of_chaos(depth: usize, width: usize, activation: Activation, sigma_b2: f64) -> Result<Self> {
        let sigma_w2 = eoc_solve(activation, sigma_b2)?;
        Self::new(depth, width, sigma_w2, sigma_b2, activation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.width == 0 {
            return Err(Error::Config("feedforward depth and width must be >= 1".into()));
        }
        for (name, v) in [("sigma_w2", self.sigma_w2), ("sigma_b2", self.sigma_b2)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    fn law(&self) -> ParamLaw {
        ParamLaw::FullyIid(FullyIidLaw::from_variances(self.sigma_w2, self.sigma_b2).expect("validated"))
    }
}

/// Last-layer pre-activations `h_L` and outputs `phi(h_L)`, each `N x width`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardDraw {
    pub pre: DMatrix<f64>,
    pub post: DMatrix<f64>,
    pub diverged: Vec<bool>,
}

pub fn feedforward_draw(
    cfg: &FeedforwardConfig,
    x0: &DMatrix<f64>,
    seed: SeedSpec,
    noise: NoiseMode,
) -> Result<FeedforwardDraw> {
    cfg.validate()?;
    if x0.ncols() != cfg.width {
        return Err(Error::dim("feedforward input width", cfg.width, x0.ncols()));
    }
    let law = cfg.law();
    let mode = law.resolve_mode(noise, cfg.width, x0.nrows())?;
    let mut x = x0.transpose();
    let mut pre = x.clone();
    for l in 0..cfg.depth {
        let mut rng = seed.with_layer(l as u64).rng();
        pre = law.sample_noise_columns(&x, mode, &mut rng);
        x = pre.map(|v| cfg.activation.eval(v));
    }
    let diverged = (0..x.ncols())
        .map(|i| pre.column(i).iter().any(|v| !v.is_finite()))
        .collect();
    Ok(FeedforwardDraw { pre: pre.transpose(), post: x.transpose(), diverged })
}

pub fn feedforward_forward(
    cfg: &FeedforwardConfig,
    x0: &DMatrix<f64>,
    n_draws: usize,
    seed: SeedSpec,
    noise: NoiseMode,
) -> Result<Vec<FeedforwardDraw>> {
    (0..n_draws)
        .into_par_iter()
        .map(|r| feedforward_draw(cfg, x0, seed.with_replicate(r as u64), noise))
        .collect()
}
