//! One interface over the three ways of producing `x_{T,1}` for a set of inputs.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::paramlaw::NoiseMode;
use crate::resnet::{broadcast_tiled, feedforward_draw, resnet_draw, FeedforwardConfig, ForwardOptions};
use crate::rng::{fill_normal, SeedSpec, INPUT_LAYER};
use crate::sdelim::{simulate_draw, SdeCoefficients};

use super::config::InputLayer;

#[derive(Debug, Clone)]
pub enum Sampler {
    Resnet(ModelConfig, ForwardOptions),
    Sde {
        coeffs: SdeCoefficients,
        width: usize,
        steps: usize,
        horizon: f64,
        opts: ForwardOptions,
    },
    /// Reports the last-layer pre-activation.
    Feedforward(FeedforwardConfig, NoiseMode),
}

/// First output coordinate of every input for one parameter draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub first: Vec<f64>,
    pub diverged: Vec<bool>,
}

impl Draw {
    pub fn any_diverged(&self) -> bool {
        self.diverged.iter().any(|d| *d)
    }
}

impl Sampler {
    pub fn width(&self) -> usize {
        match self {
            Sampler::Resnet(m, _) => m.width,
            Sampler::Sde { width, .. } => *width,
            Sampler::Feedforward(f, _) => f.width,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Sampler::Resnet(..) => "resnet",
            Sampler::Sde { .. } => "sde",
            Sampler::Feedforward(..) => "eoc",
        }
    }

    /// Same sampler with its noise representation forced.
    pub fn with_noise(self, noise: NoiseMode) -> Self {
        match self {
            Sampler::Resnet(m, o) => Sampler::Resnet(m, o.with_noise(noise)),
            Sampler::Sde { coeffs, width, steps, horizon, opts } => Sampler::Sde { coeffs, width, steps, horizon, opts: opts.with_noise(noise) },
            Sampler::Feedforward(f, _) => Sampler::Feedforward(f, noise),
        }
    }

    /// One draw; `seed` already addresses the replicate.
    pub fn draw(&self, points: &[Vec<f64>], input: InputLayer, seed: SeedSpec) -> Result<Draw> {
        let x0 = initial_states(points, input, self.width(), seed)?;
        let from_batch = |p: crate::path::PathBatch| Draw {
            first: p.final_coord(0),
            diverged: (0..p.n_inputs()).map(|n| p.diverged(n)).collect(),
        };
        Ok(match self {
            Sampler::Resnet(m, o) => from_batch(resnet_draw(m, &x0, seed, *o)?),
            Sampler::Sde { coeffs, steps, horizon, opts, .. } => from_batch(simulate_draw(coeffs, &x0, *steps, *horizon, seed, *opts)?),
            Sampler::Feedforward(f, noise) => {
                let d = feedforward_draw(f, &x0, seed, *noise)?;
                Draw { first: d.pre.column(0).iter().copied().collect(), diverged: d.diverged }
            }
        })
    }

    /// `n` draws in parallel, draw `r` from `seed.with_replicate(r)`; the
    /// result does not depend on the worker count.
    pub fn draws(&self, points: &[Vec<f64>], input: InputLayer, n: usize, seed: SeedSpec) -> Result<Vec<Draw>> {
        self.draws_at(points, input, &(0..n).collect::<Vec<_>>(), seed)
    }

    /// Draws for an explicit list of replicate indices.
    pub fn draws_at(&self, points: &[Vec<f64>], input: InputLayer, replicates: &[usize], seed: SeedSpec) -> Result<Vec<Draw>> {
        if replicates.is_empty() {
            return Err(Error::Config("at least one draw is required".into()));
        }
        replicates
            .par_iter()
            .map(|&r| self.draw(points, input, seed.with_replicate(r as u64)))
            .collect()
    }
}

/// Initial states (`N x D`) of every input point under the chosen input layer.
pub fn initial_states(points: &[Vec<f64>], input: InputLayer, width: usize, seed: SeedSpec) -> Result<DMatrix<f64>> {
    let k = points.first().map_or(0, |p| p.len());
    if points.is_empty() || k == 0 || points.iter().any(|p| p.len() != k) {
        return Err(Error::Config("inputs must be non-empty points of equal dimension".into()));
    }
    Ok(match input {
        InputLayer::Copy => broadcast_tiled(points, width),
        InputLayer::Random => {
            let mut w = vec![0.0; width * k];
            fill_normal(&mut seed.with_layer(INPUT_LAYER).rng(), &mut w);
            let w = DMatrix::from_vec(width, k, w);
            DMatrix::from_fn(points.len(), width, |n, d| (0..k).map(|i| w[(d, i)] * points[n][i]).sum())
        }
    })
}
