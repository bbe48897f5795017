//! Discrete-depth forward propagation.
//!
//! [`resnet_forward`] runs the identity ResNet `x <- x + phi(dW psi(x) + db)`
//! with depth-scaled parameters; [`feedforward`] holds the i.i.d.
//! edge-of-chaos baseline it is compared against.

pub mod eoc;
pub mod feedforward;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::paramlaw::{apply_columns, NoiseMode, ParamIncrement};
use crate::path::{ExplosionGuard, PathBatch, Propagator, Retention};
use crate::rng::SeedSpec;

pub use eoc::{eoc_solve, gauss_hermite, GaussianExpectation};
pub use feedforward::{feedforward_draw, feedforward_forward, FeedforwardConfig, FeedforwardDraw};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForwardOptions {
    pub retention: Retention,
    pub noise: NoiseMode,
    pub guard: ExplosionGuard,
}

impl ForwardOptions {
    pub fn with_retention(self, retention: Retention) -> Self {
        ForwardOptions { retention, ..self }
    }

    pub fn with_noise(self, noise: NoiseMode) -> Self {
        ForwardOptions { noise, ..self }
    }
}

/// `x + phi(a psi(x) + b)`, element-wise activations.
pub fn shallow_block_step(
    phi: Activation,
    psi: Activation,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
) -> DVector<f64> {
    x + block_residual(phi, psi, a, b, x)
}

/// The residual `phi(a psi(x) + b)` alone, free of cancellation against `x`.
pub fn block_residual(
    phi: Activation,
    psi: Activation,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
) -> DVector<f64> {
    let psi_x = x.map(|v| psi.eval(v));
    (a * psi_x + b).map(|v| phi.eval(v))
}

fn check_inputs(x0: &DMatrix<f64>, width: usize) -> Result<()> {
    if x0.ncols() != width {
        return Err(Error::dim("input state width", width, x0.ncols()));
    }
    if x0.nrows() == 0 {
        return Err(Error::Config("at least one input is required".into()));
    }
    Ok(())
}

/// Broadcasts scalar inputs across all `width` coordinates (`x_{0,d} = z`).
pub fn broadcast_scalars(z: &[f64], width: usize) -> DMatrix<f64> {
    DMatrix::from_fn(z.len(), width, |n, _| z[n])
}

/// Broadcasts `k`-dimensional inputs by tiling: `x_{0,d} = z_{d mod k}`.
pub fn broadcast_tiled(z: &[Vec<f64>], width: usize) -> DMatrix<f64> {
    DMatrix::from_fn(z.len(), width, |n, d| z[n][d % z[n].len()])
}

/// One parameter draw of the residual network applied jointly to all rows of
/// `x0` (`N x D`). Layer `l` draws its noise from `seed.with_layer(l)`.
pub fn resnet_draw(cfg: &ModelConfig, x0: &DMatrix<f64>, seed: SeedSpec, opts: ForwardOptions) -> Result<PathBatch> {
    cfg.validate()?;
    check_inputs(x0, cfg.width)?;
    let d = cfg.width;
    let dt = cfg.dt();
    let sq = dt.sqrt();
    let mode = cfg.law.resolve_mode(opts.noise, d, x0.nrows())?;
    let drift = (!cfg.law.is_centered()).then(|| (cfg.law.mu_w(d), cfg.law.mu_b(d)));
    let mut prop = Propagator::new(x0, cfg.depth, cfg.horizon, opts.guard, opts.retention);
    for l in 0..cfg.depth {
        let idx = prop.active_indices();
        if idx.is_empty() {
            prop.commit(l + 1, &idx, &DMatrix::zeros(d, 0));
            continue;
        }
        let xa = prop.x.select_columns(&idx);
        let psi = xa.map(|v| cfg.psi.eval(v));
        let mut rng = seed.with_layer(l as u64).rng();
        let h = match mode {
            NoiseMode::Projected => {
                let mut h = cfg.law.sample_noise_columns(&psi, mode, &mut rng) * sq;
                if let Some((mu_w, mu_b)) = &drift {
                    h += apply_columns(mu_w, mu_b, &psi) * dt;
                }
                h
            }
            _ => {
                let inc = cfg.law.sample_layer(d, dt, &mut rng);
                apply_columns(&inc.dw, &inc.db, &psi)
            }
        };
        let next = xa + h.map(|v| cfg.phi.eval(v));
        prop.commit(l + 1, &idx, &next);
    }
    Ok(prop.finish())
}

/// `n_draws` independent parameter draws; draw `r` uses `seed.with_replicate(r)`.
///
/// Draws run in parallel; the result does not depend on the thread count.
pub fn resnet_forward(
    cfg: &ModelConfig,
    x0: &DMatrix<f64>,
    n_draws: usize,
    seed: SeedSpec,
    opts: ForwardOptions,
) -> Result<Vec<PathBatch>> {
    if n_draws == 0 {
        return Err(Error::Config("n_draws must be at least 1".into()));
    }
    (0..n_draws)
        .into_par_iter()
        .map(|r| resnet_draw(cfg, x0, seed.with_replicate(r as u64), opts))
        .collect()
}

/// Runs the recursion with externally supplied layer parameters.
pub fn resnet_forward_with_increments(
    phi: Activation,
    psi: Activation,
    x0: &DMatrix<f64>,
    increments: &[ParamIncrement],
    dt: f64,
    opts: ForwardOptions,
) -> Result<PathBatch> {
    let d = x0.ncols();
    let mut prop = Propagator::new(x0, increments.len(), dt * increments.len() as f64, opts.guard, opts.retention);
    for (l, inc) in increments.iter().enumerate() {
        if inc.dw.shape() != (d, d) || inc.db.len() != d {
            return Err(Error::dim("layer parameter width", d, inc.db.len()));
        }
        let idx = prop.active_indices();
        let xa = prop.x.select_columns(&idx);
        let psi_x = xa.map(|v| psi.eval(v));
        let h = apply_columns(&inc.dw, &inc.db, &psi_x);
        let next = xa + h.map(|v| phi.eval(v));
        prop.commit(l + 1, &idx, &next);
    }
    Ok(prop.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramlaw::{FullyIidLaw, ParamLaw};

    fn iid(sw: f64, sb: f64) -> ParamLaw {
        ParamLaw::FullyIid(FullyIidLaw::new(sw, sb).unwrap())
    }

    #[test]
    fn shallow_block_examples() {
        let x = DVector::from_row_slice(&[0.3, -0.4]);
        let zero = DMatrix::zeros(2, 2);
        let zb = DVector::zeros(2);
        assert_eq!(shallow_block_step(Activation::Tanh, Activation::Identity, &zero, &zb, &x), x);
        let y = shallow_block_step(Activation::Identity, Activation::Identity, &DMatrix::identity(2, 2), &zb, &x);
        assert_eq!(y, &x * 2.0);
        let a = DMatrix::from_element(1, 1, 1.0);
        let y = shallow_block_step(Activation::Tanh, Activation::Identity, &a, &DVector::zeros(1), &DVector::from_element(1, 0.5));
        // 0.5 + tanh(0.5)
        assert!((y[0] - 0.962_117_157_260_009_7).abs() < 1e-15);
    }

    #[test]
    fn zero_law_is_identity_at_every_depth() {
        for depth in [1, 5, 40] {
            let cfg = ModelConfig::new(depth, 3, 1.0, Activation::Swish, Activation::Tanh, iid(0.0, 0.0)).unwrap();
            let x0 = DMatrix::from_row_slice(2, 3, &[0.1, -2.0, 3.0, 0.0, 1.0, 1.0]);
            for noise in [NoiseMode::Materialized, NoiseMode::Projected] {
                let b = resnet_draw(&cfg, &x0, SeedSpec::new(1), ForwardOptions::default().with_noise(noise)).unwrap();
                assert_eq!(b.final_matrix(), x0);
            }
        }
    }

    #[test]
    fn forced_linear_increment_unrolls() {
        let (w, b, x) = (0.7, -0.2, 1.3);
        let inc = ParamIncrement {
            dw: DMatrix::from_element(1, 1, w),
            db: DVector::from_element(1, b),
            eps_w: DMatrix::zeros(1, 1),
            eps_b: DVector::zeros(1),
            z_w: DMatrix::zeros(1, 1),
            z_b: DVector::zeros(1),
        };
        let x0 = DMatrix::from_element(1, 1, x);
        let out = resnet_forward_with_increments(
            Activation::Identity,
            Activation::Identity,
            &x0,
            &[inc],
            1.0,
            ForwardOptions::default(),
        )
        .unwrap();
        assert_eq!(out.final_state(0)[0], x + w * x + b);
    }

    #[test]
    fn materialized_mode_uses_sampled_increments() {
        let cfg = ModelConfig::new(6, 4, 1.0, Activation::Tanh, Activation::Identity, iid(1.0, 1.0)).unwrap();
        let x0 = broadcast_scalars(&[0.5, -1.0, 2.0], 4);
        let seed = SeedSpec::new(9).with_replicate(3);
        let opts = ForwardOptions::default().with_noise(NoiseMode::Materialized);
        let a = resnet_draw(&cfg, &x0, seed, opts).unwrap();
        let inc = cfg.law.sample_increments(4, cfg.dt(), 6, seed).unwrap();
        let b = resnet_forward_with_increments(cfg.phi, cfg.psi, &x0, &inc, cfg.dt(), opts).unwrap();
        assert_eq!(a.final_matrix(), b.final_matrix());
    }

    #[test]
    fn identical_inputs_identical_trajectories() {
        let cfg = ModelConfig::new(30, 8, 1.0, Activation::Swish, Activation::Identity, iid(1.0, 1.0)).unwrap();
        let x0 = broadcast_scalars(&[0.7, -0.3, 0.7], 8);
        for noise in [NoiseMode::Materialized, NoiseMode::Projected] {
            let b = resnet_draw(&cfg, &x0, SeedSpec::new(2), ForwardOptions::default().with_noise(noise).with_retention(Retention::Full)).unwrap();
            for k in 0..b.n_snapshots() {
                assert_eq!(b.state(0, k), b.state(2, k));
            }
        }
    }

    #[test]
    fn initial_snapshot_is_exact_and_diverged_paths_freeze() {
        let law = iid(60.0, 60.0);
        let cfg = ModelConfig::new(50, 4, 1.0, Activation::Identity, Activation::Identity, law).unwrap();
        let x0 = broadcast_scalars(&[1.0, 2.0], 4);
        let b = resnet_draw(&cfg, &x0, SeedSpec::new(4), ForwardOptions::default().with_retention(Retention::Full)).unwrap();
        assert_eq!(b.initial_state(0), x0.row(0).transpose().as_slice());
        assert!(b.any_diverged());
        for n in 0..2 {
            if let Some(step) = b.diverged_at[n] {
                let k = b.steps.iter().position(|&s| s == step).unwrap();
                for later in k..b.n_snapshots() {
                    assert_eq!(b.state(n, later), b.state(n, k));
                }
            }
        }
    }

    #[test]
    fn forward_is_reproducible_and_thread_independent() {
        let cfg = ModelConfig::new(10, 5, 1.0, Activation::Tanh, Activation::Identity, iid(1.0, 1.0)).unwrap();
        let x0 = broadcast_scalars(&[0.0, 1.0], 5);
        let seed = SeedSpec::new(77);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| resnet_forward(&cfg, &x0, 16, seed, ForwardOptions::default()).unwrap())
        };
        assert_eq!(run(1), run(3));
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let cfg = ModelConfig::new(2, 3, 1.0, Activation::Tanh, Activation::Identity, iid(1.0, 1.0)).unwrap();
        let x0 = DMatrix::zeros(1, 4);
        assert!(resnet_draw(&cfg, &x0, SeedSpec::new(0), ForwardOptions::default()).is_err());
    }
}
