//! Limiting SDE of the depth-scaled residual network and its Euler-Maruyama
//! simulation, one shared noise per step across all coupled inputs.
//!
//! With `V(x) = Var[eps_w psi(x) + eps_b]` the limit reads
//! `dx = (phi'(0)(mu_b + mu_w psi(x)) + phi''(0)/2 diag V(x)) dt + phi'(0) V(x)^{1/2} dB`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::linalg::psd_sqrt;
use crate::model::ModelConfig;
use crate::paramlaw::{apply_columns, ParamLaw};
use crate::path::{PathBatch, Propagator};
use crate::resnet::ForwardOptions;
use crate::rng::SeedSpec;

pub use crate::path::ExplosionGuard;

#[derive(Debug, Clone, PartialEq)]
pub struct SdeCoefficients {
    pub law: ParamLaw,
    pub phi: Activation,
    pub psi: Activation,
    dphi0: f64,
    ddphi0: f64,
}

impl SdeCoefficients {
    pub fn new(law: ParamLaw, phi: Activation, psi: Activation) -> Result<Self> {
        phi.check_diffusion_admissible()?;
        Ok(SdeCoefficients {
            law,
            phi,
            psi,
            dphi0: phi.dphi0(),
            ddphi0: phi.ddphi0(),
        })
    }

    pub fn from_model(cfg: &ModelConfig) -> Result<Self> {
        Self::new(cfg.law.clone(), cfg.phi, cfg.psi)
    }

    /// `(phi'(0), phi''(0))`.
    pub fn phi_constants(&self) -> (f64, f64) {
        (self.dphi0, self.ddphi0)
    }

    fn psi_of(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| self.psi.eval(v))
    }

    fn drift_from_psi(&self, psi_x: &DVector<f64>) -> DVector<f64> {
        let d = psi_x.len();
        let mut out = if self.law.is_centered() {
            DVector::zeros(d)
        } else {
            (self.law.mu_w(d) * psi_x + self.law.mu_b(d)) * self.dphi0
        };
        if self.ddphi0 != 0.0 {
            out += self.law.conditional_variance_diag(psi_x) * (0.5 * self.ddphi0);
        }
        out
    }

    /// Drift per unit time.
    pub fn drift(&self, x: &DVector<f64>) -> DVector<f64> {
        self.drift_from_psi(&self.psi_of(x))
    }

    /// Instantaneous covariance `phi'(0)^2 V(x)`.
    pub fn diffusion_covariance(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.law.conditional_variance(&self.psi_of(x))? * (self.dphi0 * self.dphi0))
    }

    /// Symmetric factor `phi'(0) V(x)^{1/2}`.
    pub fn diffusion(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let psi_x = self.psi_of(x);
        if let ParamLaw::FullyIid(_) = self.law {
            // V is a multiple of the identity
            let v = self.law.conditional_variance_diag(&psi_x)[0];
            return Ok(DMatrix::identity(x.len(), x.len()) * (self.dphi0 * v.sqrt()));
        }
        Ok(psd_sqrt(&self.law.conditional_variance(&psi_x)?)? * self.dphi0)
    }

    /// Cross-covariation rate between two coupled inputs.
    pub fn cross_rate(&self, xa: &DVector<f64>, xb: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.law.cross_covariance(&self.psi_of(xa), &self.psi_of(xb))? * (self.dphi0 * self.dphi0))
    }
}

pub fn drift_eval(coeffs: &SdeCoefficients, x: &DVector<f64>) -> DVector<f64> {
    coeffs.drift(x)
}

pub fn diffusion_eval(coeffs: &SdeCoefficients, x: &DVector<f64>) -> Result<DMatrix<f64>> {
    coeffs.diffusion(x)
}

/// `x + drift(x) dt + diffusion(x) zeta sqrt(dt)`, one independent Brownian per input.
pub fn euler_step_decoupled(
    coeffs: &SdeCoefficients,
    x: &DVector<f64>,
    dt: f64,
    zeta: &DVector<f64>,
) -> Result<DVector<f64>> {
    if zeta.len() != x.len() {
        return Err(Error::dim("zeta", x.len(), zeta.len()));
    }
    Ok(x + coeffs.drift(x) * dt + coeffs.diffusion(x)? * zeta * dt.sqrt())
}

/// Advances every row of `states` (`N x D`) with one shared standardized
/// noise pair; `z_w`, `z_b` are standard normal and mapped through the law.
pub fn euler_step_coupled(
    coeffs: &SdeCoefficients,
    states: &DMatrix<f64>,
    dt: f64,
    z_w: &DMatrix<f64>,
    z_b: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let d = states.ncols();
    if z_w.shape() != (d, d) || z_b.len() != d {
        return Err(Error::dim("standardized noise width", d, z_b.len()));
    }
    coeffs.law.check_dim(d)?;
    let (eps_w, eps_b) = coeffs.law.scale_noise(z_w, z_b);
    let x = states.transpose();
    let psi = x.map(|v| coeffs.psi.eval(v));
    let noise = apply_columns(&eps_w, &eps_b, &psi);
    Ok(coupled_update(coeffs, &x, &psi, &noise, dt).transpose())
}

fn coupled_update(
    coeffs: &SdeCoefficients,
    x: &DMatrix<f64>,
    psi: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    dt: f64,
) -> DMatrix<f64> {
    let mut next = x + noise * (coeffs.dphi0 * dt.sqrt());
    if !coeffs.law.is_centered() || coeffs.ddphi0 != 0.0 {
        for i in 0..x.ncols() {
            let mu = coeffs.drift_from_psi(&psi.column(i).into_owned());
            let mut col = next.column_mut(i);
            col.axpy(dt, &mu, 1.0);
        }
    }
    next
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub paths: Vec<PathBatch>,
    /// Fraction of draws in which at least one input was flagged.
    pub explosive_fraction: f64,
    pub explosive_draws: usize,
}

/// One Euler-Maruyama draw of the coupled SDE for all rows of `x0`.
/// Step `l` draws from `seed.with_layer(l)`.
pub fn simulate_draw(
    coeffs: &SdeCoefficients,
    x0: &DMatrix<f64>,
    steps: usize,
    horizon: f64,
    seed: SeedSpec,
    opts: ForwardOptions,
) -> Result<PathBatch> {
    let d = x0.ncols();
    if steps == 0 {
        return Err(Error::Config("SDE step count must be at least 1".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!("horizon must be positive (got {horizon})")));
    }
    if x0.nrows() == 0 {
        return Err(Error::Config("at least one input is required".into()));
    }
    coeffs.law.check_dim(d)?;
    let dt = horizon / steps as f64;
    let mode = coeffs.law.resolve_mode(opts.noise, d, x0.nrows())?;
    let mut prop = Propagator::new(x0, steps, horizon, opts.guard, opts.retention);
    for l in 0..steps {
        let idx = prop.active_indices();
        if idx.is_empty() {
            prop.commit(l + 1, &idx, &DMatrix::zeros(d, 0));
            continue;
        }
        let xa = prop.x.select_columns(&idx);
        let psi = xa.map(|v| coeffs.psi.eval(v));
        let mut rng = seed.with_layer(l as u64).rng();
        let noise = coeffs.law.sample_noise_columns(&psi, mode, &mut rng);
        let next = coupled_update(coeffs, &xa, &psi, &noise, dt);
        prop.commit(l + 1, &idx, &next);
    }
    Ok(prop.finish())
}

/// `n_draws` independent draws; draw `r` uses `seed.with_replicate(r)`.
pub fn simulate_paths(
    coeffs: &SdeCoefficients,
    x0: &DMatrix<f64>,
    steps: usize,
    horizon: f64,
    n_draws: usize,
    seed: SeedSpec,
    opts: ForwardOptions,
) -> Result<SimulationResult> {
    if n_draws == 0 {
        return Err(Error::Config("n_draws must be at least 1".into()));
    }
    let paths: Vec<PathBatch> = (0..n_draws)
        .into_par_iter()
        .map(|r| simulate_draw(coeffs, x0, steps, horizon, seed.with_replicate(r as u64), opts))
        .collect::<Result<_>>()?;
    let explosive_draws = paths.iter().filter(|p| p.any_diverged()).count();
    Ok(SimulationResult {
        explosive_fraction: explosive_draws as f64 / n_draws as f64,
        explosive_draws,
        paths,
    })
}

/// Same as [`simulate_paths`] but with each input driven by its own
/// Brownian motion through the symmetric diffusion factor; marginally equal
/// in law to the coupled scheme.
pub fn simulate_decoupled(
    coeffs: &SdeCoefficients,
    x0: &DVector<f64>,
    steps: usize,
    horizon: f64,
    n_draws: usize,
    seed: SeedSpec,
) -> Result<Vec<DVector<f64>>> {
    let dt = horizon / steps as f64;
    let guard = ExplosionGuard::default();
    (0..n_draws)
        .into_par_iter()
        .map(|r| {
            let seed = seed.with_replicate(r as u64);
            let mut x = x0.clone();
            for l in 0..steps {
                let mut rng = seed.with_layer(l as u64).rng();
                let mut z = vec![0.0; x.len()];
                crate::rng::fill_normal(&mut rng, &mut z);
                let next = euler_step_decoupled(coeffs, &x, dt, &DVector::from_vec(z))?;
                if guard.is_exploded(next.as_slice()) {
                    break;
                }
                x = next;
            }
            Ok(x)
        })
        .collect()
}

/// Law on horizon `T / c` equal in law, at the path level, to `law` on `T`.
pub fn time_change_rescale(law: &ParamLaw, c: f64) -> Result<ParamLaw> {
    law.time_rescaled(c)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub satisfied: bool,
    /// `sup g` over the probed states.
    pub constant: f64,
    /// Least-squares slope of `log g` against `log |x|` over the top two decades.
    pub slope: f64,
    pub norms: Vec<f64>,
    pub ratios: Vec<f64>,
}

/// States `r u` along the diagonal direction `u = 1/sqrt(D)` and an
/// alternating-sign direction, for `r` log-spaced over `[1e-2, 1e4]`.
pub fn radial_grid(d: usize) -> Vec<DVector<f64>> {
    let s = 1.0 / (d as f64).sqrt();
    let dirs = [
        DVector::from_element(d, s),
        DVector::from_fn(d, |i, _| if i % 2 == 0 { s } else { -s }),
    ];
    let mut out = Vec::new();
    for k in 0..=24 {
        let r = 10f64.powf(-2.0 + k as f64 / 4.0);
        for u in &dirs {
            out.push(u * r);
        }
    }
    out
}

/// Probes `g(x) = (|drift(x)| + |diffusion(x)|_F) / (1 + |x|)`. Growth is
/// deemed linear-bounded when the largest `g` in the top decade of norms is
/// at most twice the largest `g` in the decade below.
pub fn linear_growth_check(coeffs: &SdeCoefficients, states: &[DVector<f64>]) -> Result<GrowthReport> {
    if states.is_empty() {
        return Err(Error::InsufficientData { need: 1, got: 0 });
    }
    let mut norms = Vec::with_capacity(states.len());
    let mut ratios = Vec::with_capacity(states.len());
    for x in states {
        let n = x.norm();
        let g = (coeffs.drift(x).norm() + coeffs.diffusion(x)?.norm()) / (1.0 + n);
        norms.push(n);
        ratios.push(g);
    }
    let top = norms.iter().cloned().fold(0.0, f64::max);
    let band_max = |lo: f64, hi: f64| {
        norms
            .iter()
            .zip(&ratios)
            .filter(|(n, _)| **n > lo && **n <= hi)
            .map(|(_, g)| *g)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let upper = band_max(top / 10.0, top);
    let lower = band_max(top / 100.0, top / 10.0);
    let satisfied = upper.is_finite() && (lower == f64::NEG_INFINITY || upper <= 2.0 * lower.max(f64::MIN_POSITIVE));
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .zip(&ratios)
        .filter(|(n, g)| **n > top / 100.0 && **g > 0.0)
        .map(|(n, g)| (n.ln(), g.ln()))
        .collect();
    let slope = if pts.len() >= 2 {
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    } else {
        0.0
    };
    Ok(GrowthReport {
        satisfied,
        constant: ratios.iter().cloned().fold(0.0, f64::max),
        slope,
        norms,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramlaw::{FullyIidLaw, MatrixNormalLaw};
    use crate::path::Retention;

    fn iid(sw: f64, sb: f64) -> ParamLaw {
        ParamLaw::FullyIid(FullyIidLaw::new(sw, sb).unwrap())
    }

    #[test]
    fn tanh_centered_drift_is_zero() {
        let c = SdeCoefficients::new(iid(1.3, 0.4), Activation::Tanh, Activation::Identity).unwrap();
        let x = DVector::from_row_slice(&[2.0, -7.0, 0.1]);
        assert_eq!(c.drift(&x), DVector::zeros(3));
    }

    #[test]
    fn swish_drift_example() {
        let c = SdeCoefficients::new(iid(1.0, 1.0), Activation::Swish, Activation::Identity).unwrap();
        let d = c.drift(&DVector::from_row_slice(&[1.0, 1.0]));
        assert!((d[0] - 0.5).abs() < 1e-15 && (d[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn diffusion_examples() {
        let c = SdeCoefficients::new(iid(1.0, 1.0), Activation::Tanh, Activation::Identity).unwrap();
        let s = c.diffusion(&DVector::from_row_slice(&[1.0, 1.0])).unwrap();
        assert!((s - DMatrix::identity(2, 2) * 2f64.sqrt()).norm() < 1e-14);
        let mn = MatrixNormalLaw::centered(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap();
        let c = SdeCoefficients::new(ParamLaw::MatrixNormal(mn), Activation::Swish, Activation::Tanh).unwrap();
        let s = c.diffusion(&DVector::zeros(2)).unwrap();
        assert!((s - DMatrix::identity(2, 2) * 0.5).norm() < 1e-12);
    }

    #[test]
    fn relu_is_not_admissible() {
        assert!(SdeCoefficients::new(iid(1.0, 1.0), Activation::Relu, Activation::Identity).is_err());
    }

    #[test]
    fn degenerate_law_and_constant_drift_steps() {
        let c = SdeCoefficients::new(iid(0.0, 0.0), Activation::Swish, Activation::Identity).unwrap();
        let x = DVector::from_row_slice(&[0.3, -1.0]);
        let z = DVector::from_row_slice(&[1.0, 2.0]);
        assert_eq!(euler_step_decoupled(&c, &x, 0.1, &z).unwrap(), x);

        let mn = MatrixNormalLaw::new(
            DMatrix::zeros(2, 2),
            DVector::from_row_slice(&[1.0, -2.0]),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        let c = SdeCoefficients::new(ParamLaw::MatrixNormal(mn), Activation::Tanh, Activation::Identity).unwrap();
        let y = euler_step_decoupled(&c, &x, 0.25, &z).unwrap();
        assert_eq!(y, DVector::from_row_slice(&[0.3 + 0.25, -1.0 - 0.5]));
    }

    #[test]
    fn coupled_identical_rows_stay_identical() {
        let c = SdeCoefficients::new(iid(1.0, 1.0), Activation::Swish, Activation::Identity).unwrap();
        let s = DMatrix::from_row_slice(2, 3, &[0.2, 0.5, -1.0, 0.2, 0.5, -1.0]);
        let mut rng = SeedSpec::new(5).rng();
        let zw = DMatrix::from_fn(3, 3, |_, _| crate::rng::normal(&mut rng));
        let zb = DVector::from_fn(3, |_, _| crate::rng::normal(&mut rng));
        let out = euler_step_coupled(&c, &s, 0.01, &zw, &zb).unwrap();
        assert_eq!(out.row(0), out.row(1));
    }

    #[test]
    fn zero_law_paths_are_constant() {
        let c = SdeCoefficients::new(iid(0.0, 0.0), Activation::Tanh, Activation::Identity).unwrap();
        let x0 = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -3.0, 0.5]);
        let res = simulate_paths(&c, &x0, 20, 1.0, 4, SeedSpec::new(1), ForwardOptions::default().with_retention(Retention::Full)).unwrap();
        for p in &res.paths {
            for k in 0..p.n_snapshots() {
                assert_eq!(p.state(1, k), &[-3.0, 0.5]);
            }
        }
        assert_eq!(res.explosive_fraction, 0.0);
    }

    #[test]
    fn time_grid_ends_at_horizon() {
        let c = SdeCoefficients::new(iid(1.0, 1.0), Activation::Tanh, Activation::Identity).unwrap();
        let x0 = DMatrix::zeros(1, 3);
        let p = simulate_draw(&c, &x0, 7, 1.3, SeedSpec::new(0), ForwardOptions::default()).unwrap();
        assert_eq!(*p.times.last().unwrap(), 1.3);
        assert_eq!(p.steps, vec![0, 7]);
    }

    #[test]
    fn growth_examples() {
        let grid = radial_grid(4);
        let check = |phi, psi| {
            let c = SdeCoefficients::new(iid(1.0, 1.0), phi, psi).unwrap();
            linear_growth_check(&c, &grid).unwrap()
        };
        assert!(check(Activation::Tanh, Activation::Tanh).satisfied);
        assert!(check(Activation::Tanh, Activation::Identity).satisfied);
        assert!(check(Activation::Swish, Activation::Tanh).satisfied);
        let r = check(Activation::Swish, Activation::Identity);
        assert!(!r.satisfied);
        assert!((r.slope - 1.0).abs() < 0.1, "{}", r.slope);
    }
}
