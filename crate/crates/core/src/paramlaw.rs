//! Depth-scaled Gaussian parameter laws.
//!
//! A layer's weight and bias are increments of matrix and vector diffusions:
//! `dW = mu_w dt + eps_w sqrt(dt)`, `db = mu_b dt + eps_b sqrt(dt)`, where the
//! standardized noise `(eps_w, eps_b)` follows one of three regimes:
//!
//! * [`GeneralGaussianLaw`]: `vec(eps_w) ~ N(0, Sigma_W)`, arbitrary `D^2 x D^2` covariance.
//! * [`MatrixNormalLaw`]: `eps_w = sigma_wo * Z * sigma_wi`, i.e. `MN(0, Sigma_WO, Sigma_WI)`.
//! * [`FullyIidLaw`]: `eps_w = sigma_w / sqrt(D) * Z`, `eps_b = sigma_b * z`.
//!
//! `vec` stacks columns: entry `(row d, column i)` has flat index `d + i * D`,
//! which is also nalgebra's storage order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, psd_eigen, psd_sqrt, semidefinite_cholesky};
use crate::rng::{fill_normal, SeedSpec, StreamRng};

/// Largest width accepted for the general law (its covariance has `D^4` entries).
pub const GENERAL_LAW_MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralGaussianLaw {
    pub mu_w: DMatrix<f64>,
    pub mu_b: DVector<f64>,
    /// Covariance of `vec(eps_w)`, `D^2 x D^2`.
    pub cov_w: DMatrix<f64>,
    /// Covariance of `eps_b`, `D x D`.
    pub cov_b: DMatrix<f64>,
    factor_w: DMatrix<f64>,
    factor_b: DMatrix<f64>,
}

impl GeneralGaussianLaw {
    pub fn new(
        mu_w: DMatrix<f64>,
        mu_b: DVector<f64>,
        cov_w: DMatrix<f64>,
        cov_b: DMatrix<f64>,
    ) -> Result<Self> {
        let d = mu_b.len();
        if d > GENERAL_LAW_MAX_DIM {
            return Err(Error::Config(format!(
                "general Gaussian law is limited to width {GENERAL_LAW_MAX_DIM} (got {d})"
            )));
        }
        check_shape("mu_w", &mu_w, d, d)?;
        check_shape("cov_w", &cov_w, d * d, d * d)?;
        check_shape("cov_b", &cov_b, d, d)?;
        let factor_w = psd_sqrt(&cov_w)?;
        let factor_b = psd_sqrt(&cov_b)?;
        Ok(GeneralGaussianLaw {
            mu_w,
            mu_b,
            cov_w,
            cov_b,
            factor_w,
            factor_b,
        })
    }

    /// Centered law with the given covariances.
    pub fn centered(cov_w: DMatrix<f64>, cov_b: DMatrix<f64>) -> Result<Self> {
        let d = cov_b.nrows();
        Self::new(DMatrix::zeros(d, d), DVector::zeros(d), cov_w, cov_b)
    }

    /// Symmetric square root of `cov_w`.
    pub fn factor_w(&self) -> &DMatrix<f64> {
        &self.factor_w
    }

    pub fn factor_b(&self) -> &DMatrix<f64> {
        &self.factor_b
    }

    pub fn dim(&self) -> usize {
        self.mu_b.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixNormalLaw {
    pub mu_w: DMatrix<f64>,
    pub mu_b: DVector<f64>,
    /// Row factor; `Sigma_WO = sigma_wo * sigma_wo^T`.
    pub sigma_wo: DMatrix<f64>,
    /// Column factor; `Sigma_WI = sigma_wi^T * sigma_wi`.
    pub sigma_wi: DMatrix<f64>,
    /// Bias factor; `Sigma_b = sigma_b * sigma_b^T`.
    pub sigma_b: DMatrix<f64>,
}

impl MatrixNormalLaw {
    pub fn new(
        mu_w: DMatrix<f64>,
        mu_b: DVector<f64>,
        sigma_wo: DMatrix<f64>,
        sigma_wi: DMatrix<f64>,
        sigma_b: DMatrix<f64>,
    ) -> Result<Self> {
        let d = mu_b.len();
        check_shape("mu_w", &mu_w, d, d)?;
        check_shape("sigma_wo", &sigma_wo, d, d)?;
        check_shape("sigma_wi", &sigma_wi, d, d)?;
        check_shape("sigma_b", &sigma_b, d, d)?;
        Ok(MatrixNormalLaw {
            mu_w,
            mu_b,
            sigma_wo,
            sigma_wi,
            sigma_b,
        })
    }

    pub fn centered(
        sigma_wo: DMatrix<f64>,
        sigma_wi: DMatrix<f64>,
        sigma_b: DMatrix<f64>,
    ) -> Result<Self> {
        let d = sigma_b.nrows();
        Self::new(
            DMatrix::zeros(d, d),
            DVector::zeros(d),
            sigma_wo,
            sigma_wi,
            sigma_b,
        )
    }

    pub fn cov_wo(&self) -> DMatrix<f64> {
        &self.sigma_wo * self.sigma_wo.transpose()
    }

    pub fn cov_wi(&self) -> DMatrix<f64> {
        self.sigma_wi.transpose() * &self.sigma_wi
    }

    pub fn cov_b(&self) -> DMatrix<f64> {
        &self.sigma_b * self.sigma_b.transpose()
    }

    pub fn dim(&self) -> usize {
        self.mu_b.len()
    }
}

/// Centered i.i.d. weights `N(0, sigma_w^2 / D)` per unit time and biases `N(0, sigma_b^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FullyIidLaw {
    pub sigma_w: f64,
    pub sigma_b: f64,
}

impl FullyIidLaw {
    /// Zero scales are accepted and give the degenerate (deterministic) law.
    pub fn new(sigma_w: f64, sigma_b: f64) -> Result<Self> {
        if !(sigma_w.is_finite() && sigma_w >= 0.0 && sigma_b.is_finite() && sigma_b >= 0.0) {
            return Err(Error::Config(format!(
                "fully i.i.d. law needs finite non-negative scales (got sigma_w={sigma_w}, sigma_b={sigma_b})"
            )));
        }
        Ok(FullyIidLaw { sigma_w, sigma_b })
    }

    /// Builds the law from variances `sigma_w^2`, `sigma_b^2`.
    pub fn from_variances(var_w: f64, var_b: f64) -> Result<Self> {
        Self::new(var_w.max(0.0).sqrt(), var_b.max(0.0).sqrt())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamLaw {
    General(GeneralGaussianLaw),
    MatrixNormal(MatrixNormalLaw),
    FullyIid(FullyIidLaw),
}

/// How the per-layer weight noise is realized when propagating several inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    /// Projected when it is cheaper and available, materialized otherwise.
    #[default]
    Auto,
    /// Draw the full `D x D` weight noise and multiply.
    Materialized,
    /// Draw `eps_w * psi(x_i)` jointly over the inputs from its Gram covariance.
    /// Only available for the matrix-normal and fully i.i.d. laws.
    Projected,
}

/// One layer's parameters and the noise that generated them.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamIncrement {
    /// Weight `A_t = dW_t = mu_w dt + eps_w sqrt(dt)`.
    pub dw: DMatrix<f64>,
    /// Bias `a_t = db_t = mu_b dt + eps_b sqrt(dt)`.
    pub db: DVector<f64>,
    /// Law-distributed weight noise.
    pub eps_w: DMatrix<f64>,
    /// Law-distributed bias noise.
    pub eps_b: DVector<f64>,
    /// Raw standard-normal draws behind `eps_w`.
    pub z_w: DMatrix<f64>,
    /// Raw standard-normal draws behind `eps_b`.
    pub z_b: DVector<f64>,
}

fn check_shape(what: &'static str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::dim(what, rows, m.nrows()));
    }
    if m.ncols() != cols {
        return Err(Error::dim(what, cols, m.ncols()));
    }
    Ok(())
}

/// Deterministic `m * v` whose result does not depend on anything but `m` and `v`.
fn matvec_into(m: &DMatrix<f64>, v: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (k, &vk) in v.iter().enumerate() {
        if vk == 0.0 {
            continue;
        }
        let col = m.column(k);
        for (o, &c) in out.iter_mut().zip(col.iter()) {
            *o += c * vk;
        }
    }
}

/// Indices of the first occurrence of every distinct column, and the map
/// from each column to its representative.
fn dedup_columns(m: &DMatrix<f64>) -> (Vec<usize>, Vec<usize>) {
    use std::collections::HashMap;
    let mut reps = Vec::new();
    let mut map = Vec::with_capacity(m.ncols());
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for j in 0..m.ncols() {
        let key: Vec<u64> = m.column(j).iter().map(|v| v.to_bits()).collect();
        let idx = *seen.entry(key).or_insert_with(|| {
            reps.push(j);
            reps.len() - 1
        });
        map.push(idx);
    }
    (reps, map)
}

impl ParamLaw {
    /// Width the law is tied to, if any (the i.i.d. law works at every width).
    pub fn dim(&self) -> Option<usize> {
        match self {
            ParamLaw::General(g) => Some(g.dim()),
            ParamLaw::MatrixNormal(m) => Some(m.dim()),
            ParamLaw::FullyIid(_) => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ParamLaw::General(_) => "general",
            ParamLaw::MatrixNormal(_) => "matrix_normal",
            ParamLaw::FullyIid(_) => "iid",
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self.dim() {
            Some(ld) if ld != d => Err(Error::dim("parameter law width", d, ld)),
            _ => Ok(()),
        }
    }

    pub fn mu_w(&self, d: usize) -> DMatrix<f64> {
        match self {
            ParamLaw::General(g) => g.mu_w.clone(),
            ParamLaw::MatrixNormal(m) => m.mu_w.clone(),
            ParamLaw::FullyIid(_) => DMatrix::zeros(d, d),
        }
    }

    pub fn mu_b(&self, d: usize) -> DVector<f64> {
        match self {
            ParamLaw::General(g) => g.mu_b.clone(),
            ParamLaw::MatrixNormal(m) => m.mu_b.clone(),
            ParamLaw::FullyIid(_) => DVector::zeros(d),
        }
    }

    pub fn is_centered(&self) -> bool {
        match self {
            ParamLaw::General(g) => g.mu_w.iter().chain(g.mu_b.iter()).all(|v| *v == 0.0),
            ParamLaw::MatrixNormal(m) => m.mu_w.iter().chain(m.mu_b.iter()).all(|v| *v == 0.0),
            ParamLaw::FullyIid(_) => true,
        }
    }

    /// Bias noise covariance `Sigma_b`.
    pub fn cov_b(&self, d: usize) -> DMatrix<f64> {
        match self {
            ParamLaw::General(g) => g.cov_b.clone(),
            ParamLaw::MatrixNormal(m) => m.cov_b(),
            ParamLaw::FullyIid(l) => DMatrix::identity(d, d) * (l.sigma_b * l.sigma_b),
        }
    }

    /// Covariance of `vec(eps_w)` as a `D^2 x D^2` matrix (column-stacking `vec`).
    pub fn cov_w(&self, d: usize) -> DMatrix<f64> {
        match self {
            ParamLaw::General(g) => g.cov_w.clone(),
            // Cov(E[o,i], E[o',i']) = S_O[o,o'] S_I[i,i'] at flat index o + i*D
            ParamLaw::MatrixNormal(m) => linalg::kron(&m.cov_wi(), &m.cov_wo()),
            ParamLaw::FullyIid(l) => DMatrix::identity(d * d, d * d) * (l.sigma_w * l.sigma_w / d as f64),
        }
    }

    /// Maps raw standard normals to the law's weight and bias noise.
    pub fn scale_noise(&self, z_w: &DMatrix<f64>, z_b: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let d = z_b.len();
        match self {
            ParamLaw::General(g) => {
                let flat = DVector::from_column_slice(z_w.as_slice());
                let v = g.factor_w() * flat;
                (DMatrix::from_column_slice(d, d, v.as_slice()), g.factor_b() * z_b)
            }
            ParamLaw::MatrixNormal(m) => (&m.sigma_wo * z_w * &m.sigma_wi, &m.sigma_b * z_b),
            ParamLaw::FullyIid(l) => (z_w * (l.sigma_w / (d as f64).sqrt()), z_b * l.sigma_b),
        }
    }

    /// Draws one layer: first `D^2` normals for the weight (column-major), then `D` for the bias.
    pub fn sample_layer(&self, d: usize, dt: f64, rng: &mut StreamRng) -> ParamIncrement {
        let mut zw = vec![0.0; d * d];
        let mut zb = vec![0.0; d];
        fill_normal(rng, &mut zw);
        fill_normal(rng, &mut zb);
        let z_w = DMatrix::from_vec(d, d, zw);
        let z_b = DVector::from_vec(zb);
        self.increment_from_standard(z_w, z_b, dt)
    }

    pub fn increment_from_standard(&self, z_w: DMatrix<f64>, z_b: DVector<f64>, dt: f64) -> ParamIncrement {
        let d = z_b.len();
        let (eps_w, eps_b) = self.scale_noise(&z_w, &z_b);
        let sq = dt.sqrt();
        let mut dw = &eps_w * sq;
        let mut db = &eps_b * sq;
        if !self.is_centered() {
            dw += self.mu_w(d) * dt;
            db += self.mu_b(d) * dt;
        }
        ParamIncrement {
            dw,
            db,
            eps_w,
            eps_b,
            z_w,
            z_b,
        }
    }

    /// Samples `n_layers` independent layers; layer `l` uses stream `seed.with_layer(l)`.
    pub fn sample_increments(
        &self,
        d: usize,
        dt: f64,
        n_layers: usize,
        seed: SeedSpec,
    ) -> Result<Vec<ParamIncrement>> {
        self.check_dim(d)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive (got {dt})")));
        }
        Ok((0..n_layers)
            .map(|l| {
                let mut rng = seed.with_layer(l as u64).rng();
                self.sample_layer(d, dt, &mut rng)
            })
            .collect())
    }

    /// `V(x) = Var[eps_w psi + eps_b]`, checked to be PSD.
    pub fn conditional_variance(&self, psi_x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let v = self.cross_covariance(psi_x, psi_x)?;
        if let ParamLaw::General(_) = self {
            // general covariances can be misconfigured in ways the factored laws cannot
            let v = linalg::symmetrize(&v);
            psd_eigen(&v)?;
            return Ok(v);
        }
        Ok(v)
    }

    /// Diagonal of `V(x)` without forming the full matrix when avoidable.
    pub fn conditional_variance_diag(&self, psi_x: &DVector<f64>) -> DVector<f64> {
        let d = psi_x.len();
        match self {
            ParamLaw::FullyIid(l) => {
                let v = l.sigma_b * l.sigma_b + l.sigma_w * l.sigma_w / d as f64 * psi_x.norm_squared();
                DVector::from_element(d, v)
            }
            ParamLaw::MatrixNormal(m) => {
                let u = &m.sigma_wi * psi_x;
                let q = u.norm_squared();
                DVector::from_fn(d, |r, _| {
                    let o = m.sigma_wo.row(r).norm_squared();
                    let b = m.sigma_b.row(r).norm_squared();
                    b + o * q
                })
            }
            ParamLaw::General(_) => self
                .cross_covariance(psi_x, psi_x)
                .map(|v| v.diagonal())
                .unwrap_or_else(|_| DVector::from_element(d, f64::NAN)),
        }
    }

    /// `C[eps_w psi_a + eps_b, eps_w psi_b + eps_b]`, the cross-covariation rate
    /// between two coupled inputs divided by `phi'(0)^2`.
    pub fn cross_covariance(&self, psi_a: &DVector<f64>, psi_b: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = psi_a.len();
        if psi_b.len() != d {
            return Err(Error::dim("second state vector", d, psi_b.len()));
        }
        self.check_dim(d)?;
        Ok(match self {
            ParamLaw::FullyIid(l) => {
                let c = l.sigma_b * l.sigma_b + l.sigma_w * l.sigma_w / d as f64 * psi_a.dot(psi_b);
                DMatrix::identity(d, d) * c
            }
            ParamLaw::MatrixNormal(m) => {
                let q = (&m.sigma_wi * psi_a).dot(&(&m.sigma_wi * psi_b));
                m.cov_b() + m.cov_wo() * q
            }
            ParamLaw::General(g) => {
                let mut out = g.cov_b.clone();
                for u in 0..d {
                    for r in 0..d {
                        let mut s = 0.0;
                        for i in 0..d {
                            let a = psi_a[i];
                            if a == 0.0 {
                                continue;
                            }
                            for j in 0..d {
                                s += a * psi_b[j] * g.cov_w[(r + i * d, u + j * d)];
                            }
                        }
                        out[(r, u)] += s;
                    }
                }
                out
            }
        })
    }

    /// Law whose diffusion on horizon `T / c` matches this law on horizon `T`:
    /// drifts scale by `c`, covariances by `c`.
    pub fn time_rescaled(&self, c: f64) -> Result<ParamLaw> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("time-change factor must be positive (got {c})")));
        }
        let s = c.sqrt();
        Ok(match self {
            ParamLaw::FullyIid(l) => ParamLaw::FullyIid(FullyIidLaw::new(l.sigma_w * s, l.sigma_b * s)?),
            ParamLaw::MatrixNormal(m) => ParamLaw::MatrixNormal(MatrixNormalLaw::new(
                &m.mu_w * c,
                &m.mu_b * c,
                &m.sigma_wo * s,
                m.sigma_wi.clone(),
                &m.sigma_b * s,
            )?),
            ParamLaw::General(g) => ParamLaw::General(GeneralGaussianLaw::new(
                &g.mu_w * c,
                &g.mu_b * c,
                &g.cov_w * c,
                &g.cov_b * c,
            )?),
        })
    }

    fn supports_projection(&self) -> bool {
        !matches!(self, ParamLaw::General(_))
    }

    /// Resolves [`NoiseMode::Auto`] for `n` inputs at width `d`.
    pub fn resolve_mode(&self, mode: NoiseMode, d: usize, n: usize) -> Result<NoiseMode> {
        match mode {
            NoiseMode::Materialized => Ok(NoiseMode::Materialized),
            NoiseMode::Projected if self.supports_projection() => Ok(NoiseMode::Projected),
            NoiseMode::Projected => Err(Error::Config(
                "projected noise is not available for the general Gaussian law".into(),
            )),
            NoiseMode::Auto => Ok(if self.supports_projection() && n < d {
                NoiseMode::Projected
            } else {
                NoiseMode::Materialized
            }),
        }
    }

    /// Draws the columns `eps_w * psi[:, i] + eps_b` for every input `i`, with
    /// one shared noise realization across all columns.
    ///
    /// `mode` must already be resolved (see [`ParamLaw::resolve_mode`]).
    pub fn sample_noise_columns(
        &self,
        psi: &DMatrix<f64>,
        mode: NoiseMode,
        rng: &mut StreamRng,
    ) -> DMatrix<f64> {
        let d = psi.nrows();
        match mode {
            NoiseMode::Projected => self.projected_columns(psi, rng),
            _ => {
                let mut zw = vec![0.0; d * d];
                let mut zb = vec![0.0; d];
                fill_normal(rng, &mut zw);
                fill_normal(rng, &mut zb);
                let (eps_w, eps_b) = self.scale_noise(&DMatrix::from_vec(d, d, zw), &DVector::from_vec(zb));
                apply_columns(&eps_w, &eps_b, psi)
            }
        }
    }

    fn projected_columns(&self, psi: &DMatrix<f64>, rng: &mut StreamRng) -> DMatrix<f64> {
        let d = psi.nrows();
        let n = psi.ncols();
        let (reps, map) = dedup_columns(psi);
        let k = reps.len();
        let uniq = psi.select_columns(&reps);
        // rows of Z * U are i.i.d. N(0, U^T U)
        let u = match self {
            ParamLaw::MatrixNormal(m) => &m.sigma_wi * &uniq,
            _ => uniq,
        };
        let gram = u.transpose() * &u;
        let l = semidefinite_cholesky(&gram, 1e-13).expect("Gram matrix of finite states");
        let mut xi = vec![0.0; d * k];
        fill_normal(rng, &mut xi);
        let xi = DMatrix::from_vec(d, k, xi);
        let mut zb = vec![0.0; d];
        fill_normal(rng, &mut zb);
        let zb = DVector::from_vec(zb);
        let zu = xi * l.transpose();
        let (wpart, bias) = match self {
            ParamLaw::MatrixNormal(m) => (&m.sigma_wo * zu, &m.sigma_b * zb),
            ParamLaw::FullyIid(lw) => (zu * (lw.sigma_w / (d as f64).sqrt()), zb * lw.sigma_b),
            ParamLaw::General(_) => unreachable!("projection is rejected for the general law"),
        };
        DMatrix::from_fn(d, n, |r, i| wpart[(r, map[i])] + bias[r])
    }
}

/// `out[:, i] = w * psi[:, i] + b`, computed column by column.
pub fn apply_columns(w: &DMatrix<f64>, b: &DVector<f64>, psi: &DMatrix<f64>) -> DMatrix<f64> {
    let d = w.nrows();
    let mut out = DMatrix::zeros(d, psi.ncols());
    let mut buf = vec![0.0; d];
    for i in 0..psi.ncols() {
        matvec_into(w, psi.column(i).as_slice(), &mut buf);
        for (r, v) in buf.iter().enumerate() {
            out[(r, i)] = v + b[r];
        }
    }
    out
}

/// Free-function form of [`ParamLaw::sample_increments`].
pub fn sample_increments(
    law: &ParamLaw,
    d: usize,
    dt: f64,
    n_layers: usize,
    seed: SeedSpec,
) -> Result<Vec<ParamIncrement>> {
    law.sample_increments(d, dt, n_layers, seed)
}

pub fn conditional_variance(law: &ParamLaw, psi_x: &DVector<f64>) -> Result<DMatrix<f64>> {
    law.conditional_variance(psi_x)
}

pub fn cross_covariance(law: &ParamLaw, psi_a: &DVector<f64>, psi_b: &DVector<f64>) -> Result<DMatrix<f64>> {
    law.cross_covariance(psi_a, psi_b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    #[test]
    fn iid_conditional_variance_example() {
        let law = ParamLaw::FullyIid(FullyIidLaw::new(1.0, 1.0).unwrap());
        let v = law.conditional_variance(&DVector::from_row_slice(&[1.0, 1.0])).unwrap();
        assert_eq!(v, DMatrix::identity(2, 2) * 2.0);
    }

    #[test]
    fn matrix_normal_conditional_variance_example() {
        let law = ParamLaw::MatrixNormal(
            MatrixNormalLaw::centered(DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap(),
        );
        let v = law.conditional_variance(&DVector::from_row_slice(&[3.0, 4.0])).unwrap();
        assert_eq!(v, DMatrix::identity(2, 2) * 25.0);
    }

    #[test]
    fn iid_cross_covariance_orthogonal_states() {
        let law = ParamLaw::FullyIid(FullyIidLaw::new(1.0, 1.0).unwrap());
        let c = law
            .cross_covariance(&DVector::from_row_slice(&[1.0, 0.0]), &DVector::from_row_slice(&[0.0, 1.0]))
            .unwrap();
        assert_eq!(c, DMatrix::identity(2, 2));
    }

    #[test]
    fn matrix_normal_vec_covariance_is_kronecker() {
        let law = ParamLaw::MatrixNormal(
            MatrixNormalLaw::centered(diag(&[1.0, 2.0]), DMatrix::identity(2, 2), DMatrix::zeros(2, 2)).unwrap(),
        );
        let cov = law.cov_w(2);
        // eps_w[2,1] in 1-based indexing is flat index 1 + 0*2
        assert_eq!(cov[(1, 1)], 4.0);
        assert_eq!(cov[(0, 1)], 0.0);
    }

    #[test]
    fn matrix_normal_matches_equivalent_general_law() {
        let so = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.2, 0.8]);
        let si = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.4, 1.2]);
        let sb = DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.2, 0.3]);
        let mn = ParamLaw::MatrixNormal(MatrixNormalLaw::centered(so, si, sb).unwrap());
        let general = ParamLaw::General(GeneralGaussianLaw::centered(mn.cov_w(2), mn.cov_b(2)).unwrap());
        let a = DVector::from_row_slice(&[0.3, -1.1]);
        let b = DVector::from_row_slice(&[2.0, 0.5]);
        let c1 = mn.cross_covariance(&a, &b).unwrap();
        let c2 = general.cross_covariance(&a, &b).unwrap();
        assert!((c1 - c2).norm() < 1e-12);
    }

    #[test]
    fn time_rescale_examples() {
        let law = ParamLaw::FullyIid(FullyIidLaw::new(1.0, 1.0).unwrap());
        assert_eq!(law.time_rescaled(1.0).unwrap(), law);
        assert_eq!(
            law.time_rescaled(4.0).unwrap(),
            ParamLaw::FullyIid(FullyIidLaw::new(2.0, 2.0).unwrap())
        );
        assert!(law.time_rescaled(0.0).is_err());
    }

    #[test]
    fn increments_follow_exact_representation() {
        let law = ParamLaw::MatrixNormal(
            MatrixNormalLaw::new(
                DMatrix::from_element(2, 2, 0.5),
                DVector::from_row_slice(&[1.0, -1.0]),
                diag(&[1.0, 2.0]),
                DMatrix::identity(2, 2),
                DMatrix::identity(2, 2),
            )
            .unwrap(),
        );
        let dt = 0.01;
        let inc = law.sample_increments(2, dt, 3, SeedSpec::new(1)).unwrap();
        for p in &inc {
            let dw = law.mu_w(2) * dt + &p.eps_w * dt.sqrt();
            let db = law.mu_b(2) * dt + &p.eps_b * dt.sqrt();
            assert!((dw - &p.dw).norm() < 1e-15);
            assert!((db - &p.db).norm() < 1e-15);
            assert_eq!(p.eps_w, diag(&[1.0, 2.0]) * &p.z_w);
        }
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let law = ParamLaw::MatrixNormal(
            MatrixNormalLaw::centered(DMatrix::identity(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2))
                .unwrap(),
        );
        assert!(matches!(law.sample_increments(3, 0.1, 1, SeedSpec::new(0)), Err(Error::Dimension { .. })));
        assert!(law
            .cross_covariance(&DVector::zeros(2), &DVector::zeros(3))
            .is_err());
    }

    #[test]
    fn general_law_rejects_indefinite_covariance() {
        let mut cov = DMatrix::identity(4, 4);
        cov[(2, 2)] = -1.0;
        assert!(GeneralGaussianLaw::centered(cov, DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn projected_columns_duplicate_inputs_bitwise() {
        let law = ParamLaw::FullyIid(FullyIidLaw::new(1.0, 0.5).unwrap());
        let psi = DMatrix::from_row_slice(3, 3, &[0.1, 0.4, 0.1, -0.2, 0.9, -0.2, 0.3, 0.0, 0.3]);
        let mut rng = SeedSpec::new(5).rng();
        let g = law.sample_noise_columns(&psi, NoiseMode::Projected, &mut rng);
        assert_eq!(g.column(0), g.column(2));
    }

    #[test]
    fn auto_mode_selection() {
        let iid = ParamLaw::FullyIid(FullyIidLaw::new(1.0, 1.0).unwrap());
        assert_eq!(iid.resolve_mode(NoiseMode::Auto, 64, 2).unwrap(), NoiseMode::Projected);
        assert_eq!(iid.resolve_mode(NoiseMode::Auto, 4, 10).unwrap(), NoiseMode::Materialized);
        let g = ParamLaw::General(GeneralGaussianLaw::centered(DMatrix::identity(4, 4), DMatrix::identity(2, 2)).unwrap());
        assert_eq!(g.resolve_mode(NoiseMode::Auto, 2, 1).unwrap(), NoiseMode::Materialized);
        assert!(g.resolve_mode(NoiseMode::Projected, 2, 1).is_err());
    }
}
