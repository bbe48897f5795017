//! Edge-of-chaos initialisation for i.i.d. feedforward networks.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::activation::Activation;
use crate::error::{Error, Result};

/// Gauss-Hermite rule for `int f(x) exp(-x^2) dx` via Golub-Welsch.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let j = DMatrix::from_fn(n, n, |r, c| {
        if r + 1 == c || c + 1 == r {
            (r.max(c) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(j);
    let mut nodes: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], std::f64::consts::PI.sqrt() * v0 * v0)
        })
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    nodes.into_iter().unzip()
}

/// `E[f(sqrt(q) Z)]` for standard normal `Z`, by a fixed Gauss-Hermite rule.
#[derive(Debug, Clone)]
pub struct GaussianExpectation {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussianExpectation {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_hermite(n);
        let s = std::f64::consts::PI.sqrt();
        GaussianExpectation {
            nodes: x.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|v| v / s).collect(),
        }
    }

    pub fn eval(&self, q: f64, f: impl Fn(f64) -> f64) -> f64 {
        let s = q.max(0.0).sqrt();
        self.nodes.iter().zip(&self.weights).map(|(z, w)| w * f(s * z)).sum()
    }
}

impl Default for GaussianExpectation {
    fn default() -> Self {
        GaussianExpectation::new(64)
    }
}

/// Largest fixed point of the pre-activation variance map
/// `q -> sigma_b2 + sigma_w2 E[phi(sqrt(q) Z)^2]`.
fn variance_fixed_point(gx: &GaussianExpectation, phi: Activation, sigma_w2: f64, sigma_b2: f64) -> Result<f64> {
    let f = |q: f64| sigma_b2 + sigma_w2 * gx.eval(q, |u| phi.eval(u).powi(2)) - q;
    let mut hi = (2.0 * sigma_b2).max(1.0);
    while f(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Solver(format!(
                "variance map has no fixed point for sigma_w2={sigma_w2}, sigma_b2={sigma_b2}"
            )));
        }
    }
    let mut lo = 0.0;
    if sigma_b2 == 0.0 {
        lo = 1e-12 * hi;
        if f(lo) <= 0.0 {
            return Ok(0.0);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Weight variance `sigma_w2` placing the network at the edge of chaos
/// (`chi = sigma_w2 E[phi'(sqrt(q*) Z)^2] = 1`) for bias variance `sigma_b2`.
pub fn eoc_solve(phi: Activation, sigma_b2: f64) -> Result<f64> {
    if !(sigma_b2 >= 0.0 && sigma_b2.is_finite()) {
        return Err(Error::Config(format!("sigma_b2 must be finite and >= 0, got {sigma_b2}")));
    }
    match phi {
        // phi'(u)^2 is 1{u>0}, so chi = sigma_w2 / 2 whatever q* is
        Activation::Relu => return Ok(2.0),
        Activation::Tanh => {}
        other => return Err(Error::Config(format!("no edge-of-chaos solver for {other}"))),
    }
    let gx = GaussianExpectation::default();
    let chi = |sw2: f64| -> Result<f64> {
        let q = variance_fixed_point(&gx, phi, sw2, sigma_b2)?;
        Ok(sw2 * gx.eval(q, |u| phi.derivative(u).powi(2)))
    };
    // grow the bracket gradually: at very large sigma_w2 the derivative mass
    // concentrates below the quadrature's resolution
    let (mut lo, mut hi) = (1e-4, 1.0);
    if chi(lo)? >= 1.0 {
        return Err(Error::Solver("edge-of-chaos condition not bracketed".into()));
    }
    while chi(hi)? <= 1.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e4 {
            return Err(Error::Solver("edge-of-chaos condition not bracketed".into()));
        }
    }
    // smallest sigma_w2 reaching chi = 1; at sigma_b2 = 0 tanh sits on a
    // plateau chi = 1 + O((sigma_w2 - 1)^2) above the critical point
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if chi(mid)? >= 1.0 - 1e-10 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let c = chi(hi)?;
    if (c - 1.0).abs() > 1e-10 {
        return Err(Error::Solver(format!("edge-of-chaos bisection stalled at chi = {c}")));
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_integrates_gaussian_moments() {
        let gx = GaussianExpectation::default();
        assert!((gx.eval(1.0, |_| 1.0) - 1.0).abs() < 1e-13);
        assert!((gx.eval(2.0, |u| u * u) - 2.0).abs() < 1e-12);
        assert!((gx.eval(1.0, |u| u.powi(4)) - 3.0).abs() < 1e-11);
    }

    #[test]
    fn relu_and_zero_bias_tanh() {
        assert_eq!(eoc_solve(Activation::Relu, 0.3).unwrap(), 2.0);
        assert!((eoc_solve(Activation::Tanh, 0.0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn unsupported_activation() {
        assert!(eoc_solve(Activation::Swish, 0.1).is_err());
        assert!(eoc_solve(Activation::Tanh, -1.0).is_err());
    }
}
