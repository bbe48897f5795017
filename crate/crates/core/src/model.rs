use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::paramlaw::ParamLaw;

/// Depth, width, horizon, activations and parameter law of a residual network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub depth: usize,
    pub width: usize,
    pub horizon: f64,
    /// Outer activation `phi`.
    pub phi: Activation,
    /// Inner activation `psi`.
    pub psi: Activation,
    pub law: ParamLaw,
}

impl ModelConfig {
    pub fn new(
        depth: usize,
        width: usize,
        horizon: f64,
        phi: Activation,
        psi: Activation,
        law: ParamLaw,
    ) -> Result<Self> {
        let cfg = ModelConfig {
            depth,
            width,
            horizon,
            phi,
            psi,
            law,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if self.width == 0 {
            return Err(Error::Config("width must be at least 1".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive (got {})", self.horizon)));
        }
        self.phi.check_diffusion_admissible()?;
        self.law.check_dim(self.width)
    }

    /// Layer time step `T / L`.
    pub fn dt(&self) -> f64 {
        self.horizon / self.depth as f64
    }

    pub fn with_law(&self, law: ParamLaw) -> Self {
        ModelConfig { law, ..self.clone() }
    }

    pub fn with_depth(&self, depth: usize) -> Self {
        ModelConfig { depth, ..self.clone() }
    }

    pub fn with_horizon(&self, horizon: f64) -> Self {
        ModelConfig { horizon, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paramlaw::FullyIidLaw;

    fn iid() -> ParamLaw {
        ParamLaw::FullyIid(FullyIidLaw::new(1.0, 1.0).unwrap())
    }

    #[test]
    fn dt_times_depth_is_horizon() {
        for &(l, t) in &[(1usize, 1.0), (3, 1.0), (7, 0.3), (500, 1.0), (64, 2.5)] {
            let m = ModelConfig::new(l, 4, t, Activation::Tanh, Activation::Identity, iid()).unwrap();
            let back = m.dt() * l as f64;
            assert!((back - t).abs() <= f64::EPSILON * t);
        }
    }

    #[test]
    fn rejects_bad_shapes_and_relu() {
        assert!(ModelConfig::new(0, 4, 1.0, Activation::Tanh, Activation::Identity, iid()).is_err());
        assert!(ModelConfig::new(4, 0, 1.0, Activation::Tanh, Activation::Identity, iid()).is_err());
        assert!(ModelConfig::new(4, 4, 0.0, Activation::Tanh, Activation::Identity, iid()).is_err());
        assert!(ModelConfig::new(4, 4, 1.0, Activation::Relu, Activation::Identity, iid()).is_err());
    }
}
