//! Closed registry of element-wise activation functions.
//!
//! The limiting diffusion only depends on an activation through its value,
//! slope and curvature at the origin, so those constants are stored exactly
//! rather than estimated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Swish,
    Identity,
    Relu,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub const ALL: [Activation; 4] = [
        Activation::Tanh,
        Activation::Swish,
        Activation::Identity,
        Activation::Relu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Swish => "swish",
            Activation::Identity => "identity",
            Activation::Relu => "relu",
        }
    }

    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Swish => x * sigmoid(x),
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }

    /// First derivative. For relu the derivative at exactly 0 is taken as 0.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// φ(0).
    pub fn phi0(self) -> f64 {
        0.0
    }

    /// φ'(0). For relu this is the symmetric derivative 1/2.
    pub fn dphi0(self) -> f64 {
        match self {
            Activation::Tanh | Activation::Identity => 1.0,
            Activation::Swish | Activation::Relu => 0.5,
        }
    }

    /// φ''(0). Undefined for relu, reported as 0.
    pub fn ddphi0(self) -> f64 {
        match self {
            Activation::Swish => 0.5,
            _ => 0.0,
        }
    }

    /// Three times continuously differentiable, as the diffusion limit requires.
    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    /// Rejects activations that cannot drive the outer block in diffusion mode.
    pub fn check_diffusion_admissible(self) -> Result<()> {
        if self.is_smooth() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "activation `{}` is not smooth enough for the diffusion limit; \
                 it is only available for the edge-of-chaos feedforward baseline",
                self.name()
            )))
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "swish" => Ok(Activation::Swish),
            "identity" | "id" | "linear" => Ok(Activation::Identity),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}
