//! Monte Carlo lab for deep residual networks whose parameters are
//! depth-scaled Gaussian increments, and for the stochastic differential
//! equations they converge to.

pub mod activation;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod paramlaw;
pub mod path;
pub mod resnet;
pub mod rng;
pub mod sdelim;
pub mod stats;
pub mod train;

pub use activation::Activation;
pub use error::{Error, Result};
pub use model::ModelConfig;
pub use paramlaw::{FullyIidLaw, GeneralGaussianLaw, MatrixNormalLaw, NoiseMode, ParamIncrement, ParamLaw};
pub use path::{ExplosionGuard, PathBatch, Retention};
pub use resnet::{resnet_draw, resnet_forward, ForwardOptions};
pub use rng::SeedSpec;
