//! The angle-conditioned generator, its configuration and checkpoints.

mod angle;
pub mod checkpoint;
mod config;
mod gradcheck;
mod model;

pub use angle::{encode_angle, sin_cos_deg, AngleQuery};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{ViewNetConfig, ANGLE_ENCODING_DIM};
pub use gradcheck::{model_grad_check, ModelGradCheck};
pub use model::{LossVars, LossWeights, NormStates, ParamMap, ParamVars, ViewNet, ViewOutput};
