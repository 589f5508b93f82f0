//! Multimodal image registration with the normalized total gradient (NTG).
//!
//! The crate is organized bottom-up:
//!
//! * [`image`]: rasters, finite-difference derivatives, interpolation, pyramids
//! * [`io`]: PGM / raw float32 readers and writers
//! * [`transform`]: the six-parameter affine model and overlap masks
//! * [`smooth_abs`]: the differentiable surrogate for `|x|`
//! * [`measure`]: TG, NTG and the MI / CR / SSD baselines
//! * [`derivatives`]: analytic gradient and Hessian of the NTG objective
//! * [`optimize`]: differential evolution, damped Newton and the pyramid pipeline
//! * [`harness`]: synthetic scenes, cost maps, sparsity statistics and RMSE evaluation

pub mod derivatives;
pub mod error;
pub mod harness;
pub mod image;
pub mod io;
pub mod measure;
pub mod optimize;
pub mod smooth_abs;
pub mod transform;

pub use derivatives::{DerivativeMode, FloatingDerivatives, NtgModel, ObjectiveEval, ReferenceGradients};
pub use error::{Error, Result};
pub use harness::{CostMap, RmseReport, SparsityReport, SyntheticScene};
pub use image::{ChannelStack, DerivativeStack, Image2D, Pyramid};
pub use measure::Measure;
pub use optimize::{register, register_stack, DEConfig, RegisterConfig, RegistrationResult};
pub use smooth_abs::SmoothAbsConfig;
pub use transform::{AffineParams, OverlapMask, ParamBounds};
