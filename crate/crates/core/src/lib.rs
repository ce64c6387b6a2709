//! Unsupervised pansharpening by guided diffusion sampling in a low-rank
//! spectral subspace.
//!
//! The high-resolution multispectral image is written as `A x_3 E`: a base
//! tensor `A` with a few bands at full spatial resolution and a coefficient
//! matrix `E` estimated once from the low-resolution observation. A diffusion
//! sampler draws `A`, and each reverse step is nudged toward agreement with
//! both observations (the blurred, decimated LRMS and the spectrally summed
//! PAN image).
//!
//! ```
//! use plrdiff_core::{
//!     degrade::{wald_generate, DegradationModel},
//!     denoiser::GaussianPrior,
//!     sampler::{plrdiff_sample, GuidanceConfig},
//!     schedule::linear_schedule,
//!     subspace::BandSelection,
//!     synth::low_rank_scene,
//! };
//!
//! let scene = low_rank_scene(16, 16, 6, 3, 0);
//! let model = DegradationModel::new(
//!     2,
//!     plrdiff_core::degrade::gaussian_kernel(3, 0.8).unwrap(),
//!     plrdiff_core::degrade::SpectralResponse::uniform(6).unwrap(),
//! )
//! .unwrap();
//! let (lrms, pan) = wald_generate(&scene.hrms, &model).unwrap();
//! let sel = BandSelection::equal_interval(6, 3).unwrap();
//! let prior = GaussianPrior::constant(16, 16, 3, 0.5, 0.1).unwrap();
//! let sched = linear_schedule(50).unwrap();
//! let out = plrdiff_sample(&lrms, &pan, &sel, &model, &prior, &sched, &GuidanceConfig::default(), 1)
//!     .unwrap();
//! assert_eq!(out.hrms.shape(), (16, 16, 6));
//! ```

pub mod degrade;
pub mod denoiser;
pub mod error;
pub mod metrics;
pub mod sampler;
pub mod schedule;
pub mod subspace;
pub mod synth;
pub mod tensor3;

pub use degrade::{DegradationModel, Kernel, SpectralResponse};
pub use denoiser::{GaussianPrior, NoisePredictor, TinyDenoiser, TinyDenoiserConfig};
pub use error::{Error, Result};
pub use metrics::{MetricOptions, MetricReport};
pub use sampler::{GuidanceConfig, PlrdiffOutput, VjpMode};
pub use schedule::NoiseSchedule;
pub use subspace::BandSelection;
pub use tensor3::{Mat, Tensor3};
