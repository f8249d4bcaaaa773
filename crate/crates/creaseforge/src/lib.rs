//! Synthetic palm-crease dataset generation and evaluation.
//!
//! The crate covers the full batch path from annotated principal-line
//! points to an evaluated synthetic dataset:
//!
//! 1. **creasefit** – least-squares fitting of fourth-order polynomials to
//!    labeled principal-line points.
//! 2. **creasedist** – a multivariate Gaussian prior over the fitted
//!    coefficients and line endpoints, with γ-scaled covariance sampling.
//! 3. **raster** – rendering of polynomial (and baseline Bézier) creases
//!    plus random wrinkles into grayscale condition images.
//! 4. **diffusion** – noise schedules, forward noising, and the denoising
//!    training objective.
//! 5. **denoise** – the denoiser contract with two closed-form-verifiable
//!    implementations (analytic Gaussian-toy posterior, ridge-fitted
//!    linear denoiser).
//! 6. **sampler** – ancestral sampling and K-step noise-sharing sampling
//!    with an exact affine-propagation covariance oracle.
//! 7. **metrics** – genuine/imposter score distributions, class
//!    uniqueness, identity consistency, intra-class diversity, TAR@FAR.
//! 8. **pipeline** – end-to-end orchestration, config, dataset layout,
//!    and a built-in toy embedding backend.
//!
//! All randomness flows through [`rng::RandomStream`], a path-derived
//! seed tree: identical `(master seed, path)` always yields identical
//! draws, independent of thread count or call order.

pub mod creasedist;
pub mod creasefit;
pub mod denoise;
pub mod diffusion;
pub mod metrics;
pub mod pipeline;
pub mod raster;
pub mod rng;
pub mod sampler;
