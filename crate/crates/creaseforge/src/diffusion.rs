//! Diffusion schedules, forward noising, and the training objective.
//!
//! The forward process adds Gaussian noise step by step under a variance
//! schedule β_t; composing the per-step kernels gives the closed-form
//! marginal `x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε` used everywhere here. Steps are
//! 1-based: t runs 1..=T.
//!
//! The denoiser contract ([`Denoiser`]) lives next to the objective it
//! is trained under: predict the injected noise from `(x_t, t, y)`,
//! where `y` is the crease condition image as a tensor. Conditioning is
//! passed alongside `x_t`; implementations are free to concatenate
//! channels internally.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::raster::CreaseImage;
use crate::rng::RandomStream;

/// Production step count.
pub const DEFAULT_T: usize = 1000;
/// Conventional linear-schedule endpoints at the production step count.
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("invalid schedule range: T={t_steps}, beta=({beta_start}, {beta_end}); need T >= 1 and 0 < beta_start <= beta_end < 1")]
    InvalidRange {
        t_steps: usize,
        beta_start: f64,
        beta_end: f64,
    },
    #[error("step {t} outside 1..={t_max}")]
    StepOutOfRange { t: usize, t_max: usize },
    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
}

/// β/α/ᾱ/σ tables for a T-step linear schedule. σ_t = √β_t (the
/// fixed-variance sampler choice).
#[derive(Clone, Debug)]
pub struct DiffusionSchedule {
    t_steps: usize,
    beta_start: f64,
    beta_end: f64,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

/// Serialized form embedded in manifests.
#[derive(Serialize, Deserialize, Clone, Copy, Debug, PartialEq)]
pub struct ScheduleSpec {
    #[serde(rename = "T")]
    pub t_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl DiffusionSchedule {
    /// Linear β schedule from `beta_start` to `beta_end` over T steps.
    pub fn linear(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self, DiffusionError> {
        if t_steps < 1
            || !(beta_start.is_finite() && beta_end.is_finite())
            || beta_start <= 0.0
            || beta_start > beta_end
            || beta_end >= 1.0
        {
            return Err(DiffusionError::InvalidRange {
                t_steps,
                beta_start,
                beta_end,
            });
        }
        let beta: Vec<f64> = if t_steps == 1 {
            vec![beta_start]
        } else {
            (0..t_steps)
                .map(|i| {
                    beta_start + (beta_end - beta_start) * i as f64 / (t_steps - 1) as f64
                })
                .collect()
        };
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(t_steps);
        let mut product = 1.0;
        for a in &alpha {
            product *= a;
            alpha_bar.push(product);
        }
        let sigma: Vec<f64> = beta.iter().map(|b| b.sqrt()).collect();
        Ok(Self {
            t_steps,
            beta_start,
            beta_end,
            beta,
            alpha,
            alpha_bar,
            sigma,
        })
    }

    pub fn from_spec(spec: &ScheduleSpec) -> Result<Self, DiffusionError> {
        Self::linear(spec.t_steps, spec.beta_start, spec.beta_end)
    }

    pub fn spec(&self) -> ScheduleSpec {
        ScheduleSpec {
            t_steps: self.t_steps,
            beta_start: self.beta_start,
            beta_end: self.beta_end,
        }
    }

    pub fn len(&self) -> usize {
        self.t_steps
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn check_step(&self, t: usize) -> Result<(), DiffusionError> {
        if t < 1 || t > self.t_steps {
            return Err(DiffusionError::StepOutOfRange {
                t,
                t_max: self.t_steps,
            });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t - 1]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigma[t - 1]
    }
}

/// Single-channel real-valued image tensor. Data values live in [−1, 1];
/// intermediate diffusion states may exceed that range.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl Sample {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            values: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn from_values(width: u32, height: u32, values: Vec<f64>) -> Result<Self, DiffusionError> {
        if values.len() != width as usize * height as usize {
            return Err(DiffusionError::ShapeMismatch {
                left: format!("{width}x{height}"),
                right: format!("{} values", values.len()),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    /// 8-bit image to [−1, 1]: v = p/255·2 − 1.
    pub fn from_image(image: &CreaseImage) -> Self {
        Self {
            width: image.width(),
            height: image.height(),
            values: image
                .pixels()
                .iter()
                .map(|&p| f64::from(p) / 255.0 * 2.0 - 1.0)
                .collect(),
        }
    }

    /// Back to 8 bits with round-half-even, clamping out-of-range values.
    pub fn to_image(&self) -> CreaseImage {
        let pixels: Vec<u8> = self
            .values
            .iter()
            .map(|&v| ((v + 1.0) / 2.0 * 255.0).round_ties_even().clamp(0.0, 255.0) as u8)
            .collect();
        CreaseImage::from_pixels(self.width, self.height, pixels)
            .expect("length preserved by construction")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn shape_string(&self) -> String {
        format!("{}x{}", self.width, self.height)
    }

    /// Standard-normal tensor drawn from a stream node.
    pub fn standard_normal(width: u32, height: u32, stream: &RandomStream) -> Self {
        Self {
            width,
            height,
            values: stream.standard_normals(width as usize * height as usize),
        }
    }
}

/// The denoiser contract: predict the injected noise ε from the noisy
/// state, the step index, and the condition image tensor. Implementations
/// must be deterministic functions of their inputs and immutable after
/// construction (concurrent predict calls are allowed).
pub trait Denoiser: Send + Sync {
    fn predict_noise(
        &self,
        x_t: &Sample,
        t: usize,
        condition: &Sample,
        schedule: &DiffusionSchedule,
    ) -> Result<Sample, DiffusionError>;

    /// Short human-readable identifier recorded in run manifests.
    fn descriptor(&self) -> String;
}

/// Closed-form forward marginal: `x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε`.
pub fn q_sample(
    x0: &Sample,
    t: usize,
    eps: &Sample,
    schedule: &DiffusionSchedule,
) -> Result<Sample, DiffusionError> {
    schedule.check_step(t)?;
    if !x0.same_shape(eps) {
        return Err(DiffusionError::ShapeMismatch {
            left: x0.shape_string(),
            right: eps.shape_string(),
        });
    }
    let ab = schedule.alpha_bar(t);
    let signal = ab.sqrt();
    let noise = (1.0 - ab).sqrt();
    let values = x0
        .values()
        .iter()
        .zip(eps.values())
        .map(|(x, e)| signal * x + noise * e)
        .collect();
    Sample::from_values(x0.width(), x0.height(), values)
}

/// Stream node attached to a batch element's content, so the element's
/// `(t, ε)` draw follows it under batch reordering and duplication.
pub(crate) fn element_stream(stream: &RandomStream, x0: &Sample, y: &Sample) -> RandomStream {
    let mut hasher = Sha256::new();
    hasher.update(x0.width().to_le_bytes());
    hasher.update(x0.height().to_le_bytes());
    for v in x0.values() {
        hasher.update(v.to_le_bytes());
    }
    for v in y.values() {
        hasher.update(v.to_le_bytes());
    }
    let digest: [u8; 32] = hasher.finalize().into();
    stream.child_digest(&digest)
}

/// The `(t, ε)` draw for one batch element.
pub(crate) fn element_draw(
    stream: &RandomStream,
    x0: &Sample,
    y: &Sample,
    schedule: &DiffusionSchedule,
) -> (usize, Sample) {
    let node = element_stream(stream, x0, y);
    let t = {
        use rand::Rng;
        let mut rng = node.rng();
        rng.random_range(1..=schedule.len())
    };
    let eps = Sample::standard_normal(x0.width(), x0.height(), &node.child_label("eps"));
    (t, eps)
}

/// Monte-Carlo estimate of the denoising objective: for each element,
/// draw `t` uniformly and ε ~ N(0, I), form x_t, and score
/// `‖ε − ε̂(x_t, t, y)‖²` (sum over pixels); average over the batch.
///
/// Draws are keyed to element content and the per-element losses are
/// summed in sorted order, so the result is invariant to batch
/// permutation bit-for-bit.
pub fn training_loss(
    denoiser: &dyn Denoiser,
    batch: &[(Sample, Sample)],
    schedule: &DiffusionSchedule,
    stream: &RandomStream,
) -> Result<f64, DiffusionError> {
    if batch.is_empty() {
        return Err(DiffusionError::EmptyBatch);
    }
    let mut losses = Vec::with_capacity(batch.len());
    for (x0, y) in batch {
        if !x0.same_shape(y) {
            return Err(DiffusionError::ShapeMismatch {
                left: x0.shape_string(),
                right: y.shape_string(),
            });
        }
        let (t, eps) = element_draw(stream, x0, y, schedule);
        let x_t = q_sample(x0, t, &eps, schedule)?;
        let predicted = denoiser.predict_noise(&x_t, t, y, schedule)?;
        let loss: f64 = eps
            .values()
            .iter()
            .zip(predicted.values())
            .map(|(e, p)| (e - p) * (e - p))
            .sum();
        if !loss.is_finite() {
            return Err(DiffusionError::NonFinite("training loss"));
        }
        losses.push(loss);
    }
    losses.sort_by(f64::total_cmp);
    Ok(losses.iter().sum::<f64>() / batch.len() as f64)
}
