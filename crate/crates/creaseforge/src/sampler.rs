//! Reverse-diffusion sampling with K-step noise sharing.
//!
//! Ancestral sampling runs the learned reverse chain from pure noise:
//!
//! `x_{t−1} = (x_t − (1−α_t)/√(1−ᾱ_t)·ε̂(x_t, t, y)) / √α_t + σ_t·z_t`
//!
//! Noise-sharing sampling generates all M samples of one identity with
//! the same per-step noise z_t inside a contiguous K-step window, and
//! per-sample noise outside it. Sharing the window collapses that part
//! of the chain's randomness within the identity, which shrinks
//! intra-class variation; K tunes how much. `mode` places the window at
//! the start (`first`: t = T..T−K+1) or the end (`last`: t = K..1) of
//! the reverse process.
//!
//! The initial noise x_T is never shared unless `share_initial` is set
//! explicitly; the final-step noise z_1 is zero unless
//! `noise_at_final_step` is set.
//!
//! Noise derivation paths (from the stream handed to the samplers):
//! per-sample z: `(id, j, t)`; shared z: `(id, "shared", t)`; initial
//! noise: `(id, j, "init")`. Because draws are path-derived, outputs
//! depend only on `(master seed, identity, sample index, plan)` and not
//! on scheduling, and noise-sharing with K = 0 is bit-identical to
//! independent ancestral runs.
//!
//! For denoisers that are affine in x_t, the whole chain is an affine
//! map of `{x_T, z_t}`, so the exact intra-class covariance of x_0 can
//! be propagated step by step; [`exact_intra_class_covariance`] does
//! this numerically and serves as the independent oracle for the
//! sampler's statistics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{Denoiser, DiffusionError, DiffusionSchedule, Sample};
use crate::rng::RandomStream;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("noise-sharing window K={k} exceeds T={t_steps}")]
    WindowTooLarge { k: usize, t_steps: usize },
    #[error("plan is for T={plan_t} but schedule has T={sched_t}")]
    PlanMismatch { plan_t: usize, sched_t: usize },
    #[error("identity batch needs sample_count >= 1")]
    EmptyBatch,
    #[error("sampler state became non-finite at step {step} (denoiser blow-up)")]
    NonFiniteState { step: usize },
    #[error("denoiser is not affine in x_t at step {step} (deviation {deviation:.3e})")]
    NonAffineDenoiser { step: usize, deviation: f64 },
    #[error("unknown window mode '{0}' (expected 'first' or 'last')")]
    UnknownMode(String),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

/// Where the shared window sits in the reverse process.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// Share the first K reverse steps: t = T .. T−K+1.
    First,
    /// Share the last K reverse steps: t = K .. 1.
    Last,
}

impl std::str::FromStr for WindowMode {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "first" => Ok(Self::First),
            "last" => Ok(Self::Last),
            other => Err(SamplerError::UnknownMode(other.to_string())),
        }
    }
}

impl std::fmt::Display for WindowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::First => "first",
            Self::Last => "last",
        })
    }
}

/// Which steps share one per-identity noise draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSharingPlan {
    pub k: usize,
    pub mode: WindowMode,
    pub t_steps: usize,
    /// Also share the initial noise x_T across the identity's samples.
    /// Off by default: sharing is restricted to the per-step z_t terms.
    #[serde(default)]
    pub share_initial: bool,
}

impl NoiseSharingPlan {
    pub fn new(k: usize, mode: WindowMode, t_steps: usize) -> Result<Self, SamplerError> {
        if k > t_steps {
            return Err(SamplerError::WindowTooLarge { k, t_steps });
        }
        Ok(Self {
            k,
            mode,
            t_steps,
            share_initial: false,
        })
    }

    pub fn with_shared_initial(mut self) -> Self {
        self.share_initial = true;
        self
    }

    /// Is step `t` inside the shared window?
    pub fn is_shared(&self, t: usize) -> bool {
        match self.mode {
            WindowMode::Last => t <= self.k,
            WindowMode::First => t > self.t_steps - self.k,
        }
    }

    fn check_against(&self, schedule: &DiffusionSchedule) -> Result<(), SamplerError> {
        if self.t_steps != schedule.len() {
            return Err(SamplerError::PlanMismatch {
                plan_t: self.t_steps,
                sched_t: schedule.len(),
            });
        }
        Ok(())
    }
}

/// Sampler switches that are not part of the sharing plan.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SampleOptions {
    /// Inject σ_1·z_1 at the final step as the update rule literally
    /// prescribes. Off by default (the final-step noise is zeroed).
    pub noise_at_final_step: bool,
}

/// One identity's sampling request.
#[derive(Clone, Debug)]
pub struct IdentityBatch {
    pub identity_id: u64,
    pub condition: Sample,
    pub sample_count: usize,
}

fn check_finite(x: &Sample, step: usize) -> Result<(), SamplerError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(SamplerError::NonFiniteState { step })
    }
}

/// One reverse pass. `z_source` supplies the step-noise stream node for
/// each step; both samplers funnel through here so their arithmetic is
/// identical operation for operation.
fn reverse_chain(
    denoiser: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    condition: &Sample,
    mut x: Sample,
    z_source: &dyn Fn(usize) -> RandomStream,
    opts: SampleOptions,
) -> Result<Sample, SamplerError> {
    let (w, h) = (condition.width(), condition.height());
    for t in (1..=schedule.len()).rev() {
        let predicted = denoiser.predict_noise(&x, t, condition, schedule)?;
        let alpha = schedule.alpha(t);
        let weight = (1.0 - alpha) / (1.0 - schedule.alpha_bar(t)).sqrt();
        let inv_sqrt_alpha = 1.0 / alpha.sqrt();
        for (xv, ev) in x.values_mut().iter_mut().zip(predicted.values()) {
            *xv = (*xv - weight * ev) * inv_sqrt_alpha;
        }
        if t > 1 || opts.noise_at_final_step {
            let z = Sample::standard_normal(w, h, &z_source(t));
            let sigma = schedule.sigma(t);
            for (xv, zv) in x.values_mut().iter_mut().zip(z.values()) {
                *xv += sigma * zv;
            }
        }
        check_finite(&x, t)?;
    }
    Ok(x)
}

/// Ancestral sampling for one sample. `stream` is the per-sample node:
/// x_T comes from its "init" child and z_t from its step-index children.
pub fn ancestral_sample(
    denoiser: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    condition: &Sample,
    stream: &RandomStream,
) -> Result<Sample, SamplerError> {
    ancestral_sample_with(denoiser, schedule, condition, stream, SampleOptions::default())
}

pub fn ancestral_sample_with(
    denoiser: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    condition: &Sample,
    stream: &RandomStream,
    opts: SampleOptions,
) -> Result<Sample, SamplerError> {
    let x_init = Sample::standard_normal(
        condition.width(),
        condition.height(),
        &stream.child_label("init"),
    );
    let per_sample = *stream;
    reverse_chain(
        denoiser,
        schedule,
        condition,
        x_init,
        &move |t| per_sample.child_index(t as u64),
        opts,
    )
}

/// Generate all samples of one identity under a noise-sharing plan.
/// `stream` is the run root; the identity node is derived from
/// `batch.identity_id`, so every output byte is a function of
/// `(master seed, identity, sample index, plan)` alone.
pub fn noise_sharing_sample(
    denoiser: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    batch: &IdentityBatch,
    plan: &NoiseSharingPlan,
    stream: &RandomStream,
) -> Result<Vec<Sample>, SamplerError> {
    noise_sharing_sample_with(denoiser, schedule, batch, plan, stream, SampleOptions::default())
}

pub fn noise_sharing_sample_with(
    denoiser: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    batch: &IdentityBatch,
    plan: &NoiseSharingPlan,
    stream: &RandomStream,
    opts: SampleOptions,
) -> Result<Vec<Sample>, SamplerError> {
    plan.check_against(schedule)?;
    if batch.sample_count == 0 {
        return Err(SamplerError::EmptyBatch);
    }
    let id_node = stream.child_index(batch.identity_id);
    let shared_node = id_node.child_label("shared");
    let mut outputs = Vec::with_capacity(batch.sample_count);
    for j in 0..batch.sample_count {
        let sample_node = id_node.child_index(j as u64);
        let init_node = if plan.share_initial {
            shared_node.child_label("init")
        } else {
            sample_node.child_label("init")
        };
        let x_init = Sample::standard_normal(
            batch.condition.width(),
            batch.condition.height(),
            &init_node,
        );
        let plan_copy = *plan;
        let z_source = move |t: usize| {
            if plan_copy.is_shared(t) {
                shared_node.child_index(t as u64)
            } else {
                sample_node.child_index(t as u64)
            }
        };
        outputs.push(reverse_chain(
            denoiser,
            schedule,
            &batch.condition,
            x_init,
            &z_source,
            opts,
        )?);
    }
    Ok(outputs)
}

/// Numerically extract the linear part M of ε̂(x) = M·x + c at one step
/// by probing with basis vectors, verifying affinity at a fixed random
/// point. Only M matters for covariance propagation; the constant term
/// shifts the class mean.
fn probe_affine_step(
    denoiser: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    condition: &Sample,
    t: usize,
) -> Result<DMatrix<f64>, SamplerError> {
    let (w, h) = (condition.width(), condition.height());
    let dim = condition.len();
    let zero = Sample::zeros(w, h);
    let at_zero = denoiser.predict_noise(&zero, t, condition, schedule)?;
    let constant = DMatrix::from_column_slice(dim, 1, at_zero.values());
    let mut matrix = DMatrix::zeros(dim, dim);
    let mut basis = Sample::zeros(w, h);
    for k in 0..dim {
        basis.values_mut()[k] = 1.0;
        let response = denoiser.predict_noise(&basis, t, condition, schedule)?;
        for (row, (r, c)) in response.values().iter().zip(at_zero.values()).enumerate() {
            matrix[(row, k)] = r - c;
        }
        basis.values_mut()[k] = 0.0;
    }
    // Affinity check at a fixed pseudo-random probe point.
    let probe = Sample::standard_normal(
        w,
        h,
        &RandomStream::from_seed(0xAFF1_4E5).child_index(t as u64),
    );
    let predicted = denoiser.predict_noise(&probe, t, condition, schedule)?;
    let probe_vec = DMatrix::from_column_slice(dim, 1, probe.values());
    let linear = &matrix * probe_vec + &constant;
    let mut deviation = 0.0f64;
    let mut scale = 1.0f64;
    for (p, l) in predicted.values().iter().zip(linear.iter()) {
        deviation = deviation.max((p - l).abs());
        scale = scale.max(p.abs());
    }
    if deviation > 1e-8 * scale {
        return Err(SamplerError::NonAffineDenoiser { step: t, deviation });
    }
    Ok(matrix)
}

/// Exact intra-class covariance of x_0 under a noise-sharing plan, for
/// denoisers affine in x_t.
///
/// Propagating the affine per-step maps writes the chain as
/// `x_0 = A·x_T + Σ_t B_t·z_t + const`; noise drawn once per identity
/// contributes nothing within the class, so the intra-class covariance
/// is `A·Aᵀ` (unless x_T is shared) plus `Σ B_t·B_tᵀ` over non-shared
/// steps with active noise.
pub fn exact_intra_class_covariance(
    denoiser: &dyn Denoiser,
    schedule: &DiffusionSchedule,
    condition: &Sample,
    plan: &NoiseSharingPlan,
    opts: SampleOptions,
) -> Result<DMatrix<f64>, SamplerError> {
    plan.check_against(schedule)?;
    let dim = condition.len();
    let mut covariance = DMatrix::<f64>::zeros(dim, dim);
    // Q accumulates S_1 S_2 ... S_{t-1}; B_t = Q · σ_t.
    let mut prefix = DMatrix::<f64>::identity(dim, dim);
    for t in 1..=schedule.len() {
        let noise_active = t > 1 || opts.noise_at_final_step;
        if noise_active && !plan.is_shared(t) {
            let sigma = schedule.sigma(t);
            covariance.gemm(sigma * sigma, &prefix, &prefix.transpose(), 1.0);
        }
        let step = probe_affine_step(denoiser, schedule, condition, t)?;
        let alpha = schedule.alpha(t);
        let weight = (1.0 - alpha) / (1.0 - schedule.alpha_bar(t)).sqrt();
        let inv_sqrt_alpha = 1.0 / alpha.sqrt();
        // S_t = (I − weight·M_t)/√α_t
        let mut step_matrix = DMatrix::<f64>::identity(dim, dim);
        step_matrix -= step * weight;
        step_matrix *= inv_sqrt_alpha;
        prefix = &prefix * step_matrix;
    }
    if !plan.share_initial {
        let a = prefix; // S_1 ... S_T
        covariance += &a * a.transpose();
    }
    Ok(covariance)
}

/// Per-run manifest for a sampling invocation.
#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SamplerRunManifest {
    #[serde(rename = "T")]
    pub t_steps: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub mode: WindowMode,
    pub seed: u64,
    pub ids: usize,
    pub per_id: usize,
    pub denoiser: String,
}
