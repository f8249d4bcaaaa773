//! Concrete denoisers.
//!
//! Two implementations back the [`Denoiser`] contract without any neural
//! framework, so the objective and the samplers can be verified in
//! closed form:
//!
//! * [`GaussianToyModel`] — models the data as `x0 = c(y) + s·η` with
//!   η ~ N(0, I), where `c(y)` is the condition tensor itself (the image
//!   rescaled to [−1, 1]). Its noise prediction is the exact MMSE
//!   posterior under that model, so it is the optimum every learned
//!   denoiser is compared against.
//! * [`LinearDenoiser`] — per-timestep-bucket affine maps
//!   `[flatten(x_t); flatten(y); 1] → flatten(ε̂)` fitted by ridge least
//!   squares instead of gradient descent. Step index enters only through
//!   the bucket, which keeps the model closed-form-verifiable.
//!
//! A plug-in neural denoiser only needs to implement [`Denoiser`];
//! file-based weight loading for such backends is out of scope here.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{element_draw, q_sample, Denoiser, DiffusionError, DiffusionSchedule, Sample};
use crate::rng::RandomStream;

/// Default bucket count for ridge fitting.
pub const DEFAULT_BUCKETS: usize = 10;
/// Default ridge strength.
pub const DEFAULT_LAMBDA: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum DenoiseError {
    #[error("spread must be finite and >= 0, got {got}")]
    InvalidSpread { got: f64 },
    #[error("need at least 1 bucket")]
    NoBuckets,
    #[error("ridge lambda must be finite and >= 0, got {got}")]
    InvalidLambda { got: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset shapes inconsistent: {0}")]
    InconsistentShapes(String),
    #[error(
        "normal equations singular in bucket {bucket} ({rows} draws for {cols} features); use lambda > 0"
    )]
    SingularSystem {
        bucket: usize,
        rows: usize,
        cols: usize,
    },
    #[error("denoiser file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

/// Gaussian toy data model `x0 = c(y) + spread·η`. The condition map
/// `c` is the identity on the already-rescaled condition tensor.
///
/// `spread = 0` is allowed and makes the data deterministic given the
/// condition; the posterior then collapses onto `c(y)` and the predicted
/// noise is exactly the injected noise.
#[derive(Clone, Copy, Debug)]
pub struct GaussianToyModel {
    spread: f64,
}

impl GaussianToyModel {
    pub fn new(spread: f64) -> Result<Self, DenoiseError> {
        if !spread.is_finite() || spread < 0.0 {
            return Err(DenoiseError::InvalidSpread { got: spread });
        }
        Ok(Self { spread })
    }

    pub fn spread(&self) -> f64 {
        self.spread
    }

    /// Draw one `x0` from the model given a condition tensor.
    pub fn draw_x0(&self, condition: &Sample, stream: &RandomStream) -> Sample {
        let eta = Sample::standard_normal(condition.width(), condition.height(), stream);
        let values = condition
            .values()
            .iter()
            .zip(eta.values())
            .map(|(c, e)| c + self.spread * e)
            .collect();
        Sample::from_values(condition.width(), condition.height(), values)
            .expect("shape preserved")
    }
}

impl Denoiser for GaussianToyModel {
    fn predict_noise(
        &self,
        x_t: &Sample,
        t: usize,
        condition: &Sample,
        schedule: &DiffusionSchedule,
    ) -> Result<Sample, DiffusionError> {
        analytic_predict_noise(self, x_t, t, condition, schedule)
    }

    fn descriptor(&self) -> String {
        format!("analytic(spread={})", self.spread)
    }
}

/// Exact posterior-mean noise prediction under the toy model:
///
/// `m_post = (√ᾱ_t s² x_t + (1−ᾱ_t) c(y)) / (ᾱ_t s² + 1−ᾱ_t)`
/// `ε̂ = (x_t − √ᾱ_t m_post) / √(1−ᾱ_t)`
pub fn analytic_predict_noise(
    model: &GaussianToyModel,
    x_t: &Sample,
    t: usize,
    condition: &Sample,
    schedule: &DiffusionSchedule,
) -> Result<Sample, DiffusionError> {
    schedule.check_step(t)?;
    if !x_t.same_shape(condition) {
        return Err(DiffusionError::ShapeMismatch {
            left: x_t.shape_string(),
            right: condition.shape_string(),
        });
    }
    let ab = schedule.alpha_bar(t);
    let s2 = model.spread * model.spread;
    let denom = ab * s2 + (1.0 - ab);
    let sqrt_ab = ab.sqrt();
    let sqrt_om = (1.0 - ab).sqrt();
    let values = x_t
        .values()
        .iter()
        .zip(condition.values())
        .map(|(x, c)| {
            let m_post = (sqrt_ab * s2 * x + (1.0 - ab) * c) / denom;
            (x - sqrt_ab * m_post) / sqrt_om
        })
        .collect();
    Sample::from_values(x_t.width(), x_t.height(), values)
}

/// Ridge-fitted affine denoiser: one weight matrix per contiguous
/// timestep bucket mapping `[flatten(x_t); flatten(y); 1]` to the
/// predicted noise. Bias is the last weight column.
#[derive(Clone, Debug)]
pub struct LinearDenoiser {
    buckets: usize,
    lambda: f64,
    width: u32,
    height: u32,
    weights: Vec<DMatrix<f64>>,
}

fn bucket_of(t: usize, t_steps: usize, buckets: usize) -> usize {
    (t - 1) * buckets / t_steps
}

impl LinearDenoiser {
    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn resolution(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    fn feature_count(dim: usize) -> usize {
        2 * dim + 1
    }

    fn featurize(x_t: &Sample, condition: &Sample) -> DVector<f64> {
        let dim = x_t.len();
        let mut phi = DVector::zeros(Self::feature_count(dim));
        phi.as_mut_slice()[..dim].copy_from_slice(x_t.values());
        phi.as_mut_slice()[dim..2 * dim].copy_from_slice(condition.values());
        phi[2 * dim] = 1.0;
        phi
    }

    pub fn save_json(&self, path: &Path) -> Result<(), DenoiseError> {
        let record = LinearDenoiserRecord {
            buckets: self.buckets,
            lambda: self.lambda,
            resolution: [self.height, self.width],
            weights: self
                .weights
                .iter()
                .map(|w| w.transpose().as_slice().to_vec()) // row-major
                .collect(),
        };
        let body = serde_json::to_string(&record)
            .map_err(|e| DenoiseError::Format(e.to_string()))?;
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, DenoiseError> {
        let body = std::fs::read_to_string(path)?;
        let record: LinearDenoiserRecord =
            serde_json::from_str(&body).map_err(|e| DenoiseError::Format(e.to_string()))?;
        let [height, width] = record.resolution;
        let dim = (width * height) as usize;
        let cols = Self::feature_count(dim);
        if record.buckets == 0 || record.weights.len() != record.buckets {
            return Err(DenoiseError::Format(format!(
                "expected {} weight blocks, found {}",
                record.buckets,
                record.weights.len()
            )));
        }
        let mut weights = Vec::with_capacity(record.buckets);
        for (i, flat) in record.weights.iter().enumerate() {
            if flat.len() != dim * cols {
                return Err(DenoiseError::Format(format!(
                    "bucket {i}: expected {} weights, found {}",
                    dim * cols,
                    flat.len()
                )));
            }
            weights.push(DMatrix::from_row_slice(dim, cols, flat));
        }
        Ok(Self {
            buckets: record.buckets,
            lambda: record.lambda,
            width,
            height,
            weights,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct LinearDenoiserRecord {
    buckets: usize,
    lambda: f64,
    resolution: [u32; 2],
    weights: Vec<Vec<f64>>,
}

impl Denoiser for LinearDenoiser {
    fn predict_noise(
        &self,
        x_t: &Sample,
        t: usize,
        condition: &Sample,
        schedule: &DiffusionSchedule,
    ) -> Result<Sample, DiffusionError> {
        schedule.check_step(t)?;
        if x_t.width() != self.width || x_t.height() != self.height || !x_t.same_shape(condition) {
            return Err(DiffusionError::ShapeMismatch {
                left: x_t.shape_string(),
                right: format!("{}x{} (fitted)", self.width, self.height),
            });
        }
        let phi = Self::featurize(x_t, condition);
        let out = &self.weights[bucket_of(t, schedule.len(), self.buckets)] * phi;
        Sample::from_values(self.width, self.height, out.as_slice().to_vec())
    }

    fn descriptor(&self) -> String {
        format!("linear(buckets={},lambda={})", self.buckets, self.lambda)
    }
}

/// Fit a [`LinearDenoiser`] by solving the per-bucket ridge normal
/// equations over one `(t, ε)` draw per dataset element. Draws are keyed
/// to element content (same contract as the training loss), so
/// duplicating the dataset doubles every Gram entry and, with λ doubled,
/// leaves the solution unchanged.
pub fn fit_linear_denoiser(
    dataset: &[(Sample, Sample)],
    schedule: &DiffusionSchedule,
    buckets: usize,
    lambda: f64,
    stream: &RandomStream,
) -> Result<LinearDenoiser, DenoiseError> {
    if buckets == 0 {
        return Err(DenoiseError::NoBuckets);
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(DenoiseError::InvalidLambda { got: lambda });
    }
    let Some((first_x0, _)) = dataset.first() else {
        return Err(DenoiseError::EmptyDataset);
    };
    let (width, height) = (first_x0.width(), first_x0.height());
    let dim = first_x0.len();
    let cols = LinearDenoiser::feature_count(dim);

    let mut grams = vec![DMatrix::<f64>::zeros(cols, cols); buckets];
    let mut cross = vec![DMatrix::<f64>::zeros(cols, dim); buckets];
    let mut counts = vec![0usize; buckets];

    for (x0, y) in dataset {
        if x0.width() != width || x0.height() != height || !x0.same_shape(y) {
            return Err(DenoiseError::InconsistentShapes(format!(
                "{} vs {}x{}",
                x0.shape_string(),
                width,
                height
            )));
        }
        let (t, eps) = element_draw(stream, x0, y, schedule);
        let x_t = q_sample(x0, t, &eps, schedule)?;
        let phi = LinearDenoiser::featurize(&x_t, y);
        let b = bucket_of(t, schedule.len(), buckets);
        grams[b].ger(1.0, &phi, &phi, 1.0);
        let target = DVector::from_column_slice(eps.values());
        cross[b].ger(1.0, &phi, &target, 1.0);
        counts[b] += 1;
    }

    let mut weights = Vec::with_capacity(buckets);
    for b in 0..buckets {
        if counts[b] == 0 {
            log::warn!("bucket {b}: no draws landed; its weights stay zero");
            weights.push(DMatrix::zeros(dim, cols));
            continue;
        }
        if counts[b] < cols {
            log::warn!(
                "bucket {b}: {} draws for {} features; fit is underdetermined",
                counts[b],
                cols
            );
            if lambda == 0.0 {
                return Err(DenoiseError::SingularSystem {
                    bucket: b,
                    rows: counts[b],
                    cols,
                });
            }
        }
        let mut gram = grams[b].clone();
        for i in 0..cols {
            gram[(i, i)] += lambda;
        }
        let chol = Cholesky::new(gram).ok_or(DenoiseError::SingularSystem {
            bucket: b,
            rows: counts[b],
            cols,
        })?;
        let solution = chol.solve(&cross[b]); // (cols x dim)
        weights.push(solution.transpose());
    }

    Ok(LinearDenoiser {
        buckets,
        lambda,
        width,
        height,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::training_loss;
    use approx::assert_abs_diff_eq;

    fn schedule() -> DiffusionSchedule {
        DiffusionSchedule::linear(100, 1e-4, 0.2).unwrap()
    }

    fn random_condition(w: u32, h: u32, seed: u64) -> Sample {
        Sample::standard_normal(w, h, &RandomStream::from_seed(seed))
    }

    #[test]
    fn deterministic_data_recovers_injected_noise() {
        // spread 0: x0 = c(y) exactly, so the posterior collapses and
        // the predicted noise equals the injected noise.
        let s = schedule();
        let model = GaussianToyModel::new(0.0).unwrap();
        let y = random_condition(4, 4, 1);
        let eps = Sample::standard_normal(4, 4, &RandomStream::from_seed(2));
        for t in [1, 37, 100] {
            let x_t = q_sample(&y, t, &eps, &s).unwrap();
            let predicted = model.predict_noise(&x_t, t, &y, &s).unwrap();
            for (p, e) in predicted.values().iter().zip(eps.values()) {
                assert_abs_diff_eq!(*p, *e, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn noiseless_point_predicts_zero() {
        let s = schedule();
        let model = GaussianToyModel::new(0.0).unwrap();
        let y = random_condition(4, 4, 3);
        let t = 42;
        let scale = s.alpha_bar(t).sqrt();
        let x_t = Sample::from_values(
            4,
            4,
            y.values().iter().map(|c| scale * c).collect(),
        )
        .unwrap();
        let predicted = model.predict_noise(&x_t, t, &y, &s).unwrap();
        for p in predicted.values() {
            assert_abs_diff_eq!(*p, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn prediction_is_affine_in_state() {
        // Exact superposition: f(αx1 + (1−α)x2) = αf(x1) + (1−α)f(x2).
        let s = schedule();
        let model = GaussianToyModel::new(0.5).unwrap();
        let y = random_condition(3, 3, 4);
        let x1 = Sample::standard_normal(3, 3, &RandomStream::from_seed(5));
        let x2 = Sample::standard_normal(3, 3, &RandomStream::from_seed(6));
        let alpha = 0.375; // power-of-two friendly
        let mix = Sample::from_values(
            3,
            3,
            x1.values()
                .iter()
                .zip(x2.values())
                .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
                .collect(),
        )
        .unwrap();
        let t = 60;
        let f1 = model.predict_noise(&x1, t, &y, &s).unwrap();
        let f2 = model.predict_noise(&x2, t, &y, &s).unwrap();
        let fm = model.predict_noise(&mix, t, &y, &s).unwrap();
        for ((a, b), m) in f1.values().iter().zip(f2.values()).zip(fm.values()) {
            assert_abs_diff_eq!(alpha * a + (1.0 - alpha) * b, *m, epsilon = 1e-12);
        }
    }

    #[test]
    fn denoisers_are_deterministic() {
        let s = schedule();
        let model = GaussianToyModel::new(0.5).unwrap();
        let y = random_condition(4, 4, 7);
        let x = Sample::standard_normal(4, 4, &RandomStream::from_seed(8));
        let a = model.predict_noise(&x, 50, &y, &s).unwrap();
        let b = model.predict_noise(&x, 50, &y, &s).unwrap();
        assert_eq!(a, b);
    }

    // Stratified Monte-Carlo comparison of the analytic denoiser against
    // (a) the closed-form minimum E_t[d·ᾱs²/(ᾱs² + 1−ᾱ)] and (b) the
    // best single affine map fit on the same draws by least squares.
    #[test]
    fn analytic_matches_formula_minimum_and_beats_global_affine() {
        let s = schedule();
        let spread = 0.5;
        let model = GaussianToyModel::new(spread).unwrap();
        let (w, h) = (4u32, 4u32);
        let dim = 16usize;
        let y = random_condition(w, h, 10);
        let reps = 100;
        let n = reps * s.len();

        let root = RandomStream::from_seed(11);
        let cols = 2 * dim + 1;
        let mut gram = DMatrix::<f64>::zeros(cols, cols);
        let mut cross = DMatrix::<f64>::zeros(cols, dim);
        let mut rows: Vec<(DVector<f64>, DVector<f64>)> = Vec::with_capacity(n);
        let mut mse_analytic = 0.0;
        let mut draw_index = 0u64;
        for _ in 0..reps {
            for t in 1..=s.len() {
                let node = root.child_index(draw_index);
                draw_index += 1;
                let x0 = model.draw_x0(&y, &node.child_label("eta"));
                let eps = Sample::standard_normal(w, h, &node.child_label("eps"));
                let x_t = q_sample(&x0, t, &eps, &s).unwrap();
                let predicted = model.predict_noise(&x_t, t, &y, &s).unwrap();
                mse_analytic += predicted
                    .values()
                    .iter()
                    .zip(eps.values())
                    .map(|(p, e)| (p - e) * (p - e))
                    .sum::<f64>();
                let phi = LinearDenoiser::featurize(&x_t, &y);
                let target = DVector::from_column_slice(eps.values());
                gram.ger(1.0, &phi, &phi, 1.0);
                cross.ger(1.0, &phi, &target, 1.0);
                rows.push((phi, target));
            }
        }
        mse_analytic /= n as f64;

        // Formula minimum under uniform t.
        let mse_formula = dim as f64
            * (1..=s.len())
                .map(|t| {
                    let ab = s.alpha_bar(t);
                    ab * spread * spread / (ab * spread * spread + 1.0 - ab)
                })
                .sum::<f64>()
            / s.len() as f64;

        // Best single affine map on the same draws. The fixed condition
        // makes the y-feature columns exact multiples of the bias
        // column, so the gram needs a real (still negligible) ridge.
        for i in 0..cols {
            gram[(i, i)] += 1e-6 * n as f64;
        }
        let chol = Cholesky::new(gram).unwrap();
        let weights = chol.solve(&cross);
        let mut mse_affine = 0.0;
        for (phi, target) in &rows {
            let pred = weights.transpose() * phi;
            mse_affine += (target - pred).norm_squared();
        }
        mse_affine /= n as f64;

        let rel = (mse_analytic - mse_formula).abs() / mse_formula;
        assert!(
            rel <= 0.02,
            "analytic {mse_analytic} vs formula {mse_formula} (rel {rel:.4})"
        );
        assert!(
            mse_analytic <= mse_affine,
            "analytic {mse_analytic} should not exceed fitted affine {mse_affine}"
        );
    }

    fn affine_dataset(n: usize, w: u32, h: u32, seed: u64, a: f64, b: f64) -> Vec<(Sample, Sample)> {
        let root = RandomStream::from_seed(seed);
        (0..n)
            .map(|i| {
                let y = Sample::standard_normal(w, h, &root.child_index(i as u64));
                let x0 = Sample::from_values(
                    w,
                    h,
                    y.values().iter().map(|v| a * v + b).collect(),
                )
                .unwrap();
                (x0, y)
            })
            .collect()
    }

    /// Population-optimal bucketed affine predictor for x0 = a·y + b with
    /// y ~ N(0, I): per bucket, the best scalar map of (x_t, y, 1) to ε
    /// follows from the mixed-over-t Gaussian moments. Serves as the
    /// closed-form ridge oracle the fit is compared against.
    struct PopulationAffine {
        buckets: usize,
        weights: Vec<nalgebra::Vector3<f64>>,
    }

    impl PopulationAffine {
        fn new(s: &DiffusionSchedule, buckets: usize, a: f64, b: f64) -> Self {
            let mut weights = Vec::with_capacity(buckets);
            for bucket in 0..buckets {
                let steps: Vec<usize> = (1..=s.len())
                    .filter(|&t| bucket_of(t, s.len(), buckets) == bucket)
                    .collect();
                let mut m = nalgebra::Matrix3::<f64>::zeros();
                let mut v = nalgebra::Vector3::<f64>::zeros();
                for &t in &steps {
                    let ab = s.alpha_bar(t);
                    let (sq, om) = (ab.sqrt(), 1.0 - ab);
                    // phi = (x_t, y, 1); x_t = sq(a y + b) + sqrt(om) eps
                    let ex = sq * b;
                    let exx = ab * (a * a + b * b) + om;
                    let exy = sq * a;
                    m += nalgebra::Matrix3::new(exx, exy, ex, exy, 1.0, 0.0, ex, 0.0, 1.0);
                    v += nalgebra::Vector3::new(om.sqrt(), 0.0, 0.0);
                }
                let k = steps.len() as f64;
                m /= k;
                v /= k;
                weights.push(m.try_inverse().expect("moment matrix invertible") * v);
            }
            Self { buckets, weights }
        }
    }

    impl Denoiser for PopulationAffine {
        fn predict_noise(
            &self,
            x_t: &Sample,
            t: usize,
            condition: &Sample,
            schedule: &DiffusionSchedule,
        ) -> Result<Sample, DiffusionError> {
            let w = &self.weights[bucket_of(t, schedule.len(), self.buckets)];
            let values = x_t
                .values()
                .iter()
                .zip(condition.values())
                .map(|(x, y)| w[0] * x + w[1] * y + w[2])
                .collect();
            Sample::from_values(x_t.width(), x_t.height(), values)
        }

        fn descriptor(&self) -> String {
            "population-affine".into()
        }
    }

    #[test]
    fn ridge_fit_on_affine_data_reaches_population_optimum() {
        // Paired held-out comparison on identical (t, ε) draws: the
        // content-keyed stream gives the fitted denoiser and the
        // closed-form optimum the same evaluation elements, so the
        // heavy-tailed t-draw noise cancels and only estimation error
        // remains.
        let s = schedule();
        let (w, h) = (4u32, 4u32);
        let (a, b) = (0.6, 0.1);
        let train = affine_dataset(24_000, w, h, 20, a, b);
        let held_out = affine_dataset(4_000, w, h, 21, a, b);
        let fitted = fit_linear_denoiser(&train, &s, 10, 1e-6, &RandomStream::from_seed(22))
            .unwrap();
        let oracle = PopulationAffine::new(&s, 10, a, b);
        let eval_stream = RandomStream::from_seed(23);
        let loss_fitted = training_loss(&fitted, &held_out, &s, &eval_stream).unwrap();
        let loss_oracle = training_loss(&oracle, &held_out, &s, &eval_stream).unwrap();
        let rel = (loss_fitted - loss_oracle).abs() / loss_oracle;
        assert!(
            rel <= 0.05,
            "held-out {loss_fitted} vs affine-class optimum {loss_oracle} (rel {rel:.4})"
        );
    }

    #[test]
    fn infinite_ridge_shrinks_to_zero_predictor() {
        let s = schedule();
        let train = affine_dataset(400, 3, 3, 30, 0.5, 0.0);
        let denoiser =
            fit_linear_denoiser(&train, &s, 4, 1e12, &RandomStream::from_seed(31)).unwrap();
        for wm in &denoiser.weights {
            assert!(wm.amax() < 1e-6, "weights not shrunk: {}", wm.amax());
        }
        let held_out = affine_dataset(800, 3, 3, 32, 0.5, 0.0);
        let loss = training_loss(&denoiser, &held_out, &s, &RandomStream::from_seed(33)).unwrap();
        let d = 9.0f64;
        let se = d * (2.0 / (800.0 * d)).sqrt();
        assert!(
            (loss - d).abs() <= 4.0 * se,
            "fully shrunk loss {loss} vs {d}"
        );
    }

    #[test]
    fn duplication_with_doubled_lambda_is_invariant() {
        let s = schedule();
        let train = affine_dataset(600, 3, 3, 40, 0.4, 0.2);
        let stream = RandomStream::from_seed(41);
        let w1 = fit_linear_denoiser(&train, &s, 5, 2e-3, &stream).unwrap();
        let mut doubled = train.clone();
        doubled.extend(train.iter().cloned());
        let w2 = fit_linear_denoiser(&doubled, &s, 5, 4e-3, &stream).unwrap();
        for (a, b) in w1.weights.iter().zip(&w2.weights) {
            let diff = (a - b).amax();
            let scale = a.amax().max(1e-30);
            assert!(
                diff / scale < 1e-9,
                "weights changed under duplication: {}",
                diff / scale
            );
        }
    }

    #[test]
    fn underdetermined_without_ridge_is_singular() {
        let s = schedule();
        let train = affine_dataset(5, 4, 4, 50, 0.5, 0.0);
        let err = fit_linear_denoiser(&train, &s, 1, 0.0, &RandomStream::from_seed(51));
        assert!(matches!(err, Err(DenoiseError::SingularSystem { .. })));
    }

    #[test]
    fn fitted_never_worse_than_zero_denoiser_on_training_set() {
        struct ZeroDenoiser;
        impl Denoiser for ZeroDenoiser {
            fn predict_noise(
                &self,
                x_t: &Sample,
                _t: usize,
                _c: &Sample,
                _s: &DiffusionSchedule,
            ) -> Result<Sample, DiffusionError> {
                Ok(Sample::zeros(x_t.width(), x_t.height()))
            }
            fn descriptor(&self) -> String {
                "zero".into()
            }
        }
        let s = schedule();
        let train = affine_dataset(900, 3, 3, 60, 0.7, 0.1);
        let stream = RandomStream::from_seed(61);
        let fitted = fit_linear_denoiser(&train, &s, 3, 1e-3, &stream).unwrap();
        let loss_fitted = training_loss(&fitted, &train, &s, &stream).unwrap();
        let loss_zero = training_loss(&ZeroDenoiser, &train, &s, &stream).unwrap();
        assert!(
            loss_fitted <= loss_zero,
            "fitted {loss_fitted} vs zero {loss_zero}"
        );
    }

    #[test]
    fn linear_denoiser_json_round_trip() {
        let s = schedule();
        let train = affine_dataset(300, 3, 3, 70, 0.5, 0.1);
        let denoiser =
            fit_linear_denoiser(&train, &s, 2, 1e-3, &RandomStream::from_seed(71)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("denoiser.json");
        denoiser.save_json(&path).unwrap();
        let loaded = LinearDenoiser::load_json(&path).unwrap();
        assert_eq!(denoiser.buckets, loaded.buckets);
        assert_eq!(denoiser.lambda, loaded.lambda);
        let x = Sample::standard_normal(3, 3, &RandomStream::from_seed(72));
        let y = random_condition(3, 3, 73);
        let a = denoiser.predict_noise(&x, 10, &y, &s).unwrap();
        let b = loaded.predict_noise(&x, 10, &y, &s).unwrap();
        assert_eq!(a, b);
        // Schema spot-check.
        let raw: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["buckets"], 2);
        assert_eq!(raw["resolution"].as_array().unwrap().len(), 2);
        assert!(raw["weights"].as_array().unwrap().len() == 2);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(GaussianToyModel::new(-1.0).is_err());
        let s = schedule();
        let train = affine_dataset(10, 3, 3, 80, 0.5, 0.0);
        assert!(matches!(
            fit_linear_denoiser(&train, &s, 0, 1e-3, &RandomStream::from_seed(81)),
            Err(DenoiseError::NoBuckets)
        ));
        assert!(matches!(
            fit_linear_denoiser(&train, &s, 2, -1.0, &RandomStream::from_seed(82)),
            Err(DenoiseError::InvalidLambda { .. })
        ));
        assert!(matches!(
            fit_linear_denoiser(&[], &s, 2, 1e-3, &RandomStream::from_seed(83)),
            Err(DenoiseError::EmptyDataset)
        ));
    }
}
