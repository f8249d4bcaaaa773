//! Gaussian prior over crease coefficients and endpoints.
//!
//! The fitted corpus is summarized per principal line by a 5-D mean and
//! covariance over the polynomial coefficients plus independent 1-D
//! Gaussians for the two endpoint abscissae. New identities are drawn
//! from `N(μ, γ²Σ)`: γ scales the covariance, so small γ concentrates
//! identities around the corpus mean and large γ spreads them out.
//!
//! Covariances estimated from small labeled corpora can be singular, so
//! sampling factors Σ with a Cholesky that escalates a diagonal jitter
//! from 1e−12 to 1e−8 before giving up.

use std::path::Path;

use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::creasefit::{CoefficientVector, FittedAnnotation, COEFF_COUNT, LINE_COUNT};
use crate::rng::RandomStream;

/// Jitter ladder tried when Σ is not numerically positive definite.
const JITTER_LADDER: [f64; 5] = [0.0, 1e-12, 1e-11, 1e-10, 1e-8];
/// Minimum endpoint separation enforced on sampled spans.
const MIN_SPAN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum CreaseDistError {
    #[error("need at least 2 samples to estimate a distribution, got {got}")]
    InsufficientSamples { got: usize },
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("coefficient and endpoint sample counts differ ({vectors} vs {endpoints})")]
    MismatchedLengths { vectors: usize, endpoints: usize },
    #[error("gamma must be finite and >= 0, got {got}")]
    InvalidGamma { got: f64 },
    #[error("coefficient index {got} outside 0..=4")]
    IndexOutOfRange { got: usize },
    #[error("covariance is not positive semi-definite even after jitter escalation")]
    CholeskyFailure,
    #[error("distribution invariant violated: {0}")]
    InvalidDistribution(String),
    #[error("distribution file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scale factor for the prior covariance; the covariance is scaled by γ².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaFactor(f64);

impl GammaFactor {
    pub fn new(gamma: f64) -> Result<Self, CreaseDistError> {
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(CreaseDistError::InvalidGamma { got: gamma });
        }
        Ok(Self(gamma))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Mean and standard deviation of one endpoint abscissa.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndpointStat {
    pub mean: f64,
    pub std: f64,
}

/// Gaussian summary of one principal line: coefficient mean/covariance
/// plus endpoint statistics. `sigma` is row-major 5×5.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineDistribution {
    pub mu: [f64; COEFF_COUNT],
    pub sigma: [f64; COEFF_COUNT * COEFF_COUNT],
    pub xs: EndpointStat,
    pub xe: EndpointStat,
}

impl LineDistribution {
    pub fn sigma_matrix(&self) -> Matrix5<f64> {
        Matrix5::from_row_slice(&self.sigma)
    }

    pub fn mu_vector(&self) -> Vector5<f64> {
        Vector5::from_row_slice(&self.mu)
    }
}

/// The fitted generative prior: three line distributions plus the corpus
/// size they were estimated from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreaseDistribution {
    pub lines: [LineDistribution; LINE_COUNT],
    pub sample_count: usize,
}

/// One synthetic identity: three coefficient vectors with their spans,
/// all in normalized [0,1] coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolynomialCrease {
    pub lines: [CreaseLine; LINE_COUNT],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CreaseLine {
    pub coefficients: CoefficientVector,
    pub x_start: f64,
    pub x_end: f64,
}

impl CreaseDistribution {
    /// Check the structural invariants: symmetry to 1e−12, eigenvalues
    /// ≥ −1e−10, endpoint std ≥ 0, endpoint means inside [0,1].
    pub fn validate(&self) -> Result<(), CreaseDistError> {
        for (i, line) in self.lines.iter().enumerate() {
            let bad = |msg: String| Err(CreaseDistError::InvalidDistribution(msg));
            if !line.mu.iter().all(|v| v.is_finite())
                || !line.sigma.iter().all(|v| v.is_finite())
            {
                return bad(format!("line {} has non-finite entries", i + 1));
            }
            let m = line.sigma_matrix();
            for r in 0..COEFF_COUNT {
                for c in (r + 1)..COEFF_COUNT {
                    if (m[(r, c)] - m[(c, r)]).abs() > 1e-12 {
                        return bad(format!("line {} covariance not symmetric", i + 1));
                    }
                }
            }
            let eigs = m.symmetric_eigenvalues();
            if eigs.iter().any(|&e| e < -1e-10) {
                return bad(format!("line {} covariance has eigenvalue < -1e-10", i + 1));
            }
            for (name, stat) in [("xs", &line.xs), ("xe", &line.xe)] {
                if !stat.mean.is_finite() || !stat.std.is_finite() || stat.std < 0.0 {
                    return bad(format!("line {} {name} stats invalid", i + 1));
                }
                if !(0.0..=1.0).contains(&stat.mean) {
                    return bad(format!("line {} {name} mean outside [0,1]", i + 1));
                }
            }
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<(), CreaseDistError> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| CreaseDistError::Format(e.to_string()))?;
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, CreaseDistError> {
        let body = std::fs::read_to_string(path)?;
        let dist: Self =
            serde_json::from_str(&body).map_err(|e| CreaseDistError::Format(e.to_string()))?;
        dist.validate()?;
        Ok(dist)
    }

    /// Built-in demonstration prior with three plausible principal lines,
    /// used when no fitted corpus is supplied. The covariance couples
    /// neighboring coefficients with a 0.3^|i−j| correlation profile,
    /// which is positive definite by construction.
    pub fn default_prior() -> Self {
        let scales = [0.035, 0.09, 0.11, 0.09, 0.06];
        let mut sigma = [0.0; 25];
        for r in 0..5 {
            for c in 0..5 {
                sigma[r * 5 + c] = scales[r] * scales[c] * 0.3f64.powi((r as i32 - c as i32).abs());
            }
        }
        let line = |mu: [f64; 5], xs: (f64, f64), xe: (f64, f64)| LineDistribution {
            mu,
            sigma,
            xs: EndpointStat {
                mean: xs.0,
                std: xs.1,
            },
            xe: EndpointStat {
                mean: xe.0,
                std: xe.1,
            },
        };
        Self {
            lines: [
                line(
                    [0.34, -0.28, 0.14, 0.0, 0.0],
                    (0.06, 0.025),
                    (0.93, 0.025),
                ),
                line([0.50, -0.08, 0.16, 0.0, 0.0], (0.05, 0.02), (0.88, 0.03)),
                line([0.58, 0.42, -0.20, 0.0, 0.0], (0.04, 0.02), (0.82, 0.04)),
            ],
            sample_count: 0,
        }
    }
}

/// Estimate one line's Gaussian from coefficient vectors and endpoint
/// spans: sample mean, unbiased (n−1) covariance, and per-endpoint
/// mean/std.
pub fn estimate_gaussian(
    vectors: &[CoefficientVector],
    endpoints: &[(f64, f64)],
) -> Result<LineDistribution, CreaseDistError> {
    let n = vectors.len();
    if n < 2 {
        return Err(CreaseDistError::InsufficientSamples { got: n });
    }
    if endpoints.len() != n {
        return Err(CreaseDistError::MismatchedLengths {
            vectors: n,
            endpoints: endpoints.len(),
        });
    }
    if vectors.iter().any(|v| !v.is_finite())
        || endpoints
            .iter()
            .any(|e| !e.0.is_finite() || !e.1.is_finite())
    {
        return Err(CreaseDistError::NonFiniteInput);
    }

    let nf = n as f64;
    let mut mu = [0.0; COEFF_COUNT];
    for v in vectors {
        for (m, c) in mu.iter_mut().zip(v.0) {
            *m += c;
        }
    }
    for m in &mut mu {
        *m /= nf;
    }

    let mut sigma = [0.0; COEFF_COUNT * COEFF_COUNT];
    for v in vectors {
        let d: Vec<f64> = v.0.iter().zip(mu).map(|(c, m)| c - m).collect();
        for r in 0..COEFF_COUNT {
            for c in 0..COEFF_COUNT {
                sigma[r * COEFF_COUNT + c] += d[r] * d[c];
            }
        }
    }
    for s in &mut sigma {
        *s /= nf - 1.0;
    }

    let stat_of = |values: Vec<f64>| {
        let mean = values.iter().sum::<f64>() / nf;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
        EndpointStat {
            mean,
            std: var.sqrt(),
        }
    };
    let xs = stat_of(endpoints.iter().map(|e| e.0).collect());
    let xe = stat_of(endpoints.iter().map(|e| e.1).collect());

    Ok(LineDistribution { mu, sigma, xs, xe })
}

/// Estimate the full three-line prior from a fitted corpus.
pub fn estimate_distribution(
    fits: &[FittedAnnotation],
) -> Result<CreaseDistribution, CreaseDistError> {
    let estimate_line = |i: usize| {
        let vectors: Vec<CoefficientVector> =
            fits.iter().map(|f| f.lines[i].coefficients).collect();
        let endpoints: Vec<(f64, f64)> = fits
            .iter()
            .map(|f| (f.lines[i].x_start, f.lines[i].x_end))
            .collect();
        estimate_gaussian(&vectors, &endpoints)
    };
    Ok(CreaseDistribution {
        lines: [estimate_line(0)?, estimate_line(1)?, estimate_line(2)?],
        sample_count: fits.len(),
    })
}

fn cholesky_with_jitter(sigma: &Matrix5<f64>) -> Result<Matrix5<f64>, CreaseDistError> {
    for jitter in JITTER_LADDER {
        let attempt = sigma + Matrix5::identity() * jitter;
        if let Some(chol) = nalgebra::Cholesky::new(attempt) {
            return Ok(chol.l());
        }
    }
    Err(CreaseDistError::CholeskyFailure)
}

fn sample_endpoint(stat: &EndpointStat, z: f64, gamma: f64) -> f64 {
    (stat.mean + gamma * stat.std * z).clamp(0.0, 1.0)
}

/// Draw one identity from `N(μ, γ²Σ)` per line; endpoints are drawn from
/// their own Gaussians (also γ-scaled), clamped to [0,1] and ordered.
/// At γ=0 the draw collapses to the prior means exactly.
pub fn sample_coefficients(
    dist: &CreaseDistribution,
    gamma: GammaFactor,
    stream: &RandomStream,
) -> Result<PolynomialCrease, CreaseDistError> {
    let g = gamma.value();
    let mut rng = stream.rng();
    let mut lines = Vec::with_capacity(LINE_COUNT);
    for line in &dist.lines {
        let l = cholesky_with_jitter(&line.sigma_matrix())?;
        let z = Vector5::from_fn(|_, _| {
            use rand_distr::Distribution;
            rand_distr::StandardNormal.sample(&mut rng)
        });
        let offset = l * z;
        let mut coeffs = [0.0; COEFF_COUNT];
        for (c, (m, o)) in coeffs.iter_mut().zip(line.mu.iter().zip(offset.iter())) {
            // g == 0 must return μ bit-exactly, so skip the scaled term.
            *c = if g == 0.0 { *m } else { m + g * o };
        }
        let zs: f64 = {
            use rand_distr::Distribution;
            rand_distr::StandardNormal.sample(&mut rng)
        };
        let ze: f64 = {
            use rand_distr::Distribution;
            rand_distr::StandardNormal.sample(&mut rng)
        };
        let mut x_start = sample_endpoint(&line.xs, zs, g);
        let mut x_end = sample_endpoint(&line.xe, ze, g);
        if x_start > x_end {
            std::mem::swap(&mut x_start, &mut x_end);
        }
        if x_end - x_start < MIN_SPAN {
            let mid = 0.5 * (x_start + x_end);
            x_start = mid - 0.5 * MIN_SPAN;
            x_end = mid + 0.5 * MIN_SPAN;
            if x_start < 0.0 {
                x_end -= x_start;
                x_start = 0.0;
            } else if x_end > 1.0 {
                x_start -= x_end - 1.0;
                x_end = 1.0;
            }
        }
        lines.push(CreaseLine {
            coefficients: CoefficientVector(coeffs),
            x_start,
            x_end,
        });
    }
    Ok(PolynomialCrease {
        lines: lines.try_into().expect("three lines sampled"),
    })
}

/// One row of a quantile-quantile table.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct QQRow {
    pub theoretical: f64,
    pub empirical: f64,
}

/// Paired (theoretical Gaussian quantile, empirical quantile) rows for a
/// single coefficient, for external normality plotting. Theoretical
/// quantiles use the sample mean/std and plotting positions
/// `(i + 0.5)/n`.
pub fn export_qq(
    vectors: &[CoefficientVector],
    coefficient_index: usize,
) -> Result<Vec<QQRow>, CreaseDistError> {
    if coefficient_index >= COEFF_COUNT {
        return Err(CreaseDistError::IndexOutOfRange {
            got: coefficient_index,
        });
    }
    let n = vectors.len();
    if n < 10 {
        return Err(CreaseDistError::InsufficientSamples { got: n });
    }
    let mut values: Vec<f64> = vectors.iter().map(|v| v.0[coefficient_index]).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CreaseDistError::NonFiniteInput);
    }
    values.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt();
    let unit = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(values
        .iter()
        .enumerate()
        .map(|(i, &empirical)| {
            let p = (i as f64 + 0.5) / nf;
            QQRow {
                theoretical: mean + std * unit.inverse_cdf(p),
                empirical,
            }
        })
        .collect())
}

/// Write a QQ table as CSV with header `theoretical,empirical`.
pub fn write_qq_csv(rows: &[QQRow], path: &Path) -> Result<(), CreaseDistError> {
    let mut writer =
        csv::Writer::from_path(path).map_err(|e| CreaseDistError::Format(e.to_string()))?;
    writer
        .write_record(["theoretical", "empirical"])
        .map_err(|e| CreaseDistError::Format(e.to_string()))?;
    for row in rows {
        writer
            .write_record([row.theoretical.to_string(), row.empirical.to_string()])
            .map_err(|e| CreaseDistError::Format(e.to_string()))?;
    }
    writer
        .flush()
        .map_err(|e| CreaseDistError::Format(e.to_string()))?;
    Ok(())
}
