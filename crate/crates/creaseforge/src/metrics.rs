//! Dataset evaluation metrics.
//!
//! All pairwise scores are cosine similarities; distances are
//! `d = 1 − cos`. Class centers are spherical means: the L2-normalized
//! arithmetic mean of L2-normalized feature vectors. The four dataset
//! metrics:
//!
//! * score distributions — genuine (within-class) and imposter
//!   (cross-class) cosine similarity over all pairs;
//! * class uniqueness — fraction of class centers admitted by a
//!   sequential scan (ascending class index) that keeps a center only
//!   if its cosine distance to every previously admitted center
//!   strictly exceeds `r`;
//! * identity consistency — mean over classes of the within-class
//!   fraction of samples with cosine distance to their center strictly
//!   below `r`;
//! * intra-class diversity — mean pixel L1 distance of each image to
//!   its class-mean image, optionally normalized by a baseline run.
//!
//! The threshold `r` is always caller-supplied; there is no default.
//! Imposter pairs are enumerated exhaustively below [`IMPOSTER_PAIR_CAP`]
//! and uniformly subsampled (fixed internal seed, recorded in the
//! output) above it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::CreaseImage;
use crate::rng::RandomStream;

/// Above this many imposter pairs, switch to seeded uniform subsampling.
pub const IMPOSTER_PAIR_CAP: usize = 10_000_000;
const SUBSAMPLE_SEED: u64 = 0x1337_5C02;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("embedding set needs at least one class")]
    EmptyEmbeddingSet,
    #[error("class '{class}' is empty")]
    EmptyClass { class: String },
    #[error("feature dimension mismatch in class '{class}': {got} vs {expected}")]
    DimensionMismatch {
        class: String,
        got: usize,
        expected: usize,
    },
    #[error("non-finite feature value in class '{class}'")]
    NonFiniteFeature { class: String },
    #[error("zero-norm feature vector in class '{class}'")]
    ZeroNormVector { class: String },
    #[error("zero-norm class center for class '{class}'")]
    ZeroNormCenter { class: String },
    #[error("no genuine pairs: need one class with >= 2 samples")]
    NoGenuinePairs,
    #[error("no imposter pairs: need >= 2 classes")]
    NoImposterPairs,
    #[error("threshold r={got} outside [0, 2]")]
    InvalidThreshold { got: f64 },
    #[error("far={got} outside (0, 1)")]
    InvalidFar { got: f64 },
    #[error("score set is empty")]
    EmptyScores,
    #[error("image resolution mismatch: {got} vs {expected}")]
    ResolutionMismatch { got: String, expected: String },
    #[error("diversity baseline must be > 0, got {got}")]
    InvalidBaseline { got: f64 },
    #[error("embeddings csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Identity-grouped feature vectors of a common dimension.
#[derive(Clone, Debug)]
pub struct EmbeddingSet {
    dim: usize,
    classes: Vec<EmbeddingClass>,
}

#[derive(Clone, Debug)]
pub struct EmbeddingClass {
    pub label: String,
    pub vectors: Vec<Vec<f64>>,
}

impl EmbeddingSet {
    pub fn new(classes: Vec<EmbeddingClass>) -> Result<Self, MetricsError> {
        let Some(first) = classes.first() else {
            return Err(MetricsError::EmptyEmbeddingSet);
        };
        let Some(first_vec) = first.vectors.first() else {
            return Err(MetricsError::EmptyClass {
                class: first.label.clone(),
            });
        };
        let dim = first_vec.len();
        for class in &classes {
            if class.vectors.is_empty() {
                return Err(MetricsError::EmptyClass {
                    class: class.label.clone(),
                });
            }
            for v in &class.vectors {
                if v.len() != dim {
                    return Err(MetricsError::DimensionMismatch {
                        class: class.label.clone(),
                        got: v.len(),
                        expected: dim,
                    });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(MetricsError::NonFiniteFeature {
                        class: class.label.clone(),
                    });
                }
                if norm(v) == 0.0 {
                    return Err(MetricsError::ZeroNormVector {
                        class: class.label.clone(),
                    });
                }
            }
        }
        Ok(Self { dim, classes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> &[EmbeddingClass] {
        &self.classes
    }

    /// Read `class_id,sample_id,e0,...` CSV (header required).
    pub fn from_csv(path: &Path) -> Result<Self, MetricsError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_path(path)
            .map_err(|e| MetricsError::Csv(e.to_string()))?;
        let mut classes: Vec<EmbeddingClass> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| MetricsError::Csv(e.to_string()))?;
            if record.len() < 3 {
                return Err(MetricsError::Csv(format!(
                    "row with {} fields; need class_id,sample_id,e0,...",
                    record.len()
                )));
            }
            let label = record[0].to_string();
            let vector: Vec<f64> = record
                .iter()
                .skip(2)
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| MetricsError::Csv(format!("bad feature value '{f}'")))
                })
                .collect::<Result<_, _>>()?;
            match classes.iter_mut().find(|c| c.label == label) {
                Some(class) => class.vectors.push(vector),
                None => classes.push(EmbeddingClass {
                    label,
                    vectors: vec![vector],
                }),
            }
        }
        Self::new(classes)
    }

    pub fn to_csv(&self, path: &Path) -> Result<(), MetricsError> {
        let mut writer =
            csv::Writer::from_path(path).map_err(|e| MetricsError::Csv(e.to_string()))?;
        let mut header = vec!["class_id".to_string(), "sample_id".to_string()];
        header.extend((0..self.dim).map(|i| format!("e{i}")));
        writer
            .write_record(&header)
            .map_err(|e| MetricsError::Csv(e.to_string()))?;
        for class in &self.classes {
            for (i, v) in class.vectors.iter().enumerate() {
                let mut row = vec![class.label.clone(), i.to_string()];
                row.extend(v.iter().map(|x| x.to_string()));
                writer
                    .write_record(&row)
                    .map_err(|e| MetricsError::Csv(e.to_string()))?;
            }
        }
        writer.flush().map_err(|e| MetricsError::Csv(e.to_string()))?;
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Plain cosine similarity; the formula every pair score uses.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (norm(a) * norm(b))
}

/// Cosine distance `1 − cos`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    1.0 - cosine_similarity(a, b)
}

/// Spherical mean: normalize each vector, average, normalize the mean.
fn class_center(class: &EmbeddingClass) -> Result<Vec<f64>, MetricsError> {
    let dim = class.vectors[0].len();
    let mut center = vec![0.0; dim];
    for v in &class.vectors {
        let n = norm(v);
        for (c, x) in center.iter_mut().zip(v) {
            *c += x / n;
        }
    }
    let count = class.vectors.len() as f64;
    for c in &mut center {
        *c /= count;
    }
    let n = norm(&center);
    if n < 1e-12 {
        return Err(MetricsError::ZeroNormCenter {
            class: class.label.clone(),
        });
    }
    for c in &mut center {
        *c /= n;
    }
    Ok(center)
}

/// Summary statistics of one score set (population standard deviation).
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScoreStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

fn stats_of(scores: &[f64]) -> ScoreStats {
    let count = scores.len();
    if count == 0 {
        return ScoreStats {
            mean: 0.0,
            std: 0.0,
            count,
        };
    }
    let mean = scores.iter().sum::<f64>() / count as f64;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / count as f64;
    ScoreStats {
        mean,
        std: var.sqrt(),
        count,
    }
}

/// Genuine and imposter cosine-similarity scores.
#[derive(Clone, Debug)]
pub struct ScoreDistribution {
    pub genuine: Vec<f64>,
    pub imposter: Vec<f64>,
    /// True when the imposter set was subsampled to [`IMPOSTER_PAIR_CAP`].
    pub imposter_subsampled: bool,
}

impl ScoreDistribution {
    pub fn genuine_stats(&self) -> ScoreStats {
        stats_of(&self.genuine)
    }

    pub fn imposter_stats(&self) -> ScoreStats {
        stats_of(&self.imposter)
    }
}

/// All within-class pairs (genuine) and cross-class pairs (imposter),
/// enumerated in ascending class/sample index order.
pub fn score_distribution(emb: &EmbeddingSet) -> Result<ScoreDistribution, MetricsError> {
    score_distribution_with_cap(emb, IMPOSTER_PAIR_CAP)
}

pub fn score_distribution_with_cap(
    emb: &EmbeddingSet,
    cap: usize,
) -> Result<ScoreDistribution, MetricsError> {
    let classes = emb.classes();
    let mut genuine = Vec::new();
    for class in classes {
        for i in 0..class.vectors.len() {
            for j in (i + 1)..class.vectors.len() {
                genuine.push(cosine_similarity(&class.vectors[i], &class.vectors[j]));
            }
        }
    }
    if genuine.is_empty() {
        return Err(MetricsError::NoGenuinePairs);
    }
    if classes.len() < 2 {
        return Err(MetricsError::NoImposterPairs);
    }

    let total_imposter: usize = {
        let mut total = 0usize;
        for a in 0..classes.len() {
            for b in (a + 1)..classes.len() {
                total += classes[a].vectors.len() * classes[b].vectors.len();
            }
        }
        total
    };

    let mut imposter;
    let subsampled = total_imposter > cap;
    if !subsampled {
        imposter = Vec::with_capacity(total_imposter);
        for a in 0..classes.len() {
            for b in (a + 1)..classes.len() {
                for va in &classes[a].vectors {
                    for vb in &classes[b].vectors {
                        imposter.push(cosine_similarity(va, vb));
                    }
                }
            }
        }
    } else {
        // Uniform subsample with replacement over the flattened pair
        // index space, mapped back through class-pair prefix sums.
        let mut prefix = Vec::new();
        let mut running = 0usize;
        for a in 0..classes.len() {
            for b in (a + 1)..classes.len() {
                running += classes[a].vectors.len() * classes[b].vectors.len();
                prefix.push((running, a, b));
            }
        }
        use rand::Rng;
        let mut rng = RandomStream::from_seed(SUBSAMPLE_SEED).rng();
        imposter = Vec::with_capacity(cap);
        for _ in 0..cap {
            let idx = rng.random_range(0..total_imposter);
            let slot = prefix.partition_point(|&(end, _, _)| end <= idx);
            let (end, a, b) = prefix[slot];
            let block = classes[a].vectors.len() * classes[b].vectors.len();
            let local = idx - (end - block);
            let ia = local / classes[b].vectors.len();
            let ib = local % classes[b].vectors.len();
            imposter.push(cosine_similarity(
                &classes[a].vectors[ia],
                &classes[b].vectors[ib],
            ));
        }
    }
    Ok(ScoreDistribution {
        genuine,
        imposter,
        imposter_subsampled: subsampled,
    })
}

fn check_threshold(r: f64) -> Result<(), MetricsError> {
    if !(0.0..=2.0).contains(&r) || !r.is_finite() {
        return Err(MetricsError::InvalidThreshold { got: r });
    }
    Ok(())
}

/// Fraction of classes whose centers survive sequential admission:
/// scanning in ascending class index, a center is kept only if its
/// cosine distance to every previously kept center strictly exceeds `r`.
pub fn class_uniqueness(emb: &EmbeddingSet, r: f64) -> Result<f64, MetricsError> {
    check_threshold(r)?;
    let mut admitted: Vec<Vec<f64>> = Vec::new();
    for class in emb.classes() {
        let center = class_center(class)?;
        if admitted
            .iter()
            .all(|kept| cosine_distance(kept, &center) > r)
        {
            admitted.push(center);
        }
    }
    Ok(admitted.len() as f64 / emb.classes().len() as f64)
}

/// Mean over classes of the fraction of samples strictly within cosine
/// distance `r` of their class center.
pub fn identity_consistency(emb: &EmbeddingSet, r: f64) -> Result<f64, MetricsError> {
    check_threshold(r)?;
    let mut total = 0.0;
    for class in emb.classes() {
        let center = class_center(class)?;
        let close = class
            .vectors
            .iter()
            .filter(|v| cosine_distance(v, &center) < r)
            .count();
        total += close as f64 / class.vectors.len() as f64;
    }
    Ok(total / emb.classes().len() as f64)
}

/// Mean pixel L1 distance of each image to its class-mean image,
/// averaged per class then over classes; divided by `baseline` when one
/// is supplied (the published convention normalizes against the K = 0
/// run).
pub fn intra_class_diversity(
    classes: &[Vec<CreaseImage>],
    baseline: Option<f64>,
) -> Result<f64, MetricsError> {
    if classes.is_empty() {
        return Err(MetricsError::EmptyEmbeddingSet);
    }
    if let Some(b) = baseline {
        if !(b.is_finite() && b > 0.0) {
            return Err(MetricsError::InvalidBaseline { got: b });
        }
    }
    let first = classes
        .first()
        .and_then(|c| c.first())
        .ok_or(MetricsError::EmptyEmbeddingSet)?;
    let (w, h) = (first.width(), first.height());
    let pixel_count = w as usize * h as usize;
    let mut total = 0.0;
    for class in classes {
        if class.is_empty() {
            return Err(MetricsError::EmptyEmbeddingSet);
        }
        let mut mean = vec![0.0f64; pixel_count];
        for img in class {
            if img.width() != w || img.height() != h {
                return Err(MetricsError::ResolutionMismatch {
                    got: format!("{}x{}", img.width(), img.height()),
                    expected: format!("{w}x{h}"),
                });
            }
            for (m, &p) in mean.iter_mut().zip(img.pixels()) {
                *m += f64::from(p);
            }
        }
        let n = class.len() as f64;
        for m in &mut mean {
            *m /= n;
        }
        let mut class_sum = 0.0;
        for img in class {
            let l1: f64 = mean
                .iter()
                .zip(img.pixels())
                .map(|(m, &p)| (f64::from(p) - m).abs())
                .sum();
            class_sum += l1;
        }
        total += class_sum / n;
    }
    let raw = total / classes.len() as f64;
    Ok(match baseline {
        Some(b) => raw / b,
        None => raw,
    })
}

/// True-accept rate at the threshold whose false-accept rate does not
/// exceed `far`. The threshold is the smallest representable score with
/// `#{imposter >= threshold} <= far·N`; TAR is the genuine fraction at
/// or above it.
pub fn tar_at_far(scores: &ScoreDistribution, far: f64) -> Result<(f64, f64), MetricsError> {
    if !(far.is_finite() && far > 0.0 && far < 1.0) {
        return Err(MetricsError::InvalidFar { got: far });
    }
    if scores.genuine.is_empty() || scores.imposter.is_empty() {
        return Err(MetricsError::EmptyScores);
    }
    let n_imp = scores.imposter.len();
    if (n_imp as f64) * far < 1.0 {
        log::warn!(
            "only {n_imp} imposter pairs at far={far}; the threshold estimate is coarse (want >= {:.0})",
            1.0 / far
        );
    }
    let allowed = (far * n_imp as f64).floor() as usize;
    let threshold = if allowed >= n_imp {
        f64::NEG_INFINITY
    } else {
        let mut sorted = scores.imposter.clone();
        sorted.sort_by(|a, b| f64::total_cmp(b, a)); // descending
        sorted[allowed].next_up()
    };
    let accepted = scores.genuine.iter().filter(|&&g| g >= threshold).count();
    Ok((accepted as f64 / scores.genuine.len() as f64, threshold))
}

/// One TAR@FAR row of a report.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct TarFarEntry {
    pub far: f64,
    pub tar: f64,
    pub threshold: f64,
}

/// Full metric report written by the evaluation pipeline.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MetricReport {
    pub u_class: f64,
    pub c_identity: f64,
    pub d_intra: f64,
    pub r: f64,
    pub genuine: ScoreStats,
    pub imposter: ScoreStats,
    pub tar_at_far: Vec<TarFarEntry>,
    #[serde(default)]
    pub imposter_subsampled: bool,
}

impl MetricReport {
    pub fn save_json(&self, path: &Path) -> Result<(), MetricsError> {
        let body = serde_json::to_string_pretty(self)
            .map_err(|e| MetricsError::Csv(e.to_string()))?;
        std::fs::write(path, body)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self, MetricsError> {
        let body = std::fs::read_to_string(path)?;
        serde_json::from_str(&body).map_err(|e| MetricsError::Csv(e.to_string()))
    }
}
