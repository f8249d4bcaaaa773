//! End-to-end dataset runs.
//!
//! A pipeline run synthesizes identity crease images from the prior,
//! samples M palmprint-stand-in images per identity through the
//! noise-sharing sampler, evaluates the dataset with the metric suite,
//! and records everything in a manifest. Outputs land in one directory:
//!
//! ```text
//! out/
//!   creases/id00000.pgm    condition images, one per identity
//!   id00000_s000.pgm       samples, flat naming
//!   report.json            metric report
//!   manifest.json          config snapshot + per-identity records,
//!                          written last (crash safety)
//! ```
//!
//! Every output byte is a pure function of the config (seed included):
//! identity work fans out over a rayon pool capped by
//! `CREASEFORGE_THREADS`, all randomness is path-derived, and results
//! are collected in identity order. Files are written atomically (temp
//! file + rename); the manifest's content digest covers all image bytes
//! but not its own timestamp.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::creasedist::{CreaseDistError, CreaseDistribution, GammaFactor, PolynomialCrease};
use crate::creasefit::{COEFF_COUNT, LINE_COUNT};
use crate::denoise::{fit_linear_denoiser, DenoiseError, GaussianToyModel, LinearDenoiser};
use crate::diffusion::{Denoiser, DiffusionError, DiffusionSchedule, Sample};
use crate::metrics::{
    class_uniqueness, identity_consistency, intra_class_diversity, score_distribution,
    tar_at_far, EmbeddingClass, EmbeddingSet, MetricReport, MetricsError, TarFarEntry,
};
use crate::raster::{
    synthesize_bezier_identity, synthesize_identity, BezierBands, CreaseImage, RasterError,
    RenderParams, WrinkleConfig,
};
use crate::rng::RandomStream;
use crate::sampler::{
    noise_sharing_sample, IdentityBatch, NoiseSharingPlan, SamplerError, WindowMode,
};

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "CREASEFORGE_THREADS";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Distribution(#[from] CreaseDistError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Denoise(#[from] DenoiseError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which curve family synthesizes identity creases.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Poly,
    Bezier,
}

impl std::str::FromStr for CurveKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "poly" => Ok(Self::Poly),
            "bezier" => Ok(Self::Bezier),
            other => Err(format!("unknown curve '{other}' (poly|bezier)")),
        }
    }
}

/// Which denoiser drives sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DenoiserKind {
    /// Closed-form toy-model posterior.
    Analytic,
    /// Ridge-fitted linear denoiser trained on toy data drawn from the
    /// run's own condition images.
    Linear,
}

impl std::str::FromStr for DenoiserKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "linear" => Ok(Self::Linear),
            other => Err(format!("unknown denoiser '{other}' (analytic|linear)")),
        }
    }
}

fn default_seed() -> u64 {
    42
}
fn default_ids() -> usize {
    50
}
fn default_per_id() -> usize {
    10
}
fn default_extent() -> u32 {
    32
}
fn default_t() -> usize {
    100
}
fn default_beta_start() -> f64 {
    1e-4
}
// Desk default: T=100 with beta_end 0.2 keeps the total noising of the
// production schedule (T=1000, beta_end 0.02), so chains still start
// from nearly pure noise.
fn default_beta_end() -> f64 {
    0.2
}
fn default_k() -> usize {
    50
}
fn default_mode() -> WindowMode {
    WindowMode::Last
}
fn default_gamma() -> f64 {
    1.0
}
fn default_thickness() -> u32 {
    2
}
fn default_curve() -> CurveKind {
    CurveKind::Poly
}
fn default_denoiser() -> DenoiserKind {
    DenoiserKind::Analytic
}
fn default_spread() -> f64 {
    0.5
}
fn default_buckets() -> usize {
    crate::denoise::DEFAULT_BUCKETS
}
fn default_lambda() -> f64 {
    crate::denoise::DEFAULT_LAMBDA
}
fn default_train_per_id() -> usize {
    8
}
fn default_far() -> Vec<f64> {
    vec![0.01]
}

/// Full run configuration. TOML keys are flat and mirror the CLI flags;
/// `r` and `out_dir` have no defaults and must be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_ids")]
    pub ids: usize,
    #[serde(default = "default_per_id")]
    pub per_id: usize,
    #[serde(default = "default_extent")]
    pub width: u32,
    #[serde(default = "default_extent")]
    pub height: u32,
    #[serde(rename = "t", default = "default_t")]
    pub t_steps: usize,
    #[serde(default = "default_beta_start")]
    pub beta_start: f64,
    #[serde(default = "default_beta_end")]
    pub beta_end: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_mode")]
    pub mode: WindowMode,
    #[serde(default)]
    pub share_initial: bool,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_thickness")]
    pub thickness: u32,
    #[serde(default = "wr_count_min")]
    pub wrinkle_count_min: u32,
    #[serde(default = "wr_count_max")]
    pub wrinkle_count_max: u32,
    #[serde(default = "wr_len_min")]
    pub wrinkle_length_min: f64,
    #[serde(default = "wr_len_max")]
    pub wrinkle_length_max: f64,
    #[serde(default = "wr_intensity")]
    pub wrinkle_intensity: u8,
    #[serde(default = "default_curve")]
    pub curve: CurveKind,
    #[serde(default = "default_denoiser")]
    pub denoiser: DenoiserKind,
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default = "default_buckets")]
    pub buckets: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_train_per_id")]
    pub train_per_id: usize,
    /// Cosine-distance threshold for the identity metrics. Required.
    pub r: f64,
    #[serde(default = "default_far")]
    pub far: Vec<f64>,
    #[serde(default)]
    pub d_intra_baseline: Option<f64>,
    /// Output directory. Required.
    pub out_dir: PathBuf,
    /// Fitted prior file; the built-in demonstration prior when absent.
    #[serde(default)]
    pub dist: Option<PathBuf>,
}

fn wr_count_min() -> u32 {
    WrinkleConfig::default().count_min
}
fn wr_count_max() -> u32 {
    WrinkleConfig::default().count_max
}
fn wr_len_min() -> f64 {
    WrinkleConfig::default().length_min
}
fn wr_len_max() -> f64 {
    WrinkleConfig::default().length_max
}
fn wr_intensity() -> u8 {
    WrinkleConfig::default().intensity
}

impl RunConfig {
    /// Minimal config with desk defaults for everything except the
    /// required fields.
    pub fn desk_defaults(out_dir: PathBuf, r: f64) -> Self {
        Self {
            seed: default_seed(),
            ids: default_ids(),
            per_id: default_per_id(),
            width: default_extent(),
            height: default_extent(),
            t_steps: default_t(),
            beta_start: default_beta_start(),
            beta_end: default_beta_end(),
            k: default_k(),
            mode: default_mode(),
            share_initial: false,
            gamma: default_gamma(),
            thickness: default_thickness(),
            wrinkle_count_min: wr_count_min(),
            wrinkle_count_max: wr_count_max(),
            wrinkle_length_min: wr_len_min(),
            wrinkle_length_max: wr_len_max(),
            wrinkle_intensity: wr_intensity(),
            curve: default_curve(),
            denoiser: default_denoiser(),
            spread: default_spread(),
            buckets: default_buckets(),
            lambda: default_lambda(),
            train_per_id: default_train_per_id(),
            r,
            far: default_far(),
            d_intra_baseline: None,
            out_dir,
            dist: None,
        }
    }

    pub fn from_toml(path: &Path) -> Result<Self, PipelineError> {
        let body = std::fs::read_to_string(path)?;
        let config: Self =
            toml::from_str(&body).map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |msg: String| Err(PipelineError::Config(msg));
        if self.ids == 0 || self.per_id == 0 {
            return fail("ids and per_id must be >= 1".into());
        }
        if self.width < 8 || self.height < 8 {
            return fail(format!(
                "resolution {}x{} below the 8x8 minimum",
                self.width, self.height
            ));
        }
        if self.k > self.t_steps {
            return fail(format!("K={} exceeds T={}", self.k, self.t_steps));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return fail(format!("gamma {} must be finite and >= 0", self.gamma));
        }
        if !(self.spread.is_finite() && self.spread >= 0.0) {
            return fail(format!("spread {} must be finite and >= 0", self.spread));
        }
        if self.thickness == 0 {
            return fail("thickness must be >= 1".into());
        }
        if !(0.0..=2.0).contains(&self.r) {
            return fail(format!("r={} outside [0, 2]", self.r));
        }
        for far in &self.far {
            if !(far.is_finite() && *far > 0.0 && *far < 1.0) {
                return fail(format!("far={far} outside (0, 1)"));
            }
        }
        if let Some(b) = self.d_intra_baseline {
            if !(b.is_finite() && b > 0.0) {
                return fail(format!("d_intra_baseline={b} must be > 0"));
            }
        }
        if self.buckets == 0 {
            return fail("buckets must be >= 1".into());
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return fail(format!("lambda {} must be finite and >= 0", self.lambda));
        }
        if self.denoiser == DenoiserKind::Linear && self.train_per_id == 0 {
            return fail("train_per_id must be >= 1 for the linear denoiser".into());
        }
        self.wrinkle_config()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        // Schedule construction validates the beta range.
        DiffusionSchedule::linear(self.t_steps, self.beta_start, self.beta_end)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        Ok(())
    }

    fn wrinkle_config(&self) -> WrinkleConfig {
        WrinkleConfig {
            count_min: self.wrinkle_count_min,
            count_max: self.wrinkle_count_max,
            length_min: self.wrinkle_length_min,
            length_max: self.wrinkle_length_max,
            intensity: self.wrinkle_intensity,
        }
    }

    fn render_params(&self) -> RenderParams {
        RenderParams::new(self.width, self.height, self.thickness, self.wrinkle_config())
    }
}

/// Per-identity record in the manifest.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IdentityRecord {
    pub id: u64,
    pub seed_path: String,
    pub gamma: f64,
    /// Present for polynomial creases; Bézier identities carry none.
    pub coefficients: Option<[[f64; COEFF_COUNT]; LINE_COUNT]>,
    pub endpoints: Option<[[f64; 2]; LINE_COUNT]>,
    pub condition_file: String,
    pub sample_files: Vec<String>,
}

/// Run manifest: config snapshot, per-identity records, tool version,
/// and a content digest over all image bytes. The timestamp is excluded
/// from the digest.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub config: RunConfig,
    pub identities: Vec<IdentityRecord>,
    pub tool_version: String,
    pub digest: String,
    pub generated_at: String,
}

/// What a finished run hands back to callers.
#[derive(Debug)]
pub struct PipelineOutcome {
    pub out_dir: PathBuf,
    pub digest: String,
    pub report: MetricReport,
    pub manifest_path: PathBuf,
}

/// Write via temp file + rename so readers never observe partial files.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
    }
    std::fs::rename(&tmp, path)
}

/// Fixed-dimension image descriptor: L2-normalized concatenation of 4x4
/// block-mean intensities and horizontal/vertical gradient-magnitude
/// block means (48 values). Deterministic; stands in for a recognition
/// embedder so the metric suite runs self-contained.
pub fn toy_embed(image: &CreaseImage) -> Vec<f64> {
    const GRID: usize = 4;
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut sums = vec![0.0f64; 3 * GRID * GRID];
    let mut counts = vec![0usize; GRID * GRID];
    let at = |x: usize, y: usize| f64::from(image.pixels()[y * w + x]);
    for y in 0..h {
        let by = y * GRID / h;
        for x in 0..w {
            let bx = x * GRID / w;
            let block = by * GRID + bx;
            counts[block] += 1;
            sums[block] += at(x, y);
            let gx = if x + 1 < w { at(x + 1, y) - at(x, y) } else { 0.0 };
            let gy = if y + 1 < h { at(x, y + 1) - at(x, y) } else { 0.0 };
            sums[GRID * GRID + block] += gx.abs();
            sums[2 * GRID * GRID + block] += gy.abs();
        }
    }
    let mut feature: Vec<f64> = (0..3 * GRID * GRID)
        .map(|i| sums[i] / counts[i % (GRID * GRID)] as f64)
        .collect();
    let norm = feature.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        feature[0] = 1.0; // degenerate all-flat image
    } else {
        for v in &mut feature {
            *v /= norm;
        }
    }
    feature
}

fn identity_file_name(id: u64) -> String {
    format!("id{id:05}")
}

/// Sample file name for identity `i`, sample `j`: `id{i:05}_s{j:03}.pgm`.
pub fn sample_file_name(id: u64, sample: usize) -> String {
    format!("id{id:05}_s{sample:03}.pgm")
}

/// Parse `id{i:05}_s{j:03}.pgm` back into (identity, sample).
pub fn parse_sample_file_name(name: &str) -> Option<(u64, usize)> {
    let rest = name.strip_prefix("id")?.strip_suffix(".pgm")?;
    let (id_part, sample_part) = rest.split_once("_s")?;
    Some((id_part.parse().ok()?, sample_part.parse().ok()?))
}

/// Load sample images from a run directory grouped by identity, ordered
/// by (identity, sample index).
pub fn load_image_classes(dir: &Path) -> Result<Vec<(u64, Vec<CreaseImage>)>, PipelineError> {
    let mut found: Vec<(u64, usize, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if let Some(name) = entry.file_name().to_str() {
            if let Some((id, sample)) = parse_sample_file_name(name) {
                found.push((id, sample, entry.path()));
            }
        }
    }
    if found.is_empty() {
        return Err(PipelineError::Config(format!(
            "no id*_s*.pgm sample images found in {}",
            dir.display()
        )));
    }
    found.sort();
    let mut classes: Vec<(u64, Vec<CreaseImage>)> = Vec::new();
    for (id, _, path) in found {
        let image = CreaseImage::load_pgm(&path)?;
        match classes.last_mut() {
            Some((last_id, images)) if *last_id == id => images.push(image),
            _ => classes.push((id, vec![image])),
        }
    }
    Ok(classes)
}

/// Worker pool honoring `CREASEFORGE_THREADS`.
fn thread_pool() -> Result<rayon::ThreadPool, PipelineError> {
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))
}

struct SynthesizedIdentity {
    id: u64,
    crease: Option<PolynomialCrease>,
    image: CreaseImage,
}

/// Build the dataset metrics for already-grouped sample images.
pub fn evaluate_dataset(
    classes: &[(u64, Vec<CreaseImage>)],
    r: f64,
    fars: &[f64],
    d_intra_baseline: Option<f64>,
) -> Result<MetricReport, PipelineError> {
    let embedding = EmbeddingSet::new(
        classes
            .iter()
            .map(|(id, images)| EmbeddingClass {
                label: identity_file_name(*id),
                vectors: images.iter().map(toy_embed).collect(),
            })
            .collect(),
    )?;
    let scores = score_distribution(&embedding)?;
    let u_class = class_uniqueness(&embedding, r)?;
    let c_identity = identity_consistency(&embedding, r)?;
    let image_groups: Vec<Vec<CreaseImage>> =
        classes.iter().map(|(_, images)| images.clone()).collect();
    let d_intra = intra_class_diversity(&image_groups, d_intra_baseline)?;
    let mut tar_rows = Vec::with_capacity(fars.len());
    for &far in fars {
        let (tar, threshold) = tar_at_far(&scores, far)?;
        tar_rows.push(TarFarEntry {
            far,
            tar,
            threshold,
        });
    }
    Ok(MetricReport {
        u_class,
        c_identity,
        d_intra,
        r,
        genuine: scores.genuine_stats(),
        imposter: scores.imposter_stats(),
        tar_at_far: tar_rows,
        imposter_subsampled: scores.imposter_subsampled,
    })
}

/// Run the whole pipeline: synthesize conditions, sample, evaluate,
/// digest, and write the manifest last.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutcome, PipelineError> {
    config.validate()?;
    let dist = match &config.dist {
        Some(path) => CreaseDistribution::load_json(path)?,
        None => CreaseDistribution::default_prior(),
    };
    let schedule = DiffusionSchedule::linear(config.t_steps, config.beta_start, config.beta_end)?;
    let plan = {
        let base = NoiseSharingPlan::new(config.k, config.mode, config.t_steps)?;
        if config.share_initial {
            base.with_shared_initial()
        } else {
            base
        }
    };
    let gamma = GammaFactor::new(config.gamma)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let params = config.render_params();
    let root = RandomStream::from_seed(config.seed);
    let pool = thread_pool()?;

    let out_dir = &config.out_dir;
    let crease_dir = out_dir.join("creases");
    std::fs::create_dir_all(&crease_dir)?;

    // Stage 1: identity conditions.
    let identities: Vec<SynthesizedIdentity> = pool.install(|| {
        (0..config.ids as u64)
            .into_par_iter()
            .map(|id| -> Result<SynthesizedIdentity, PipelineError> {
                let node = root.child_index(id).child_label("crease");
                let (crease, image) = match config.curve {
                    CurveKind::Poly => {
                        let (crease, image) = synthesize_identity(&dist, gamma, &params, &node)?;
                        (Some(crease), image)
                    }
                    CurveKind::Bezier => {
                        let image =
                            synthesize_bezier_identity(&BezierBands::default(), &params, &node)?;
                        (None, image)
                    }
                };
                Ok(SynthesizedIdentity { id, crease, image })
            })
            .collect::<Result<Vec<_>, PipelineError>>()
    })?;

    for identity in &identities {
        let path = crease_dir.join(format!("{}.pgm", identity_file_name(identity.id)));
        write_atomic(&path, &identity.image.encode_pgm())?;
    }

    // Stage 2: denoiser.
    let toy = GaussianToyModel::new(config.spread)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let fitted: Option<LinearDenoiser> = match config.denoiser {
        DenoiserKind::Analytic => None,
        DenoiserKind::Linear => {
            let train_root = root.child_label("train");
            let mut dataset = Vec::with_capacity(config.ids * config.train_per_id);
            for identity in &identities {
                let condition = Sample::from_image(&identity.image);
                let node = train_root.child_index(identity.id);
                for draw in 0..config.train_per_id as u64 {
                    let x0 = toy.draw_x0(&condition, &node.child_index(draw));
                    dataset.push((x0, condition.clone()));
                }
            }
            Some(fit_linear_denoiser(
                &dataset,
                &schedule,
                config.buckets,
                config.lambda,
                &root.child_label("fit"),
            )?)
        }
    };
    let denoiser: &dyn Denoiser = match &fitted {
        Some(linear) => linear,
        None => &toy,
    };

    // Stage 3: sampling.
    let sampled: Vec<(u64, Vec<CreaseImage>)> = pool.install(|| {
        identities
            .par_iter()
            .map(|identity| -> Result<(u64, Vec<CreaseImage>), PipelineError> {
                let batch = IdentityBatch {
                    identity_id: identity.id,
                    condition: Sample::from_image(&identity.image),
                    sample_count: config.per_id,
                };
                let samples = noise_sharing_sample(denoiser, &schedule, &batch, &plan, &root)?;
                Ok((
                    identity.id,
                    samples.iter().map(Sample::to_image).collect(),
                ))
            })
            .collect::<Result<Vec<_>, PipelineError>>()
    })?;

    for (id, images) in &sampled {
        for (j, image) in images.iter().enumerate() {
            write_atomic(&out_dir.join(sample_file_name(*id, j)), &image.encode_pgm())?;
        }
    }

    // Stage 4: metrics.
    let report = evaluate_dataset(&sampled, config.r, &config.far, config.d_intra_baseline)?;
    report
        .save_json(&out_dir.join("report.json"))
        .map_err(PipelineError::Metrics)?;

    // Stage 5: digest over all image bytes, in sorted file order.
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    for identity in &identities {
        let name = format!("creases/{}.pgm", identity_file_name(identity.id));
        files.push((name, identity.image.encode_pgm()));
    }
    for (id, images) in &sampled {
        for (j, image) in images.iter().enumerate() {
            files.push((sample_file_name(*id, j), image.encode_pgm()));
        }
    }
    files.sort_by(|a, b| a.0.cmp(&b.0));
    let mut hasher = Sha256::new();
    for (name, bytes) in &files {
        hasher.update(name.as_bytes());
        hasher.update(bytes);
    }
    let digest: String = hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();

    // Stage 6: manifest, written last so a crash never leaves a manifest
    // pointing at missing files.
    let manifest = DatasetManifest {
        config: config.clone(),
        identities: identities
            .iter()
            .map(|identity| {
                let samples = sampled
                    .iter()
                    .find(|(id, _)| *id == identity.id)
                    .map(|(_, images)| images.len())
                    .unwrap_or(0);
                IdentityRecord {
                    id: identity.id,
                    seed_path: format!("seed:{}/id:{}", config.seed, identity.id),
                    gamma: config.gamma,
                    coefficients: identity
                        .crease
                        .as_ref()
                        .map(|c| [0, 1, 2].map(|i| c.lines[i].coefficients.0)),
                    endpoints: identity
                        .crease
                        .as_ref()
                        .map(|c| [0, 1, 2].map(|i| [c.lines[i].x_start, c.lines[i].x_end])),
                    condition_file: format!("creases/{}.pgm", identity_file_name(identity.id)),
                    sample_files: (0..samples)
                        .map(|j| sample_file_name(identity.id, j))
                        .collect(),
                }
            })
            .collect(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        digest: digest.clone(),
        generated_at: chrono::Utc::now().to_rfc3339(),
    };
    let manifest_path = out_dir.join("manifest.json");
    let body = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    write_atomic(&manifest_path, &body)?;

    Ok(PipelineOutcome {
        out_dir: out_dir.clone(),
        digest,
        report,
        manifest_path,
    })
}

/// Check that every file a manifest references exists on disk.
pub fn verify_manifest_files(manifest_path: &Path) -> Result<(), PipelineError> {
    let body = std::fs::read_to_string(manifest_path)?;
    let manifest: DatasetManifest =
        serde_json::from_str(&body).map_err(|e| PipelineError::Config(e.to_string()))?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    for record in &manifest.identities {
        let mut paths = vec![record.condition_file.clone()];
        paths.extend(record.sample_files.iter().cloned());
        for rel in paths {
            let path = base.join(&rel);
            if !path.exists() {
                return Err(PipelineError::Config(format!(
                    "manifest references missing file {rel}"
                )));
            }
        }
    }
    Ok(())
}
