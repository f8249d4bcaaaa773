//! Batch CLI for crease fitting, identity synthesis, diffusion
//! sampling, and dataset evaluation.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use creaseforge::creasedist::{
    estimate_distribution, export_qq, sample_coefficients, write_qq_csv, CreaseDistribution,
    GammaFactor,
};
use creaseforge::creasefit::{fit_annotations, read_annotations};
use creaseforge::denoise::{fit_linear_denoiser, GaussianToyModel, LinearDenoiser};
use creaseforge::diffusion::{Denoiser, DiffusionSchedule, Sample};
use creaseforge::metrics::{score_distribution, tar_at_far, EmbeddingClass, EmbeddingSet};
use creaseforge::pipeline::{
    evaluate_dataset, load_image_classes, run_pipeline, sample_file_name,
    toy_embed, write_atomic, CurveKind, DenoiserKind, PipelineError, RunConfig,
};
use creaseforge::raster::{
    render_crease, synthesize_bezier_identity, BezierBands, CreaseImage, RenderParams,
    WrinkleConfig,
};
use creaseforge::rng::RandomStream;
use creaseforge::sampler::{
    noise_sharing_sample, IdentityBatch, NoiseSharingPlan, SamplerRunManifest, WindowMode,
};

#[derive(Parser)]
#[command(
    name = "creaseforge",
    version,
    about = "Synthetic palm-crease dataset generation and evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit polynomial creases to an annotation corpus and estimate the
    /// Gaussian prior.
    FitCreases(FitCreasesArgs),
    /// Export a quantile-quantile table for one fitted coefficient.
    QqExport(QqExportArgs),
    /// Sample identities from a prior and render crease images.
    SynthCreases(SynthCreasesArgs),
    /// Fit the linear denoiser on toy data drawn from crease images.
    TrainDenoiser(TrainDenoiserArgs),
    /// Sample palmprint stand-ins for each crease image.
    Sample(SampleArgs),
    /// Genuine/imposter score distributions from embeddings.
    ScoreDist(ScoreDistArgs),
    /// Full metric report (uniqueness, consistency, diversity, TAR@FAR).
    Metrics(MetricsArgs),
    /// TAR at the given FAR targets.
    TarFar(TarFarArgs),
    /// End-to-end run: synthesize, sample, evaluate, manifest.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct FitCreasesArgs {
    /// Annotation corpus (JSON-Lines, pixel coordinates).
    #[arg(long)]
    input: PathBuf,
    /// Output distribution JSON.
    #[arg(long)]
    output: PathBuf,
    /// Optional per-annotation fitted coefficients (JSON-Lines).
    #[arg(long)]
    coefficients_out: Option<PathBuf>,
}

#[derive(Args)]
struct QqExportArgs {
    /// Annotation corpus (JSON-Lines).
    #[arg(long)]
    input: PathBuf,
    /// Principal line index (1..=3).
    #[arg(long)]
    line: u8,
    /// Coefficient index (0..=4).
    #[arg(long)]
    coeff: usize,
    /// Output CSV (header: theoretical,empirical).
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthCreasesArgs {
    /// Number of identities.
    #[arg(long)]
    ids: usize,
    /// Covariance scale factor.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Fitted prior JSON; built-in demonstration prior when omitted.
    #[arg(long)]
    dist: Option<PathBuf>,
    /// Curve family.
    #[arg(long, default_value = "poly")]
    curve: CurveKind,
    #[arg(long, default_value_t = 128)]
    width: u32,
    #[arg(long, default_value_t = 128)]
    height: u32,
    #[arg(long, default_value_t = 2)]
    thickness: u32,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Disable wrinkles.
    #[arg(long)]
    no_wrinkles: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also write PNG copies.
    #[arg(long)]
    png: bool,
}

#[derive(Args)]
struct TrainDenoiserArgs {
    /// Directory of crease images (id*.pgm).
    #[arg(long)]
    creases: PathBuf,
    /// Output denoiser JSON.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    t: usize,
    #[arg(long, default_value_t = 1e-4)]
    beta_start: f64,
    #[arg(long, default_value_t = 0.2)]
    beta_end: f64,
    #[arg(long, default_value_t = 10)]
    buckets: usize,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    /// Toy-model spread used to draw training data.
    #[arg(long, default_value_t = 0.5)]
    spread: f64,
    /// Training draws per crease image.
    #[arg(long, default_value_t = 8)]
    per_image: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SampleArgs {
    /// Directory of condition crease images (id*.pgm).
    #[arg(long)]
    creases: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Noise-sharing window size.
    #[arg(long, default_value_t = 50)]
    k: usize,
    /// Window placement: first or last.
    #[arg(long, default_value = "last")]
    mode: WindowMode,
    #[arg(long, default_value_t = 100)]
    t: usize,
    #[arg(long, default_value_t = 1e-4)]
    beta_start: f64,
    #[arg(long, default_value_t = 0.2)]
    beta_end: f64,
    /// Samples per identity.
    #[arg(long, default_value_t = 10)]
    per_id: usize,
    /// Denoiser JSON from train-denoiser, or the analytic toy denoiser
    /// when omitted.
    #[arg(long)]
    denoiser: Option<PathBuf>,
    /// Spread of the analytic denoiser.
    #[arg(long, default_value_t = 0.5)]
    spread: f64,
    /// Share the initial noise x_T inside the identity as well.
    #[arg(long)]
    share_initial: bool,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct ScoreDistArgs {
    /// Embeddings CSV (class_id,sample_id,e0,...).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Or compute toy embeddings from a sample-image directory.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Output JSON.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Embeddings CSV (class_id,sample_id,e0,...).
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Sample-image directory; used for toy embeddings when no CSV is
    /// given, and always for the pixel-space diversity metric.
    #[arg(long)]
    images: Option<PathBuf>,
    /// Cosine-distance threshold (required; no published default).
    #[arg(long)]
    r: f64,
    /// FAR targets (repeatable).
    #[arg(long = "far")]
    fars: Vec<f64>,
    /// Normalize intra-class diversity by this baseline value.
    #[arg(long)]
    d_intra_baseline: Option<f64>,
    /// Output JSON report.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TarFarArgs {
    /// Embeddings CSV.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Or toy embeddings from a sample-image directory.
    #[arg(long)]
    images: Option<PathBuf>,
    /// FAR targets (repeatable, required).
    #[arg(long = "far", required = true)]
    fars: Vec<f64>,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML config file; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    ids: Option<usize>,
    #[arg(long)]
    per_id: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mode: Option<WindowMode>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    denoiser: Option<DenoiserKind>,
    #[arg(long)]
    curve: Option<CurveKind>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    d_intra_baseline: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    dist: Option<PathBuf>,
}

enum AppError {
    Usage(String),
    Data(String),
}

impl AppError {
    fn exit_code(&self) -> ExitCode {
        match self {
            Self::Usage(_) => ExitCode::from(1),
            Self::Data(_) => ExitCode::from(2),
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data(m) => m,
        }
    }
}

/// Pipeline config problems are usage errors; everything else from the
/// library is a data error.
fn from_pipeline(e: PipelineError) -> AppError {
    match e {
        PipelineError::Config(msg) => AppError::Usage(msg),
        other => AppError::Data(other.to_string()),
    }
}

fn data<E: std::fmt::Display>(e: E) -> AppError {
    AppError::Data(e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> AppError {
    AppError::Usage(e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help/version are success paths; anything else is usage.
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
            let _ = err.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<(), AppError> {
    match command {
        Command::FitCreases(args) => fit_creases(args),
        Command::QqExport(args) => qq_export(args),
        Command::SynthCreases(args) => synth_creases(args),
        Command::TrainDenoiser(args) => train_denoiser(args),
        Command::Sample(args) => sample(args),
        Command::ScoreDist(args) => score_dist(args),
        Command::Metrics(args) => metrics(args),
        Command::TarFar(args) => tar_far(args),
        Command::Pipeline(args) => pipeline(args),
    }
}

fn fit_creases(args: FitCreasesArgs) -> Result<(), AppError> {
    let corpus = read_annotations(&args.input).map_err(data)?;
    let fits = fit_annotations(&corpus).map_err(data)?;
    let dist = estimate_distribution(&fits).map_err(data)?;
    dist.save_json(&args.output).map_err(data)?;
    if let Some(path) = args.coefficients_out {
        let mut body = String::new();
        for fit in &fits {
            let record = serde_json::json!({
                "image_id": fit.image_id,
                "lines": fit.lines.iter().map(|l| serde_json::json!({
                    "coefficients": l.coefficients.0,
                    "residual_norm": l.residual_norm,
                    "x_start": l.x_start,
                    "x_end": l.x_end,
                })).collect::<Vec<_>>(),
            });
            body.push_str(&record.to_string());
            body.push('\n');
        }
        write_atomic(&path, body.as_bytes()).map_err(data)?;
    }
    println!(
        "fitted {} annotations -> {}",
        fits.len(),
        args.output.display()
    );
    Ok(())
}

fn qq_export(args: QqExportArgs) -> Result<(), AppError> {
    if !(1..=3).contains(&args.line) {
        return Err(usage(format!("line {} outside 1..=3", args.line)));
    }
    let corpus = read_annotations(&args.input).map_err(data)?;
    let fits = fit_annotations(&corpus).map_err(data)?;
    let vectors: Vec<_> = fits
        .iter()
        .map(|f| f.lines[(args.line - 1) as usize].coefficients)
        .collect();
    let rows = export_qq(&vectors, args.coeff).map_err(data)?;
    write_qq_csv(&rows, &args.output).map_err(data)?;
    println!("{} rows -> {}", rows.len(), args.output.display());
    Ok(())
}

fn load_dist(path: &Option<PathBuf>) -> Result<CreaseDistribution, AppError> {
    match path {
        Some(p) => CreaseDistribution::load_json(p).map_err(data),
        None => Ok(CreaseDistribution::default_prior()),
    }
}

fn synth_creases(args: SynthCreasesArgs) -> Result<(), AppError> {
    if args.ids == 0 {
        return Err(usage("ids must be >= 1"));
    }
    let dist = load_dist(&args.dist)?;
    let gamma = GammaFactor::new(args.gamma).map_err(usage)?;
    let wrinkles = if args.no_wrinkles {
        WrinkleConfig::none()
    } else {
        WrinkleConfig::default()
    };
    let params = RenderParams::new(args.width, args.height, args.thickness, wrinkles);
    std::fs::create_dir_all(&args.out).map_err(data)?;
    let root = RandomStream::from_seed(args.seed);
    let mut manifest = String::new();
    for id in 0..args.ids as u64 {
        let node = root.child_index(id).child_label("crease");
        let (record, image) = match args.curve {
            CurveKind::Poly => {
                let crease = sample_coefficients(&dist, gamma, &node.child_label("coeff"))
                    .map_err(data)?;
                let image =
                    render_crease(&crease, &params, &node.child_label("wrinkles")).map_err(data)?;
                let record = serde_json::json!({
                    "id": id,
                    "gamma": args.gamma,
                    "seed": args.seed,
                    "coefficients": crease.lines.iter().map(|l| l.coefficients.0).collect::<Vec<_>>(),
                    "endpoints": crease.lines.iter().map(|l| [l.x_start, l.x_end]).collect::<Vec<_>>(),
                });
                (record, image)
            }
            CurveKind::Bezier => {
                let image = synthesize_bezier_identity(&BezierBands::default(), &params, &node)
                    .map_err(data)?;
                let record = serde_json::json!({
                    "id": id,
                    "gamma": args.gamma,
                    "seed": args.seed,
                    "coefficients": serde_json::Value::Null,
                    "endpoints": serde_json::Value::Null,
                });
                (record, image)
            }
        };
        let path = args.out.join(format!("id{id:05}.pgm"));
        write_atomic(&path, &image.encode_pgm()).map_err(data)?;
        if args.png {
            image
                .save_png(&args.out.join(format!("id{id:05}.png")))
                .map_err(data)?;
        }
        manifest.push_str(&record.to_string());
        manifest.push('\n');
    }
    write_atomic(&args.out.join("identities.jsonl"), manifest.as_bytes()).map_err(data)?;
    println!("{} crease images -> {}", args.ids, args.out.display());
    Ok(())
}

fn load_crease_images(dir: &PathBuf) -> Result<Vec<(u64, CreaseImage)>, AppError> {
    let mut found = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(data)? {
        let entry = entry.map_err(data)?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(rest) = name.strip_prefix("id") {
            if let Some(id_str) = rest.strip_suffix(".pgm") {
                if let Ok(id) = id_str.parse::<u64>() {
                    found.push((id, entry.path()));
                }
            }
        }
    }
    if found.is_empty() {
        return Err(AppError::Data(format!(
            "no id*.pgm crease images in {}",
            dir.display()
        )));
    }
    found.sort();
    found
        .into_iter()
        .map(|(id, path)| Ok((id, CreaseImage::load_pgm(&path).map_err(data)?)))
        .collect()
}

fn train_denoiser(args: TrainDenoiserArgs) -> Result<(), AppError> {
    let schedule =
        DiffusionSchedule::linear(args.t, args.beta_start, args.beta_end).map_err(usage)?;
    let toy = GaussianToyModel::new(args.spread).map_err(usage)?;
    if args.per_image == 0 {
        return Err(usage("per-image must be >= 1"));
    }
    let creases = load_crease_images(&args.creases)?;
    let root = RandomStream::from_seed(args.seed);
    let train_root = root.child_label("train");
    let mut dataset = Vec::with_capacity(creases.len() * args.per_image);
    for (id, image) in &creases {
        let condition = Sample::from_image(image);
        let node = train_root.child_index(*id);
        for draw in 0..args.per_image as u64 {
            dataset.push((toy.draw_x0(&condition, &node.child_index(draw)), condition.clone()));
        }
    }
    let denoiser = fit_linear_denoiser(
        &dataset,
        &schedule,
        args.buckets,
        args.lambda,
        &root.child_label("fit"),
    )
    .map_err(data)?;
    denoiser.save_json(&args.out).map_err(data)?;
    println!(
        "fitted {} on {} draws -> {}",
        denoiser.descriptor(),
        dataset.len(),
        args.out.display()
    );
    Ok(())
}

fn sample(args: SampleArgs) -> Result<(), AppError> {
    let schedule =
        DiffusionSchedule::linear(args.t, args.beta_start, args.beta_end).map_err(usage)?;
    let plan = {
        let base = NoiseSharingPlan::new(args.k, args.mode, args.t).map_err(usage)?;
        if args.share_initial {
            base.with_shared_initial()
        } else {
            base
        }
    };
    if args.per_id == 0 {
        return Err(usage("per-id must be >= 1"));
    }
    let toy;
    let linear;
    let denoiser: &dyn Denoiser = match &args.denoiser {
        Some(path) => {
            linear = LinearDenoiser::load_json(path).map_err(data)?;
            &linear
        }
        None => {
            toy = GaussianToyModel::new(args.spread).map_err(usage)?;
            &toy
        }
    };
    let creases = load_crease_images(&args.creases)?;
    std::fs::create_dir_all(&args.out).map_err(data)?;
    let root = RandomStream::from_seed(args.seed);
    for (id, image) in &creases {
        let batch = IdentityBatch {
            identity_id: *id,
            condition: Sample::from_image(image),
            sample_count: args.per_id,
        };
        let samples =
            noise_sharing_sample(denoiser, &schedule, &batch, &plan, &root).map_err(data)?;
        for (j, s) in samples.iter().enumerate() {
            let name = sample_file_name(*id, j);
            write_atomic(&args.out.join(name), &s.to_image().encode_pgm()).map_err(data)?;
        }
    }
    let manifest = SamplerRunManifest {
        t_steps: args.t,
        k: args.k,
        mode: args.mode,
        seed: args.seed,
        ids: creases.len(),
        per_id: args.per_id,
        denoiser: denoiser.descriptor(),
    };
    let body = serde_json::to_vec_pretty(&manifest).map_err(data)?;
    write_atomic(&args.out.join("run.json"), &body).map_err(data)?;
    println!(
        "{} identities x {} samples -> {}",
        creases.len(),
        args.per_id,
        args.out.display()
    );
    Ok(())
}

fn load_embeddings(
    embeddings: &Option<PathBuf>,
    images: &Option<PathBuf>,
) -> Result<EmbeddingSet, AppError> {
    match (embeddings, images) {
        (Some(csv), _) => EmbeddingSet::from_csv(csv).map_err(data),
        (None, Some(dir)) => {
            let classes = load_image_classes(dir).map_err(from_pipeline)?;
            EmbeddingSet::new(
                classes
                    .iter()
                    .map(|(id, imgs)| EmbeddingClass {
                        label: format!("id{id:05}"),
                        vectors: imgs.iter().map(toy_embed).collect(),
                    })
                    .collect(),
            )
            .map_err(data)
        }
        (None, None) => Err(usage("provide --embeddings CSV or --images directory")),
    }
}

fn score_dist(args: ScoreDistArgs) -> Result<(), AppError> {
    let emb = load_embeddings(&args.embeddings, &args.images)?;
    let scores = score_distribution(&emb).map_err(data)?;
    let body = serde_json::json!({
        "genuine": scores.genuine_stats(),
        "imposter": scores.imposter_stats(),
        "imposter_subsampled": scores.imposter_subsampled,
    });
    write_atomic(&args.output, body.to_string().as_bytes()).map_err(data)?;
    println!(
        "genuine mean {:.4} std {:.4} ({} pairs); imposter mean {:.4} std {:.4} ({} pairs)",
        scores.genuine_stats().mean,
        scores.genuine_stats().std,
        scores.genuine_stats().count,
        scores.imposter_stats().mean,
        scores.imposter_stats().std,
        scores.imposter_stats().count,
    );
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<(), AppError> {
    let images_dir = args
        .images
        .as_ref()
        .ok_or_else(|| usage("--images directory is required for the diversity metric"))?;
    let classes = load_image_classes(images_dir).map_err(from_pipeline)?;
    let fars = if args.fars.is_empty() {
        vec![0.01]
    } else {
        args.fars.clone()
    };
    let report = if let Some(csv) = &args.embeddings {
        // External embeddings: score metrics from the CSV, diversity
        // from the images.
        let emb = EmbeddingSet::from_csv(csv).map_err(data)?;
        let scores = score_distribution(&emb).map_err(data)?;
        let image_groups: Vec<_> = classes.iter().map(|(_, v)| v.clone()).collect();
        let d_intra =
            creaseforge::metrics::intra_class_diversity(&image_groups, args.d_intra_baseline)
                .map_err(data)?;
        let mut rows = Vec::new();
        for far in &fars {
            let (tar, threshold) = tar_at_far(&scores, *far).map_err(data)?;
            rows.push(creaseforge::metrics::TarFarEntry {
                far: *far,
                tar,
                threshold,
            });
        }
        creaseforge::metrics::MetricReport {
            u_class: creaseforge::metrics::class_uniqueness(&emb, args.r).map_err(data)?,
            c_identity: creaseforge::metrics::identity_consistency(&emb, args.r).map_err(data)?,
            d_intra,
            r: args.r,
            genuine: scores.genuine_stats(),
            imposter: scores.imposter_stats(),
            tar_at_far: rows,
            imposter_subsampled: scores.imposter_subsampled,
        }
    } else {
        evaluate_dataset(&classes, args.r, &fars, args.d_intra_baseline).map_err(from_pipeline)?
    };
    report.save_json(&args.output).map_err(data)?;
    println!(
        "u_class {:.4}  c_identity {:.4}  d_intra {:.4} -> {}",
        report.u_class,
        report.c_identity,
        report.d_intra,
        args.output.display()
    );
    Ok(())
}

fn tar_far(args: TarFarArgs) -> Result<(), AppError> {
    let emb = load_embeddings(&args.embeddings, &args.images)?;
    let scores = score_distribution(&emb).map_err(data)?;
    let mut rows = Vec::new();
    for far in &args.fars {
        let (tar, threshold) = tar_at_far(&scores, *far).map_err(data)?;
        rows.push(serde_json::json!({
            "far": far,
            "tar": tar,
            "threshold": threshold,
        }));
    }
    let body = serde_json::Value::Array(rows).to_string();
    match &args.output {
        Some(path) => write_atomic(path, body.as_bytes()).map_err(data)?,
        None => println!("{body}"),
    }
    Ok(())
}

fn pipeline(args: PipelineArgs) -> Result<(), AppError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_toml(path).map_err(from_pipeline)?,
        None => {
            let out_dir = args
                .out_dir
                .clone()
                .ok_or_else(|| usage("--out-dir is required without --config"))?;
            let r = args
                .r
                .ok_or_else(|| usage("--r is required without --config"))?;
            RunConfig::desk_defaults(out_dir, r)
        }
    };
    // Flags override file keys.
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.ids {
        config.ids = v;
    }
    if let Some(v) = args.per_id {
        config.per_id = v;
    }
    if let Some(v) = args.k {
        config.k = v;
    }
    if let Some(v) = args.mode {
        config.mode = v;
    }
    if let Some(v) = args.gamma {
        config.gamma = v;
    }
    if let Some(v) = args.t {
        config.t_steps = v;
    }
    if let Some(v) = args.width {
        config.width = v;
    }
    if let Some(v) = args.height {
        config.height = v;
    }
    if let Some(v) = args.denoiser {
        config.denoiser = v;
    }
    if let Some(v) = args.curve {
        config.curve = v;
    }
    if let Some(v) = args.r {
        config.r = v;
    }
    if let Some(v) = args.d_intra_baseline {
        config.d_intra_baseline = Some(v);
    }
    if let Some(v) = args.out_dir {
        config.out_dir = v;
    }
    if let Some(v) = args.dist {
        config.dist = Some(v);
    }
    let outcome = run_pipeline(&config).map_err(from_pipeline)?;
    println!(
        "dataset {} ids x {} samples -> {}",
        config.ids,
        config.per_id,
        outcome.out_dir.display()
    );
    println!("digest {}", outcome.digest);
    println!(
        "u_class {:.4}  c_identity {:.4}  d_intra {:.4}",
        outcome.report.u_class, outcome.report.c_identity, outcome.report.d_intra
    );
    Ok(())
}
