//! Grayscale rendering of crease identities.
//!
//! Principal lines are drawn by sampling the polynomial densely over its
//! span and stroking the resulting polyline with a capsule brush: a
//! pixel lights up when any of its four quarter-points (center ± 0.25
//! per axis) lies within `thickness/2` of a segment. The quarter-points
//! of a pixel are exactly the child-pixel centers of the 2x-resolution
//! grid, so a render at (W, t) nearest-neighbor-upscaled 2x always
//! covers the render at (2W, 2t). Strokes are binary (no anti-aliasing)
//! so condition images stay crisp and pixel-level oracles stay exact.
//! Wrinkles are short straight segments with uniform random placement,
//! drawn at a weaker intensity than the principal lines.
//!
//! Images use 0 for background; drawing blends with `max`, so principal
//! lines (255) win over wrinkles wherever they cross.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::creasedist::{
    sample_coefficients, CreaseDistError, CreaseDistribution, GammaFactor, PolynomialCrease,
};
use crate::rng::RandomStream;

/// Intensity of principal lines.
pub const LINE_INTENSITY: u8 = 255;
/// Wrinkles are always single-pixel strokes.
const WRINKLE_THICKNESS: u32 = 1;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("image {width}x{height} too small; need at least 8x8")]
    ImageTooSmall { width: u32, height: u32 },
    #[error("line thickness must be >= 1")]
    ZeroThickness,
    #[error("need at least 2 samples for a polyline, got {got}")]
    TooFewSamples { got: usize },
    #[error("input contains a non-finite coordinate")]
    NonFiniteInput,
    #[error("wrinkle config invalid: {0}")]
    InvalidWrinkleConfig(String),
    #[error("pgm: {0}")]
    Pgm(String),
    #[error(transparent)]
    Distribution(#[from] CreaseDistError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// 8-bit grayscale image, row-major, 0 = background.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct CreaseImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl CreaseImage {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, RasterError> {
        if pixels.len() != width as usize * height as usize {
            return Err(RasterError::Pgm(format!(
                "pixel buffer length {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    fn blend_max(&mut self, x: u32, y: u32, intensity: u8) {
        let idx = y as usize * self.width as usize + x as usize;
        self.pixels[idx] = self.pixels[idx].max(intensity);
    }

    /// Number of non-background pixels.
    pub fn lit_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }

    /// Write as binary PGM (P5, maxval 255).
    pub fn save_pgm(&self, path: &Path) -> Result<(), RasterError> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.encode_pgm().as_slice())?;
        Ok(())
    }

    /// Raw PGM bytes (used for content digests as well as file output).
    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn load_pgm(path: &Path) -> Result<Self, RasterError> {
        let mut reader = BufReader::new(std::fs::File::open(path)?);
        let mut header = Vec::new();
        let mut fields = Vec::new();
        // P5 header: magic, width, height, maxval; '#' comments allowed.
        while fields.len() < 4 {
            header.clear();
            let n = reader.read_until(b'\n', &mut header)?;
            if n == 0 {
                return Err(RasterError::Pgm("truncated header".into()));
            }
            let line = String::from_utf8_lossy(&header);
            let line = line.split('#').next().unwrap_or("");
            fields.extend(line.split_whitespace().map(str::to_owned));
        }
        if fields[0] != "P5" {
            return Err(RasterError::Pgm(format!("unsupported magic {}", fields[0])));
        }
        let parse = |s: &str| {
            s.parse::<u32>()
                .map_err(|_| RasterError::Pgm(format!("bad header field '{s}'")))
        };
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(RasterError::Pgm(format!("unsupported maxval {maxval}")));
        }
        let mut pixels = vec![0u8; width as usize * height as usize];
        reader.read_exact(&mut pixels)?;
        Self::from_pixels(width, height, pixels)
    }

    /// Optional PNG output.
    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        let img = image::GrayImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer length matches dimensions");
        img.save(path)
            .map_err(|e| RasterError::Pgm(format!("png: {e}")))?;
        Ok(())
    }
}

/// Wrinkle generation parameters. The count is drawn uniformly from
/// `count_min..=count_max`; lengths are fractions of the image diagonal.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct WrinkleConfig {
    pub count_min: u32,
    pub count_max: u32,
    pub length_min: f64,
    pub length_max: f64,
    pub intensity: u8,
}

impl Default for WrinkleConfig {
    fn default() -> Self {
        Self {
            count_min: 3,
            count_max: 8,
            length_min: 0.10,
            length_max: 0.25,
            intensity: 160,
        }
    }
}

impl WrinkleConfig {
    /// No wrinkles at all.
    pub fn none() -> Self {
        Self {
            count_min: 0,
            count_max: 0,
            length_min: 0.0,
            length_max: 0.0,
            intensity: 0,
        }
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        if self.count_min > self.count_max {
            return Err(RasterError::InvalidWrinkleConfig(format!(
                "count range {}..={} is reversed",
                self.count_min, self.count_max
            )));
        }
        if !(self.length_min.is_finite() && self.length_max.is_finite())
            || self.length_min < 0.0
            || self.length_min > self.length_max
        {
            return Err(RasterError::InvalidWrinkleConfig(
                "length range must satisfy 0 <= min <= max".into(),
            ));
        }
        Ok(())
    }
}

/// Canvas parameters shared by all render entry points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderParams {
    pub width: u32,
    pub height: u32,
    pub line_thickness: u32,
    pub wrinkles: WrinkleConfig,
}

impl RenderParams {
    pub fn new(width: u32, height: u32, line_thickness: u32, wrinkles: WrinkleConfig) -> Self {
        Self {
            width,
            height,
            line_thickness,
            wrinkles,
        }
    }

    fn validate(&self) -> Result<(), RasterError> {
        if self.width < 8 || self.height < 8 {
            return Err(RasterError::ImageTooSmall {
                width: self.width,
                height: self.height,
            });
        }
        if self.line_thickness == 0 {
            return Err(RasterError::ZeroThickness);
        }
        self.wrinkles.validate()
    }
}

/// Normalized [0,1] coordinate to pixel coordinate, pixel centers at
/// (i + 0.5)/extent. This convention nests exactly across power-of-two
/// resolutions: the 2x2 block of a doubled-resolution grid is centered
/// on its parent pixel.
fn to_pixel(x: f64, extent: u32) -> f64 {
    x * f64::from(extent) - 0.5
}

fn dist_point_segment(px: f64, py: f64, a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a[0]) * dx + (py - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    (px - cx).hypot(py - cy)
}

/// Quarter-point offsets sampled per pixel; these coincide with the
/// child-pixel centers of the doubled-resolution grid.
const SUBPOINTS: [[f64; 2]; 4] = [
    [-0.25, -0.25],
    [0.25, -0.25],
    [-0.25, 0.25],
    [0.25, 0.25],
];

fn pixel_hits_segment(ix: f64, iy: f64, a: [f64; 2], b: [f64; 2], radius: f64) -> bool {
    SUBPOINTS
        .iter()
        .any(|d| dist_point_segment(ix + d[0], iy + d[1], a, b) <= radius)
}

/// Stroke one segment (pixel coordinates) with a capsule of radius
/// `thickness/2`. Pixels outside the canvas are clipped silently.
fn stamp_segment(img: &mut CreaseImage, a: [f64; 2], b: [f64; 2], thickness: u32, intensity: u8) {
    let radius = f64::from(thickness) / 2.0;
    let pad = radius + 0.25;
    let x_lo = (a[0].min(b[0]) - pad).floor().max(0.0) as i64;
    let x_hi = (a[0].max(b[0]) + pad).ceil().min(f64::from(img.width - 1)) as i64;
    let y_lo = (a[1].min(b[1]) - pad).floor().max(0.0) as i64;
    let y_hi = (a[1].max(b[1]) + pad).ceil().min(f64::from(img.height - 1)) as i64;
    for iy in y_lo..=y_hi {
        for ix in x_lo..=x_hi {
            if pixel_hits_segment(ix as f64, iy as f64, a, b, radius) {
                img.blend_max(ix as u32, iy as u32, intensity);
            }
        }
    }
}

/// Stroke a polyline given in pixel coordinates.
fn stamp_polyline(img: &mut CreaseImage, points: &[[f64; 2]], thickness: u32, intensity: u8) {
    for pair in points.windows(2) {
        stamp_segment(img, pair[0], pair[1], thickness, intensity);
    }
}

fn draw_wrinkles(
    img: &mut CreaseImage,
    config: &WrinkleConfig,
    stream: &RandomStream,
) -> Result<(), RasterError> {
    let mut rng = stream.rng();
    let count = if config.count_max == 0 {
        0
    } else {
        rng.random_range(config.count_min..=config.count_max)
    };
    let diag = f64::from(img.width).hypot(f64::from(img.height));
    for _ in 0..count {
        let x0 = to_pixel(rng.random_range(0.0..1.0), img.width);
        let y0 = to_pixel(rng.random_range(0.0..1.0), img.height);
        let angle = rng.random_range(0.0..std::f64::consts::TAU);
        let length = rng.random_range(config.length_min..=config.length_max) * diag;
        let x1 = x0 + length * angle.cos();
        let y1 = y0 + length * angle.sin();
        stamp_segment(img, [x0, y0], [x1, y1], WRINKLE_THICKNESS, config.intensity);
    }
    Ok(())
}

/// Render one identity's principal lines plus wrinkles. Each line is
/// evaluated at `2·width` abscissae over its span; values falling
/// outside the unit square vertically are clipped by the stroke, not
/// treated as an error.
pub fn render_crease(
    crease: &PolynomialCrease,
    params: &RenderParams,
    stream: &RandomStream,
) -> Result<CreaseImage, RasterError> {
    params.validate()?;
    for line in &crease.lines {
        if !line.coefficients.is_finite() || !line.x_start.is_finite() || !line.x_end.is_finite() {
            return Err(RasterError::NonFiniteInput);
        }
    }
    let mut img = CreaseImage::new(params.width, params.height);
    let samples = 2 * params.width as usize;
    for line in &crease.lines {
        let span = line.x_end - line.x_start;
        let points: Vec<[f64; 2]> = (0..samples)
            .map(|i| {
                let x = line.x_start + span * i as f64 / (samples - 1) as f64;
                [
                    to_pixel(x, params.width),
                    to_pixel(line.coefficients.evaluate(x), params.height),
                ]
            })
            .collect();
        stamp_polyline(&mut img, &points, params.line_thickness, LINE_INTENSITY);
    }
    draw_wrinkles(&mut img, &params.wrinkles, stream)?;
    Ok(img)
}

/// Quadratic Bézier sampled at `n_samples` uniform parameter values:
/// `B(t) = (1−t)² P_s + 2t(1−t) P_c + t² P_e`.
pub fn bezier_crease(
    p_start: [f64; 2],
    p_control: [f64; 2],
    p_end: [f64; 2],
    n_samples: usize,
) -> Result<Vec<[f64; 2]>, RasterError> {
    if n_samples < 2 {
        return Err(RasterError::TooFewSamples { got: n_samples });
    }
    for p in [p_start, p_control, p_end] {
        if !p[0].is_finite() || !p[1].is_finite() {
            return Err(RasterError::NonFiniteInput);
        }
    }
    Ok((0..n_samples)
        .map(|i| {
            let t = i as f64 / (n_samples - 1) as f64;
            let w0 = (1.0 - t) * (1.0 - t);
            let w1 = 2.0 * t * (1.0 - t);
            let w2 = t * t;
            [
                w0 * p_start[0] + w1 * p_control[0] + w2 * p_end[0],
                w0 * p_start[1] + w1 * p_control[1] + w2 * p_end[1],
            ]
        })
        .collect())
}

/// Vertical bands the three Bézier baseline lines are sampled from; the
/// default splits the unit square into three horizontal strips.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BezierBands {
    pub bands: [(f64, f64); 3],
}

impl Default for BezierBands {
    fn default() -> Self {
        Self {
            bands: [(0.0, 1.0 / 3.0), (1.0 / 3.0, 2.0 / 3.0), (2.0 / 3.0, 1.0)],
        }
    }
}

/// Sample one identity from the prior and render it. The coefficient
/// draw and the wrinkle draw use separate child streams, so the same
/// identity keeps the same crease under different wrinkle settings.
pub fn synthesize_identity(
    dist: &CreaseDistribution,
    gamma: GammaFactor,
    params: &RenderParams,
    stream: &RandomStream,
) -> Result<(PolynomialCrease, CreaseImage), RasterError> {
    let crease = sample_coefficients(dist, gamma, &stream.child_label("coeff"))?;
    let img = render_crease(&crease, params, &stream.child_label("wrinkles"))?;
    Ok((crease, img))
}

/// Baseline identity synthesis: three random quadratic Béziers, one per
/// band, plus wrinkles.
pub fn synthesize_bezier_identity(
    bands: &BezierBands,
    params: &RenderParams,
    stream: &RandomStream,
) -> Result<CreaseImage, RasterError> {
    params.validate()?;
    let mut rng = stream.child_label("bezier").rng();
    let mut img = CreaseImage::new(params.width, params.height);
    let samples = 2 * params.width as usize;
    for (lo, hi) in bands.bands {
        let mut point = || -> [f64; 2] {
            [rng.random_range(0.0..1.0), rng.random_range(lo..hi)]
        };
        let (ps, pc, pe) = (point(), point(), point());
        let curve = bezier_crease(ps, pc, pe, samples)?;
        let px: Vec<[f64; 2]> = curve
            .iter()
            .map(|p| [to_pixel(p[0], params.width), to_pixel(p[1], params.height)])
            .collect();
        stamp_polyline(&mut img, &px, params.line_thickness, LINE_INTENSITY);
    }
    draw_wrinkles(&mut img, &params.wrinkles, &stream.child_label("wrinkles"))?;
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::creasedist::CreaseLine;
    use crate::creasefit::CoefficientVector;
    use approx::assert_abs_diff_eq;

    fn flat_crease(level: f64) -> PolynomialCrease {
        let line = |y: f64| CreaseLine {
            coefficients: CoefficientVector([y, 0.0, 0.0, 0.0, 0.0]),
            x_start: 0.0,
            x_end: 1.0,
        };
        PolynomialCrease {
            lines: [line(level), line(level), line(level)],
        }
    }

    fn no_wrinkle_params(width: u32, height: u32, thickness: u32) -> RenderParams {
        RenderParams::new(width, height, thickness, WrinkleConfig::none())
    }

    #[test]
    fn constant_polynomial_draws_horizontal_line() {
        let img = render_crease(
            &flat_crease(0.5),
            &no_wrinkle_params(64, 64, 1),
            &RandomStream::from_seed(0),
        )
        .unwrap();
        // y = 0.5 maps to pixel row 31.5; the capsule stroke covers the
        // tied rows 31 and 32, and every column is lit.
        let target = (0.5f64 * 63.0).round() as u32;
        assert_eq!(target, 32);
        for x in 0..64 {
            assert_eq!(img.get(x, target), LINE_INTENSITY, "column {x} missing");
        }
        assert!(img.lit_count() >= 64);
        for y in 0..64u32 {
            if !(31..=32).contains(&y) {
                for x in 0..64 {
                    assert_eq!(img.get(x, y), 0, "stray pixel at ({x},{y})");
                }
            }
        }
    }

    #[test]
    fn render_is_deterministic() {
        let dist = CreaseDistribution::default_prior();
        let stream = RandomStream::from_seed(5);
        let params = RenderParams::new(64, 64, 2, WrinkleConfig::default());
        let (c1, i1) =
            synthesize_identity(&dist, GammaFactor::new(1.0).unwrap(), &params, &stream).unwrap();
        let (c2, i2) =
            synthesize_identity(&dist, GammaFactor::new(1.0).unwrap(), &params, &stream).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(i1, i2);
    }

    #[test]
    fn zero_wrinkle_render_bit_identical() {
        let crease = flat_crease(0.3);
        let params = no_wrinkle_params(32, 32, 2);
        let a = render_crease(&crease, &params, &RandomStream::from_seed(1)).unwrap();
        let b = render_crease(&crease, &params, &RandomStream::from_seed(2)).unwrap();
        assert_eq!(a, b); // no wrinkles -> stream must not matter
    }

    #[test]
    fn lit_count_matches_reference_rasterizer() {
        // Independent oracle: global per-pixel scan over every polyline
        // with the same capsule predicate. The production path stamps
        // per-segment bounding boxes; lit counts must agree within 2%.
        let crease = PolynomialCrease {
            lines: [
                CreaseLine {
                    coefficients: CoefficientVector([0.3, -0.2, 0.15, 0.0, 0.0]),
                    x_start: 0.05,
                    x_end: 0.95,
                },
                CreaseLine {
                    coefficients: CoefficientVector([0.5, 0.1, 0.0, 0.0, 0.0]),
                    x_start: 0.1,
                    x_end: 0.9,
                },
                CreaseLine {
                    coefficients: CoefficientVector([0.7, 0.3, -0.25, 0.0, 0.0]),
                    x_start: 0.0,
                    x_end: 0.8,
                },
            ],
        };
        let wrinkles = WrinkleConfig {
            count_min: 5,
            count_max: 5,
            ..WrinkleConfig::default()
        };
        let params = RenderParams::new(64, 64, 2, wrinkles);
        let stream = RandomStream::from_seed(77);
        let img = render_crease(&crease, &params, &stream).unwrap();

        // Rebuild the same polylines the renderer used.
        let mut principal = Vec::new();
        let px_of = |v: f64| v * 64.0 - 0.5;
        let samples = 128;
        for line in &crease.lines {
            let span = line.x_end - line.x_start;
            principal.push(
                (0..samples)
                    .map(|i| {
                        let x = line.x_start + span * i as f64 / (samples - 1) as f64;
                        [px_of(x), px_of(line.coefficients.evaluate(x))]
                    })
                    .collect::<Vec<_>>(),
            );
        }
        // Wrinkles replay the renderer's draw order from the same stream.
        let mut rng = stream.rng();
        let count = rng.random_range(5..=5u32);
        let diag = 64.0f64.hypot(64.0);
        let mut wrinkle_lines = Vec::new();
        for _ in 0..count {
            let x0 = px_of(rng.random_range(0.0..1.0));
            let y0 = px_of(rng.random_range(0.0..1.0));
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let length = rng.random_range(0.10..=0.25) * diag;
            wrinkle_lines.push(vec![
                [x0, y0],
                [x0 + length * angle.cos(), y0 + length * angle.sin()],
            ]);
        }

        let mut reference = 0usize;
        for iy in 0..64u32 {
            for ix in 0..64u32 {
                let (px, py) = (f64::from(ix), f64::from(iy));
                let hit = principal.iter().any(|pl| {
                    pl.windows(2)
                        .any(|s| pixel_hits_segment(px, py, s[0], s[1], 1.0))
                }) || wrinkle_lines.iter().any(|pl| {
                    pl.windows(2)
                        .any(|s| pixel_hits_segment(px, py, s[0], s[1], 0.5))
                });
                if hit {
                    reference += 1;
                }
            }
        }
        let got = img.lit_count();
        let rel = (got as f64 - reference as f64).abs() / reference as f64;
        assert!(
            rel <= 0.02,
            "lit count {got} vs reference {reference} (rel {rel:.4})"
        );
    }

    #[test]
    fn bezier_endpoints_and_midpoint() {
        let ps = [0.1, 0.2];
        let pc = [0.5, 0.9];
        let pe = [0.8, 0.3];
        let curve = bezier_crease(ps, pc, pe, 3).unwrap();
        assert_eq!(curve[0], ps);
        assert_eq!(curve[2], pe);
        for k in 0..2 {
            assert_abs_diff_eq!(
                curve[1][k],
                0.25 * ps[k] + 0.5 * pc[k] + 0.25 * pe[k],
                epsilon = 1e-15
            );
        }
    }

    #[test]
    fn bezier_degenerate_point() {
        let p = [0.4, 0.6];
        for sample in bezier_crease(p, p, p, 9).unwrap() {
            assert_abs_diff_eq!(sample[0], p[0], epsilon = 1e-15);
            assert_abs_diff_eq!(sample[1], p[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn bezier_too_few_samples() {
        assert!(matches!(
            bezier_crease([0.0, 0.0], [0.5, 0.5], [1.0, 1.0], 1),
            Err(RasterError::TooFewSamples { got: 1 })
        ));
    }

    #[test]
    fn bezier_stays_in_convex_hull() {
        // Axis-aligned bound implied by the hull property, asserted per
        // sample.
        let ps = [0.05, 0.1];
        let pc = [0.6, 0.95];
        let pe = [0.9, 0.4];
        let (lo_x, hi_x) = (0.05, 0.9);
        let (lo_y, hi_y) = (0.1, 0.95);
        for p in bezier_crease(ps, pc, pe, 101).unwrap() {
            assert!(p[0] >= lo_x - 1e-12 && p[0] <= hi_x + 1e-12);
            assert!(p[1] >= lo_y - 1e-12 && p[1] <= hi_y + 1e-12);
        }
    }

    #[test]
    fn gamma_zero_collapses_identities() {
        let dist = CreaseDistribution::default_prior();
        let params = no_wrinkle_params(32, 32, 1);
        let g = GammaFactor::new(0.0).unwrap();
        let root = RandomStream::from_seed(10);
        let (_, a) = synthesize_identity(&dist, g, &params, &root.child_index(0)).unwrap();
        let (_, b) = synthesize_identity(&dist, g, &params, &root.child_index(1)).unwrap();
        assert_eq!(a, b);
    }

    fn mean_pairwise_l1(images: &[CreaseImage]) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..images.len() {
            for j in (i + 1)..images.len() {
                let d: f64 = images[i]
                    .pixels()
                    .iter()
                    .zip(images[j].pixels())
                    .map(|(&a, &b)| (f64::from(a) - f64::from(b)).abs())
                    .sum();
                total += d;
                pairs += 1;
            }
        }
        total / pairs as f64
    }

    #[test]
    fn larger_gamma_spreads_identities() {
        let dist = CreaseDistribution::default_prior();
        let params = no_wrinkle_params(32, 32, 1);
        let root = RandomStream::from_seed(20);
        let render_set = |gamma: f64| -> Vec<CreaseImage> {
            let g = GammaFactor::new(gamma).unwrap();
            (0..100)
                .map(|i| {
                    synthesize_identity(&dist, g, &params, &root.child_index(i))
                        .unwrap()
                        .1
                })
                .collect()
        };
        let d_low = mean_pairwise_l1(&render_set(0.25));
        let d_mid = mean_pairwise_l1(&render_set(1.0));
        assert!(
            d_mid > d_low,
            "mean L1 did not grow with gamma: {d_low} vs {d_mid}"
        );
    }

    #[test]
    fn resolution_covariant_within_tolerance() {
        // 64x64 at thickness t, nearest-neighbor upscaled 2x, must cover
        // >= 90% of the lit pixels of the 128x128 render at thickness 2t.
        let dist = CreaseDistribution::default_prior();
        let g = GammaFactor::new(1.0).unwrap();
        let root = RandomStream::from_seed(31);
        for id in 0..5u64 {
            let crease =
                sample_coefficients(&dist, g, &root.child_index(id).child_label("coeff")).unwrap();
            let lo = render_crease(
                &crease,
                &no_wrinkle_params(64, 64, 2),
                &RandomStream::from_seed(0),
            )
            .unwrap();
            let hi = render_crease(
                &crease,
                &no_wrinkle_params(128, 128, 4),
                &RandomStream::from_seed(0),
            )
            .unwrap();
            let mut overlap = 0usize;
            let mut hi_lit = 0usize;
            for y in 0..128u32 {
                for x in 0..128u32 {
                    if hi.get(x, y) != 0 {
                        hi_lit += 1;
                        if lo.get(x / 2, y / 2) != 0 {
                            overlap += 1;
                        }
                    }
                }
            }
            let frac = overlap as f64 / hi_lit as f64;
            assert!(frac >= 0.90, "identity {id}: overlap {frac:.3}");
        }
    }

    #[test]
    fn output_values_limited_to_used_intensities() {
        let dist = CreaseDistribution::default_prior();
        let params = RenderParams::new(48, 48, 2, WrinkleConfig::default());
        let (_, img) = synthesize_identity(
            &dist,
            GammaFactor::new(1.0).unwrap(),
            &params,
            &RandomStream::from_seed(8),
        )
        .unwrap();
        for &p in img.pixels() {
            assert!(p == 0 || p == 160 || p == 255, "unexpected intensity {p}");
        }
    }

    #[test]
    fn too_small_canvas_rejected() {
        assert!(matches!(
            render_crease(
                &flat_crease(0.5),
                &no_wrinkle_params(4, 64, 1),
                &RandomStream::from_seed(0)
            ),
            Err(RasterError::ImageTooSmall { .. })
        ));
        assert!(matches!(
            render_crease(
                &flat_crease(0.5),
                &no_wrinkle_params(64, 64, 0),
                &RandomStream::from_seed(0)
            ),
            Err(RasterError::ZeroThickness)
        ));
    }

    #[test]
    fn out_of_band_polynomial_clips_instead_of_failing() {
        // A polynomial wandering far above the canvas renders only its
        // in-canvas portion.
        let crease = PolynomialCrease {
            lines: [
                CreaseLine {
                    coefficients: CoefficientVector([0.5, 3.0, 0.0, 0.0, 0.0]),
                    x_start: 0.0,
                    x_end: 1.0,
                },
                CreaseLine {
                    coefficients: CoefficientVector([0.2, 0.0, 0.0, 0.0, 0.0]),
                    x_start: 0.0,
                    x_end: 1.0,
                },
                CreaseLine {
                    coefficients: CoefficientVector([0.8, 0.0, 0.0, 0.0, 0.0]),
                    x_start: 0.0,
                    x_end: 1.0,
                },
            ],
        };
        let img = render_crease(
            &crease,
            &no_wrinkle_params(32, 32, 1),
            &RandomStream::from_seed(0),
        )
        .unwrap();
        assert!(img.lit_count() > 0);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = render_crease(
            &flat_crease(0.4),
            &no_wrinkle_params(16, 16, 1),
            &RandomStream::from_seed(0),
        )
        .unwrap();
        img.save_pgm(&path).unwrap();
        let back = CreaseImage::load_pgm(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn bezier_identity_renders() {
        let params = RenderParams::new(32, 32, 1, WrinkleConfig::default());
        let img = synthesize_bezier_identity(
            &BezierBands::default(),
            &params,
            &RandomStream::from_seed(4),
        )
        .unwrap();
        assert!(img.lit_count() > 0);
        let again = synthesize_bezier_identity(
            &BezierBands::default(),
            &params,
            &RandomStream::from_seed(4),
        )
        .unwrap();
        assert_eq!(img, again);
    }
}
