//! Least-squares fitting of principal palm lines.
//!
//! Each annotated line is reduced to a fourth-order polynomial
//! `y(x) = a0 + a1 x + a2 x² + a3 x³ + a4 x⁴` by solving the linear
//! least-squares problem over the n×5 Vandermonde design matrix. The
//! solve goes through a thin QR factorization rather than the normal
//! equations: Vandermonde matrices on [0,1] are poorly conditioned and
//! QR keeps the five recovered coefficients stable for noisy inputs.
//!
//! Coordinates are normalized to [0,1]² (pixel / (extent−1)) before
//! fitting so coefficient magnitudes are comparable across image sizes.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Degree-4 polynomial: five coefficients.
pub const COEFF_COUNT: usize = 5;
/// Principal lines per palm.
pub const LINE_COUNT: usize = 3;
/// Minimum points for a determined degree-4 fit.
pub const MIN_POINTS: usize = 5;

#[derive(Debug, Error)]
pub enum CreaseFitError {
    #[error("line needs at least {MIN_POINTS} points, got {got}")]
    FewerThanFivePoints { got: usize },
    #[error("duplicate abscissa x={x} makes the design matrix rank-deficient")]
    DuplicateAbscissa { x: f64 },
    #[error("input contains a non-finite coordinate")]
    NonFiniteInput,
    #[error("coordinate ({x}, {y}) outside the unit square")]
    OutOfRange { x: f64, y: f64 },
    #[error("line index {index} outside 1..=3")]
    BadLineIndex { index: u8 },
    #[error("annotation must carry three distinct line indices")]
    DuplicateLineIndex,
    #[error("image extent {width}x{height} too small to normalize (need >= 2x2)")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("design matrix rank-deficient in QR solve")]
    RankDeficient,
    #[error("annotation '{image_id}': {source}")]
    Annotation {
        image_id: String,
        #[source]
        source: Box<CreaseFitError>,
    },
    #[error("annotation file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered labeled points of one principal line, in normalized [0,1]²
/// coordinates. Construction enforces the fit preconditions.
#[derive(Clone, Debug)]
pub struct LinePoints {
    points: Vec<[f64; 2]>,
    line_index: u8,
}

impl LinePoints {
    pub fn new(points: Vec<[f64; 2]>, line_index: u8) -> Result<Self, CreaseFitError> {
        if !(1..=3).contains(&line_index) {
            return Err(CreaseFitError::BadLineIndex { index: line_index });
        }
        if points.len() < MIN_POINTS {
            return Err(CreaseFitError::FewerThanFivePoints { got: points.len() });
        }
        for &[x, y] in &points {
            if !x.is_finite() || !y.is_finite() {
                return Err(CreaseFitError::NonFiniteInput);
            }
            if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
                return Err(CreaseFitError::OutOfRange { x, y });
            }
        }
        let mut xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        for pair in xs.windows(2) {
            if pair[0] == pair[1] {
                return Err(CreaseFitError::DuplicateAbscissa { x: pair[0] });
            }
        }
        Ok(Self { points, line_index })
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn line_index(&self) -> u8 {
        self.line_index
    }

    /// Abscissa span (min x, max x).
    pub fn span(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &self.points {
            lo = lo.min(p[0]);
            hi = hi.max(p[0]);
        }
        (lo, hi)
    }
}

/// Polynomial coefficients in ascending-power order `[a0, a1, a2, a3, a4]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientVector(pub [f64; COEFF_COUNT]);

impl CoefficientVector {
    /// Evaluate the polynomial at `x` (Horner form).
    pub fn evaluate(&self, x: f64) -> f64 {
        let a = &self.0;
        a[0] + x * (a[1] + x * (a[2] + x * (a[3] + x * a[4])))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }
}

/// One annotated palm image: three labeled principal lines plus the
/// pixel extent they were labeled at.
#[derive(Clone, Debug)]
pub struct Annotation {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    lines: [LinePoints; 3],
}

impl Annotation {
    /// Build from already-normalized lines. Lines are stored sorted by
    /// line index; the three indices must be distinct.
    pub fn new(
        image_id: String,
        width: u32,
        height: u32,
        mut lines: [LinePoints; 3],
    ) -> Result<Self, CreaseFitError> {
        if width < 2 || height < 2 {
            return Err(CreaseFitError::InvalidDimensions { width, height });
        }
        lines.sort_by_key(|l| l.line_index);
        if lines[0].line_index == lines[1].line_index
            || lines[1].line_index == lines[2].line_index
        {
            return Err(CreaseFitError::DuplicateLineIndex);
        }
        Ok(Self {
            image_id,
            width,
            height,
            lines,
        })
    }

    /// Build from pixel-space points, normalizing x by (width−1) and y by
    /// (height−1). Lines are taken positionally as indices 1, 2, 3.
    pub fn from_pixels(
        image_id: String,
        width: u32,
        height: u32,
        pixel_lines: [Vec<[f64; 2]>; 3],
    ) -> Result<Self, CreaseFitError> {
        if width < 2 || height < 2 {
            return Err(CreaseFitError::InvalidDimensions { width, height });
        }
        let sx = f64::from(width - 1);
        let sy = f64::from(height - 1);
        let mut normalized: Vec<LinePoints> = Vec::with_capacity(3);
        for (i, pts) in pixel_lines.into_iter().enumerate() {
            let scaled = pts.iter().map(|p| [p[0] / sx, p[1] / sy]).collect();
            normalized.push(LinePoints::new(scaled, i as u8 + 1)?);
        }
        let lines: [LinePoints; 3] = normalized
            .try_into()
            .expect("exactly three lines collected");
        Self::new(image_id, width, height, lines)
    }

    pub fn lines(&self) -> &[LinePoints; 3] {
        &self.lines
    }
}

/// Result of fitting one line: the coefficients and the residual
/// 2-norm `‖Xa − y‖₂` of the solve.
#[derive(Clone, Copy, Debug)]
pub struct PolynomialFit {
    pub coefficients: CoefficientVector,
    pub residual_norm: f64,
}

/// One fitted line of an annotation, with its abscissa span.
#[derive(Clone, Copy, Debug)]
pub struct FittedLine {
    pub coefficients: CoefficientVector,
    pub residual_norm: f64,
    pub x_start: f64,
    pub x_end: f64,
}

/// All three lines of one annotation, ordered by line index.
#[derive(Clone, Debug)]
pub struct FittedAnnotation {
    pub image_id: String,
    pub lines: [FittedLine; 3],
}

/// Least-squares degree-4 fit of one line via thin QR.
pub fn fit_polynomial(points: &LinePoints) -> Result<PolynomialFit, CreaseFitError> {
    let n = points.points().len();
    let design = DMatrix::from_fn(n, COEFF_COUNT, |r, c| points.points()[r][0].powi(c as i32));
    let rhs = DVector::from_fn(n, |r, _| points.points()[r][1]);

    let qr = design.clone().qr();
    let qty = qr.q().transpose() * &rhs;
    let solution = qr
        .r()
        .solve_upper_triangular(&qty)
        .ok_or(CreaseFitError::RankDeficient)?;

    let residual_norm = (&design * &solution - &rhs).norm();
    let mut coeffs = [0.0; COEFF_COUNT];
    coeffs.copy_from_slice(solution.as_slice());
    Ok(PolynomialFit {
        coefficients: CoefficientVector(coeffs),
        residual_norm,
    })
}

/// Fit every annotation in a corpus. Annotations are independent, so the
/// corpus is fitted in parallel; output order matches input order. Errors
/// are tagged with the offending image id.
pub fn fit_annotations(corpus: &[Annotation]) -> Result<Vec<FittedAnnotation>, CreaseFitError> {
    corpus
        .par_iter()
        .map(|ann| {
            let fit_line = |lp: &LinePoints| -> Result<FittedLine, CreaseFitError> {
                let fit = fit_polynomial(lp)?;
                let (x_start, x_end) = lp.span();
                Ok(FittedLine {
                    coefficients: fit.coefficients,
                    residual_norm: fit.residual_norm,
                    x_start,
                    x_end,
                })
            };
            let tag = |e: CreaseFitError| CreaseFitError::Annotation {
                image_id: ann.image_id.clone(),
                source: Box::new(e),
            };
            Ok([
                fit_line(&ann.lines[0]).map_err(tag)?,
                fit_line(&ann.lines[1]).map_err(tag)?,
                fit_line(&ann.lines[2]).map_err(tag)?,
            ])
            .map(|lines| FittedAnnotation {
                image_id: ann.image_id.clone(),
                lines,
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct AnnotationRecord {
    image_id: String,
    width: u32,
    height: u32,
    lines: [Vec<[f64; 2]>; 3],
}

/// Read an annotation corpus from a JSON-Lines file. Each record carries
/// pixel coordinates; normalization happens here.
pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>, CreaseFitError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut corpus = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: AnnotationRecord =
            serde_json::from_str(&line).map_err(|e| CreaseFitError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        corpus.push(Annotation::from_pixels(
            record.image_id,
            record.width,
            record.height,
            record.lines,
        )?);
    }
    Ok(corpus)
}

/// Write annotations back out as JSON-Lines (pixel coordinates).
pub fn write_annotations(path: &Path, corpus: &[Annotation]) -> Result<(), CreaseFitError> {
    let mut file = std::fs::File::create(path)?;
    for ann in corpus {
        let sx = f64::from(ann.width - 1);
        let sy = f64::from(ann.height - 1);
        let lines = [0, 1, 2].map(|i| {
            ann.lines[i]
                .points()
                .iter()
                .map(|p| [p[0] * sx, p[1] * sy])
                .collect::<Vec<_>>()
        });
        let record = AnnotationRecord {
            image_id: ann.image_id.clone(),
            width: ann.width,
            height: ann.height,
            lines,
        };
        serde_json::to_writer(&mut file, &record).map_err(|e| CreaseFitError::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(file)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line_on(coeffs: [f64; 5], xs: &[f64]) -> LinePoints {
        let c = CoefficientVector(coeffs);
        let pts = xs.iter().map(|&x| [x, c.evaluate(x)]).collect();
        LinePoints::new(pts, 1).unwrap()
    }

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn zero_function_fits_to_zero() {
        let fit = fit_polynomial(&line_on([0.0; 5], &grid(20))).unwrap();
        for c in fit.coefficients.0 {
            assert_abs_diff_eq!(c, 0.0, epsilon = 1e-12);
        }
        assert!(fit.residual_norm <= 1e-12);
    }

    #[test]
    fn quartic_monomial_recovered() {
        let fit = fit_polynomial(&line_on([0.0, 0.0, 0.0, 0.0, 1.0], &grid(10))).unwrap();
        let expected = [0.0, 0.0, 0.0, 0.0, 1.0];
        for (got, want) in fit.coefficients.0.iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
    }

    // Frozen oracle: 50 noisy samples of a known quartic; the expected
    // coefficients come from an independent normal-equations solve
    // (X^T X)^{-1} X^T y computed outside this codebase.
    #[test]
    fn noisy_fit_matches_normal_equations_oracle() {
        let (xs, ys, expected) = noisy_quartic_case();
        let pts: Vec<[f64; 2]> = xs.iter().zip(&ys).map(|(&x, &y)| [x, y]).collect();
        // y values stray slightly below 0; shift into the unit square and
        // compensate a0 (the fit is affine-equivariant in y).
        let shift = 0.1;
        let pts: Vec<[f64; 2]> = pts.iter().map(|p| [p[0], p[1] * 0.5 + shift]).collect();
        let lp = LinePoints::new(pts, 1).unwrap();
        let fit = fit_polynomial(&lp).unwrap();
        let mut want = expected.map(|c| c * 0.5);
        want[0] += shift;
        for (got, want) in fit.coefficients.0.iter().zip(want) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-6);
        }
    }

    pub(crate) fn noisy_quartic_case() -> (Vec<f64>, Vec<f64>, [f64; 5]) {
        let xs = vec![
            0.00462964332838578,
            0.02387228912803563,
            0.07088178423015679,
            0.07872553376199898,
            0.07903431709755182,
            0.10538567974837565,
            0.1422318152800518,
            0.16961924970704834,
            0.18082381369685463,
            0.18478707867662902,
            0.20634391138553032,
            0.21315734573396772,
            0.21432320123825765,
            0.22835056975573742,
            0.24520427065826578,
            0.2642054399404685,
            0.26806286956762926,
            0.2683653259749784,
            0.27424500425528053,
            0.27804139974201525,
            0.28631831254261475,
            0.3094520308816917,
            0.3253496550827225,
            0.3487725784276132,
            0.35964689168935093,
            0.37165898082652515,
            0.4427255670928353,
            0.4651191994088223,
            0.46720881382534096,
            0.4680190469346087,
            0.48724486105228537,
            0.5538320422201747,
            0.5657310510258305,
            0.5887593155397302,
            0.5968223667041186,
            0.6168075138237781,
            0.6758313379812818,
            0.6816540519843152,
            0.7737669316985375,
            0.7994284384514969,
            0.7994660967748332,
            0.8071819864678583,
            0.8338970309289541,
            0.8749578401262239,
            0.8889420380314923,
            0.8982273343115446,
            0.9054749040409369,
            0.964930208280478,
            0.9756221976285376,
            0.9958020988654668,
        ];
        let ys = vec![
            0.2831889946929129,
            0.2755808374211,
            0.22512174301681936,
            0.2060871337413105,
            0.20853471163839013,
            0.19268965509530997,
            0.15290978292917234,
            0.11959753276002116,
            0.09283426111633815,
            0.09712381685126469,
            0.08333112416360294,
            0.06893942346747173,
            0.06389914108074406,
            0.0498354103102146,
            0.03672741775274972,
            0.02088502192246029,
            0.02006935235837663,
            0.03580210113509905,
            0.01181792143863903,
            0.02582560167943893,
            0.01502380231989087,
            -0.00372449102105471,
            -0.02335794526711004,
            -0.03267917663472613,
            -0.01370705645966635,
            -0.03777488514253385,
            -0.0510489917278674,
            -0.04974237113197894,
            -0.04565624787181556,
            -0.05851846072568113,
            -0.05936733768890295,
            -0.02366312378326622,
            -0.01659356241355782,
            0.0150295110069688,
            0.0175602491088444,
            0.04193614407785466,
            0.13606395387930367,
            0.1584283582338789,
            0.3823309785566445,
            0.47230661836226767,
            0.4860803323989622,
            0.5051048291128666,
            0.617743005917608,
            0.7976736665465046,
            0.8775006463844273,
            0.9317440263609778,
            0.9545203266202046,
            1.3345378818336509,
            1.421397041734424,
            1.589964140381119,
        ];
        let expected = [
            0.3023876527990728,
            -1.2490763997996681,
            0.7788927092309634,
            -0.49111156409927614,
            2.2659183294895424,
        ];
        (xs, ys, expected)
    }

    #[test]
    fn too_few_points_rejected() {
        let pts = vec![[0.0, 0.0], [0.25, 0.1], [0.5, 0.2], [0.75, 0.3]];
        assert!(matches!(
            LinePoints::new(pts, 1),
            Err(CreaseFitError::FewerThanFivePoints { got: 4 })
        ));
    }

    #[test]
    fn duplicate_abscissa_rejected() {
        let pts = vec![[0.0, 0.0], [0.25, 0.1], [0.25, 0.2], [0.5, 0.3], [1.0, 0.4]];
        assert!(matches!(
            LinePoints::new(pts, 1),
            Err(CreaseFitError::DuplicateAbscissa { .. })
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let pts = vec![
            [0.0, 0.0],
            [0.2, f64::NAN],
            [0.4, 0.1],
            [0.6, 0.2],
            [0.8, 0.3],
        ];
        assert!(matches!(
            LinePoints::new(pts, 1),
            Err(CreaseFitError::NonFiniteInput)
        ));
    }

    #[test]
    fn out_of_range_rejected() {
        let pts = vec![[0.0, 0.0], [0.2, 1.5], [0.4, 0.1], [0.6, 0.2], [0.8, 0.3]];
        assert!(matches!(
            LinePoints::new(pts, 1),
            Err(CreaseFitError::OutOfRange { .. })
        ));
    }

    #[test]
    fn fit_invariant_under_point_permutation() {
        let xs = grid(17);
        let base = line_on([0.2, 0.3, -0.4, 0.1, 0.05], &xs);
        let mut reversed: Vec<[f64; 2]> = base.points().to_vec();
        reversed.reverse();
        let permuted = LinePoints::new(reversed, 1).unwrap();
        let a = fit_polynomial(&base).unwrap().coefficients.0;
        let b = fit_polynomial(&permuted).unwrap().coefficients.0;
        for (x, y) in a.iter().zip(b) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn point_on_fitted_curve_leaves_coefficients() {
        let xs = grid(12);
        let base = line_on([0.3, 0.1, -0.2, 0.0, 0.1], &xs);
        let fit = fit_polynomial(&base).unwrap();
        let mut pts = base.points().to_vec();
        let x_new = 0.123_456_789;
        pts.push([x_new, fit.coefficients.evaluate(x_new)]);
        let extended = LinePoints::new(pts, 1).unwrap();
        let refit = fit_polynomial(&extended).unwrap();
        for (a, b) in fit.coefficients.0.iter().zip(refit.coefficients.0) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn empty_corpus_fits_to_empty() {
        assert!(fit_annotations(&[]).unwrap().is_empty());
    }

    #[test]
    fn corpus_fit_recovers_known_lines_and_spans() {
        let coeffs = [
            [0.2, 0.1, 0.0, 0.0, 0.0],
            [0.5, -0.1, 0.2, 0.0, 0.0],
            [0.7, 0.05, 0.0, 0.1, 0.0],
        ];
        let xs: Vec<f64> = (0..9).map(|i| 0.1 + 0.1 * i as f64).collect();
        let lines = [0, 1, 2].map(|i| {
            let c = CoefficientVector(coeffs[i]);
            let pts = xs.iter().map(|&x| [x, c.evaluate(x)]).collect();
            LinePoints::new(pts, i as u8 + 1).unwrap()
        });
        let ann = Annotation::new("img0".into(), 128, 128, lines).unwrap();
        let fits = fit_annotations(std::slice::from_ref(&ann)).unwrap();
        assert_eq!(fits.len(), 1);
        for (i, line) in fits[0].lines.iter().enumerate() {
            for (got, want) in line.coefficients.0.iter().zip(coeffs[i]) {
                assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
            }
            assert_abs_diff_eq!(line.x_start, 0.1, epsilon = 1e-12);
            assert_abs_diff_eq!(line.x_end, 0.9, epsilon = 1e-12);
        }
    }

    #[test]
    fn corpus_error_carries_image_id() {
        // Five collinear x values after normalization collapse to the same
        // abscissa only if the raw pixels collide; craft a duplicate.
        let mut pts = vec![[0.0, 10.0], [10.0, 12.0], [20.0, 14.0], [30.0, 16.0]];
        pts.push([30.0, 18.0]);
        let err = Annotation::from_pixels("bad_img".into(), 64, 64, [
            pts,
            vec![[0.0, 20.0], [10.0, 21.0], [20.0, 22.0], [30.0, 23.0], [40.0, 24.0]],
            vec![[0.0, 30.0], [10.0, 31.0], [20.0, 32.0], [30.0, 33.0], [40.0, 34.0]],
        ])
        .unwrap_err();
        assert!(matches!(err, CreaseFitError::DuplicateAbscissa { .. }));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ann.jsonl");
        let xs: Vec<f64> = (0..7).map(|i| 5.0 + 10.0 * i as f64).collect();
        let lines = [0u8, 1, 2].map(|i| {
            xs.iter()
                .map(|&x| [x, 20.0 + 15.0 * f64::from(i) + x * 0.1])
                .collect::<Vec<_>>()
        });
        let ann =
            Annotation::from_pixels("img_rt".into(), 128, 128, lines).unwrap();
        write_annotations(&path, std::slice::from_ref(&ann)).unwrap();
        let back = read_annotations(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].image_id, "img_rt");
        for (a, b) in ann.lines()[0].points().iter().zip(back[0].lines()[0].points()) {
            assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-12);
            assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-12);
        }
    }
}
