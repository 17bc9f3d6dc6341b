//! Peak detection, fringe spacing and visibility on cross-sections.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scanline::CrossSection;
use crate::surface::{Normalization, Provenance};

pub const DEFAULT_MIN_PROMINENCE: f64 = 0.2;
/// Width of the default analysis window in predicted fringe periods.
pub const DEFAULT_WINDOW_PERIODS: f64 = 5.0;
pub const MIN_SECTION_SAMPLES: usize = 16;
/// Sections whose range is below this fraction of their magnitude are flat.
const FLAT_RELATIVE_RANGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakOptions {
    /// Required prominence as a fraction of the (windowed) value range.
    pub min_prominence: f64,
    /// Full width of the analysis window, centered on the zeroth-order peak
    /// (the global maximum). `None` analyses the whole section.
    pub window: Option<f64>,
    /// Constant subtracted before analysis. `None` picks 1 for raw
    /// Monte-Carlo `g2` sections and 0 otherwise.
    pub background: Option<f64>,
    /// Classical spacing used to express `resolution_factor`.
    pub classical_spacing: Option<f64>,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self {
            min_prominence: DEFAULT_MIN_PROMINENCE,
            window: None,
            background: None,
            classical_spacing: None,
        }
    }
}

impl PeakOptions {
    /// Default window of five predicted periods.
    pub fn for_period(predicted_spacing: f64) -> Self {
        Self {
            window: Some(DEFAULT_WINDOW_PERIODS * predicted_spacing),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeReport {
    pub peak_positions: Vec<f64>,
    pub mean_spacing: f64,
    pub spacing_std: f64,
    pub visibility: f64,
    pub resolution_factor: Option<f64>,
    pub background_level: f64,
    pub n_peaks: usize,
}

fn default_background(section: &CrossSection) -> f64 {
    if section.provenance == Provenance::MonteCarlo && section.normalization == Normalization::Raw {
        1.0
    } else {
        0.0
    }
}

/// Finds fringe maxima in `section` and summarizes their spacing.
pub fn detect_peaks(section: &CrossSection, options: &PeakOptions) -> Result<FringeReport> {
    let background = options
        .background
        .unwrap_or_else(|| default_background(section));
    detect_peaks_in(
        &section.parameter,
        &section.values,
        &PeakOptions {
            background: Some(background),
            ..*options
        },
    )
}

/// [`detect_peaks`] on bare arrays. `x` must be strictly increasing.
pub fn detect_peaks_in(x: &[f64], y: &[f64], options: &PeakOptions) -> Result<FringeReport> {
    if x.len() != y.len() {
        return Err(Error::InvalidAnalysis(format!(
            "{} positions but {} values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < MIN_SECTION_SAMPLES {
        return Err(Error::InvalidAnalysis(format!(
            "section has {} samples, need at least {MIN_SECTION_SAMPLES}",
            x.len()
        )));
    }
    if !(options.min_prominence > 0.0 && options.min_prominence < 1.0) {
        return Err(Error::InvalidAnalysis(format!(
            "min_prominence {} is outside (0, 1)",
            options.min_prominence
        )));
    }
    if x.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidAnalysis(
            "positions must be strictly increasing".into(),
        ));
    }
    let background = options.background.unwrap_or(0.0);
    let values: Vec<f64> = y.iter().map(|v| v - background).collect();

    let (lo, hi) = match options.window {
        Some(w) => window_bounds(x, &values, w)?,
        None => (0, x.len()),
    };
    let xs = &x[lo..hi];
    let ys = &values[lo..hi];
    let (min, max) = min_max(ys);
    let threshold = options.min_prominence * (max - min);
    let flat = max - min <= FLAT_RELATIVE_RANGE * max.abs().max(min.abs());

    let mut peaks = Vec::new();
    for (start, end) in local_maxima(ys) {
        if flat || prominence(ys, start, end) < threshold {
            continue;
        }
        let pos = if start == end {
            parabolic_vertex(
                (xs[start - 1], ys[start - 1]),
                (xs[start], ys[start]),
                (xs[start + 1], ys[start + 1]),
            )
        } else {
            0.5 * (xs[start] + xs[end])
        };
        peaks.push(pos);
    }

    let (raw_min, raw_max) = min_max(&y[lo..hi]);
    let visibility = visibility_of(raw_min, raw_max);
    if peaks.len() < 2 {
        return Err(Error::TooFewPeaks { peaks });
    }
    let gaps: Vec<f64> = peaks.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_spacing = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let spacing_std =
        (gaps.iter().map(|g| (g - mean_spacing).powi(2)).sum::<f64>() / gaps.len() as f64).sqrt();
    Ok(FringeReport {
        n_peaks: peaks.len(),
        peak_positions: peaks,
        mean_spacing,
        spacing_std,
        visibility,
        resolution_factor: options.classical_spacing.map(|c| mean_spacing / c),
        background_level: background,
    })
}

/// `(I_max - I_min) / (I_max + I_min)` over a window of full width `window`
/// centered on the middle of the section.
pub fn measure_visibility(section: &CrossSection, window: f64) -> Result<f64> {
    let x = &section.parameter;
    if x.is_empty() {
        return Err(Error::InvalidAnalysis("empty section".into()));
    }
    let (first, last) = (x[0], x[x.len() - 1]);
    let centre = 0.5 * (first + last);
    let (a, b) = (centre - 0.5 * window, centre + 0.5 * window);
    let slack = 1e-9 * (last - first).abs().max(f64::MIN_POSITIVE);
    if !(window > 0.0) || a < first - slack || b > last + slack {
        return Err(Error::InvalidAnalysis(format!(
            "window [{a:e}, {b:e}] is outside the section [{first:e}, {last:e}]"
        )));
    }
    let inside: Vec<f64> = x
        .iter()
        .zip(&section.values)
        .filter(|(p, _)| **p >= a - slack && **p <= b + slack)
        .map(|(_, v)| *v)
        .collect();
    let (min, max) = min_max(&inside);
    Ok(visibility_of(min, max))
}

fn visibility_of(min: f64, max: f64) -> f64 {
    if max + min == 0.0 {
        0.0
    } else {
        (max - min) / (max + min)
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| {
            (lo.min(a), hi.max(a))
        })
}

/// Index range `[lo, hi)` of samples within `width / 2` of the global maximum.
fn window_bounds(x: &[f64], y: &[f64], width: f64) -> Result<(usize, usize)> {
    if !(width > 0.0) {
        return Err(Error::InvalidAnalysis(format!(
            "window width {width} must be positive"
        )));
    }
    let centre = x[argmax_midpoint(y)];
    let lo = x.partition_point(|&p| p < centre - 0.5 * width);
    let hi = x.partition_point(|&p| p <= centre + 0.5 * width);
    if hi - lo < 3 {
        return Err(Error::InvalidAnalysis(
            "analysis window holds fewer than 3 samples".into(),
        ));
    }
    Ok((lo, hi))
}

/// Index of the global maximum; ties resolve to the middle tied index.
fn argmax_midpoint(y: &[f64]) -> usize {
    let (_, max) = min_max(y);
    let tied: Vec<usize> = (0..y.len()).filter(|&i| y[i] == max).collect();
    tied[tied.len() / 2]
}

/// Interior local maxima as inclusive index runs; plateaus give one run.
fn local_maxima(y: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < y.len() {
        if y[i] > y[i - 1] {
            let mut end = i;
            while end + 1 < y.len() && y[end + 1] == y[i] {
                end += 1;
            }
            if end + 1 < y.len() && y[end + 1] < y[i] {
                out.push((i, end));
            }
            i = end + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Topographic prominence of the run `[start, end]`.
fn prominence(y: &[f64], start: usize, end: usize) -> f64 {
    let h = y[start];
    let mut left_min = h;
    let mut i = start;
    while i > 0 {
        i -= 1;
        if y[i] > h {
            break;
        }
        left_min = left_min.min(y[i]);
    }
    let mut right_min = h;
    let mut j = end;
    while j + 1 < y.len() {
        j += 1;
        if y[j] > h {
            break;
        }
        right_min = right_min.min(y[j]);
    }
    h - left_min.max(right_min)
}

/// Abscissa of the vertex of the parabola through three points, clamped
/// to their span.
fn parabolic_vertex(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> f64 {
    let a = p0.0 - p1.0;
    let b = p2.0 - p1.0;
    let d0 = p0.1 - p1.1;
    let d2 = p2.1 - p1.1;
    let q = (d0 / a - d2 / b) / (a - b);
    if !(q < 0.0) {
        return p1.0;
    }
    let p = d0 / a - q * a;
    p1.0 + (-p / (2.0 * q)).clamp(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scanline::ScanLine;
    use crate::surface::SourceKind;
    use std::f64::consts::PI;

    fn section(x: Vec<f64>, y: Vec<f64>) -> CrossSection {
        let line = ScanLine::affine(0.0, 0.0, x[0], x[x.len() - 1], x.len()).unwrap();
        CrossSection {
            parameter: x,
            values: y,
            source_kind: SourceKind::Thermal,
            scanline: line,
            provenance: Provenance::Analytic,
            normalization: Normalization::UnitPeak,
            excluded: 0,
        }
    }

    fn cos2(period: f64, n: usize, span: f64, phase: f64) -> CrossSection {
        let x: Vec<f64> = (0..n)
            .map(|i| -span + 2.0 * span * i as f64 / (n - 1) as f64)
            .collect();
        let y = x
            .iter()
            .map(|&v| (PI * v / period + phase).cos().powi(2))
            .collect();
        section(x, y)
    }

    #[test]
    fn synthetic_cos2_period_recovered() {
        let period = 0.37;
        let s = cos2(period, 401, 2.0, 0.3);
        let r = detect_peaks(&s, &PeakOptions::default()).unwrap();
        assert!(
            (r.mean_spacing - period).abs() < 1e-3 * period,
            "{}",
            r.mean_spacing
        );
        assert!(r.spacing_std < 1e-3 * period);
        assert_eq!(r.n_peaks, r.peak_positions.len());
        assert!(r.peak_positions.windows(2).all(|w| w[1] > w[0]));
        assert!((r.visibility - 1.0).abs() < 1e-3);
    }

    #[test]
    fn round_off_ripple_is_flat() {
        let x: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.5 + 1e-16 * (v * 2.1).sin()).collect();
        match detect_peaks_in(&x, &y, &PeakOptions::default()) {
            Err(Error::TooFewPeaks { peaks }) => assert!(peaks.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parabola_vertex_exact_for_quadratics() {
        let f = |x: f64| -3.0 * (x - 0.123).powi(2) + 2.0;
        let v = parabolic_vertex((0.0, f(0.0)), (0.1, f(0.1)), (0.25, f(0.25)));
        assert!((v - 0.123).abs() < 1e-12);
    }

    #[test]
    fn plateau_resolves_to_midpoint() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let mut y = vec![0.0; 20];
        y[4] = 1.0;
        y[5] = 1.0;
        y[6] = 1.0;
        y[14] = 1.0;
        let r = detect_peaks_in(&x, &y, &PeakOptions::default()).unwrap();
        assert_eq!(r.peak_positions[0], 5.0);
        assert_eq!(r.peak_positions[1], 14.0);
    }

    #[test]
    fn too_few_peaks_reports_what_was_found() {
        let x: Vec<f64> = (0..32).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| -(v - 10.0).powi(2)).collect();
        match detect_peaks_in(&x, &y, &PeakOptions::default()) {
            Err(Error::TooFewPeaks { peaks }) => {
                assert_eq!(peaks.len(), 1);
                assert!((peaks[0] - 10.0).abs() < 1e-9);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn short_sections_and_bad_prominence_rejected() {
        let s = cos2(0.5, 10, 2.0, 0.0);
        assert!(detect_peaks(&s, &PeakOptions::default()).is_err());
        let s = cos2(0.5, 100, 2.0, 0.0);
        for p in [0.0, 1.0, -0.2] {
            let o = PeakOptions {
                min_prominence: p,
                ..Default::default()
            };
            assert!(detect_peaks(&s, &o).is_err());
        }
    }

    #[test]
    fn small_ripples_ignored() {
        let mut s = cos2(1.0, 801, 3.5, 0.0);
        for (i, v) in s.values.iter_mut().enumerate() {
            *v += 0.02 * ((i as f64) * 1.7).sin();
        }
        let r = detect_peaks(&s, &PeakOptions::default()).unwrap();
        assert_eq!(r.n_peaks, 7);
    }

    #[test]
    fn window_centered_on_global_maximum() {
        // zeroth-order peak at 0.4, period 1
        let x: Vec<f64> = (0..1201).map(|i| -6.0 + 0.01 * i as f64).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| (PI * (v - 0.4)).cos().powi(2) * (-(v - 0.4).powi(2) / 50.0).exp())
            .collect();
        let opts = PeakOptions::for_period(1.0);
        let r = detect_peaks_in(&x, &y, &opts).unwrap();
        assert_eq!(r.n_peaks, 5);
        assert!((r.peak_positions[2] - 0.4).abs() < 1e-6);
    }

    #[test]
    fn visibility_cases() {
        let s = cos2(0.5, 401, 2.0, 0.0);
        assert!((measure_visibility(&s, 2.0).unwrap() - 1.0).abs() < 1e-3);
        let flat = section((0..40).map(|i| i as f64).collect(), vec![3.0; 40]);
        assert_eq!(measure_visibility(&flat, 10.0).unwrap(), 0.0);
        assert!(measure_visibility(&flat, 100.0).is_err());
        assert!(measure_visibility(&flat, 0.0).is_err());
        // g2 swinging between 1 and 2
        let bg = s.offset(1.0);
        assert!((measure_visibility(&bg, 2.0).unwrap() - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn monte_carlo_raw_sections_default_to_unit_background() {
        let mut s = cos2(0.5, 401, 2.0, 0.0).offset(1.0);
        s.provenance = Provenance::MonteCarlo;
        s.normalization = Normalization::Raw;
        let r = detect_peaks(&s, &PeakOptions::default()).unwrap();
        assert_eq!(r.background_level, 1.0);
        assert!((r.mean_spacing - 0.5).abs() < 1e-3 * 0.5);
    }

    #[test]
    fn resolution_factor_uses_classical_spacing() {
        let s = cos2(0.25, 401, 2.0, 0.0);
        let o = PeakOptions {
            classical_spacing: Some(0.5),
            ..Default::default()
        };
        let r = detect_peaks(&s, &o).unwrap();
        assert!((r.resolution_factor.unwrap() - 0.5).abs() < 1e-3);
    }
}
