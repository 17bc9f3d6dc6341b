//! Monte-Carlo estimate of the thermal intensity correlation.
//!
//! Each realization is a delta-correlated circular Gaussian field on the
//! source grid, masked by the aperture and propagated to the detector row.
//! The estimator is
//!
//! ```text
//! g2(x1, x2) = <I(x1) I(x2)> / (<I(x1)> <I(x2)>)
//! ```
//!
//! which for Gaussian fields equals `1 + |g1(x1, x2)|^2`.
//!
//! Results are bit-reproducible for a given seed regardless of the worker
//! count: realization `r` always draws from substream `r`, and every
//! accumulator cell adds realizations in index order.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aperture, OpticalConfig};
use crate::propagate::FraunhoferKernel;
use crate::rng::{substream, DOMAIN_SOURCE};
use crate::surface::{Axis, CorrelationSurface, Normalization, Provenance, SourceKind};

/// Per-cell standard errors, present when variance recording is on.
type StdErr = Option<Vec<f64>>;

/// Realizations processed per parallel batch.
const BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_realizations: usize,
    pub rng_seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    pub record_variance: bool,
    /// Also estimate `|g1|^2` from the same fields.
    pub record_first_order: bool,
}

impl EnsembleConfig {
    pub fn new(n_realizations: usize, rng_seed: u64) -> Self {
        Self {
            n_realizations,
            rng_seed,
            workers: 0,
            record_variance: false,
            record_first_order: false,
        }
    }

    pub fn with_workers(self, workers: usize) -> Self {
        Self { workers, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(Error::InvalidEnsemble(
                "n_realizations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One source-plane realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleField {
    pub samples: Vec<Complex64>,
    pub realization_index: u64,
}

/// Draws realization `realization_index` of the thermal source: independent
/// `N(0,1) + i N(0,1)` per sample, multiplied by `T(x')`.
pub fn sample_thermal_source(
    aperture: &Aperture,
    config: &OpticalConfig,
    realization_index: u64,
    seed: u64,
) -> SpeckleField {
    let src = config.source();
    let mut rng = substream(seed, DOMAIN_SOURCE, realization_index);
    let samples = (0..src.n_samples)
        .map(|j| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let t = aperture.transmission(src.coord(j));
            if t == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(re * t, im * t)
            }
        })
        .collect();
    SpeckleField {
        samples,
        realization_index,
    }
}

/// Expected per-pixel intensity `2 sum_j T_j^2 dx'^2 * pitch` of the
/// thermal ensemble; flat across the detector.
pub fn expected_pixel_intensity(aperture: &Aperture, config: &OpticalConfig) -> f64 {
    let src = config.source();
    let dxp = src.spacing();
    let open: f64 = (0..src.n_samples)
        .map(|j| aperture.transmission(src.coord(j)).powi(2))
        .sum();
    2.0 * open * dxp * dxp * config.detector().pixel_pitch
}

/// Detector field and pixel intensities of one realization.
pub(crate) struct Realization {
    pub field: Vec<Complex64>,
    pub intensity: Vec<f64>,
}

/// Shared per-realization pipeline: draw, propagate, integrate over pixels
/// with the midpoint rule.
pub(crate) struct RealizationSource<'a> {
    aperture: &'a Aperture,
    config: &'a OpticalConfig,
    kernel: FraunhoferKernel,
    seed: u64,
}

impl<'a> RealizationSource<'a> {
    pub fn new(aperture: &'a Aperture, config: &'a OpticalConfig, seed: u64) -> Self {
        Self {
            aperture,
            config,
            kernel: FraunhoferKernel::new(config),
            seed,
        }
    }

    pub fn realize(&self, index: u64) -> Realization {
        let speckle = sample_thermal_source(self.aperture, self.config, index, self.seed);
        let field = self.kernel.apply(&speckle.samples);
        let pitch = self.config.detector().pixel_pitch;
        let intensity = field.iter().map(|e| e.norm_sqr() * pitch).collect();
        Realization { field, intensity }
    }

    /// Realizations `range` computed in parallel, returned in index order.
    pub fn batch(&self, range: std::ops::Range<usize>) -> Vec<Realization> {
        range
            .into_par_iter()
            .map(|r| self.realize(r as u64))
            .collect()
    }
}

/// Runs `f` on a pool with `workers` threads (0 = global pool).
pub(crate) fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidEnsemble(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Neumaier-compensated running sums, one per cell.
#[derive(Debug, Clone)]
struct CompensatedSums {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

#[inline]
fn neumaier(sum: &mut f64, comp: &mut f64, v: f64) {
    let t = *sum + v;
    if sum.abs() >= v.abs() {
        *comp += (*sum - t) + v;
    } else {
        *comp += (v - t) + *sum;
    }
    *sum = t;
}

impl CompensatedSums {
    fn zeros(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            comp: vec![0.0; n],
        }
    }

    fn add_row(&mut self, row: &[f64]) {
        for ((s, c), &v) in self.sum.iter_mut().zip(self.comp.iter_mut()).zip(row) {
            neumaier(s, c, v);
        }
    }

    fn value(&self, i: usize) -> f64 {
        self.sum[i] + self.comp[i]
    }

    /// Adds `left[r][i] * right[r][j]` (or its square) into cell `(i, j)`
    /// for every `r` in order, parallel over `i`.
    fn add_outer(&mut self, n2: usize, left: &[&[f64]], right: &[&[f64]], squared: bool) {
        self.sum
            .par_chunks_mut(n2)
            .zip(self.comp.par_chunks_mut(n2))
            .enumerate()
            .for_each(|(i, (sum, comp))| {
                for (l, r) in left.iter().zip(right) {
                    let a = l[i];
                    for ((s, c), &b) in sum.iter_mut().zip(comp.iter_mut()).zip(r.iter()) {
                        let p = a * b;
                        neumaier(s, c, if squared { p * p } else { p });
                    }
                }
            });
    }
}

/// Ordered accumulator of intensity products for two detector rows.
pub(crate) struct CorrelationAccumulator {
    n1: usize,
    n2: usize,
    count: usize,
    s1: CompensatedSums,
    s2: CompensatedSums,
    s12: CompensatedSums,
    s12_sq: Option<CompensatedSums>,
}

impl CorrelationAccumulator {
    pub fn new(n1: usize, n2: usize, record_variance: bool) -> Self {
        Self {
            n1,
            n2,
            count: 0,
            s1: CompensatedSums::zeros(n1),
            s2: CompensatedSums::zeros(n2),
            s12: CompensatedSums::zeros(n1 * n2),
            s12_sq: record_variance.then(|| CompensatedSums::zeros(n1 * n2)),
        }
    }

    /// Adds a batch of row pairs, in order.
    pub fn push_batch(&mut self, rows1: &[&[f64]], rows2: &[&[f64]]) {
        debug_assert_eq!(rows1.len(), rows2.len());
        for (a, b) in rows1.iter().zip(rows2) {
            self.s1.add_row(a);
            self.s2.add_row(b);
        }
        self.s12.add_outer(self.n2, rows1, rows2, false);
        if let Some(sq) = self.s12_sq.as_mut() {
            sq.add_outer(self.n2, rows1, rows2, true);
        }
        self.count += rows1.len();
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn means(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.count as f64;
        (
            (0..self.n1).map(|i| self.s1.value(i) / n).collect(),
            (0..self.n2).map(|i| self.s2.value(i) / n).collect(),
        )
    }

    /// Normalized `g2` values plus optional standard errors.
    pub fn finish(&self) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, StdErr)> {
        let (m1, m2) = self.means();
        if let Some(p) = m1.iter().position(|&m| m <= 0.0) {
            return Err(Error::ZeroIntensity { pixel: p });
        }
        if let Some(p) = m2.iter().position(|&m| m <= 0.0) {
            return Err(Error::ZeroIntensity { pixel: p });
        }
        let n = self.count as f64;
        let mut g2 = vec![0.0; self.n1 * self.n2];
        let mut stderr = self.s12_sq.as_ref().map(|_| vec![0.0; self.n1 * self.n2]);
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let k = i * self.n2 + j;
                let m12 = self.s12.value(k) / n;
                let norm = m1[i] * m2[j];
                g2[k] = m12 / norm;
                if let (Some(se), Some(sq)) = (stderr.as_mut(), self.s12_sq.as_ref()) {
                    let var = (sq.value(k) / n - m12 * m12).max(0.0);
                    se[k] = (var / n).sqrt() / norm;
                }
            }
        }
        Ok((g2, m1, m2, stderr))
    }

    pub fn into_surface(
        self,
        axis_x1: Axis,
        axis_x2: Axis,
    ) -> Result<(CorrelationSurface, Vec<f64>, Vec<f64>, StdErr)> {
        let (g2, m1, m2, stderr) = self.finish()?;
        let surface = CorrelationSurface::new(
            g2,
            axis_x1,
            axis_x2,
            Normalization::Raw,
            Provenance::MonteCarlo,
            SourceKind::Thermal,
        )?;
        Ok((surface, m1, m2, stderr))
    }
}

/// Ensemble estimate of the normalized thermal correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Estimate {
    pub mean_intensity_1: Vec<f64>,
    pub mean_intensity_2: Vec<f64>,
    /// Raw `g2` surface (`provenance = monte_carlo`).
    pub correlation: CorrelationSurface,
    pub n_used: usize,
    pub stderr: Option<Vec<f64>>,
    /// `|g1(x1, x2)|^2` from the same ensemble, when requested.
    pub first_order: Option<Vec<f64>>,
}

impl G2Estimate {
    /// `g2 - (1 + |g1|^2)` per cell; `None` unless `|g1|^2` was recorded.
    pub fn siegert_residual(&self) -> Option<Vec<f64>> {
        let g1 = self.first_order.as_ref()?;
        Some(
            self.correlation
                .values
                .iter()
                .zip(g1)
                .map(|(g2, g1sq)| g2 - 1.0 - g1sq)
                .collect(),
        )
    }
}

/// Accumulates `<I1 I2>`, `<I1>`, `<I2>` over `ensemble.n_realizations`
/// independent speckle realizations and normalizes.
pub fn estimate_g2(
    aperture: &Aperture,
    config: &OpticalConfig,
    ensemble: &EnsembleConfig,
) -> Result<G2Estimate> {
    ensemble.validate()?;
    with_workers(ensemble.workers, || {
        estimate_g2_inner(aperture, config, ensemble)
    })?
}

fn estimate_g2_inner(
    aperture: &Aperture,
    config: &OpticalConfig,
    ensemble: &EnsembleConfig,
) -> Result<G2Estimate> {
    let n = config.detector().n_pixels;
    let source = RealizationSource::new(aperture, config, ensemble.rng_seed);
    let mut acc = CorrelationAccumulator::new(n, n, ensemble.record_variance);
    let mut g1 = ensemble
        .record_first_order
        .then(|| (CompensatedSums::zeros(n * n), CompensatedSums::zeros(n * n)));

    let mut start = 0;
    while start < ensemble.n_realizations {
        let end = (start + BATCH).min(ensemble.n_realizations);
        let batch = source.batch(start..end);
        let rows: Vec<&[f64]> = batch.iter().map(|r| r.intensity.as_slice()).collect();
        acc.push_batch(&rows, &rows);
        if let Some((re, im)) = g1.as_mut() {
            accumulate_first_order(re, im, n, &batch);
        }
        start = end;
    }

    let axis = Axis::from_detector(config.detector());
    let count = acc.count();
    let (correlation, m1, m2, stderr) = acc.into_surface(axis, axis)?;
    let first_order = g1.map(|(re, im)| {
        let pitch = config.detector().pixel_pitch;
        let nf = count as f64;
        (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                // field moments are per unit pitch; intensities carry one pitch factor
                let c = Complex64::new(re.value(k), im.value(k)) * (pitch / nf);
                c.norm_sqr() / (m1[i] * m2[j])
            })
            .collect()
    });
    Ok(G2Estimate {
        mean_intensity_1: m1,
        mean_intensity_2: m2,
        correlation,
        n_used: count,
        stderr,
        first_order,
    })
}

fn accumulate_first_order(
    re: &mut CompensatedSums,
    im: &mut CompensatedSums,
    n: usize,
    batch: &[Realization],
) {
    re.sum
        .par_chunks_mut(n)
        .zip(re.comp.par_chunks_mut(n))
        .zip(im.sum.par_chunks_mut(n))
        .zip(im.comp.par_chunks_mut(n))
        .enumerate()
        .for_each(|(i, (((rs, rc), is), ic))| {
            for r in batch {
                let a = r.field[i].conj();
                for j in 0..n {
                    let p = a * r.field[j];
                    neumaier(&mut rs[j], &mut rc[j], p.re);
                    neumaier(&mut is[j], &mut ic[j], p.im);
                }
            }
        });
}
