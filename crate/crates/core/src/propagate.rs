//! Discretized Fraunhofer propagation from the source row to the detector row.
//!
//! ```text
//! E(x) = sum_j exp(-i (k/z) x x'_j) * field(x'_j) * dx'
//! ```
//!
//! The constant prefactor `exp(ikz)/(i lambda z)` is dropped. The `dx'`
//! weight is kept so that refining the source grid converges instead of
//! rescaling the result.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::geometry::OpticalConfig;

/// Precomputed direct-transform kernel, `n_det x n_src`, stored by source
/// column.
#[derive(Clone)]
pub struct FraunhoferKernel {
    n_src: usize,
    n_det: usize,
    columns: Vec<Complex64>,
}

impl FraunhoferKernel {
    pub fn new(config: &OpticalConfig) -> Self {
        let src = config.source();
        let det = config.detector();
        let dxp = src.spacing();
        let scale = config.wavenumber() / config.distance();
        let xs = det.coords();
        let mut columns = Vec::with_capacity(src.n_samples * det.n_pixels);
        for j in 0..src.n_samples {
            let xp = src.coord(j);
            columns.extend(
                xs.iter()
                    .map(|&x| Complex64::from_polar(dxp, -scale * x * xp)),
            );
        }
        Self {
            n_src: src.n_samples,
            n_det: det.n_pixels,
            columns,
        }
    }

    pub fn n_detector(&self) -> usize {
        self.n_det
    }

    /// Writes the detector field for `field` into `out`. Zero source samples
    /// are skipped.
    pub fn apply_into(&self, field: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(
            field.len(),
            self.n_src,
            "field length must match the source grid"
        );
        assert_eq!(
            out.len(),
            self.n_det,
            "output length must match the detector grid"
        );
        out.fill(Complex64::new(0.0, 0.0));
        for (j, &f) in field.iter().enumerate() {
            if f.re == 0.0 && f.im == 0.0 {
                continue;
            }
            let col = &self.columns[j * self.n_det..(j + 1) * self.n_det];
            for (o, &k) in out.iter_mut().zip(col) {
                *o += k * f;
            }
        }
    }

    pub fn apply(&self, field: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_det];
        self.apply_into(field, &mut out);
        out
    }
}

/// FFT evaluation of the same sum, valid when `(k/z) * pitch * dx' = 2 pi / N`
/// for an integer `N >= n_src`.
pub struct FftPropagator {
    fft: Arc<dyn Fft<f64>>,
    n_fft: usize,
    n_det: usize,
    dxp: f64,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
}

impl FftPropagator {
    /// Detector pitch that puts the detector on the length-`n_fft` DFT comb.
    pub fn aligned_pitch(wavelength: f64, distance: f64, source_spacing: f64, n_fft: usize) -> f64 {
        wavelength * distance / (n_fft as f64 * source_spacing)
    }

    pub fn new(config: &OpticalConfig) -> Result<Self> {
        let src = config.source();
        let det = config.detector();
        let dxp = src.spacing();
        let ratio = config.wavelength() * config.distance() / (det.pixel_pitch * dxp);
        let n_fft = ratio.round();
        if (ratio - n_fft).abs() > 1e-9 * ratio || (n_fft as usize) < src.n_samples {
            return Err(Error::InvalidConfig(format!(
                "detector pitch is not on a DFT comb (lambda z / (pitch dx') = {ratio})"
            )));
        }
        let n_fft = n_fft as usize;
        let scale = config.wavenumber() / config.distance();
        let x0 = det.coord(0);
        let x0p = src.coord(0);
        let pre = (0..src.n_samples)
            .map(|j| Complex64::from_polar(1.0, -scale * x0 * src.coord(j)))
            .collect();
        let post = (0..det.n_pixels)
            .map(|m| Complex64::from_polar(dxp, -scale * (det.coord(m) - x0) * x0p))
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Ok(Self {
            fft,
            n_fft,
            n_det: det.n_pixels,
            dxp,
            pre,
            post,
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn source_spacing(&self) -> f64 {
        self.dxp
    }

    pub fn apply(&self, field: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(
            field.len(),
            self.pre.len(),
            "field length must match the source grid"
        );
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        for ((b, &f), &p) in buf.iter_mut().zip(field).zip(&self.pre) {
            *b = f * p;
        }
        self.fft.process(&mut buf);
        (0..self.n_det)
            .map(|m| buf[m % self.n_fft] * self.post[m])
            .collect()
    }
}

/// Propagates one source-plane field to the detector grid of `config`.
pub fn fraunhofer_propagate(field: &[Complex64], config: &OpticalConfig) -> Result<Vec<Complex64>> {
    if field.len() != config.source().n_samples {
        return Err(Error::InvalidConfig(format!(
            "field has {} samples, source grid has {}",
            field.len(),
            config.source().n_samples
        )));
    }
    Ok(FraunhoferKernel::new(config).apply(field))
}
