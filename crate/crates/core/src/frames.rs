//! Synthetic two-camera pipeline.
//!
//! Both cameras see the same speckle realization per frame (ideal 50/50
//! beamsplitter). Pixel values are `|E|^2` at pixel centers times the pitch
//! (midpoint rule), optionally replaced by Poisson photon counts.
//!
//! # Binary frame-stack format (version 1, little endian)
//!
//! | offset | size | field                                   |
//! |--------|------|-----------------------------------------|
//! | 0      | 8    | magic `G2FRAMES`                        |
//! | 8      | 4    | version (u32) = 1                       |
//! | 12     | 4    | reserved, zero                          |
//! | 16     | 8    | frame count (u64)                       |
//! | 24     | 8    | pixels per frame (u64)                  |
//! | 32     | 8    | pixel pitch in meters (f64)             |
//! | 40     | 8    | seed (u64)                              |
//! | 48     | 32   | exposure tag, UTF-8, zero padded        |
//! | 80     | ...  | frames, `count * pixels` f64 row-major  |

use std::io::{Read, Write};

use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Aperture, OpticalConfig};
use crate::montecarlo::{
    expected_pixel_intensity, with_workers, CorrelationAccumulator, EnsembleConfig,
    RealizationSource,
};
use crate::rng::{substream, DOMAIN_NOISE_1, DOMAIN_NOISE_2};
use crate::surface::{Axis, CorrelationSurface};

pub const MAGIC: &[u8; 8] = b"G2FRAMES";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 80;
pub const TAG_LEN: usize = 32;

const BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    /// Poisson counts with this ensemble-mean photon number per pixel.
    Poisson {
        mean_photons_per_pixel: f64,
    },
}

/// A sequence of 1-D detector rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    data: Vec<f64>,
    n_pixels: usize,
    pub pixel_pitch: f64,
    pub exposure_tag: String,
    pub seed: u64,
}

impl FrameStack {
    pub fn new(
        data: Vec<f64>,
        n_pixels: usize,
        pixel_pitch: f64,
        exposure_tag: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        let exposure_tag = exposure_tag.into();
        if n_pixels == 0 || !data.len().is_multiple_of(n_pixels) {
            return Err(Error::Format {
                what: "frame stack",
                detail: format!("{} values do not split into rows of {n_pixels}", data.len()),
            });
        }
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Format {
                what: "frame stack",
                detail: format!("intensity {v} is negative or not finite"),
            });
        }
        if exposure_tag.len() > TAG_LEN {
            return Err(Error::Format {
                what: "frame stack",
                detail: format!("exposure tag longer than {TAG_LEN} bytes"),
            });
        }
        if !(pixel_pitch > 0.0 && pixel_pitch.is_finite()) {
            return Err(Error::Format {
                what: "frame stack",
                detail: format!("pixel pitch {pixel_pitch} must be positive"),
            });
        }
        Ok(Self {
            data,
            n_pixels,
            pixel_pitch,
            exposure_tag,
            seed,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / self.n_pixels
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_pixels..(i + 1) * self.n_pixels]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_pixels)
    }

    /// Cross-frame mean of each pixel.
    pub fn mean_profile(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.n_pixels];
        for f in self.frames() {
            for (a, v) in m.iter_mut().zip(f) {
                *a += v;
            }
        }
        let n = self.n_frames() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = [0u8; HEADER_LEN];
        header[..8].copy_from_slice(MAGIC);
        header[8..12].copy_from_slice(&VERSION.to_le_bytes());
        header[16..24].copy_from_slice(&(self.n_frames() as u64).to_le_bytes());
        header[24..32].copy_from_slice(&(self.n_pixels as u64).to_le_bytes());
        header[32..40].copy_from_slice(&self.pixel_pitch.to_le_bytes());
        header[40..48].copy_from_slice(&self.seed.to_le_bytes());
        header[48..48 + self.exposure_tag.len()].copy_from_slice(self.exposure_tag.as_bytes());
        w.write_all(&header)?;
        let mut buf = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let bad = |detail: String| Error::Format {
            what: "frame stack file",
            detail,
        };
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|e| bad(format!("short header: {e}")))?;
        if &header[..8] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n_frames = u64_at(16) as usize;
        let n_pixels = u64_at(24) as usize;
        let pitch = f64::from_le_bytes(header[32..40].try_into().unwrap());
        let seed = u64_at(40);
        let tag_bytes = &header[48..48 + TAG_LEN];
        let tag_end = tag_bytes.iter().position(|&b| b == 0).unwrap_or(TAG_LEN);
        let tag = std::str::from_utf8(&tag_bytes[..tag_end])
            .map_err(|_| bad("exposure tag is not UTF-8".into()))?
            .to_string();
        let total = n_frames
            .checked_mul(n_pixels)
            .and_then(|v| v.checked_mul(8))
            .ok_or_else(|| bad("frame count overflows".into()))?;
        let mut raw = Vec::new();
        r.read_to_end(&mut raw)?;
        if raw.len() != total {
            return Err(bad(format!(
                "expected {total} data bytes, found {}",
                raw.len()
            )));
        }
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(data, n_pixels, pitch, tag, seed)
    }

    /// One frame per line, comma separated; meant for small stacks.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for f in self.frames() {
            let line: Vec<String> = f.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Renders `ensemble.n_realizations` frame pairs.
pub fn synthesize_frames(
    aperture: &Aperture,
    config: &OpticalConfig,
    ensemble: &EnsembleConfig,
    noise: NoiseModel,
) -> Result<(FrameStack, FrameStack)> {
    if ensemble.n_realizations == 0 {
        return Err(Error::InvalidEnsemble(
            "n_realizations must be at least 1".into(),
        ));
    }
    if let NoiseModel::Poisson {
        mean_photons_per_pixel,
    } = noise
    {
        if !(mean_photons_per_pixel > 0.0 && mean_photons_per_pixel.is_finite()) {
            return Err(Error::InvalidEnsemble(format!(
                "mean photon number must be positive, got {mean_photons_per_pixel}"
            )));
        }
    }
    with_workers(ensemble.workers, || {
        synthesize_inner(aperture, config, ensemble, noise)
    })?
}

fn synthesize_inner(
    aperture: &Aperture,
    config: &OpticalConfig,
    ensemble: &EnsembleConfig,
    noise: NoiseModel,
) -> Result<(FrameStack, FrameStack)> {
    let n_pix = config.detector().n_pixels;
    let seed = ensemble.rng_seed;
    let source = RealizationSource::new(aperture, config, seed);
    let scale = match noise {
        NoiseModel::None => None,
        NoiseModel::Poisson {
            mean_photons_per_pixel,
        } => Some(mean_photons_per_pixel / expected_pixel_intensity(aperture, config)),
    };
    let mut d1 = Vec::with_capacity(ensemble.n_realizations * n_pix);
    let mut d2 = Vec::with_capacity(ensemble.n_realizations * n_pix);
    let mut start = 0;
    while start < ensemble.n_realizations {
        let end = (start + BATCH).min(ensemble.n_realizations);
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (start..end)
            .into_par_iter()
            .map(|r| {
                let intensity = source.realize(r as u64).intensity;
                match scale {
                    None => (intensity.clone(), intensity),
                    Some(s) => (
                        photon_counts(&intensity, s, seed, DOMAIN_NOISE_1, r as u64),
                        photon_counts(&intensity, s, seed, DOMAIN_NOISE_2, r as u64),
                    ),
                }
            })
            .collect();
        for (a, b) in rows {
            d1.extend_from_slice(&a);
            d2.extend_from_slice(&b);
        }
        start = end;
    }
    let tag = match noise {
        NoiseModel::None => "noiseless".to_string(),
        NoiseModel::Poisson {
            mean_photons_per_pixel,
        } => format!("poisson:{mean_photons_per_pixel}"),
    };
    let pitch = config.detector().pixel_pitch;
    Ok((
        FrameStack::new(d1, n_pix, pitch, tag.clone(), seed)?,
        FrameStack::new(d2, n_pix, pitch, tag, seed)?,
    ))
}

fn photon_counts(intensity: &[f64], scale: f64, seed: u64, domain: u64, index: u64) -> Vec<f64> {
    let mut rng = substream(seed, domain, index);
    intensity
        .iter()
        .map(|&i| {
            let lambda = i * scale;
            if lambda > 0.0 {
                Poisson::new(lambda)
                    .expect("positive finite rate")
                    .sample(&mut rng)
            } else {
                0.0
            }
        })
        .collect()
}

/// `g2(x1, x2) = mean_i[I1_i(x1) I2_i(x2)] / (mean_i[I1_i(x1)] mean_i[I2_i(x2)])`.
pub fn correlate_frames(stack1: &FrameStack, stack2: &FrameStack) -> Result<CorrelationSurface> {
    correlate_frames_with(stack1, stack2, 0)
}

pub fn correlate_frames_with(
    stack1: &FrameStack,
    stack2: &FrameStack,
    workers: usize,
) -> Result<CorrelationSurface> {
    if stack1.n_frames() != stack2.n_frames() {
        return Err(Error::StackMismatch(format!(
            "{} vs {} frames",
            stack1.n_frames(),
            stack2.n_frames()
        )));
    }
    if stack1.n_frames() == 0 {
        return Err(Error::StackMismatch("stacks are empty".into()));
    }
    with_workers(workers, || {
        let mut acc = CorrelationAccumulator::new(stack1.n_pixels(), stack2.n_pixels(), false);
        let f1: Vec<&[f64]> = stack1.frames().collect();
        let f2: Vec<&[f64]> = stack2.frames().collect();
        for (a, b) in f1.chunks(BATCH).zip(f2.chunks(BATCH)) {
            acc.push_batch(a, b);
        }
        let axis = |s: &FrameStack| Axis {
            start: -0.5 * (s.n_pixels() as f64 - 1.0) * s.pixel_pitch,
            step: s.pixel_pitch,
            len: s.n_pixels(),
        };
        acc.into_surface(axis(stack1), axis(stack2)).map(|r| r.0)
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DetectorGrid, PaperPreset};

    fn small() -> (OpticalConfig, Aperture) {
        let cfg = PaperPreset::config()
            .with_detector(DetectorGrid {
                pixel_pitch: 93e-6,
                n_pixels: 32,
            })
            .unwrap();
        (cfg, PaperPreset::aperture())
    }

    #[test]
    fn noiseless_stacks_are_identical() {
        let (cfg, ap) = small();
        let (s1, s2) =
            synthesize_frames(&ap, &cfg, &EnsembleConfig::new(50, 1), NoiseModel::None).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(s1.n_frames(), 50);
        assert_eq!(s1.exposure_tag, "noiseless");
    }

    #[test]
    fn one_frame_correlation_is_one() {
        let (cfg, ap) = small();
        let (s1, s2) =
            synthesize_frames(&ap, &cfg, &EnsembleConfig::new(1, 2), NoiseModel::None).unwrap();
        let g = correlate_frames(&s1, &s2).unwrap();
        assert!(g.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mismatched_stacks_rejected() {
        let a = FrameStack::new(vec![1.0; 8], 4, 1e-6, "", 0).unwrap();
        let b = FrameStack::new(vec![1.0; 12], 4, 1e-6, "", 0).unwrap();
        assert!(matches!(
            correlate_frames(&a, &b),
            Err(Error::StackMismatch(_))
        ));
    }

    #[test]
    fn zero_pixel_reported() {
        let a = FrameStack::new(vec![1.0, 0.0, 2.0, 0.0], 2, 1e-6, "", 0).unwrap();
        assert!(matches!(
            correlate_frames(&a, &a),
            Err(Error::ZeroIntensity { pixel: 1 })
        ));
    }

    #[test]
    fn negative_intensity_rejected() {
        assert!(FrameStack::new(vec![1.0, -1.0], 2, 1e-6, "", 0).is_err());
    }

    #[test]
    fn binary_round_trip_is_byte_exact() {
        let (cfg, ap) = small();
        let (s1, _) = synthesize_frames(
            &ap,
            &cfg,
            &EnsembleConfig::new(20, 9),
            NoiseModel::Poisson {
                mean_photons_per_pixel: 100.0,
            },
        )
        .unwrap();
        let mut bytes = Vec::new();
        s1.write_binary(&mut bytes).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 20 * 32 * 8);
        let back = FrameStack::read_binary(bytes.as_slice()).unwrap();
        assert_eq!(back, s1);
        let mut again = Vec::new();
        back.write_binary(&mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn corrupt_files_rejected() {
        let s = FrameStack::new(vec![1.0; 6], 3, 1e-6, "t", 4).unwrap();
        let mut bytes = Vec::new();
        s.write_binary(&mut bytes).unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(FrameStack::read_binary(bad_magic.as_slice()).is_err());
        let truncated = &bytes[..bytes.len() - 3];
        assert!(FrameStack::read_binary(truncated).is_err());
        assert!(FrameStack::read_binary(&bytes[..40]).is_err());
    }

    #[test]
    fn poisson_counts_are_integers_with_shot_noise() {
        let (cfg, ap) = small();
        let mean = 1e4;
        let ens = EnsembleConfig::new(400, 17);
        let (clean, _) = synthesize_frames(&ap, &cfg, &ens, NoiseModel::None).unwrap();
        let (noisy, noisy2) = synthesize_frames(
            &ap,
            &cfg,
            &ens,
            NoiseModel::Poisson {
                mean_photons_per_pixel: mean,
            },
        )
        .unwrap();
        assert_ne!(noisy, noisy2);
        let scale = mean / expected_pixel_intensity(&ap, &cfg);
        // (count - scale*I)/sqrt(scale*I) should have unit variance
        let mut z2 = 0.0;
        let mut n = 0usize;
        for (c, f) in noisy.frames().zip(clean.frames()) {
            for (&k, &i) in c.iter().zip(f) {
                assert_eq!(k, k.round());
                let lam = scale * i;
                if lam > 100.0 {
                    z2 += (k - lam).powi(2) / lam;
                    n += 1;
                }
            }
        }
        let var = z2 / n as f64;
        assert!(
            (var - 1.0).abs() < 0.1,
            "normalized shot-noise variance {var}"
        );
        // relative fluctuation at the mean count is about 1%
        let rel = 1.0 / mean.sqrt();
        assert!((rel - 0.01).abs() < 1e-12);
    }
}
