//! Virtual instruments: a heralded scanning spectrometer and a two-photon
//! interference (HOM) delay scan.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::counting::CountingModel;
use crate::elements::apply_delay;
use crate::error::{Error, Result};
use crate::fit::{fit_inverted_gaussian, FitResult};
use crate::grid::{SPEED_OF_LIGHT, FWHM_PER_SIGMA};
use crate::pulse::overlap;
use crate::state::{Mode, State};

/// Default spectrometer resolution, Hz.
pub const DEFAULT_RESOLUTION: f64 = 25e9;

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean > 0.0 {
        Poisson::new(mean).expect("finite positive mean").sample(rng)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrometerSettings {
    /// Instrument-response intensity FWHM, Hz.
    pub resolution_fwhm: f64,
    /// Scan start and stop wavelengths, m.
    pub start: f64,
    pub stop: f64,
    /// Wavelength step, m.
    pub step: f64,
}

impl SpectrometerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution_fwhm > 0.0) {
            return Err(Error::param("resolution_fwhm", "must be > 0"));
        }
        if !(self.step > 0.0) || !(self.stop > self.start) || !(self.start > 0.0) {
            return Err(Error::param("range", "need 0 < start < stop and step > 0"));
        }
        Ok(())
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumPoint {
    /// m.
    pub wavelength: f64,
    /// Optical frequency minus the grid carrier frequency, Hz.
    pub frequency_offset: f64,
    pub expected: f64,
    pub sampled: f64,
}

/// Heralded spectrum seen through a Gaussian instrument response of peak 1.
///
/// Counts per point are `pair_counts · transmission · Σ_k S(ω_k) dω R(ω - ω_k)`
/// with `pair_counts` from the counting model, Poisson-sampled from `seed`.
pub fn spectrometer_scan<M: Mode>(
    state: &M,
    settings: &SpectrometerSettings,
    counting: &CountingModel,
    transmission: f64,
    seed: u64,
) -> Result<Vec<SpectrumPoint>> {
    settings.validate()?;
    counting.validate()?;
    let grid = state.grid();
    let band = grid.half_band();
    for lambda in [settings.start, settings.stop] {
        if grid.detuning_of_wavelength(lambda).abs() >= band {
            return Err(Error::OutOfRange(format!(
                "scan wavelength {:.4} nm lies outside the grid band",
                lambda * 1e9
            )));
        }
    }
    let spectrum = state.spectral_intensity();
    let detunings = grid.detunings();
    let dw = grid.domega();
    let sigma = 2.0 * PI * settings.resolution_fwhm / FWHM_PER_SIGMA;
    let scale = counting.pair_counts() * transmission;
    let nu0 = SPEED_OF_LIGHT / grid.lambda0();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(settings
        .wavelengths()
        .into_iter()
        .map(|wavelength| {
            let w = grid.detuning_of_wavelength(wavelength);
            let response: f64 = spectrum
                .iter()
                .zip(&detunings)
                .map(|(s, wk)| s * (-(w - wk).powi(2) / (2.0 * sigma * sigma)).exp())
                .sum::<f64>()
                * dw;
            let expected = scale * response;
            SpectrumPoint {
                wavelength,
                frequency_offset: SPEED_OF_LIGHT / wavelength - nu0,
                expected,
                sampled: poisson(expected, &mut rng),
            }
        })
        .collect())
}

/// Probability that both photons leave a balanced splitter in different
/// ports when `b` is delayed by `tau` seconds.
pub fn hom_coincidence(a: &State, b: &State, tau: f64) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let overlap = match (a, b) {
        (State::Pure(x), State::Pure(y)) => overlap(x, &apply_delay(y, tau))?.norm_sqr(),
        _ => {
            let (r1, r2) = (a.to_density()?, b.to_density()?);
            let grid = r1.grid();
            let phase: Vec<Complex64> = grid
                .detunings()
                .into_iter()
                .map(|w| Complex64::from_polar(1.0, w * tau))
                .collect();
            // Tr[ρ1 ρ2(τ)] with ρ2(τ)_jk = e_j ρ2_jk e_k*, both Hermitian
            let (m1, m2) = (r1.matrix(), r2.matrix());
            let n = grid.n();
            let mut acc = 0.0;
            for k in 0..n {
                for j in 0..n {
                    acc += (m1[(j, k)] * (phase[j] * m2[(j, k)] * phase[k].conj()).conj()).re;
                }
            }
            acc * grid.domega().powi(2)
        }
    };
    Ok(0.5 * (1.0 - overlap))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomPoint {
    /// s.
    pub delay: f64,
    pub probability: f64,
    /// Background-free expected coincidences.
    pub expected: f64,
    /// Expected accidental coincidences.
    pub background: f64,
    /// Background-subtracted sampled coincidences.
    pub sampled: f64,
    /// Sampled coincidences including accidentals.
    pub raw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomScan {
    pub points: Vec<HomPoint>,
    /// Inverted-Gaussian fit to the background-subtracted counts.
    pub fit: Option<FitResult>,
    /// `1 - 2 min P(τ)` over the scanned delays.
    pub analytic_visibility: f64,
}

impl HomScan {
    pub fn visibility(&self) -> Option<f64> {
        self.fit.map(|f| f.params.amplitude)
    }
}

/// Delay scan of `hom_coincidence`.
///
/// Coincidences per point are `pair_counts · transmission · P(τ)`. The raw
/// series adds accidentals from two pairs in one slot (`μ` times the pair
/// coincidence scale) and dark-dark coincidences. Subtraction is exact: the
/// subtracted series is sampled from the background-free mean.
pub fn hom_scan(
    a: &State,
    b: &State,
    delays: &[f64],
    counting: &CountingModel,
    transmission: f64,
    seed: u64,
) -> Result<HomScan> {
    counting.validate()?;
    if delays.is_empty() {
        return Err(Error::param("delays", "must not be empty"));
    }
    let scale = counting.pair_counts() * transmission;
    let background = scale * counting.mu + counting.pulses() * counting.dark_prob.powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(delays.len());
    for &delay in delays {
        let probability = hom_coincidence(a, b, delay)?;
        let expected = scale * probability;
        let sampled = poisson(expected, &mut rng);
        let raw = sampled + poisson(background, &mut rng);
        points.push(HomPoint {
            delay,
            probability,
            expected,
            background,
            sampled,
            raw,
        });
    }
    let min_p = points.iter().map(|p| p.probability).fold(f64::INFINITY, f64::min);
    let x: Vec<f64> = points.iter().map(|p| p.delay).collect();
    let y: Vec<f64> = points.iter().map(|p| p.sampled).collect();
    let fit = match fit_inverted_gaussian(&x, &y) {
        Ok(f) => Some(f),
        Err(Error::Degenerate(_)) | Err(Error::InvalidParameter { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(HomScan {
        points,
        fit,
        analytic_visibility: 1.0 - 2.0 * min_p,
    })
}
