//! Single-photon pulse modes: construction, overlaps and moments.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{SpectralSamples, TimeFrequencyGrid, FWHM_PER_SIGMA};

const MIN_NORM_SQR: f64 = 1e-200;

/// A normalized complex temporal envelope `ψ(t_k)` in the carrier frame.
///
/// `Σ |ψ(t_k)|² dt = 1`. The carrier phase picked up by delays is kept as a
/// separate scalar so that envelopes stay comparable sample by sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseMode {
    grid: TimeFrequencyGrid,
    samples: Vec<Complex64>,
    carrier_phase: f64,
}

impl PulseMode {
    /// Normalizes `samples` into a pulse mode. Near-zero input is an error.
    pub fn from_envelope(grid: TimeFrequencyGrid, mut samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.n() {
            return Err(Error::GridMismatch);
        }
        let norm_sqr = samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * grid.dt();
        if !norm_sqr.is_finite() {
            return Err(Error::NonFinite("pulse envelope"));
        }
        if norm_sqr < MIN_NORM_SQR {
            return Err(Error::ZeroNorm);
        }
        let scale = norm_sqr.sqrt().recip();
        samples.iter_mut().for_each(|s| *s *= scale);
        Ok(Self {
            grid,
            samples,
            carrier_phase: 0.0,
        })
    }

    /// Builds a mode from spectral amplitudes, normalizing the result.
    pub fn from_spectrum(spectrum: SpectralSamples) -> Result<Self> {
        let grid = *spectrum.grid();
        let mut buf = spectrum.into_amplitudes();
        grid.transformer().to_time_in_place(&mut buf);
        Self::from_envelope(grid, buf)
    }

    pub fn grid(&self) -> &TimeFrequencyGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    /// Accumulated carrier phase `ω0 τ` from delays, radians in `[0, 2π)`.
    pub fn carrier_phase(&self) -> f64 {
        self.carrier_phase
    }

    pub fn norm_sqr(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.grid.dt()
    }

    pub fn to_spectrum(&self) -> SpectralSamples {
        let mut buf = self.samples.clone();
        self.grid.transformer().to_spectrum_in_place(&mut buf);
        SpectralSamples::new(self.grid, buf).expect("length matches grid")
    }

    pub fn temporal_intensity(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.norm_sqr()).collect()
    }

    pub fn spectral_intensity(&self) -> Vec<f64> {
        self.to_spectrum().intensity()
    }

    /// Multiplies the envelope by `exp(i·phase(t))` without renormalizing.
    pub(crate) fn map_temporal_phase(&self, phase: impl Fn(f64) -> f64) -> Self {
        let samples = self
            .samples
            .iter()
            .enumerate()
            .map(|(k, s)| s * Complex64::from_polar(1.0, phase(self.grid.time(k))))
            .collect();
        Self {
            grid: self.grid,
            samples,
            carrier_phase: self.carrier_phase,
        }
    }

    /// Multiplies the spectrum by `transfer(ω)` and returns the unnormalized
    /// result with its norm².
    pub(crate) fn map_spectrum(&self, transfer: &[Complex64]) -> (Vec<Complex64>, f64) {
        let t = self.grid.transformer();
        let mut buf = self.samples.clone();
        t.to_spectrum_in_place(&mut buf);
        for (v, h) in buf.iter_mut().zip(transfer) {
            *v *= h;
        }
        t.to_time_in_place(&mut buf);
        let norm_sqr = buf.iter().map(|s| s.norm_sqr()).sum::<f64>() * self.grid.dt();
        (buf, norm_sqr)
    }

    pub(crate) fn with_samples(&self, samples: Vec<Complex64>) -> Self {
        Self {
            grid: self.grid,
            samples,
            carrier_phase: self.carrier_phase,
        }
    }

    pub(crate) fn add_carrier_phase(mut self, phase: f64) -> Self {
        self.carrier_phase = (self.carrier_phase + phase).rem_euclid(std::f64::consts::TAU);
        self
    }

    /// Multiplies by a global phase `exp(iθ)`.
    pub fn with_global_phase(&self, theta: f64) -> Self {
        let rot = Complex64::from_polar(1.0, theta);
        self.with_samples(self.samples.iter().map(|s| s * rot).collect())
    }

    pub fn moments(&self) -> Moments {
        let spectrum = self.spectral_intensity();
        Moments::from_intensities(&self.grid, &spectrum, &self.temporal_intensity())
    }
}

/// Gaussian pulse with spectral intensity FWHM `spectral_fwhm` (rad/s) centred
/// at `center_detuning` (rad/s), with optional quadratic spectral phase
/// `exp(i·(β/2)(ω − center)²)`.
pub fn make_gaussian_pulse(
    grid: &TimeFrequencyGrid,
    center_detuning: f64,
    spectral_fwhm: f64,
    spectral_phase_quadratic: f64,
) -> Result<PulseMode> {
    if !(spectral_fwhm.is_finite() && spectral_fwhm > 0.0) {
        return Err(Error::param("spectral_fwhm", "must be positive"));
    }
    if spectral_fwhm < 2.0 * grid.domega() {
        return Err(Error::param(
            "spectral_fwhm",
            format!(
                "{spectral_fwhm:.4e} rad/s is narrower than two detuning bins ({:.4e})",
                2.0 * grid.domega()
            ),
        ));
    }
    // transform-limited temporal FWHM is 4 ln2 / Δω
    let temporal_fwhm = 4.0 * std::f64::consts::LN_2 / spectral_fwhm;
    if temporal_fwhm < 2.0 * grid.dt() {
        return Err(Error::param(
            "spectral_fwhm",
            format!("temporal FWHM {temporal_fwhm:.4e} s is shorter than two time steps"),
        ));
    }
    if !(center_detuning.abs() < 0.5 * grid.half_band()) {
        return Err(Error::param(
            "center_detuning",
            format!("{center_detuning:.4e} rad/s outside half of the band"),
        ));
    }
    let sigma = spectral_fwhm / FWHM_PER_SIGMA;
    let amplitudes = grid
        .detunings()
        .into_iter()
        .map(|w| {
            let x = w - center_detuning;
            Complex64::from_polar(
                (-x * x / (4.0 * sigma * sigma)).exp(),
                0.5 * spectral_phase_quadratic * x * x,
            )
        })
        .collect();
    PulseMode::from_spectrum(SpectralSamples::new(*grid, amplitudes)?)
}

/// Inner product `⟨a|b⟩ = Σ a*(t_k) b(t_k) dt`, including carrier phases.
pub fn overlap(a: &PulseMode, b: &PulseMode) -> Result<Complex64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let sum: Complex64 = a
        .samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| x.conj() * y)
        .sum();
    Ok(sum * a.grid.dt() * Complex64::from_polar(1.0, b.carrier_phase - a.carrier_phase))
}

/// Summary statistics of a mode's spectral and temporal intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    /// rad/s
    pub spectral_centroid: f64,
    /// rad/s
    pub spectral_rms: f64,
    /// rad/s
    pub spectral_fwhm: f64,
    /// s
    pub temporal_centroid: f64,
    /// s
    pub temporal_fwhm: f64,
}

impl Moments {
    pub(crate) fn from_intensities(
        grid: &TimeFrequencyGrid,
        spectral: &[f64],
        temporal: &[f64],
    ) -> Self {
        let (spectral_centroid, spectral_rms) = centroid_rms(spectral, |k| grid.detuning(k));
        let (temporal_centroid, _) = centroid_rms(temporal, |k| grid.time(k));
        Self {
            spectral_centroid,
            spectral_rms,
            spectral_fwhm: fwhm(spectral) * grid.domega(),
            temporal_centroid,
            temporal_fwhm: fwhm(temporal) * grid.dt(),
        }
    }
}

fn centroid_rms(weights: &[f64], coord: impl Fn(usize) -> f64) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let mean = weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * coord(k))
        .sum::<f64>()
        / total;
    let var = weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * (coord(k) - mean).powi(2))
        .sum::<f64>()
        / total;
    (mean, var.sqrt())
}

/// Full width at half maximum in units of the sample spacing.
///
/// Takes the contiguous run of samples at or above half the global maximum
/// that contains the maximum, and linearly interpolates the two half-max
/// crossings at its edges. Returns 0 for an all-zero input.
pub fn fwhm(values: &[f64]) -> f64 {
    let Some((peak_idx, &peak)) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
    else {
        return 0.0;
    };
    if !(peak > 0.0) {
        return 0.0;
    }
    let half = 0.5 * peak;
    let mut lo = peak_idx;
    while lo > 0 && values[lo - 1] >= half {
        lo -= 1;
    }
    let mut hi = peak_idx;
    while hi + 1 < values.len() && values[hi + 1] >= half {
        hi += 1;
    }
    let left = if lo == 0 {
        0.0
    } else {
        let (a, b) = (values[lo - 1], values[lo]);
        (lo - 1) as f64 + (half - a) / (b - a)
    };
    let right = if hi + 1 == values.len() {
        hi as f64
    } else {
        let (a, b) = (values[hi], values[hi + 1]);
        hi as f64 + (a - half) / (a - b)
    };
    right - left
}
