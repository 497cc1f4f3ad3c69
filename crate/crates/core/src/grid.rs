//! Uniform time/detuning lattices and the unitary transform pair between them.
//!
//! Envelopes live in the frame of the carrier `omega0`. The spectral amplitude
//! of a temporal envelope is
//!
//! ```text
//! ψ̃(ω) = (1/√(2π)) Σ_k ψ(t_k) exp(+i ω t_k) dt
//! ```
//!
//! so multiplying an envelope by `exp(-iΩt)` translates its spectrum up by `Ω`.
//! Every sign-sensitive operation in the crate is written against this
//! convention.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Conversion factor from intensity FWHM to rms width of a Gaussian.
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

pub const MIN_SAMPLES: usize = 64;

/// Sampling lattice shared by the time and detuning domains.
///
/// Sample `k` sits at `t_k = (k - n/2) dt` and `ω_k = (k - n/2) dω` with
/// `dω = 2π / (n dt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeFrequencyGrid {
    n: usize,
    dt: f64,
    omega0: f64,
}

impl TimeFrequencyGrid {
    /// Builds a grid of `n` samples spaced by `dt` around a carrier at
    /// vacuum wavelength `lambda0`.
    pub fn new(n: usize, dt: f64, lambda0: f64) -> Result<Self> {
        if n < MIN_SAMPLES || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "sample count {n} must be a power of two >= {MIN_SAMPLES}"
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidGrid(format!("time step {dt} must be > 0")));
        }
        if !(lambda0 > 100e-9 && lambda0 < 10e-6) {
            return Err(Error::InvalidGrid(format!(
                "carrier wavelength {lambda0} m outside (100 nm, 10 um)"
            )));
        }
        Ok(Self {
            n,
            dt,
            omega0: 2.0 * PI * SPEED_OF_LIGHT / lambda0,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Carrier angular frequency, rad/s.
    pub fn omega0(&self) -> f64 {
        self.omega0
    }

    pub fn lambda0(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / self.omega0
    }

    /// Detuning step, rad/s.
    pub fn domega(&self) -> f64 {
        2.0 * PI / (self.n as f64 * self.dt)
    }

    /// Total time window `n dt`.
    pub fn window(&self) -> f64 {
        self.n as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        (k as f64 - (self.n / 2) as f64) * self.dt
    }

    pub fn detuning(&self, k: usize) -> f64 {
        (k as f64 - (self.n / 2) as f64) * self.domega()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.time(k)).collect()
    }

    pub fn detunings(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.detuning(k)).collect()
    }

    /// Largest representable detuning magnitude, `n dω / 2`.
    pub fn half_band(&self) -> f64 {
        0.5 * self.n as f64 * self.domega()
    }

    /// Detuning (rad/s) of an absolute vacuum wavelength from the carrier.
    pub fn detuning_of_wavelength(&self, lambda: f64) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / lambda - self.omega0
    }

    /// Vacuum wavelength of a detuning from the carrier.
    pub fn wavelength_of_detuning(&self, detuning: f64) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / (self.omega0 + detuning)
    }

    pub(crate) fn transformer(&self) -> Transformer {
        Transformer::new(*self)
    }
}

/// Spectral amplitudes `ψ̃(ω_k)` on a grid, normalized with weight `dω`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSamples {
    grid: TimeFrequencyGrid,
    amplitudes: Vec<Complex64>,
}

impl SpectralSamples {
    pub fn new(grid: TimeFrequencyGrid, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.n() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, amplitudes })
    }

    pub fn grid(&self) -> &TimeFrequencyGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// `|ψ̃(ω_k)|²`, a density in detuning.
    pub fn intensity(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `Σ |ψ̃|² dω`.
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.domega()
    }
}

/// Planned FFTs for one grid.
pub(crate) struct Transformer {
    grid: TimeFrequencyGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Transformer {
    fn new(grid: TimeFrequencyGrid) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            grid,
            forward: planner.plan_fft_forward(grid.n()),
            inverse: planner.plan_fft_inverse(grid.n()),
        }
    }

    /// Time samples to spectral samples, in place.
    ///
    /// With `h = n/2` (even for `n >= 4`), `exp(iω_j t_k)` factors into
    /// `(-1)^j (-1)^k exp(2πi jk/n)`, so the centred transform is an
    /// unnormalized inverse FFT between two alternating-sign passes.
    pub(crate) fn to_spectrum_in_place(&self, buf: &mut [Complex64]) {
        alternate_sign(buf);
        self.inverse.process(buf);
        let scale = self.grid.dt() / (2.0 * PI).sqrt();
        for (j, v) in buf.iter_mut().enumerate() {
            *v *= if j % 2 == 0 { scale } else { -scale };
        }
    }

    /// Spectral samples to time samples, in place.
    pub(crate) fn to_time_in_place(&self, buf: &mut [Complex64]) {
        alternate_sign(buf);
        self.forward.process(buf);
        let scale = self.grid.domega() / (2.0 * PI).sqrt();
        for (k, v) in buf.iter_mut().enumerate() {
            *v *= if k % 2 == 0 { scale } else { -scale };
        }
    }
}

fn alternate_sign(buf: &mut [Complex64]) {
    for v in buf.iter_mut().skip(1).step_by(2) {
        *v = -*v;
    }
}

/// Spectral amplitudes of a sampled temporal envelope.
pub fn time_to_spectrum(grid: &TimeFrequencyGrid, samples: &[Complex64]) -> Result<Vec<Complex64>> {
    if samples.len() != grid.n() {
        return Err(Error::GridMismatch);
    }
    let mut buf = samples.to_vec();
    grid.transformer().to_spectrum_in_place(&mut buf);
    Ok(buf)
}

/// Temporal envelope of sampled spectral amplitudes.
pub fn spectrum_to_time(grid: &TimeFrequencyGrid, amplitudes: &[Complex64]) -> Result<Vec<Complex64>> {
    if amplitudes.len() != grid.n() {
        return Err(Error::GridMismatch);
    }
    let mut buf = amplitudes.to_vec();
    grid.transformer().to_time_in_place(&mut buf);
    Ok(buf)
}

const NARROWBAND_LIMIT: f64 = 0.1;

/// Frequency FWHM (Hz) of a wavelength FWHM `delta_lambda` around `lambda0`,
/// `Δν = c Δλ / λ0²`.
pub fn wavelength_to_frequency_width(delta_lambda: f64, lambda0: f64) -> Result<f64> {
    if !(lambda0 > 0.0) || !(delta_lambda >= 0.0) {
        return Err(Error::param("delta_lambda", "widths must be nonnegative"));
    }
    if delta_lambda >= NARROWBAND_LIMIT * lambda0 {
        return Err(Error::OutOfRange(format!(
            "bandwidth {delta_lambda} m is not small against {lambda0} m"
        )));
    }
    Ok(SPEED_OF_LIGHT * delta_lambda / (lambda0 * lambda0))
}

/// Wavelength FWHM (m) of a frequency FWHM `delta_nu` around `lambda0`.
pub fn frequency_to_wavelength_width(delta_nu: f64, lambda0: f64) -> Result<f64> {
    if !(lambda0 > 0.0) || !(delta_nu >= 0.0) {
        return Err(Error::param("delta_nu", "widths must be nonnegative"));
    }
    let delta_lambda = delta_nu * lambda0 * lambda0 / SPEED_OF_LIGHT;
    if delta_lambda >= NARROWBAND_LIMIT * lambda0 {
        return Err(Error::OutOfRange(format!(
            "bandwidth {delta_nu} Hz is not small against the carrier"
        )));
    }
    Ok(delta_lambda)
}
