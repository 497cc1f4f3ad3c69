//! Common interface over pure and mixed single-photon states.

use num_complex::Complex64;

use crate::density::{pure_to_density, state_overlap, SpectralDensityMatrix};
use crate::error::{Error, Result};
use crate::grid::TimeFrequencyGrid;
use crate::pulse::{overlap, Moments, PulseMode};

/// Operations every optical element needs from a state representation.
pub trait Mode: Sized + Clone {
    fn grid(&self) -> &TimeFrequencyGrid;

    /// Multiplies the temporal envelope by `exp(i·phase(t))`.
    fn with_temporal_phase(&self, phase: impl Fn(f64) -> f64 + Sync) -> Self;

    /// Multiplies the spectral amplitude by `transfer` and renormalizes.
    /// Returns the state and the fraction of the norm that survived.
    fn with_transfer(&self, transfer: &[Complex64]) -> Result<(Self, f64)>;

    /// Adds a global carrier phase; meaningless for mixed states.
    fn with_carrier_phase(self, phase: f64) -> Self;

    fn moments(&self) -> Moments;

    fn spectral_intensity(&self) -> Vec<f64>;
}

impl Mode for PulseMode {
    fn grid(&self) -> &TimeFrequencyGrid {
        PulseMode::grid(self)
    }

    fn with_temporal_phase(&self, phase: impl Fn(f64) -> f64 + Sync) -> Self {
        self.map_temporal_phase(phase)
    }

    fn with_transfer(&self, transfer: &[Complex64]) -> Result<(Self, f64)> {
        let (samples, norm_sqr) = self.map_spectrum(transfer);
        if norm_sqr < 1e-200 {
            return Err(Error::ZeroNorm);
        }
        let scale = norm_sqr.sqrt().recip();
        let samples = samples.into_iter().map(|s| s * scale).collect();
        Ok((self.with_samples(samples), norm_sqr))
    }

    fn with_carrier_phase(self, phase: f64) -> Self {
        self.add_carrier_phase(phase)
    }

    fn moments(&self) -> Moments {
        PulseMode::moments(self)
    }

    fn spectral_intensity(&self) -> Vec<f64> {
        PulseMode::spectral_intensity(self)
    }
}

impl Mode for SpectralDensityMatrix {
    fn grid(&self) -> &TimeFrequencyGrid {
        SpectralDensityMatrix::grid(self)
    }

    fn with_temporal_phase(&self, phase: impl Fn(f64) -> f64 + Sync) -> Self {
        self.map_temporal_phase(phase)
    }

    fn with_transfer(&self, transfer: &[Complex64]) -> Result<(Self, f64)> {
        let (rho, trace) = self.map_spectrum(transfer);
        let state = SpectralDensityMatrix::from_raw(*self.grid(), rho)?;
        Ok((state, trace))
    }

    fn with_carrier_phase(self, _phase: f64) -> Self {
        self
    }

    fn moments(&self) -> Moments {
        SpectralDensityMatrix::moments(self)
    }

    fn spectral_intensity(&self) -> Vec<f64> {
        SpectralDensityMatrix::spectral_intensity(self)
    }
}

/// Either representation, for pipelines that accept both.
#[derive(Debug, Clone, PartialEq)]
pub enum State {
    Pure(PulseMode),
    Mixed(SpectralDensityMatrix),
}

impl State {
    pub fn purity(&self) -> f64 {
        match self {
            State::Pure(_) => 1.0,
            State::Mixed(rho) => rho.purity(),
        }
    }

    pub fn to_density(&self) -> Result<SpectralDensityMatrix> {
        match self {
            State::Pure(p) => pure_to_density(p),
            State::Mixed(rho) => Ok(rho.clone()),
        }
    }
}

impl From<PulseMode> for State {
    fn from(p: PulseMode) -> Self {
        State::Pure(p)
    }
}

impl From<SpectralDensityMatrix> for State {
    fn from(rho: SpectralDensityMatrix) -> Self {
        State::Mixed(rho)
    }
}

impl Mode for State {
    fn grid(&self) -> &TimeFrequencyGrid {
        match self {
            State::Pure(p) => Mode::grid(p),
            State::Mixed(r) => Mode::grid(r),
        }
    }

    fn with_temporal_phase(&self, phase: impl Fn(f64) -> f64 + Sync) -> Self {
        match self {
            State::Pure(p) => State::Pure(p.with_temporal_phase(phase)),
            State::Mixed(r) => State::Mixed(Mode::with_temporal_phase(r, phase)),
        }
    }

    fn with_transfer(&self, transfer: &[Complex64]) -> Result<(Self, f64)> {
        Ok(match self {
            State::Pure(p) => {
                let (s, t) = p.with_transfer(transfer)?;
                (State::Pure(s), t)
            }
            State::Mixed(r) => {
                let (s, t) = r.with_transfer(transfer)?;
                (State::Mixed(s), t)
            }
        })
    }

    fn with_carrier_phase(self, phase: f64) -> Self {
        match self {
            State::Pure(p) => State::Pure(p.with_carrier_phase(phase)),
            m => m,
        }
    }

    fn moments(&self) -> Moments {
        match self {
            State::Pure(p) => Mode::moments(p),
            State::Mixed(r) => Mode::moments(r),
        }
    }

    fn spectral_intensity(&self) -> Vec<f64> {
        match self {
            State::Pure(p) => Mode::spectral_intensity(p),
            State::Mixed(r) => Mode::spectral_intensity(r),
        }
    }
}

/// Mode overlap `|⟨a|b⟩|²` for pure states, `Tr[ρa ρb]` otherwise.
pub fn fidelity_overlap(a: &State, b: &State) -> Result<f64> {
    match (a, b) {
        (State::Pure(x), State::Pure(y)) => Ok(overlap(x, y)?.norm_sqr()),
        _ => state_overlap(&a.to_density()?, &b.to_density()?),
    }
}
