//! Optical elements acting on pulse modes.
//!
//! Phase factors follow the convention of [`crate::grid`]: an envelope
//! multiplied by `exp(-iΩt)` moves up in frequency by `Ω`. The EOM imprints
//! `exp(-iφ_mod(t))` with `φ_mod = π V(t)/Vπ`, so locking the rising slope of
//! the drive to the pulse (`phi0 = 0`) blueshifts it.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{TimeFrequencyGrid, FWHM_PER_SIGMA};
use crate::pulse::{overlap, PulseMode};
use crate::state::Mode;

/// Fused-silica-like group-velocity dispersion near 830 nm, s²/m (36 fs²/mm).
pub const FIBER_GVD_830NM: f64 = 36e-30 / 1e-3;

/// Sinusoidal drive `V(t) = v0 sin(2π nu t + phi0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfDrive {
    /// V
    pub v0: f64,
    /// V
    pub v_pi: f64,
    /// Hz
    pub nu: f64,
    /// rad
    pub phi0: f64,
}

impl RfDrive {
    pub fn new(v0: f64, v_pi: f64, nu: f64, phi0: f64) -> Result<Self> {
        let d = Self { v0, v_pi, nu, phi0 };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 >= 0.0 && self.v0.is_finite()) {
            return Err(Error::param("v0", "must be >= 0"));
        }
        if !(self.v_pi > 0.0 && self.v_pi.is_finite()) {
            return Err(Error::param("v_pi", "must be > 0"));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::param("nu", "must be > 0"));
        }
        if !self.phi0.is_finite() {
            return Err(Error::param("phi0", "must be finite"));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        self.nu.recip()
    }

    /// Drive amplitude `v0/v_pi` that gives shear `omega` at frequency `nu`
    /// when locked to the linear region.
    pub fn amplitude_for_shear(omega: f64, nu: f64) -> f64 {
        omega.abs() / (2.0 * PI * PI * nu)
    }
}

/// Phase modulator with its insertion transmission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EomElement {
    pub drive: RfDrive,
    /// Power transmission in [0, 1].
    pub transmission: f64,
}

impl EomElement {
    pub fn new(drive: RfDrive, transmission: f64) -> Result<Self> {
        drive.validate()?;
        if !(0.0..=1.0).contains(&transmission) {
            return Err(Error::param("transmission", "must lie in [0, 1]"));
        }
        Ok(Self {
            drive,
            transmission,
        })
    }
}

/// `φ_mod(t) = π (v0/v_pi) sin(2π nu t + phi0)`.
pub fn eom_phase_profile(drive: &RfDrive, t: f64) -> f64 {
    PI * (drive.v0 / drive.v_pi) * (2.0 * PI * drive.nu * t + drive.phi0).sin()
}

/// Shear from linearizing the drive about `t = 0`:
/// `Ω = 2π² (v0/v_pi) nu cos(phi0)`.
pub fn analytic_shear(drive: &RfDrive) -> f64 {
    2.0 * PI * PI * (drive.v0 / drive.v_pi) * drive.nu * drive.phi0.cos()
}

/// Passes a state through the modulator.
///
/// The mode picks up `exp(-iφ_mod(t))`; the insertion transmission is
/// returned separately and never scales the amplitude. Logs a warning when
/// the pulse is not short against the drive period.
pub fn apply_eom<M: Mode>(state: &M, eom: &EomElement) -> (M, f64) {
    let limit = 0.5 * eom.drive.period();
    let duration = state.moments().temporal_fwhm;
    if duration >= limit {
        log::warn!(
            "pulse FWHM {:.3e} s exceeds half the rf period ({:.3e} s); shear will be distorted",
            duration,
            limit
        );
    }
    let drive = eom.drive;
    let out = state.with_temporal_phase(move |t| -eom_phase_profile(&drive, t));
    (out, eom.transmission)
}

/// Exact linear temporal phase `exp(-iΩt)`.
pub fn ideal_shear<M: Mode>(state: &M, omega_shear: f64) -> M {
    state.with_temporal_phase(move |t| -omega_shear * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShearFidelity {
    /// `|⟨ideal|actual⟩|²`
    pub fidelity: f64,
    /// Intensity-weighted rms of the non-linear part of the imprinted phase, rad.
    pub residual_phase_rms: f64,
}

/// Compares the modulator against an ideal shear of [`analytic_shear`].
pub fn shear_fidelity(pulse: &PulseMode, eom: &EomElement) -> Result<ShearFidelity> {
    let omega = analytic_shear(&eom.drive);
    let ideal = ideal_shear(pulse, omega);
    let (actual, _) = apply_eom(pulse, eom);
    let fidelity = overlap(&ideal, &actual)?.norm_sqr();

    let grid = pulse.grid();
    let weights = pulse.temporal_intensity();
    let residual: Vec<f64> = (0..grid.n())
        .map(|k| {
            let t = grid.time(k);
            omega * t - eom_phase_profile(&eom.drive, t)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mean = weights.iter().zip(&residual).map(|(w, r)| w * r).sum::<f64>() / total;
    let var = weights
        .iter()
        .zip(&residual)
        .map(|(w, r)| w * (r - mean).powi(2))
        .sum::<f64>()
        / total;
    Ok(ShearFidelity {
        fidelity,
        residual_phase_rms: var.sqrt(),
    })
}

/// Quadratic and cubic spectral phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersiveElement {
    /// s²
    pub gdd: f64,
    /// s³
    #[serde(default)]
    pub tod: f64,
}

impl DispersiveElement {
    pub fn new(gdd: f64, tod: f64) -> Result<Self> {
        if !(gdd.is_finite() && tod.is_finite()) {
            return Err(Error::param("gdd", "dispersion must be finite"));
        }
        Ok(Self { gdd, tod })
    }

    /// Fiber of `length` meters with the default group-velocity dispersion.
    pub fn fiber(length: f64) -> Self {
        Self {
            gdd: FIBER_GVD_830NM * length,
            tod: 0.0,
        }
    }

    pub fn transfer(&self, grid: &TimeFrequencyGrid) -> Vec<Complex64> {
        grid.detunings()
            .into_iter()
            .map(|w| {
                Complex64::from_polar(1.0, 0.5 * self.gdd * w * w + self.tod / 6.0 * w * w * w)
            })
            .collect()
    }
}

/// Multiplies the spectrum by `exp(i(gdd/2)ω² + i(tod/6)ω³)`.
pub fn apply_dispersion<M: Mode>(state: &M, d: &DispersiveElement) -> M {
    let transfer = d.transfer(state.grid());
    state
        .with_transfer(&transfer)
        .expect("phase-only transfer preserves the norm")
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterShape {
    /// Real Gaussian amplitude transmission.
    GaussianReal,
    /// Single-cavity response `1/(1 - iδ/γ)`, with phase.
    LorentzianComplex,
}

/// Tunable band-pass filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterElement {
    pub shape: FilterShape,
    /// Center vacuum wavelength, m.
    pub center: f64,
    /// Intensity FWHM, Hz.
    pub fwhm: f64,
    pub peak_transmission: f64,
}

impl FilterElement {
    pub fn new(shape: FilterShape, center: f64, fwhm: f64, peak_transmission: f64) -> Result<Self> {
        let f = Self {
            shape,
            center,
            fwhm,
            peak_transmission,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm > 0.0 && self.fwhm.is_finite()) {
            return Err(Error::param("fwhm", "must be > 0"));
        }
        if !(self.peak_transmission > 0.0 && self.peak_transmission <= 1.0) {
            return Err(Error::param("peak_transmission", "must lie in (0, 1]"));
        }
        if !(self.center > 0.0 && self.center.is_finite()) {
            return Err(Error::param("center", "must be a positive wavelength"));
        }
        Ok(())
    }

    /// Amplitude transfer function on the grid, peak magnitude 1.
    pub fn transfer(&self, grid: &TimeFrequencyGrid) -> Result<Vec<Complex64>> {
        let center = grid.detuning_of_wavelength(self.center);
        if center.abs() >= grid.half_band() {
            return Err(Error::param(
                "center",
                format!("{:.4} nm lies outside the grid band", self.center * 1e9),
            ));
        }
        let width = 2.0 * PI * self.fwhm;
        Ok(grid
            .detunings()
            .into_iter()
            .map(|w| {
                let x = w - center;
                match self.shape {
                    FilterShape::GaussianReal => {
                        let sigma = width / FWHM_PER_SIGMA;
                        Complex64::new((-x * x / (4.0 * sigma * sigma)).exp(), 0.0)
                    }
                    FilterShape::LorentzianComplex => {
                        let gamma = 0.5 * width;
                        Complex64::new(1.0, -x / gamma).inv()
                    }
                }
            })
            .collect())
    }
}

/// Filters and renormalizes a state; returns the transmission probability.
pub fn apply_filter<M: Mode>(state: &M, f: &FilterElement) -> Result<(M, f64)> {
    let transfer = f.transfer(state.grid())?;
    let (out, kept) = state.with_transfer(&transfer)?;
    Ok((out, kept * f.peak_transmission))
}

/// Delays a state by `tau` seconds: the envelope moves later by `tau` and the
/// carrier phase advances by `ω0 τ`.
pub fn apply_delay<M: Mode>(state: &M, tau: f64) -> M {
    let transfer: Vec<Complex64> = state
        .grid()
        .detunings()
        .into_iter()
        .map(|w| Complex64::from_polar(1.0, w * tau))
        .collect();
    let omega0 = state.grid().omega0();
    state
        .with_transfer(&transfer)
        .expect("phase-only transfer preserves the norm")
        .0
        .with_carrier_phase(omega0 * tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{pure_to_density, state_overlap};
    use crate::grid::wavelength_to_frequency_width;
    use crate::pulse::make_gaussian_pulse;
    use approx::assert_relative_eq;

    const GHZ: f64 = 2.0 * PI * 1e9;
    const LAMBDA0: f64 = 831.5e-9;

    fn grid() -> TimeFrequencyGrid {
        TimeFrequencyGrid::new(4096, 20e-15, LAMBDA0).unwrap()
    }

    fn nominal_pulse(g: &TimeFrequencyGrid) -> PulseMode {
        make_gaussian_pulse(g, 0.0, 435.0 * GHZ, 0.0).unwrap()
    }

    fn drive_200ghz(phi0: f64) -> RfDrive {
        let amp = RfDrive::amplitude_for_shear(200.0 * GHZ, 40e9);
        RfDrive::new(amp, 1.0, 40e9, phi0).unwrap()
    }

    #[test]
    fn phase_profile_values() {
        let d = RfDrive::new(1.0, 1.0, 40e9, 0.0).unwrap();
        assert_eq!(eom_phase_profile(&d, 0.0), 0.0);
        assert_relative_eq!(eom_phase_profile(&d, 0.25 / 40e9), PI, max_relative = 1e-12);
        // central-difference slope at t = 0
        let h = 1e-16;
        let slope = (eom_phase_profile(&d, h) - eom_phase_profile(&d, -h)) / (2.0 * h);
        assert_relative_eq!(slope, 2.0 * PI * PI * 40e9, max_relative = 1e-6);
    }

    #[test]
    fn analytic_shear_values() {
        let d = RfDrive::new(1.5915, 1.0, 40e9, 0.0).unwrap();
        assert!((analytic_shear(&d) / (2.0 * PI) - 200.0e9).abs() < 0.05e9);
        let ext = RfDrive { phi0: PI / 2.0, ..d };
        assert!(analytic_shear(&ext).abs() < 1e-3);
        let neg = RfDrive { phi0: PI, ..d };
        assert_eq!(analytic_shear(&neg), -analytic_shear(&d));
        assert_relative_eq!(RfDrive::amplitude_for_shear(200.0 * GHZ, 40e9), 5.0 / PI);
    }

    #[test]
    fn eom_identity_and_norm() {
        let g = grid();
        let p = nominal_pulse(&g);
        let off = EomElement::new(RfDrive::new(0.0, 1.0, 40e9, 0.0).unwrap(), 0.5).unwrap();
        let (out, t) = apply_eom(&p, &off);
        assert_eq!(t, 0.5);
        assert!((overlap(&p, &out).unwrap() - 1.0).norm() < 1e-12);
        let on = EomElement::new(drive_200ghz(0.3), 0.5).unwrap();
        let (out, _) = apply_eom(&p, &on);
        assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn eom_shear_sign_and_magnitude() {
        let g = grid();
        let p = nominal_pulse(&g);
        let c0 = p.moments().spectral_centroid;
        for (phi0, sign) in [(0.0, 1.0), (PI, -1.0)] {
            let eom = EomElement::new(drive_200ghz(phi0), 1.0).unwrap();
            let (out, _) = apply_eom(&p, &eom);
            let shift = out.moments().spectral_centroid - c0;
            assert!(
                (shift - sign * 200.0 * GHZ).abs() < 2.0 * GHZ,
                "phi0={phi0}: shift {} GHz",
                shift / GHZ
            );
        }
    }

    #[test]
    fn ideal_shear_moves_centroid() {
        let g = grid();
        let p = nominal_pulse(&g);
        assert_eq!(ideal_shear(&p, 0.0), p);
        let m0 = p.moments();
        let s = ideal_shear(&p, 200.0 * GHZ);
        let m1 = s.moments();
        assert!((m1.spectral_centroid - m0.spectral_centroid - 200.0 * GHZ).abs() < 0.5 * g.domega());
        assert!((m1.spectral_fwhm - m0.spectral_fwhm).abs() < g.domega());
        let back = ideal_shear(&s, -200.0 * GHZ);
        assert!(overlap(&p, &back).unwrap().norm_sqr() > 1.0 - 1e-10);
    }

    #[test]
    fn fidelity_at_nominal_drive_and_long_pulse() {
        let g = grid();
        let eom = EomElement::new(drive_200ghz(0.0), 0.5).unwrap();
        let f = shear_fidelity(&nominal_pulse(&g), &eom).unwrap();
        assert!(f.fidelity > 0.98, "{f:?}");
        assert!(f.residual_phase_rms < 0.01);

        // pulse FWHM of half an rf period
        let half_period = 0.5 / 40e9;
        let fwhm_w = 4.0 * std::f64::consts::LN_2 / half_period;
        let long = make_gaussian_pulse(&g, 0.0, fwhm_w, 0.0).unwrap();
        assert_relative_eq!(long.moments().temporal_fwhm, half_period, max_relative = 1e-2);
        let f_long = shear_fidelity(&long, &eom).unwrap();
        assert!(f_long.fidelity < 0.5, "{f_long:?}");
    }

    #[test]
    fn fidelity_tends_to_one_for_short_pulses() {
        let g = TimeFrequencyGrid::new(4096, 2e-15, LAMBDA0).unwrap();
        let eom = EomElement::new(drive_200ghz(0.0), 1.0).unwrap();
        let short = make_gaussian_pulse(&g, 0.0, 5000.0 * GHZ, 0.0).unwrap();
        assert!(shear_fidelity(&short, &eom).unwrap().fidelity > 1.0 - 1e-6);
    }

    #[test]
    fn dispersion_identity_and_spectrum() {
        let g = grid();
        let p = nominal_pulse(&g);
        assert!(
            (overlap(&p, &apply_dispersion(&p, &DispersiveElement::new(0.0, 0.0).unwrap())).unwrap()
                - 1.0)
                .norm()
                < 1e-12
        );
        let d = DispersiveElement::new(3e-25, 1e-38).unwrap();
        let out = apply_dispersion(&p, &d);
        let peak = p.spectral_intensity().iter().cloned().fold(0.0, f64::max);
        for (a, b) in p.spectral_intensity().iter().zip(out.spectral_intensity()) {
            assert!((a - b).abs() <= 1e-12 * peak);
        }
    }

    #[test]
    fn dispersion_follows_gaussian_broadening_law() {
        let g = grid();
        let p = nominal_pulse(&g);
        let fwhm_in = p.moments().temporal_fwhm;
        let sigma_t = fwhm_in / FWHM_PER_SIGMA;
        for &gdd in &[1e-25, 3e-25, -5e-25] {
            let out = apply_dispersion(&p, &DispersiveElement::new(gdd, 0.0).unwrap());
            let expected = fwhm_in * (1.0 + (gdd / (2.0 * sigma_t * sigma_t)).powi(2)).sqrt();
            assert_relative_eq!(out.moments().temporal_fwhm, expected, max_relative = 5e-3);
        }
    }

    /// Fused silica Sellmeier (Malitson) group-velocity dispersion in s²/m.
    fn sellmeier_gvd(lambda: f64) -> f64 {
        let n = |l: f64| {
            let um2 = (l * 1e6).powi(2);
            let terms = [
                (0.696_166_3, 0.068_404_3f64),
                (0.407_942_6, 0.116_241_4),
                (0.897_479_4, 9.896_161),
            ];
            (1.0 + terms.iter().map(|(b, c)| b * um2 / (um2 - c * c)).sum::<f64>()).sqrt()
        };
        let h = 1e-9;
        let d2n = (n(lambda + h) - 2.0 * n(lambda) + n(lambda - h)) / (h * h);
        let c = crate::grid::SPEED_OF_LIGHT;
        lambda.powi(3) / (2.0 * PI * c * c) * d2n
    }

    #[test]
    fn default_fiber_gvd_has_right_magnitude() {
        let oracle = sellmeier_gvd(830e-9);
        assert!(
            (FIBER_GVD_830NM - oracle).abs() / oracle < 0.15,
            "default {FIBER_GVD_830NM:e} vs Sellmeier {oracle:e}"
        );
    }

    #[test]
    fn pigtail_barely_stretches_filtered_photon() {
        let g = grid();
        let bw = wavelength_to_frequency_width(1e-9, LAMBDA0).unwrap();
        let p = make_gaussian_pulse(&g, 0.0, 2.0 * PI * bw, 0.0).unwrap();
        let fiber = DispersiveElement::fiber(2.0);
        assert_relative_eq!(fiber.gdd, 7.2e-26, max_relative = 1e-12);
        let stretch = apply_dispersion(&p, &fiber).moments().temporal_fwhm / p.moments().temporal_fwhm;
        assert!(stretch < 1.05, "stretch {stretch}");
        assert!(stretch > 1.0);
    }

    fn filter(shape: FilterShape, center_detuning: f64, fwhm_hz: f64) -> FilterElement {
        let g = grid();
        FilterElement::new(shape, g.wavelength_of_detuning(center_detuning), fwhm_hz, 0.9).unwrap()
    }

    #[test]
    fn wide_filter_is_transparent() {
        let g = grid();
        let p = nominal_pulse(&g);
        let f = filter(FilterShape::GaussianReal, 0.0, 20e12);
        let (out, t) = apply_filter(&p, &f).unwrap();
        assert!((t - 0.9).abs() < 0.9 * 1e-2);
        assert!(overlap(&p, &out).unwrap().norm_sqr() > 0.999);
        // idempotent once filtered
        let (again, _) = apply_filter(&out, &f).unwrap();
        assert!(overlap(&out, &again).unwrap().norm_sqr() > 0.9999);
    }

    #[test]
    fn matched_gaussian_filter_transmission() {
        let g = grid();
        let bw = wavelength_to_frequency_width(1e-9, LAMBDA0).unwrap();
        let p = make_gaussian_pulse(&g, 0.0, 2.0 * PI * bw, 0.0).unwrap();
        let f = FilterElement::new(FilterShape::GaussianReal, LAMBDA0, bw, 1.0).unwrap();
        let (_, t) = apply_filter(&p, &f).unwrap();
        // ∫ N(0,σ²) exp(-ω²/2σ²) dω = 1/√2
        assert_relative_eq!(t, 0.5f64.sqrt(), max_relative = 1e-9);
    }

    #[test]
    fn filter_outside_band_is_rejected() {
        let g = grid();
        let p = nominal_pulse(&g);
        let f = FilterElement::new(FilterShape::GaussianReal, 400e-9, 1e11, 1.0).unwrap();
        assert!(apply_filter(&p, &f).is_err());
    }

    #[test]
    fn lorentzian_phase_costs_visibility() {
        let g = TimeFrequencyGrid::new(1024, 50e-15, LAMBDA0).unwrap();
        let p = make_gaussian_pulse(&g, 0.0, 435.0 * GHZ, 0.0).unwrap();
        let fwhm = 435e9;
        let cavity = filter(FilterShape::LorentzianComplex, 2.0 * PI * fwhm, fwhm);
        let with_phase = apply_filter(&p, &cavity).unwrap().0;
        // same magnitude response with the phase stripped
        let magnitude: Vec<Complex64> = cavity
            .transfer(&g)
            .unwrap()
            .iter()
            .map(|h| Complex64::new(h.norm(), 0.0))
            .collect();
        let without_phase = p.with_transfer(&magnitude).unwrap().0;
        let best = |r: &PulseMode| {
            (-40..=40)
                .map(|i| overlap(&p, &apply_delay(r, i as f64 * 50e-15)).unwrap().norm_sqr())
                .fold(0.0, f64::max)
        };
        let (v_phase, v_mag) = (best(&with_phase), best(&without_phase));
        assert!(v_phase < v_mag - 1e-3, "{v_phase} vs {v_mag}");
        let phase_span = cavity.transfer(&g).unwrap()[g.n() / 2].arg();
        assert!(phase_span.abs() > 0.5);
    }

    #[test]
    fn delay_shifts_envelope() {
        let g = grid();
        let p = nominal_pulse(&g);
        assert!(overlap(&p, &apply_delay(&p, 0.0)).unwrap().norm_sqr() > 1.0 - 1e-12);
        let d = apply_delay(&p, 17.0 * g.dt());
        let peak = p.samples().iter().map(|s| s.norm()).fold(0.0, f64::max);
        for k in 17..g.n() {
            assert!((d.samples()[k] - p.samples()[k - 17]).norm() < 1e-10 * peak);
        }
        assert_relative_eq!(
            d.carrier_phase(),
            (g.omega0() * 17.0 * g.dt()).rem_euclid(2.0 * PI),
            max_relative = 1e-9
        );
    }

    #[test]
    fn delayed_overlap_matches_autocorrelation() {
        let g = grid();
        let p = nominal_pulse(&g);
        let fwhm_t = p.moments().temporal_fwhm;
        // intensity rms width of a transform-limited Gaussian: 1/(2 σ_ω)
        let sigma_t = 1.0 / (2.0 * 435.0 * GHZ / FWHM_PER_SIGMA);
        assert_relative_eq!(fwhm_t / FWHM_PER_SIGMA, sigma_t, max_relative = 5e-3);
        for &tau in &[0.2e-12, 0.5e-12, 1.3e-12] {
            let o = overlap(&p, &apply_delay(&p, tau)).unwrap().norm();
            let expected = (-tau * tau / (8.0 * sigma_t * sigma_t)).exp();
            assert!((o - expected).abs() < 1e-9, "tau {tau}: {o} vs {expected}");
        }
    }

    #[test]
    fn elements_act_consistently_on_density_matrices() {
        let g = TimeFrequencyGrid::new(256, 50e-15, LAMBDA0).unwrap();
        let p = make_gaussian_pulse(&g, 0.0, 435.0 * GHZ, 1e-25).unwrap();
        let rho = pure_to_density(&p).unwrap();
        let eom = EomElement::new(drive_200ghz(0.4), 0.5).unwrap();
        let f = FilterElement::new(
            FilterShape::LorentzianComplex,
            g.wavelength_of_detuning(150.0 * GHZ),
            300e9,
            1.0,
        )
        .unwrap();
        let d = DispersiveElement::new(2e-25, 0.0).unwrap();

        let pure_out = {
            let (x, _) = apply_eom(&p, &eom);
            let x = apply_dispersion(&x, &d);
            let (x, t) = apply_filter(&x, &f).unwrap();
            (apply_delay(&x, 0.3e-12), t)
        };
        let mixed_out = {
            let (x, _) = apply_eom(&rho, &eom);
            let x = apply_dispersion(&x, &d);
            let (x, t) = apply_filter(&x, &f).unwrap();
            (apply_delay(&x, 0.3e-12), t)
        };
        assert!((pure_out.1 - mixed_out.1).abs() < 1e-10);
        let expected = pure_to_density(&pure_out.0).unwrap();
        assert!((state_overlap(&expected, &mixed_out.0).unwrap() - 1.0).abs() < 1e-9);
        assert!((mixed_out.0.purity() - 1.0).abs() < 1e-9);
    }
}
