//! Gaussian joint spectral amplitude of a type-II down-conversion source,
//! its Schmidt decomposition, and heralding into signal states.
//!
//! The amplitude is the product of a pump envelope along the energy line and
//! a phase-matching ridge at angle θ in the (ω_s, ω_i) detuning plane:
//!
//! ```text
//! f(ω_s, ω_i) ∝ exp(-(ω_s + ω_i - Δ_p)² / 4σ_p²) · exp(-(cosθ ω_s - sinθ ω_i)² / 4σ_m²)
//! ```
//!
//! with σ_p, σ_m the rms widths of the corresponding intensity factors and
//! Δ_p the pump detuning from the sum of the two grid carriers.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::density::SpectralDensityMatrix;
use crate::elements::FilterElement;
use crate::error::{Error, Result};
use crate::grid::{wavelength_to_frequency_width, SpectralSamples, TimeFrequencyGrid, FWHM_PER_SIGMA};
use crate::pulse::PulseMode;
use crate::roots::find_root_log;

/// Parameters of the Gaussian source model, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JsaModel {
    /// Pump vacuum wavelength, m.
    pub pump_center_wavelength: f64,
    /// Pump intensity FWHM, Hz.
    pub pump_fwhm: f64,
    /// Orientation of the phase-matching ridge, rad in (-π/2, π/2].
    pub phase_matching_angle: f64,
    /// Phase-matching intensity FWHM across the ridge, Hz.
    pub phase_matching_fwhm: f64,
    #[serde(skip)]
    pub signal_grid: TimeFrequencyGrid,
    #[serde(skip)]
    pub idler_grid: TimeFrequencyGrid,
}

impl JsaModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.pump_fwhm > 0.0 && self.pump_fwhm.is_finite()) {
            return Err(Error::param("pump_fwhm", "must be > 0"));
        }
        if !(self.phase_matching_fwhm > 0.0 && self.phase_matching_fwhm.is_finite()) {
            return Err(Error::param("phase_matching_fwhm", "must be > 0"));
        }
        let a = self.phase_matching_angle;
        if !(a > -PI / 2.0 && a <= PI / 2.0) {
            return Err(Error::param("phase_matching_angle", "must lie in (-π/2, π/2]"));
        }
        if !(self.pump_center_wavelength > 0.0) {
            return Err(Error::param("pump_center_wavelength", "must be > 0"));
        }
        Ok(())
    }

    fn sigma_pump(&self) -> f64 {
        2.0 * PI * self.pump_fwhm / FWHM_PER_SIGMA
    }

    fn sigma_match(&self) -> f64 {
        2.0 * PI * self.phase_matching_fwhm / FWHM_PER_SIGMA
    }

    fn pump_detuning(&self) -> f64 {
        2.0 * PI * crate::grid::SPEED_OF_LIGHT / self.pump_center_wavelength
            - self.signal_grid.omega0()
            - self.idler_grid.omega0()
    }

    /// Quadratic-form coefficients `(A, B, C)` of `f = exp(-(Aω_s² + Bω_i² + 2Cω_sω_i))`
    /// (about the pump-detuning offset).
    pub fn quadratic_form(&self) -> (f64, f64, f64) {
        let u = 0.25 / self.sigma_pump().powi(2);
        let m = 0.25 / self.sigma_match().powi(2);
        let (s, c) = self.phase_matching_angle.sin_cos();
        (u + m * c * c, u + m * s * s, u - m * c * s)
    }
}

/// Pump intensity FWHM (Hz) of the second harmonic of a Gaussian fundamental
/// with wavelength FWHM `fundamental_fwhm` at `fundamental_wavelength`.
///
/// Squaring a Gaussian field narrows it by √2 in time, so the harmonic's
/// spectrum is √2 wider in frequency than the fundamental's.
pub fn shg_pump_fwhm(fundamental_fwhm: f64, fundamental_wavelength: f64) -> Result<f64> {
    Ok(2f64.sqrt() * wavelength_to_frequency_width(fundamental_fwhm, fundamental_wavelength)?)
}

/// Schmidt number of the continuous Gaussian amplitude, `1/√(1 - r²)` with
/// `r² = C²/(AB)`.
pub fn gaussian_schmidt_number(model: &JsaModel) -> f64 {
    let (a, b, c) = model.quadratic_form();
    1.0 / (1.0 - c * c / (a * b)).sqrt()
}

/// Source parameters that give a heralded signal of intensity FWHM
/// `signal_fwhm` (Hz) and unfiltered heralded purity `purity`, for a given
/// pump width. Returns `(phase_matching_angle, phase_matching_fwhm)`.
///
/// Solved on the continuous Gaussian: the signal marginal has rms
/// `1/√(4A(1-r²))` and the purity is `√(1-r²)`.
pub fn calibrate_source(pump_fwhm: f64, signal_fwhm: f64, purity: f64) -> Result<(f64, f64)> {
    if !(purity > 0.0 && purity <= 1.0) {
        return Err(Error::param("purity", "must lie in (0, 1]"));
    }
    let sigma_p = 2.0 * PI * pump_fwhm / FWHM_PER_SIGMA;
    let sigma_s = 2.0 * PI * signal_fwhm / FWHM_PER_SIGMA;
    let r2 = 1.0 - purity * purity;
    let u = 0.25 / (sigma_p * sigma_p);
    let a = 0.25 / (sigma_s * sigma_s * (1.0 - r2));
    let p = a - u;
    if !(p > 0.0) {
        return Err(Error::param(
            "signal_fwhm",
            "signal cannot be broader than the pump allows",
        ));
    }
    let q = if r2 < 1e-15 {
        u * u / p
    } else {
        // C = u - √(pq) must be negative: the pump alone cannot supply the
        // required correlation when it is much broader than the signal
        let g = |q: f64| (u - (p * q).sqrt()).powi(2) - r2 * a * (u + q);
        find_root_log(g, u * u / p * (1.0 + 1e-12), 1e6 * a, 4000, 1e-14)?
    };
    let theta = (q / p).sqrt().atan();
    let sigma_m = (0.25 / (p + q)).sqrt();
    Ok((theta, sigma_m * FWHM_PER_SIGMA / (2.0 * PI)))
}

/// Sampled joint amplitude, rows on the signal grid and columns on the idler
/// grid, normalized so that `Σ |f|² dω_s dω_i = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct JsaMatrix {
    signal_grid: TimeFrequencyGrid,
    idler_grid: TimeFrequencyGrid,
    f: DMatrix<Complex64>,
}

impl JsaMatrix {
    /// Wraps and normalizes an arbitrary amplitude matrix.
    pub fn from_matrix(
        signal_grid: TimeFrequencyGrid,
        idler_grid: TimeFrequencyGrid,
        mut f: DMatrix<Complex64>,
    ) -> Result<Self> {
        if f.nrows() != signal_grid.n() || f.ncols() != idler_grid.n() {
            return Err(Error::GridMismatch);
        }
        if f.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::NonFinite("joint spectral amplitude"));
        }
        let mass = f.iter().map(|v| v.norm_sqr()).sum::<f64>()
            * signal_grid.domega()
            * idler_grid.domega();
        if mass < 1e-200 {
            return Err(Error::ZeroNorm);
        }
        f /= Complex64::new(mass.sqrt(), 0.0);
        crate::density::flush_negligible(&mut f);
        Ok(Self {
            signal_grid,
            idler_grid,
            f,
        })
    }

    pub fn signal_grid(&self) -> &TimeFrequencyGrid {
        &self.signal_grid
    }

    pub fn idler_grid(&self) -> &TimeFrequencyGrid {
        &self.idler_grid
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.f
    }

    /// The same amplitude with the roles of signal and idler exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            signal_grid: self.idler_grid,
            idler_grid: self.signal_grid,
            f: self.f.transpose(),
        }
    }

    /// `Σ_k |f(ω_j, ω_k)|² dω_i`.
    pub fn signal_marginal(&self) -> Vec<f64> {
        let dwi = self.idler_grid.domega();
        self.f
            .row_iter()
            .map(|row| row.iter().map(|v| v.norm_sqr()).sum::<f64>() * dwi)
            .collect()
    }

    pub fn idler_marginal(&self) -> Vec<f64> {
        self.swapped().signal_marginal()
    }

    fn is_real(&self) -> bool {
        self.f.iter().all(|v| v.im == 0.0)
    }
}

/// Samples the Gaussian model on its grids.
pub fn make_jsa(model: &JsaModel) -> Result<JsaMatrix> {
    model.validate()?;
    let sp = model.sigma_pump();
    let sm = model.sigma_match();
    let dp = model.pump_detuning();
    let (s, c) = model.phase_matching_angle.sin_cos();
    let ws = model.signal_grid.detunings();
    let wi = model.idler_grid.detunings();
    let f = DMatrix::from_fn(ws.len(), wi.len(), |j, k| {
        let sum = ws[j] + wi[k] - dp;
        let ridge = c * ws[j] - s * wi[k];
        Complex64::new(
            (-sum * sum / (4.0 * sp * sp) - ridge * ridge / (4.0 * sm * sm)).exp(),
            0.0,
        )
    });
    JsaMatrix::from_matrix(model.signal_grid, model.idler_grid, f)
}

/// Schmidt coefficients (descending, `Σ λ_k² = 1`) and the leading mode pairs.
#[derive(Debug, Clone)]
pub struct SchmidtDecomposition {
    pub coefficients: Vec<f64>,
    pub signal_modes: Vec<PulseMode>,
    pub idler_modes: Vec<PulseMode>,
}

impl SchmidtDecomposition {
    /// `K = 1 / Σ λ_k⁴`.
    pub fn schmidt_number(&self) -> f64 {
        1.0 / self.coefficients.iter().map(|l| l.powi(4)).sum::<f64>()
    }
}

/// Modes are kept until the captured weight reaches `1 - MODE_WEIGHT_TAIL`.
const MODE_WEIGHT_TAIL: f64 = 1e-12;
const MAX_MODES: usize = 64;

/// Singular value decomposition of the weighted amplitude `f √(dω_s dω_i)`.
pub fn schmidt_decompose(jsa: &JsaMatrix) -> Result<SchmidtDecomposition> {
    if jsa.f.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::NonFinite("joint spectral amplitude"));
    }
    let (dws, dwi) = (jsa.signal_grid.domega(), jsa.idler_grid.domega());
    let mut weighted = &jsa.f * Complex64::new((dws * dwi).sqrt(), 0.0);
    crate::density::flush_negligible(&mut weighted);
    // the dense SVD overshoots on near rank-one inputs; the Hermitian
    // eigenproblem of W W† gives λ² directly
    let gram = &weighted * weighted.adjoint();
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let coefficients: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0).sqrt())
        .collect();
    if coefficients.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("Schmidt coefficients"));
    }

    let mut signal_modes = Vec::new();
    let mut idler_modes = Vec::new();
    let mut captured = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if captured >= 1.0 - MODE_WEIGHT_TAIL || rank >= MAX_MODES {
            break;
        }
        captured += coefficients[rank].powi(2);
        if coefficients[rank] == 0.0 {
            break;
        }
        let u = eig.eigenvectors.column(i);
        let v = weighted.adjoint() * u / Complex64::new(coefficients[rank], 0.0);
        let sig: Vec<Complex64> = u.iter().copied().collect();
        let idl: Vec<Complex64> = v.iter().map(|z| z.conj()).collect();
        signal_modes.push(PulseMode::from_spectrum(SpectralSamples::new(jsa.signal_grid, sig)?)?);
        idler_modes.push(PulseMode::from_spectrum(SpectralSamples::new(jsa.idler_grid, idl)?)?);
    }
    Ok(SchmidtDecomposition {
        coefficients,
        signal_modes,
        idler_modes,
    })
}

/// Heralded signal state and the probability that a pair produces a herald.
#[derive(Debug, Clone)]
pub struct Heralded {
    pub signal_state: SpectralDensityMatrix,
    pub herald_probability: f64,
}

/// Conditions the signal on an idler detection behind `idler_filter`:
/// `ρ(ω, ω') = Σ_k f(ω, ω_k) |F(ω_k)|² f*(ω', ω_k) dω_i`.
pub fn herald(jsa: &JsaMatrix, idler_filter: Option<&FilterElement>) -> Result<Heralded> {
    let n_i = jsa.idler_grid.n();
    let (weights, peak) = match idler_filter {
        Some(filter) => (
            filter
                .transfer(&jsa.idler_grid)?
                .iter()
                .map(|h| h.norm_sqr())
                .collect::<Vec<f64>>(),
            filter.peak_transmission,
        ),
        None => (vec![1.0; n_i], 1.0),
    };
    let dwi = jsa.idler_grid.domega();
    let rho = if jsa.is_real() {
        let mut g = jsa.f.map(|v| v.re);
        for (k, mut col) in g.column_iter_mut().enumerate() {
            col *= (weights[k] * dwi).sqrt();
        }
        let r = &g * g.transpose();
        r.map(|v| Complex64::new(v, 0.0))
    } else {
        let mut g = jsa.f.clone();
        for (k, mut col) in g.column_iter_mut().enumerate() {
            col *= Complex64::new((weights[k] * dwi).sqrt(), 0.0);
        }
        &g * g.adjoint()
    };
    let mass = rho.diagonal().iter().map(|v| v.re).sum::<f64>() * jsa.signal_grid.domega();
    let signal_state = SpectralDensityMatrix::from_raw(jsa.signal_grid, rho)?;
    Ok(Heralded {
        signal_state,
        herald_probability: mass * peak,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elements::FilterShape;
    use crate::pulse::fwhm;
    use approx::assert_relative_eq;

    const LAMBDA0: f64 = 831.5e-9;

    fn grid(n: usize, dt: f64) -> TimeFrequencyGrid {
        TimeFrequencyGrid::new(n, dt, LAMBDA0).unwrap()
    }

    fn model(g: TimeFrequencyGrid, pump_fwhm: f64, angle: f64, pm_fwhm: f64) -> JsaModel {
        JsaModel {
            pump_center_wavelength: LAMBDA0 / 2.0,
            pump_fwhm,
            phase_matching_angle: angle,
            phase_matching_fwhm: pm_fwhm,
            signal_grid: g,
            idler_grid: g,
        }
    }

    /// Factorable: the cross term `u - m cosθ sinθ` vanishes.
    fn factorable(g: TimeFrequencyGrid, pump_fwhm: f64, angle: f64) -> JsaModel {
        let pm_fwhm = pump_fwhm * ((2.0 * angle).sin() / 2.0).sqrt();
        model(g, pump_fwhm, angle, pm_fwhm)
    }

    #[test]
    fn factorable_source_has_unit_schmidt_number() {
        let g = grid(256, 100e-15);
        let m = factorable(g, 1.0e12, PI / 4.0);
        assert!(m.quadratic_form().2.abs() < 1e-12 * m.quadratic_form().0);
        assert_relative_eq!(gaussian_schmidt_number(&m), 1.0, max_relative = 1e-12);
        let d = schmidt_decompose(&make_jsa(&m).unwrap()).unwrap();
        assert!((d.schmidt_number() - 1.0).abs() < 1e-6, "{:?}", &d.coefficients[..4]);
        let h = herald(&make_jsa(&m).unwrap(), None).unwrap();
        assert!((h.signal_state.purity() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn narrow_ridge_at_45_degrees_is_strongly_correlated() {
        let g = grid(256, 100e-15);
        let wide = schmidt_decompose(&make_jsa(&model(g, 1.0e12, PI / 4.0, 0.5e12)).unwrap())
            .unwrap()
            .schmidt_number();
        let narrow = schmidt_decompose(&make_jsa(&model(g, 1.0e12, PI / 4.0, 0.05e12)).unwrap())
            .unwrap()
            .schmidt_number();
        assert!(narrow > 5.0 && narrow > 3.0 * wide, "{narrow} vs {wide}");
    }

    #[test]
    fn symmetric_source_has_equal_marginals() {
        let g = grid(128, 100e-15);
        let jsa = make_jsa(&model(g, 1.0e12, PI / 4.0, 0.3e12)).unwrap();
        for (a, b) in jsa.signal_marginal().iter().zip(jsa.idler_marginal()) {
            assert!((a - b).abs() < 1e-12 * a.abs().max(1e-30) + 1e-30);
        }
    }

    #[test]
    fn hand_computable_svd() {
        // [[3, 0], [4, 5]] has singular values √45 and √5
        let g = grid(64, 100e-15);
        let mut f = DMatrix::<Complex64>::zeros(64, 64);
        f[(10, 20)] = Complex64::new(3.0, 0.0);
        f[(11, 20)] = Complex64::new(4.0, 0.0);
        f[(11, 21)] = Complex64::new(0.0, 5.0);
        let jsa = JsaMatrix::from_matrix(g, g, f).unwrap();
        let d = schmidt_decompose(&jsa).unwrap();
        let norm = 50f64.sqrt();
        assert!((d.coefficients[0] - 45f64.sqrt() / norm).abs() < 1e-10);
        assert!((d.coefficients[1] - 5f64.sqrt() / norm).abs() < 1e-10);
        assert!(d.coefficients[2..].iter().all(|&c| c < 1e-12));
        assert_eq!(d.signal_modes.len(), 2);
    }

    #[test]
    fn rejects_non_finite() {
        let g = grid(64, 100e-15);
        let mut f = DMatrix::<Complex64>::from_element(64, 64, Complex64::new(1.0, 0.0));
        f[(3, 3)] = Complex64::new(f64::NAN, 0.0);
        assert!(JsaMatrix::from_matrix(g, g, f).is_err());
    }

    #[test]
    fn gaussian_schmidt_number_matches_closed_form() {
        let g = grid(512, 50e-15);
        for &(angle, pm) in &[(0.3, 0.6e12), (PI / 4.0, 0.25e12), (-0.4, 0.8e12)] {
            let m = model(g, 1.2e12, angle, pm);
            let k = schmidt_decompose(&make_jsa(&m).unwrap()).unwrap().schmidt_number();
            let closed = gaussian_schmidt_number(&m);
            assert!((k - closed).abs() / closed < 0.01, "angle {angle}: {k} vs {closed}");
        }
    }

    #[test]
    fn unfiltered_herald_purity_is_inverse_schmidt_number() {
        let g = grid(256, 100e-15);
        let jsa = make_jsa(&model(g, 1.0e12, 0.5, 0.4e12)).unwrap();
        let d = schmidt_decompose(&jsa).unwrap();
        let h = herald(&jsa, None).unwrap();
        let sum4: f64 = d.coefficients.iter().map(|l| l.powi(4)).sum();
        assert!((h.signal_state.purity() - sum4).abs() < 1e-6);
        assert!(d.schmidt_number() > 1.1);
        assert!((h.herald_probability - 1.0).abs() < 1e-12);
        let total: f64 = d.coefficients.iter().map(|l| l * l).sum();
        assert!((total - 1.0).abs() < 1e-9);
        // diagonal of the unfiltered state is the signal marginal
        for (a, b) in h.signal_state.spectral_intensity().iter().zip(jsa.signal_marginal()) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1e-15) + 1e-25);
        }
        let ev = h.signal_state.eigenvalues();
        assert!(ev.iter().all(|&e| e > -1e-9), "{:?}", &ev[ev.len() - 3..]);
        assert!((h.signal_state.trace() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn narrower_idler_filter_raises_purity() {
        let g = grid(512, 50e-15);
        // K ≈ 1.2 source
        let (angle, pm) = calibrate_source(1.0e12, 0.4e12, 1.0 / 1.2).unwrap();
        let jsa = make_jsa(&model(g, 1.0e12, angle, pm)).unwrap();
        let k = schmidt_decompose(&jsa).unwrap().schmidt_number();
        assert!((k - 1.2).abs() < 0.03, "K = {k}");
        let mut last = 0.0;
        for &nm in &[3.0, 2.0, 1.0, 0.5, 0.3] {
            let bw = wavelength_to_frequency_width(nm * 1e-9, LAMBDA0).unwrap();
            let f = FilterElement::new(FilterShape::GaussianReal, LAMBDA0, bw, 1.0).unwrap();
            let h = herald(&jsa, Some(&f)).unwrap();
            let purity = h.signal_state.purity();
            assert!(purity > last, "{nm} nm: {purity} <= {last}");
            assert!(h.herald_probability < 1.0);
            last = purity;
        }
    }

    #[test]
    fn calibration_hits_targets_on_the_grid() {
        let g = grid(1024, 50e-15);
        let pump = shg_pump_fwhm(10e-9, LAMBDA0).unwrap();
        let (angle, pm) = calibrate_source(pump, 435e9, 0.90).unwrap();
        let m = model(g, pump, angle, pm);
        assert_relative_eq!(1.0 / gaussian_schmidt_number(&m), 0.90, max_relative = 1e-9);
        let jsa = make_jsa(&m).unwrap();
        let width = fwhm(&jsa.signal_marginal()) * g.domega() / (2.0 * PI);
        assert!((width - 435e9).abs() / 435e9 < 0.01, "{width}");
        let purity = herald(&jsa, None).unwrap().signal_state.purity();
        assert!((purity - 0.90).abs() < 0.005, "{purity}");
    }
}
