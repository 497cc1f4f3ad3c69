//! Experiment description read from TOML.
//!
//! Keys carry their unit as a suffix (`_nm`, `_ghz`, `_fs`, `_fs2`, `_ps`,
//! `_mhz`, `_s`); angles without a suffix are radians and drive amplitudes
//! are volts. [`ExperimentConfig::prepare`] turns a parsed file into the
//! states and instrument settings a run needs, and is also the validation
//! step.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::counting::{calibrate_mu, CountingModel};
use crate::density::MAX_DENSITY_SAMPLES;
use crate::elements::{
    analytic_shear, apply_delay, apply_dispersion, apply_eom, apply_filter, ideal_shear,
    shear_fidelity, DispersiveElement, EomElement, FilterElement, FilterShape, RfDrive,
};
use crate::error::{Error, Result};
use crate::grid::{wavelength_to_frequency_width, TimeFrequencyGrid};
use crate::instruments::SpectrometerSettings;
use crate::pulse::make_gaussian_pulse;
use crate::source::{
    calibrate_source, gaussian_schmidt_number, herald, make_jsa, shg_pump_fwhm, JsaMatrix, JsaModel,
};
use crate::state::State;

const NM: f64 = 1e-9;
const GHZ: f64 = 1e9;
const FS: f64 = 1e-15;
const PS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub source: SourceConfig,
    #[serde(default)]
    pub elements: Vec<ElementConfig>,
    #[serde(default)]
    pub reference: Option<ReferenceConfig>,
    pub instrument: InstrumentConfig,
    #[serde(default)]
    pub counting: CountingConfig,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub dt_fs: f64,
    #[serde(default = "default_lambda0")]
    pub lambda0_nm: f64,
}

fn default_lambda0() -> f64 {
    831.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceConfig {
    /// A pure Gaussian single-photon mode.
    Gaussian {
        #[serde(default)]
        center_ghz: f64,
        fwhm_ghz: f64,
        #[serde(default)]
        chirp_fs2: f64,
    },
    /// Heralded signal of the Gaussian down-conversion model. Missing ridge
    /// parameters are calibrated to `target_fwhm_ghz` and `target_purity`.
    Spdc {
        #[serde(default = "default_pump_center")]
        pump_center_nm: f64,
        /// Pump FWHM; defaults to the second harmonic of a
        /// `fundamental_fwhm_nm` fundamental at twice the pump wavelength.
        pump_fwhm_ghz: Option<f64>,
        #[serde(default = "default_fundamental_fwhm")]
        fundamental_fwhm_nm: f64,
        phase_matching_angle_deg: Option<f64>,
        phase_matching_fwhm_ghz: Option<f64>,
        #[serde(default = "default_target_fwhm")]
        target_fwhm_ghz: f64,
        #[serde(default = "default_target_purity")]
        target_purity: f64,
        herald_filter: Option<FilterConfig>,
    },
}

fn default_pump_center() -> f64 {
    415.75
}
fn default_fundamental_fwhm() -> f64 {
    10.0
}
fn default_target_fwhm() -> f64 {
    435.0
}
fn default_target_purity() -> f64 {
    0.90
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "default_shape")]
    pub shape: FilterShape,
    pub center_nm: f64,
    #[serde(default = "default_filter_fwhm")]
    pub fwhm_nm: f64,
    #[serde(default = "one")]
    pub peak_transmission: f64,
}

fn default_shape() -> FilterShape {
    FilterShape::GaussianReal
}
fn default_filter_fwhm() -> f64 {
    1.0
}
fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}

impl FilterConfig {
    pub fn resolve(&self) -> Result<FilterElement> {
        let center = self.center_nm * NM;
        let fwhm = wavelength_to_frequency_width(self.fwhm_nm * NM, center)?;
        FilterElement::new(self.shape, center, fwhm, self.peak_transmission)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ElementConfig {
    Eom {
        v0: f64,
        v_pi: f64,
        nu_ghz: f64,
        #[serde(default)]
        phi0: f64,
        #[serde(default = "half")]
        transmission: f64,
    },
    Dispersion {
        #[serde(default)]
        gdd_fs2: f64,
        #[serde(default)]
        tod_fs3: f64,
        /// Adds the GDD of this much standard fiber.
        #[serde(default)]
        fiber_length_m: f64,
    },
    Filter {
        #[serde(default = "default_shape")]
        shape: FilterShape,
        center_nm: f64,
        #[serde(default = "default_filter_fwhm")]
        fwhm_nm: f64,
        #[serde(default = "one")]
        peak_transmission: f64,
    },
    Delay {
        delay_ps: f64,
    },
    /// Exact linear temporal phase, for comparison runs.
    Shear {
        shift_ghz: f64,
    },
}

/// Library form of an element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    Eom(EomElement),
    Dispersion(DispersiveElement),
    Filter(FilterElement),
    Delay(f64),
    Shear(f64),
}

impl ElementConfig {
    pub fn resolve(&self) -> Result<Element> {
        Ok(match *self {
            ElementConfig::Eom {
                v0,
                v_pi,
                nu_ghz,
                phi0,
                transmission,
            } => Element::Eom(EomElement::new(RfDrive::new(v0, v_pi, nu_ghz * GHZ, phi0)?, transmission)?),
            ElementConfig::Dispersion {
                gdd_fs2,
                tod_fs3,
                fiber_length_m,
            } => {
                if !(fiber_length_m >= 0.0) {
                    return Err(Error::param("fiber_length_m", "must be >= 0"));
                }
                let fiber = DispersiveElement::fiber(fiber_length_m).gdd;
                Element::Dispersion(DispersiveElement::new(
                    gdd_fs2 * FS * FS + fiber,
                    tod_fs3 * FS * FS * FS,
                )?)
            }
            ElementConfig::Filter {
                shape,
                center_nm,
                fwhm_nm,
                peak_transmission,
            } => Element::Filter(
                FilterConfig {
                    shape,
                    center_nm,
                    fwhm_nm,
                    peak_transmission,
                }
                .resolve()?,
            ),
            ElementConfig::Delay { delay_ps } => {
                if !delay_ps.is_finite() {
                    return Err(Error::param("delay_ps", "must be finite"));
                }
                Element::Delay(delay_ps * PS)
            }
            ElementConfig::Shear { shift_ghz } => {
                if !shift_ghz.is_finite() {
                    return Err(Error::param("shift_ghz", "must be finite"));
                }
                Element::Shear(2.0 * PI * shift_ghz * GHZ)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceKind {
    /// A pure Gaussian mode given by `center_ghz`, `fwhm_ghz`, `chirp_fs2`.
    Gaussian,
    /// The idler photon of the down-conversion source, unconditioned.
    Idler,
    /// A copy of the source signal before the signal-arm elements.
    Signal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub kind: ReferenceKind,
    pub center_ghz: Option<f64>,
    pub fwhm_ghz: Option<f64>,
    pub chirp_fs2: Option<f64>,
    #[serde(default)]
    pub elements: Vec<ElementConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstrumentConfig {
    Spectrum {
        #[serde(default = "default_resolution")]
        resolution_ghz: f64,
        start_nm: f64,
        stop_nm: f64,
        step_nm: f64,
    },
    Hom {
        start_ps: f64,
        stop_ps: f64,
        step_ps: f64,
    },
    G2 {
        /// Monte Carlo pulse count; 0 runs only the analytic expectation.
        #[serde(default)]
        pulses: u64,
    },
}

fn default_resolution() -> f64 {
    crate::instruments::DEFAULT_RESOLUTION / GHZ
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountingConfig {
    /// Mean pair number; when absent it is calibrated to `target_g2`.
    pub mu: Option<f64>,
    #[serde(default = "default_target_g2")]
    pub target_g2: f64,
    #[serde(default = "default_eta_signal")]
    pub eta_signal: f64,
    #[serde(default = "default_eta_idler")]
    pub eta_idler: f64,
    #[serde(default = "default_dark")]
    pub dark_prob: f64,
    #[serde(default = "default_rep_rate")]
    pub rep_rate_mhz: f64,
    #[serde(default = "one")]
    pub integration_time_s: f64,
}

fn default_target_g2() -> f64 {
    0.038
}
fn default_eta_signal() -> f64 {
    CountingModel::default().eta_signal
}
fn default_eta_idler() -> f64 {
    CountingModel::default().eta_idler
}
fn default_dark() -> f64 {
    CountingModel::default().dark_prob
}
fn default_rep_rate() -> f64 {
    CountingModel::default().rep_rate / 1e6
}

impl Default for CountingConfig {
    fn default() -> Self {
        Self {
            mu: None,
            target_g2: default_target_g2(),
            eta_signal: default_eta_signal(),
            eta_idler: default_eta_idler(),
            dark_prob: default_dark(),
            rep_rate_mhz: default_rep_rate(),
            integration_time_s: 1.0,
        }
    }
}

impl CountingConfig {
    /// The counting model, with μ calibrated when not given.
    pub fn resolve(&self) -> Result<CountingModel> {
        let mut model = CountingModel {
            mu: self.mu.unwrap_or(0.0),
            eta_signal: self.eta_signal,
            eta_idler: self.eta_idler,
            dark_prob: self.dark_prob,
            rep_rate: self.rep_rate_mhz * 1e6,
            integration_time: self.integration_time_s,
        };
        model.validate()?;
        if self.mu.is_none() {
            model.mu = calibrate_mu(&model, self.target_g2)?;
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: String,
}

fn default_seed() -> u64 {
    1
}
fn default_output() -> String {
    "out".into()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            output_dir: default_output(),
        }
    }
}

/// Source-model quantities reported with a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceReport {
    pub pump_fwhm_ghz: f64,
    pub phase_matching_angle_deg: f64,
    pub phase_matching_fwhm_ghz: f64,
    pub schmidt_number_closed_form: f64,
    pub heralded_purity: f64,
    pub herald_probability: f64,
}

/// Per-EOM derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EomReport {
    pub index: usize,
    pub analytic_shear_ghz: f64,
    /// Only for pure input states.
    pub shear_fidelity: Option<f64>,
    pub residual_phase_rms: Option<f64>,
}

/// An arm after all of its elements.
#[derive(Debug, Clone)]
pub struct Arm {
    pub state: State,
    /// Product of element transmissions.
    pub transmission: f64,
    pub eoms: Vec<EomReport>,
}

#[derive(Debug, Clone)]
pub enum Instrument {
    Spectrum(SpectrometerSettings),
    Hom(Vec<f64>),
    G2 { pulses: u64 },
}

/// Everything a run needs, built and checked.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub grid: TimeFrequencyGrid,
    pub signal: Arm,
    pub reference: Option<Arm>,
    pub source: Option<SourceReport>,
    /// Idler-arm herald transmission; 1 for a direct Gaussian source.
    pub herald_probability: f64,
    pub counting: CountingModel,
    pub instrument: Instrument,
    pub seed: u64,
}

/// Runs `state` through `elements` in order.
pub fn propagate(state: State, elements: &[Element]) -> Result<Arm> {
    let mut state = state;
    let mut transmission = 1.0;
    let mut eoms = Vec::new();
    for (index, element) in elements.iter().enumerate() {
        state = match element {
            Element::Eom(eom) => {
                let (fidelity, residual) = match &state {
                    State::Pure(p) => {
                        let f = shear_fidelity(p, eom)?;
                        (Some(f.fidelity), Some(f.residual_phase_rms))
                    }
                    State::Mixed(_) => (None, None),
                };
                eoms.push(EomReport {
                    index,
                    analytic_shear_ghz: analytic_shear(&eom.drive) / (2.0 * PI * GHZ),
                    shear_fidelity: fidelity,
                    residual_phase_rms: residual,
                });
                let (out, t) = apply_eom(&state, eom);
                transmission *= t;
                out
            }
            Element::Dispersion(d) => apply_dispersion(&state, d),
            Element::Filter(f) => {
                let (out, t) = apply_filter(&state, f)?;
                transmission *= t;
                out
            }
            Element::Delay(tau) => apply_delay(&state, *tau),
            Element::Shear(omega) => ideal_shear(&state, *omega),
        };
    }
    Ok(Arm {
        state,
        transmission,
        eoms,
    })
}

fn resolve_all(elements: &[ElementConfig]) -> Result<Vec<Element>> {
    elements.iter().map(ElementConfig::resolve).collect()
}

fn gaussian_state(grid: &TimeFrequencyGrid, center_ghz: f64, fwhm_ghz: f64, chirp_fs2: f64) -> Result<State> {
    Ok(State::Pure(make_gaussian_pulse(
        grid,
        2.0 * PI * center_ghz * GHZ,
        2.0 * PI * fwhm_ghz * GHZ,
        chirp_fs2 * FS * FS,
    )?))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn grid(&self) -> Result<TimeFrequencyGrid> {
        TimeFrequencyGrid::new(self.grid.n, self.grid.dt_fs * FS, self.grid.lambda0_nm * NM)
    }

    /// The source JSA model with any missing ridge parameters calibrated.
    pub fn jsa_model(&self) -> Result<Option<JsaModel>> {
        let SourceConfig::Spdc {
            pump_center_nm,
            pump_fwhm_ghz,
            fundamental_fwhm_nm,
            phase_matching_angle_deg,
            phase_matching_fwhm_ghz,
            target_fwhm_ghz,
            target_purity,
            ..
        } = self.source
        else {
            return Ok(None);
        };
        let grid = self.grid()?;
        if grid.n() > MAX_DENSITY_SAMPLES {
            return Err(Error::InvalidGrid(format!(
                "a down-conversion source needs n <= {MAX_DENSITY_SAMPLES}, got {}",
                grid.n()
            )));
        }
        let pump_fwhm = match pump_fwhm_ghz {
            Some(f) => f * GHZ,
            None => shg_pump_fwhm(fundamental_fwhm_nm * NM, 2.0 * pump_center_nm * NM)?,
        };
        let (angle, pm_fwhm) = match (phase_matching_angle_deg, phase_matching_fwhm_ghz) {
            (Some(a), Some(w)) => (a.to_radians(), w * GHZ),
            (None, None) => calibrate_source(pump_fwhm, target_fwhm_ghz * GHZ, target_purity)?,
            _ => {
                return Err(Error::param(
                    "phase_matching",
                    "give both angle and FWHM, or neither to calibrate",
                ))
            }
        };
        let model = JsaModel {
            pump_center_wavelength: pump_center_nm * NM,
            pump_fwhm,
            phase_matching_angle: angle,
            phase_matching_fwhm: pm_fwhm,
            signal_grid: grid,
            idler_grid: grid,
        };
        model.validate()?;
        Ok(Some(model))
    }

    /// Builds and checks the whole experiment.
    pub fn prepare(&self) -> Result<Experiment> {
        let grid = self.grid()?;
        let signal_elements = resolve_all(&self.elements)?;
        let counting = self.counting.resolve()?;

        let mut jsa: Option<JsaMatrix> = None;
        let mut source_report = None;
        let (source_state, herald_probability) = match &self.source {
            SourceConfig::Gaussian {
                center_ghz,
                fwhm_ghz,
                chirp_fs2,
            } => (gaussian_state(&grid, *center_ghz, *fwhm_ghz, *chirp_fs2)?, 1.0),
            SourceConfig::Spdc { herald_filter, .. } => {
                let model = self.jsa_model()?.expect("spdc source has a model");
                let matrix = make_jsa(&model)?;
                let filter = herald_filter.as_ref().map(FilterConfig::resolve).transpose()?;
                let h = herald(&matrix, filter.as_ref())?;
                source_report = Some(SourceReport {
                    pump_fwhm_ghz: model.pump_fwhm / GHZ,
                    phase_matching_angle_deg: model.phase_matching_angle.to_degrees(),
                    phase_matching_fwhm_ghz: model.phase_matching_fwhm / GHZ,
                    schmidt_number_closed_form: gaussian_schmidt_number(&model),
                    heralded_purity: h.signal_state.purity(),
                    herald_probability: h.herald_probability,
                });
                jsa = Some(matrix);
                (State::Mixed(h.signal_state), h.herald_probability)
            }
        };

        let reference = match &self.reference {
            None => None,
            Some(r) => {
                let state = match r.kind {
                    ReferenceKind::Gaussian => {
                        let fwhm = r
                            .fwhm_ghz
                            .ok_or_else(|| Error::param("reference.fwhm_ghz", "required for a gaussian reference"))?;
                        gaussian_state(&grid, r.center_ghz.unwrap_or(0.0), fwhm, r.chirp_fs2.unwrap_or(0.0))?
                    }
                    ReferenceKind::Idler => {
                        let matrix = jsa.as_ref().ok_or_else(|| {
                            Error::param("reference.kind", "an idler reference needs an spdc source")
                        })?;
                        State::Mixed(herald(&matrix.swapped(), None)?.signal_state)
                    }
                    ReferenceKind::Signal => source_state.clone(),
                };
                if r.kind != ReferenceKind::Gaussian
                    && (r.center_ghz.is_some() || r.fwhm_ghz.is_some() || r.chirp_fs2.is_some())
                {
                    return Err(Error::param(
                        "reference",
                        "center_ghz, fwhm_ghz and chirp_fs2 apply to gaussian references only",
                    ));
                }
                Some(propagate(state, &resolve_all(&r.elements)?)?)
            }
        };

        let signal = propagate(source_state, &signal_elements)?;

        let instrument = match &self.instrument {
            InstrumentConfig::Spectrum {
                resolution_ghz,
                start_nm,
                stop_nm,
                step_nm,
            } => {
                let s = SpectrometerSettings {
                    resolution_fwhm: resolution_ghz * GHZ,
                    start: start_nm * NM,
                    stop: stop_nm * NM,
                    step: step_nm * NM,
                };
                s.validate()?;
                for lambda in [s.start, s.stop] {
                    if grid.detuning_of_wavelength(lambda).abs() >= grid.half_band() {
                        return Err(Error::OutOfRange(format!(
                            "spectrometer range end {:.4} nm lies outside the grid band",
                            lambda / NM
                        )));
                    }
                }
                Instrument::Spectrum(s)
            }
            InstrumentConfig::Hom {
                start_ps,
                stop_ps,
                step_ps,
            } => {
                if reference.is_none() {
                    return Err(Error::param("reference", "a hom instrument needs a [reference] block"));
                }
                if !(step_ps > &0.0) || !(stop_ps > start_ps) {
                    return Err(Error::param("instrument", "need start_ps < stop_ps and step_ps > 0"));
                }
                let n = ((stop_ps - start_ps) / step_ps + 1e-9).floor() as usize + 1;
                let delays: Vec<f64> = (0..n).map(|i| (start_ps + i as f64 * step_ps) * PS).collect();
                let limit = 0.5 * grid.window();
                if delays.iter().any(|d| d.abs() >= limit) {
                    return Err(Error::OutOfRange(format!(
                        "delays must stay within ±{:.3} ps of the time window",
                        limit / PS
                    )));
                }
                Instrument::Hom(delays)
            }
            InstrumentConfig::G2 { pulses } => Instrument::G2 { pulses: *pulses },
        };

        Ok(Experiment {
            grid,
            signal,
            reference,
            source: source_report,
            herald_probability,
            counting,
            instrument,
            seed: self.run.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPECTRUM: &str = r#"
        [grid]
        n = 1024
        dt_fs = 40

        [source]
        kind = "gaussian"
        fwhm_ghz = 435

        [[elements]]
        type = "eom"
        v0 = 1.5915
        v_pi = 1.0
        nu_ghz = 40

        [instrument]
        kind = "spectrum"
        start_nm = 829.5
        stop_nm = 833.5
        step_nm = 0.02
    "#;

    #[test]
    fn parses_and_prepares() {
        let cfg = ExperimentConfig::from_toml_str(SPECTRUM).unwrap();
        let exp = cfg.prepare().unwrap();
        assert_eq!(exp.signal.eoms.len(), 1);
        assert!((exp.signal.eoms[0].analytic_shear_ghz - 200.0).abs() < 0.1);
        assert!((exp.signal.transmission - 0.5).abs() < 1e-12);
        let mu = exp.counting.mu;
        assert!(mu > 0.0 && mu < 0.1);
    }

    #[test]
    fn unknown_element_type_is_rejected() {
        let text = SPECTRUM.replace("type = \"eom\"", "type = \"mirror\"");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
        let text = SPECTRUM.replace("nu_ghz = 40", "nu_ghz = 40\nbogus = 1");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn instrument_outside_band_is_rejected() {
        let text = SPECTRUM.replace("start_nm = 829.5", "start_nm = 700");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert!(matches!(cfg.prepare(), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn hom_needs_reference() {
        let text = SPECTRUM.replace(
            "kind = \"spectrum\"\n        start_nm = 829.5\n        stop_nm = 833.5\n        step_nm = 0.02",
            "kind = \"hom\"\n        start_ps = -2\n        stop_ps = 2\n        step_ps = 0.1",
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert!(cfg.prepare().is_err());
    }

    #[test]
    fn spdc_source_calibrates_by_default() {
        let text = r#"
            [grid]
            n = 512
            dt_fs = 50
            [source]
            kind = "spdc"
            [instrument]
            kind = "g2"
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let exp = cfg.prepare().unwrap();
        let src = exp.source.unwrap();
        assert!((src.schmidt_number_closed_form - 1.0 / 0.9).abs() < 1e-9);
        assert!((src.heralded_purity - 0.9).abs() < 0.01);
    }
}
