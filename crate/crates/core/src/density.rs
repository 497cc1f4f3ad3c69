//! Mixed single-photon states as spectral density matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{Transformer, TimeFrequencyGrid};
use crate::pulse::{Moments, PulseMode};

/// Largest grid on which dense density matrices are built.
pub const MAX_DENSITY_SAMPLES: usize = 1024;

const HERMITIAN_TOL: f64 = 1e-10;

/// Hermitian, unit-trace `ρ(ω_j, ω_k)` with weight `dω`, so that
/// `Σ_j ρ_jj dω = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDensityMatrix {
    grid: TimeFrequencyGrid,
    rho: DMatrix<Complex64>,
}

impl SpectralDensityMatrix {
    /// Wraps a matrix, checking hermiticity and normalizing the trace.
    pub fn from_matrix(grid: TimeFrequencyGrid, rho: DMatrix<Complex64>) -> Result<Self> {
        check_size(&grid)?;
        if rho.nrows() != grid.n() || rho.ncols() != grid.n() {
            return Err(Error::GridMismatch);
        }
        let scale = rho.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if !scale.is_finite() {
            return Err(Error::NonFinite("density matrix"));
        }
        let n = grid.n();
        for j in 0..n {
            for k in j..n {
                if (rho[(j, k)] - rho[(k, j)].conj()).norm() > HERMITIAN_TOL * scale {
                    return Err(Error::param("rho", "matrix is not Hermitian"));
                }
            }
        }
        Self::normalized(grid, rho)
    }

    fn normalized(grid: TimeFrequencyGrid, mut rho: DMatrix<Complex64>) -> Result<Self> {
        let trace = rho.diagonal().iter().map(|v| v.re).sum::<f64>() * grid.domega();
        if !trace.is_finite() {
            return Err(Error::NonFinite("density matrix trace"));
        }
        if trace < 1e-200 {
            return Err(Error::ZeroNorm);
        }
        rho /= Complex64::new(trace, 0.0);
        Ok(Self { grid, rho })
    }

    pub(crate) fn from_raw(grid: TimeFrequencyGrid, rho: DMatrix<Complex64>) -> Result<Self> {
        Self::normalized(grid, rho)
    }

    pub fn grid(&self) -> &TimeFrequencyGrid {
        &self.grid
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.rho
    }

    /// `Σ ρ_jj dω`, unity up to rounding.
    pub fn trace(&self) -> f64 {
        self.rho.diagonal().iter().map(|v| v.re).sum::<f64>() * self.grid.domega()
    }

    /// `Tr[ρ²]` with weight `dω²`.
    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.domega().powi(2)
    }

    /// Eigenvalues of the state (occupation probabilities), descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut scaled = &self.rho * Complex64::new(self.grid.domega(), 0.0);
        flush_negligible(&mut scaled);
        let mut ev: Vec<f64> = if scaled.iter().all(|v| v.im == 0.0) {
            scaled.map(|v| v.re).symmetric_eigenvalues().iter().copied().collect()
        } else {
            scaled.symmetric_eigenvalues().iter().copied().collect()
        };
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// Diagonal `ρ(ω_k, ω_k)`, a density in detuning.
    pub fn spectral_intensity(&self) -> Vec<f64> {
        self.rho.diagonal().iter().map(|v| v.re).collect()
    }

    /// Two-time correlation `ρ(t, t')` with weight `dt`.
    pub fn temporal_matrix(&self) -> DMatrix<Complex64> {
        let t = self.grid.transformer();
        conjugate_by(&self.rho, |col| t.to_time_in_place(col))
    }

    pub fn temporal_intensity(&self) -> Vec<f64> {
        self.temporal_matrix().diagonal().iter().map(|v| v.re).collect()
    }

    pub fn moments(&self) -> Moments {
        Moments::from_intensities(
            &self.grid,
            &self.spectral_intensity(),
            &self.temporal_intensity(),
        )
    }

    /// Applies `exp(i·phase(t))` on both sides: `ρ(t,t') → e^{iφ(t)} ρ(t,t') e^{-iφ(t')}`.
    pub(crate) fn map_temporal_phase(&self, phase: impl Fn(f64) -> f64) -> Self {
        let tr: Transformer = self.grid.transformer();
        let mut m = conjugate_by(&self.rho, |col| tr.to_time_in_place(col));
        let factors: Vec<Complex64> = self
            .grid
            .times()
            .into_iter()
            .map(|t| Complex64::from_polar(1.0, phase(t)))
            .collect();
        let n = self.grid.n();
        for b in 0..n {
            let fb = factors[b].conj();
            for a in 0..n {
                m[(a, b)] *= factors[a] * fb;
            }
        }
        let rho = conjugate_by(&m, |col| tr.to_spectrum_in_place(col));
        Self {
            grid: self.grid,
            rho,
        }
    }

    /// `ρ_jk → H_j ρ_jk H_k*`, returned unnormalized together with its trace.
    pub(crate) fn map_spectrum(&self, transfer: &[Complex64]) -> (DMatrix<Complex64>, f64) {
        let n = self.grid.n();
        let mut rho = self.rho.clone();
        for k in 0..n {
            let hk = transfer[k].conj();
            for j in 0..n {
                rho[(j, k)] *= transfer[j] * hk;
            }
        }
        let trace = rho.diagonal().iter().map(|v| v.re).sum::<f64>() * self.grid.domega();
        (rho, trace)
    }
}

fn check_size(grid: &TimeFrequencyGrid) -> Result<()> {
    if grid.n() > MAX_DENSITY_SAMPLES {
        return Err(Error::InvalidGrid(format!(
            "density matrices are limited to n <= {MAX_DENSITY_SAMPLES}, got {}",
            grid.n()
        )));
    }
    Ok(())
}

/// `T ρ T†` where `apply` runs the linear map `T` over one contiguous column.
fn conjugate_by(
    rho: &DMatrix<Complex64>,
    apply: impl Fn(&mut [Complex64]),
) -> DMatrix<Complex64> {
    let n = rho.nrows();
    let mut m = rho.clone();
    m.as_mut_slice().chunks_mut(n).for_each(&apply);
    let mut m = m.adjoint();
    m.as_mut_slice().chunks_mut(n).for_each(&apply);
    m.adjoint()
}

/// Zeroes entries more than 60 decades below the largest one. The dense
/// eigen and SVD solvers return NaN on Gaussian tails that reach underflow.
pub(crate) fn flush_negligible(m: &mut DMatrix<Complex64>) {
    let floor = m.iter().map(|v| v.norm()).fold(0.0, f64::max) * 1e-60;
    m.iter_mut()
        .filter(|v| v.norm() < floor)
        .for_each(|v| *v = Complex64::new(0.0, 0.0));
}

/// `|ψ⟩⟨ψ|` in the spectral basis.
pub fn pure_to_density(psi: &PulseMode) -> Result<SpectralDensityMatrix> {
    let grid = *psi.grid();
    check_size(&grid)?;
    let amp = psi.to_spectrum().into_amplitudes();
    let n = grid.n();
    let rho = DMatrix::from_fn(n, n, |j, k| amp[j] * amp[k].conj());
    SpectralDensityMatrix::normalized(grid, rho)
}

/// Convex combination `Σ w_i ρ_i`. Weights must be nonnegative and sum to 1.
pub fn mix(states: &[(f64, &SpectralDensityMatrix)]) -> Result<SpectralDensityMatrix> {
    let Some((_, first)) = states.first() else {
        return Err(Error::param("states", "empty mixture"));
    };
    let grid = first.grid;
    let mut total = 0.0;
    let mut rho = DMatrix::<Complex64>::zeros(grid.n(), grid.n());
    for (w, s) in states {
        if !(*w >= 0.0) {
            return Err(Error::param("weight", format!("{w} is negative")));
        }
        if s.grid != grid {
            return Err(Error::GridMismatch);
        }
        total += w;
        rho += &s.rho * Complex64::new(*w, 0.0);
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::param("weight", format!("weights sum to {total}, not 1")));
    }
    SpectralDensityMatrix::normalized(grid, rho)
}

/// `Tr[ρ1 ρ2]` with weight `dω²`.
///
/// Evaluated as `Σ Re(ρ1_jk · conj(ρ2_jk))`, which is exactly symmetric in the
/// two arguments.
pub fn state_overlap(a: &SpectralDensityMatrix, b: &SpectralDensityMatrix) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let sum: f64 = a
        .rho
        .iter()
        .zip(b.rho.iter())
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum();
    Ok(sum * a.grid.domega().powi(2))
}
