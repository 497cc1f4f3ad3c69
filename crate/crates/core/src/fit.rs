//! Weighted Levenberg–Marquardt fits of Gaussian peaks and inverted-Gaussian
//! dips to count series.

use nalgebra::{Matrix4, Vector4};
use serde::Serialize;

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const RELATIVE_STEP_TOL: f64 = 1e-8;
const MIN_POINTS: usize = 8;

/// Four-parameter line-shape parameters.
///
/// For a peak: `offset + amplitude·exp(-(x - center)²/(2 width²))`.
/// For a dip: `offset·(1 - amplitude·exp(-(x - center)²/(2 width²)))`, so
/// `offset` is the baseline and `amplitude` the visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitParams {
    pub offset: f64,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl FitParams {
    fn from_vector(v: &Vector4<f64>) -> Self {
        Self {
            offset: v[0],
            amplitude: v[1],
            center: v[2],
            width: v[3],
        }
    }

    /// Intensity FWHM of the line, `2√(2 ln 2)·width`.
    pub fn fwhm(&self) -> f64 {
        crate::grid::FWHM_PER_SIGMA * self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitResult {
    pub params: FitParams,
    /// One-sigma uncertainties from `(JᵀWJ)⁻¹`.
    pub uncertainties: FitParams,
    pub reduced_chi_square: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Copy)]
enum Shape {
    Peak,
    Dip,
}

impl Shape {
    /// Model value and gradient with respect to (offset, amplitude, center, width).
    fn eval(self, p: &Vector4<f64>, x: f64) -> (f64, Vector4<f64>) {
        let (b, a, c, w) = (p[0], p[1], p[2], p[3]);
        let d = x - c;
        let g = (-d * d / (2.0 * w * w)).exp();
        let dg_dc = g * d / (w * w);
        let dg_dw = g * d * d / (w * w * w);
        match self {
            Shape::Peak => (b + a * g, Vector4::new(1.0, g, a * dg_dc, a * dg_dw)),
            Shape::Dip => (
                b * (1.0 - a * g),
                Vector4::new(1.0 - a * g, -b * g, -b * a * dg_dc, -b * a * dg_dw),
            ),
        }
    }
}

/// Fits `offset + amplitude·exp(-(x - center)²/(2 width²))`.
pub fn fit_gaussian(x: &[f64], counts: &[f64]) -> Result<FitResult> {
    fit(Shape::Peak, x, counts)
}

/// Fits `offset·(1 - amplitude·exp(-(x - center)²/(2 width²)))`.
pub fn fit_inverted_gaussian(x: &[f64], counts: &[f64]) -> Result<FitResult> {
    fit(Shape::Dip, x, counts)
}

fn initial_guess(shape: Shape, x: &[f64], y: &[f64]) -> Vector4<f64> {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let excess: Vec<f64> = match shape {
        Shape::Peak => y.iter().map(|v| v - lo).collect(),
        Shape::Dip => y.iter().map(|v| hi - v).collect(),
    };
    let total: f64 = excess.iter().sum();
    let center = x.iter().zip(&excess).map(|(x, e)| x * e).sum::<f64>() / total;
    let var = x
        .iter()
        .zip(&excess)
        .map(|(x, e)| (x - center).powi(2) * e)
        .sum::<f64>()
        / total;
    let span = x.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - x.iter().copied().fold(f64::INFINITY, f64::min);
    let width = var.sqrt().clamp(span / (4.0 * x.len() as f64), span);
    match shape {
        Shape::Peak => Vector4::new(lo, hi - lo, center, width),
        Shape::Dip => Vector4::new(hi, (hi - lo) / hi, center, width),
    }
}

struct Normal {
    chi2: f64,
    jtj: Matrix4<f64>,
    jtr: Vector4<f64>,
}

fn normal_equations(shape: Shape, p: &Vector4<f64>, x: &[f64], y: &[f64], sigma: &[f64]) -> Normal {
    let mut out = Normal {
        chi2: 0.0,
        jtj: Matrix4::zeros(),
        jtr: Vector4::zeros(),
    };
    for ((&x, &y), &s) in x.iter().zip(y).zip(sigma) {
        let (m, grad) = shape.eval(p, x);
        let r = (y - m) / s;
        let j = grad / s;
        out.chi2 += r * r;
        out.jtj += j * j.transpose();
        out.jtr += j * r;
    }
    out
}

fn fit(shape: Shape, x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.len() != y.len() {
        return Err(Error::param("series", "abscissa and counts differ in length"));
    }
    if x.len() < MIN_POINTS {
        return Err(Error::param("series", "at least 8 points are required"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fit series"));
    }
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) || (matches!(shape, Shape::Dip) && hi <= 0.0) {
        return Err(Error::Degenerate("series has no dynamic range".into()));
    }
    let sigma: Vec<f64> = y.iter().map(|c| c.max(1.0).sqrt()).collect();

    let mut p = initial_guess(shape, x, y);
    // natural scales keep the relative-change test meaningful for parameters near 0
    let scale = |p: &Vector4<f64>| {
        let level = match shape {
            Shape::Peak => hi.abs().max(lo.abs()),
            Shape::Dip => 1.0,
        };
        Vector4::new(hi.abs().max(lo.abs()), level, p[3].abs(), 0.0)
    };
    let mut current = normal_equations(shape, &p, x, y, &sigma);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut accepted = false;
        for _ in 0..60 {
            let mut a = current.jtj;
            for k in 0..4 {
                a[(k, k)] += lambda * current.jtj[(k, k)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&current.jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let next = normal_equations(shape, &trial, x, y, &sigma);
            if next.chi2.is_finite() && next.chi2 <= current.chi2 {
                let s = scale(&p);
                let small = (0..4).all(|k| {
                    step[k].abs() <= RELATIVE_STEP_TOL * (trial[k].abs() + s[k])
                });
                p = trial;
                current = next;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                converged = small;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // no downhill step at any damping: p is stationary to rounding
            converged = true;
        }
        if converged {
            break;
        }
    }

    p[3] = p[3].abs();
    let dof = (x.len() - 4) as f64;
    let errors = current
        .jtj
        .try_inverse()
        .map(|cov| Vector4::from_fn(|k, _| cov[(k, k)].max(0.0).sqrt()))
        .unwrap_or_else(|| Vector4::repeat(f64::INFINITY));
    Ok(FitResult {
        params: FitParams::from_vector(&p),
        uncertainties: FitParams::from_vector(&errors),
        reduced_chi_square: current.chi2 / dof,
        converged: converged && p[3] > 0.0,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Poisson};

    fn peak(p: &FitParams, x: f64) -> f64 {
        p.offset + p.amplitude * (-(x - p.center).powi(2) / (2.0 * p.width.powi(2))).exp()
    }

    fn dip(p: &FitParams, x: f64) -> f64 {
        p.offset * (1.0 - p.amplitude * (-(x - p.center).powi(2) / (2.0 * p.width.powi(2))).exp())
    }

    fn axis(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn noiseless_gaussian_is_exact() {
        let truth = FitParams {
            offset: 12.0,
            amplitude: 950.0,
            center: 3.1e11,
            width: 1.8e11,
        };
        let x = axis(41, -8e11, 8e11);
        let y: Vec<f64> = x.iter().map(|&x| peak(&truth, x)).collect();
        let fit = fit_gaussian(&x, &y).unwrap();
        assert!(fit.converged);
        assert!(close(fit.params.offset, truth.offset, 1e-6), "{:?}", fit.params);
        assert!(close(fit.params.amplitude, truth.amplitude, 1e-6));
        assert!(close(fit.params.center, truth.center, 1e-6));
        assert!(close(fit.params.width, truth.width, 1e-6));
    }

    #[test]
    fn noiseless_dip_recovers_visibility() {
        let truth = FitParams {
            offset: 4000.0,
            amplitude: 0.9,
            center: 0.0,
            width: 0.7e-12,
        };
        let x = axis(31, -4e-12, 4e-12);
        let y: Vec<f64> = x.iter().map(|&x| dip(&truth, x)).collect();
        let fit = fit_inverted_gaussian(&x, &y).unwrap();
        assert!(fit.converged);
        assert!(close(fit.params.amplitude, 0.9, 1e-6), "{:?}", fit.params);
        assert!(fit.params.center.abs() < 1e-6 * truth.width);
        assert!(close(fit.params.width, truth.width, 1e-6));
    }

    #[test]
    fn rejects_short_and_flat_series() {
        let x = axis(5, 0.0, 1.0);
        assert!(fit_gaussian(&x, &[1.0; 5]).is_err());
        let x = axis(20, 0.0, 1.0);
        assert!(matches!(fit_gaussian(&x, &[3.0; 20]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn poisson_center_within_three_sigma() {
        let truth = FitParams {
            offset: 0.0,
            amplitude: 1000.0,
            center: 0.2,
            width: 1.0,
        };
        let x = axis(50, -5.0, 5.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut hits = 0;
        let trials = 200;
        for _ in 0..trials {
            let y: Vec<f64> = x
                .iter()
                .map(|&x| {
                    let m = peak(&truth, x);
                    if m > 0.0 {
                        Poisson::new(m).unwrap().sample(&mut rng)
                    } else {
                        0.0
                    }
                })
                .collect();
            let fit = fit_gaussian(&x, &y).unwrap();
            if (fit.params.center - truth.center).abs() <= 3.0 * fit.uncertainties.center {
                hits += 1;
            }
        }
        assert!(hits as f64 >= 0.97 * trials as f64, "{hits}/{trials}");
    }
}
