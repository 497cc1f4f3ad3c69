//! Photon-counting statistics of the heralded source: thermal pair numbers,
//! lossy threshold detectors with dark clicks, and the heralded g2 estimator
//! `N_ABH·N_H / (N_AH·N_BH)`.
//!
//! Detector H watches the idler arm. The signal arm is split 50:50 onto
//! detectors A and B. Coincidences are slot-wise: one pulse is one window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roots::bisect;

/// Pair numbers above this are dropped from the thermal law.
pub const MAX_PAIRS: usize = 20;
/// Pulses simulated per independent random stream.
const BLOCK: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountingModel {
    /// Mean pair number per pulse.
    pub mu: f64,
    /// End-to-end signal efficiency up to (and excluding) the 50:50 splitter.
    pub eta_signal: f64,
    pub eta_idler: f64,
    /// Dark-click probability per detector per pulse slot.
    pub dark_prob: f64,
    /// Hz.
    pub rep_rate: f64,
    /// s.
    pub integration_time: f64,
}

impl Default for CountingModel {
    fn default() -> Self {
        Self {
            mu: 0.01,
            eta_signal: 0.1,
            eta_idler: 0.2,
            dark_prob: 1.25e-6,
            rep_rate: 80e6,
            integration_time: 1.0,
        }
    }
}

impl CountingModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::param("mu", "must be >= 0"));
        }
        for (name, v) in [("eta_signal", self.eta_signal), ("eta_idler", self.eta_idler)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, "must lie in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.dark_prob) {
            return Err(Error::param("dark_prob", "must lie in [0, 1)"));
        }
        if !(self.rep_rate > 0.0 && self.rep_rate.is_finite()) {
            return Err(Error::param("rep_rate", "must be > 0"));
        }
        if !(self.integration_time >= 0.0 && self.integration_time.is_finite()) {
            return Err(Error::param("integration_time", "must be >= 0"));
        }
        Ok(())
    }

    /// Pulse slots in one integration window.
    pub fn pulses(&self) -> f64 {
        self.rep_rate * self.integration_time
    }

    /// Expected detected pairs per integration window, ignoring the splitter.
    pub fn pair_counts(&self) -> f64 {
        self.pulses() * self.mu * self.eta_signal * self.eta_idler
    }

    /// The same model with extra linear loss in the signal arm.
    pub fn with_signal_transmission(mut self, t: f64) -> Self {
        self.eta_signal *= t;
        self
    }

    fn check_truncation(&self) -> Result<()> {
        self.validate()?;
        if self.mu >= 1.0 {
            return Err(Error::param("mu", "must be < 1 for the truncated thermal law"));
        }
        Ok(())
    }
}

/// Truncated, renormalized thermal law `μⁿ/(1+μ)^{n+1}`, `n ≤ MAX_PAIRS`.
pub fn thermal_distribution(mu: f64) -> Vec<f64> {
    let x = mu / (1.0 + mu);
    let raw: Vec<f64> = (0..=MAX_PAIRS).map(|n| x.powi(n as i32) / (1.0 + mu)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

/// Event counts. `a_h` is the A-and-H coincidence count, and so on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CoincidenceTallies {
    pub pulses: u64,
    pub h: u64,
    pub a: u64,
    pub b: u64,
    pub a_h: u64,
    pub b_h: u64,
    pub a_b_h: u64,
}

impl CoincidenceTallies {
    fn add(mut self, o: Self) -> Self {
        self.pulses += o.pulses;
        self.h += o.h;
        self.a += o.a;
        self.b += o.b;
        self.a_h += o.a_h;
        self.b_h += o.b_h;
        self.a_b_h += o.a_b_h;
        self
    }

    /// `N_ABH ≤ min(N_AH, N_BH)` and `max(N_AH, N_BH) ≤ N_H`.
    pub fn is_consistent(&self) -> bool {
        self.a_b_h <= self.a_h.min(self.b_h) && self.a_h.max(self.b_h) <= self.h && self.h <= self.pulses
    }

    /// Estimator value and its Poisson-propagated standard deviation.
    /// A zero triple count is charged as one count in the uncertainty.
    pub fn g2(&self) -> Result<(f64, f64)> {
        if self.a_h == 0 || self.b_h == 0 {
            return Err(Error::Degenerate("no heralded signal clicks".into()));
        }
        let (abh, h, ah, bh) = (self.a_b_h as f64, self.h as f64, self.a_h as f64, self.b_h as f64);
        let g2 = abh * h / (ah * bh);
        let rel = (1.0 / abh.max(1.0) + 1.0 / h + 1.0 / ah + 1.0 / bh).sqrt();
        Ok((g2, g2.max(h / (ah * bh)) * rel))
    }
}

/// Per-pulse click probabilities for the heralded estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClickProbabilities {
    pub h: f64,
    pub a_h: f64,
    pub b_h: f64,
    pub a_b_h: f64,
}

/// Exhaustive expectation over pair number, herald losses and the
/// multinomial split of signal photons into (A, B, lost).
pub fn click_probabilities(model: &CountingModel) -> Result<ClickProbabilities> {
    model.check_truncation()?;
    let d = model.dark_prob;
    let (ps_a, ps_lost) = (model.eta_signal / 2.0, 1.0 - model.eta_signal);
    let mut out = ClickProbabilities {
        h: 0.0,
        a_h: 0.0,
        b_h: 0.0,
        a_b_h: 0.0,
    };
    let click = |photons: usize| if photons > 0 { 1.0 } else { d };
    for (n, pn) in thermal_distribution(model.mu).into_iter().enumerate() {
        let mut herald = 0.0;
        for k in 0..=n {
            herald += binomial(n, k)
                * model.eta_idler.powi(k as i32)
                * (1.0 - model.eta_idler).powi((n - k) as i32)
                * click(k);
        }
        let (mut a, mut b, mut ab) = (0.0, 0.0, 0.0);
        for ka in 0..=n {
            for kb in 0..=n - ka {
                let lost = n - ka - kb;
                let w = multinomial(n, ka, kb)
                    * ps_a.powi(ka as i32)
                    * ps_a.powi(kb as i32)
                    * ps_lost.powi(lost as i32);
                a += w * click(ka);
                b += w * click(kb);
                ab += w * click(ka) * click(kb);
            }
        }
        // the herald and signal detectors see disjoint photons of the same n
        out.h += pn * herald;
        out.a_h += pn * herald * a;
        out.b_h += pn * herald * b;
        out.a_b_h += pn * herald * ab;
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn multinomial(n: usize, a: usize, b: usize) -> f64 {
    binomial(n, a) * binomial(n - a, b)
}

/// Expected heralded g2 from [`click_probabilities`].
pub fn g2_analytic(model: &CountingModel) -> Result<f64> {
    let p = click_probabilities(model)?;
    if p.a_h <= 0.0 || p.b_h <= 0.0 {
        return Err(Error::Degenerate("no heralded signal clicks are possible".into()));
    }
    Ok(p.a_b_h * p.h / (p.a_h * p.b_h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloG2 {
    pub g2: f64,
    pub sigma: f64,
    pub tallies: CoincidenceTallies,
}

/// Simulates `pulses` slots. Block `b` draws from a ChaCha8 stream keyed by
/// `(seed, b)` and tallies are integers, so the result does not depend on the
/// number of worker threads.
pub fn g2_monte_carlo(model: &CountingModel, pulses: u64, seed: u64) -> Result<MonteCarloG2> {
    model.check_truncation()?;
    if pulses == 0 {
        return Err(Error::param("pulses", "must be > 0"));
    }
    let tallies = simulate_tallies(model, pulses, seed);
    let (g2, sigma) = tallies.g2()?;
    Ok(MonteCarloG2 { g2, sigma, tallies })
}

/// Raw tallies of [`g2_monte_carlo`].
pub fn simulate_tallies(model: &CountingModel, pulses: u64, seed: u64) -> CoincidenceTallies {
    let cdf: Vec<f64> = thermal_distribution(model.mu)
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let blocks = pulses.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let len = BLOCK.min(pulses - b * BLOCK);
            simulate_block(model, &cdf, len, &mut rng)
        })
        .reduce(CoincidenceTallies::default, CoincidenceTallies::add)
}

fn simulate_block(model: &CountingModel, cdf: &[f64], len: u64, rng: &mut ChaCha8Rng) -> CoincidenceTallies {
    let mut t = CoincidenceTallies {
        pulses: len,
        ..Default::default()
    };
    let d = model.dark_prob;
    let half = model.eta_signal / 2.0;
    for _ in 0..len {
        let u: f64 = rng.random();
        let n = cdf.iter().position(|&c| u < c).unwrap_or(MAX_PAIRS);
        let (mut h, mut a, mut b) = (false, false, false);
        for _ in 0..n {
            h |= rng.random::<f64>() < model.eta_idler;
            let r: f64 = rng.random();
            a |= r < half;
            b |= (half..2.0 * half).contains(&r);
        }
        h |= rng.random::<f64>() < d;
        a |= rng.random::<f64>() < d;
        b |= rng.random::<f64>() < d;
        if h {
            t.h += 1;
            t.a_h += a as u64;
            t.b_h += b as u64;
            t.a_b_h += (a && b) as u64;
        }
        t.a += a as u64;
        t.b += b as u64;
    }
    t
}

/// Mean pair number on the pair-dominated branch where `g2_analytic = target`.
///
/// At very low μ dark clicks push g2 back toward 1, so the curve has a
/// minimum; the root is sought between that minimum and μ = 0.9.
pub fn calibrate_mu(model: &CountingModel, target_g2: f64) -> Result<f64> {
    if !(target_g2 > 0.0 && target_g2 < 1.0) {
        return Err(Error::param("target_g2", "must lie in (0, 1)"));
    }
    let eval = |mu: f64| g2_analytic(&CountingModel { mu, ..*model });
    let (lo, hi, n): (f64, f64, usize) = (1e-7, 0.9, 200);
    let mut best = (f64::INFINITY, lo);
    for i in 0..n {
        let mu = lo * (hi / lo).powf(i as f64 / (n - 1) as f64);
        let g = eval(mu)?;
        if g < best.0 {
            best = (g, mu);
        }
    }
    if best.0 > target_g2 {
        return Err(Error::NoRoot(format!(
            "minimum g2 {:.4} exceeds target {target_g2}",
            best.0
        )));
    }
    if eval(hi)? < target_g2 {
        return Err(Error::NoRoot(format!("g2 stays below {target_g2} for mu < {hi}")));
    }
    bisect(
        |mu| eval(mu).map(|g| g - target_g2).unwrap_or(f64::NAN),
        best.1,
        hi,
        1e-12,
    )
}
