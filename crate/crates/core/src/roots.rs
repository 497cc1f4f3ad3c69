use crate::error::{Error, Result};

/// Bisection on a bracketing interval until it is narrower than `tol`.
pub(crate) fn bisect(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() || !f_lo.is_finite() || !f_hi.is_finite() {
        return Err(Error::NoRoot(format!(
            "f({lo:e}) = {f_lo:e} and f({hi:e}) = {f_hi:e} share a sign"
        )));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if (hi - lo).abs() <= tol {
            return Ok(mid);
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Scans `n` log-spaced points in `[lo, hi]` for the first sign change and
/// refines it by bisection.
pub(crate) fn find_root_log(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, n: usize, rel_tol: f64) -> Result<f64> {
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    let mut x_prev = lo;
    let mut f_prev = f(lo);
    for i in 1..n {
        let x = lo * ratio.powi(i as i32);
        let fx = f(x);
        if f_prev.is_finite() && fx.is_finite() && (f_prev == 0.0 || f_prev.signum() != fx.signum()) {
            return bisect(&mut f, x_prev, x, rel_tol * x);
        }
        x_prev = x;
        f_prev = fx;
    }
    Err(Error::NoRoot(format!("no sign change in [{lo:e}, {hi:e}]")))
}
