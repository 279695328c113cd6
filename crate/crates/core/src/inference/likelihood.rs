//! Truncated-normal observation model on (0, 1).
//!
//! The normalizing constant `Phi(b) - Phi(a)` is evaluated in log space with
//! tail-aware branches so extreme truncation stays finite.

use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// `log(1 - exp(x))` for `x <= 0`.
fn log1mexp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// Standard normal CDF.
pub fn ndtr(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `log Phi(x)`, accurate in both tails.
pub fn log_ndtr(x: f64) -> f64 {
    if x > 5.0 {
        (-ndtr(-x)).ln_1p()
    } else if x > -30.0 {
        ndtr(x).ln()
    } else {
        // Asymptotic expansion of the Mills ratio.
        let x2 = x * x;
        let inv = 1.0 / x2;
        let series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv * (1.0 - 9.0 * inv))));
        -0.5 * x2 - (-x).ln() - LN_SQRT_2PI + series.ln()
    }
}

/// `log(Phi(b) - Phi(a))` for `a <= b`.
pub fn log_diff_ndtr(a: f64, b: f64) -> f64 {
    if a >= b {
        return f64::NEG_INFINITY;
    }
    if a >= 0.0 {
        let hi = log_ndtr(-a);
        hi + log1mexp(log_ndtr(-b) - hi)
    } else if b <= 0.0 {
        let hi = log_ndtr(b);
        hi + log1mexp(log_ndtr(a) - hi)
    } else {
        (-ndtr(a) - ndtr(-b)).ln_1p()
    }
}

fn std_normal_logpdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

fn check(y: f64, sd: f64) -> Result<()> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::Domain(format!("observation {y} outside (0, 1)")));
    }
    if !(sd > 0.0 && sd.is_finite()) {
        return Err(Error::Domain(format!("standard deviation {sd} must be positive")));
    }
    Ok(())
}

/// Log density at `y` of `N(mu, sd^2)` truncated to (0, 1).
pub fn truncnorm_logpdf(y: f64, mu: f64, sd: f64) -> Result<f64> {
    check(y, sd)?;
    Ok(truncnorm_logpdf_unchecked(y, mu, sd))
}

pub(crate) fn truncnorm_logpdf_unchecked(y: f64, mu: f64, sd: f64) -> f64 {
    let z = (y - mu) / sd;
    std_normal_logpdf(z) - sd.ln() - log_diff_ndtr(-mu / sd, (1.0 - mu) / sd)
}

/// Derivative of [`truncnorm_logpdf`] with respect to `mu`.
pub fn truncnorm_logpdf_dmu(y: f64, mu: f64, sd: f64) -> f64 {
    let a = -mu / sd;
    let b = (1.0 - mu) / sd;
    let log_z = log_diff_ndtr(a, b);
    let edge = (std_normal_logpdf(b) - log_z).exp() - (std_normal_logpdf(a) - log_z).exp();
    (y - mu) / (sd * sd) + edge / sd
}

/// CDF at `y` of `N(mu, sd^2)` truncated to (0, 1).
pub fn truncnorm_cdf(y: f64, mu: f64, sd: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if y >= 1.0 {
        return 1.0;
    }
    let a = -mu / sd;
    let b = (1.0 - mu) / sd;
    (log_diff_ndtr(a, (y - mu) / sd) - log_diff_ndtr(a, b)).exp().clamp(0.0, 1.0)
}
