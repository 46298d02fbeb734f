//! Standard normal distribution functions.
//!
//! The engine equates SCR with the 99.5% value-at-risk of a centred normal,
//! so the quantile function is load-bearing: it converts SCRs to implied
//! standard deviations and back. The CDF goes through `erfc`, which is
//! correctly rounded to within an ulp; the library quantile gets one Newton
//! step against that CDF, pinning the inverse to full `f64` precision.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn standard_normal() -> Normal {
    // Unit normal construction cannot fail.
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// Standard normal CDF.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile (inverse CDF).
///
/// Requires `0 < p < 1`.
pub fn quantile(p: f64) -> f64 {
    assert!(
        p > 0.0 && p < 1.0,
        "quantile level must be in (0, 1), got {p}"
    );
    let n = standard_normal();
    let x = n.inverse_cdf(p);
    // One Newton step: x - (cdf(x) - p) / pdf(x).
    let density = n.pdf(x);
    if density > 0.0 {
        x - (cdf(x) - p) / density
    } else {
        x
    }
}
