//! Polygamma helpers. `ln_gamma` and `digamma` come from statrs; the
//! trigamma and tetragamma functions needed for the curvature terms are
//! computed here by upward recurrence followed by the asymptotic series.

pub use statrs::function::gamma::{digamma, ln_gamma};

const ASYMPTOTIC_START: f64 = 10.0;

/// ψ₁(x) for x > 0; NaN elsewhere.
pub fn trigamma(mut x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < ASYMPTOTIC_START {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/(2x²) + Σ B_2k / x^(2k+1)
    let series = inv2
        * (1.0 / 6.0
            + inv2 * (-1.0 / 30.0 + inv2 * (1.0 / 42.0 + inv2 * (-1.0 / 30.0 + inv2 * (5.0 / 66.0)))));
    acc + inv + 0.5 * inv2 + inv * series
}

/// ψ₂(x) for x > 0; NaN elsewhere.
pub fn tetragamma(mut x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut acc = 0.0;
    while x < ASYMPTOTIC_START {
        acc -= 2.0 / (x * x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // -1/x² - 1/x³ - Σ (2k+1) B_2k / x^(2k+2)
    let series = inv2
        * (0.5 + inv2 * (-1.0 / 6.0 + inv2 * (1.0 / 6.0 + inv2 * (-3.0 / 10.0 + inv2 * (5.0 / 6.0)))));
    acc - inv2 - inv2 * inv - inv2 * series
}
