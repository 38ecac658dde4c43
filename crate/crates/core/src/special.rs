//! Digamma and log-gamma.

/// Digamma function for `x > 0`: upward recurrence to `x >= 10`, then the
/// asymptotic expansion with Bernoulli terms through `x^-14`.
pub fn digamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "digamma of non-positive {x}");
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B2n / (2n) for n = 1..7
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 * (1.0 / 12.0)))))));
    acc + x.ln() - 0.5 * inv - series
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}
