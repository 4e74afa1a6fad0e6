//! Poisson tail sums and small numeric helpers shared by the fixed-point
//! solver and the truncated-Poisson row-count model.
//!
//! Tails are computed by forward recurrence on the terms `x^i/i!` with
//! renormalization once a term exceeds 1e250, which keeps the arithmetic in
//! plain f64 for the x values that occur at desk scale (up to a few hundred).

const RENORM_LIMIT: f64 = 1e250;
const LN_RENORM: f64 = 575.6462732485114; // ln(1e250)

/// `e^{-x} * sum_{i=0}^{d} x^i/i!`, i.e. Pr(Poisson(x) <= d).
///
/// `d < 0` yields 0 (empty sum).
pub fn poisson_cdf(x: f64, d: i64) -> f64 {
    assert!(x >= 0.0, "poisson_cdf needs x >= 0");
    if d < 0 {
        return 0.0;
    }
    let mut term = 1.0f64;
    let mut sum = 0.0f64;
    let mut renorms = 0u32;
    for i in 0..=d {
        sum += term;
        term *= x / (i + 1) as f64;
        if term > RENORM_LIMIT {
            term /= RENORM_LIMIT;
            sum /= RENORM_LIMIT;
            renorms += 1;
        }
    }
    let v = sum * (-x + f64::from(renorms) * LN_RENORM).exp();
    v.clamp(0.0, 1.0)
}

/// Mean of a Poisson(lambda) variable conditioned on being >= floor.
///
/// Equals `lambda * f_{floor-1}(lambda) / f_floor(lambda)` where
/// `f_l(lambda) = e^lambda - sum_{i<l} lambda^i/i!`.
pub fn truncated_poisson_mean(lambda: f64, floor: u64) -> f64 {
    assert!(lambda > 0.0);
    if floor == 0 {
        return lambda;
    }
    // Walk terms t_i = lambda^i/i! upward, keeping everything on a common
    // scale. Record t_{floor-1}, then accumulate S = sum_{i>=floor} t_i.
    let mut term = 1.0f64; // t_0
    let mut offset = 0i64;
    let mut t_prev = 0.0f64;
    let mut t_prev_offset = 0i64;
    let mut tail = 0.0f64;
    let mut i: u64 = 0;
    loop {
        if i == floor - 1 {
            t_prev = term;
            t_prev_offset = offset;
        }
        if i >= floor {
            tail += term;
            // stop once past the mode and the terms are negligible
            if (i as f64) > lambda && term < tail * 1e-18 {
                break;
            }
        }
        term *= lambda / (i + 1) as f64;
        if term > RENORM_LIMIT {
            term /= RENORM_LIMIT;
            tail /= RENORM_LIMIT;
            offset += 1;
        }
        i += 1;
        if i > floor + 1000 + (4.0 * lambda) as u64 + 40 * (lambda.sqrt() as u64 + 1) {
            break;
        }
    }
    // rescale t_{floor-1} to the final offset
    let mut t = t_prev;
    let mut o = t_prev_offset;
    while o < offset && t > 0.0 {
        t /= RENORM_LIMIT;
        o += 1;
    }
    lambda * (t + tail) / tail
}

/// `ln C(n, k)`, computed term by term (intended for small k).
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k)
        .map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln())
        .sum()
}
