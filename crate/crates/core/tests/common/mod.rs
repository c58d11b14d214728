//! Shared helpers for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random smooth expression text in `x`, `y` and `mu`. Every construct is
/// defined for all real inputs (denominators, log and root arguments are
/// kept positive), so evaluation never hits a domain error.
pub fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> String {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..4) {
            0 => "x".into(),
            1 => "y".into(),
            2 => "mu".into(),
            _ => format!("{:.3}", rng.gen_range(-2.0..2.0)),
        };
    }
    let a = random_expr(rng, depth - 1);
    match rng.gen_range(0..13) {
        0 => format!("({a}) + ({})", random_expr(rng, depth - 1)),
        1 => format!("({a}) - ({})", random_expr(rng, depth - 1)),
        2 => format!("({a}) * ({})", random_expr(rng, depth - 1)),
        3 => format!("({a}) / (2 + cos({}))", random_expr(rng, depth - 1)),
        4 => format!("({a})^{}", rng.gen_range(2..4)),
        5 => format!("(1 + ({a})^2)^1.5"),
        6 => format!("-({a})"),
        7 => format!("sin({a})"),
        8 => format!("cos({a})"),
        9 => format!("tanh({a})"),
        10 => format!("exp(tanh({a}))"),
        11 => format!("ln(1 + ({a})^2)"),
        _ => format!("sqrt(1 + ({a})^2)"),
    }
}

pub struct FiniteDiff {
    pub value: f64,
    /// Bound on the rounding error of `value`, allowing a few tens of ulps of
    /// error in each evaluation of `g`.
    pub roundoff: f64,
}

impl FiniteDiff {
    /// Absolute error of `sym` beyond the estimate's own rounding, relative
    /// to `max(1, |value|)`.
    pub fn relative_error(&self, sym: f64) -> f64 {
        ((sym - self.value).abs() - self.roundoff).max(0.0) / self.value.abs().max(1.0)
    }
}

/// Five-point central difference of `g` at `x` with one Richardson step,
/// truncation error O(h^6).
pub fn central_diff(g: impl Fn(f64) -> f64, x: f64) -> FiniteDiff {
    let h = 2e-4 * x.abs().max(1.0);
    let mut peak = 0.0f64;
    let mut at = |t: f64| {
        let v = g(t);
        peak = peak.max(v.abs());
        v
    };
    let mut five = |h: f64| {
        (-at(x + 2.0 * h) + 8.0 * at(x + h) - 8.0 * at(x - h) + at(x - 2.0 * h)) / (12.0 * h)
    };
    let value = (64.0 * five(0.5 * h) - five(h)) / 63.0;
    // The stencil weights sum to about 3.1 / h in absolute value.
    FiniteDiff {
        value,
        roundoff: 3.1 * 32.0 * f64::EPSILON * peak / h,
    }
}

/// Real roots of the monic cubic `l^3 + a l^2 + b l + c` known to have three
/// real roots inside `[-bound, bound]`, by bisection between the critical
/// points. Descending order.
pub fn cubic_real_roots(a: f64, b: f64, c: f64, bound: f64) -> [f64; 3] {
    let p = |l: f64| ((l + a) * l + b) * l + c;
    let disc = (4.0 * a * a - 12.0 * b).max(0.0).sqrt();
    let (c1, c2) = ((-2.0 * a - disc) / 6.0, (-2.0 * a + disc) / 6.0);
    let bisect = |mut lo: f64, mut hi: f64| {
        let up = p(hi) > p(lo);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if (p(m) > 0.0) == up {
                hi = m;
            } else {
                lo = m;
            }
        }
        0.5 * (lo + hi)
    };
    [bisect(c2, bound), bisect(c1, c2), bisect(-bound, c1)]
}
