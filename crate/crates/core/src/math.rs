//! Thin wrappers over `libm` so the numerics read like ordinary float code.

pub(crate) use libm::{cos, exp, expm1, fabs as abs, hypot, log2, pow, sin, sqrt, tanh};

use num_complex::Complex64;

/// `e^{iθ}` through `libm`. `Complex64::cis` switches to the platform libm
/// whenever another crate in the build enables `num-complex/std`, which
/// changes results in the last bit.
pub(crate) fn cis(theta: f64) -> Complex64 {
    Complex64::new(cos(theta), sin(theta))
}

/// `|z|` through `libm`, for the same reason as [`cis`].
pub(crate) fn cabs(z: Complex64) -> f64 {
    hypot(z.re, z.im)
}

pub(crate) const PI: f64 = core::f64::consts::PI;

/// C² quintic smooth step on [0, 1]: 0 at 0, 1 at 1, first and second
/// derivatives vanish at both ends.
pub(crate) fn smoothstep5(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (x * (6.0 * x - 15.0) + 10.0)
    }
}

pub(crate) fn smoothstep5_derivative(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        0.0
    } else {
        30.0 * x * x * (x - 1.0) * (x - 1.0)
    }
}

/// `(e^{a t} − 1) / a`, continuous through `a = 0`.
pub(crate) fn phi1(a: f64, t: f64) -> f64 {
    if a == 0.0 {
        t
    } else {
        expm1(a * t) / a
    }
}

/// Two-sided 97.5% Student-t quantile.
pub(crate) fn student_t975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    match df {
        0 => f64::INFINITY,
        1..=30 => TABLE[df - 1],
        _ => 1.96,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_endpoints_and_midpoint() {
        assert_eq!(smoothstep5(0.0), 0.0);
        assert_eq!(smoothstep5(1.0), 1.0);
        assert!((smoothstep5(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(smoothstep5_derivative(0.0), 0.0);
    }

    #[test]
    fn phi1_limit() {
        assert_eq!(phi1(0.0, 0.3), 0.3);
        assert!((phi1(-1.0, 1.0) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
    }
}
