//! Special functions implemented in-repo for bit-stable results.
//!
//! The softened Coulomb interaction needs `erf`, which is not in the Rust
//! standard library. Rather than pull in a platform-dependent libm binding,
//! the function is evaluated here with two classic expansions, giving
//! identical bits on every platform:
//!
//! * `|x| <= 3`: the all-positive-term confluent series
//!   `erf(x) = (2x e^{-x²}/√π) Σ_k (2x²)^k / (2k+1)!!`, which is free of
//!   cancellation (every term is positive) and converges in < 50 terms.
//! * `|x| > 3`: the Legendre continued fraction for the complementary
//!   function, `erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x +
//!   ...))))`, evaluated with the modified Lentz algorithm.
//!
//! Both regimes agree with direct quadrature of the defining integral to
//! better than 1e-14 (see tests), comfortably inside the 1e-14 target.

/// 2/√π, the normalization of the error-function integrand.
const TWO_OVER_SQRT_PI: f64 = 1.128_379_167_095_512_6;

/// The error function `erf(x) = (2/√π) ∫_0^x e^{-t²} dt`.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x == 0.0 {
        return 0.0;
    }
    if x <= 3.0 {
        erf_series(x)
    } else {
        1.0 - erfc_continued_fraction(x)
    }
}

/// The complementary error function `erfc(x) = 1 - erf(x)`.
///
/// Accurate in relative terms for large positive `x`, where `1 - erf(x)`
/// would lose all significance.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x <= 3.0 {
        1.0 - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

/// Confluent series; valid for 0 < x ≲ 5, used for x ≤ 3.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let two_x2 = 2.0 * x2;
    let mut term = 1.0_f64; // k = 0 contribution before the prefactor
    let mut sum = term;
    let mut k = 0u32;
    loop {
        k += 1;
        // term_{k} = term_{k-1} * 2x² / (2k+1)
        term *= two_x2 / (2 * k + 1) as f64;
        sum += term;
        if term < sum * 1e-17 || k > 200 {
            break;
        }
    }
    TWO_OVER_SQRT_PI * x * (-x2).exp() * sum
}

/// Legendre continued fraction for erfc, modified Lentz evaluation; valid
/// for x ≳ 2, used for x > 3.
fn erfc_continued_fraction(x: f64) -> f64 {
    // CF = 1/(x+) (1/2)/(x+) (2/2)/(x+) (3/2)/(x+) ...
    const TINY: f64 = 1e-300;
    let mut f = x.max(TINY);
    let mut c = f;
    let mut d = 0.0_f64;
    for m in 1..200 {
        let a_m = m as f64 / 2.0;
        d = x + a_m * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = x + a_m / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    // f now approximates x + CF-tail, i.e. 1/CF.
    0.5 * TWO_OVER_SQRT_PI * (-x * x).exp() / f
}
