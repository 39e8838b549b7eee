//! Bessel functions of the first kind for the small arguments that appear as
//! phase-modulation indices.
//!
//! The power series
//! `J_n(x) = sum_k (-1)^k (x/2)^(2k+n) / (k! (k+n)!)`
//! is summed until the terms stop contributing. For |x| < 1 the absolute error
//! is at the level of a few ulp; accuracy degrades through cancellation for
//! |x| beyond ~10, which is far outside the perturbative regime used here.

const MAX_TERMS: usize = 200;

/// `J_n(x)` for integer order `n` (negative orders via `J_{-n} = (-1)^n J_n`).
pub fn bessel_j(n: i32, x: f64) -> f64 {
    if n < 0 {
        let v = bessel_j(-n, x);
        return if n % 2 == 0 { v } else { -v };
    }
    let n = n as usize;
    let half = 0.5 * x;
    // leading term (x/2)^n / n!
    let mut term = 1.0;
    for i in 1..=n {
        term *= half / i as f64;
    }
    let q = -half * half;
    let mut sum = term;
    for k in 1..MAX_TERMS {
        term *= q / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() <= f64::EPSILON * 1e-3 * sum.abs() {
            break;
        }
    }
    sum
}

pub fn bessel_j0(x: f64) -> f64 {
    bessel_j(0, x)
}

pub fn bessel_j1(x: f64) -> f64 {
    bessel_j(1, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from standard tables (Abramowitz & Stegun, 9.x).
    #[test]
    fn tabulated_values() {
        let cases = [
            (0, 0.5, 0.938_469_807_240_813_3),
            (1, 0.5, 0.242_268_457_674_873_9),
            (0, 1.0, 0.765_197_686_557_966_6),
            (1, 1.0, 0.440_050_585_744_933_5),
            (2, 1.0, 0.114_903_484_931_900_5),
            (0, 2.0, 0.223_890_779_141_235_7),
            (1, 2.0, 0.576_724_807_756_873_4),
        ];
        for (n, x, want) in cases {
            let got = bessel_j(n, x);
            assert!((got - want).abs() < 1e-15, "J{n}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn small_argument_limits() {
        assert_eq!(bessel_j0(0.0), 1.0);
        assert_eq!(bessel_j1(0.0), 0.0);
        let x = 0.01;
        assert!((bessel_j0(x) - (1.0 - x * x / 4.0 + x.powi(4) / 64.0)).abs() < 1e-15);
        assert!((bessel_j1(x) - (x / 2.0 - x.powi(3) / 16.0)).abs() < 1e-12);
    }

    #[test]
    fn negative_order_and_parity() {
        assert_eq!(bessel_j(-1, 0.7), -bessel_j(1, 0.7));
        assert_eq!(bessel_j(-2, 0.7), bessel_j(2, 0.7));
        assert!((bessel_j(1, -0.7) + bessel_j(1, 0.7)).abs() < 1e-17);
    }

    // Neumann's addition identity: J0^2 + 2 sum_{n>=1} J_n^2 = 1.
    #[test]
    fn sum_of_squares_is_one() {
        for &x in &[0.1, 0.5, 1.0, 3.0] {
            let mut s = bessel_j0(x).powi(2);
            for n in 1..30 {
                s += 2.0 * bessel_j(n, x).powi(2);
            }
            assert!((s - 1.0).abs() < 1e-14, "x = {x}: {s}");
        }
    }
}
