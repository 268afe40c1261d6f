//! The rotated view of the rounding operator.
//!
//! Rotating the `(x, x_q)` staircase by 45 degrees counterclockwise turns it
//! into a centered triangle wave of period `sqrt(2)`:
//!
//! ```text
//! t = (x + x_q)/sqrt(2),   f(t) = (-x + x_q)/sqrt(2)
//! f(t) = 1/(2 sqrt(2)) * (1 - 4 |r(t) - 1/2|),   r(t) = frac((t - T/4)/T)
//! ```
//!
//! The triangle wave is odd, so its Fourier series is a pure sine series
//! with only odd harmonics. This module carries the wave, the rotation and
//! its inverse, truncated partial sums, numerically computed Fourier
//! coefficients (an independent quadrature oracle for the analytic ones),
//! L2 errors, and the slope of the parameterized curve.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::quad::composite_simpson;
use crate::surrogate::SINGULARITY_EPS;

/// Period of the rotated triangle wave.
pub fn rotated_period() -> f64 {
    SQRT_2
}

/// Panel count for every fixed-grid quadrature in this module.
pub const SIMPSON_PANELS: usize = 1 << 14;

/// Fractional part normalized to `[0, 1)` for all inputs, `{-0.25} = 0.75`.
/// Required for the triangle wave to be odd.
fn frac(v: f64) -> f64 {
    let r = v.fract();
    if r < 0.0 {
        r + 1.0
    } else {
        r
    }
}

/// Centered triangle wave of period `sqrt(2)` and amplitude `1/(2 sqrt(2))`.
pub fn zigzag(t: f64) -> f64 {
    let period = rotated_period();
    let r = frac((t - period / 4.0) / period);
    1.0 / (2.0 * SQRT_2) * (1.0 - 4.0 * (r - 0.5).abs())
}

/// A point on the rotated curve together with its original coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Rotated abscissa `(x + x_q)/sqrt(2)`.
    pub t: f64,
    /// Rotated ordinate `(-x + x_q)/sqrt(2)`.
    pub f: f64,
    pub x: f64,
    pub x_q: f64,
}

/// 45-degree counterclockwise rotation of `(x, x_q)`.
pub fn rotate_to_curve(x: f64, x_q: f64) -> CurvePoint {
    CurvePoint {
        t: (x + x_q) / SQRT_2,
        f: (-x + x_q) / SQRT_2,
        x,
        x_q,
    }
}

/// Inverse rotation: recovers `(x, x_q)` from rotated coordinates.
pub fn inverse_rotate(t: f64, f: f64) -> (f64, f64) {
    ((t - f) / SQRT_2, (t + f) / SQRT_2)
}

/// Truncated sine series of the triangle wave with tunable amplitude:
/// `f_M(t) = -A * sum_{m=0}^{M} (-1)^m/(2m+1)^2 * sin((2m+1) sqrt(2) pi t)`.
pub fn fourier_partial_sum(t: f64, order: u32, amplitude: f64) -> f64 {
    let mut sum = 0.0;
    for m in 0..=order {
        let k = (2 * m + 1) as f64;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / (k * k) * (k * SQRT_2 * PI * t).sin();
    }
    -amplitude * sum
}

/// Derivative of [`fourier_partial_sum`] in `t`:
/// `f'_M(t) = -A sqrt(2) pi * sum (-1)^m/(2m+1) * cos((2m+1) sqrt(2) pi t)`.
pub fn fourier_partial_sum_derivative(t: f64, order: u32, amplitude: f64) -> f64 {
    let mut sum = 0.0;
    for m in 0..=order {
        let k = (2 * m + 1) as f64;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / k * (k * SQRT_2 * PI * t).cos();
    }
    -amplitude * SQRT_2 * PI * sum
}

/// Slope of the parameterized curve `(x(t), x_q(t))` obtained by rotating
/// the graph of `f_M` back: `dx_q/dx = (1 + f'_M(t)) / (1 - f'_M(t))`.
pub fn curve_slope(t: f64, order: u32, amplitude: f64) -> Result<f64> {
    let d = fourier_partial_sum_derivative(t, order, amplitude);
    let denom = 1.0 - d;
    if denom.abs() < SINGULARITY_EPS {
        return Err(Error::SingularDenominator(t));
    }
    Ok((1.0 + d) / denom)
}

/// Trigonometric polynomial `a0 + sum_k [a_k cos(2 pi k u / T) + b_k sin(...)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolynomial {
    a0: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    period: f64,
}

impl TrigPolynomial {
    pub fn new(a0: f64, a: Vec<f64>, b: Vec<f64>, period: f64) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::InvalidArgument(format!(
                "coefficient lists differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::InvalidArgument(format!("period {period} must be > 0")));
        }
        Ok(Self { a0, a, b, period })
    }

    pub fn constant(c: f64, period: f64) -> Self {
        Self::new(c, vec![], vec![], period).expect("constant polynomial is always valid")
    }

    pub fn degree(&self) -> usize {
        self.a.len()
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn eval(&self, u: f64) -> f64 {
        let w = 2.0 * PI / self.period;
        let mut acc = self.a0;
        for (k, (&ak, &bk)) in self.a.iter().zip(&self.b).enumerate() {
            let kw = (k + 1) as f64 * w;
            acc += ak * (kw * u).cos() + bk * (kw * u).sin();
        }
        acc
    }

    /// Coefficientwise sum; both polynomials must share the period.
    pub fn add(&self, other: &TrigPolynomial) -> Result<TrigPolynomial> {
        if (self.period - other.period).abs() > 1e-12 {
            return Err(Error::InvalidArgument(
                "cannot add polynomials with different periods".into(),
            ));
        }
        let n = self.degree().max(other.degree());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        let a = (0..n).map(|i| get(&self.a, i) + get(&other.a, i)).collect();
        let b = (0..n).map(|i| get(&self.b, i) + get(&other.b, i)).collect();
        TrigPolynomial::new(self.a0 + other.a0, a, b, self.period)
    }
}

/// Fourier coefficients of `f` on `[0, T]` by composite Simpson quadrature
/// (2^14 panels):
/// `a0 = (1/T) int f`, `a_k = (2/T) int f cos(2 pi k u / T)`,
/// `b_k = (2/T) int f sin(2 pi k u / T)`.
///
/// The integrand values of `f` are computed once on the shared grid and
/// reused for every coefficient; panels are summed left to right.
pub fn fourier_coefficients(
    f: impl Fn(f64) -> f64,
    degree: usize,
    period: f64,
) -> TrigPolynomial {
    let n = SIMPSON_PANELS;
    let h = period / n as f64;
    // Simpson weights 1,4,2,...,2,4,1 times h/3.
    let grid: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let u = i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            (u, w * f(u))
        })
        .collect();
    let integrate = |g: &dyn Fn(f64) -> f64| -> f64 {
        grid.iter().map(|&(u, wf)| wf * g(u)).sum::<f64>() * h / 3.0
    };

    let a0 = integrate(&|_| 1.0) / period;
    let mut a = Vec::with_capacity(degree);
    let mut b = Vec::with_capacity(degree);
    for k in 1..=degree {
        let kw = 2.0 * PI * k as f64 / period;
        a.push(integrate(&|u| (kw * u).cos()) * 2.0 / period);
        b.push(integrate(&|u| (kw * u).sin()) * 2.0 / period);
    }
    TrigPolynomial::new(a0, a, b, period).expect("constructed lists have equal length")
}

/// L2 distance `sqrt(int_0^T (f - g)^2 du)` using the same composite Simpson
/// rule as [`fourier_coefficients`].
pub fn l2_error(f: impl Fn(f64) -> f64, g: &TrigPolynomial, period: f64) -> f64 {
    composite_simpson(
        |u| {
            let d = f(u) - g.eval(u);
            d * d
        },
        0.0,
        period,
        SIMPSON_PANELS,
    )
    .max(0.0)
    .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{g_rdfs, vanilla_amplitude};
    use crate::tensor::Rng;

    // Frozen 50-digit reference values.
    const B1: f64 = -0.28657958412537813;
    const B3: f64 = 0.031842176013930903;
    const ZIGZAG_QUARTER: f64 = -0.35355339059327376;
    const NORM_F: f64 = 0.24274588585366171;
    const NORM_F_MINUS_F1: f64 = 0.029195885947415817;
    const SLOPE_VANILLA_ORIGIN: f64 = -0.12019830702311475;

    #[test]
    fn zigzag_pointwise() {
        assert_eq!(zigzag(0.0), 0.0);
        let v = zigzag(SQRT_2 / 4.0);
        assert!((v - ZIGZAG_QUARTER).abs() < 1e-15, "{v}");
        let mut rng = Rng::new(1);
        for _ in 0..1000 {
            let t = rng.range(-10.0, 10.0);
            assert!((zigzag(t + SQRT_2) - zigzag(t)).abs() < 1e-12);
            assert!((zigzag(-t) + zigzag(t)).abs() < 1e-12); // odd
        }
    }

    #[test]
    fn rotation_pointwise_and_on_curve() {
        let p = rotate_to_curve(0.0, 0.0);
        assert_eq!((p.t, p.f), (0.0, 0.0));

        let p = rotate_to_curve(0.3, 0.0);
        assert!((p.t - 0.3 / SQRT_2).abs() < 1e-15);
        assert!((p.f + 0.3 / SQRT_2).abs() < 1e-15);
        assert!((zigzag(p.t) - p.f).abs() < 1e-12);

        let p = rotate_to_curve(1.0, 1.0);
        assert!((p.t - SQRT_2).abs() < 1e-15);
        assert!(p.f.abs() < 1e-15);
    }

    #[test]
    fn inverse_rotate_round_trips() {
        assert_eq!(inverse_rotate(0.0, 0.0), (0.0, 0.0));
        let (x, xq) = inverse_rotate(SQRT_2, 0.0);
        assert!((x - 1.0).abs() < 1e-15 && (xq - 1.0).abs() < 1e-15);
        let mut rng = Rng::new(2);
        for _ in 0..1000 {
            let x = rng.range(-5.0, 5.0);
            let xq = rng.range(-5.0, 5.0);
            let p = rotate_to_curve(x, xq);
            let (xr, xqr) = inverse_rotate(p.t, p.f);
            assert!((xr - x).abs() < 1e-12 && (xqr - xq).abs() < 1e-12);
        }
    }

    #[test]
    fn on_curve_identity_for_rounded_points() {
        // rotate (x, round(x)) lands on the zigzag, excluding half-integers.
        let mut rng = Rng::new(3);
        let mut checked = 0;
        while checked < 1000 {
            let x = rng.range(-6.0, 6.0);
            if (x - x.floor() - 0.5).abs() < 1e-3 {
                continue;
            }
            let p = rotate_to_curve(x, x.round_ties_even());
            assert!((zigzag(p.t) - p.f).abs() < 1e-12, "x = {x}");
            checked += 1;
        }
    }

    #[test]
    fn partial_sum_pointwise() {
        assert_eq!(fourier_partial_sum(0.0, 0, 1.0), 0.0);
        assert_eq!(fourier_partial_sum(0.0, 5, 0.3), 0.0);
        let a = vanilla_amplitude();
        let v = fourier_partial_sum(SQRT_2 / 4.0, 0, a);
        assert!((v + a).abs() < 1e-15, "{v}");
        let mut rng = Rng::new(4);
        for _ in 0..1000 {
            let t = rng.range(-3.0, 3.0);
            for order in 0..=3 {
                let lhs = fourier_partial_sum(-t, order, a);
                let rhs = -fourier_partial_sum(t, order, a);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coefficients_of_the_vanilla_zigzag() {
        let poly = fourier_coefficients(zigzag, 3, rotated_period());
        assert!(poly.a0().abs() < 1e-8);
        for &ak in poly.a() {
            assert!(ak.abs() < 1e-8);
        }
        assert!((poly.b()[0] - B1).abs() < 1e-8, "b1 = {}", poly.b()[0]);
        assert!(poly.b()[1].abs() < 1e-8, "b2 = {}", poly.b()[1]);
        assert!((poly.b()[2] - B3).abs() < 1e-8, "b3 = {}", poly.b()[2]);
    }

    #[test]
    fn coefficients_of_simple_functions() {
        let poly = fourier_coefficients(|_| 5.0, 3, 2.0);
        assert!((poly.a0() - 5.0).abs() < 1e-12);
        for k in 0..3 {
            assert!(poly.a()[k].abs() < 1e-12 && poly.b()[k].abs() < 1e-12);
        }

        let t = 3.0;
        let poly = fourier_coefficients(move |u| (2.0 * PI * u / t).sin(), 3, t);
        assert!((poly.b()[0] - 1.0).abs() < 1e-10);
        assert!(poly.a0().abs() < 1e-10);
        for k in 0..3 {
            assert!(poly.a()[k].abs() < 1e-10);
            if k > 0 {
                assert!(poly.b()[k].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn l2_error_reference_values() {
        let period = rotated_period();
        let zero = TrigPolynomial::constant(0.0, period);
        let norm = l2_error(zigzag, &zero, period);
        assert!((norm - NORM_F).abs() < 1e-9, "{norm}");

        let f1 = fourier_coefficients(zigzag, 1, period);
        let e1 = l2_error(zigzag, &f1, period);
        assert!((e1 - NORM_F_MINUS_F1).abs() < 1e-6, "{e1}");
        assert!(e1 < norm);

        // self-approximation of a trig polynomial
        let g = TrigPolynomial::new(0.4, vec![0.2, -0.1], vec![0.7, 0.3], period).unwrap();
        let gc = g.clone();
        let recovered = fourier_coefficients(move |u| gc.eval(u), 2, period);
        assert!(l2_error(|u| g.eval(u), &recovered, period) < 1e-9);
    }

    #[test]
    fn curve_slope_values_and_singularity() {
        assert_eq!(curve_slope(0.37, 0, 0.0).unwrap(), 1.0);
        let g = curve_slope(0.0, 0, 0.21).unwrap();
        assert!((g - 0.034658248961484223).abs() < 1e-15);
        let g = curve_slope(0.0, 0, vanilla_amplitude()).unwrap();
        assert!((g - SLOPE_VANILLA_ORIGIN).abs() < 1e-15, "{g}");

        // vanilla amplitude makes c = 4/pi > 1, so f' = 1 is reachable
        let a = vanilla_amplitude();
        let c = a * SQRT_2 * PI;
        let t = (-1.0 / c).acos() / (SQRT_2 * PI);
        assert!(matches!(
            curve_slope(t, 0, a),
            Err(Error::SingularDenominator(_))
        ));
    }

    #[test]
    fn slope_agrees_with_rdfs_on_the_curve() {
        // g_rdfs(x, x_q) equals curve_slope at t = (x + x_q)/sqrt(2).
        let mut rng = Rng::new(5);
        for _ in 0..1000 {
            let t = rng.range(-2.0, 2.0);
            for (order, amp) in [(0u32, 0.21), (1, 0.1), (2, 0.21)] {
                let f = fourier_partial_sum(t, order, amp);
                let (x, xq) = inverse_rotate(t, f);
                let slope = curve_slope(t, order, amp).unwrap();
                let g = g_rdfs(x, xq, amp, order).unwrap();
                assert!((slope - g).abs() <= 1e-12, "t={t} order={order}: {slope} vs {g}");
            }
        }
    }

    #[test]
    fn parseval_error_decomposition() {
        // ||f-g||^2 - ||f-f_n||^2 == T (a0 diff)^2 + T/2 sum (coeff diffs)^2
        let period = rotated_period();
        let n = 3;
        let fn_ = fourier_coefficients(zigzag, n, period);
        let base = l2_error(zigzag, &fn_, period).powi(2);
        let mut rng = Rng::new(6);
        for _ in 0..50 {
            let p = TrigPolynomial::new(
                rng.range(-0.5, 0.5),
                (0..n).map(|_| rng.range(-0.5, 0.5)).collect(),
                (0..n).map(|_| rng.range(-0.5, 0.5)).collect(),
                period,
            )
            .unwrap();
            let g = fn_.add(&p).unwrap();
            let err = l2_error(zigzag, &g, period).powi(2);
            let mut expected = period * p.a0().powi(2);
            for k in 0..n {
                expected += period / 2.0 * (p.a()[k].powi(2) + p.b()[k].powi(2));
            }
            assert!(
                ((err - base) - expected).abs() < 1e-8,
                "deficit {} vs parseval {}",
                err - base,
                expected
            );
        }
    }
}
