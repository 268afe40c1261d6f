//! Closed-form and Monte Carlo statistics of surrogate gradients under
//! uniform sampling over a clip range.
//!
//! With `xi ~ U(l, u)` and the range tiled into `2^b - 1` intervals of width
//! `Delta`, the gradient statistics have closed forms (`c = sqrt(2) pi A`):
//!
//! ```text
//! DSQ:   E[g] = 1
//!        Var[g] = ln((2-a)/a) (3 - (1-a)^2) / (6(1-a)) - 1
//! RDFS:  E[g] = 8/(pi sqrt(1-c^2)) atan(sqrt((1-c)/(1+c))) - 1
//!        Var[g] = T1(c) + 1 - T2(c)
//!        T1 = 16 c^2/(pi (1-c^2)^{3/2}) atan(sqrt((1-c)/(1+c))) - 8c/(pi (1-c^2))
//!        T2 = E[g]^2
//! ```
//!
//! Both are independent of `(l, u)`: the integrand is `Delta`-periodic and
//! the range spans a whole number of periods. As the surrogates sharpen
//! (`a -> 0+` for DSQ, `A -> 1/(sqrt(2) pi)-` for RDFS) the expectations
//! approach 1 and `4/pi - 1`, and the variances diverge for DSQ while
//! staying bounded at `16/(3 pi) - 16/pi^2` for RDFS.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};
use crate::surrogate::{DsqLayout, Surrogate, g_dsq};
use crate::tensor::Rng;

/// Surrogate family selector for the sharp-limit statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurrogateFamily {
    Dsq,
    Rdfs,
}

/// A variance that may diverge. The infinite case is a typed flag so callers
/// must branch explicitly; no floating infinity leaks through arithmetic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variance {
    Finite(f64),
    Infinite,
}

impl Variance {
    pub fn finite(self) -> Option<f64> {
        match self {
            Variance::Finite(v) => Some(v),
            Variance::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Variance::Infinite)
    }
}

impl std::fmt::Display for Variance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variance::Finite(v) => write!(f, "{v}"),
            Variance::Infinite => write!(f, "inf"),
        }
    }
}

/// Closed-form and Monte Carlo gradient statistics, side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsReport {
    pub spec: Surrogate,
    pub l: f64,
    pub u: f64,
    pub expectation_closed: f64,
    pub variance_closed: Variance,
    pub expectation_mc: f64,
    pub variance_mc: f64,
    pub mc_samples: u64,
    /// `sample std / sqrt(mc_samples)`
    pub mc_stderr_mean: f64,
    pub seed: u64,
}

fn rdfs_c(spec: &Surrogate) -> Result<f64> {
    match spec {
        Surrogate::Rdfs { amplitude, order } => {
            if *order >= 1 {
                return Err(Error::UnsupportedSpec(format!(
                    "no closed form for rdfs order {order}"
                )));
            }
            let c = amplitude * SQRT_2 * PI;
            if c >= 1.0 {
                return Err(Error::UnsupportedSpec(format!(
                    "closed forms require amplitude < 1/(sqrt(2) pi), got {amplitude}"
                )));
            }
            Ok(c)
        }
        _ => unreachable!("caller matched the variant"),
    }
}

fn atan_term(c: f64) -> f64 {
    ((1.0 - c) / (1.0 + c)).sqrt().atan()
}

/// Closed-form expectation of the surrogate gradient under uniform sampling.
/// STE and DSQ give exactly 1; first-order RDFS uses the arctan form above.
pub fn expectation_closed(spec: &Surrogate) -> Result<f64> {
    match spec {
        Surrogate::Ste => Ok(1.0),
        Surrogate::Dsq { .. } => Ok(1.0),
        Surrogate::Rdfs { .. } => {
            let c = rdfs_c(spec)?;
            // (1 - c^2) as (1-c)(1+c) keeps precision next to the boundary
            let omc2 = (1.0 - c) * (1.0 + c);
            Ok(8.0 / (PI * omc2.sqrt()) * atan_term(c) - 1.0)
        }
    }
}

/// Closed-form variance of the surrogate gradient under uniform sampling.
pub fn variance_closed(spec: &Surrogate) -> Result<f64> {
    match spec {
        Surrogate::Ste => Ok(0.0),
        Surrogate::Dsq { alpha } => {
            let beta = ((2.0 - alpha) / alpha).ln();
            Ok(beta * (3.0 - (1.0 - alpha).powi(2)) / (6.0 * (1.0 - alpha)) - 1.0)
        }
        Surrogate::Rdfs { .. } => {
            let c = rdfs_c(spec)?;
            let omc2 = (1.0 - c) * (1.0 + c);
            let t1 = 16.0 * c * c / (PI * omc2.powf(1.5)) * atan_term(c) - 8.0 * c / (PI * omc2);
            let t2 = expectation_closed(spec)?.powi(2);
            Ok(t1 + 1.0 - t2)
        }
    }
}

/// Expectation in the sharp limit: 1 for DSQ, `4/pi - 1` for RDFS.
pub fn expectation_limit(kind: SurrogateFamily) -> f64 {
    match kind {
        SurrogateFamily::Dsq => 1.0,
        SurrogateFamily::Rdfs => 4.0 / PI - 1.0,
    }
}

/// Variance in the sharp limit: divergent for DSQ, `16/(3 pi) - 16/pi^2`
/// for RDFS.
pub fn variance_limit(kind: SurrogateFamily) -> Variance {
    match kind {
        SurrogateFamily::Dsq => Variance::Infinite,
        SurrogateFamily::Rdfs => Variance::Finite(16.0 / (3.0 * PI) - 16.0 / (PI * PI)),
    }
}

/// The three integral identities backing the closed forms, used as test
/// oracles against adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceIntegral {
    /// `int_{-pi/2}^{pi/2} dx / (1 + c cos x)`, requires `c^2 < 1`.
    CosineLinear,
    /// `int_{-pi/2}^{pi/2} dx / (1 + c cos x)^2`, requires `c^2 < 1`.
    CosineQuadratic,
    /// `int_{-c}^{c} sech^4 x dx`, requires `c > 0`.
    Sech4,
}

/// Closed form of a [`ReferenceIntegral`].
pub fn reference_integral(kind: ReferenceIntegral, c: f64) -> Result<f64> {
    match kind {
        ReferenceIntegral::CosineLinear => {
            if c * c >= 1.0 {
                return Err(Error::OutOfDomain(format!("need c^2 < 1, got c = {c}")));
            }
            let omc2 = (1.0 - c) * (1.0 + c);
            Ok(4.0 / omc2.sqrt() * atan_term(c))
        }
        ReferenceIntegral::CosineQuadratic => {
            if c * c >= 1.0 {
                return Err(Error::OutOfDomain(format!("need c^2 < 1, got c = {c}")));
            }
            let omc2 = (1.0 - c) * (1.0 + c);
            Ok(4.0 / omc2.powf(1.5) * atan_term(c) - 2.0 * c / omc2)
        }
        ReferenceIntegral::Sech4 => {
            if c <= 0.0 {
                return Err(Error::OutOfDomain(format!("need c > 0, got c = {c}")));
            }
            let t = c.tanh();
            Ok(2.0 * (t - t.powi(3) / 3.0))
        }
    }
}

/// Monte Carlo estimate of the gradient statistics over `xi ~ U(l, u)`,
/// with the range tiled into `2^bits - 1` intervals.
///
/// DSQ gradients come from the interval form; RDFS gradients use the
/// periodic form `g((xi/Delta) - round(xi/Delta))`, which is what the
/// closed forms integrate. Sampling is a single fixed-order stream of the
/// crate PRNG, so a report is a pure function of its arguments.
pub fn monte_carlo_stats(
    spec: &Surrogate,
    l: f64,
    u: f64,
    n: u64,
    bits: u32,
    seed: u64,
) -> Result<StatsReport> {
    if !(l.is_finite() && u.is_finite() && l < u) {
        return Err(Error::InvalidRange { l, u });
    }
    if n < 1_000 {
        return Err(Error::InvalidArgument(format!(
            "mc sample count must be >= 1000, got {n}"
        )));
    }
    let expectation = expectation_closed(spec)?;
    let variance = variance_closed(spec)?;
    let layout = DsqLayout::new(l, u, bits)?;

    let eval: Box<dyn Fn(f64) -> f64> = match spec {
        Surrogate::Ste => Box::new(|_| 1.0),
        Surrogate::Rdfs { amplitude, .. } => {
            let c = amplitude * SQRT_2 * PI;
            let delta = layout.delta;
            Box::new(move |xi: f64| {
                let y = xi / delta;
                let w = y - y.round_ties_even();
                let cos = (PI * w).cos();
                (1.0 - c * cos) / (1.0 + c * cos)
            })
        }
        Surrogate::Dsq { alpha } => {
            let alpha = *alpha;
            let layout = layout.clone();
            Box::new(move |xi: f64| g_dsq(xi, alpha, &layout))
        }
    };

    let mut rng = Rng::new(seed);
    // Welford accumulation
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..n {
        let xi = rng.range(l, u);
        let g = eval(xi);
        let delta = g - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (g - mean);
    }
    let var_mc = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };

    Ok(StatsReport {
        spec: spec.clone(),
        l,
        u,
        expectation_closed: expectation,
        variance_closed: Variance::Finite(variance),
        expectation_mc: mean,
        variance_mc: var_mc,
        mc_samples: n,
        mc_stderr_mean: (var_mc / n as f64).sqrt(),
        seed,
    })
}
