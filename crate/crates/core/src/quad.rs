//! Numerical quadrature: composite Simpson on a fixed grid and adaptive
//! Simpson with error control.
//!
//! The composite rule sums panels in a fixed left-to-right order so results
//! are identical regardless of how callers might shard the work.

/// Composite Simpson rule with `panels` subintervals (`panels` must be even
/// and >= 2).
pub fn composite_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels >= 2 && panels % 2 == 0, "panels must be even and >= 2");
    let h = (b - a) / panels as f64;
    let mut sum = f(a) + f(b);
    for i in 1..panels {
        let x = a + i as f64 * h;
        sum += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    sum * h / 3.0
}

/// Adaptive Simpson integration to absolute tolerance `tol`.
pub fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }

    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = simpson(fa, fm, fb, a, b);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 50)
}
