//! Small quadrature toolkit: adaptive Simpson on finite intervals, panel
//! extension to half-infinite ranges, and half-period summation for
//! oscillatory Fourier/Hankel integrands.

/// Adaptive Simpson integration of `f` over `[a, b]`.
///
/// `tol` is an absolute tolerance on the panel error estimate; recursion
/// stops at `max_depth` regardless.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, max_depth: u32) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
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
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Integrate `f` over `[a, ∞)` by summing panels of geometrically growing
/// width until a panel contributes less than `tol` times the accumulated
/// absolute mass (with a few guard panels for safety).
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: &F, a: f64, width0: f64, tol: f64) -> f64 {
    let mut total = 0.0;
    let mut abs_total = 0.0;
    let mut lo = a;
    let mut width = width0;
    let mut quiet_panels = 0;
    for _ in 0..200 {
        let hi = lo + width;
        let part = adaptive_simpson(f, lo, hi, tol * width0.min(1.0) * 1e-2, 40);
        total += part;
        abs_total += part.abs();
        if part.abs() <= tol * abs_total.max(1e-300) {
            quiet_panels += 1;
            if quiet_panels >= 3 {
                break;
            }
        } else {
            quiet_panels = 0;
        }
        lo = hi;
        width *= 1.5;
    }
    total
}

/// Integrate an oscillatory integrand over `[0, ∞)` by summing half-period
/// panels of length `half_period` (pass the full decay envelope in `f`).
/// Terminates once four consecutive panels are below `tol` relative to the
/// accumulated absolute sum.
pub fn integrate_oscillatory<F: Fn(f64) -> f64>(
    f: &F,
    half_period: f64,
    tol: f64,
    max_panels: usize,
) -> f64 {
    let mut total = 0.0;
    let mut abs_total = 0.0;
    let mut quiet = 0;
    for i in 0..max_panels {
        let lo = i as f64 * half_period;
        let hi = lo + half_period;
        let part = adaptive_simpson(f, lo, hi, 1e-13, 40);
        total += part;
        abs_total += part.abs();
        if part.abs() <= tol * abs_total.max(1e-300) {
            quiet += 1;
            if quiet >= 4 {
                break;
            }
        } else {
            quiet = 0;
        }
    }
    total
}

/// Cumulative trapezoid CDF of an unnormalised density tabulated on `grid`.
/// Returns (grid, cdf) with cdf normalised to end at 1.
pub fn tabulate_cdf<F: Fn(f64) -> f64>(f: &F, grid: &[f64]) -> Vec<f64> {
    assert!(grid.len() >= 2);
    let mut cdf = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    cdf.push(0.0);
    let mut prev_x = grid[0];
    let mut prev_f = f(prev_x);
    for &x in &grid[1..] {
        let fx = f(x);
        acc += 0.5 * (fx + prev_f) * (x - prev_x);
        cdf.push(acc);
        prev_x = x;
        prev_f = fx;
    }
    let norm = *cdf.last().unwrap();
    assert!(norm > 0.0, "density mass must be positive");
    for c in cdf.iter_mut() {
        *c /= norm;
    }
    cdf
}

/// Piecewise-linear interpolation of a tabulated monotone function.
pub fn interp_monotone(grid: &[f64], values: &[f64], x: f64) -> f64 {
    if x <= grid[0] {
        return values[0];
    }
    if x >= grid[grid.len() - 1] {
        return values[values.len() - 1];
    }
    let idx = grid.partition_point(|&g| g < x);
    let (x0, x1) = (grid[idx - 1], grid[idx]);
    let (y0, y1) = (values[idx - 1], values[idx]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}
