//! Smooth cutoffs built from `exp(-1/t)` and adaptive Simpson quadrature.

fn glue(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// Smooth step: 0 for `t <= 0`, 1 for `t >= 1`, C-infinity in between.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = glue(t);
        a / (a + glue(1.0 - t))
    }
}

/// 1 on `|s| <= inner`, 0 on `|s| >= outer`, smooth and monotone between.
pub fn plateau(s: f64, inner: f64, outer: f64) -> f64 {
    1.0 - smooth_step((s.abs() - inner) / (outer - inner))
}

fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    f: &dyn Fn(f64) -> f64,
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
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(fa, flm, fm, a, m);
    let right = simpson(fm, frm, fb, m, b);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson integral of `f` over `[a, b]` to a relative tolerance.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // a coarse pass fixes the absolute tolerance
    let n = 64;
    let h = (b - a) / n as f64;
    let mut total = 0.0;
    let mut pieces = Vec::with_capacity(n);
    for i in 0..n {
        let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
        let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
        let s = simpson(f0, fm, f1, x0, x1);
        total += s.abs();
        pieces.push((x0, x1, f0, fm, f1, s));
    }
    let tol = rel_tol * total.max(f64::MIN_POSITIVE) / n as f64;
    pieces
        .into_iter()
        .map(|(x0, x1, f0, fm, f1, s)| refine(&f, x0, x1, f0, fm, f1, s, tol, 40))
        .sum()
}
