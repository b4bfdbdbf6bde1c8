//! Small numerical kernels: adaptive quadrature, dense linear solves,
//! stationary distributions, Cesàro limits, and a few vector helpers.
//!
//! Everything here operates on plain slices; problem sizes in this crate are
//! tiny (hundreds of states at most), so dense O(n^3) routines are fine.

use crate::error::{Error, Result};

/// sup f - inf f over a table.
pub fn span(v: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in v {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    if v.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

pub fn span_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if a.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}

const MAX_QUAD_DEPTH: u32 = 48;

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step(
    f: &mut dyn FnMut(f64) -> f64,
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
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth >= MAX_QUAD_DEPTH || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)
        + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `tol`. Handles piecewise-smooth integrands with isolated kinks by
/// recursive bisection.
pub fn adaptive_quadrature(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    // Seed with a few panels so narrow features away from the midpoint are
    // not missed by the first Simpson estimate.
    let panels = 8;
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let hi = lo + h;
        let mid = 0.5 * (lo + hi);
        let flo = f(lo);
        let fmid = f(mid);
        let fhi = f(hi);
        let whole = simpson(flo, fmid, fhi, hi - lo);
        total += adaptive_step(
            &mut f,
            lo,
            hi,
            flo,
            fmid,
            fhi,
            whole,
            tol / panels as f64,
            0,
        );
    }
    total
}

/// Adaptive Simpson quadrature of a vector-valued integrand, refined on the
/// max-norm of the componentwise error estimate. `f(x, out)` fills `out`
/// with the integrand at `x`.
pub fn adaptive_quadrature_vec(
    f: &mut dyn FnMut(f64, &mut [f64]),
    dim: usize,
    a: f64,
    b: f64,
    tol: f64,
) -> Vec<f64> {
    if a == b {
        return vec![0.0; dim];
    }

    fn eval(f: &mut dyn FnMut(f64, &mut [f64]), dim: usize, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; dim];
        f(x, &mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &mut dyn FnMut(f64, &mut [f64]),
        dim: usize,
        a: f64,
        b: f64,
        fa: &[f64],
        fm: &[f64],
        fb: &[f64],
        whole: &[f64],
        tol: f64,
        depth: u32,
        acc: &mut [f64],
    ) {
        let m = 0.5 * (a + b);
        let flm = eval(f, dim, 0.5 * (a + m));
        let frm = eval(f, dim, 0.5 * (m + b));
        let mut left = vec![0.0; dim];
        let mut right = vec![0.0; dim];
        let mut err = 0.0f64;
        for i in 0..dim {
            left[i] = simpson(fa[i], flm[i], fm[i], m - a);
            right[i] = simpson(fm[i], frm[i], fb[i], b - m);
            err = err.max((left[i] + right[i] - whole[i]).abs());
        }
        if depth >= MAX_QUAD_DEPTH || err <= 15.0 * tol {
            for i in 0..dim {
                acc[i] += left[i] + right[i] + (left[i] + right[i] - whole[i]) / 15.0;
            }
            return;
        }
        recurse(f, dim, a, m, fa, &flm, fm, &left, 0.5 * tol, depth + 1, acc);
        recurse(f, dim, m, b, fm, &frm, fb, &right, 0.5 * tol, depth + 1, acc);
    }

    let panels = 8;
    let h = (b - a) / panels as f64;
    let mut acc = vec![0.0; dim];
    for p in 0..panels {
        let lo = a + p as f64 * h;
        let hi = lo + h;
        let flo = eval(f, dim, lo);
        let fmid = eval(f, dim, 0.5 * (lo + hi));
        let fhi = eval(f, dim, hi);
        let mut whole = vec![0.0; dim];
        for i in 0..dim {
            whole[i] = simpson(flo[i], fmid[i], fhi[i], hi - lo);
        }
        recurse(
            f,
            dim,
            lo,
            hi,
            &flo,
            &fmid,
            &fhi,
            &whole,
            tol / panels as f64,
            0,
            &mut acc,
        );
    }
    acc
}

/// Solve the dense system `A x = b` by Gaussian elimination with partial
/// pivoting. `a` is row-major `n x n` and is consumed.
pub fn solve_linear(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    assert_eq!(a.len(), n * n);
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if best < 1e-14 {
            return Err(Error::Numerical("singular linear system".into()));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row * n + k] * x[k];
        }
        x[row] = acc / a[row * n + row];
    }
    Ok(x)
}

/// Stationary distribution of a row-stochastic matrix `p` (row-major
/// `n x n`): solves pi P = pi with sum(pi) = 1. Requires the chain to have a
/// unique stationary distribution.
pub fn stationary_distribution(p: &[f64], n: usize) -> Result<Vec<f64>> {
    assert_eq!(p.len(), n * n);
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for row in 0..n {
        for col in 0..n {
            a[row * n + col] = p[col * n + row] - if row == col { 1.0 } else { 0.0 };
        }
    }
    for col in 0..n {
        a[(n - 1) * n + col] = 1.0;
    }
    b[n - 1] = 1.0;
    let pi = solve_linear(a, b)?;
    if pi.iter().any(|v| *v < -1e-9) {
        return Err(Error::Numerical(
            "stationary solve produced negative mass (chain not uniquely ergodic?)".into(),
        ));
    }
    Ok(pi.into_iter().map(|v| v.max(0.0)).collect())
}

/// Cesàro limit (1/T) sum_{t<T} P^t for T = 2^doublings, computed by the
/// doubling identity A_{2T} = (A_T + A_T P^T) / 2. Converges O(1/T) for any
/// stochastic matrix, including periodic and reducible ones.
pub fn cesaro_limit(p: &[f64], n: usize, doublings: u32) -> Vec<f64> {
    assert_eq!(p.len(), n * n);
    let mut avg = identity(n);
    let mut power = p.to_vec();
    for _ in 0..doublings {
        let avg_shift = mat_mul(&avg, &power, n);
        for i in 0..n * n {
            avg[i] = 0.5 * (avg[i] + avg_shift[i]);
        }
        power = mat_mul(&power, &power, n);
    }
    avg
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

/// Least-squares line fit; returns (slope, intercept, r_squared).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}
