//! One-dimensional quadrature and extrapolation utilities.
//!
//! Gauss–Legendre nodes come from `gauss-quad`; the panel, tanh-sinh and
//! adaptive layers and the extrapolation tableaux are local.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(order: usize) -> Vec<(f64, f64)> {
    let order = NonZeroUsize::new(order.max(1)).unwrap();
    let mut nw: Vec<(f64, f64)> = GaussLegendre::new(order)
        .as_node_weight_pairs()
        .to_vec();
    nw.sort_by(|a, b| a.0.total_cmp(&b.0));
    nw
}

/// Tanh-sinh (double exponential) nodes and weights on `[-1, 1]` with step
/// `h = 2^{-level}`; nodes whose weight underflows relative to the centre
/// are dropped, and nodes that round to ±1 are skipped.
pub fn tanh_sinh(level: u32) -> Vec<(f64, f64)> {
    use std::f64::consts::FRAC_PI_2;
    let h = 0.5f64.powi(level as i32);
    let mut out = Vec::new();
    let mut k: i64 = 0;
    loop {
        let t = k as f64 * h;
        let u = FRAC_PI_2 * t.sinh();
        let x = u.tanh();
        let w = h * FRAC_PI_2 * t.cosh() / u.cosh().powi(2);
        if w < 1e-20 || 1.0 - x <= f64::EPSILON {
            break;
        }
        out.push((x, w));
        if k > 0 {
            out.push((-x, w));
        }
        k += 1;
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Rule applied on each panel of a composite quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PanelRule {
    GaussLegendre { order: usize },
    TanhSinh { level: u32 },
}

impl PanelRule {
    pub fn reference_nodes(&self) -> Vec<(f64, f64)> {
        match *self {
            PanelRule::GaussLegendre { order } => gauss_legendre(order),
            PanelRule::TanhSinh { level } => tanh_sinh(level),
        }
    }
}

/// Composite rule on `[a, b]` split into `panels` equal panels.
pub fn composite_nodes(a: f64, b: f64, panels: usize, rule: PanelRule) -> Vec<(f64, f64)> {
    let reference = rule.reference_nodes();
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * reference.len());
    for k in 0..panels {
        let lo = a + k as f64 * width;
        let mid = lo + 0.5 * width;
        for &(x, w) in &reference {
            out.push((mid + 0.5 * width * x, 0.5 * width * w));
        }
    }
    out
}

/// Adaptive bisection with a 10/20-point Gauss–Legendre pair on each
/// subinterval. The relative tolerance is measured against `∫|f|`, and a
/// subinterval whose two estimates agree to round-off is accepted.
/// Returns the integral and the accumulated error estimate.
pub fn adaptive_integrate(
    f: &dyn Fn(f64) -> C64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(C64, f64)> {
    const MAX_DEPTH: usize = 48;
    let low = gauss_legendre(10);
    let high = gauss_legendre(20);
    // (∫f, ∫|f|) on one subinterval
    let apply = |nodes: &[(f64, f64)], lo: f64, hi: f64| -> (C64, f64) {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        nodes.iter().fold((C64::new(0.0, 0.0), 0.0), |(s, m), &(x, w)| {
            let v = f(mid + half * x);
            (s + v * (w * half), m + v.norm() * w * half)
        })
    };
    let scale: f64 = {
        let pieces = 64;
        let width = (b - a) / pieces as f64;
        (0..pieces)
            .map(|k| apply(&high, a + k as f64 * width, a + (k + 1) as f64 * width).1)
            .sum()
    };
    let budget = abs_tol.max(rel_tol * scale);
    let mut stack = vec![(a, b, 0usize)];
    let mut total = C64::new(0.0, 0.0);
    let mut err = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (coarse, _) = apply(&low, lo, hi);
        let (fine, magnitude) = apply(&high, lo, hi);
        let e = (fine - coarse).norm();
        let share = budget * (hi - lo) / (b - a);
        let roundoff = 64.0 * f64::EPSILON * magnitude;
        if e <= share.max(roundoff) || depth >= MAX_DEPTH {
            total += fine;
            err += e;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    if err > budget.max(64.0 * f64::EPSILON * scale) {
        return Err(Error::QuadratureNonConvergence(err));
    }
    Ok((total, err))
}

/// Polynomial (Neville) extrapolation of `ys(xs)` to `x = 0`; returns the
/// extrapolant and the magnitude of the last tableau correction.
pub fn polynomial_extrapolate(xs: &[f64], ys: &[C64]) -> (C64, f64) {
    let n = xs.len();
    assert_eq!(n, ys.len());
    assert!(n > 0);
    if n == 1 {
        return (ys[0], f64::INFINITY);
    }
    let mut p = ys.to_vec();
    let mut last_change = f64::INFINITY;
    for m in 1..n {
        for i in 0..n - m {
            let xi = xs[i];
            let xj = xs[i + m];
            let next = (p[i + 1] * xi - p[i] * xj) / (xi - xj);
            if i == n - m - 1 {
                last_change = (next - p[i + 1]).norm();
            }
            p[i] = next;
        }
    }
    (p[0], last_change)
}

/// Diagonal rational (Bulirsch–Stoer) extrapolation of `ys(xs)` to `x = 0`.
/// Exact for functions of the form `(a + b x)/(1 + c x)` given three points.
/// Returns the extrapolant and the size of the final correction.
pub fn rational_extrapolate(xs: &[f64], ys: &[C64]) -> Result<(C64, f64)> {
    const TINY: f64 = 1e-300;
    let n = xs.len();
    if n == 0 || n != ys.len() {
        return Err(Error::invalid("extrapolation needs matching, nonempty samples"));
    }
    if n == 1 {
        return Ok((ys[0], f64::INFINITY));
    }
    let mut c: Vec<C64> = ys.iter().map(|&y| y + TINY).collect();
    let mut d = c.clone();
    let mut ns = 0usize;
    let mut hh = xs[0].abs();
    for (i, &x) in xs.iter().enumerate() {
        if x == 0.0 {
            return Ok((ys[i], 0.0));
        }
        if x.abs() < hh {
            ns = i;
            hh = x.abs();
        }
    }
    let mut y = ys[ns];
    let mut dy = C64::new(f64::INFINITY, 0.0);
    let mut ns = ns as isize - 1;
    for m in 1..n {
        for i in 0..n - m {
            let w = c[i + 1] - d[i];
            let h = xs[i + m];
            let t = d[i] * (xs[i] / h);
            let mut dd = t - c[i + 1];
            if dd.norm() == 0.0 {
                return Err(Error::QuadratureNonConvergence(f64::INFINITY));
            }
            dd = w / dd;
            d[i] = c[i + 1] * dd;
            c[i] = t * dd;
        }
        dy = if 2 * (ns + 1) < (n - m) as isize {
            c[(ns + 1) as usize]
        } else {
            let v = d[ns as usize];
            ns -= 1;
            v
        };
        y += dy;
    }
    Ok((y, dy.norm()))
}
