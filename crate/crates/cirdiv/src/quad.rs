//! Numerical workhorses: adaptive Gauss–Kronrod quadrature, Chebyshev
//! series with termwise antiderivatives, Gauss–Legendre rules and a Brent
//! root solver.
//!
//! The Chebyshev machinery exists so that the hitting functionals become
//! *smooth* evaluable objects: finite differences of an adaptive quadrature
//! jump at subdivision boundaries, while Clenshaw evaluation of a fitted
//! series differentiates cleanly.

use crate::error::{Error, Result};

// 7-point Gauss / 15-point Kronrod abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One G7-K15 panel: returns (kronrod value, |kronrod − gauss| error guess).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
///
/// Bisects the worst panel until the summed error estimate drops below
/// `abs_tol + rel_tol·|value|` or the panel budget is exhausted.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    // (neg error, a, b, value, err) — a simple worst-first queue.
    let (v0, e0) = gk15(&f, a, b);
    let mut panels = vec![(a, b, v0, e0)];
    for _ in 0..2000 {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let err: f64 = panels.iter().map(|p| p.3).sum();
        if err <= abs_tol + rel_tol * value.abs() {
            return Ok(value);
        }
        // split the panel with the largest error estimate
        let (idx, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty panel list");
        let (pa, pb, _, _) = panels.swap_remove(idx);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            return Err(Error::Numerical(format!(
                "quadrature interval [{pa}, {pb}] cannot be split further"
            )));
        }
        let (v1, e1) = gk15(&f, pa, mid);
        let (v2, e2) = gk15(&f, mid, pb);
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
    }
    Err(Error::Numerical(format!(
        "adaptive quadrature on [{a}, {b}] did not converge to rel_tol={rel_tol}, abs_tol={abs_tol}"
    )))
}

/// A truncated Chebyshev series on `[a, b]`.
///
/// Fitted at Chebyshev–Lobatto nodes; evaluation is Clenshaw recurrence, so
/// the object is a single smooth function however it was produced.
#[derive(Debug, Clone)]
pub struct Chebyshev {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
}

impl Chebyshev {
    /// Interpolate `f` at `n + 1` Chebyshev–Lobatto points on `[a, b]`.
    pub fn fit<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> Self {
        assert!(n >= 2 && b > a);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let fv: Vec<f64> = (0..=n)
            .map(|j| f(mid + half * (std::f64::consts::PI * j as f64 / n as f64).cos()))
            .collect();
        // DCT-I, O(n^2): fine for the handful of fits done per object.
        let mut coeffs = vec![0.0; n + 1];
        for (k, ck) in coeffs.iter_mut().enumerate() {
            let mut s = 0.5 * (fv[0] + if k % 2 == 0 { fv[n] } else { -fv[n] });
            for (j, fj) in fv.iter().enumerate().take(n).skip(1) {
                s += fj * (std::f64::consts::PI * (k * j) as f64 / n as f64).cos();
            }
            *ck = 2.0 * s / n as f64;
        }
        coeffs[0] *= 0.5;
        coeffs[n] *= 0.5;
        Chebyshev { a, b, coeffs }
    }

    /// Domain of validity.
    pub fn domain(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    /// Clenshaw evaluation. Arguments slightly outside `[a, b]` are allowed
    /// (analytic continuation over a few interpolation-node spacings), which
    /// the finite-difference stencils near domain edges rely on.
    pub fn eval(&self, x: f64) -> f64 {
        let t = (2.0 * x - self.a - self.b) / (self.b - self.a);
        let mut b1 = 0.0;
        let mut b2 = 0.0;
        for &c in self.coeffs.iter().rev() {
            let tmp = 2.0 * t * b1 - b2 + c;
            b2 = b1;
            b1 = tmp;
        }
        b1 - t * b2
    }

    /// Termwise antiderivative, normalized so that it vanishes at `a`.
    pub fn antiderivative(&self) -> Chebyshev {
        let n = self.coeffs.len();
        let scale = 0.5 * (self.b - self.a);
        let mut out = vec![0.0; n + 1];
        let get = |k: usize| -> f64 {
            if k < n {
                self.coeffs[k]
            } else {
                0.0
            }
        };
        for k in 1..=n {
            let kf = k as f64;
            let prev = if k == 1 { 2.0 * get(0) } else { get(k - 1) };
            out[k] = scale * (prev - get(k + 1)) / (2.0 * kf);
        }
        let mut anti = Chebyshev {
            a: self.a,
            b: self.b,
            coeffs: out,
        };
        let at_a = anti.eval(self.a);
        anti.coeffs[0] -= at_a;
        anti
    }

    /// Maximum absolute deviation from `other` over a probe grid; used to
    /// decide whether a refinement changed anything.
    pub fn max_deviation(&self, other: &Chebyshev, probes: usize) -> f64 {
        (0..=probes)
            .map(|i| {
                let x = self.a + (self.b - self.a) * i as f64 / probes as f64;
                (self.eval(x) - other.eval(x)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Fit `f` with doubling resolution until two consecutive fits agree to
/// `tol` on a probe grid.
pub fn fit_to_tolerance<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Chebyshev> {
    let mut n = 128;
    let mut current = Chebyshev::fit(&f, a, b, n);
    while n <= 4096 {
        let finer = Chebyshev::fit(&f, a, b, 2 * n);
        if current.max_deviation(&finer, 257) <= tol {
            return Ok(finer);
        }
        current = finer;
        n *= 2;
    }
    Err(Error::Numerical(format!(
        "Chebyshev fit on [{a}, {b}] did not reach tolerance {tol}"
    )))
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`
/// (Newton iteration on the Legendre recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Outcome of a bracketed root search.
#[derive(Debug, Clone, Copy)]
pub struct RootResult {
    pub root: f64,
    pub iterations: u32,
    pub f_root: f64,
}

/// Brent's method on a bracketing interval `[a, b]` with `f(a)·f(b) ≤ 0`.
pub fn brent<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    xtol: f64,
    max_iter: u32,
) -> Result<RootResult> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(RootResult { root: a, iterations: 0, f_root: 0.0 });
    }
    if fb == 0.0 {
        return Ok(RootResult { root: b, iterations: 0, f_root: 0.0 });
    }
    if fa.signum() == fb.signum() {
        return Err(Error::Numerical(format!(
            "root not bracketed: f({a}) = {fa}, f({b}) = {fb}"
        )));
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(RootResult { root: b, iterations: iter, f_root: fb });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic / secant step
            let s = fb / fa;
            let (mut p, mut q) = if a == c {
                (2.0 * xm * s, 1.0 - s)
            } else {
                let q0 = fa / fc;
                let r = fb / fc;
                (
                    s * (2.0 * xm * q0 * (q0 - r) - (b - a) * (r - 1.0)),
                    (q0 - 1.0) * (r - 1.0) * (s - 1.0),
                )
            };
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(Error::Numerical(format!(
        "Brent did not converge within {max_iter} iterations (last bracket [{b}, {c}])"
    )))
}

/// Numerically stable deterministic sum (recursive pairwise). The result
/// does not depend on how work was distributed across threads because it
/// is always applied to the same index-ordered buffer.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1..=8 => xs.iter().sum(),
        n => {
            let (lo, hi) = xs.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}
