//! Small scalar and vector optimizers: bracketing root finder, golden-section
//! search, Nelder–Mead and Levenberg–Marquardt.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)]
use num_traits::Float;

use crate::{Error, Result};

/// Brent's method on `[lo, hi]`; `f(lo)` and `f(hi)` must differ in sign.
pub fn brent_root<F>(mut f: F, lo: f64, hi: f64, xtol: f64, max_iter: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..max_iter {
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
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * m * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Ok(b)
}

/// Minimum of a unimodal `f` on `[lo, hi]`, returned as `(x, f(x))`.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, xtol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1)?, f(x2)?);
    while (b - a).abs() > xtol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    /// Stop once a window of `2 (n + 1)` steps improves the best value by
    /// less than this.
    pub ftol: f64,
    pub max_evaluations: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            ftol: 1e-7,
            max_evaluations: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// Best value at the end of each convergence window.
    pub trace: Vec<f64>,
    pub converged: bool,
}

/// Nelder–Mead minimization with an axis-aligned initial simplex `x0 + steps[i] e_i`.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    opts: NelderMeadOptions,
) -> Result<Minimum>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    if steps.len() != n || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "simplex needs {n} > 0 steps, got {}",
            steps.len()
        )));
    }
    let mut pts: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += steps[i];
        pts.push(p);
    }
    let mut vals = Vec::with_capacity(n + 1);
    for p in &pts {
        vals.push(f(p)?);
    }
    let mut evals = n + 1;
    let start_value = vals[0];
    let window = 2 * (n + 1);
    let mut trace = Vec::new();
    let mut window_start_best = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let mut steps_in_window = 0;
    let mut converged = false;

    while evals < opts.max_evaluations {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| {
            vals[a]
                .partial_cmp(&vals[b])
                .unwrap_or(core::cmp::Ordering::Equal)
        });
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        if steps_in_window == window {
            trace.push(vals[0]);
            if window_start_best - vals[0] < opts.ftol && vals[n] - vals[0] < opts.ftol {
                converged = true;
                break;
            }
            window_start_best = vals[0];
            steps_in_window = 0;
        }
        steps_in_window += 1;

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&pts[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr)?;
        evals += 1;
        if fr < vals[0] {
            let xe = along(-2.0);
            let fe = f(&xe)?;
            evals += 1;
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = along(-0.5);
                let fc = f(&xc)?;
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc)?;
                (xc, fc)
            };
            evals += 1;
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let shrunk: Vec<f64> = pts[0]
                        .iter()
                        .zip(&pts[i])
                        .map(|(b, x)| b + 0.5 * (x - b))
                        .collect();
                    vals[i] = f(&shrunk)?;
                    pts[i] = shrunk;
                    evals += 1;
                }
            }
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| {
            vals[a]
                .partial_cmp(&vals[b])
                .unwrap_or(core::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    let (x, value) = if vals[best] <= start_value {
        (pts[best].clone(), vals[best])
    } else {
        (x0.to_vec(), start_value)
    };
    Ok(Minimum {
        x,
        value,
        evaluations: evals,
        trace,
        converged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative change in the residual sum of squares that ends the search.
    pub ftol: f64,
    pub xtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: 1e-15,
            xtol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub params: Vec<f64>,
    /// Sum of squared residuals at `params`.
    pub sse: f64,
    /// `sigma^2 (J^T J)^-1` with `sigma^2 = sse / (m - n)`; `None` when
    /// singular or when there are no degrees of freedom.
    pub covariance: Option<DMatrix<f64>>,
    pub iterations: usize,
}

impl LeastSquares {
    /// One-sigma uncertainty of parameter `i`, zero when unavailable.
    pub fn stderr(&self, i: usize) -> f64 {
        self.covariance
            .as_ref()
            .map(|c| c[(i, i)].max(0.0).sqrt())
            .unwrap_or(0.0)
    }
}

fn jacobian<F>(f: &mut F, p: &[f64], r0: &DVector<f64>) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let m = r0.len();
    let mut j = DMatrix::zeros(m, p.len());
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = 1e-7 * p[k].abs().max(1e-4);
        q[k] = p[k] + h;
        let plus = f(&q)?;
        q[k] = p[k] - h;
        let minus = f(&q)?;
        q[k] = p[k];
        for i in 0..m {
            j[(i, k)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(j)
}

/// Levenberg–Marquardt on residuals `f(p)` with a central-difference Jacobian.
pub fn levenberg_marquardt<F>(mut f: F, p0: &[f64], opts: LmOptions) -> Result<LeastSquares>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = p0.len();
    let mut p = p0.to_vec();
    let mut r = DVector::from_vec(f(&p)?);
    let m = r.len();
    if m < n {
        return Err(Error::InvalidArgument(format!(
            "{m} residuals cannot determine {n} parameters"
        )));
    }
    let mut sse = r.norm_squared();
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut jac = jacobian(&mut f, &p, &r)?;
    while iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let g = jac.transpose() * &r;
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
            let rt = DVector::from_vec(f(&trial)?);
            let sse_t = rt.norm_squared();
            if sse_t.is_finite() && sse_t <= sse {
                let small_step = step
                    .iter()
                    .zip(&p)
                    .all(|(s, x)| s.abs() <= opts.xtol * (x.abs() + opts.xtol));
                let small_gain = sse - sse_t <= opts.ftol * sse;
                p = trial;
                r = rt;
                sse = sse_t;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if small_step || small_gain {
                    return finish(&mut f, p, r, sse, iterations);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
        jac = jacobian(&mut f, &p, &r)?;
    }
    finish(&mut f, p, r, sse, iterations)
}

fn finish<F>(
    f: &mut F,
    p: Vec<f64>,
    r: DVector<f64>,
    sse: f64,
    iterations: usize,
) -> Result<LeastSquares>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let (m, n) = (r.len(), p.len());
    let jac = jacobian(f, &p, &r)?;
    let covariance = if m > n {
        (jac.transpose() * &jac)
            .try_inverse()
            .map(|inv| inv * (sse / (m - n) as f64))
    } else {
        None
    };
    Ok(LeastSquares {
        params: p,
        sse,
        covariance,
        iterations,
    })
}
