//! Entropic OT: log-stabilized Sinkhorn scaling.
//!
//! Linear-domain u/v updates on the rescaled kernel exp((f_i + g_j - C_ij)/eps),
//! absorbing the scalings into the log potentials whenever they overflow.
//! Mathematically identical to pure log-sum-exp iteration (survives small
//! eps), but an order of magnitude faster per sweep.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

pub struct SinkhornResult {
    pub plan: Array2<f64>,
    pub cost: f64,
    pub iters: usize,
    /// max over rows/cols of |achieved marginal - required|
    pub violation: f64,
}

pub fn solve(
    cost: &ArrayView2<f64>,
    a: &[f64],
    b: &[f64],
    eps: f64,
    tol: f64,
    max_iters: usize,
) -> Result<SinkhornResult> {
    let (n, m) = cost.dim();
    if eps <= 0.0 || !eps.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "sinkhorn epsilon must be positive, got {eps}"
        )));
    }
    if a.len() != n || b.len() != m {
        return Err(Error::Shape("marginal lengths do not match cost".into()));
    }

    let an = Array1::from_vec(a.to_vec());
    let bn = Array1::from_vec(b.to_vec());
    let mut f = Array1::<f64>::zeros(n);
    let mut g = Array1::<f64>::zeros(m);
    let mut u = Array1::<f64>::ones(n);
    let mut v = Array1::<f64>::ones(m);

    let rebuild = |f: &Array1<f64>, g: &Array1<f64>| -> Array2<f64> {
        Array2::from_shape_fn((n, m), |(i, j)| ((f[i] + g[j] - cost[[i, j]]) / eps).exp())
    };
    // exact log-domain half-updates; used to recover when the rescaled
    // kernel underflows an entire row or column
    let logsumexp_f = |g: &Array1<f64>| -> Array1<f64> {
        Array1::from_shape_fn(n, |i| {
            let mut mx = f64::NEG_INFINITY;
            for j in 0..m {
                mx = mx.max((g[j] - cost[[i, j]]) / eps);
            }
            let s: f64 = (0..m).map(|j| ((g[j] - cost[[i, j]]) / eps - mx).exp()).sum();
            eps * (a[i].ln() - (mx + s.ln()))
        })
    };
    let logsumexp_g = |f: &Array1<f64>| -> Array1<f64> {
        Array1::from_shape_fn(m, |j| {
            let mut mx = f64::NEG_INFINITY;
            for i in 0..n {
                mx = mx.max((f[i] - cost[[i, j]]) / eps);
            }
            let s: f64 = (0..n).map(|i| ((f[i] - cost[[i, j]]) / eps - mx).exp()).sum();
            eps * (b[j].ln() - (mx + s.ln()))
        })
    };

    let mut kernel = rebuild(&f, &g);
    let mut iters = 0;
    let mut violation;
    while iters < max_iters {
        iters += 1;
        let kv = kernel.dot(&v);
        if kv.iter().zip(a).any(|(s, &ai)| *s <= 0.0 && ai > 0.0) {
            // kernel row underflowed: recentre exactly in the log domain
            f = logsumexp_f(&g);
            g = logsumexp_g(&f);
            kernel = rebuild(&f, &g);
            u.fill(1.0);
            v.fill(1.0);
            continue;
        }
        u = &an / &kv;
        let ktu = kernel.t().dot(&u);
        if ktu.iter().zip(b).any(|(s, &bj)| *s <= 0.0 && bj > 0.0) {
            f = logsumexp_f(&g);
            g = logsumexp_g(&f);
            kernel = rebuild(&f, &g);
            u.fill(1.0);
            v.fill(1.0);
            continue;
        }
        v = &bn / &ktu;

        // absorb scalings before they overflow
        let umax = u.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let vmax = v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if umax > 1e30 || vmax > 1e30 || umax < 1e-30 || vmax < 1e-30 {
            for i in 0..n {
                f[i] += eps * u[i].ln();
            }
            for j in 0..m {
                g[j] += eps * v[j].ln();
            }
            kernel = rebuild(&f, &g);
            u.fill(1.0);
            v.fill(1.0);
        }

        if iters % 5 == 0 || iters == max_iters {
            violation = check_violation(&kernel, &u, &v, a, b);
            if violation <= tol {
                break;
            }
        }
    }
    violation = check_violation(&kernel, &u, &v, a, b);
    if violation > tol {
        return Err(Error::NoConvergence(format!(
            "sinkhorn: marginal violation {violation:e} > tol {tol:e} after {iters} iterations"
        )));
    }

    // final plan with scalings absorbed
    let mut plan = kernel;
    for ((i, j), p) in plan.indexed_iter_mut() {
        *p *= u[i] * v[j];
    }
    let cost_total = plan
        .iter()
        .zip(cost.iter())
        .map(|(p, c)| p * c)
        .sum::<f64>();
    Ok(SinkhornResult {
        plan,
        cost: cost_total,
        iters,
        violation,
    })
}

fn check_violation(
    kernel: &Array2<f64>,
    u: &Array1<f64>,
    v: &Array1<f64>,
    a: &[f64],
    b: &[f64],
) -> f64 {
    let kv = kernel.dot(v);
    let ktu = kernel.t().dot(u);
    let mut viol = 0.0f64;
    for i in 0..a.len() {
        viol = viol.max((u[i] * kv[i] - a[i]).abs());
    }
    for j in 0..b.len() {
        viol = viol.max((v[j] * ktu[j] - b[j]).abs());
    }
    viol
}
