//! Minibatch couplings between source and target point sets: independent,
//! exact OT (squared Euclidean cost), and entropic OT. A plan is an explicit
//! joint distribution over (source index, target index) that pairs can be
//! sampled from.

pub mod assignment;
pub mod simplex;
pub mod sinkhorn;

use ndarray::Array2;

use crate::batch::{sample_categorical, sq_dist, Batch};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug)]
pub enum PlanMasses {
    /// Product coupling a x b.
    Independent,
    /// Uniform mass 1/n on matched pairs (i, perm[i]).
    Assignment(Vec<usize>),
    /// Dense joint probabilities, rows = source atoms.
    Dense(Array2<f64>),
}

#[derive(Clone, Debug)]
pub struct CouplingPlan {
    pub x0: Batch,
    pub x1: Batch,
    /// source marginal (normalized)
    pub a: Vec<f64>,
    /// target marginal (normalized)
    pub b: Vec<f64>,
    pub masses: PlanMasses,
    /// expected squared distance under the plan
    pub cost: f64,
    /// entropic regularization, if any
    pub epsilon: Option<f64>,
    pub sinkhorn_iters: Option<usize>,
}

fn validate(x0: &Batch, x1: &Batch) -> Result<()> {
    if x0.nrows() == 0 || x1.nrows() == 0 {
        return Err(Error::Shape("empty batch in coupling".into()));
    }
    if x0.ncols() != x1.ncols() {
        return Err(Error::Shape(format!(
            "dimension mismatch: {} vs {}",
            x0.ncols(),
            x1.ncols()
        )));
    }
    if x0.iter().chain(x1.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite coordinates in batch".into()));
    }
    Ok(())
}

fn normalize_weights(w: Option<&[f64]>, n: usize, side: &str) -> Result<Vec<f64>> {
    match w {
        None => Ok(vec![1.0 / n as f64; n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::Shape(format!(
                    "{side} weights: {} entries for {} points",
                    w.len(),
                    n
                )));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::DegenerateWeights(format!(
                    "{side} weights must be finite and nonnegative"
                )));
            }
            let total: f64 = w.iter().sum();
            if total <= 0.0 {
                return Err(Error::DegenerateWeights(format!(
                    "{side} weights sum to zero"
                )));
            }
            Ok(w.iter().map(|v| v / total).collect())
        }
    }
}

fn is_uniform(w: &[f64]) -> bool {
    let u = 1.0 / w.len() as f64;
    w.iter().all(|&v| v == u)
}

/// Product coupling of the two marginals.
pub fn independent_plan(
    x0: Batch,
    x1: Batch,
    a: Option<&[f64]>,
    b: Option<&[f64]>,
) -> Result<CouplingPlan> {
    validate(&x0, &x1)?;
    let a = normalize_weights(a, x0.nrows(), "source")?;
    let b = normalize_weights(b, x1.nrows(), "target")?;
    let mut cost = 0.0;
    for (i, ai) in a.iter().enumerate() {
        let xi = x0.row(i);
        let xi = xi.as_slice().unwrap();
        for (j, bj) in b.iter().enumerate() {
            let xj = x1.row(j);
            cost += ai * bj * sq_dist(xi, xj.as_slice().unwrap());
        }
    }
    Ok(CouplingPlan {
        x0,
        x1,
        a,
        b,
        masses: PlanMasses::Independent,
        cost,
        epsilon: None,
        sinkhorn_iters: None,
    })
}

/// Exact minimal-cost coupling under squared Euclidean cost. Uniform
/// equal-size instances go through the assignment solver; anything else
/// through the transportation simplex.
pub fn exact_ot_plan(
    x0: Batch,
    x1: Batch,
    a: Option<&[f64]>,
    b: Option<&[f64]>,
) -> Result<CouplingPlan> {
    validate(&x0, &x1)?;
    let (n, m) = (x0.nrows(), x1.nrows());
    let a = normalize_weights(a, n, "source")?;
    let b = normalize_weights(b, m, "target")?;

    if n == m && is_uniform(&a) && is_uniform(&b) {
        let (perm, raw) = assignment::solve_points(&x0.view(), &x1.view());
        return Ok(CouplingPlan {
            x0,
            x1,
            a,
            b,
            masses: PlanMasses::Assignment(perm),
            cost: raw / n as f64,
            epsilon: None,
            sinkhorn_iters: None,
        });
    }

    // general marginals: strip zero-mass atoms, solve, re-embed
    let rows: Vec<usize> = (0..n).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| b[j] > 0.0).collect();
    let sub_a: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let sub_b: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
    let sub_cost = Array2::from_shape_fn((rows.len(), cols.len()), |(ri, cj)| {
        sq_dist(
            x0.row(rows[ri]).to_slice().unwrap(),
            x1.row(cols[cj]).to_slice().unwrap(),
        )
    });
    let sub_plan = simplex::solve(&sub_cost, &sub_a, &sub_b)?;
    let mut plan = Array2::zeros((n, m));
    let mut cost = 0.0;
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            let p = sub_plan[[ri, cj]];
            plan[[i, j]] = p;
            cost += p * sub_cost[[ri, cj]];
        }
    }
    Ok(CouplingPlan {
        x0,
        x1,
        a,
        b,
        masses: PlanMasses::Dense(plan),
        cost,
        epsilon: None,
        sinkhorn_iters: None,
    })
}

/// Entropic OT fixed point with regularization `epsilon`.
pub fn sinkhorn_plan(
    x0: Batch,
    x1: Batch,
    a: Option<&[f64]>,
    b: Option<&[f64]>,
    epsilon: f64,
    tol: f64,
    max_iters: usize,
) -> Result<CouplingPlan> {
    validate(&x0, &x1)?;
    let (n, m) = (x0.nrows(), x1.nrows());
    let a = normalize_weights(a, n, "source")?;
    let b = normalize_weights(b, m, "target")?;

    let rows: Vec<usize> = (0..n).filter(|&i| a[i] > 0.0).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| b[j] > 0.0).collect();
    let sub_a: Vec<f64> = rows.iter().map(|&i| a[i]).collect();
    let sub_b: Vec<f64> = cols.iter().map(|&j| b[j]).collect();
    let sub_cost = Array2::from_shape_fn((rows.len(), cols.len()), |(ri, cj)| {
        sq_dist(
            x0.row(rows[ri]).to_slice().unwrap(),
            x1.row(cols[cj]).to_slice().unwrap(),
        )
    });
    let r = sinkhorn::solve(&sub_cost.view(), &sub_a, &sub_b, epsilon, tol, max_iters)?;
    let mut plan = Array2::zeros((n, m));
    for (ri, &i) in rows.iter().enumerate() {
        for (cj, &j) in cols.iter().enumerate() {
            plan[[i, j]] = r.plan[[ri, cj]];
        }
    }
    Ok(CouplingPlan {
        x0,
        x1,
        a,
        b,
        masses: PlanMasses::Dense(plan),
        cost: r.cost,
        epsilon: Some(epsilon),
        sinkhorn_iters: Some(r.iters),
    })
}

impl CouplingPlan {
    /// Joint probability of pairing source atom i with target atom j.
    pub fn joint(&self, i: usize, j: usize) -> f64 {
        match &self.masses {
            PlanMasses::Independent => self.a[i] * self.b[j],
            PlanMasses::Assignment(perm) => {
                if perm[i] == j {
                    self.a[i]
                } else {
                    0.0
                }
            }
            PlanMasses::Dense(p) => p[[i, j]],
        }
    }

    /// Max deviation of the plan's marginals from (a, b).
    pub fn marginal_violation(&self) -> f64 {
        match &self.masses {
            PlanMasses::Independent | PlanMasses::Assignment(_) => 0.0,
            PlanMasses::Dense(p) => {
                let mut viol = 0.0f64;
                for (i, &ai) in self.a.iter().enumerate() {
                    viol = viol.max((p.row(i).sum() - ai).abs());
                }
                for (j, &bj) in self.b.iter().enumerate() {
                    viol = viol.max((p.column(j).sum() - bj).abs());
                }
                viol
            }
        }
    }

    /// Draw `count` (x0, x1) pairs i.i.d. from the plan's joint distribution.
    pub fn sample_pairs(&self, count: usize, rng: &mut Rng) -> (Batch, Batch) {
        let d = self.x0.ncols();
        let (idx0, idx1): (Vec<usize>, Vec<usize>) = match &self.masses {
            PlanMasses::Independent => {
                let i = sample_categorical(&self.a, count, rng);
                let j = sample_categorical(&self.b, count, rng);
                (i, j)
            }
            PlanMasses::Assignment(perm) => {
                let i = sample_categorical(&self.a, count, rng);
                let j = i.iter().map(|&k| perm[k]).collect();
                (i, j)
            }
            PlanMasses::Dense(p) => {
                let flat: Vec<f64> = p.iter().copied().collect();
                let m = p.ncols();
                let idx = sample_categorical(&flat, count, rng);
                (
                    idx.iter().map(|&k| k / m).collect(),
                    idx.iter().map(|&k| k % m).collect(),
                )
            }
        };
        let mut out0 = Array2::zeros((count, d));
        let mut out1 = Array2::zeros((count, d));
        for k in 0..count {
            out0.row_mut(k).assign(&self.x0.row(idx0[k]));
            out1.row_mut(k).assign(&self.x1.row(idx1[k]));
        }
        (out0, out1)
    }
}
