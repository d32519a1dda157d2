//! Metrics: exact empirical 2-Wasserstein distance, path energy and its
//! normalized form, MMD, objective variance, ground-truth Schrödinger-bridge
//! marginals with the time-resolved error curve, and the importance-weighted
//! log-partition estimator.

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::batch::{sq_dist, Batch};
use crate::coupling::{exact_ot_plan, sinkhorn_plan, CouplingPlan};
use crate::data::{IsoGaussian, LogDensity};
use crate::error::{Error, Result};
use crate::integrate::{
    integrate, integrate_with_logdet, OdeSettings, RecordSpec, VectorField,
};
use crate::paths::{cond_field_batch, sample_xt_batch, PathSpec, PathVariant};
use crate::rng::Rng;
use crate::trainer::{coupled_pairs, Coupling, Sampler, SB_T_CLAMP};

const SINKHORN_TOL: f64 = 1e-8;
const SINKHORN_MAX_ITERS: usize = 10_000;

/// One evaluated model, as written to report files.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub w2_sq: f64,
    pub path_energy: f64,
    pub npe: f64,
    pub mmd: Option<f64>,
    pub nfe_mean: f64,
    pub per_time_errors: Option<Vec<(f64, f64)>>,
}

/// Exact squared 2-Wasserstein distance between two uniform empirical
/// measures (the optimal-coupling cost under squared Euclidean ground cost).
pub fn w2_squared(a: &Batch, b: &Batch) -> Result<f64> {
    Ok(exact_ot_plan(a.clone(), b.clone(), None, None)?.cost)
}

/// Push a source batch through the flow, returning the generated samples,
/// the mean path energy, and the function-evaluation count.
pub fn generate_samples<F: VectorField>(
    field: &F,
    source: &Batch,
    settings: &OdeSettings,
) -> Result<(Batch, f64, usize)> {
    let traj = integrate(field, source, 0.0, 1.0, settings, &RecordSpec::energy())?;
    let pe = traj
        .path_energy
        .as_ref()
        .expect("energy recording was requested")
        .mean()
        .unwrap_or(0.0);
    Ok((traj.final_state().clone(), pe, traj.nfe))
}

/// PE = E ∫‖v‖²dt over trajectories from `source`, and NPE = |PE − W₂²|/W₂²
/// against a reference squared Wasserstein cost.
pub fn path_energy_and_npe<F: VectorField>(
    field: &F,
    source: &Batch,
    w2_ref: f64,
    settings: &OdeSettings,
) -> Result<(f64, f64)> {
    if !(w2_ref > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "npe needs a positive w2 reference, got {w2_ref}"
        )));
    }
    let (_, pe, _) = generate_samples(field, source, settings)?;
    Ok((pe, (pe - w2_ref).abs() / w2_ref))
}

/// Biased (V-statistic) squared MMD with the Gaussian kernel
/// exp(−‖x−y‖²/(2·bandwidth_sq)).
pub fn mmd(a: &Batch, b: &Batch, bandwidth_sq: f64) -> Result<f64> {
    if bandwidth_sq <= 0.0 || !bandwidth_sq.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "mmd bandwidth_sq must be positive, got {bandwidth_sq}"
        )));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::Shape(format!(
            "mmd dimension mismatch: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let ksum = |x: &Batch, y: &Batch| -> f64 {
        let mut s = 0.0;
        for xi in x.rows() {
            let xi = xi.as_slice().unwrap();
            for yj in y.rows() {
                s += (-sq_dist(xi, yj.as_slice().unwrap()) / (2.0 * bandwidth_sq)).exp();
            }
        }
        s
    };
    let n = a.nrows() as f64;
    let m = b.nrows() as f64;
    let v = ksum(a, a) / (n * n) + ksum(b, b) / (m * m) - 2.0 * ksum(a, b) / (n * m);
    Ok(v.max(0.0))
}

/// Monte-Carlo objective variance E ‖u_t(x|z) − reference(t,x)‖² where z is
/// drawn through the given coupling on fresh minibatches and x ~ p_t(·|z).
/// `reference` maps per-row times and states to field values (a trained model
/// or a marginal-field oracle).
#[allow(clippy::too_many_arguments)]
pub fn objective_variance(
    path: &PathSpec,
    coupling: Coupling,
    ot_chunk: Option<usize>,
    source: &mut Sampler,
    target: &mut Sampler,
    reference: &dyn Fn(&Array1<f64>, &Batch) -> Result<Batch>,
    n_samples: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<f64> {
    if n_samples == 0 || batch_size == 0 {
        return Err(Error::InvalidConfig(
            "objective_variance needs n_samples >= 1 and batch_size >= 1".into(),
        ));
    }
    let mut total = 0.0;
    let mut done = 0usize;
    while done < n_samples {
        let (src, _) = source.draw(batch_size, rng)?;
        let (tgt, w) = target.draw(batch_size, rng)?;
        let (x0p, x1p) = coupled_pairs(coupling, ot_chunk, &src, &tgt, w.as_deref(), rng)?;
        let m = batch_size.min(n_samples - done);
        let x0m = x0p.slice(s![..m, ..]).to_owned();
        let x1m = x1p.slice(s![..m, ..]).to_owned();
        use rand::Rng as _;
        let mut t = Array1::zeros(m);
        for v in t.iter_mut() {
            *v = if path.variant == PathVariant::Sbcfm {
                rng.gen_range(SB_T_CLAMP.0..SB_T_CLAMP.1)
            } else {
                rng.gen::<f64>()
            };
        }
        let x0_opt = path.variant.pair_conditioned().then_some(&x0m);
        let xt = sample_xt_batch(path, x0_opt, &x1m, &t, rng)?;
        let u = cond_field_batch(path, x0_opt, &x1m, &t, &xt)?;
        let r = reference(&t, &xt)?;
        if r.dim() != u.dim() {
            return Err(Error::Shape(format!(
                "reference returned {:?}, expected {:?}",
                r.dim(),
                u.dim()
            )));
        }
        total += (&u - &r).mapv(|v| v * v).sum();
        done += m;
    }
    Ok(total / n_samples as f64)
}

/// Time-t marginal of the entropic bridge given an already-built plan:
/// (x₀,x₁) pairs from the plan plus N(0, σ²t(1−t)) noise around the
/// interpolant.
pub fn sb_sample_from_plan(
    plan: &CouplingPlan,
    sigma: f64,
    t: f64,
    n: usize,
    rng: &mut Rng,
) -> Batch {
    use rand_distr::{Distribution, StandardNormal};
    let (x0, x1) = plan.sample_pairs(n, rng);
    let std = sigma * (t * (1.0 - t)).max(0.0).sqrt();
    let mut out = &x1 * t + &x0 * (1.0 - t);
    if std > 0.0 {
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v += std * z;
        }
    }
    out
}

/// Ground-truth Schrödinger-bridge marginal at time t between two empirical
/// measures: entropic OT pairs at ε = 2σ² plus Brownian-bridge noise.
pub fn sb_ground_truth_sample(
    q0: &Batch,
    q1: &Batch,
    sigma: f64,
    t: f64,
    n: usize,
    rng: &mut Rng,
) -> Result<Batch> {
    let plan = sinkhorn_plan(
        q0.clone(),
        q1.clone(),
        None,
        None,
        2.0 * sigma * sigma,
        SINKHORN_TOL,
        SINKHORN_MAX_ITERS,
    )?;
    Ok(sb_sample_from_plan(&plan, sigma, t, n, rng))
}

/// Integrate trajectories from q0 and compare each interior grid time against
/// the ground-truth bridge marginal; returns (t, w2_squared) per interior
/// timepoint. The entropic plan over (q0, q1) is built once.
#[allow(clippy::too_many_arguments)]
pub fn sb_error_curve<F: VectorField>(
    field: &F,
    q0: &Batch,
    q1: &Batch,
    sigma: f64,
    n_timepoints: usize,
    n_samples: usize,
    settings: &OdeSettings,
    rng: &mut Rng,
) -> Result<Vec<(f64, f64)>> {
    if n_timepoints < 3 {
        return Err(Error::InvalidConfig(
            "sb_error_curve needs at least 3 timepoints".into(),
        ));
    }
    if n_samples == 0 {
        return Err(Error::InvalidConfig("n_samples must be >= 1".into()));
    }
    let plan = sinkhorn_plan(
        q0.clone(),
        q1.clone(),
        None,
        None,
        2.0 * sigma * sigma,
        SINKHORN_TOL,
        SINKHORN_MAX_ITERS,
    )?;
    let src = {
        use rand::Rng as _;
        let mut m = Array2::zeros((n_samples, q0.ncols()));
        for i in 0..n_samples {
            let j = rng.gen_range(0..q0.nrows());
            m.row_mut(i).assign(&q0.row(j));
        }
        m
    };
    let traj = integrate(field, &src, 0.0, 1.0, settings, &RecordSpec::grid(n_timepoints))?;
    let mut out = Vec::with_capacity(n_timepoints - 2);
    for k in 1..n_timepoints - 1 {
        let t = traj.times[k];
        let gt = sb_sample_from_plan(&plan, sigma, t, n_samples, rng);
        out.push((t, w2_squared(&traj.states[k], &gt)?));
    }
    Ok(out)
}

/// Importance-weighted log-partition estimate: log (1/K) Σ exp(log R(x₁)
/// − log N(x₀) + ∫ div v dt), computed with log-sum-exp. `log_r` is the
/// unnormalized log-density the flow was trained to hit.
pub fn log_partition_estimate<F: VectorField>(
    field: &F,
    log_r: &dyn Fn(&ArrayView1<f64>) -> f64,
    k: usize,
    d: usize,
    settings: &OdeSettings,
    h_div: f64,
    rng: &mut Rng,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidConfig("log_partition needs K >= 1".into()));
    }
    let x0 = crate::data::standard_normal(k, d, rng);
    let (x1, log_det, _) = integrate_with_logdet(field, &x0, 0.0, 1.0, settings, h_div)?;
    let base = IsoGaussian::standard(d);
    let logw: Vec<f64> = (0..k)
        .map(|i| log_r(&x1.row(i)) - base.log_density(&x0.row(i)) + log_det[i])
        .collect();
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::Numeric(
            "all importance weights underflowed or are non-finite".into(),
        ));
    }
    let lse = m + logw.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    Ok(lse - (k as f64).ln())
}
