//! Training loops: minibatch coupling construction, the regression step,
//! early stopping, energy-based target generation (RWIS and MALA), and the
//! leave-one-out time-series protocol.
//!
//! A training run is a pure function of (config, seed): data, validation
//! draws, and parameter init all come from named ChaCha streams derived from
//! the config seed, so repeated runs produce identical histories and
//! checkpoints. Wall-clock limits are the one opt-in exception.

use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::batch::{Batch, WeightedBatch};
use crate::coupling::{exact_ot_plan, independent_plan, sinkhorn_plan, CouplingPlan};
use crate::data::{Dataset, LogDensity};
use crate::error::{Error, Result};
use crate::net::{AdamConfig, AdamW, FieldModel};
use crate::paths::{
    aggregated_target, cond_field_batch, sample_xt_batch, Condition, PathSpec, PathVariant,
};
use crate::rng::{derive_rng, Rng};

/// sbcfm's conditional field is singular at the endpoints; training times are
/// clamped to this interval
pub const SB_T_CLAMP: (f64, f64) = (0.01, 0.99);

const SINKHORN_TOL: f64 = 1e-8;
const SINKHORN_MAX_ITERS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coupling {
    Independent,
    ExactOt,
    Sinkhorn { epsilon: f64 },
}

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub path: PathSpec,
    pub coupling: Coupling,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    /// couple within chunks of this size instead of the whole optimization
    /// batch (the batch-size sweep varies this, not the optimizer batch)
    pub ot_batch_size: Option<usize>,
    pub max_epochs: usize,
    /// validation checks without improvement before stopping
    pub patience: usize,
    /// epochs between validation checks
    pub val_interval: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// conditions aggregated per regression target; 1 = plain conditional
    pub aggregation_m: usize,
    pub grad_clip: Option<f64>,
    /// defaults to ceil(10^4 / batch_size): an "epoch" over a nominal
    /// 10k-point dataset even when the distribution is samplable
    pub steps_per_epoch: Option<usize>,
    pub wall_clock_limit_seconds: Option<f64>,
}

impl TrainConfig {
    /// Defaults per training protocol: width-64x3 net, AdamW(1e-3, 1e-5),
    /// batch 512, early stopping checked every 10 epochs with patience 3.
    /// The coupling follows the path variant.
    pub fn new(path: PathSpec) -> Self {
        let coupling = match path.variant {
            PathVariant::Sbcfm => Coupling::Sinkhorn {
                epsilon: 2.0 * path.sigma * path.sigma,
            },
            PathVariant::Otcfm => Coupling::ExactOt,
            _ => Coupling::Independent,
        };
        TrainConfig {
            path,
            coupling,
            hidden: vec![64, 64, 64],
            batch_size: 512,
            ot_batch_size: None,
            max_epochs: 1000,
            patience: 3,
            val_interval: 10,
            lr: 1e-3,
            weight_decay: 1e-5,
            seed: 0,
            aggregation_m: 1,
            grad_clip: None,
            steps_per_epoch: None,
            wall_clock_limit_seconds: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        PathSpec::new(self.path.variant, self.path.sigma)?;
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.val_interval == 0 || self.patience == 0 {
            return Err(Error::InvalidConfig(
                "val_interval and patience must be >= 1".into(),
            ));
        }
        if self.aggregation_m == 0 {
            return Err(Error::InvalidConfig("aggregation_m must be >= 1".into()));
        }
        if self.aggregation_m > 1 && self.path.sigma == 0.0 {
            return Err(Error::InvalidConfig(
                "aggregated targets need sigma > 0 (posterior weights degenerate)".into(),
            ));
        }
        if self.lr <= 0.0 {
            return Err(Error::InvalidConfig("lr must be positive".into()));
        }
        match (self.path.variant, self.coupling) {
            (PathVariant::Sbcfm, Coupling::Sinkhorn { epsilon }) => {
                if epsilon <= 0.0 {
                    return Err(Error::InvalidConfig("sinkhorn epsilon must be > 0".into()));
                }
            }
            (PathVariant::Sbcfm, _) => {
                return Err(Error::InvalidConfig(
                    "sbcfm requires the sinkhorn coupling (epsilon = 2 sigma^2)".into(),
                ))
            }
            (PathVariant::FmGaussian, Coupling::Independent) => {}
            (PathVariant::FmGaussian, _) => {
                return Err(Error::InvalidConfig(
                    "fm_gaussian conditions on the target only; use the independent coupling"
                        .into(),
                ))
            }
            (_, Coupling::Sinkhorn { epsilon }) if epsilon <= 0.0 => {
                return Err(Error::InvalidConfig("sinkhorn epsilon must be > 0".into()))
            }
            _ => {}
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.steps_per_epoch
            .unwrap_or((10_000 + self.batch_size - 1) / self.batch_size)
            .max(1)
    }
}

/// Minibatch source for one side of a training leg.
pub enum Sampler<'a> {
    Dataset(Dataset),
    /// fresh weighted batches (importance-sampled targets)
    WeightedFn(Box<dyn FnMut(usize, &mut Rng) -> Result<WeightedBatch> + 'a>),
}

impl Sampler<'_> {
    pub fn draw(&mut self, n: usize, rng: &mut Rng) -> Result<(Batch, Option<Vec<f64>>)> {
        match self {
            Sampler::Dataset(ds) => Ok((ds.sample(n, rng), None)),
            Sampler::WeightedFn(f) => {
                let wb = f(n, rng)?;
                Ok((wb.points, Some(wb.weights)))
            }
        }
    }
}

/// One segment of global time with its endpoint distributions. Plain
/// source-to-target training is a single leg spanning (0, 1).
pub struct Leg<'a> {
    pub source: Sampler<'a>,
    pub target: Sampler<'a>,
    pub span: (f64, f64),
    pub val_source: Batch,
    pub val_target: Batch,
}

impl<'a> Leg<'a> {
    pub fn whole(source: Sampler<'a>, target: Sampler<'a>, val_source: Batch, val_target: Batch) -> Self {
        Leg {
            source,
            target,
            span: (0.0, 1.0),
            val_source,
            val_target,
        }
    }
}

#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub elapsed_s: f64,
}

fn build_plan(
    coupling: Coupling,
    x0: Batch,
    x1: Batch,
    b: Option<&[f64]>,
) -> Result<CouplingPlan> {
    match coupling {
        Coupling::Independent => independent_plan(x0, x1, None, b),
        Coupling::ExactOt => exact_ot_plan(x0, x1, None, b),
        Coupling::Sinkhorn { epsilon } => {
            sinkhorn_plan(x0, x1, None, b, epsilon, SINKHORN_TOL, SINKHORN_MAX_ITERS)
        }
    }
}

/// Pair source and target rows according to the coupling, building plans on
/// chunks of `ot_chunk` rows when set (the batch-size sweep knob).
pub fn coupled_pairs(
    coupling: Coupling,
    ot_chunk: Option<usize>,
    source: &Batch,
    target: &Batch,
    target_weights: Option<&[f64]>,
    rng: &mut Rng,
) -> Result<(Batch, Batch)> {
    let n = source.nrows();
    if target.nrows() != n {
        return Err(Error::Shape(format!(
            "source batch {} rows vs target {}",
            n,
            target.nrows()
        )));
    }
    if source.ncols() != target.ncols() {
        return Err(Error::Shape(format!(
            "dimension mismatch: {} vs {}",
            source.ncols(),
            target.ncols()
        )));
    }

    // independent + unweighted: the index pairing of two fresh draws already
    // is an independent coupling
    if matches!(coupling, Coupling::Independent) && target_weights.is_none() {
        return Ok((source.clone(), target.clone()));
    }

    let chunk = ot_chunk.unwrap_or(n).clamp(1, n);
    let d = source.ncols();
    let mut out0 = Array2::zeros((n, d));
    let mut out1 = Array2::zeros((n, d));
    let mut lo = 0;
    while lo < n {
        let hi = (lo + chunk).min(n);
        let bw = target_weights.map(|w| &w[lo..hi]);
        let plan = build_plan(
            coupling,
            source.slice(s![lo..hi, ..]).to_owned(),
            target.slice(s![lo..hi, ..]).to_owned(),
            bw,
        )?;
        let (p0, p1) = plan.sample_pairs(hi - lo, rng);
        out0.slice_mut(s![lo..hi, ..]).assign(&p0);
        out1.slice_mut(s![lo..hi, ..]).assign(&p1);
        lo = hi;
    }
    Ok((out0, out1))
}

/// Sample times and noisy path points for a paired batch, returning
/// (global times, x_t, regression targets). `span` rescales a leg's local
/// path time onto global time; targets pick up the 1/(t1-t0) chain-rule
/// factor.
fn regression_batch(
    cfg: &TrainConfig,
    x0p: &Batch,
    x1p: &Batch,
    span: (f64, f64),
    rng: &mut Rng,
) -> Result<(Array1<f64>, Batch, Batch)> {
    let n = x1p.nrows();
    let (t0, t1) = span;
    let len = t1 - t0;
    if !(len > 0.0) {
        return Err(Error::InvalidConfig(format!("bad leg span ({t0}, {t1})")));
    }
    let mut tau = Array1::zeros(n);
    for v in tau.iter_mut() {
        *v = if cfg.path.variant == PathVariant::Sbcfm {
            rng.gen_range(SB_T_CLAMP.0..SB_T_CLAMP.1)
        } else {
            rng.gen::<f64>()
        };
    }
    let x0_opt = cfg.path.variant.pair_conditioned().then_some(x0p);
    let xt = sample_xt_batch(&cfg.path, x0_opt, x1p, &tau, rng)?;

    let mut targets = if cfg.aggregation_m <= 1 {
        cond_field_batch(&cfg.path, x0_opt, x1p, &tau, &xt)?
    } else {
        let m = cfg.aggregation_m.min(n);
        let cond = |i: usize| -> Condition {
            if cfg.path.variant.pair_conditioned() {
                Condition::Pair(x0p.row(i).to_owned(), x1p.row(i).to_owned())
            } else {
                Condition::Target(x1p.row(i).to_owned())
            }
        };
        let mut out = Array2::zeros((n, x1p.ncols()));
        let mut lo = 0;
        while lo < n {
            let hi = (lo + m).min(n);
            let mass = 1.0 / (hi - lo) as f64;
            let zbar: Vec<(Condition, f64)> = (lo..hi).map(|i| (cond(i), mass)).collect();
            for i in lo..hi {
                let u = aggregated_target(&cfg.path, &zbar, tau[i], &xt.row(i).to_owned())?;
                out.row_mut(i).assign(&u);
            }
            lo = hi;
        }
        out
    };

    if len != 1.0 {
        targets.mapv_inplace(|v| v / len);
    }
    let t_global = tau.mapv(|v| t0 + v * len);
    Ok((t_global, xt, targets))
}

/// One coupled minibatch regression step; returns the pre-step loss.
pub fn train_step(
    model: &mut FieldModel,
    opt: &mut AdamW,
    cfg: &TrainConfig,
    source: &Batch,
    target: &Batch,
    target_weights: Option<&[f64]>,
    span: (f64, f64),
    rng: &mut Rng,
) -> Result<f64> {
    let (x0p, x1p) = coupled_pairs(
        cfg.coupling,
        cfg.ot_batch_size,
        source,
        target,
        target_weights,
        rng,
    )?;
    let (t, xt, targets) = regression_batch(cfg, &x0p, &x1p, span, rng)?;
    let (loss, mut grads) = model.loss_and_grad(&t.view(), &xt.view(), &targets.view(), None)?;
    if let Some(c) = cfg.grad_clip {
        grads.clip_global_norm(c);
    }
    opt.step(model, &grads);
    Ok(loss)
}

/// CFM loss on fixed batches without an update; used for validation.
pub fn cfm_loss(
    model: &FieldModel,
    cfg: &TrainConfig,
    source: &Batch,
    target: &Batch,
    span: (f64, f64),
    rng: &mut Rng,
) -> Result<f64> {
    let n = source.nrows();
    let mut total = 0.0;
    let mut rows = 0usize;
    let mut lo = 0;
    while lo < n {
        let hi = (lo + cfg.batch_size).min(n);
        let s = source.slice(s![lo..hi, ..]).to_owned();
        let t = target.slice(s![lo..hi, ..]).to_owned();
        let (x0p, x1p) = coupled_pairs(cfg.coupling, cfg.ot_batch_size, &s, &t, None, rng)?;
        let (tv, xt, targets) = regression_batch(cfg, &x0p, &x1p, span, rng)?;
        let (loss, _) = model.loss_and_grad(&tv.view(), &xt.view(), &targets.view(), None)?;
        total += loss * (hi - lo) as f64;
        rows += hi - lo;
        lo = hi;
    }
    Ok(total / rows as f64)
}

fn check_legs(legs: &[Leg]) -> Result<()> {
    if legs.is_empty() {
        return Err(Error::InvalidConfig("no training legs".into()));
    }
    let mut t = 0.0;
    for leg in legs {
        if (leg.span.0 - t).abs() > 1e-9 || leg.span.1 <= leg.span.0 {
            return Err(Error::InvalidConfig(format!(
                "legs must tile [0,1]; got a leg ({}, {}) after t={t}",
                leg.span.0, leg.span.1
            )));
        }
        t = leg.span.1;
    }
    if (t - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "legs end at t={t}, expected 1"
        )));
    }
    Ok(())
}

/// Full training loop with early stopping; returns the best-validation model
/// and the per-check history.
pub fn train(cfg: &TrainConfig, legs: &mut [Leg]) -> Result<(FieldModel, Vec<HistoryRow>)> {
    cfg.validate()?;
    check_legs(legs)?;
    let d = legs[0].val_source.ncols();
    let start = Instant::now();

    let init_seed = {
        use rand::RngCore as _;
        derive_rng(cfg.seed, "trainer.init").next_u64()
    };
    let mut model = FieldModel::init(d, &cfg.hidden, init_seed)?;
    let mut opt = AdamW::new(
        &model,
        AdamConfig {
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            ..AdamConfig::default()
        },
    );
    let mut rng = derive_rng(cfg.seed, "trainer.data");

    let steps = cfg.steps_per_epoch();
    let mut history = Vec::new();
    let mut best: Option<(f64, FieldModel)> = None;
    let mut bad_checks = 0usize;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let mut epoch_loss = 0.0;
        let mut ok_steps = 0usize;
        let mut last_err: Option<Error> = None;
        for _ in 0..steps {
            // pick the leg covering a uniform global time, so legs are
            // visited proportionally to their span
            let pick: f64 = rng.gen();
            let li = legs
                .iter()
                .position(|l| pick < l.span.1)
                .unwrap_or(legs.len() - 1);
            let leg = &mut legs[li];
            let step = (|| -> Result<f64> {
                let (src, _) = leg.source.draw(cfg.batch_size, &mut rng)?;
                let (tgt, w) = leg.target.draw(cfg.batch_size, &mut rng)?;
                train_step(
                    &mut model,
                    &mut opt,
                    cfg,
                    &src,
                    &tgt,
                    w.as_deref(),
                    leg.span,
                    &mut rng,
                )
            })();
            match step {
                Ok(l) => {
                    epoch_loss += l;
                    ok_steps += 1;
                }
                Err(e) => last_err = Some(e),
            }
        }
        if ok_steps == 0 {
            return Err(Error::NoConvergence(format!(
                "every step failed in epoch {epoch}: {}",
                last_err.map(|e| e.to_string()).unwrap_or_default()
            )));
        }
        let train_loss = epoch_loss / ok_steps as f64;

        if epoch % cfg.val_interval == 0 {
            // a fresh stream per check: identical draws make losses comparable
            let mut val_rng = derive_rng(cfg.seed, "trainer.val");
            let mut val_loss = 0.0;
            for leg in legs.iter() {
                let w = leg.span.1 - leg.span.0;
                val_loss += w
                    * cfm_loss(
                        &model,
                        cfg,
                        &leg.val_source,
                        &leg.val_target,
                        leg.span,
                        &mut val_rng,
                    )?;
            }
            history.push(HistoryRow {
                epoch,
                train_loss,
                val_loss,
                elapsed_s: start.elapsed().as_secs_f64(),
            });
            match &best {
                Some((b, _)) if val_loss >= *b => {
                    bad_checks += 1;
                    if bad_checks >= cfg.patience {
                        break 'epochs;
                    }
                }
                _ => {
                    best = Some((val_loss, model.clone()));
                    bad_checks = 0;
                }
            }
        }
        if let Some(limit) = cfg.wall_clock_limit_seconds {
            if start.elapsed().as_secs_f64() >= limit {
                break;
            }
        }
    }

    let final_model = best.map(|(_, m)| m).unwrap_or(model);
    Ok((final_model, history))
}

/// Reweighted importance sampling: standard-normal proposal draws weighted by
/// exp(log R - log N), self-normalized in the log domain.
pub fn rwis_batch(
    log_r: &dyn Fn(&ArrayView1<f64>) -> f64,
    d: usize,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<WeightedBatch> {
    let proposal = crate::data::IsoGaussian::standard(d);
    let points = proposal.sample(batch_size, rng);
    let logw: Vec<f64> = (0..batch_size)
        .map(|i| {
            let row = points.row(i);
            log_r(&row) - proposal.log_density(&row)
        })
        .collect();
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return Err(Error::DegenerateWeights(
            "all importance weights vanished or are non-finite".into(),
        ));
    }
    let w: Vec<f64> = logw.iter().map(|l| (l - m).exp()).collect();
    WeightedBatch::new(points, w)
}

pub struct MalaResult {
    pub samples: Batch,
    pub acceptance_rate: f64,
}

/// Independent MALA chains with a linearly decaying step size; returns each
/// chain's final state. Chains start from standard-normal draws.
pub fn mala_sample(
    target: &dyn LogDensity,
    n_samples: usize,
    n_steps: usize,
    step_start: f64,
    step_end: f64,
    rng: &mut Rng,
) -> Result<MalaResult> {
    let d = target.dim();
    let mut x = Array2::from_shape_fn((n_samples, d), |_| StandardNormal.sample(rng));
    let mut logp: Vec<f64> = (0..n_samples)
        .map(|i| target.log_density(&x.row(i)))
        .collect();
    if logp.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "non-finite log density at MALA initialization".into(),
        ));
    }
    let mut grad: Vec<Array1<f64>> = (0..n_samples).map(|i| target.grad(&x.row(i))).collect();

    let mut proposed = 0usize;
    let mut accepted = 0usize;
    let denom = (n_steps.max(2) - 1) as f64;
    for k in 0..n_steps {
        let eps = step_start + (step_end - step_start) * k as f64 / denom;
        if eps <= 0.0 {
            continue;
        }
        let noise = (2.0 * eps).sqrt();
        for i in 0..n_samples {
            let xi = x.row(i).to_owned();
            let mean_fwd = &xi + &(&grad[i] * eps);
            let y: Array1<f64> =
                Array1::from_shape_fn(d, |_| StandardNormal.sample(rng)) * noise + &mean_fwd;
            let logp_y = target.log_density(&y.view());
            proposed += 1;
            if !logp_y.is_finite() {
                continue;
            }
            let grad_y = target.grad(&y.view());
            let mean_bwd = &y + &(&grad_y * eps);
            let fwd_sq: f64 = (&y - &mean_fwd).iter().map(|v| v * v).sum();
            let bwd_sq: f64 = (&xi - &mean_bwd).iter().map(|v| v * v).sum();
            let log_alpha = logp_y - logp[i] + (fwd_sq - bwd_sq) / (4.0 * eps);
            let u: f64 = rng.gen();
            if u.ln() < log_alpha {
                x.row_mut(i).assign(&y);
                logp[i] = logp_y;
                grad[i] = grad_y;
                accepted += 1;
            }
        }
    }
    Ok(MalaResult {
        samples: x,
        acceptance_rate: if proposed == 0 {
            0.0
        } else {
            accepted as f64 / proposed as f64
        },
    })
}

#[derive(Clone, Debug)]
pub struct LooLeg {
    pub source: Batch,
    pub target: Batch,
    pub t0: f64,
    pub t1: f64,
}

#[derive(Clone, Debug)]
pub struct LooPlan {
    /// consecutive retained timepoints; the leg spanning the holdout couples
    /// its neighbours directly
    pub legs: Vec<LooLeg>,
    /// integrate eval.source from eval.t0 to eval.t1 and compare against
    /// eval.target (the held-out batch)
    pub eval: LooLeg,
}

/// Leave-one-timepoint-out interpolation plan with labels rescaled to [0,1].
pub fn leave_one_out_plan(timepoints: &[(f64, Batch)], holdout: usize) -> Result<LooPlan> {
    if timepoints.len() < 3 {
        return Err(Error::InvalidConfig(
            "leave-one-out needs at least 3 timepoints".into(),
        ));
    }
    if holdout == 0 || holdout >= timepoints.len() - 1 {
        return Err(Error::InvalidConfig(format!(
            "holdout {holdout} is an endpoint; only interior timepoints can be interpolated"
        )));
    }
    let lo = timepoints[0].0;
    let hi = timepoints[timepoints.len() - 1].0;
    for w in timepoints.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::InvalidConfig(
                "timepoint labels must be strictly increasing".into(),
            ));
        }
    }
    let g = |label: f64| (label - lo) / (hi - lo);

    let retained: Vec<usize> =
        (0..timepoints.len()).filter(|&i| i != holdout).collect();
    let legs = retained
        .windows(2)
        .map(|w| LooLeg {
            source: timepoints[w[0]].1.clone(),
            target: timepoints[w[1]].1.clone(),
            t0: g(timepoints[w[0]].0),
            t1: g(timepoints[w[1]].0),
        })
        .collect();
    Ok(LooPlan {
        legs,
        eval: LooLeg {
            source: timepoints[holdout - 1].1.clone(),
            target: timepoints[holdout].1.clone(),
            t0: g(timepoints[holdout - 1].0),
            t1: g(timepoints[holdout].0),
        },
    })
}
