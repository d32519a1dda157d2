//! Conditional probability paths and their vector fields.
//!
//! Every variant is a Gaussian path N(mu_t(z), sigma_t^2 I) with closed-form
//! mean and scale, so the conditional field follows the general rule
//! u_t(x|z) = (sigma_t'/sigma_t)(x - mu_t) + mu_t'. The marginal field over a
//! finite support mixes conditional fields with posterior weights
//! p_t(x|z)q(z)/p_t(x), evaluated in the log domain.
//!
//! Singular endpoints: sbcfm at t in {0,1}, icfm_gaussian_source at t=0, and
//! fm_gaussian at t=1 when sigma=0 all reject cond_field with a domain error.

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, StandardNormal};

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathVariant {
    FmGaussian,
    Icfm,
    Otcfm,
    Sbcfm,
    IcfmGaussianSource,
}

impl PathVariant {
    pub fn name(self) -> &'static str {
        match self {
            PathVariant::FmGaussian => "fm_gaussian",
            PathVariant::Icfm => "icfm",
            PathVariant::Otcfm => "otcfm",
            PathVariant::Sbcfm => "sbcfm",
            PathVariant::IcfmGaussianSource => "icfm_gaussian_source",
        }
    }

    /// true when the condition is an (x0, x1) pair rather than x1 alone
    pub fn pair_conditioned(self) -> bool {
        !matches!(self, PathVariant::FmGaussian)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PathSpec {
    pub variant: PathVariant,
    pub sigma: f64,
}

impl PathSpec {
    pub fn new(variant: PathVariant, sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "sigma must be finite and >= 0, got {sigma}"
            )));
        }
        match variant {
            PathVariant::Sbcfm if sigma == 0.0 => Err(Error::InvalidConfig(
                "sbcfm needs sigma > 0 (Brownian bridge scale)".into(),
            )),
            PathVariant::FmGaussian if sigma >= 1.0 => Err(Error::InvalidConfig(format!(
                "fm_gaussian needs sigma in [0,1), got {sigma}"
            ))),
            _ => Ok(PathSpec { variant, sigma }),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Condition {
    /// target point x1 (fm_gaussian)
    Target(Array1<f64>),
    /// (x0, x1) pair (all other variants)
    Pair(Array1<f64>, Array1<f64>),
}

impl Condition {
    pub fn dim(&self) -> usize {
        match self {
            Condition::Target(x1) => x1.len(),
            Condition::Pair(_, x1) => x1.len(),
        }
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("t must lie in [0,1], got {t}")));
    }
    Ok(())
}

fn split_pair<'c>(spec: &PathSpec, z: &'c Condition) -> Result<(Option<&'c Array1<f64>>, &'c Array1<f64>)> {
    match (spec.variant.pair_conditioned(), z) {
        (false, Condition::Target(x1)) => Ok((None, x1)),
        (true, Condition::Pair(x0, x1)) => {
            if x0.len() != x1.len() {
                return Err(Error::Shape(format!(
                    "condition pair dims differ: {} vs {}",
                    x0.len(),
                    x1.len()
                )));
            }
            Ok((Some(x0), x1))
        }
        (false, Condition::Pair(..)) => Err(Error::InvalidConfig(format!(
            "{} conditions on x1 alone, got a pair",
            spec.variant.name()
        ))),
        (true, Condition::Target(_)) => Err(Error::InvalidConfig(format!(
            "{} conditions on an (x0, x1) pair",
            spec.variant.name()
        ))),
    }
}

/// sigma_t for a variant at time t (std, not variance)
fn scale_at(spec: &PathSpec, t: f64) -> f64 {
    let s = spec.sigma;
    match spec.variant {
        PathVariant::FmGaussian => t * s - t + 1.0,
        PathVariant::Icfm | PathVariant::Otcfm => s,
        PathVariant::Sbcfm => s * (t * (1.0 - t)).sqrt(),
        PathVariant::IcfmGaussianSource => ((s * t).powi(2) + 2.0 * s * t * (1.0 - t)).sqrt(),
    }
}

impl PathSpec {
    /// Mean vector and scalar standard deviation of p_t(x|z).
    pub fn mean_std(&self, z: &Condition, t: f64) -> Result<(Array1<f64>, f64)> {
        check_t(t)?;
        let (x0, x1) = split_pair(self, z)?;
        let mu = match x0 {
            None => x1 * t,
            Some(x0) => x1 * t + x0 * (1.0 - t),
        };
        Ok((mu, scale_at(self, t)))
    }

    /// One draw x ~ p_t(x|z); std = 0 returns the mean exactly.
    pub fn sample_xt(&self, z: &Condition, t: f64, rng: &mut Rng) -> Result<Array1<f64>> {
        let (mut mu, std) = self.mean_std(z, t)?;
        if std > 0.0 {
            for m in mu.iter_mut() {
                let e: f64 = StandardNormal.sample(rng);
                *m += std * e;
            }
        }
        Ok(mu)
    }

    /// Conditional vector field u_t(x|z).
    pub fn cond_field(&self, z: &Condition, t: f64, x: &Array1<f64>) -> Result<Array1<f64>> {
        check_t(t)?;
        let (x0, x1) = split_pair(self, z)?;
        if x.len() != x1.len() {
            return Err(Error::Shape(format!(
                "x has dim {}, condition has dim {}",
                x.len(),
                x1.len()
            )));
        }
        let s = self.sigma;
        match self.variant {
            PathVariant::FmGaussian => {
                let denom = 1.0 - (1.0 - s) * t;
                if denom <= 0.0 {
                    return Err(Error::Domain(format!(
                        "fm_gaussian field singular at t={t} with sigma={s}"
                    )));
                }
                Ok((x1 - &(x * (1.0 - s))) / denom)
            }
            PathVariant::Icfm | PathVariant::Otcfm => Ok(x1 - x0.unwrap()),
            PathVariant::Sbcfm => {
                if t <= 0.0 || t >= 1.0 {
                    return Err(Error::Domain(format!(
                        "sbcfm field singular at t={t}"
                    )));
                }
                let x0 = x0.unwrap();
                let mu = x1 * t + x0 * (1.0 - t);
                let coeff = (1.0 - 2.0 * t) / (2.0 * t * (1.0 - t));
                Ok((x - &mu) * coeff + (x1 - x0))
            }
            PathVariant::IcfmGaussianSource => {
                let x0 = x0.unwrap();
                if s == 0.0 {
                    return Ok(x1 - x0);
                }
                if t <= 0.0 {
                    return Err(Error::Domain(
                        "icfm_gaussian_source field singular at t=0".into(),
                    ));
                }
                // sigma_t' / sigma_t = s(st + 1 - 2t) / sigma_t^2
                let var = (s * t).powi(2) + 2.0 * s * t * (1.0 - t);
                let coeff = s * (s * t + 1.0 - 2.0 * t) / var;
                let mu = x1 * t + x0 * (1.0 - t);
                Ok((x - &mu) * coeff + (x1 - x0))
            }
        }
    }
}

/// Batched draws from p_{t_i}(x|z_i). `x0` is ignored by fm_gaussian and
/// required otherwise; rows align across x0/x1/t.
pub fn sample_xt_batch(
    spec: &PathSpec,
    x0: Option<&Batch>,
    x1: &Batch,
    t: &Array1<f64>,
    rng: &mut Rng,
) -> Result<Batch> {
    let (n, d) = (x1.nrows(), x1.ncols());
    batch_shapes(spec, x0, x1, t)?;
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        check_t(t[i])?;
        let ti = t[i];
        let std = scale_at(spec, ti);
        for k in 0..d {
            let mut m = ti * x1[[i, k]];
            if let Some(x0) = x0 {
                m += (1.0 - ti) * x0[[i, k]];
            }
            if std > 0.0 {
                let e: f64 = StandardNormal.sample(rng);
                m += std * e;
            }
            out[[i, k]] = m;
        }
    }
    Ok(out)
}

/// Batched u_{t_i}(x_i|z_i); rows align across all arguments.
pub fn cond_field_batch(
    spec: &PathSpec,
    x0: Option<&Batch>,
    x1: &Batch,
    t: &Array1<f64>,
    x: &Batch,
) -> Result<Batch> {
    let (n, d) = (x1.nrows(), x1.ncols());
    batch_shapes(spec, x0, x1, t)?;
    if x.dim() != (n, d) {
        return Err(Error::Shape("x batch shape mismatch".into()));
    }
    let s = spec.sigma;
    let mut out = Array2::zeros((n, d));
    for i in 0..n {
        let ti = t[i];
        check_t(ti)?;
        match spec.variant {
            PathVariant::FmGaussian => {
                let denom = 1.0 - (1.0 - s) * ti;
                if denom <= 0.0 {
                    return Err(Error::Domain(format!(
                        "fm_gaussian field singular at t={ti} with sigma={s}"
                    )));
                }
                for k in 0..d {
                    out[[i, k]] = (x1[[i, k]] - (1.0 - s) * x[[i, k]]) / denom;
                }
            }
            PathVariant::Icfm | PathVariant::Otcfm => {
                let x0 = x0.unwrap();
                for k in 0..d {
                    out[[i, k]] = x1[[i, k]] - x0[[i, k]];
                }
            }
            PathVariant::Sbcfm => {
                if ti <= 0.0 || ti >= 1.0 {
                    return Err(Error::Domain(format!("sbcfm field singular at t={ti}")));
                }
                let x0 = x0.unwrap();
                let coeff = (1.0 - 2.0 * ti) / (2.0 * ti * (1.0 - ti));
                for k in 0..d {
                    let mu = ti * x1[[i, k]] + (1.0 - ti) * x0[[i, k]];
                    out[[i, k]] = coeff * (x[[i, k]] - mu) + (x1[[i, k]] - x0[[i, k]]);
                }
            }
            PathVariant::IcfmGaussianSource => {
                let x0 = x0.unwrap();
                if s == 0.0 {
                    for k in 0..d {
                        out[[i, k]] = x1[[i, k]] - x0[[i, k]];
                    }
                    continue;
                }
                if ti <= 0.0 {
                    return Err(Error::Domain(
                        "icfm_gaussian_source field singular at t=0".into(),
                    ));
                }
                let var = (s * ti).powi(2) + 2.0 * s * ti * (1.0 - ti);
                let coeff = s * (s * ti + 1.0 - 2.0 * ti) / var;
                for k in 0..d {
                    let mu = ti * x1[[i, k]] + (1.0 - ti) * x0[[i, k]];
                    out[[i, k]] = coeff * (x[[i, k]] - mu) + (x1[[i, k]] - x0[[i, k]]);
                }
            }
        }
    }
    Ok(out)
}

fn batch_shapes(spec: &PathSpec, x0: Option<&Batch>, x1: &Batch, t: &Array1<f64>) -> Result<()> {
    if spec.variant.pair_conditioned() {
        let x0 = x0.ok_or_else(|| {
            Error::InvalidConfig(format!("{} needs source points", spec.variant.name()))
        })?;
        if x0.dim() != x1.dim() {
            return Err(Error::Shape("x0/x1 batch shape mismatch".into()));
        }
    }
    if t.len() != x1.nrows() {
        return Err(Error::Shape("t length does not match batch".into()));
    }
    Ok(())
}

/// Shared core of the marginal field and aggregated targets: posterior-
/// weighted average of conditional fields over `terms`, log-domain weights.
fn mixture_field(
    spec: &PathSpec,
    terms: &[(Condition, f64)],
    t: f64,
    x: &Array1<f64>,
) -> Result<Array1<f64>> {
    if terms.is_empty() {
        return Err(Error::InvalidConfig("empty condition set".into()));
    }
    let d = x.len();
    let mut logw = Vec::with_capacity(terms.len());
    let mut fields = Vec::with_capacity(terms.len());
    let mut max_logdens = f64::NEG_INFINITY;
    let mut exact_hits: Vec<usize> = Vec::new();
    for (idx, (z, qz)) in terms.iter().enumerate() {
        if *qz < 0.0 {
            return Err(Error::DegenerateWeights("negative support mass".into()));
        }
        let (mu, std) = self_mean_std(spec, z, t)?;
        if mu.len() != d {
            return Err(Error::Shape("probe x dim mismatch with support".into()));
        }
        if std == 0.0 {
            if x == &mu {
                exact_hits.push(idx);
            }
            logw.push(f64::NEG_INFINITY);
            fields.push(None);
            continue;
        }
        let sq: f64 = x.iter().zip(mu.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        let logdens = -0.5 * sq / (std * std)
            - d as f64 * (std.ln() + 0.5 * (2.0 * std::f64::consts::PI).ln());
        max_logdens = max_logdens.max(logdens);
        logw.push(logdens + qz.ln());
        fields.push(Some(spec.cond_field(z, t, x)?));
    }

    // degenerate point masses dominate any density when they sit exactly on x
    if !exact_hits.is_empty() {
        let mut num = Array1::zeros(d);
        let mut den = 0.0;
        for &idx in &exact_hits {
            let (z, qz) = &terms[idx];
            num = num + spec.cond_field(z, t, x)? * *qz;
            den += qz;
        }
        if den == 0.0 {
            return Err(Error::DegenerateDensity(
                "point-mass support with zero weight at x".into(),
            ));
        }
        return Ok(num / den);
    }

    if max_logdens < -745.0 {
        return Err(Error::DegenerateDensity(format!(
            "all conditional log-densities underflow at t={t} (max {max_logdens:.1})"
        )));
    }
    let mx = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return Err(Error::DegenerateDensity("zero total mass at x".into()));
    }
    let mut num = Array1::zeros(d);
    let mut den = 0.0;
    for (lw, f) in logw.iter().zip(fields.iter()) {
        if *lw == f64::NEG_INFINITY {
            continue;
        }
        let w = (lw - mx).exp();
        num = num + f.as_ref().unwrap() * w;
        den += w;
    }
    Ok(num / den)
}

fn self_mean_std(spec: &PathSpec, z: &Condition, t: f64) -> Result<(Array1<f64>, f64)> {
    spec.mean_std(z, t)
}

/// Exact marginal field u_t(x) for a finite support {(z, q(z))}; masses must
/// sum to 1.
pub fn marginal_field_oracle(
    spec: &PathSpec,
    support: &[(Condition, f64)],
    t: f64,
    x: &Array1<f64>,
) -> Result<Array1<f64>> {
    let total: f64 = support.iter().map(|(_, q)| q).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::DegenerateWeights(format!(
            "support masses sum to {total}, need 1"
        )));
    }
    mixture_field(spec, support, t, x)
}

/// Batch-aggregated target u_t(x|zbar) over a subset of conditions; with the
/// full support and correct masses this equals the marginal field.
pub fn aggregated_target(
    spec: &PathSpec,
    zbar: &[(Condition, f64)],
    t: f64,
    x: &Array1<f64>,
) -> Result<Array1<f64>> {
    mixture_field(spec, zbar, t, x)
}
