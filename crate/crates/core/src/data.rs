//! Dataset generators, the funnel energy, and CSV point-cloud ingestion.
//!
//! The 2D generators are pure functions of the RNG stream, so any fixed seed
//! reproduces bit-identical batches. moons and scurve are whitened with
//! closed-form population moments rather than sample statistics — that keeps
//! two draws of the same dataset identically distributed instead of each
//! carrying its own affine map.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::batch::{col_mean, col_std, Batch};
use crate::error::{Error, Result};
use crate::rng::Rng;

const LN_2PI: f64 = 1.8378770664093453;

// population moments of the un-whitened generators (noise included)
const MOONS_MEAN: [f64; 2] = [0.5, 0.25];
// var_x = 3/4 + 0.1^2; var_y = 9/16 - 1/pi + 0.1^2
const MOONS_VAR: [f64; 2] = [0.76, 0.5625 - std::f64::consts::FRAC_1_PI + 0.01];
// var_x = 1/2 + 0.05^2; var_y = 3/2 + 4/(3 pi) + 0.05^2
const SCURVE_VAR: [f64; 2] = [0.5025, 1.5 + 4.0 / (3.0 * std::f64::consts::PI) + 0.0025];

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dataset {
    Gaussian { d: usize },
    EightGaussians,
    Moons,
    Scurve,
    Funnel,
    /// rows drawn with replacement (CSV-backed point clouds)
    #[serde(skip)]
    Empirical(Batch),
}

impl Dataset {
    /// Accepts the names used in configs; `d` only matters for `gaussian`.
    pub fn parse(name: &str, d: usize) -> Result<Dataset> {
        match name {
            "gaussian" | "normal" => {
                if d == 0 {
                    return Err(Error::InvalidConfig("gaussian needs d >= 1".into()));
                }
                Ok(Dataset::Gaussian { d })
            }
            "8gaussians" | "eight_gaussians" => Ok(Dataset::EightGaussians),
            "moons" => Ok(Dataset::Moons),
            "scurve" => Ok(Dataset::Scurve),
            "funnel" => Ok(Dataset::Funnel),
            other => Err(Error::InvalidConfig(format!("unknown dataset '{other}'"))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Dataset::Gaussian { d } => *d,
            Dataset::Empirical(b) => b.ncols(),
            Dataset::Funnel => FUNNEL_D,
            _ => 2,
        }
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Batch {
        assert!(n >= 1);
        match self {
            Dataset::Gaussian { d } => standard_normal(n, *d, rng),
            Dataset::EightGaussians => eight_gaussians(n, rng),
            Dataset::Moons => moons(n, rng),
            Dataset::Scurve => scurve(n, rng),
            Dataset::Funnel => funnel_sample(n, rng),
            Dataset::Empirical(points) => {
                let m = points.nrows();
                let mut out = Array2::zeros((n, points.ncols()));
                for i in 0..n {
                    out.row_mut(i).assign(&points.row(rng.gen_range(0..m)));
                }
                out
            }
        }
    }
}

pub fn standard_normal(n: usize, d: usize, rng: &mut Rng) -> Batch {
    Array2::from_shape_fn((n, d), |_| StandardNormal.sample(rng))
}

/// Equal mixture of 8 Gaussians (std 0.1) centered at radius 2*sqrt(2).
pub fn eight_gaussians(n: usize, rng: &mut Rng) -> Batch {
    let r = 2.0 * std::f64::consts::SQRT_2;
    let mut out = Array2::zeros((n, 2));
    for i in 0..n {
        let k = rng.gen_range(0..8usize);
        let theta = std::f64::consts::TAU * k as f64 / 8.0;
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        out[[i, 0]] = r * theta.cos() + 0.1 * z0;
        out[[i, 1]] = r * theta.sin() + 0.1 * z1;
    }
    out
}

/// Two interleaving half-circles (noise std 0.1), whitened to zero mean and
/// unit per-axis std.
pub fn moons(n: usize, rng: &mut Rng) -> Batch {
    let sd = [MOONS_VAR[0].sqrt(), MOONS_VAR[1].sqrt()];
    let mut out = Array2::zeros((n, 2));
    for i in 0..n {
        let inner = rng.gen_bool(0.5);
        let t = rng.gen_range(0.0..std::f64::consts::PI);
        let (mut x, mut y) = if inner {
            (1.0 - t.cos(), 0.5 - t.sin())
        } else {
            (t.cos(), t.sin())
        };
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        x += 0.1 * z0;
        y += 0.1 * z1;
        out[[i, 0]] = (x - MOONS_MEAN[0]) / sd[0];
        out[[i, 1]] = (y - MOONS_MEAN[1]) / sd[1];
    }
    out
}

/// (sin u, sign(u)(cos u - 1)) over u ~ U(-3pi/2, 3pi/2) with noise std 0.05,
/// whitened (the un-whitened mean is already zero by symmetry).
pub fn scurve(n: usize, rng: &mut Rng) -> Batch {
    let lim = 1.5 * std::f64::consts::PI;
    let sd = [SCURVE_VAR[0].sqrt(), SCURVE_VAR[1].sqrt()];
    let mut out = Array2::zeros((n, 2));
    for i in 0..n {
        let u = rng.gen_range(-lim..lim);
        let z0: f64 = StandardNormal.sample(rng);
        let z1: f64 = StandardNormal.sample(rng);
        out[[i, 0]] = (u.sin() + 0.05 * z0) / sd[0];
        out[[i, 1]] = (u.signum() * (u.cos() - 1.0) + 0.05 * z1) / sd[1];
    }
    out
}

/// Unnormalized-compatible log densities with gradients (MCMC / importance
/// sampling targets).
pub trait LogDensity {
    fn dim(&self) -> usize;
    fn log_density(&self, x: &ArrayView1<f64>) -> f64;
    fn grad(&self, x: &ArrayView1<f64>) -> Array1<f64>;
}

/// 10-d funnel: x0 ~ N(0,1), x_{1..9} ~ N(0, exp(x0)).
#[derive(Clone, Copy, Debug, Default)]
pub struct Funnel;

pub const FUNNEL_D: usize = 10;

impl LogDensity for Funnel {
    fn dim(&self) -> usize {
        FUNNEL_D
    }

    fn log_density(&self, x: &ArrayView1<f64>) -> f64 {
        assert_eq!(x.len(), FUNNEL_D);
        let x0 = x[0];
        let tail_sq: f64 = x.iter().skip(1).map(|v| v * v).sum();
        -0.5 * x0 * x0
            - 0.5 * LN_2PI
            - 0.5 * tail_sq * (-x0).exp()
            - 4.5 * (LN_2PI + x0)
    }

    fn grad(&self, x: &ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(x.len(), FUNNEL_D);
        let x0 = x[0];
        let e = (-x0).exp();
        let tail_sq: f64 = x.iter().skip(1).map(|v| v * v).sum();
        let mut g = Array1::zeros(FUNNEL_D);
        g[0] = -x0 + 0.5 * tail_sq * e - 4.5;
        for k in 1..FUNNEL_D {
            g[k] = -x[k] * e;
        }
        g
    }
}

/// Exact funnel draws (the hierarchy is directly samplable).
pub fn funnel_sample(n: usize, rng: &mut Rng) -> Batch {
    let mut out = Array2::zeros((n, FUNNEL_D));
    for i in 0..n {
        let x0: f64 = StandardNormal.sample(rng);
        out[[i, 0]] = x0;
        let s = (0.5 * x0).exp();
        for k in 1..FUNNEL_D {
            let z: f64 = StandardNormal.sample(rng);
            out[[i, k]] = s * z;
        }
    }
    out
}

/// Isotropic Gaussian N(mean, std^2 I); handy as an importance-sampling
/// proposal and as the normalized source density in partition estimates.
#[derive(Clone, Debug)]
pub struct IsoGaussian {
    pub mean: Array1<f64>,
    pub std: f64,
}

impl IsoGaussian {
    pub fn standard(d: usize) -> Self {
        IsoGaussian {
            mean: Array1::zeros(d),
            std: 1.0,
        }
    }

    pub fn sample(&self, n: usize, rng: &mut Rng) -> Batch {
        let d = self.mean.len();
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            for k in 0..d {
                let z: f64 = StandardNormal.sample(rng);
                out[[i, k]] = self.mean[k] + self.std * z;
            }
        }
        out
    }
}

impl LogDensity for IsoGaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_density(&self, x: &ArrayView1<f64>) -> f64 {
        let d = self.mean.len() as f64;
        let sq: f64 = x
            .iter()
            .zip(self.mean.iter())
            .map(|(v, m)| (v - m) * (v - m))
            .sum();
        -0.5 * sq / (self.std * self.std) - 0.5 * d * LN_2PI - d * self.std.ln()
    }

    fn grad(&self, x: &ArrayView1<f64>) -> Array1<f64> {
        let inv = 1.0 / (self.std * self.std);
        x.iter()
            .zip(self.mean.iter())
            .map(|(v, m)| -(v - m) * inv)
            .collect()
    }
}

/// Affine map fit over a point union; kept around for inverse transforms.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct Whitening {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Whitening {
    /// Population statistics (ddof = 0); zero-variance columns pass through
    /// unscaled.
    pub fn fit(points: &ArrayView2<f64>) -> Self {
        let mean = col_mean(points).to_vec();
        let std = col_std(points)
            .iter()
            .map(|&s| if s > 0.0 { s } else { 1.0 })
            .collect();
        Whitening { mean, std }
    }

    pub fn apply(&self, b: &Batch) -> Batch {
        let mut out = b.clone();
        for mut row in out.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / self.std[k];
            }
        }
        out
    }

    pub fn invert(&self, b: &Batch) -> Batch {
        let mut out = b.clone();
        for mut row in out.rows_mut() {
            for (k, v) in row.iter_mut().enumerate() {
                *v = *v * self.std[k] + self.mean[k];
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct CsvData {
    /// one batch per distinct time label, ordered by label; a single batch
    /// labeled 0 when no time column was requested
    pub groups: Vec<(f64, Batch)>,
    pub stats: Option<Whitening>,
    /// coordinate column names in file order
    pub columns: Vec<String>,
}

/// Loads a CSV point cloud (header row required). With `time_column`, rows
/// are grouped by that column's exact value; whitening statistics are fit on
/// the union of all rows and applied uniformly.
pub fn load_csv(path: &Path, time_column: Option<&str>, whiten: bool) -> Result<CsvData> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let time_idx = match time_column {
        None => None,
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::InvalidConfig(format!("no column '{name}' in CSV")))?,
        ),
    };
    let coord_idx: Vec<usize> =
        (0..headers.len()).filter(|i| Some(*i) != time_idx).collect();
    let columns: Vec<String> = coord_idx.iter().map(|&i| headers[i].to_string()).collect();
    if coord_idx.is_empty() {
        return Err(Error::InvalidConfig("CSV has no coordinate columns".into()));
    }

    let mut labels: Vec<f64> = Vec::new();
    let mut rows_by_label: Vec<Vec<f64>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let parse = |idx: usize| -> Result<f64> {
            record[idx].trim().parse::<f64>().map_err(|_| Error::Parse {
                row: r + 1,
                col: idx + 1,
                msg: format!("'{}' is not a number: '{}'", &headers[idx], &record[idx]),
            })
        };
        let label = match time_idx {
            None => 0.0,
            Some(idx) => parse(idx)?,
        };
        if label.is_nan() {
            return Err(Error::Parse {
                row: r + 1,
                col: time_idx.unwrap() + 1,
                msg: "NaN time label".into(),
            });
        }
        let slot = match labels.iter().position(|l| l.to_bits() == label.to_bits()) {
            Some(s) => s,
            None => {
                labels.push(label);
                rows_by_label.push(Vec::new());
                labels.len() - 1
            }
        };
        for &idx in &coord_idx {
            rows_by_label[slot].push(parse(idx)?);
        }
    }
    if labels.is_empty() {
        return Err(Error::Domain(format!("{}: no data rows", path.display())));
    }

    let d = coord_idx.len();
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| labels[a].partial_cmp(&labels[b]).unwrap());
    let mut groups: Vec<(f64, Batch)> = order
        .into_iter()
        .map(|s| {
            let flat = std::mem::take(&mut rows_by_label[s]);
            let n = flat.len() / d;
            (labels[s], Array2::from_shape_vec((n, d), flat).unwrap())
        })
        .collect();

    let stats = if whiten {
        let union = ndarray::concatenate(
            Axis(0),
            &groups.iter().map(|(_, b)| b.view()).collect::<Vec<_>>(),
        )
        .unwrap();
        let w = Whitening::fit(&union.view());
        for (_, b) in groups.iter_mut() {
            *b = w.apply(b);
        }
        Some(w)
    } else {
        None
    };

    Ok(CsvData {
        groups,
        stats,
        columns,
    })
}
