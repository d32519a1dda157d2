//! Point-cloud containers and small shared numeric helpers.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// A set of n points in R^d, one row per point.
pub type Batch = Array2<f64>;

/// Points with normalized importance weights (weights sum to 1).
#[derive(Clone, Debug)]
pub struct WeightedBatch {
    pub points: Batch,
    pub weights: Vec<f64>,
}

impl WeightedBatch {
    pub fn new(points: Batch, weights: Vec<f64>) -> Result<Self> {
        if points.nrows() != weights.len() {
            return Err(Error::Shape(format!(
                "{} points vs {} weights",
                points.nrows(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::DegenerateWeights(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::DegenerateWeights("weights sum to zero".into()));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(Self { points, weights })
    }

    pub fn uniform(points: Batch) -> Self {
        let n = points.nrows();
        Self {
            points,
            weights: vec![1.0 / n as f64; n],
        }
    }
}

/// Squared Euclidean distance between two rows.
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Dense pairwise squared-distance matrix (n x m).
pub fn pairwise_sq_dists(x0: &ArrayView2<f64>, x1: &ArrayView2<f64>) -> Array2<f64> {
    let (n, m) = (x0.nrows(), x1.nrows());
    let mut c = Array2::zeros((n, m));
    for i in 0..n {
        let xi = x0.row(i);
        let xi = xi.as_slice().unwrap();
        for j in 0..m {
            let xj = x1.row(j);
            c[[i, j]] = sq_dist(xi, xj.as_slice().unwrap());
        }
    }
    c
}

/// Per-column mean of a batch.
pub fn col_mean(x: &ArrayView2<f64>) -> Array1<f64> {
    x.mean_axis(ndarray::Axis(0)).unwrap()
}

/// Per-column standard deviation (population, ddof = 0).
pub fn col_std(x: &ArrayView2<f64>) -> Array1<f64> {
    let mean = col_mean(x);
    let n = x.nrows() as f64;
    let mut var = Array1::<f64>::zeros(x.ncols());
    for row in x.rows() {
        for (k, v) in row.iter().enumerate() {
            let d = v - mean[k];
            var[k] += d * d;
        }
    }
    var.mapv_inplace(|v| (v / n).sqrt());
    var
}

/// Draw `count` indices from a normalized categorical with inverse-CDF +
/// binary search. Deterministic given the generator.
pub fn sample_categorical(
    probs: &[f64],
    count: usize,
    rng: &mut crate::rng::Rng,
) -> Vec<usize> {
    use rand::Rng as _;
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    (0..count)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * total;
            match cdf.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
                Ok(i) => (i + 1).min(probs.len() - 1),
                Err(i) => i.min(probs.len() - 1),
            }
        })
        .collect()
}
