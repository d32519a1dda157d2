//! Vector-field regressor: a plain MLP on the concatenated input (x, t).
//!
//! f64 end to end, exact analytic backprop (no autodiff), AdamW with
//! decoupled weight decay, optional global-norm gradient clipping. The
//! checkpoint format is JSON with full-precision floats; save -> load is
//! bit-exact.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub const SELU_ALPHA: f64 = 1.6732632423543772;
pub const SELU_LAMBDA: f64 = 1.0507009873554805;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Selu,
}

pub fn selu(z: f64) -> f64 {
    if z > 0.0 {
        SELU_LAMBDA * z
    } else {
        SELU_LAMBDA * SELU_ALPHA * (z.exp() - 1.0)
    }
}

pub fn selu_prime(z: f64) -> f64 {
    if z > 0.0 {
        SELU_LAMBDA
    } else {
        SELU_LAMBDA * SELU_ALPHA * z.exp()
    }
}

/// MLP mapping (x in R^d, t) -> R^d. Hidden layers use SELU; the output
/// layer is affine.
#[derive(Clone, Debug)]
pub struct FieldModel {
    /// [d+1, hidden..., d]
    pub layer_dims: Vec<usize>,
    /// One matrix per layer, stored (in, out) so a batched forward is a GEMM.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub activation: Activation,
}

/// Parameter-shaped gradient (or moment) storage.
#[derive(Clone, Debug)]
pub struct Grads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Grads {
    pub fn zeros_like(model: &FieldModel) -> Self {
        Self {
            weights: model.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: model.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    pub fn global_norm(&self) -> f64 {
        let mut s = 0.0;
        for w in &self.weights {
            s += w.iter().map(|v| v * v).sum::<f64>();
        }
        for b in &self.biases {
            s += b.iter().map(|v| v * v).sum::<f64>();
        }
        s.sqrt()
    }

    /// Scale all gradients so the global norm is at most `max_norm`.
    /// Returns the pre-clip norm.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for w in &mut self.weights {
                w.mapv_inplace(|v| v * s);
            }
            for b in &mut self.biases {
                b.mapv_inplace(|v| v * s);
            }
        }
        norm
    }
}

impl FieldModel {
    /// Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero biases.
    pub fn init(dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("data dimension must be >= 1".into()));
        }
        if hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("hidden widths must be >= 1".into()));
        }
        let mut layer_dims = Vec::with_capacity(hidden.len() + 2);
        layer_dims.push(dim + 1);
        layer_dims.extend_from_slice(hidden);
        layer_dims.push(dim);

        let mut r = rng::derive_rng(seed, "net.init");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..layer_dims.len() - 1 {
            let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            // draw in (out, in) row-major order, the checkpoint order
            let mut w = Array2::zeros((fan_in, fan_out));
            for o in 0..fan_out {
                for i in 0..fan_in {
                    w[[i, o]] = r.gen_range(-bound..bound);
                }
            }
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_dims,
            weights,
            biases,
            activation: Activation::Selu,
        })
    }

    /// All-zero parameters (maps everything to the zero vector).
    pub fn zeros(dim: usize, hidden: &[usize]) -> Result<Self> {
        let mut m = Self::init(dim, hidden, 0)?;
        for w in &mut m.weights {
            w.fill(0.0);
        }
        Ok(m)
    }

    /// Data dimension d (input is d+1 with the time scalar appended).
    pub fn dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    fn check_input(&self, x_cols: usize) -> Result<()> {
        if x_cols != self.dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, model expects {}",
                x_cols,
                self.dim()
            )));
        }
        Ok(())
    }

    /// Forward pass on a single point.
    pub fn forward(&self, t: f64, x: &ArrayView1<f64>) -> Result<Array1<f64>> {
        let xb = x.insert_axis(Axis(0));
        let tb = Array1::from_elem(1, t);
        Ok(self.forward_batch(&tb.view(), &xb)?.row(0).to_owned())
    }

    /// Forward pass on a batch, one time value per row.
    pub fn forward_batch(
        &self,
        t: &ArrayView1<f64>,
        x: &ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        if t.len() != x.nrows() {
            return Err(Error::Shape(format!(
                "{} time values for {} rows",
                t.len(),
                x.nrows()
            )));
        }
        let mut a = concat_time(x, t);
        let last = self.n_layers() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(w);
            z += &b.view().insert_axis(Axis(0));
            if l < last {
                z.mapv_inplace(selu);
            }
            a = z;
        }
        Ok(a)
    }

    /// Mean (optionally weighted) squared-error regression loss and its exact
    /// gradient. With weights, the loss is sum_i w_i ||v_i - u_i||^2 / sum_i w_i.
    pub fn loss_and_grad(
        &self,
        t: &ArrayView1<f64>,
        x: &ArrayView2<f64>,
        target: &ArrayView2<f64>,
        row_weights: Option<&[f64]>,
    ) -> Result<(f64, Grads)> {
        self.check_input(x.ncols())?;
        let n = x.nrows();
        if n == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        if target.dim() != (n, self.dim()) || t.len() != n {
            return Err(Error::Shape("target/time shapes do not match input".into()));
        }
        let cw: Vec<f64> = match row_weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(Error::Shape("weight length != batch size".into()));
                }
                if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::DegenerateWeights(
                        "row weights must be finite and nonnegative".into(),
                    ));
                }
                let total: f64 = w.iter().sum();
                if total <= 0.0 {
                    return Err(Error::DegenerateWeights("row weights sum to zero".into()));
                }
                w.iter().map(|v| v / total).collect()
            }
        };

        // forward, keeping pre-activations
        let last = self.n_layers() - 1;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.n_layers() + 1);
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(self.n_layers());
        acts.push(concat_time(x, t));
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w);
            z += &b.view().insert_axis(Axis(0));
            pre.push(z.clone());
            if l < last {
                z.mapv_inplace(selu);
            }
            acts.push(z);
        }
        let out = &acts[self.n_layers()];

        let mut loss = 0.0;
        let mut delta = out - target; // (n, d)
        for (i, mut row) in delta.rows_mut().into_iter().enumerate() {
            let sq: f64 = row.iter().map(|v| v * v).sum();
            loss += cw[i] * sq;
            let s = 2.0 * cw[i];
            row.mapv_inplace(|v| v * s);
        }

        // backprop
        let mut g = Grads::zeros_like(self);
        let mut dz = delta; // output layer is affine: dZ_last = dOut
        for l in (0..self.n_layers()).rev() {
            g.weights[l] = acts[l].t().dot(&dz);
            g.biases[l] = dz.sum_axis(Axis(0));
            if l > 0 {
                let mut da = dz.dot(&self.weights[l].t());
                da.zip_mut_with(&pre[l - 1], |d, &z| *d *= selu_prime(z));
                dz = da;
            }
        }
        Ok((loss, g))
    }
}

/// Build the network input by appending t as the last column.
fn concat_time(x: &ArrayView2<f64>, t: &ArrayView1<f64>) -> Array2<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    let mut a = Array2::zeros((n, d + 1));
    a.slice_mut(ndarray::s![.., ..d]).assign(x);
    a.column_mut(d).assign(t);
    a
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// AdamW: decoupled weight decay, bias-corrected moments.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub cfg: AdamConfig,
    step: u64,
    m: Grads,
    v: Grads,
}

impl AdamW {
    pub fn new(model: &FieldModel, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: Grads::zeros_like(model),
            v: Grads::zeros_like(model),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, model: &mut FieldModel, grads: &Grads) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for l in 0..model.weights.len() {
            adamw_update(
                &mut model.weights[l],
                &grads.weights[l],
                &mut self.m.weights[l],
                &mut self.v.weights[l],
                c,
                bc1,
                bc2,
            );
            adamw_update(
                &mut model.biases[l],
                &grads.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
                c,
                bc1,
                bc2,
            );
        }
    }
}

fn adamw_update<D: ndarray::Dimension>(
    p: &mut ndarray::Array<f64, D>,
    g: &ndarray::Array<f64, D>,
    m: &mut ndarray::Array<f64, D>,
    v: &mut ndarray::Array<f64, D>,
    c: AdamConfig,
    bc1: f64,
    bc2: f64,
) {
    ndarray::Zip::from(p)
        .and(g)
        .and(m)
        .and(v)
        .for_each(|p, g, m, v| {
            *p -= c.lr * c.weight_decay * *p;
            *m = c.beta1 * *m + (1.0 - c.beta1) * g;
            *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= c.lr * mh / (vh.sqrt() + c.eps);
        });
}

// ---- checkpoint io ----

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    layer_dims: Vec<usize>,
    activation: Activation,
    /// per layer, row-major (out, in)
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl FieldModel {
    pub fn to_json(&self) -> Result<String> {
        let weights = self
            .weights
            .iter()
            .map(|w| {
                // stored (in, out); file is row-major (out, in)
                let (fan_in, fan_out) = w.dim();
                let mut flat = Vec::with_capacity(fan_in * fan_out);
                for o in 0..fan_out {
                    for i in 0..fan_in {
                        flat.push(w[[i, o]]);
                    }
                }
                flat
            })
            .collect();
        let file = CheckpointFile {
            layer_dims: self.layer_dims.clone(),
            activation: self.activation,
            weights,
            biases: self.biases.iter().map(|b| b.to_vec()).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: CheckpointFile = serde_json::from_str(s)?;
        if file.layer_dims.len() < 2 {
            return Err(Error::InvalidConfig("need at least one layer".into()));
        }
        let n_layers = file.layer_dims.len() - 1;
        if file.weights.len() != n_layers || file.biases.len() != n_layers {
            return Err(Error::Shape(format!(
                "{} layer dims but {} weight / {} bias blocks",
                file.layer_dims.len(),
                file.weights.len(),
                file.biases.len()
            )));
        }
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (file.layer_dims[l], file.layer_dims[l + 1]);
            if file.weights[l].len() != fan_in * fan_out {
                return Err(Error::Shape(format!(
                    "layer {l}: expected {} weights, found {}",
                    fan_in * fan_out,
                    file.weights[l].len()
                )));
            }
            if file.biases[l].len() != fan_out {
                return Err(Error::Shape(format!(
                    "layer {l}: expected {} biases, found {}",
                    fan_out,
                    file.biases[l].len()
                )));
            }
            let mut w = Array2::zeros((fan_in, fan_out));
            for o in 0..fan_out {
                for i in 0..fan_in {
                    w[[i, o]] = file.weights[l][o * fan_in + i];
                }
            }
            weights.push(w);
            biases.push(Array1::from_vec(file.biases[l].clone()));
        }
        Ok(Self {
            layer_dims: file.layer_dims,
            weights,
            biases,
            activation: file.activation,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn init_shapes_and_bounds() {
        let m = FieldModel::init(2, &[64, 64, 64], 1).unwrap();
        assert_eq!(m.layer_dims, vec![3, 64, 64, 64, 2]);
        for (l, w) in m.weights.iter().enumerate() {
            let bound = (6.0 / m.layer_dims[l] as f64).sqrt();
            assert!(w.iter().all(|v| v.abs() <= bound));
        }
        assert!(m.biases.iter().all(|b| b.iter().all(|v| *v == 0.0)));
        // same seed, same params; different seed differs
        let m2 = FieldModel::init(2, &[64, 64, 64], 1).unwrap();
        assert_eq!(m.weights[0], m2.weights[0]);
        let m3 = FieldModel::init(2, &[64, 64, 64], 2).unwrap();
        assert_ne!(m.weights[0], m3.weights[0]);
    }

    #[test]
    fn zero_model_maps_to_zero() {
        let m = FieldModel::zeros(3, &[8, 8]).unwrap();
        let out = m.forward(0.7, &array![1.0, -2.0, 0.5].view()).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn selu_fixed_point_at_zero() {
        assert_eq!(selu(0.0), 0.0);
        assert!((selu(1.0) - SELU_LAMBDA).abs() < 1e-15);
        assert!((selu(-1e9) + SELU_LAMBDA * SELU_ALPHA).abs() < 1e-9);
    }

    #[test]
    fn loss_examples() {
        let m = FieldModel::zeros(2, &[4]).unwrap();
        let t = array![0.3];
        let x = array![[0.5, -0.5]];
        // model output == target -> zero loss, zero grads
        let target = array![[0.0, 0.0]];
        let (loss, g) = m
            .loss_and_grad(&t.view(), &x.view(), &target.view(), None)
            .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.global_norm(), 0.0);
        // target offset by 1 in one coordinate -> loss 1
        let target = array![[1.0, 0.0]];
        let (loss, _) = m
            .loss_and_grad(&t.view(), &x.view(), &target.view(), None)
            .unwrap();
        assert!((loss - 1.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_loss_normalizes() {
        let m = FieldModel::zeros(1, &[3]).unwrap();
        let t = array![0.0, 0.0];
        let x = array![[0.0], [0.0]];
        let target = array![[1.0], [3.0]];
        let (loss, _) = m
            .loss_and_grad(&t.view(), &x.view(), &target.view(), Some(&[3.0, 1.0]))
            .unwrap();
        // (3*1 + 1*9)/4 = 3
        assert!((loss - 3.0).abs() < 1e-12);
        assert!(m
            .loss_and_grad(&t.view(), &x.view(), &target.view(), Some(&[0.0, 0.0]))
            .is_err());
    }

    #[test]
    fn adamw_zero_grads_is_pure_decay() {
        let mut m = FieldModel::init(2, &[4], 3).unwrap();
        let before = m.weights[0].clone();
        let g = Grads::zeros_like(&m);
        let mut opt = AdamW::new(
            &m,
            AdamConfig {
                lr: 0.01,
                weight_decay: 0.1,
                ..Default::default()
            },
        );
        opt.step(&mut m, &g);
        let expect = &before * (1.0 - 0.001);
        let diff = (&m.weights[0] - &expect)
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-15);
    }

    #[test]
    fn adamw_quadratic_first_step() {
        // f(w) = w^2, w0 = 1: g = 2, m_hat = 2, v_hat = 4 -> step ~= lr
        let mut p = Array1::from_vec(vec![1.0]);
        let g = Array1::from_vec(vec![2.0]);
        let mut m = Array1::from_vec(vec![0.0]);
        let mut v = Array1::from_vec(vec![0.0]);
        let c = AdamConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        adamw_update(&mut p, &g, &mut m, &mut v, c, 1.0 - 0.9, 1.0 - 0.999);
        assert!((p[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn clip_scales_to_max_norm() {
        let m = FieldModel::zeros(1, &[2]).unwrap();
        let mut g = Grads::zeros_like(&m);
        g.weights[0][[0, 0]] = 3.0;
        g.weights[0][[0, 1]] = 4.0;
        let pre = g.clip_global_norm(1.0);
        assert!((pre - 5.0).abs() < 1e-12);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
        // under the threshold: untouched
        let pre2 = g.clip_global_norm(10.0);
        assert!((pre2 - 1.0).abs() < 1e-12);
        assert!((g.global_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let m = FieldModel::init(2, &[5, 4], 9).unwrap();
        let json = m.to_json().unwrap();
        let m2 = FieldModel::from_json(&json).unwrap();
        assert_eq!(m.layer_dims, m2.layer_dims);
        for l in 0..m.n_layers() {
            assert_eq!(m.weights[l], m2.weights[l]);
            assert_eq!(m.biases[l], m2.biases[l]);
        }
        assert_eq!(json, m2.to_json().unwrap());
        assert!(json.contains("\"activation\":\"selu\""));
    }

    #[test]
    fn checkpoint_rejects_inconsistent_shapes() {
        let m = FieldModel::init(2, &[4], 0).unwrap();
        let json = m.to_json().unwrap();
        let broken = json.replace("\"layer_dims\":[3,4,2]", "\"layer_dims\":[3,5,2]");
        assert_ne!(json, broken);
        assert!(FieldModel::from_json(&broken).is_err());
    }

    #[test]
    fn forward_rejects_wrong_dim() {
        let m = FieldModel::init(2, &[4], 0).unwrap();
        assert!(m.forward(0.0, &array![1.0].view()).is_err());
    }
}
