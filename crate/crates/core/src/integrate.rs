//! ODE integration of vector fields: fixed-step Euler/RK4 and adaptive
//! Dormand-Prince 5(4) with FSAL and PI step control. Integrators track the
//! number of field evaluations, optionally accumulate path energy
//! (per-sample ∫‖v‖² dt with the same quadrature weights as the state), and
//! can augment the state with the divergence integral for log-determinants.
//!
//! Reverse-time integration (t_end < t_start) is supported everywhere; path
//! energy always accumulates positively.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::net::FieldModel;

pub trait VectorField {
    /// Field values v(t, x) for a batch of states, rows aligned with `x`.
    fn eval(&self, t: f64, x: &ArrayView2<f64>) -> Batch;
}

impl VectorField for FieldModel {
    fn eval(&self, t: f64, x: &ArrayView2<f64>) -> Batch {
        let tv = Array1::from_elem(x.nrows(), t);
        self.forward_batch(&tv.view(), x).expect("field/batch dims")
    }
}

impl<T: VectorField + ?Sized> VectorField for &T {
    fn eval(&self, t: f64, x: &ArrayView2<f64>) -> Batch {
        (**self).eval(t, x)
    }
}

/// Adapter for closures.
pub struct FnField<F>(pub F);

impl<F: Fn(f64, &ArrayView2<f64>) -> Batch> VectorField for FnField<F> {
    fn eval(&self, t: f64, x: &ArrayView2<f64>) -> Batch {
        (self.0)(t, x)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Euler,
    Rk4,
}

#[derive(Clone, Copy, Debug)]
pub enum OdeSettings {
    Fixed { method: Method, n_steps: usize },
    Dopri5 { atol: f64, rtol: f64 },
}

impl OdeSettings {
    pub fn fixed(method: Method, n_steps: usize) -> Self {
        OdeSettings::Fixed { method, n_steps }
    }

    pub fn dopri5(atol: f64, rtol: f64) -> Self {
        OdeSettings::Dopri5 { atol, rtol }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RecordSpec {
    /// record states on a uniform grid of this many points (endpoints
    /// included); None records endpoints only
    pub uniform_points: Option<usize>,
    pub path_energy: bool,
}

impl RecordSpec {
    pub fn none() -> Self {
        RecordSpec::default()
    }

    pub fn energy() -> Self {
        RecordSpec {
            uniform_points: None,
            path_energy: true,
        }
    }

    pub fn grid(points: usize) -> Self {
        RecordSpec {
            uniform_points: Some(points),
            path_energy: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Batch>,
    /// number of vector-field evaluations, rejected steps included
    pub nfe: usize,
    /// per-sample ∫‖v‖² dt when requested
    pub path_energy: Option<Array1<f64>>,
    /// per-sample ∫ div v dt when the state was augmented
    pub log_det: Option<Array1<f64>>,
}

impl Trajectory {
    pub fn final_state(&self) -> &Batch {
        self.states.last().unwrap()
    }
}

/// States recorded on the requested grid, linearly interpolated between
/// integration points.
struct Recorder {
    times: Vec<f64>,
    states: Vec<Batch>,
    next: usize,
    dir: f64,
}

impl Recorder {
    fn new(spec: &RecordSpec, t0: f64, t1: f64, x0: &Batch) -> Result<Self> {
        let times: Vec<f64> = match spec.uniform_points {
            None => vec![t0, t1],
            Some(k) => {
                if k < 2 {
                    return Err(Error::InvalidConfig(format!(
                        "recording grid needs at least 2 points, got {k}"
                    )));
                }
                (0..k)
                    .map(|i| t0 + (t1 - t0) * i as f64 / (k - 1) as f64)
                    .collect()
            }
        };
        let mut states = Vec::with_capacity(times.len());
        states.push(x0.clone());
        Ok(Recorder {
            times,
            states,
            next: 1,
            dir: (t1 - t0).signum(),
        })
    }

    /// Fill grid times that the step (t_prev, x_prev] -> (t_new, x_new]
    /// stepped over.
    fn advance(&mut self, t_prev: f64, x_prev: &Batch, t_new: f64, x_new: &Batch) {
        while self.next < self.times.len() {
            let tau = self.times[self.next];
            if (tau - t_new) * self.dir > 1e-12 * (t_new - t_prev).abs().max(1.0) {
                break;
            }
            let span = t_new - t_prev;
            let w = if span == 0.0 { 1.0 } else { (tau - t_prev) / span };
            let interp = x_prev * (1.0 - w) + x_new * w;
            self.states.push(interp);
            self.next += 1;
        }
    }

    fn finish(mut self, x_final: &Batch) -> (Vec<f64>, Vec<Batch>) {
        while self.next < self.times.len() {
            self.states.push(x_final.clone());
            self.next += 1;
        }
        (self.times, self.states)
    }
}

fn rownorms_sq(x: &Batch) -> Array1<f64> {
    x.map_axis(Axis(1), |row| row.iter().map(|v| v * v).sum())
}

fn check_finite(x: &Batch, t: f64) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { t });
    }
    Ok(())
}

/// Dispatch on settings.
pub fn integrate<F: VectorField>(
    field: &F,
    x0: &Batch,
    t_start: f64,
    t_end: f64,
    settings: &OdeSettings,
    record: &RecordSpec,
) -> Result<Trajectory> {
    match *settings {
        OdeSettings::Fixed { method, n_steps } => {
            integrate_fixed(field, x0, t_start, t_end, n_steps, method, record)
        }
        OdeSettings::Dopri5 { atol, rtol } => {
            dopri5_core(field, x0, t_start, t_end, atol, rtol, x0.ncols(), record)
        }
    }
}

pub fn integrate_fixed<F: VectorField>(
    field: &F,
    x0: &Batch,
    t_start: f64,
    t_end: f64,
    n_steps: usize,
    method: Method,
    record: &RecordSpec,
) -> Result<Trajectory> {
    if n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be >= 1".into()));
    }
    if t_start == t_end {
        return Err(Error::InvalidConfig("empty integration interval".into()));
    }
    let h = (t_end - t_start) / n_steps as f64;
    let mut recorder = Recorder::new(record, t_start, t_end, x0)?;
    let mut x = x0.clone();
    let mut pe = record.path_energy.then(|| Array1::zeros(x0.nrows()));
    let mut nfe = 0usize;
    let mut t = t_start;
    for step in 0..n_steps {
        let t_new = if step + 1 == n_steps {
            t_end
        } else {
            t_start + h * (step + 1) as f64
        };
        let x_prev = x.clone();
        match method {
            Method::Euler => {
                let v = field.eval(t, &x.view());
                nfe += 1;
                if let Some(pe) = pe.as_mut() {
                    *pe += &(rownorms_sq(&v) * h.abs());
                }
                x += &(&v * h);
            }
            Method::Rk4 => {
                let k1 = field.eval(t, &x.view());
                let k2 = field.eval(t + 0.5 * h, &(&x + &(&k1 * (0.5 * h))).view());
                let k3 = field.eval(t + 0.5 * h, &(&x + &(&k2 * (0.5 * h))).view());
                let k4 = field.eval(t + h, &(&x + &(&k3 * h)).view());
                nfe += 4;
                if let Some(pe) = pe.as_mut() {
                    let e = rownorms_sq(&k1)
                        + rownorms_sq(&k2) * 2.0
                        + rownorms_sq(&k3) * 2.0
                        + rownorms_sq(&k4);
                    *pe += &(e * (h.abs() / 6.0));
                }
                x += &((k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0));
            }
        }
        check_finite(&x, t_new)?;
        recorder.advance(t, &x_prev, t_new, &x);
        t = t_new;
    }
    let (times, states) = recorder.finish(&x);
    Ok(Trajectory {
        times,
        states,
        nfe,
        path_energy: pe,
        log_det: None,
    })
}

// Dormand-Prince 5(4) tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

pub fn integrate_dopri5<F: VectorField>(
    field: &F,
    x0: &Batch,
    t_start: f64,
    t_end: f64,
    atol: f64,
    rtol: f64,
    record: &RecordSpec,
) -> Result<Trajectory> {
    dopri5_core(field, x0, t_start, t_end, atol, rtol, x0.ncols(), record)
}

/// `err_cols`: leading state columns included in the error norm (augmented
/// columns such as the log-det ride along without steering the step size).
fn dopri5_core<F: VectorField>(
    field: &F,
    x0: &Batch,
    t_start: f64,
    t_end: f64,
    atol: f64,
    rtol: f64,
    err_cols: usize,
    record: &RecordSpec,
) -> Result<Trajectory> {
    if atol <= 0.0 || rtol <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "tolerances must be positive, got atol={atol} rtol={rtol}"
        )));
    }
    if t_start == t_end {
        return Err(Error::InvalidConfig("empty integration interval".into()));
    }
    let span = t_end - t_start;
    let dir = span.signum();
    let mut recorder = Recorder::new(record, t_start, t_end, x0)?;
    let mut x = x0.clone();
    let mut pe = record.path_energy.then(|| Array1::zeros(x0.nrows()));
    let mut t = t_start;
    let mut h = 1e-3 * span;
    let mut k1 = field.eval(t, &x.view());
    let mut nfe = 1usize;
    let mut err_prev = 1e-4f64;

    loop {
        if h.abs() < 1e-12 {
            return Err(Error::StepUnderflow { t, h });
        }
        let mut clipped = false;
        if (t + h - t_end) * dir > 0.0 {
            h = t_end - t;
            clipped = true;
        }

        let stage = |ks: &[&Batch], row: &[f64]| -> Batch {
            let mut s = x.clone();
            for (k, &a) in ks.iter().zip(row) {
                if a != 0.0 {
                    s.scaled_add(h * a, *k);
                }
            }
            s
        };
        let k2 = field.eval(t + C[1] * h, &stage(&[&k1], &A[0][..1]).view());
        let k3 = field.eval(t + C[2] * h, &stage(&[&k1, &k2], &A[1][..2]).view());
        let k4 = field.eval(t + C[3] * h, &stage(&[&k1, &k2, &k3], &A[2][..3]).view());
        let k5 = field.eval(
            t + C[4] * h,
            &stage(&[&k1, &k2, &k3, &k4], &A[3][..4]).view(),
        );
        let k6 = field.eval(
            t + C[5] * h,
            &stage(&[&k1, &k2, &k3, &k4, &k5], &A[4][..5]).view(),
        );
        let mut x5 = x.clone();
        for (k, &b) in [&k1, &k2, &k3, &k4, &k5, &k6].iter().zip(&A[5]) {
            if b != 0.0 {
                x5.scaled_add(h * b, *k);
            }
        }
        let k7 = field.eval(t + h, &x5.view());
        nfe += 6;

        // embedded error over the steering columns, sup-norm
        let mut err = 0.0f64;
        let ks = [&k1, &k2, &k3, &k4, &k5, &k6, &k7];
        for i in 0..x.nrows() {
            for j in 0..err_cols {
                let mut e = 0.0;
                for (k, (b5, b4)) in ks.iter().zip(B5.iter().zip(&B4)) {
                    e += (b5 - b4) * k[[i, j]];
                }
                e *= h;
                let sc = atol + rtol * x[[i, j]].abs().max(x5[[i, j]].abs());
                let r = (e / sc).abs();
                if !r.is_finite() {
                    err = f64::INFINITY;
                    break;
                }
                err = err.max(r);
            }
            if err.is_infinite() {
                break;
            }
        }
        if x5.iter().take(1).any(|v| !v.is_finite()) || !x5.iter().all(|v| v.is_finite()) {
            err = f64::INFINITY;
        }

        if err <= 1.0 {
            let t_new = if clipped { t_end } else { t + h };
            if let Some(pe) = pe.as_mut() {
                for (k, &b) in ks.iter().zip(&B5) {
                    if b != 0.0 {
                        *pe += &(rownorms_sq(k) * (b * h.abs()));
                    }
                }
            }
            recorder.advance(t, &x, t_new, &x5);
            x = x5;
            k1 = k7;
            t = t_new;
            if (t_end - t) * dir <= 1e-14 * span.abs() {
                break;
            }
            let fac = if err == 0.0 {
                10.0
            } else {
                (0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0)).clamp(0.2, 10.0)
            };
            err_prev = err.max(1e-4);
            h *= fac;
        } else {
            let fac = if err.is_finite() {
                (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
            } else {
                0.2
            };
            h *= fac;
        }
    }
    let (times, states) = recorder.finish(&x);
    Ok(Trajectory {
        times,
        states,
        nfe,
        path_energy: pe,
        log_det: None,
    })
}

/// Divergence of the field at a single point by central differences;
/// costs 2d field evaluations (done as one batched call).
pub fn divergence<F: VectorField>(field: &F, t: f64, x: &ArrayView1<f64>, h: f64) -> f64 {
    let d = x.len();
    let mut probes = Array2::zeros((2 * d, d));
    for k in 0..d {
        probes.row_mut(2 * k).assign(x);
        probes[[2 * k, k]] += h;
        probes.row_mut(2 * k + 1).assign(x);
        probes[[2 * k + 1, k]] -= h;
    }
    let out = field.eval(t, &probes.view());
    (0..d)
        .map(|k| (out[[2 * k, k]] - out[[2 * k + 1, k]]) / (2.0 * h))
        .sum()
}

/// Field on the (d+1)-column augmented state [x | log_det'], where the last
/// column integrates div v along the trajectory.
struct Augmented<'a, F> {
    inner: &'a F,
    d: usize,
    h: f64,
}

impl<F: VectorField> VectorField for Augmented<'_, F> {
    fn eval(&self, t: f64, aug: &ArrayView2<f64>) -> Batch {
        let n = aug.nrows();
        let d = self.d;
        let x = aug.slice(s![.., ..d]);
        let v = self.inner.eval(t, &x);
        let mut probes = Array2::zeros((2 * d * n, d));
        for i in 0..n {
            for k in 0..d {
                let r = 2 * (i * d + k);
                probes.row_mut(r).assign(&x.row(i));
                probes[[r, k]] += self.h;
                probes.row_mut(r + 1).assign(&x.row(i));
                probes[[r + 1, k]] -= self.h;
            }
        }
        let out = self.inner.eval(t, &probes.view());
        let mut res = Array2::zeros((n, d + 1));
        res.slice_mut(s![.., ..d]).assign(&v);
        for i in 0..n {
            let mut div = 0.0;
            for k in 0..d {
                let r = 2 * (i * d + k);
                div += (out[[r, k]] - out[[r + 1, k]]) / (2.0 * self.h);
            }
            res[[i, d]] = div;
        }
        res
    }
}

/// Integrate the flow together with its volume change. Returns the final
/// states, per-sample log|det ∂x_end/∂x_0|, and the total underlying field
/// evaluations ((1 + 2d) per augmented call: one for the field, 2d for the
/// divergence probes).
pub fn integrate_with_logdet<F: VectorField>(
    field: &F,
    x0: &Batch,
    t_start: f64,
    t_end: f64,
    settings: &OdeSettings,
    h_div: f64,
) -> Result<(Batch, Array1<f64>, usize)> {
    if h_div <= 0.0 {
        return Err(Error::InvalidConfig("divergence step must be positive".into()));
    }
    let (n, d) = x0.dim();
    let aug_field = Augmented {
        inner: field,
        d,
        h: h_div,
    };
    let mut aug0 = Array2::zeros((n, d + 1));
    aug0.slice_mut(s![.., ..d]).assign(x0);
    let record = RecordSpec::none();
    let traj = match *settings {
        OdeSettings::Fixed { method, n_steps } => {
            integrate_fixed(&aug_field, &aug0, t_start, t_end, n_steps, method, &record)?
        }
        OdeSettings::Dopri5 { atol, rtol } => {
            // error control on the state columns only
            dopri5_core(&aug_field, &aug0, t_start, t_end, atol, rtol, d, &record)?
        }
    };
    let last = traj.final_state();
    let x_end = last.slice(s![.., ..d]).to_owned();
    let log_det = last.column(d).to_owned();
    Ok((x_end, log_det, traj.nfe * (1 + 2 * d)))
}
