//! Experiment drivers: each subcommand is a plain function over an
//! `ExperimentConfig` so tests (and the acceptance suite) can call them
//! without shelling out.

use std::path::{Path, PathBuf};
use std::time::Instant;

use flowmatch::data::{Dataset, Funnel, LogDensity, FUNNEL_D};
use flowmatch::eval::{generate_samples, sb_error_curve, w2_squared};
use flowmatch::integrate::{Method, OdeSettings, RecordSpec};
use flowmatch::net::FieldModel;
use flowmatch::rng::derive_rng;
use flowmatch::trainer::{mala_sample, rwis_batch, train, HistoryRow, Leg, Sampler};
use flowmatch::{eval, Error, Result};
use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{parse_integrator, Algorithm, ExperimentConfig};
use crate::report::{write_report, ReportRow};
use crate::svg::{line_plot_svg, scene_svg, Scene};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const META_FILE: &str = "meta.json";
pub const REPORT_FILE: &str = "report.csv";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const TRAJECTORIES_FILE: &str = "trajectories.json";
pub const SB_CURVE_FILE: &str = "sb_curve.csv";
pub const EBM_FILE: &str = "ebm.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const CELLS_FILE: &str = "cells.csv";
pub const PLOT_FILE: &str = "plot.svg";

/// timepoints / trajectory count for the SB marginal curve
const SB_TIMEPOINTS: usize = 20;
const SB_SAMPLES: usize = 1000;
/// scatter / trajectory subset sizes for trajectories.json
const PLOT_SCATTER: usize = 256;
const PLOT_TRAJS: usize = 64;

pub fn resolve_out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.run_id))
}

pub struct TrainedRun {
    pub model: FieldModel,
    pub history: Vec<HistoryRow>,
    pub out_dir: PathBuf,
    pub wall_clock_s: f64,
}

#[derive(Serialize)]
struct HistoryOut {
    epoch: usize,
    train_loss: f64,
    val_loss: f64,
}

/// checkpoint.json + history.csv + meta.json. The first two are byte-stable
/// functions of (config, seed); meta.json carries wall-clock and is not.
fn write_train_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    model: &FieldModel,
    history: &[HistoryRow],
    wall_clock_s: f64,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let checkpoint = model.to_json()?;
    std::fs::write(dir.join(CHECKPOINT_FILE), &checkpoint)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    for row in history {
        w.serialize(HistoryOut {
            epoch: row.epoch,
            train_loss: row.train_loss,
            val_loss: row.val_loss,
        })?;
    }
    let history_bytes = w
        .into_inner()
        .map_err(|e| Error::Numeric(format!("csv flush: {e}")))?;
    std::fs::write(dir.join(HISTORY_FILE), &history_bytes)?;

    let mut hasher = Sha256::new();
    hasher.update(checkpoint.as_bytes());
    hasher.update(&history_bytes);
    let mut echo = cfg.clone();
    echo.train.seed = Some(cfg.seed());
    let meta = serde_json::json!({
        "run_id": cfg.run_id,
        "algorithm": cfg.algorithm.name(),
        "seed": cfg.seed(),
        "content_hash": format!("sha256:{:x}", hasher.finalize()),
        "wall_clock_s": wall_clock_s,
        "config": echo,
    });
    std::fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainedRun> {
    let start = Instant::now();
    cfg.validate()?;
    let (src, tgt) = cfg.resolved_endpoints()?;
    let tc = cfg.train_config()?;
    let mut vrng = derive_rng(tc.seed, "cli.valset");
    let vs = src.sample(cfg.train.n_val, &mut vrng);
    let vt = tgt.sample(cfg.train.n_val, &mut vrng);
    let mut legs = vec![Leg::whole(
        Sampler::Dataset(src),
        Sampler::Dataset(tgt),
        vs,
        vt,
    )];
    let (model, history) = train(&tc, &mut legs)?;
    let wall_clock_s = start.elapsed().as_secs_f64();
    let out_dir = resolve_out_dir(cfg);
    write_train_artifacts(&out_dir, cfg, &model, &history, wall_clock_s)?;
    Ok(TrainedRun { model, history, out_dir, wall_clock_s })
}

fn subsample(batch: &Array2<f64>, n: usize) -> Vec<[f64; 2]> {
    batch
        .outer_iter()
        .take(n)
        .map(|r| [r[0], r[1]])
        .collect()
}

/// Small 2D scene for plotting: scatter subsets plus a handful of
/// trajectories on a coarse time grid.
fn trajectory_scene(
    model: &FieldModel,
    source: &Array2<f64>,
    target: &Array2<f64>,
) -> Result<Scene> {
    let n = source.nrows().min(PLOT_TRAJS);
    let x0 = source.slice(ndarray::s![..n, ..]).to_owned();
    let traj = flowmatch::integrate::integrate(
        model,
        &x0,
        0.0,
        1.0,
        &OdeSettings::fixed(Method::Rk4, 64),
        &RecordSpec::grid(9),
    )?;
    let trajectories = (0..n)
        .map(|i| traj.states.iter().map(|s| [s[[i, 0]], s[[i, 1]]]).collect())
        .collect();
    Ok(Scene {
        source: subsample(source, PLOT_SCATTER),
        target: subsample(target, PLOT_SCATTER),
        trajectories,
    })
}

/// Report rows for one checkpoint. With an `nfe_grid` the row set is the
/// grid itself: one Euler row per step count plus a single adaptive row
/// (the configured integrator list is ignored in grid mode).
pub fn cmd_eval(checkpoint: &Path, cfg: &ExperimentConfig) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let model = FieldModel::from_json(&std::fs::read_to_string(checkpoint)?)?;
    let (src, tgt) = cfg.resolved_endpoints()?;
    let d = src.dim();
    if model.layer_dims[0] != d + 1 {
        return Err(Error::Shape(format!(
            "checkpoint expects input dim {}, datasets have dim {d}",
            model.layer_dims[0] - 1
        )));
    }
    let seed = cfg.seed();
    let mut rng = derive_rng(seed, "cli.eval");
    let src_batch = src.sample(cfg.eval.n_eval, &mut rng);
    let tgt_batch = tgt.sample(cfg.eval.n_eval, &mut rng);
    let w2_ref = w2_squared(&src_batch, &tgt_batch)?;

    let plans: Vec<(String, OdeSettings, Option<usize>)> = match &cfg.eval.nfe_grid {
        Some(grid) => {
            let mut v: Vec<_> = grid
                .iter()
                .map(|&n| ("euler".to_string(), OdeSettings::fixed(Method::Euler, n), Some(n)))
                .collect();
            v.push(("dopri5".to_string(), OdeSettings::dopri5(1e-5, 1e-5), None));
            v
        }
        None => cfg
            .eval
            .integrators
            .iter()
            .map(|s| parse_integrator(s))
            .collect::<Result<Vec<_>>>()?,
    };

    let mut rows = Vec::with_capacity(plans.len());
    for (name, settings, n_steps) in &plans {
        let (gen, pe, nfe) = generate_samples(&model, &src_batch, settings)?;
        let w2_sq = w2_squared(&gen, &tgt_batch)?;
        rows.push(ReportRow {
            run_id: cfg.run_id.clone(),
            algorithm: cfg.algorithm.name().to_string(),
            dataset: cfg.target.label(),
            sigma: cfg.train.sigma,
            seed,
            w2_sq,
            pe,
            npe: (pe - w2_ref).abs() / w2_ref,
            nfe_mean: nfe as f64,
            integrator: name.clone(),
            n_steps: *n_steps,
        });
    }

    let out_dir = resolve_out_dir(cfg);
    std::fs::create_dir_all(&out_dir)?;
    write_report(&out_dir.join(REPORT_FILE), &rows)?;
    std::fs::write(out_dir.join(REPORT_JSON_FILE), serde_json::to_string_pretty(&rows)?)?;
    if d == 2 {
        let scene = trajectory_scene(&model, &src_batch, &tgt_batch)?;
        std::fs::write(out_dir.join(TRAJECTORIES_FILE), serde_json::to_string(&scene)?)?;
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: f64,
    pub seed: u64,
    pub status: String,
    pub npe: Option<f64>,
    pub w2_sq: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub n_ok: usize,
    pub npe_mean: Option<f64>,
    pub npe_std: Option<f64>,
    pub w2_mean: Option<f64>,
    pub w2_std: Option<f64>,
}

fn apply_sweep_param(cfg: &mut ExperimentConfig, param: &str, value: f64) {
    match param {
        "sigma" => cfg.train.sigma = value,
        // the coupling minibatch is what the study varies; the SGD batch stays put
        "batch_size" => cfg.train.ot_batch_size = Some(value as usize),
        "aggregation_m" => cfg.train.aggregation_m = value as usize,
        other => unreachable!("validated sweep param {other}"),
    }
}

fn run_sweep_cell(base: &ExperimentConfig, param: &str, value: f64, seed: u64) -> SweepCell {
    let mut cfg = base.clone();
    cfg.sweep = None;
    apply_sweep_param(&mut cfg, param, value);
    cfg.train.seed = Some(seed);
    cfg.run_id = format!("{}-{param}{value}-s{seed}", base.run_id);
    cfg.output_dir = Some(resolve_out_dir(base).join(format!("{param}={value}")).join(format!("seed={seed}")));
    let outcome = cmd_train(&cfg)
        .and_then(|run| cmd_eval(&run.out_dir.join(CHECKPOINT_FILE), &cfg));
    match outcome {
        Ok(rows) => {
            let r = &rows[0];
            SweepCell {
                value,
                seed,
                status: "ok".into(),
                npe: Some(r.npe),
                w2_sq: Some(r.w2_sq),
                error: None,
            }
        }
        Err(e) => SweepCell {
            value,
            seed,
            status: "failed".into(),
            npe: None,
            w2_sq: None,
            error: Some(e.to_string()),
        },
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() < 2 {
        0.0
    } else {
        (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, std)
}

/// Runs the value × seed grid in a worker pool, records every cell, and
/// aggregates mean ± std per value over the seeds that succeeded.
pub fn cmd_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let sweep = cfg
        .sweep
        .clone()
        .ok_or_else(|| Error::InvalidConfig("sweep: config needs a [sweep] section".into()))?;
    let grid: Vec<(f64, u64)> = sweep
        .values
        .iter()
        .flat_map(|&v| sweep.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Numeric(format!("worker pool: {e}")))?;
    let cells: Vec<SweepCell> = pool.install(|| {
        grid.par_iter()
            .map(|&(v, s)| run_sweep_cell(cfg, &sweep.param, v, s))
            .collect()
    });

    let out_dir = resolve_out_dir(cfg);
    std::fs::create_dir_all(&out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join(CELLS_FILE))?;
    for c in &cells {
        w.serialize(c)?;
    }
    w.flush()?;

    let mut rows = Vec::new();
    for &v in &sweep.values {
        let ok: Vec<&SweepCell> = cells
            .iter()
            .filter(|c| c.value == v && c.status == "ok")
            .collect();
        let npes: Vec<f64> = ok.iter().filter_map(|c| c.npe).collect();
        let w2s: Vec<f64> = ok.iter().filter_map(|c| c.w2_sq).collect();
        let (npe_mean, npe_std) = if npes.is_empty() { (None, None) } else {
            let (m, s) = mean_std(&npes);
            (Some(m), Some(s))
        };
        let (w2_mean, w2_std) = if w2s.is_empty() { (None, None) } else {
            let (m, s) = mean_std(&w2s);
            (Some(m), Some(s))
        };
        rows.push(SweepRow {
            param: sweep.param.clone(),
            value: v,
            n_ok: ok.len(),
            npe_mean,
            npe_std,
            w2_mean,
            w2_std,
        });
    }
    let mut w = csv::Writer::from_path(out_dir.join(SWEEP_FILE))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Marginal error of a trained bridge against the entropic ground truth,
/// written as (t, w2_sq) rows over the interior of a 20-point grid.
pub fn cmd_sb_eval(checkpoint: &Path, cfg: &ExperimentConfig) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    if cfg.algorithm != Algorithm::Sbcfm {
        return Err(Error::InvalidConfig(
            "algorithm: sb-eval needs an sbcfm run".into(),
        ));
    }
    let model = FieldModel::from_json(&std::fs::read_to_string(checkpoint)?)?;
    let (src, tgt) = cfg.resolved_endpoints()?;
    let seed = cfg.seed();
    let mut rng = derive_rng(seed, "cli.sb");
    let nq = cfg.eval.n_eval.min(2000);
    let q0 = src.sample(nq, &mut rng);
    let q1 = tgt.sample(nq, &mut rng);
    let (_, settings, _) = parse_integrator(&cfg.eval.integrators[0])?;
    let curve = sb_error_curve(
        &model,
        &q0,
        &q1,
        cfg.train.sigma,
        SB_TIMEPOINTS,
        SB_SAMPLES,
        &settings,
        &mut rng,
    )?;
    let out_dir = resolve_out_dir(cfg);
    std::fs::create_dir_all(&out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join(SB_CURVE_FILE))?;
    w.write_record(["t", "w2_sq"])?;
    for (t, e) in &curve {
        w.write_record([t.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(curve)
}

pub struct EbmOutcome {
    pub log_z: f64,
    pub out_dir: PathBuf,
    pub model: FieldModel,
    pub wall_clock_s: f64,
}

/// Funnel pipeline: importance-weighted (or MALA) target batches feed an
/// OT-CFM trainer, then the flow's change of variables estimates log Z.
pub fn cmd_ebm(cfg: &ExperimentConfig) -> Result<EbmOutcome> {
    let start = Instant::now();
    cfg.validate()?;
    let ebm = cfg.ebm.clone().unwrap_or_default();
    let (src, tgt) = cfg.resolved_endpoints()?;
    if tgt != Dataset::Funnel {
        return Err(Error::InvalidConfig("target: ebm needs dataset = \"funnel\"".into()));
    }
    if !matches!(src, Dataset::Gaussian { d: FUNNEL_D }) {
        return Err(Error::InvalidConfig(format!(
            "source: ebm needs gaussian with d = {FUNNEL_D}"
        )));
    }
    if cfg.algorithm == Algorithm::Fm {
        return Err(Error::InvalidConfig(
            "algorithm: ebm training is pair-conditioned; use icfm or otcfm".into(),
        ));
    }

    let mut tc = cfg.train_config()?;
    tc.batch_size = ebm.batch_size;
    // budget-driven schedule: exactly total_steps updates, no early stop
    let spe = ebm.total_steps.min(30);
    tc.steps_per_epoch = Some(spe);
    tc.max_epochs = ebm.total_steps.div_ceil(spe);
    tc.patience = usize::MAX;

    let seed = cfg.seed();
    let mut vrng = derive_rng(seed, "cli.valset");
    let vs = src.sample(cfg.train.n_val, &mut vrng);
    let vt = tgt.sample(cfg.train.n_val, &mut vrng);
    let density = Funnel;
    let target_sampler = match ebm.sampler.as_str() {
        "rwis" => Sampler::WeightedFn(Box::new(move |n, rng| {
            rwis_batch(&|x| density.log_density(x), FUNNEL_D, n, rng)
        })),
        "mala" => {
            let mut mrng = derive_rng(seed, "cli.ebm.mala");
            let pool = mala_sample(
                &density,
                ebm.mala_pool,
                ebm.mala_steps,
                ebm.mala_step_start,
                ebm.mala_step_end,
                &mut mrng,
            )?;
            eprintln!("mala pool acceptance rate: {:.3}", pool.acceptance_rate);
            Sampler::Dataset(Dataset::Empirical(pool.samples))
        }
        other => unreachable!("validated ebm sampler {other}"),
    };
    let mut legs = vec![Leg::whole(Sampler::Dataset(src), target_sampler, vs, vt)];
    let (model, history) = train(&tc, &mut legs)?;

    let mut zrng = derive_rng(seed, "cli.ebm.logz");
    let log_z = eval::log_partition_estimate(
        &model,
        &|x| density.log_density(x),
        ebm.k,
        FUNNEL_D,
        &OdeSettings::dopri5(ebm.tol, ebm.tol),
        ebm.h_div,
        &mut zrng,
    )?;
    let wall_clock_s = start.elapsed().as_secs_f64();

    let out_dir = resolve_out_dir(cfg);
    write_train_artifacts(&out_dir, cfg, &model, &history, wall_clock_s)?;
    let summary = serde_json::json!({
        "log_z": log_z,
        "k": ebm.k,
        "tol": ebm.tol,
        "sampler": ebm.sampler,
        "total_steps": ebm.total_steps,
        "batch_size": ebm.batch_size,
        "wall_clock_s": wall_clock_s,
    });
    std::fs::write(out_dir.join(EBM_FILE), serde_json::to_string_pretty(&summary)?)?;
    Ok(EbmOutcome { log_z, out_dir, model, wall_clock_s })
}

/// Renders a scene JSON (scatter + trajectories) or a report CSV (metric
/// curve) into `<out>/plot.svg`.
pub fn cmd_plot(input: &Path, out_dir: &Path, metric: &str) -> Result<PathBuf> {
    let ext = input.extension().and_then(|e| e.to_str()).unwrap_or("");
    let svg = match ext {
        "json" => {
            let scene: Scene = serde_json::from_str(&std::fs::read_to_string(input)?)?;
            scene_svg(&scene)
        }
        "csv" => {
            let rows = crate::report::read_report(input)?;
            let pick = |r: &ReportRow| -> Result<f64> {
                Ok(match metric {
                    "w2_sq" => r.w2_sq,
                    "pe" => r.pe,
                    "npe" => r.npe,
                    "nfe_mean" => r.nfe_mean,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "metric: expected w2_sq | pe | npe | nfe_mean, got '{other}'"
                        )))
                    }
                })
            };
            let all_stepped = !rows.is_empty() && rows.iter().all(|r| r.n_steps.is_some());
            let points: Vec<(f64, f64)> = rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let x = if all_stepped { r.n_steps.unwrap() as f64 } else { i as f64 };
                    Ok((x, pick(r)?))
                })
                .collect::<Result<_>>()?;
            let x_label = if all_stepped { "n_steps" } else { "row" };
            line_plot_svg(&points, x_label, metric)
        }
        _ => {
            return Err(Error::InvalidConfig(format!(
                "plot input must be .json or .csv, got '{}'",
                input.display()
            )))
        }
    };
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(PLOT_FILE);
    std::fs::write(&path, svg)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EvalSection;

    fn tiny(run_id: &str, algorithm: Algorithm, dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::minimal(run_id, algorithm, "gaussian", "moons");
        cfg.train.hidden = vec![16, 16];
        cfg.train.batch_size = 64;
        cfg.train.max_epochs = 3;
        cfg.train.val_interval = 1;
        cfg.train.n_val = 64;
        cfg.eval = EvalSection {
            n_eval: 64,
            integrators: vec!["euler:4".into()],
            nfe_grid: None,
        };
        cfg.output_dir = Some(dir.to_path_buf());
        cfg
    }

    #[test]
    fn train_writes_the_advertised_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny("artifacts", Algorithm::Icfm, dir.path());
        let run = cmd_train(&cfg).unwrap();
        for f in [CHECKPOINT_FILE, HISTORY_FILE, META_FILE] {
            assert!(dir.path().join(f).exists(), "{f} missing");
        }
        assert_eq!(run.history.len(), 3);
        let text = std::fs::read_to_string(dir.path().join(HISTORY_FILE)).unwrap();
        assert!(text.starts_with("epoch,train_loss,val_loss\n"));
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(META_FILE)).unwrap())
                .unwrap();
        assert_eq!(meta["seed"], 0);
        assert!(meta["content_hash"].as_str().unwrap().starts_with("sha256:"));
        assert_eq!(meta["config"]["train"]["batch_size"], 64);
    }

    #[test]
    fn eval_reports_identity_model_npe_of_one() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny("ident", Algorithm::Icfm, dir.path());
        cfg.eval.n_eval = 128;
        // all-zero weights: v ≡ 0, so PE = 0 and NPE = 1 by definition
        let mut model = FieldModel::init(2, &[8], 0).unwrap();
        for w in &mut model.weights {
            w.fill(0.0);
        }
        for b in &mut model.biases {
            b.fill(0.0);
        }
        let ckpt = dir.path().join(CHECKPOINT_FILE);
        std::fs::write(&ckpt, model.to_json().unwrap()).unwrap();
        let rows = cmd_eval(&ckpt, &cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].pe, 0.0);
        assert_eq!(rows[0].npe, 1.0);
        assert_eq!(rows[0].n_steps, Some(4));
        assert!(dir.path().join(REPORT_FILE).exists());
        assert!(dir.path().join(TRAJECTORIES_FILE).exists());
        let got = crate::report::read_report(&dir.path().join(REPORT_FILE)).unwrap();
        assert_eq!(got, rows);
    }

    #[test]
    fn nfe_grid_emits_euler_rows_plus_one_adaptive() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny("grid", Algorithm::Icfm, dir.path());
        cfg.eval.nfe_grid = Some(vec![4, 8, 16, 32]);
        let run = cmd_train(&cfg).unwrap();
        let rows = cmd_eval(&run.out_dir.join(CHECKPOINT_FILE), &cfg).unwrap();
        assert_eq!(rows.len(), 5);
        let eulers: Vec<usize> = rows
            .iter()
            .filter(|r| r.integrator == "euler")
            .map(|r| r.n_steps.unwrap())
            .collect();
        assert_eq!(eulers, vec![4, 8, 16, 32]);
        assert_eq!(rows.last().unwrap().integrator, "dopri5");
        assert_eq!(rows.last().unwrap().n_steps, None);
        // euler uses one field eval per step
        assert_eq!(rows[0].nfe_mean, 4.0);
    }

    #[test]
    fn missing_checkpoint_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny("missing", Algorithm::Icfm, dir.path());
        let err = cmd_eval(&dir.path().join("nope.json"), &cfg).unwrap_err();
        assert!(matches!(err, Error::Io(_)), "{err}");
    }
}
