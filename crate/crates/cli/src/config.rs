//! Experiment configs: TOML files with dotted-path overrides, seed
//! precedence, and resolution into trainer/eval inputs.

use std::path::{Path, PathBuf};

use flowmatch::data::{load_csv, Dataset};
use flowmatch::integrate::{Method, OdeSettings};
use flowmatch::paths::{PathSpec, PathVariant};
use flowmatch::trainer::{Coupling, TrainConfig};
use flowmatch::{Error, Result};
use serde::{Deserialize, Serialize};

pub const ENV_SEED: &str = "FLOWMATCH_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Fm,
    Icfm,
    Otcfm,
    Sbcfm,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Fm => "fm",
            Algorithm::Icfm => "icfm",
            Algorithm::Otcfm => "otcfm",
            Algorithm::Sbcfm => "sbcfm",
        }
    }

    pub fn variant(self) -> PathVariant {
        match self {
            Algorithm::Fm => PathVariant::FmGaussian,
            Algorithm::Icfm => PathVariant::Icfm,
            Algorithm::Otcfm => PathVariant::Otcfm,
            Algorithm::Sbcfm => PathVariant::Sbcfm,
        }
    }
}

/// One endpoint of the flow: a named generator or a CSV point cloud.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSpec {
    pub dataset: Option<String>,
    /// dimension, only meaningful for `gaussian`
    pub d: Option<usize>,
    pub csv: Option<PathBuf>,
    pub whiten: Option<bool>,
}

impl EndpointSpec {
    pub fn named(name: &str) -> Self {
        EndpointSpec {
            dataset: Some(name.to_string()),
            ..Default::default()
        }
    }

    pub fn resolve(&self, field: &str) -> Result<Dataset> {
        match (&self.dataset, &self.csv) {
            (Some(_), Some(_)) => Err(Error::InvalidConfig(format!(
                "{field}: set either dataset or csv, not both"
            ))),
            (None, None) => Err(Error::InvalidConfig(format!(
                "{field}: needs a dataset name or a csv path"
            ))),
            (Some(name), None) => Dataset::parse(name, self.d.unwrap_or(2)),
            (None, Some(path)) => {
                let data = load_csv(path, None, self.whiten.unwrap_or(false))?;
                Ok(Dataset::Empirical(data.groups.into_iter().next().unwrap().1))
            }
        }
    }

    /// short name for report rows
    pub fn label(&self) -> String {
        match (&self.dataset, &self.csv) {
            (Some(name), _) => name.clone(),
            (None, Some(p)) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
            _ => "unknown".into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub sigma: f64,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub ot_batch_size: Option<usize>,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_interval: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: Option<u64>,
    pub aggregation_m: usize,
    pub grad_clip: Option<f64>,
    pub steps_per_epoch: Option<usize>,
    pub wall_clock_limit_seconds: Option<f64>,
    /// rows in each frozen validation batch
    pub n_val: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            sigma: 0.1,
            hidden: vec![64, 64, 64],
            batch_size: 512,
            ot_batch_size: None,
            max_epochs: 400,
            patience: 3,
            val_interval: 10,
            lr: 1e-3,
            weight_decay: 1e-5,
            seed: None,
            aggregation_m: 1,
            grad_clip: None,
            steps_per_epoch: None,
            wall_clock_limit_seconds: None,
            n_val: 2000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub n_eval: usize,
    pub integrators: Vec<String>,
    /// Euler step counts; each adds a report row, plus one adaptive row
    pub nfe_grid: Option<Vec<usize>>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_eval: 10_000,
            integrators: vec!["rk4:100".into()],
            nfe_grid: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// one of sigma | batch_size | aggregation_m
    pub param: String,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EbmSection {
    /// rwis | mala
    pub sampler: String,
    pub batch_size: usize,
    pub total_steps: usize,
    /// importance-sample count for the partition estimate
    pub k: usize,
    pub tol: f64,
    pub h_div: f64,
    pub mala_pool: usize,
    pub mala_steps: usize,
    pub mala_step_start: f64,
    pub mala_step_end: f64,
}

impl Default for EbmSection {
    fn default() -> Self {
        EbmSection {
            sampler: "rwis".into(),
            batch_size: 300,
            total_steps: 1500,
            k: 6000,
            tol: 0.01,
            h_div: 1e-4,
            mala_pool: 20_000,
            mala_steps: 200,
            mala_step_start: 0.2,
            mala_step_end: 0.05,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub source: EndpointSpec,
    pub target: EndpointSpec,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub ebm: Option<EbmSection>,
}

impl ExperimentConfig {
    pub fn minimal(run_id: &str, algorithm: Algorithm, source: &str, target: &str) -> Self {
        ExperimentConfig {
            run_id: run_id.to_string(),
            algorithm,
            source: EndpointSpec::named(source),
            target: EndpointSpec::named(target),
            train: TrainSection::default(),
            eval: EvalSection::default(),
            output_dir: None,
            sweep: None,
            ebm: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.train.seed.unwrap_or(0)
    }

    /// Maps the algorithm onto a trainer config. Couplings are pinned by the
    /// algorithm so a config can't pair, say, otcfm with independent draws.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let spec = PathSpec::new(self.algorithm.variant(), self.train.sigma)
            .map_err(|e| Error::InvalidConfig(format!("train.sigma: {e}")))?;
        let mut cfg = TrainConfig::new(spec);
        cfg.hidden = self.train.hidden.clone();
        cfg.batch_size = self.train.batch_size;
        cfg.ot_batch_size = self.train.ot_batch_size;
        cfg.max_epochs = self.train.max_epochs;
        cfg.patience = self.train.patience;
        cfg.val_interval = self.train.val_interval;
        cfg.lr = self.train.lr;
        cfg.weight_decay = self.train.weight_decay;
        cfg.seed = self.seed();
        cfg.aggregation_m = self.train.aggregation_m;
        cfg.grad_clip = self.train.grad_clip;
        cfg.steps_per_epoch = self.train.steps_per_epoch;
        cfg.wall_clock_limit_seconds = self.train.wall_clock_limit_seconds;
        cfg.coupling = match self.algorithm {
            Algorithm::Otcfm => Coupling::ExactOt,
            Algorithm::Sbcfm => Coupling::Sinkhorn {
                epsilon: 2.0 * self.train.sigma * self.train.sigma,
            },
            Algorithm::Fm | Algorithm::Icfm => Coupling::Independent,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolved_endpoints(&self) -> Result<(Dataset, Dataset)> {
        let src = self.source.resolve("source")?;
        let tgt = self.target.resolve("target")?;
        if src.dim() != tgt.dim() {
            return Err(Error::InvalidConfig(format!(
                "source/target: dimension mismatch ({} vs {})",
                src.dim(),
                tgt.dim()
            )));
        }
        Ok((src, tgt))
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() {
            return Err(Error::InvalidConfig("run_id: must be nonempty".into()));
        }
        let (src, _) = self.resolved_endpoints()?;
        if self.algorithm == Algorithm::Fm && !matches!(src, Dataset::Gaussian { .. }) {
            return Err(Error::InvalidConfig(
                "source: fm requires a Gaussian source".into(),
            ));
        }
        self.train_config()?;
        if self.train.n_val == 0 {
            return Err(Error::InvalidConfig("train.n_val: must be >= 1".into()));
        }
        if self.eval.n_eval == 0 {
            return Err(Error::InvalidConfig("eval.n_eval: must be >= 1".into()));
        }
        if self.eval.integrators.is_empty() {
            return Err(Error::InvalidConfig(
                "eval.integrators: need at least one".into(),
            ));
        }
        for s in &self.eval.integrators {
            parse_integrator(s)?;
        }
        if let Some(grid) = &self.eval.nfe_grid {
            if grid.iter().any(|&n| n == 0) {
                return Err(Error::InvalidConfig(
                    "eval.nfe_grid: step counts must be >= 1".into(),
                ));
            }
        }
        if let Some(sw) = &self.sweep {
            sw.validate()?;
        }
        if let Some(ebm) = &self.ebm {
            ebm.validate()?;
        }
        Ok(())
    }
}

impl SweepSection {
    pub fn validate(&self) -> Result<()> {
        match self.param.as_str() {
            "sigma" => {}
            "batch_size" | "aggregation_m" => {
                for &v in &self.values {
                    if v.fract() != 0.0 || v < 1.0 {
                        return Err(Error::InvalidConfig(format!(
                            "sweep.values: {} needs positive integers, got {v}",
                            self.param
                        )));
                    }
                }
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "sweep.param: expected sigma | batch_size | aggregation_m, got '{other}'"
                )))
            }
        }
        if self.values.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig(
                "sweep: values and seeds must be nonempty".into(),
            ));
        }
        Ok(())
    }
}

impl EbmSection {
    pub fn validate(&self) -> Result<()> {
        if self.sampler != "rwis" && self.sampler != "mala" {
            return Err(Error::InvalidConfig(format!(
                "ebm.sampler: expected rwis | mala, got '{}'",
                self.sampler
            )));
        }
        if self.batch_size == 0 || self.total_steps == 0 || self.k == 0 {
            return Err(Error::InvalidConfig(
                "ebm: batch_size, total_steps and k must be >= 1".into(),
            ));
        }
        if !(self.tol > 0.0) || !(self.h_div > 0.0) {
            return Err(Error::InvalidConfig("ebm: tol and h_div must be > 0".into()));
        }
        Ok(())
    }
}

/// "euler:8", "rk4:100", "dopri5" or "dopri5:1e-4".
pub fn parse_integrator(s: &str) -> Result<(String, OdeSettings, Option<usize>)> {
    let bad = |msg: &str| Error::InvalidConfig(format!("eval.integrators: {msg} in '{s}'"));
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    match name {
        "euler" | "rk4" => {
            let n: usize = arg
                .ok_or_else(|| bad("missing step count"))?
                .parse()
                .map_err(|_| bad("bad step count"))?;
            if n == 0 {
                return Err(bad("step count must be >= 1"));
            }
            let method = if name == "euler" { Method::Euler } else { Method::Rk4 };
            Ok((name.to_string(), OdeSettings::fixed(method, n), Some(n)))
        }
        "dopri5" => {
            let tol: f64 = match arg {
                None => 1e-5,
                Some(a) => a.parse().map_err(|_| bad("bad tolerance"))?,
            };
            if !(tol > 0.0) {
                return Err(bad("tolerance must be > 0"));
            }
            Ok(("dopri5".to_string(), OdeSettings::dopri5(tol, tol), None))
        }
        _ => Err(bad("unknown integrator")),
    }
}

/// Loads a config file, applies `--set key=value` overrides onto the raw
/// TOML tree, then resolves the seed: --seed beats train.seed (file or
/// --set), which beats FLOWMATCH_SEED, which beats 0.
pub fn load_config(
    path: &Path,
    sets: &[String],
    cli_seed: Option<u64>,
    cli_out: Option<&Path>,
) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let mut value: toml::Value = text
        .parse()
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    for s in sets {
        apply_set(&mut value, s)?;
    }
    let mut cfg: ExperimentConfig = value
        .try_into()
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    if let Some(seed) = cli_seed {
        cfg.train.seed = Some(seed);
    } else if cfg.train.seed.is_none() {
        if let Ok(env) = std::env::var(ENV_SEED) {
            let parsed = env
                .parse::<u64>()
                .map_err(|_| Error::InvalidConfig(format!("{ENV_SEED}: bad seed '{env}'")))?;
            cfg.train.seed = Some(parsed);
        }
    }
    if let Some(out) = cli_out {
        cfg.output_dir = Some(out.to_path_buf());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes `leaf` at a dotted path like `train.lr=0.01`, creating tables as
/// needed. The value is parsed as TOML; bare words fall back to strings.
fn apply_set(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("--set expects key=value, got '{spec}'")))?;
    let leaf: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::InvalidConfig(format!("--set: empty path segment in '{key}'")));
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("--set: '{key}' crosses a non-table")))?;
        if i + 1 == parts.len() {
            table.insert(part.to_string(), leaf);
            return Ok(());
        }
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    unreachable!("split never yields zero parts")
}
