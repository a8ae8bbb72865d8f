//! Experiment files: a flat `key = value` document describing data,
//! partitioning, training and outputs, expanded into one or more runs.
//!
//! ```text
//! schema = 1
//! name = demo
//! dataset = synthetic
//! synthetic_classes = 10
//! partition = class-count
//! classes_per_client = 2
//! d1 = 4,8,16          # comma lists sweep; one run per combination
//! ```
//!
//! Lines are `key = value`; `#` starts a comment. Unknown keys, repeated keys
//! and missing required keys are errors. Hidden widths are written `32x16`
//! (`none` for no hidden layer); local archetypes are separated by `;`.
//! The full key list is [`KEYS`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{gen_synthetic, split_train_test, LabeledDataset, NonIidSpec, PartitionPlan};
use crate::error::{Error, Result};
use crate::federation::{run_training, Mode, RunConfig};
use crate::fusion::{InferenceVariant, LearningRates, LossWeights};
use crate::metrics::{export_reports, rounds_to_target, ReportFormat, RoundReport};
use crate::numerics::Rng;

pub const SCHEMA_VERSION: u32 = 1;

/// `(key, default)`; keys without a default are required.
pub const KEYS: &[(&str, Option<&str>)] = &[
    ("schema", None),
    ("name", None),
    ("dataset", None),
    ("data_path", Some("")),
    ("standardize", Some("false")),
    ("synthetic_classes", Some("10")),
    ("synthetic_dim", Some("32")),
    ("synthetic_per_class", Some("100")),
    ("synthetic_spread", Some("1.0")),
    ("synthetic_seed", Some("0")),
    ("partition", Some("class-count")),
    ("classes_per_client", Some("2")),
    ("alpha", Some("0.5")),
    ("partition_seed", Some("0")),
    ("n_clients", Some("10")),
    ("participation", Some("1.0")),
    ("rounds", Some("50")),
    ("local_epochs", Some("1")),
    ("batch_size", Some("16")),
    ("lr", Some("0.01")),
    ("lr_theta", Some("")),
    ("lr_omega", Some("")),
    ("lr_phi", Some("")),
    ("d1", Some("8")),
    ("d2", Some("16")),
    ("global_hidden", Some("32")),
    ("local_hidden", Some("40;40;20;16;10")),
    ("loss_weight_global", Some("1.0")),
    ("loss_weight_local", Some("1.0")),
    ("mode", Some("fedmrl")),
    ("seed", Some("0")),
    ("eval_variant", Some("mix-large")),
    ("target_accuracy", Some("")),
    ("output_dir", Some("out")),
    ("formats", Some("csv")),
];

/// Keys that may hold a comma list, expanded into a sweep.
pub const SWEEPABLE: &[&str] = &[
    "d1",
    "d2",
    "alpha",
    "classes_per_client",
    "mode",
    "seed",
    "lr",
    "local_epochs",
    "participation",
];

/// A parsed experiment file. Values stay textual until [`Self::expand`].
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
    base_dir: PathBuf,
}

/// Where the samples come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DataSpec {
    Synthetic {
        classes: usize,
        dim: usize,
        per_class: usize,
        spread: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
    },
}

/// One fully resolved run of a (possibly swept) experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Experiment {
    /// File stem of this run's outputs, e.g. `demo_d1-4`.
    pub stem: String,
    pub data: DataSpec,
    pub standardize: bool,
    pub partition: NonIidSpec,
    pub run: RunConfig,
    pub target_accuracy: Option<f64>,
}

/// Per-run digest written next to the reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stem: String,
    pub mode: Mode,
    pub seed: u64,
    pub d1: usize,
    pub d2: usize,
    pub partition_hash: String,
    pub rounds: usize,
    pub final_avg_acc: Option<f64>,
    pub target_accuracy: Option<f64>,
    pub first_round_reaching_target: Option<usize>,
    pub theta_params: usize,
    pub total_uplink: u64,
    pub total_downlink: u64,
    pub total_flops: u64,
    pub files: Vec<String>,
}

fn default_of(key: &str) -> Option<Option<&'static str>> {
    KEYS.iter().find(|(k, _)| *k == key).map(|&(_, d)| d)
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: base_dir.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if default_of(key).is_none() {
                return Err(err(format!("unknown key `{key}`")));
            }
            if values.insert(key.to_string(), value.to_string()).is_some() {
                return Err(err(format!("key `{key}` given twice")));
            }
        }
        let cfg = Self {
            values,
            base_dir: base_dir.to_path_buf(),
        };
        cfg.check_required()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    fn check_required(&self) -> Result<()> {
        for (key, default) in KEYS {
            if default.is_none() && !self.values.contains_key(*key) {
                return Err(Error::config(format!("missing required key `{key}`")));
            }
        }
        let schema = self.raw("schema");
        if schema != SCHEMA_VERSION.to_string() {
            return Err(Error::config(format!(
                "unsupported schema `{schema}` (expected {SCHEMA_VERSION})"
            )));
        }
        Ok(())
    }

    /// Overrides one key, as if it had been written in the file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if default_of(key).is_none() {
            return Err(Error::config(format!("unknown key `{key}`")));
        }
        self.values
            .insert(key.to_string(), value.trim().to_string());
        self.check_required()
    }

    /// Applies a `key=v1,v2,...` sweep override.
    pub fn set_sweep(&mut self, spec: &str) -> Result<()> {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| Error::config(format!("sweep `{spec}` must look like key=v1,v2")))?;
        let key = key.trim();
        if !SWEEPABLE.contains(&key) {
            return Err(Error::config(format!(
                "`{key}` cannot be swept (sweepable: {})",
                SWEEPABLE.join(", ")
            )));
        }
        self.set(key, values)
    }

    fn raw(&self, key: &str) -> &str {
        match self.values.get(key) {
            Some(v) => v,
            None => default_of(key).flatten().unwrap_or_default(),
        }
    }

    fn list(&self, key: &str) -> Vec<&str> {
        self.raw(key).split(',').map(str::trim).collect()
    }

    pub fn name(&self) -> &str {
        self.raw("name")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(self.raw("output_dir"))
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn formats(&self) -> Result<Vec<ReportFormat>> {
        self.list("formats").into_iter().map(str::parse).collect()
    }

    /// One [`Experiment`] per combination of swept values, in key order.
    pub fn expand(&self) -> Result<Vec<Experiment>> {
        let mut combos: Vec<Vec<(&str, &str)>> = vec![vec![]];
        for key in SWEEPABLE {
            let values = self.list(key);
            if values.iter().any(|v| v.is_empty()) && self.values.contains_key(*key) {
                return Err(Error::config(format!("empty value in list for `{key}`")));
            }
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((*key, *v));
                        c
                    })
                })
                .collect();
        }
        let swept: Vec<&str> = SWEEPABLE
            .iter()
            .copied()
            .filter(|k| self.list(k).len() > 1)
            .collect();
        combos
            .into_iter()
            .map(|overrides| {
                let view = View {
                    cfg: self,
                    overrides,
                };
                let mut stem = self.name().to_string();
                for key in &swept {
                    stem.push_str(&format!("_{key}-{}", view.get(key)));
                }
                view.resolve(stem)
            })
            .collect()
    }
}

/// The config as seen by one point of a sweep.
struct View<'a> {
    cfg: &'a ExperimentConfig,
    overrides: Vec<(&'a str, &'a str)>,
}

impl<'a> View<'a> {
    fn get(&self, key: &str) -> &'a str {
        match self.overrides.iter().find(|(k, _)| *k == key) {
            Some((_, v)) => v,
            None => self.cfg.raw(key),
        }
    }

    fn num<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.get(key);
        v.parse()
            .map_err(|e| Error::config(format!("bad value `{v}` for `{key}`: {e}")))
    }

    fn num_or<T: FromStr>(&self, key: &str, fallback: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            "" => Ok(fallback),
            _ => self.num(key),
        }
    }

    fn resolve(&self, stem: String) -> Result<Experiment> {
        let data = match self.get("dataset") {
            "synthetic" => DataSpec::Synthetic {
                classes: self.num("synthetic_classes")?,
                dim: self.num("synthetic_dim")?,
                per_class: self.num("synthetic_per_class")?,
                spread: self.num("synthetic_spread")?,
                seed: self.num("synthetic_seed")?,
            },
            "csv" => {
                let p = self.get("data_path");
                if p.is_empty() {
                    return Err(Error::config("dataset = csv needs data_path"));
                }
                DataSpec::Csv {
                    path: self.cfg.resolve(p),
                }
            }
            other => {
                return Err(Error::config(format!(
                    "dataset `{other}` must be synthetic or csv"
                )))
            }
        };
        let partition_seed = self.num("partition_seed")?;
        let partition = match self.get("partition") {
            "class-count" => {
                NonIidSpec::class_count(self.num("classes_per_client")?, partition_seed)
            }
            "dirichlet" => NonIidSpec::dirichlet(self.num("alpha")?, partition_seed),
            other => {
                return Err(Error::config(format!(
                    "partition `{other}` must be class-count or dirichlet"
                )))
            }
        };
        let lr: f64 = self.num("lr")?;
        let run = RunConfig {
            n_clients: self.num("n_clients")?,
            participation: self.num("participation")?,
            rounds: self.num("rounds")?,
            local_epochs: self.num("local_epochs")?,
            batch_size: self.num("batch_size")?,
            lrs: LearningRates {
                theta: self.num_or("lr_theta", lr)?,
                omega: self.num_or("lr_omega", lr)?,
                phi: self.num_or("lr_phi", lr)?,
            },
            d1: self.num("d1")?,
            d2: self.num("d2")?,
            global_hidden: widths(self.get("global_hidden"))?,
            local_hidden: self
                .get("local_hidden")
                .split(';')
                .map(|a| widths(a.trim()))
                .collect::<Result<_>>()?,
            loss_weights: LossWeights::new(
                self.num("loss_weight_global")?,
                self.num("loss_weight_local")?,
            )?,
            mode: self.num("mode")?,
            seed: self.num("seed")?,
            eval_variant: self.num::<InferenceVariant>("eval_variant")?,
        };
        run.validate()?;
        let target_accuracy = match self.get("target_accuracy") {
            "" => None,
            _ => Some(self.num("target_accuracy")?),
        };
        Ok(Experiment {
            stem,
            data,
            standardize: self.num("standardize")?,
            partition,
            run,
            target_accuracy,
        })
    }
}

fn widths(s: &str) -> Result<Vec<usize>> {
    if s == "none" || s.is_empty() {
        return Ok(vec![]);
    }
    s.split('x')
        .map(|w| {
            w.trim()
                .parse()
                .map_err(|e| Error::config(format!("bad width `{w}` in `{s}`: {e}")))
        })
        .collect()
}

impl Experiment {
    pub fn dataset(&self) -> Result<LabeledDataset> {
        let mut ds = match &self.data {
            DataSpec::Synthetic {
                classes,
                dim,
                per_class,
                spread,
                seed,
            } => gen_synthetic(*classes, *dim, *per_class, *spread, &mut Rng::new(*seed))?,
            DataSpec::Csv { path } => LabeledDataset::load_csv(path, None)?,
        };
        if self.standardize {
            ds.standardize();
        }
        Ok(ds)
    }

    /// Partition followed by the per-client 8:2 train/test split.
    pub fn plan(&self, ds: &LabeledDataset) -> Result<PartitionPlan> {
        let plan = self.partition.partition(ds, self.run.n_clients)?;
        split_train_test(&plan, self.partition.seed)
    }

    pub fn train(&self) -> Result<(PartitionPlan, Vec<RoundReport>)> {
        let ds = self.dataset()?;
        let plan = self.plan(&ds)?;
        let reports = run_training(&self.run, &ds, &plan)?;
        Ok((plan, reports))
    }
}

/// Runs every expanded experiment and writes `<stem>.<format>` reports plus
/// `<stem>.summary.json` into the output directory.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<RunSummary>> {
    let formats = cfg.formats()?;
    let runs = cfg.expand()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    runs.iter()
        .map(|exp| {
            let ds = exp.dataset()?;
            let plan = exp.plan(&ds)?;
            let reports = run_training(&exp.run, &ds, &plan)?;
            let mut files = Vec::new();
            for &format in &formats {
                let file = format!("{}.{}", exp.stem, format.extension());
                export_reports(&reports, &out_dir.join(&file), format)?;
                files.push(file);
            }
            let theta_params = exp.run.global_model(ds.dim(), ds.classes()).param_count();
            let summary = RunSummary {
                stem: exp.stem.clone(),
                mode: exp.run.mode,
                seed: exp.run.seed,
                d1: exp.run.d1,
                d2: exp.run.d2,
                partition_hash: plan.hash(),
                rounds: reports.len(),
                final_avg_acc: reports.last().map(|r| r.avg_test_accuracy),
                target_accuracy: exp.target_accuracy,
                first_round_reaching_target: exp
                    .target_accuracy
                    .and_then(|t| rounds_to_target(&reports, t)),
                theta_params,
                total_uplink: reports.iter().map(|r| r.uplink_params).sum(),
                total_downlink: reports.iter().map(|r| r.downlink_params).sum(),
                total_flops: reports.iter().map(|r| r.flops).sum(),
                files,
            };
            let path = out_dir.join(format!("{}.summary.json", exp.stem));
            let mut text =
                serde_json::to_string_pretty(&summary).map_err(|source| Error::Json {
                    path: path.clone(),
                    source,
                })?;
            text.push('\n');
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(summary)
        })
        .collect()
}
