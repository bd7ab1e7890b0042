//! Configuration files and the staged, cached pipeline runner.
//!
//! Stages: `dataset` → `connectivity` → (`features` when the extractor is fitted
//! once on all subjects) → `evaluate`, plus the constant-classifier `control`.
//! Every stage writes its artifacts into a cache directory keyed by the hash of
//! the stage name, version, its configuration and the upstream key, so an
//! identical rerun only reads them back.

pub mod cache;
pub mod classifier;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cnn_ae::{read_features_csv, write_features_csv, FeatureVector};
use crate::connectivity::{connectivity_matrices, ConnectivityMatrix};
use crate::data::{generate_synthetic, load_dataset, save_dataset, ClassLabel, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::{cross_validate, make_folds, Averaging, EvalReport, FoldOutput};
use crate::features::{
    AutoencoderConfig, FeatureConfig, FeatureExtractor, FeatureSource, FitScope, Standardizer,
};
use crate::linalg::Matrix;
use crate::metaheuristics::{MetaheuristicKind, MetaheuristicSpec};

pub use cache::{cache_dir, stage_key, Cache, OutputLock, CACHE_ENV};
pub use classifier::{ClassifierConfig, Method, ModelFile, TrainedClassifier};

/// Exactly one source must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Dataset manifest (TOML) listing subject series files.
    pub manifest: Option<PathBuf>,
    /// The built-in 60/58/45 synthetic demo with this seed.
    pub demo_seed: Option<u64>,
    /// A custom synthetic dataset.
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub k: usize,
    pub seed: u64,
    pub averaging: Averaging,
    /// Also evaluate the constant (majority-class) control.
    pub control: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            seed: 0,
            averaging: Averaging::Macro,
            control: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub autoencoder: AutoencoderConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

/// One problem found in a configuration file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

fn diag(key: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        key: key.into(),
        message: message.into(),
    }
}

/// A configuration with every optional field present, used as the key schema.
fn schema() -> toml::Value {
    let cfg = PipelineConfig {
        data: DataConfig {
            manifest: Some("m".into()),
            demo_seed: Some(0),
            synthetic: Some(SyntheticSpec::demo(0)),
        },
        autoencoder: AutoencoderConfig::default(),
        features: FeatureConfig::default(),
        classifier: ClassifierConfig {
            optimizer: Some(MetaheuristicSpec {
                population: Some(5),
                ..MetaheuristicSpec::defaults(MetaheuristicKind::Gwo)
            }),
            ..Default::default()
        },
        eval: EvalConfig::default(),
        output: OutputConfig { dir: "out".into() },
    };
    toml::Value::try_from(&cfg).expect("config serializes")
}

fn unknown_keys(value: &toml::Value, schema: &toml::Value, path: &str, out: &mut Vec<Diagnostic>) {
    match (value, schema) {
        (toml::Value::Table(t), toml::Value::Table(s)) => {
            for (k, v) in t {
                let key = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                match s.get(k) {
                    Some(sv) => unknown_keys(v, sv, &key, out),
                    None => out.push(diag(key, "unknown key")),
                }
            }
        }
        (toml::Value::Array(a), toml::Value::Array(s)) => {
            if let Some(first) = s.first() {
                for (i, v) in a.iter().enumerate() {
                    unknown_keys(v, first, &format!("{path}[{i}]"), out);
                }
            }
        }
        _ => {}
    }
}

impl PipelineConfig {
    /// Range and consistency problems (no I/O, nothing executed).
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let d = &self.data;
        let sources = [
            d.manifest.is_some(),
            d.demo_seed.is_some(),
            d.synthetic.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        if sources != 1 {
            out.push(diag(
                "data",
                format!("set exactly one of manifest, demo_seed, synthetic ({sources} set)"),
            ));
        }
        if let Some(s) = &d.synthetic {
            if let Err(e) = s.validate() {
                out.push(diag("data.synthetic", e.to_string()));
            }
        }
        if self.features.source == FeatureSource::CnnAe && self.classifier.method.uses_features() {
            if let Err(e) = self.autoencoder.validate() {
                out.push(diag("autoencoder", e.to_string()));
            }
        }
        if self.eval.k < 2 {
            out.push(diag(
                "eval.k",
                format!("must be at least 2, got {}", self.eval.k),
            ));
        }
        if self.output.dir.as_os_str().is_empty() {
            out.push(diag("output.dir", "must not be empty"));
        }
        for m in self.classifier.diagnostics() {
            let (key, msg) = m.split_once(' ').unwrap_or(("classifier", &m));
            out.push(diag(key.trim_end_matches(':'), msg));
        }
        out
    }

    fn resolve_paths(&mut self, base: &Path) {
        if let Some(m) = &self.data.manifest {
            if m.is_relative() {
                self.data.manifest = Some(base.join(m));
            }
        }
        if self.output.dir.is_relative() {
            self.output.dir = base.join(&self.output.dir);
        }
    }
}

fn parse_toml(path: &Path) -> Result<toml::Value> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.parse::<toml::Table>()
        .map(toml::Value::Table)
        .map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0),
            msg: e.message().to_string(),
        })
}

fn check_value(value: toml::Value) -> (Option<PipelineConfig>, Vec<Diagnostic>) {
    let mut out = Vec::new();
    unknown_keys(&value, &schema(), "", &mut out);
    let table = value.as_table().cloned().unwrap_or_default();
    if !table.contains_key("data") {
        out.push(diag(
            "data",
            "missing required section (one of data.manifest, data.demo_seed, data.synthetic)",
        ));
    }
    match table.get("output").and_then(|o| o.as_table()) {
        Some(o) if o.contains_key("dir") => {}
        _ => out.push(diag("output.dir", "missing required key")),
    }
    if !out.is_empty() {
        return (None, out);
    }
    match value.try_into::<PipelineConfig>() {
        Ok(cfg) => {
            out.extend(cfg.diagnostics());
            (Some(cfg), out)
        }
        Err(e) => {
            out.push(diag("config", e.message().to_string()));
            (None, out)
        }
    }
}

/// Every problem in the file at `path`. Only a file that is not valid TOML is an
/// error.
pub fn validate_config(path: &Path) -> Result<Vec<Diagnostic>> {
    Ok(check_value(parse_toml(path)?).1)
}

/// Parses and validates a configuration; relative paths are taken relative to
/// the file's directory.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let (cfg, diags) = check_value(parse_toml(path)?);
    match cfg {
        Some(mut cfg) if diags.is_empty() => {
            cfg.resolve_paths(path.parent().unwrap_or_else(|| Path::new(".")));
            Ok(cfg)
        }
        _ => Err(Error::Config(
            diags
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        )),
    }
}

/// 1 for configuration and input-format problems, 2 for failures while running.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_) => 1,
        Error::Stage { cause, .. } => match **cause {
            Error::Config(_) => 1,
            _ => 2,
        },
        _ => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRecord {
    pub name: String,
    pub key: String,
    pub cached: bool,
    pub path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub stages: Vec<StageRecord>,
    pub report: EvalReport,
    pub control: Option<EvalReport>,
    pub output_dir: PathBuf,
}

struct Runner {
    cache: Cache,
    stages: Vec<StageRecord>,
}

impl Runner {
    fn last_good(&self) -> String {
        self.stages
            .last()
            .map_or("none".into(), |s| s.path.display().to_string())
    }

    fn wrap<T>(&self, stage: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| Error::Stage {
            stage: stage.into(),
            cause: Box::new(e),
            last_good: self.last_good(),
        })
    }

    fn stage(
        &mut self,
        name: &str,
        version: u32,
        config: &impl Serialize,
        upstream: &str,
        build: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<(PathBuf, String)> {
        let json = serde_json::to_string(config).expect("config serializes");
        let key = stage_key(name, version, &json, upstream);
        let built = self.cache.get_or_build(name, &key, build);
        let (path, cached) = self.wrap(name, built)?;
        self.stages.push(StageRecord {
            name: name.into(),
            key: key.clone(),
            cached,
            path: path.clone(),
        });
        Ok((path, key))
    }
}

fn json_err(path: &Path, e: serde_json::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    }
}

pub fn write_connectivity(
    dir: &Path,
    mats: &[ConnectivityMatrix],
    labels: &[ClassLabel],
) -> Result<()> {
    let mdir = dir.join("matrices");
    fs::create_dir_all(&mdir).map_err(|e| Error::io(&mdir, e))?;
    let mut index = String::from("subject_id,label\n");
    for (m, l) in mats.iter().zip(labels) {
        m.write_csv(&mdir.join(format!("{}.csv", m.subject_id)))?;
        index.push_str(&format!("{},{l}\n", m.subject_id));
    }
    let p = dir.join("index.csv");
    fs::write(&p, index).map_err(|e| Error::io(&p, e))
}

pub fn read_connectivity(dir: &Path) -> Result<(Vec<ConnectivityMatrix>, Vec<ClassLabel>)> {
    let p = dir.join("index.csv");
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    let mut mats = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let (id, label) = line.split_once(',').ok_or_else(|| Error::Parse {
            path: p.clone(),
            line: i + 1,
            msg: "expected `subject_id,label`".into(),
        })?;
        labels.push(label.parse()?);
        mats.push(ConnectivityMatrix::read_csv(
            &dir.join("matrices").join(format!("{id}.csv")),
            id,
        )?);
    }
    Ok((mats, labels))
}

fn copy_dir_files(from: &Path, to: &Path) -> Result<()> {
    fs::create_dir_all(to).map_err(|e| Error::io(to, e))?;
    for entry in fs::read_dir(from).map_err(|e| Error::io(from, e))? {
        let entry = entry.map_err(|e| Error::io(from, e))?;
        let name = entry.file_name();
        if entry.path().is_file() && !name.to_string_lossy().starts_with('.') {
            fs::copy(entry.path(), to.join(&name)).map_err(|e| Error::io(to, e))?;
        }
    }
    Ok(())
}

/// Cross-validates `classifier` on features from `source`.
///
/// `shared` holds features already extracted for every subject (the `all` fit
/// scope); otherwise an extractor is fitted on each training split.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_method(
    matrices: &[ConnectivityMatrix],
    labels: &[ClassLabel],
    features: &FeatureConfig,
    autoencoder: &AutoencoderConfig,
    classifier: &ClassifierConfig,
    eval: &EvalConfig,
    shared: Option<&Matrix>,
) -> Result<EvalReport> {
    let plan = make_folds(labels, eval.k, eval.seed)?;
    let method = classifier.method;
    let name = match &classifier.optimizer {
        Some(spec) => format!("{}-{}", method.as_str(), spec.kind.as_str()),
        None => method.as_str().to_string(),
    };
    cross_validate(&name, labels, &plan, eval.seed, eval.averaging, |inp| {
        let train_labels: Vec<ClassLabel> = inp.train.iter().map(|&i| labels[i]).collect();
        if !method.uses_features() {
            let (c, _) = classifier::train(
                &Matrix::zeros(inp.train.len(), 1),
                &train_labels,
                classifier,
                inp.seed,
            )?;
            let predictions = c.predict_all(&Matrix::zeros(inp.test.len(), 1))?;
            return Ok(FoldOutput {
                predictions,
                extractor_fit: None,
            });
        }
        let (x_train, x_test, extractor_fit) = match shared {
            Some(x) => (x.select_rows(inp.train), x.select_rows(inp.test), None),
            None => {
                let ex = FeatureExtractor::fit(
                    features.source,
                    matrices,
                    labels,
                    inp.train,
                    autoencoder,
                    inp.seed,
                )?;
                (
                    ex.transform(matrices, inp.train)?,
                    ex.transform(matrices, inp.test)?,
                    Some(inp.train.to_vec()),
                )
            }
        };
        let st = if features.standardize {
            Standardizer::fit(&x_train)
        } else {
            Standardizer::identity(x_train.cols())
        };
        let (c, _) = classifier::train(&st.apply(&x_train)?, &train_labels, classifier, inp.seed)?;
        let predictions = c.predict_all(&st.apply(&x_test)?)?;
        Ok(FoldOutput {
            predictions,
            extractor_fit,
        })
    })
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    report.write_all(dir)?;
    let p = dir.join("report.json");
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(&p, json).map_err(|e| Error::io(&p, e))
}

fn read_report(dir: &Path) -> Result<EvalReport> {
    let p = dir.join("report.json");
    let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| json_err(&p, e))
}

/// Runs every stage, reusing cached artifacts, and writes the reports under
/// `output.dir/report` (and `output.dir/control`).
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutcome> {
    let diags = config.diagnostics();
    if !diags.is_empty() {
        return Err(Error::Config(
            diags
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; "),
        ));
    }
    let out = &config.output.dir;
    let _lock = OutputLock::acquire(out)?;
    let mut run = Runner {
        cache: Cache::new(cache_dir(out)),
        stages: Vec::new(),
    };

    let manifest_text = match &config.data.manifest {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    let (data_dir, data_key) =
        run.stage("dataset", 1, &(&config.data, &manifest_text), "", |dir| {
            let records = match (
                &config.data.manifest,
                config.data.demo_seed,
                &config.data.synthetic,
            ) {
                (Some(p), _, _) => load_dataset(p)?,
                (_, Some(seed), _) => generate_synthetic(&SyntheticSpec::demo(seed))?,
                (_, _, Some(spec)) => generate_synthetic(spec)?,
                _ => unreachable!("validated"),
            };
            save_dataset(&records, dir, config.data.demo_seed).map(|_| ())
        })?;
    let records = run.wrap("dataset", load_dataset(&data_dir.join("manifest.toml")))?;

    let (conn_dir, conn_key) = run.stage("connectivity", 1, &(), &data_key, |dir| {
        let mats = connectivity_matrices(&records)?;
        let labels: Vec<ClassLabel> = records.iter().map(|r| r.label).collect();
        write_connectivity(dir, &mats, &labels)
    })?;
    let (mats, labels) = run.wrap("connectivity", read_connectivity(&conn_dir))?;
    drop(records);

    let cnn = config.features.source == FeatureSource::CnnAe;
    let ae_cfg = cnn.then_some(&config.autoencoder);
    let uses_features = config.classifier.method.uses_features();
    let mut upstream = conn_key.clone();
    let mut shared = None;
    if uses_features && config.features.fit_scope == FitScope::All {
        let (dir, key) = run.stage(
            "features",
            1,
            &(&config.features, ae_cfg, config.eval.seed),
            &conn_key,
            |dir| {
                let all: Vec<usize> = (0..mats.len()).collect();
                let ex = FeatureExtractor::fit(
                    config.features.source,
                    &mats,
                    &labels,
                    &all,
                    &config.autoencoder,
                    config.eval.seed,
                )?;
                let x = ex.transform(&mats, &all)?;
                let rows: Vec<FeatureVector> = x
                    .iter_rows()
                    .zip(&mats)
                    .zip(&labels)
                    .map(|((v, m), &label)| FeatureVector {
                        subject_id: m.subject_id.clone(),
                        label,
                        values: v.to_vec(),
                    })
                    .collect();
                write_features_csv(&dir.join("features.csv"), &rows)
            },
        )?;
        let rows = run.wrap("features", read_features_csv(&dir.join("features.csv")))?;
        let values: Vec<Vec<f64>> = rows.into_iter().map(|r| r.values).collect();
        shared = Some(run.wrap("features", Matrix::from_rows(&values))?);
        upstream = key;
    }

    let eval_cfg = EvalConfig {
        control: false,
        ..config.eval.clone()
    };
    let feature_part = uses_features.then_some((&config.features, ae_cfg));
    let (report_dir, _) = run.stage(
        "evaluate",
        1,
        &(feature_part, &config.classifier, &eval_cfg),
        &upstream,
        |dir| {
            let r = evaluate_method(
                &mats,
                &labels,
                &config.features,
                &config.autoencoder,
                &config.classifier,
                &eval_cfg,
                shared.as_ref(),
            )?;
            write_report(dir, &r)
        },
    )?;
    let report = run.wrap("evaluate", read_report(&report_dir))?;
    run.wrap("evaluate", copy_dir_files(&report_dir, &out.join("report")))?;

    let mut control = None;
    if config.eval.control {
        let ctl = ClassifierConfig {
            method: Method::Constant,
            ..Default::default()
        };
        let (dir, _) = run.stage("control", 1, &(&eval_cfg,), &conn_key, |dir| {
            let r = evaluate_method(
                &mats,
                &labels,
                &config.features,
                &config.autoencoder,
                &ctl,
                &eval_cfg,
                None,
            )?;
            write_report(dir, &r)
        })?;
        control = Some(run.wrap("control", read_report(&dir))?);
        run.wrap("control", copy_dir_files(&dir, &out.join("control")))?;
    }

    Ok(PipelineOutcome {
        stages: run.stages,
        report,
        control,
        output_dir: out.clone(),
    })
}
