use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use fcfuzzy::cnn_ae::{
    build_autoencoder, extract_features, finetune_classifier, read_features_csv,
    train_reconstruction, write_features_csv, AutoencoderModel, FeatureVector, FineTunedEncoder,
    DEFAULT_INPUT_SIZE,
};
use fcfuzzy::connectivity::{connectivity_matrices, export_heatmap};
use fcfuzzy::data::{generate_synthetic, load_dataset, save_dataset, ClassLabel, SyntheticSpec};
use fcfuzzy::error::Error;
use fcfuzzy::eval::{Averaging, EvalReport};
use fcfuzzy::features::{AutoencoderConfig, FeatureConfig, FeatureSource, FitScope, Standardizer};
use fcfuzzy::linalg::Matrix;
use fcfuzzy::metaheuristics::{MetaheuristicKind, MetaheuristicSpec};
use fcfuzzy::nn::TrainConfig;
use fcfuzzy::pipeline::{
    self, classifier, evaluate_method, read_connectivity, write_connectivity, ClassifierConfig,
    EvalConfig, Method, ModelFile,
};
use fcfuzzy::stats;

#[derive(Parser)]
#[command(
    name = "fcfuzzy",
    version,
    about = "Connectivity-based diagnosis with interval type-2 fuzzy regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (series CSVs plus manifest.toml).
    Synth {
        /// TOML synthetic spec; without it the 60/58/45 demo is generated.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pearson connectivity matrices for every subject of a manifest.
    Connect {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write one PPM heatmap per subject.
        #[arg(long)]
        heatmaps: bool,
    },
    /// Group statistics.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Train the convolutional autoencoder on reconstruction.
    TrainAe {
        #[arg(long)]
        connectivity: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long, default_value_t = DEFAULT_INPUT_SIZE)]
        input_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune the encoder with a softmax head.
    Finetune {
        #[arg(long)]
        autoencoder: PathBuf,
        #[arg(long)]
        connectivity: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        freeze_encoder: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a feature CSV (bottleneck features, or raw upper triangles without --encoder).
    Extract {
        #[arg(long)]
        encoder: Option<PathBuf>,
        #[arg(long)]
        connectivity: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a classifier on a feature CSV.
    FitClassifier {
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        no_standardize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict labels for a feature CSV with a fitted classifier.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Stratified k-fold cross-validation of one method.
    Evaluate {
        /// Dataset manifest; connectivity is computed first.
        #[arg(
            long,
            conflicts_with = "connectivity",
            required_unless_present = "connectivity"
        )]
        manifest: Option<PathBuf>,
        /// A directory written by `connect`.
        #[arg(long)]
        connectivity: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "cnn_ae")]
        feature_source: String,
        /// Autoencoder settings as a TOML file (the `[autoencoder]` table of a run config).
        #[arg(long)]
        autoencoder: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        micro: bool,
        /// Report CSV; the table, confusion CSV/PPM and JSON are written beside it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full pipeline from a configuration file.
    Run { config: PathBuf },
    /// Check a configuration file without running anything.
    Validate { config: PathBuf },
}

#[derive(Subcommand)]
enum StatsCommand {
    /// One-way ANOVA; the CSV has `label,value` rows.
    Anova { input: PathBuf },
    /// Chi-square test of independence; rows separated by `;`, cells by `,`.
    Chisq { table: String },
    /// Per-edge ANOVA over a `connect` directory.
    Screen {
        connectivity: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 8)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "it2fr")]
    method: String,
    /// gwo, pso, ga or none.
    #[arg(long, default_value = "none")]
    optimizer: String,
    #[arg(long)]
    pop: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    fou_delta: Option<f64>,
    #[arg(long)]
    knn_k: Option<usize>,
}

impl ModelArgs {
    fn config(&self) -> anyhow::Result<ClassifierConfig> {
        let mut cfg = ClassifierConfig {
            method: self.method.parse::<Method>()?,
            seed: self.seed,
            ..Default::default()
        };
        if self.optimizer != "none" {
            let kind: MetaheuristicKind = self.optimizer.parse()?;
            let mut spec = MetaheuristicSpec::defaults(kind);
            spec.population = self.pop.or(spec.population);
            if let Some(i) = self.iters {
                spec.max_iter = i;
            }
            spec.seed = self.seed;
            cfg.optimizer = Some(spec);
        }
        if let Some(c) = self.clusters {
            cfg.it2fr.clusters = c;
            cfg.anfis.clusters = c;
        }
        if let Some(d) = self.fou_delta {
            cfg.it2fr.fou_delta = d;
        }
        if let Some(k) = self.knn_k {
            cfg.knn_k = k;
        }
        let problems = cfg.diagnostics();
        if !problems.is_empty() {
            return Err(Error::Config(problems.join("; ")).into());
        }
        Ok(cfg)
    }
}

fn feature_matrix(rows: &[FeatureVector]) -> anyhow::Result<(Matrix, Vec<ClassLabel>)> {
    if rows.is_empty() {
        bail!(Error::InvalidArgument("feature file has no rows".into()));
    }
    let values: Vec<&[f64]> = rows.iter().map(|r| r.values.as_slice()).collect();
    Ok((
        Matrix::from_rows(&values)?,
        rows.iter().map(|r| r.label).collect(),
    ))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn write_eval_outputs(report: &EvalReport, out: &Path) -> anyhow::Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    report.write_csv(out)?;
    report.write_table(&sibling(out, ".txt"))?;
    report.write_confusion_csv(&sibling(out, "_confusion.csv"))?;
    report.write_confusion_ppm(&sibling(out, "_confusion.ppm"))?;
    fs::write(sibling(out, ".json"), serde_json::to_string_pretty(report)?)?;
    print!("{}", report.to_table());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth { spec, seed, out } => {
            let spec = match spec {
                Some(p) => SyntheticSpec::read(&p)?,
                None => SyntheticSpec::demo(seed),
            };
            let records = generate_synthetic(&spec)?;
            let manifest = save_dataset(&records, &out, Some(spec.seed))?;
            println!(
                "{} subjects written; manifest {}",
                records.len(),
                manifest.display()
            );
        }
        Command::Connect {
            manifest,
            out,
            heatmaps,
        } => {
            let records = load_dataset(&manifest)?;
            let mats = connectivity_matrices(&records)?;
            let labels: Vec<ClassLabel> = records.iter().map(|r| r.label).collect();
            write_connectivity(&out, &mats, &labels)?;
            if heatmaps {
                let dir = out.join("heatmaps");
                fs::create_dir_all(&dir)?;
                for m in &mats {
                    export_heatmap(m, &dir.join(format!("{}.ppm", m.subject_id)))?;
                }
            }
            println!(
                "{} connectivity matrices written to {}",
                mats.len(),
                out.display()
            );
        }
        Command::Stats(cmd) => stats_command(cmd)?,
        Command::TrainAe {
            connectivity,
            train,
            input_size,
            out,
        } => {
            let (mats, _) = read_connectivity(&connectivity)?;
            let mut ae = build_autoencoder(input_size, train.seed)?;
            let h = train_reconstruction(&mut ae, &mats, &train.config())?;
            ae.save(&out)?;
            println!(
                "final reconstruction loss {:e}",
                h.loss.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Finetune {
            autoencoder,
            connectivity,
            train,
            freeze_encoder,
            out,
        } => {
            let ae = AutoencoderModel::load(&autoencoder)?;
            let (mats, labels) = read_connectivity(&connectivity)?;
            let (enc, h) =
                finetune_classifier(&ae, &mats, &labels, &train.config(), freeze_encoder)?;
            enc.save(&out)?;
            println!(
                "final loss {:e}, training accuracy {:.4}",
                h.loss.last().copied().unwrap_or(f64::NAN),
                h.accuracy.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Extract {
            encoder,
            connectivity,
            out,
        } => {
            let (mats, labels) = read_connectivity(&connectivity)?;
            let rows = match encoder {
                Some(p) => extract_features(&FineTunedEncoder::load(&p)?, &mats, &labels)?,
                None => mats
                    .iter()
                    .zip(&labels)
                    .map(|(m, &label)| FeatureVector {
                        subject_id: m.subject_id.clone(),
                        label,
                        values: m.upper_triangle(),
                    })
                    .collect(),
            };
            write_features_csv(&out, &rows)?;
            println!(
                "{} feature vectors of length {} written",
                rows.len(),
                rows.first().map_or(0, |r| r.values.len())
            );
        }
        Command::FitClassifier {
            features,
            model,
            no_standardize,
            out,
        } => {
            let cfg = model.config()?;
            let (x, labels) = feature_matrix(&read_features_csv(&features)?)?;
            let standardizer = if no_standardize {
                Standardizer::identity(x.cols())
            } else {
                Standardizer::fit(&x)
            };
            let (c, report) = classifier::train(&standardizer.apply(&x)?, &labels, &cfg, 0)?;
            if let Some(r) = report {
                for (class, (a, b)) in ClassLabel::ALL
                    .iter()
                    .zip(r.init_rmse.iter().zip(&r.final_rmse))
                {
                    println!("{class}: rmse {a:.6} -> {b:.6}");
                }
            }
            let file = ModelFile {
                standardizer,
                classifier: c,
            };
            let correct = x
                .iter_rows()
                .zip(&labels)
                .map(|(row, &l)| file.predict(row).map(|p| p == l))
                .collect::<Result<Vec<_>, _>>()?;
            file.save(&out)?;
            println!(
                "training accuracy {:.4}; model written to {}",
                correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64,
                out.display()
            );
        }
        Command::Predict { model, features } => {
            let file = ModelFile::load(&model)?;
            println!("subject_id,predicted");
            for row in read_features_csv(&features)? {
                println!("{},{}", row.subject_id, file.predict(&row.values)?);
            }
        }
        Command::Evaluate {
            manifest,
            connectivity,
            model,
            feature_source,
            autoencoder,
            k,
            micro,
            out,
        } => {
            let classifier = model.config()?;
            let source: FeatureSource = serde_json::from_value(serde_json::Value::String(feature_source.clone()))
                .map_err(|_| Error::Config(format!("unknown feature source `{feature_source}` (expected cnn_ae or raw_upper_triangle)")))?;
            let ae = match autoencoder {
                Some(p) => {
                    let text = fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    toml::from_str::<AutoencoderConfig>(&text)
                        .map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))?
                }
                None => AutoencoderConfig::default(),
            };
            if source == FeatureSource::CnnAe && classifier.method.uses_features() {
                ae.validate()?;
            }
            let eval = EvalConfig {
                k,
                seed: model.seed,
                averaging: if micro {
                    Averaging::Micro
                } else {
                    Averaging::Macro
                },
                control: false,
            };
            if k < 2 {
                return Err(Error::Config(format!("k must be at least 2, got {k}")).into());
            }
            let (mats, labels) = match (manifest, connectivity) {
                (Some(m), _) => {
                    let records = load_dataset(&m)?;
                    let labels = records.iter().map(|r| r.label).collect();
                    (connectivity_matrices(&records)?, labels)
                }
                (None, Some(c)) => read_connectivity(&c)?,
                (None, None) => unreachable!("clap requires one source"),
            };
            let features = FeatureConfig {
                source,
                fit_scope: FitScope::Fold,
                standardize: true,
            };
            let report = evaluate_method(&mats, &labels, &features, &ae, &classifier, &eval, None)?;
            write_eval_outputs(&report, &out)?;
        }
        Command::Run { config } => {
            let cfg = pipeline::load_config(&config)?;
            let outcome = pipeline::run_pipeline(&cfg)?;
            for s in &outcome.stages {
                println!(
                    "{:<13} {} {}",
                    s.name,
                    if s.cached { "cached" } else { "built " },
                    s.path.display()
                );
            }
            print!("{}", outcome.report.to_table());
            if let Some(c) = &outcome.control {
                println!("control accuracy {:.4}", c.mean.accuracy);
            }
            println!("reports in {}", outcome.output_dir.join("report").display());
        }
        Command::Validate { config } => {
            let diags = pipeline::validate_config(&config)?;
            if diags.is_empty() {
                println!("{}: ok", config.display());
            } else {
                for d in &diags {
                    println!("{d}");
                }
                return Err(Error::Config(format!(
                    "{} problem(s) in {}",
                    diags.len(),
                    config.display()
                ))
                .into());
            }
        }
    }
    Ok(())
}

fn stats_command(cmd: StatsCommand) -> anyhow::Result<()> {
    match cmd {
        StatsCommand::Anova { input } => {
            let text = fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let mut groups: [Vec<f64>; 3] = Default::default();
            for (i, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || (i == 0 && line.starts_with("label")) {
                    continue;
                }
                let parse_err = |msg: String| Error::Parse {
                    path: input.clone(),
                    line: i + 1,
                    msg,
                };
                let (l, v) = line
                    .split_once(',')
                    .ok_or_else(|| parse_err("expected `label,value`".into()))?;
                let label: ClassLabel = l.parse().map_err(|e: Error| parse_err(e.to_string()))?;
                let v: f64 = v
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(format!("bad number `{v}`")))?;
                groups[label.index()].push(v);
            }
            let present: Vec<&Vec<f64>> = groups.iter().filter(|g| !g.is_empty()).collect();
            let r = stats::one_way_anova(&present)?;
            println!(
                "F({}, {}) = {:.6}, p = {:.6e}",
                r.df_between, r.df_within, r.f_stat, r.p_value
            );
        }
        StatsCommand::Chisq { table } => {
            let rows = table
                .split(';')
                .map(|r| {
                    r.split(',')
                        .map(|c| c.trim().parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::InvalidArgument(format!("bad table `{table}`: {e}")))?;
            let r = stats::chi_square_independence(&Matrix::from_rows(&rows)?)?;
            println!("chi2({}) = {:.6}, p = {:.6}", r.df, r.statistic, r.p_value);
        }
        StatsCommand::Screen {
            connectivity,
            alpha,
            out,
        } => {
            let (mats, labels) = read_connectivity(&connectivity)?;
            let edges = stats::edge_screen(&mats, &labels, alpha)?;
            let mut csv = String::from("i,j,f_stat,p_value\n");
            for e in &edges {
                csv.push_str(&format!("{},{},{:e},{:e}\n", e.i, e.j, e.f_stat, e.p_value));
            }
            match out {
                Some(p) => {
                    fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?;
                    println!("{} edges with p <= {alpha}", edges.len());
                }
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) => pipeline::exit_code(e) as u8,
        None => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
