use std::fs;
use std::path::Path;

use fcfuzzy::connectivity::connectivity_matrices;
use fcfuzzy::data::{generate_synthetic, Block, ClassBlocks, ClassLabel, SyntheticSpec};
use fcfuzzy::error::Error;
use fcfuzzy::eval::{cross_validate, make_folds, Averaging, FoldOutput};
use fcfuzzy::features::{AutoencoderConfig, FeatureConfig, FeatureSource};
use fcfuzzy::metaheuristics::{MetaheuristicKind, MetaheuristicSpec};
use fcfuzzy::pipeline::{
    evaluate_method, load_config, run_pipeline, validate_config, ClassifierConfig, DataConfig,
    EvalConfig, Method, OutputConfig, PipelineConfig,
};

fn small_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_per_class: [10, 10, 10],
        roi_count: 12,
        timepoints: 120,
        class_blocks: ClassBlocks {
            hc: vec![Block::range(0, 4, 0.8)],
            sz: vec![Block::range(4, 8, 0.8)],
            adhd: vec![Block::range(8, 12, 0.8)],
        },
        noise_sigma: 1.0,
        seed,
    }
}

fn knn_config(out: &Path) -> PipelineConfig {
    PipelineConfig {
        data: DataConfig {
            synthetic: Some(small_spec(4)),
            ..Default::default()
        },
        autoencoder: AutoencoderConfig::default(),
        features: FeatureConfig {
            source: FeatureSource::RawUpperTriangle,
            ..Default::default()
        },
        classifier: ClassifierConfig {
            method: Method::Knn,
            knn_k: 1,
            ..Default::default()
        },
        eval: EvalConfig {
            k: 10,
            seed: 1,
            ..Default::default()
        },
        output: OutputConfig {
            dir: out.to_path_buf(),
        },
    }
}

fn report_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push((
                    p.strip_prefix(root).unwrap().to_string_lossy().into_owned(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files);
    files.sort();
    files
}

#[test]
fn synthetic_knn_run_writes_reports_and_reruns_from_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = knn_config(&tmp.path().join("out"));
    let first = run_pipeline(&cfg).unwrap();
    assert!(first.stages.iter().all(|s| !s.cached));
    let names: Vec<&str> = first.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["dataset", "connectivity", "evaluate", "control"]);
    let m = first.report.mean;
    for v in [m.accuracy, m.precision, m.recall, m.f1] {
        assert!((0.0..=1.0).contains(&v));
    }
    assert!(
        m.accuracy >= 0.95,
        "separable data, knn k=1: {}",
        m.accuracy
    );
    let report_dir = tmp.path().join("out/report");
    assert!(report_dir.join("report.csv").exists());
    let before = report_files(&report_dir);

    let second = run_pipeline(&cfg).unwrap();
    assert!(second.stages.iter().all(|s| s.cached));
    assert_eq!(report_files(&report_dir), before);
    assert!(!tmp.path().join("out/.fcfuzzy.lock").exists());
}

#[test]
fn cached_and_fresh_artifacts_are_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run_pipeline(&knn_config(&tmp.path().join("a"))).unwrap();
    let b = run_pipeline(&knn_config(&tmp.path().join("b"))).unwrap();
    for (sa, sb) in a.stages.iter().zip(&b.stages) {
        assert_eq!(sa.key, sb.key);
        assert_eq!(
            report_files(&sa.path),
            report_files(&sb.path),
            "stage {}",
            sa.name
        );
    }
}

#[test]
fn changing_a_downstream_setting_reuses_upstream_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = knn_config(&tmp.path().join("out"));
    run_pipeline(&cfg).unwrap();
    cfg.classifier.knn_k = 3;
    let again = run_pipeline(&cfg).unwrap();
    let cached: Vec<bool> = again.stages.iter().map(|s| s.cached).collect();
    assert_eq!(cached, [true, true, false, true]);
}

#[test]
fn stage_failure_names_the_stage_and_last_good_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = knn_config(&tmp.path().join("out"));
    cfg.features.source = FeatureSource::CnnAe;
    cfg.autoencoder.input_size = 16;
    cfg.autoencoder.pretrain.epochs = 0;
    cfg.autoencoder.finetune.epochs = 1;
    match run_pipeline(&cfg).unwrap_err() {
        Error::Stage {
            stage, last_good, ..
        } => {
            assert_eq!(stage, "evaluate");
            assert!(last_good.contains("connectivity-"), "{last_good}");
        }
        e => panic!("unexpected error {e}"),
    }
    assert!(!tmp.path().join("out/.fcfuzzy.lock").exists());
}

#[test]
fn locked_output_directory_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join(".fcfuzzy.lock"), "123").unwrap();
    assert!(matches!(
        run_pipeline(&knn_config(&out)),
        Err(Error::Config(_))
    ));
}

#[test]
fn validate_config_examples() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("c.toml");
    fs::write(&p, "").unwrap();
    let keys: Vec<String> = validate_config(&p)
        .unwrap()
        .into_iter()
        .map(|d| d.key)
        .collect();
    assert_eq!(keys, ["data", "output.dir"]);

    fs::write(
        &p,
        "[data]\ndemo_seed = 1\n[eval]\nk = 0\n[output]\ndir = \"o\"\n",
    )
    .unwrap();
    let d = validate_config(&p).unwrap();
    assert_eq!(d.len(), 1);
    assert_eq!(d[0].key, "eval.k");

    fs::write(
        &p,
        "[data]\ndemo_seed = 1\n[output]\ndir = \"o\"\n[classifier]\nmethod = \"knn\"\n",
    )
    .unwrap();
    assert!(validate_config(&p).unwrap().is_empty());
    let cfg = load_config(&p).unwrap();
    assert_eq!(cfg.output.dir, tmp.path().join("o"));

    fs::write(&p, "[data\n").unwrap();
    assert!(matches!(validate_config(&p), Err(Error::Parse { .. })));

    let demo = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/demo.toml");
    assert!(validate_config(&demo).unwrap().is_empty());
}

fn balanced_labels(n: usize) -> Vec<ClassLabel> {
    (0..3 * n).map(|i| ClassLabel::ALL[i / n]).collect()
}

#[test]
fn constant_predictor_on_balanced_data_is_at_chance() {
    let labels = balanced_labels(30);
    let plan = make_folds(&labels, 10, 0).unwrap();
    let r = cross_validate("hc", &labels, &plan, 0, Averaging::Macro, |inp| {
        Ok(FoldOutput {
            predictions: vec![ClassLabel::HC; inp.test.len()],
            extractor_fit: None,
        })
    })
    .unwrap();
    assert!((r.mean.accuracy - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn extractor_fitted_on_test_subjects_is_rejected() {
    let labels = balanced_labels(10);
    let plan = make_folds(&labels, 5, 0).unwrap();
    let err = cross_validate("leaky", &labels, &plan, 0, Averaging::Macro, |inp| {
        let mut seen = inp.train.to_vec();
        seen.push(inp.test[0]);
        Ok(FoldOutput {
            predictions: vec![ClassLabel::HC; inp.test.len()],
            extractor_fit: Some(seen),
        })
    });
    assert!(err.is_err());
}

#[test]
fn shuffled_labels_score_near_chance() {
    use rand::seq::SliceRandom;
    let spec = SyntheticSpec {
        n_per_class: [20, 20, 20],
        ..small_spec(9)
    };
    let recs = generate_synthetic(&spec).unwrap();
    let mats = connectivity_matrices(&recs).unwrap();
    let features = FeatureConfig {
        source: FeatureSource::RawUpperTriangle,
        ..Default::default()
    };
    let classifier = ClassifierConfig {
        method: Method::Knn,
        knn_k: 1,
        ..Default::default()
    };
    let mut total = 0.0;
    for seed in 0..5 {
        let mut labels: Vec<ClassLabel> = recs.iter().map(|r| r.label).collect();
        labels.shuffle(&mut fcfuzzy::rng::seeded(seed));
        let eval = EvalConfig {
            k: 5,
            seed,
            ..Default::default()
        };
        let r = evaluate_method(
            &mats,
            &labels,
            &features,
            &AutoencoderConfig::default(),
            &classifier,
            &eval,
            None,
        )
        .unwrap();
        assert!((0.0..=1.0).contains(&r.mean.accuracy));
        total += r.mean.accuracy;
    }
    let mean = total / 5.0;
    assert!((0.15..=0.50).contains(&mean), "{mean}");
}

#[test]
fn evaluation_is_reproducible() {
    let recs = generate_synthetic(&small_spec(2)).unwrap();
    let mats = connectivity_matrices(&recs).unwrap();
    let labels: Vec<ClassLabel> = recs.iter().map(|r| r.label).collect();
    let features = FeatureConfig {
        source: FeatureSource::RawUpperTriangle,
        ..Default::default()
    };
    let classifier = ClassifierConfig {
        optimizer: Some(MetaheuristicSpec {
            max_iter: 20,
            ..MetaheuristicSpec::defaults(MetaheuristicKind::Gwo)
        }),
        ..Default::default()
    };
    let eval = EvalConfig {
        k: 5,
        seed: 4,
        ..Default::default()
    };
    let run = || {
        evaluate_method(
            &mats,
            &labels,
            &features,
            &AutoencoderConfig::default(),
            &classifier,
            &eval,
            None,
        )
        .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.to_csv(), b.to_csv());
    assert_eq!(a.confusion_csv(), b.confusion_csv());
}
