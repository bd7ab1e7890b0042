use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn fcfuzzy(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcfuzzy"))
        .args(args)
        .current_dir(cwd)
        .env_remove("FCFUZZY_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL_SPEC: &str = r#"
n_per_class = [8, 8, 8]
roi_count = 12
timepoints = 80
noise_sigma = 1.0
seed = 5
[[class_blocks.HC]]
rois = [0, 1, 2, 3]
target = 0.8
[[class_blocks.SZ]]
rois = [4, 5, 6, 7]
target = 0.8
[[class_blocks.ADHD]]
rois = [8, 9, 10, 11]
target = 0.8
"#;

fn small_run_config(dir: &Path) -> std::path::PathBuf {
    let spec = SMALL_SPEC.replace("\n[[", "\n[[data.synthetic.").replacen(
        "\nn_per",
        "\n[data.synthetic]\nn_per",
        1,
    );
    let text = format!(
        "{spec}\n[features]\nsource = \"raw_upper_triangle\"\n[classifier]\nmethod = \"knn\"\nknn_k = 1\n[eval]\nk = 4\nseed = 2\n[output]\ndir = \"out\"\n"
    );
    let p = dir.join("run.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn validate_reports_required_keys_and_ranges() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.toml"), "").unwrap();
    let o = fcfuzzy(&["validate", "empty.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(
        text.contains("data:") && text.contains("output.dir:"),
        "{text}"
    );

    fs::write(
        dir.path().join("k0.toml"),
        "[data]\ndemo_seed = 1\n[eval]\nk = 0\n[output]\ndir = \"o\"\n",
    )
    .unwrap();
    let o = fcfuzzy(&["validate", "k0.toml"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("eval.k"));

    fs::write(dir.path().join("bad.toml"), "[data\n").unwrap();
    assert_eq!(
        fcfuzzy(&["validate", "bad.toml"], dir.path()).status.code(),
        Some(1)
    );
}

#[test]
fn shipped_demo_config_is_valid() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let o = fcfuzzy(&["validate", "configs/demo.toml"], &root);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn usage_errors_exit_1_and_runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(fcfuzzy(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(fcfuzzy(&["--help"], dir.path()).status.code(), Some(0));
    let o = fcfuzzy(
        &["connect", "--manifest", "missing.toml", "--out", "c"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = fcfuzzy(
        &[
            "fit-classifier",
            "--features",
            "f.csv",
            "--method",
            "knn",
            "--optimizer",
            "gwo",
            "--out",
            "m",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stats_chisq_on_the_sex_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = fcfuzzy(&["stats", "chisq", "29,23;38,12;21,19"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    let p: f64 = text.trim().rsplit("p = ").next().unwrap().parse().unwrap();
    assert!((0.02..=0.05).contains(&p), "{text}");
}

#[test]
fn stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("spec.toml"), SMALL_SPEC).unwrap();
    let ok = |args: &[&str]| {
        let o = fcfuzzy(args, d);
        assert!(
            o.status.success(),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        stdout(&o)
    };
    ok(&["synth", "--spec", "spec.toml", "--out", "data"]);
    ok(&[
        "connect",
        "--manifest",
        "data/manifest.toml",
        "--out",
        "conn",
        "--heatmaps",
    ]);
    assert!(d.join("conn/heatmaps/hc_000.ppm").exists());
    ok(&[
        "stats",
        "screen",
        "conn",
        "--alpha",
        "0.01",
        "--out",
        "edges.csv",
    ]);
    assert!(fs::read_to_string(d.join("edges.csv"))
        .unwrap()
        .starts_with("i,j,f_stat,p_value\n"));
    ok(&["extract", "--connectivity", "conn", "--out", "raw.csv"]);
    ok(&[
        "fit-classifier",
        "--features",
        "raw.csv",
        "--method",
        "it2fr",
        "--optimizer",
        "gwo",
        "--iters",
        "20",
        "--out",
        "model.txt",
    ]);
    let pred = ok(&["predict", "--model", "model.txt", "--features", "raw.csv"]);
    assert_eq!(pred.lines().count(), 25);
    let table = ok(&[
        "evaluate",
        "--connectivity",
        "conn",
        "--method",
        "knn",
        "--feature-source",
        "raw_upper_triangle",
        "--k",
        "4",
        "--out",
        "rep/report.csv",
    ]);
    assert!(table.contains("knn"));
    for f in [
        "report.csv",
        "report.txt",
        "report_confusion.csv",
        "report_confusion.ppm",
        "report.json",
    ] {
        assert!(d.join("rep").join(f).exists(), "{f}");
    }

    ok(&[
        "train-ae",
        "--connectivity",
        "conn",
        "--input-size",
        "12",
        "--epochs",
        "1",
        "--out",
        "ae.bin",
    ]);
    ok(&[
        "finetune",
        "--autoencoder",
        "ae.bin",
        "--connectivity",
        "conn",
        "--epochs",
        "1",
        "--out",
        "enc.bin",
    ]);
    ok(&[
        "extract",
        "--encoder",
        "enc.bin",
        "--connectivity",
        "conn",
        "--out",
        "ae.csv",
    ]);
    let header = fs::read_to_string(d.join("ae.csv")).unwrap();
    assert_eq!(header.lines().count(), 25);
}

#[test]
fn run_twice_hits_the_cache_and_reproduces_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_run_config(dir.path());
    let first = fcfuzzy(&["run", cfg.to_str().unwrap()], dir.path());
    assert!(
        first.status.success(),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let report = fs::read(dir.path().join("out/report/report.csv")).unwrap();
    assert!(stdout(&first).contains("built"));
    let second = fcfuzzy(&["run", cfg.to_str().unwrap()], dir.path());
    assert!(second.status.success());
    let text = stdout(&second);
    assert!(!text.contains("built") && text.contains("cached"), "{text}");
    assert_eq!(
        fs::read(dir.path().join("out/report/report.csv")).unwrap(),
        report
    );

    fs::write(dir.path().join("out/.fcfuzzy.lock"), "1").unwrap();
    assert_eq!(
        fcfuzzy(&["run", cfg.to_str().unwrap()], dir.path())
            .status
            .code(),
        Some(1)
    );
}
