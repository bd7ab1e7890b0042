//! One interface over every classifier the pipeline can train, plus a
//! self-describing model file that also carries the feature standardizer.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anfis::{fit_anfis_classifier, AnfisClassifier, AnfisConfig};
use crate::baselines::{knn_classify, knn_fit, mlp_fit, KnnModel, MlpConfig, MlpModel, DEFAULT_K};
use crate::data::{fmt_f64, ClassLabel};
use crate::error::{Error, Result};
use crate::features::Standardizer;
use crate::it2fr::{
    classify, fit_classifier, load_text, FitReport, It2frClassifier, It2frConfig, TextLines,
};
use crate::linalg::Matrix;
use crate::metaheuristics::MetaheuristicSpec;
use crate::nn::checkpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    It2fr,
    Anfis,
    Knn,
    Mlp,
    /// Always predicts the most frequent training class (a chance-level control).
    Constant,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::It2fr => "it2fr",
            Method::Anfis => "anfis",
            Method::Knn => "knn",
            Method::Mlp => "mlp",
            Method::Constant => "constant",
        }
    }

    pub fn uses_features(self) -> bool {
        self != Method::Constant
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "it2fr" => Ok(Self::It2fr),
            "anfis" => Ok(Self::Anfis),
            "knn" => Ok(Self::Knn),
            "mlp" => Ok(Self::Mlp),
            "constant" => Ok(Self::Constant),
            _ => Err(Error::invalid(format!(
                "unknown method `{s}` (expected it2fr, anfis, knn, mlp or constant)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub method: Method,
    /// Metaheuristic refinement for it2fr / anfis; absent means none.
    pub optimizer: Option<MetaheuristicSpec>,
    pub seed: u64,
    pub it2fr: It2frConfig,
    pub anfis: AnfisConfig,
    pub knn_k: usize,
    pub mlp: MlpConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            method: Method::It2fr,
            optimizer: None,
            seed: 0,
            it2fr: It2frConfig::default(),
            anfis: AnfisConfig::default(),
            knn_k: DEFAULT_K,
            mlp: MlpConfig::default(),
        }
    }
}

impl ClassifierConfig {
    /// Every range problem, as readable messages.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(spec) = &self.optimizer {
            if let Err(e) = spec.validate() {
                out.push(format!("classifier.optimizer: {e}"));
            }
            if !matches!(self.method, Method::It2fr | Method::Anfis) {
                out.push(format!(
                    "classifier.optimizer: method {} does not take an optimizer",
                    self.method.as_str()
                ));
            }
        }
        let it = &self.it2fr;
        if it.clusters == 0 {
            out.push("classifier.it2fr.clusters must be positive".into());
        }
        if !(0.0..1.0).contains(&it.fou_delta) {
            out.push(format!(
                "classifier.it2fr.fou_delta must lie in [0, 1), got {}",
                it.fou_delta
            ));
        }
        if !(it.ridge >= 0.0) {
            out.push(format!(
                "classifier.it2fr.ridge must be nonnegative, got {}",
                it.ridge
            ));
        }
        if !(it.fuzzifier > 1.0) {
            out.push(format!(
                "classifier.it2fr.fuzzifier must exceed 1, got {}",
                it.fuzzifier
            ));
        }
        let an = &self.anfis;
        if an.clusters == 0 {
            out.push("classifier.anfis.clusters must be positive".into());
        }
        if !(an.learning_rate >= 0.0) {
            out.push(format!(
                "classifier.anfis.learning_rate must be nonnegative, got {}",
                an.learning_rate
            ));
        }
        if !(an.fuzzifier > 1.0) {
            out.push(format!(
                "classifier.anfis.fuzzifier must exceed 1, got {}",
                an.fuzzifier
            ));
        }
        if self.knn_k == 0 {
            out.push("classifier.knn_k must be positive".into());
        }
        if self.mlp.hidden == 0 {
            out.push("classifier.mlp.hidden must be positive".into());
        }
        if let Err(e) = self.mlp.train.validate() {
            out.push(format!("classifier.mlp.train: {e}"));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub enum TrainedClassifier {
    It2fr(It2frClassifier),
    Anfis(AnfisClassifier),
    Knn(KnnModel),
    Mlp(MlpModel),
    Constant(ClassLabel),
}

/// Most frequent label; ties go to the lower class index.
pub fn majority_label(labels: &[ClassLabel]) -> ClassLabel {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    let best = (0..3).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
    ClassLabel::from_index(best).expect("three classes")
}

/// Trains `config.method`. The fuzzy methods also return their per-class fit report.
pub fn train(
    features: &Matrix,
    labels: &[ClassLabel],
    config: &ClassifierConfig,
    seed: u64,
) -> Result<(TrainedClassifier, Option<FitReport>)> {
    if features.rows() != labels.len() {
        return Err(Error::dim(format!(
            "{} feature rows, {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let seed = config.seed ^ seed;
    let opt = config.optimizer.as_ref();
    Ok(match config.method {
        Method::It2fr => {
            let (c, r) = fit_classifier(features, labels, &config.it2fr, opt, seed)?;
            (TrainedClassifier::It2fr(c), Some(r))
        }
        Method::Anfis => {
            let (c, r) = fit_anfis_classifier(features, labels, &config.anfis, opt, seed)?;
            (TrainedClassifier::Anfis(c), Some(r))
        }
        Method::Knn => (
            TrainedClassifier::Knn(knn_fit(features, labels, config.knn_k)?),
            None,
        ),
        Method::Mlp => {
            let cfg = MlpConfig {
                train: crate::nn::TrainConfig {
                    seed: config.mlp.train.seed ^ seed,
                    ..config.mlp.train.clone()
                },
                ..config.mlp.clone()
            };
            (
                TrainedClassifier::Mlp(mlp_fit(features, labels, &cfg)?.0),
                None,
            )
        }
        Method::Constant => (TrainedClassifier::Constant(majority_label(labels)), None),
    })
}

impl TrainedClassifier {
    pub fn method(&self) -> Method {
        match self {
            Self::It2fr(_) => Method::It2fr,
            Self::Anfis(_) => Method::Anfis,
            Self::Knn(_) => Method::Knn,
            Self::Mlp(_) => Method::Mlp,
            Self::Constant(_) => Method::Constant,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassLabel> {
        match self {
            Self::It2fr(c) => Ok(classify(c, x)?.0),
            Self::Anfis(c) => Ok(c.classify(x)?.0),
            Self::Knn(m) => knn_classify(m, x),
            Self::Mlp(m) => m.classify(x),
            Self::Constant(l) => Ok(*l),
        }
    }

    pub fn predict_all(&self, x: &Matrix) -> Result<Vec<ClassLabel>> {
        x.iter_rows().map(|r| self.predict(r)).collect()
    }

    fn payload(&self) -> String {
        match self {
            Self::It2fr(c) => c.to_text(),
            Self::Anfis(c) => c.to_text(),
            Self::Knn(m) => {
                let mut s = format!(
                    "knn 1\nk {} n {} dim {}\n",
                    m.k,
                    m.labels.len(),
                    m.features.cols()
                );
                for (row, l) in m.features.iter_rows().zip(&m.labels) {
                    let v: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
                    writeln!(s, "{l} {}", v.join(" ")).unwrap();
                }
                s
            }
            Self::Mlp(m) => format!("mlp 1\n{}\n", hex::encode(checkpoint::encode(&m.net))),
            Self::Constant(l) => format!("constant {l}\n"),
        }
    }
}

/// A trained classifier together with the standardizer its inputs need.
#[derive(Debug, Clone)]
pub struct ModelFile {
    pub standardizer: Standardizer,
    pub classifier: TrainedClassifier,
}

impl ModelFile {
    pub fn predict(&self, x: &[f64]) -> Result<ClassLabel> {
        let z = self.standardizer.apply(&Matrix::from_rows(&[x])?)?;
        self.classifier.predict(z.row(0))
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|&x| fmt_f64(x)).collect::<Vec<_>>().join(" ");
        format!(
            "fcfuzzy-model 1\nmethod {}\nmean {}\nscale {}\n{}",
            self.classifier.method().as_str(),
            join(&self.standardizer.mean),
            join(&self.standardizer.scale),
            self.classifier.payload()
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = TextLines::new(text);
        if lines.next_fields()? != ["fcfuzzy-model", "1"] {
            return Err(lines.err("expected `fcfuzzy-model 1`".into()));
        }
        let f = lines.next_fields()?;
        if f.len() != 2 || f[0] != "method" {
            return Err(lines.err("expected `method <name>`".into()));
        }
        let method: Method = lines.parse(f[1])?;
        let mut vector = |name: &str| -> Result<Vec<f64>> {
            let f = lines.next_fields()?;
            if f.first() != Some(&name) {
                return Err(lines.err(format!("expected `{name}` line")));
            }
            f[1..].iter().map(|v| lines.parse(v)).collect()
        };
        let mean = vector("mean")?;
        let scale = vector("scale")?;
        if mean.len() != scale.len() || scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid(
                "standardizer mean/scale lines are inconsistent",
            ));
        }
        let rest: String = text.lines().skip(4).map(|l| format!("{l}\n")).collect();
        let classifier = match method {
            Method::It2fr => TrainedClassifier::It2fr(It2frClassifier::from_text(&rest)?),
            Method::Anfis => TrainedClassifier::Anfis(AnfisClassifier::from_text(&rest)?),
            Method::Knn => TrainedClassifier::Knn(parse_knn(&rest)?),
            Method::Mlp => {
                let mut l = TextLines::new(&rest);
                if l.next_fields()? != ["mlp", "1"] {
                    return Err(l.err("expected `mlp 1`".into()));
                }
                let f = l.next_fields()?;
                let bytes = hex::decode(f.first().copied().unwrap_or(""))
                    .map_err(|e| l.err(e.to_string()))?;
                let net = checkpoint::decode(&bytes).map_err(|e| match e {
                    Error::Parse { msg, .. } => l.err(msg),
                    e => e,
                })?;
                TrainedClassifier::Mlp(MlpModel { net })
            }
            Method::Constant => {
                let mut l = TextLines::new(&rest);
                let f = l.next_fields()?;
                if f.len() != 2 || f[0] != "constant" {
                    return Err(l.err("expected `constant <label>`".into()));
                }
                TrainedClassifier::Constant(l.parse(f[1])?)
            }
        };
        Ok(Self {
            standardizer: Standardizer { mean, scale },
            classifier,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_text(path, Self::from_text)
    }
}

fn parse_knn(text: &str) -> Result<KnnModel> {
    let mut l = TextLines::new(text);
    if l.next_fields()? != ["knn", "1"] {
        return Err(l.err("expected `knn 1`".into()));
    }
    let h = l.next_fields()?;
    if h.len() != 6 || h[0] != "k" || h[2] != "n" || h[4] != "dim" {
        return Err(l.err("expected `k K n N dim D`".into()));
    }
    let (k, n, d): (usize, usize, usize) = (l.parse(h[1])?, l.parse(h[3])?, l.parse(h[5])?);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let f = l.next_fields()?;
        if f.len() != d + 1 {
            return Err(l.err(format!("expected a label and {d} values")));
        }
        labels.push(l.parse(f[0])?);
        rows.push(
            f[1..]
                .iter()
                .map(|v| l.parse(v))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    knn_fit(&Matrix::from_rows(&rows)?, &labels, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metaheuristics::MetaheuristicKind;
    use crate::rng;
    use rand::Rng as _;

    fn blobs() -> (Matrix, Vec<ClassLabel>) {
        let mut r = rng::seeded(11);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for _ in 0..12 {
                let mut v: Vec<f64> = (0..3).map(|_| r.random_range(-0.3..0.3)).collect();
                v[c] += 3.0;
                rows.push(v);
                labels.push(ClassLabel::from_index(c).unwrap());
            }
        }
        (Matrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn every_method_round_trips_through_a_model_file() {
        let (x, y) = blobs();
        let st = Standardizer::fit(&x);
        let z = st.apply(&x).unwrap();
        for method in [
            Method::It2fr,
            Method::Anfis,
            Method::Knn,
            Method::Mlp,
            Method::Constant,
        ] {
            let mut cfg = ClassifierConfig {
                method,
                ..Default::default()
            };
            cfg.mlp.hidden = 8;
            cfg.mlp.train.epochs = 5;
            let (c, _) = train(&z, &y, &cfg, 1).unwrap();
            let file = ModelFile {
                standardizer: st.clone(),
                classifier: c,
            };
            let back = ModelFile::from_text(&file.to_text()).unwrap();
            assert_eq!(back.classifier.method(), method);
            for row in x.iter_rows() {
                assert_eq!(
                    back.predict(row).unwrap(),
                    file.predict(row).unwrap(),
                    "{method:?}"
                );
            }
        }
    }

    #[test]
    fn diagnostics_catch_bad_ranges() {
        let mut cfg = ClassifierConfig::default();
        assert!(cfg.diagnostics().is_empty());
        cfg.it2fr.fou_delta = 1.5;
        cfg.knn_k = 0;
        cfg.method = Method::Knn;
        cfg.optimizer = Some(MetaheuristicSpec::defaults(MetaheuristicKind::Gwo));
        assert_eq!(cfg.diagnostics().len(), 3);
    }

    #[test]
    fn majority_prefers_lower_index_on_ties() {
        assert_eq!(
            majority_label(&[ClassLabel::SZ, ClassLabel::ADHD]),
            ClassLabel::SZ
        );
        assert_eq!(
            majority_label(&[ClassLabel::ADHD, ClassLabel::ADHD, ClassLabel::HC]),
            ClassLabel::ADHD
        );
    }
}
