//! Interval type-2 fuzzy regression (IT2FR).
//!
//! One rule per FCM cluster. Rule r has interval Gaussian antecedents and a linear
//! consequent `y_r = a0 + Σ a_j x_j`. Firing intervals are product t-norms of the
//! lower and upper memberships; each bound is normalized over the rules, the two
//! weighted sums of `y_r` give the interval endpoints, and the crisp output is
//! their midpoint.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{fmt_f64, ClassLabel};
use crate::error::{Error, Result};
use crate::fcm::{derive_mfs, fcm_cluster, FcmConfig, FcmResult, IT2GaussianMF};
use crate::linalg::{weighted_ridge, Matrix};
use crate::metaheuristics::{self, MetaheuristicSpec, ObjectiveSpec};
use crate::ovr;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyRule {
    pub antecedents: Vec<IT2GaussianMF>,
    /// `[a0, a1, ..., ad]`; a0 stays 0 in no-bias models.
    pub coefficients: Vec<f64>,
}

impl FuzzyRule {
    pub fn output(&self, x: &[f64]) -> f64 {
        linear_output(&self.coefficients, x)
    }

    /// `(ln f_lower, ln f_upper)`.
    pub fn log_firing(&self, x: &[f64]) -> (f64, f64) {
        let mut lo = 0.0;
        let mut up = 0.0;
        for (mf, &xj) in self.antecedents.iter().zip(x) {
            lo += mf.lower().log_eval(xj);
            up += mf.upper().log_eval(xj);
        }
        (lo, up)
    }
}

pub(crate) fn linear_output(coefficients: &[f64], x: &[f64]) -> f64 {
    let mut y = coefficients[0];
    for (a, xj) in coefficients[1..].iter().zip(x) {
        y += a * xj;
    }
    y
}

/// Normalizes log-domain weights: `exp(l_r) / Σ exp(l_j)`, computed relative to
/// the largest weight. Falls back to uniform weights (with a warning) when every
/// weight is zero or undefined.
pub(crate) fn normalize_log(log_w: &[f64]) -> Vec<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        log::warn!("all rule firings underflowed; using uniform weights");
        return vec![1.0 / log_w.len() as f64; log_w.len()];
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn check_dim(d: usize, x: &[f64]) -> Result<()> {
    if x.len() != d {
        return Err(Error::dim(format!(
            "model expects {d} features, got {}",
            x.len()
        )));
    }
    Ok(())
}

/// `(f_lower, f_upper)` of one rule: products of the lower and upper memberships.
pub fn firing_interval(rule: &FuzzyRule, x: &[f64]) -> Result<(f64, f64)> {
    check_dim(rule.antecedents.len(), x)?;
    let (lo, up) = rule.log_firing(x);
    Ok((lo.exp(), up.exp()))
}

/// Normalizes each bound of the firing intervals to sum to one.
///
/// If a bound's total underflows to zero its weights become uniform `1/M`.
pub fn normalized_strengths(firings: &[(f64, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    if firings.is_empty() {
        return Err(Error::invalid("no rules to normalize"));
    }
    if firings.iter().any(|&(l, u)| !(l >= 0.0 && u >= 0.0)) {
        return Err(Error::invalid("firing strengths must be nonnegative"));
    }
    let norm = |v: Vec<f64>| {
        let s: f64 = v.iter().sum();
        if s > 0.0 && s.is_finite() {
            v.into_iter().map(|x| x / s).collect()
        } else {
            log::warn!("total firing underflowed; using uniform weights");
            vec![1.0 / v.len() as f64; v.len()]
        }
    };
    Ok((
        norm(firings.iter().map(|f| f.0).collect()),
        norm(firings.iter().map(|f| f.1).collect()),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypeReducedOutput {
    pub y_left: f64,
    pub y_right: f64,
    pub y_star: f64,
}

/// Interval endpoints `Σ h_lower·y` and `Σ h_upper·y` (ordered) and their midpoint.
pub fn type_reduce(y: &[f64], h_lower: &[f64], h_upper: &[f64]) -> TypeReducedOutput {
    let a: f64 = h_lower.iter().zip(y).map(|(h, v)| h * v).sum();
    let b: f64 = h_upper.iter().zip(y).map(|(h, v)| h * v).sum();
    let (y_left, y_right) = if a <= b { (a, b) } else { (b, a) };
    TypeReducedOutput {
        y_left,
        y_right,
        y_star: (y_left + y_right) / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct It2frModel {
    pub rules: Vec<FuzzyRule>,
    pub feature_dim: usize,
    /// FOU spread the antecedents were derived with (informational once trained).
    pub fou_delta: f64,
    pub bias: bool,
}

impl It2frModel {
    pub fn new(rules: Vec<FuzzyRule>, fou_delta: f64, bias: bool) -> Result<Self> {
        let Some(first) = rules.first() else {
            return Err(Error::invalid("a model needs at least one rule"));
        };
        let d = first.antecedents.len();
        for (r, rule) in rules.iter().enumerate() {
            if rule.antecedents.len() != d || rule.coefficients.len() != d + 1 {
                return Err(Error::dim(format!(
                    "rule {r} has {} antecedents and {} coefficients for d = {d}",
                    rule.antecedents.len(),
                    rule.coefficients.len()
                )));
            }
        }
        Ok(Self {
            rules,
            feature_dim: d,
            fou_delta,
            bias,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<TypeReducedOutput> {
        check_dim(self.feature_dim, x)?;
        let (lo, up): (Vec<f64>, Vec<f64>) = self.rules.iter().map(|r| r.log_firing(x)).unzip();
        let y: Vec<f64> = self.rules.iter().map(|r| r.output(x)).collect();
        Ok(type_reduce(&y, &normalize_log(&lo), &normalize_log(&up)))
    }

    /// Per-rule normalized lower and upper strengths at `x`.
    pub fn strengths(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_dim(self.feature_dim, x)?;
        let (lo, up): (Vec<f64>, Vec<f64>) = self.rules.iter().map(|r| r.log_firing(x)).unzip();
        Ok((normalize_log(&lo), normalize_log(&up)))
    }

    pub fn predict_all(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.iter_rows()
            .map(|row| self.predict(row).map(|o| o.y_star))
            .collect()
    }

    /// Flattened parameters: all means, all sigma1, all sigma2 (rule-major), then
    /// the coefficients (without a0 in no-bias models).
    pub fn theta(&self) -> Vec<f64> {
        let mfs = || self.rules.iter().flat_map(|r| r.antecedents.iter());
        let mut t: Vec<f64> = mfs().map(|m| m.mean).collect();
        t.extend(mfs().map(|m| m.sigma1));
        t.extend(mfs().map(|m| m.sigma2));
        let skip = usize::from(!self.bias);
        for r in &self.rules {
            t.extend(&r.coefficients[skip..]);
        }
        t
    }

    /// Inverse of [`It2frModel::theta`]. Each sigma pair is ordered so the lower
    /// membership uses the smaller width.
    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        let (m, d) = (self.rules.len(), self.feature_dim);
        let nc = if self.bias { d + 1 } else { d };
        if theta.len() != 3 * m * d + m * nc {
            return Err(Error::dim(format!(
                "theta has {} entries, model needs {}",
                theta.len(),
                3 * m * d + m * nc
            )));
        }
        let (means, rest) = theta.split_at(m * d);
        let (s1, rest) = rest.split_at(m * d);
        let (s2, coefs) = rest.split_at(m * d);
        let rules = (0..m)
            .map(|r| {
                let antecedents = (0..d)
                    .map(|j| {
                        let k = r * d + j;
                        IT2GaussianMF::new(means[k], s1[k].min(s2[k]), s1[k].max(s2[k]))
                    })
                    .collect::<Result<_>>()?;
                let mut coefficients = Vec::with_capacity(d + 1);
                if !self.bias {
                    coefficients.push(0.0);
                }
                coefficients.extend(&coefs[r * nc..(r + 1) * nc]);
                Ok(FuzzyRule {
                    antecedents,
                    coefficients,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(rules, self.fou_delta, self.bias)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "it2fr 1").unwrap();
        writeln!(
            s,
            "rules {} dim {} fou_delta {} bias {}",
            self.rules.len(),
            self.feature_dim,
            fmt_f64(self.fou_delta),
            self.bias
        )
        .unwrap();
        for r in &self.rules {
            for mf in &r.antecedents {
                writeln!(
                    s,
                    "mf {} {} {}",
                    fmt_f64(mf.mean),
                    fmt_f64(mf.sigma1),
                    fmt_f64(mf.sigma2)
                )
                .unwrap();
            }
            let coefs: Vec<String> = r.coefficients.iter().map(|&v| fmt_f64(v)).collect();
            writeln!(s, "coef {}", coefs.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = TextLines::new(text);
        Self::read_from(&mut lines)
    }

    fn read_from(lines: &mut TextLines) -> Result<Self> {
        let header = lines.next_fields()?;
        if header != ["it2fr", "1"] {
            return Err(lines.err(format!("expected `it2fr 1`, found `{}`", header.join(" "))));
        }
        let h = lines.next_fields()?;
        if h.len() != 8 || h[0] != "rules" || h[2] != "dim" || h[4] != "fou_delta" || h[6] != "bias"
        {
            return Err(lines.err("malformed model header".into()));
        }
        let m: usize = lines.parse(h[1])?;
        let d: usize = lines.parse(h[3])?;
        let fou_delta: f64 = lines.parse(h[5])?;
        let bias: bool = lines.parse(h[7])?;
        let mut rules = Vec::with_capacity(m);
        for _ in 0..m {
            let mut antecedents = Vec::with_capacity(d);
            for _ in 0..d {
                let f = lines.next_fields()?;
                if f.len() != 4 || f[0] != "mf" {
                    return Err(lines.err("expected `mf mean sigma1 sigma2`".into()));
                }
                let mf =
                    IT2GaussianMF::new(lines.parse(f[1])?, lines.parse(f[2])?, lines.parse(f[3])?)
                        .map_err(|e| lines.err(e.to_string()))?;
                antecedents.push(mf);
            }
            let f = lines.next_fields()?;
            if f.len() != d + 2 || f[0] != "coef" {
                return Err(lines.err(format!("expected `coef` with {} values", d + 1)));
            }
            let coefficients = f[1..]
                .iter()
                .map(|v| lines.parse(v))
                .collect::<Result<_>>()?;
            rules.push(FuzzyRule {
                antecedents,
                coefficients,
            });
        }
        Self::new(rules, fou_delta, bias)
    }
}

/// Reads `path` and parses it, attributing parse errors to the file.
pub(crate) fn load_text<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T>) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        },
        e => e,
    })
}

pub(crate) struct TextLines<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> TextLines<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        Self {
            lines: text.lines().enumerate(),
            line: 0,
        }
    }

    pub(crate) fn next_fields(&mut self) -> Result<Vec<&'a str>> {
        for (i, l) in self.lines.by_ref() {
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Ok(l.split_whitespace().collect());
            }
        }
        Err(self.err("unexpected end of model text".into()))
    }

    pub(crate) fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        s.parse()
            .map_err(|e: T::Err| self.err(format!("`{s}`: {e}")))
    }

    pub(crate) fn err(&self, msg: String) -> Error {
        Error::Parse {
            path: "<model>".into(),
            line: self.line,
            msg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct It2frConfig {
    pub clusters: usize,
    pub fou_delta: f64,
    pub ridge: f64,
    pub bias: bool,
    pub fuzzifier: f64,
    pub fcm_tol: f64,
    pub fcm_max_iter: usize,
}

impl Default for It2frConfig {
    fn default() -> Self {
        let f = FcmConfig::default();
        Self {
            clusters: f.clusters,
            fou_delta: 0.2,
            ridge: 1e-6,
            bias: true,
            fuzzifier: f.fuzzifier,
            fcm_tol: f.tol,
            fcm_max_iter: f.max_iter,
        }
    }
}

impl It2frConfig {
    pub fn fcm(&self) -> FcmConfig {
        FcmConfig {
            clusters: self.clusters,
            fuzzifier: self.fuzzifier,
            tol: self.fcm_tol,
            max_iter: self.fcm_max_iter,
        }
    }
}

/// Rule consequents by membership-weighted ridge least squares, one rule at a time.
pub(crate) fn fit_consequents(
    features: &Matrix,
    targets: &[f64],
    memberships: &Matrix,
    ridge: f64,
    bias: bool,
) -> Result<Vec<Vec<f64>>> {
    let (n, d) = (features.rows(), features.cols());
    let design = if bias {
        let mut m = Matrix::zeros(n, d + 1);
        for i in 0..n {
            let row = m.row_mut(i);
            row[0] = 1.0;
            row[1..].copy_from_slice(features.row(i));
        }
        m
    } else {
        features.clone()
    };
    (0..memberships.cols())
        .map(|r| {
            let w: Vec<f64> = (0..n).map(|i| memberships.get(i, r)).collect();
            let beta = weighted_ridge(&design, targets, Some(&w), ridge).ok_or_else(|| {
                Error::Numerical(format!(
                    "rule {r}: weighted least-squares normal equations are singular"
                ))
            })?;
            Ok(if bias {
                beta
            } else {
                std::iter::once(0.0).chain(beta).collect()
            })
        })
        .collect()
}

pub(crate) fn check_training_set(
    features: &Matrix,
    targets: &[f64],
    clusters: usize,
) -> Result<()> {
    if features.rows() != targets.len() {
        return Err(Error::dim(format!(
            "{} samples, {} targets",
            features.rows(),
            targets.len()
        )));
    }
    if features.rows() == 0 || features.rows() < clusters {
        return Err(Error::invalid(format!(
            "need at least as many samples as rules (N={}, M={clusters})",
            features.rows()
        )));
    }
    if !features.is_finite() || targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("training data contains non-finite values"));
    }
    Ok(())
}

fn assemble(
    mfs: Vec<Vec<IT2GaussianMF>>,
    coefs: Vec<Vec<f64>>,
    config: &It2frConfig,
) -> Result<It2frModel> {
    let rules = mfs
        .into_iter()
        .zip(coefs)
        .map(|(antecedents, coefficients)| FuzzyRule {
            antecedents,
            coefficients,
        })
        .collect();
    It2frModel::new(rules, config.fou_delta, config.bias)
}

/// FCM antecedents plus weighted least-squares consequents.
pub fn fit_init(
    features: &Matrix,
    targets: &[f64],
    config: &It2frConfig,
    seed: u64,
) -> Result<It2frModel> {
    check_training_set(features, targets, config.clusters)?;
    let fcm = fcm_cluster(features, &config.fcm(), seed)?;
    fit_init_from(features, targets, &fcm, config)
}

fn fit_init_from(
    features: &Matrix,
    targets: &[f64],
    fcm: &FcmResult,
    config: &It2frConfig,
) -> Result<It2frModel> {
    let mfs = derive_mfs(fcm, features, config.fou_delta)?;
    let coefs = fit_consequents(
        features,
        targets,
        &fcm.memberships,
        config.ridge,
        config.bias,
    )?;
    assemble(mfs, coefs, config)
}

/// Search box for fuzzy-model parameters.
///
/// Means span the global feature range, widths `[1e-6·range_j, 2·range_j]` of
/// their dimension, coefficients `±10·(|init| + 1)`.
pub(crate) fn fuzzy_bounds(
    features: &Matrix,
    m: usize,
    width_blocks: usize,
    coefs: &[f64],
) -> Vec<(f64, f64)> {
    let d = features.cols();
    let (mut lo, mut hi) = features.min_max();
    if !(lo < hi) {
        lo -= 1.0;
        hi += 1.0;
    }
    let ranges: Vec<f64> = features
        .column_ranges()
        .iter()
        .map(|(a, b)| if b > a { b - a } else { 1.0 })
        .collect();
    let mut bounds = vec![(lo, hi); m * d];
    for _ in 0..width_blocks {
        for _ in 0..m {
            bounds.extend(ranges.iter().map(|r| (1e-6 * r, 2.0 * r)));
        }
    }
    bounds.extend(coefs.iter().map(|a| {
        let b = 10.0 * (a.abs() + 1.0);
        (-b, b)
    }));
    bounds
}

/// Refines `init` by minimizing the training MSE over its full parameter vector.
fn refine(
    init: &It2frModel,
    features: &Matrix,
    targets: &[f64],
    spec: &MetaheuristicSpec,
) -> Result<(It2frModel, metaheuristics::OptimResult)> {
    let theta0 = init.theta();
    let n_mf = 3 * init.rules.len() * init.feature_dim;
    let bounds = fuzzy_bounds(features, init.rules.len(), 2, &theta0[n_mf..]);
    let objective = ObjectiveSpec::new(bounds, |theta: &[f64]| {
        match init.with_theta(theta).and_then(|m| m.predict_all(features)) {
            Ok(y) => metaheuristics::mse(targets, &y).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    })?
    .with_start(theta0)?;
    let result = metaheuristics::minimize(&objective, spec)?;
    Ok((init.with_theta(&result.best)?, result))
}

/// Per-class training errors of a fitted classifier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub init_rmse: [f64; 3],
    pub final_rmse: [f64; 3],
    /// Best-so-far objective (MSE) per optimizer iteration, per class.
    pub histories: [Vec<f64>; 3],
}

/// Three one-vs-rest IT2FR models, indexed by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct It2frClassifier {
    pub models: Vec<It2frModel>,
}

impl It2frClassifier {
    pub fn new(models: Vec<It2frModel>) -> Result<Self> {
        if models.len() != ClassLabel::COUNT {
            return Err(Error::invalid(format!(
                "expected 3 models, got {}",
                models.len()
            )));
        }
        let (d, m) = (models[0].feature_dim, models[0].rules.len());
        if models
            .iter()
            .any(|x| x.feature_dim != d || x.rules.len() != m)
        {
            return Err(Error::dim(
                "one-vs-rest models disagree on dimension or rule count",
            ));
        }
        Ok(Self { models })
    }

    pub fn feature_dim(&self) -> usize {
        self.models[0].feature_dim
    }

    pub fn scores(&self, x: &[f64]) -> Result<[f64; 3]> {
        let mut s = [0.0; 3];
        for (v, m) in s.iter_mut().zip(&self.models) {
            *v = m.predict(x)?.y_star;
        }
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("it2fr-classifier 1\n");
        for (c, m) in ClassLabel::ALL.iter().zip(&self.models) {
            writeln!(s, "class {c}").unwrap();
            s.push_str(&m.to_text());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = TextLines::new(text);
        if lines.next_fields()? != ["it2fr-classifier", "1"] {
            return Err(lines.err("expected `it2fr-classifier 1`".into()));
        }
        let mut models = Vec::new();
        for c in ClassLabel::ALL {
            let f = lines.next_fields()?;
            if f != ["class", c.as_str()] {
                return Err(lines.err(format!("expected `class {c}`")));
            }
            models.push(It2frModel::read_from(&mut lines)?);
        }
        Self::new(models)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_text(path, Self::from_text)
    }
}

/// Fits the three one-vs-rest models (targets 1 for the class, 0 otherwise).
///
/// FCM runs once on the features and is shared by all three models. With an
/// optimizer, each model's parameters are refined from its initialization, which
/// is part of the starting population; if the search does not produce a finite
/// score the initialization is kept and a warning is logged.
pub fn fit_classifier(
    features: &Matrix,
    labels: &[ClassLabel],
    config: &It2frConfig,
    optimizer: Option<&MetaheuristicSpec>,
    seed: u64,
) -> Result<(It2frClassifier, FitReport)> {
    ovr::require_all_classes(labels)?;
    check_training_set(
        features,
        &ovr::binary_targets(labels, ClassLabel::HC),
        config.clusters,
    )?;
    let fcm = fcm_cluster(features, &config.fcm(), seed)?;
    let fitted = ovr::fit_per_class(labels, |class, targets| {
        let init = fit_init_from(features, targets, &fcm, config)?;
        let init_rmse = metaheuristics::rmse(targets, &init.predict_all(features)?)?;
        let Some(spec) = optimizer else {
            return Ok((init, init_rmse, init_rmse, Vec::new()));
        };
        let spec = MetaheuristicSpec {
            seed: rng::derive_seed(spec.seed ^ seed, class.index() as u64),
            ..spec.clone()
        };
        let (model, result) = refine(&init, features, targets, &spec)?;
        if !result.best_score.is_finite() {
            log::warn!(
                "{} optimizer for class {class} diverged; keeping the initial model",
                spec.kind.as_str()
            );
            return Ok((init, init_rmse, init_rmse, result.history));
        }
        let final_rmse = result.best_score.sqrt();
        Ok((model, init_rmse, final_rmse, result.history))
    })?;
    let mut models = Vec::new();
    let mut report = FitReport {
        init_rmse: [0.0; 3],
        final_rmse: [0.0; 3],
        histories: Default::default(),
    };
    for (k, (m, a, b, h)) in fitted.into_iter().enumerate() {
        models.push(m);
        report.init_rmse[k] = a;
        report.final_rmse[k] = b;
        report.histories[k] = h;
    }
    Ok((It2frClassifier::new(models)?, report))
}

/// Predicted class (argmax of the three crisp outputs, ties to the lowest index)
/// and the scores.
pub fn classify(classifier: &It2frClassifier, x: &[f64]) -> Result<(ClassLabel, [f64; 3])> {
    let s = classifier.scores(x)?;
    Ok((ovr::argmax_label(&s), s))
}
