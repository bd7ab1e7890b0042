//! First-order TSK fuzzy model (ANFIS) with FCM-initialized Gaussian premises.
//!
//! Training is either the hybrid scheme (global least squares for the
//! consequents alternating with gradient steps on the premises) or a
//! metaheuristic search over all parameters.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{fmt_f64, ClassLabel};
use crate::error::{Error, Result};
use crate::fcm::{derive_mfs, fcm_cluster, FcmConfig, FcmResult, GaussianMF, SIGMA_FLOOR};
use crate::it2fr::{
    check_training_set, fuzzy_bounds, linear_output, load_text, normalize_log, FitReport, TextLines,
};
use crate::linalg::{weighted_ridge, Matrix};
use crate::metaheuristics::{self, MetaheuristicSpec, ObjectiveSpec};
use crate::ovr;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnfisRule {
    pub premises: Vec<GaussianMF>,
    /// `[c0, c1, ..., cd]`.
    pub coefficients: Vec<f64>,
}

impl AnfisRule {
    pub fn log_firing(&self, x: &[f64]) -> f64 {
        let mut l = 0.0;
        for (mf, &xj) in self.premises.iter().zip(x) {
            l += mf.log_eval(xj);
        }
        l
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        linear_output(&self.coefficients, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnfisModel {
    pub rules: Vec<AnfisRule>,
    pub feature_dim: usize,
}

impl AnfisModel {
    pub fn new(rules: Vec<AnfisRule>) -> Result<Self> {
        let Some(first) = rules.first() else {
            return Err(Error::invalid("a model needs at least one rule"));
        };
        let d = first.premises.len();
        for (r, rule) in rules.iter().enumerate() {
            if rule.premises.len() != d || rule.coefficients.len() != d + 1 {
                return Err(Error::dim(format!(
                    "rule {r} has {} premises and {} coefficients for d = {d}",
                    rule.premises.len(),
                    rule.coefficients.len()
                )));
            }
        }
        Ok(Self {
            rules,
            feature_dim: d,
        })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_dim {
            return Err(Error::dim(format!(
                "model expects {} features, got {}",
                self.feature_dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Normalized firing strengths at `x`.
    pub fn strengths(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let lw: Vec<f64> = self.rules.iter().map(|r| r.log_firing(x)).collect();
        Ok(normalize_log(&lw))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let h = self.strengths(x)?;
        let y: Vec<f64> = self.rules.iter().map(|r| r.output(x)).collect();
        Ok(h.iter().zip(&y).map(|(h, v)| h * v).sum())
    }

    pub fn predict_all(&self, x: &Matrix) -> Result<Vec<f64>> {
        x.iter_rows().map(|row| self.predict(row)).collect()
    }

    fn premise_len(&self) -> usize {
        2 * self.rules.len() * self.feature_dim
    }

    /// All means, then all sigmas (rule-major), then all coefficients.
    pub fn theta(&self) -> Vec<f64> {
        let mut t = self.premise_theta();
        for r in &self.rules {
            t.extend(&r.coefficients);
        }
        t
    }

    fn premise_theta(&self) -> Vec<f64> {
        let mfs = || self.rules.iter().flat_map(|r| r.premises.iter());
        let mut t: Vec<f64> = mfs().map(|m| m.mean).collect();
        t.extend(mfs().map(|m| m.sigma));
        t
    }

    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        let (m, d) = (self.rules.len(), self.feature_dim);
        if theta.len() != self.premise_len() + m * (d + 1) {
            return Err(Error::dim(format!(
                "theta has {} entries, model needs {}",
                theta.len(),
                self.premise_len() + m * (d + 1)
            )));
        }
        let mut model = self.with_premises(&theta[..self.premise_len()])?;
        for (r, rule) in model.rules.iter_mut().enumerate() {
            let start = self.premise_len() + r * (d + 1);
            rule.coefficients
                .copy_from_slice(&theta[start..start + d + 1]);
        }
        Ok(model)
    }

    fn with_premises(&self, premises: &[f64]) -> Result<Self> {
        let md = self.rules.len() * self.feature_dim;
        let (means, sigmas) = premises.split_at(md);
        let mut model = self.clone();
        for (k, mf) in model
            .rules
            .iter_mut()
            .flat_map(|r| r.premises.iter_mut())
            .enumerate()
        {
            *mf = GaussianMF::new(means[k], sigmas[k])?;
        }
        Ok(model)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "anfis 1").unwrap();
        writeln!(s, "rules {} dim {}", self.rules.len(), self.feature_dim).unwrap();
        for r in &self.rules {
            for mf in &r.premises {
                writeln!(s, "mf {} {}", fmt_f64(mf.mean), fmt_f64(mf.sigma)).unwrap();
            }
            let coefs: Vec<String> = r.coefficients.iter().map(|&v| fmt_f64(v)).collect();
            writeln!(s, "coef {}", coefs.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_from(&mut TextLines::new(text))
    }

    fn read_from(lines: &mut TextLines) -> Result<Self> {
        if lines.next_fields()? != ["anfis", "1"] {
            return Err(lines.err("expected `anfis 1`".into()));
        }
        let h = lines.next_fields()?;
        if h.len() != 4 || h[0] != "rules" || h[2] != "dim" {
            return Err(lines.err("malformed model header".into()));
        }
        let m: usize = lines.parse(h[1])?;
        let d: usize = lines.parse(h[3])?;
        let mut rules = Vec::with_capacity(m);
        for _ in 0..m {
            let mut premises = Vec::with_capacity(d);
            for _ in 0..d {
                let f = lines.next_fields()?;
                if f.len() != 3 || f[0] != "mf" {
                    return Err(lines.err("expected `mf mean sigma`".into()));
                }
                let mf = GaussianMF::new(lines.parse(f[1])?, lines.parse(f[2])?)
                    .map_err(|e| lines.err(e.to_string()))?;
                premises.push(mf);
            }
            let f = lines.next_fields()?;
            if f.len() != d + 2 || f[0] != "coef" {
                return Err(lines.err(format!("expected `coef` with {} values", d + 1)));
            }
            let coefficients = f[1..]
                .iter()
                .map(|v| lines.parse(v))
                .collect::<Result<_>>()?;
            rules.push(AnfisRule {
                premises,
                coefficients,
            });
        }
        Self::new(rules)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnfisConfig {
    pub clusters: usize,
    pub ridge: f64,
    pub hybrid_iters: usize,
    pub learning_rate: f64,
    pub fuzzifier: f64,
    pub fcm_tol: f64,
    pub fcm_max_iter: usize,
}

impl Default for AnfisConfig {
    fn default() -> Self {
        let f = FcmConfig::default();
        Self {
            clusters: f.clusters,
            ridge: 1e-6,
            hybrid_iters: 20,
            learning_rate: 1e-3,
            fuzzifier: f.fuzzifier,
            fcm_tol: f.tol,
            fcm_max_iter: f.max_iter,
        }
    }
}

impl AnfisConfig {
    pub fn fcm(&self) -> FcmConfig {
        FcmConfig {
            clusters: self.clusters,
            fuzzifier: self.fuzzifier,
            tol: self.fcm_tol,
            max_iter: self.fcm_max_iter,
        }
    }
}

fn training_mse(model: &AnfisModel, features: &Matrix, targets: &[f64]) -> Result<f64> {
    metaheuristics::mse(targets, &model.predict_all(features)?)
}

/// Least-squares consequents for fixed premises: one global ridge solve over the
/// `M·(d+1)` columns `h_r(x)·[1, x]`.
pub fn lse_consequents(
    model: &AnfisModel,
    features: &Matrix,
    targets: &[f64],
    ridge: f64,
) -> Result<AnfisModel> {
    let (m, d) = (model.rules.len(), model.feature_dim);
    let p = d + 1;
    let mut design = Matrix::zeros(features.rows(), m * p);
    for (i, x) in features.iter_rows().enumerate() {
        let h = model.strengths(x)?;
        let row = design.row_mut(i);
        for r in 0..m {
            row[r * p] = h[r];
            for j in 0..d {
                row[r * p + 1 + j] = h[r] * x[j];
            }
        }
    }
    let beta = weighted_ridge(&design, targets, None, ridge).ok_or_else(|| {
        Error::Numerical("consequent least-squares normal equations are singular".into())
    })?;
    let mut out = model.clone();
    for (r, rule) in out.rules.iter_mut().enumerate() {
        rule.coefficients.copy_from_slice(&beta[r * p..(r + 1) * p]);
    }
    Ok(out)
}

/// Gradient of the training MSE with respect to the premise parameters, laid out
/// as all means then all sigmas (rule-major).
///
/// Uses `∂y/∂ln w_r = h_r (y_r − y)`, `∂ln w_r/∂m = (x − m)/σ²` and
/// `∂ln w_r/∂σ = (x − m)²/σ³`.
pub fn premise_gradient(
    model: &AnfisModel,
    features: &Matrix,
    targets: &[f64],
) -> Result<Vec<f64>> {
    let (m, d) = (model.rules.len(), model.feature_dim);
    let n = features.rows();
    let mut grad = vec![0.0; 2 * m * d];
    for (x, &t) in features.iter_rows().zip(targets) {
        let h = model.strengths(x)?;
        let f: Vec<f64> = model.rules.iter().map(|r| r.output(x)).collect();
        let y: f64 = h.iter().zip(&f).map(|(h, v)| h * v).sum();
        let e = 2.0 * (y - t) / n as f64;
        for (r, rule) in model.rules.iter().enumerate() {
            let g = e * h[r] * (f[r] - y);
            if g == 0.0 {
                continue;
            }
            for (j, mf) in rule.premises.iter().enumerate() {
                let diff = x[j] - mf.mean;
                let s2 = mf.sigma * mf.sigma;
                grad[r * d + j] += g * diff / s2;
                grad[m * d + r * d + j] += g * diff * diff / (s2 * mf.sigma);
            }
        }
    }
    Ok(grad)
}

fn sigma_floors(features: &Matrix) -> Vec<f64> {
    features
        .column_ranges()
        .iter()
        .map(|(lo, hi)| {
            if hi > lo {
                SIGMA_FLOOR * (hi - lo)
            } else {
                SIGMA_FLOOR
            }
        })
        .collect()
}

/// Premises from FCM (type-1 Gaussians) with least-squares consequents.
fn init_from(
    features: &Matrix,
    targets: &[f64],
    fcm: &FcmResult,
    config: &AnfisConfig,
) -> Result<AnfisModel> {
    let rules = derive_mfs(fcm, features, 0.0)?
        .into_iter()
        .map(|mfs| AnfisRule {
            premises: mfs.iter().map(|mf| mf.lower()).collect(),
            coefficients: vec![0.0; features.cols() + 1],
        })
        .collect();
    lse_consequents(&AnfisModel::new(rules)?, features, targets, config.ridge)
}

fn hybrid(
    mut model: AnfisModel,
    features: &Matrix,
    targets: &[f64],
    config: &AnfisConfig,
) -> Result<(AnfisModel, Vec<f64>)> {
    let floors = sigma_floors(features);
    let md = model.rules.len() * model.feature_dim;
    let mut mse = training_mse(&model, features, targets)?;
    let mut history = vec![mse.sqrt()];
    for _ in 0..config.hybrid_iters {
        let grad = premise_gradient(&model, features, targets)?;
        let theta = model.premise_theta();
        let mut step = config.learning_rate;
        for _ in 0..30 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(&grad)
                .enumerate()
                .map(|(k, (v, g))| {
                    let next = v - step * g;
                    if k >= md {
                        next.max(floors[(k - md) % model.feature_dim])
                    } else {
                        next
                    }
                })
                .collect();
            let cand = model.with_premises(&cand)?;
            let cand_mse = training_mse(&cand, features, targets)?;
            if cand_mse <= mse {
                model = cand;
                mse = cand_mse;
                break;
            }
            step *= 0.5;
        }
        let solved = lse_consequents(&model, features, targets, config.ridge)?;
        let solved_mse = training_mse(&solved, features, targets)?;
        if solved_mse <= mse {
            model = solved;
            mse = solved_mse;
        }
        history.push(mse.sqrt());
    }
    Ok((model, history))
}

fn fit_from(
    features: &Matrix,
    targets: &[f64],
    fcm: &FcmResult,
    config: &AnfisConfig,
    optimizer: Option<&MetaheuristicSpec>,
) -> Result<(AnfisModel, Vec<f64>)> {
    let init = init_from(features, targets, fcm, config)?;
    let Some(spec) = optimizer else {
        return hybrid(init, features, targets, config);
    };
    let theta0 = init.theta();
    let bounds = fuzzy_bounds(features, init.rules.len(), 1, &theta0[init.premise_len()..]);
    let objective = ObjectiveSpec::new(bounds, |theta: &[f64]| {
        match init.with_theta(theta).and_then(|m| m.predict_all(features)) {
            Ok(y) => metaheuristics::mse(targets, &y).unwrap_or(f64::INFINITY),
            Err(_) => f64::INFINITY,
        }
    })?
    .with_start(theta0)?;
    let result = metaheuristics::minimize(&objective, spec)?;
    drop(objective);
    let history: Vec<f64> = result.history.iter().map(|v| v.sqrt()).collect();
    if !result.best_score.is_finite() {
        log::warn!(
            "{} optimizer diverged; keeping the initial ANFIS model",
            spec.kind.as_str()
        );
        return Ok((init, history));
    }
    Ok((init.with_theta(&result.best)?, history))
}

/// Fits one ANFIS regressor. Without an optimizer the hybrid scheme runs; the
/// returned history holds the training RMSE after the initial solve and after
/// every outer iteration (or per optimizer iteration otherwise).
pub fn anfis_fit(
    features: &Matrix,
    targets: &[f64],
    config: &AnfisConfig,
    optimizer: Option<&MetaheuristicSpec>,
    seed: u64,
) -> Result<(AnfisModel, Vec<f64>)> {
    check_training_set(features, targets, config.clusters)?;
    let fcm = fcm_cluster(features, &config.fcm(), seed)?;
    let optimizer = optimizer.map(|s| MetaheuristicSpec {
        seed: s.seed ^ seed,
        ..s.clone()
    });
    fit_from(features, targets, &fcm, config, optimizer.as_ref())
}

/// Three one-vs-rest ANFIS models, indexed by class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnfisClassifier {
    pub models: Vec<AnfisModel>,
}

impl AnfisClassifier {
    pub fn new(models: Vec<AnfisModel>) -> Result<Self> {
        if models.len() != ClassLabel::COUNT {
            return Err(Error::invalid(format!(
                "expected 3 models, got {}",
                models.len()
            )));
        }
        let d = models[0].feature_dim;
        if models.iter().any(|m| m.feature_dim != d) {
            return Err(Error::dim("one-vs-rest models disagree on dimension"));
        }
        Ok(Self { models })
    }

    pub fn feature_dim(&self) -> usize {
        self.models[0].feature_dim
    }

    pub fn scores(&self, x: &[f64]) -> Result<[f64; 3]> {
        let mut s = [0.0; 3];
        for (v, m) in s.iter_mut().zip(&self.models) {
            *v = m.predict(x)?;
        }
        Ok(s)
    }

    pub fn classify(&self, x: &[f64]) -> Result<(ClassLabel, [f64; 3])> {
        let s = self.scores(x)?;
        Ok((ovr::argmax_label(&s), s))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("anfis-classifier 1\n");
        for (c, m) in ClassLabel::ALL.iter().zip(&self.models) {
            writeln!(s, "class {c}").unwrap();
            s.push_str(&m.to_text());
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = TextLines::new(text);
        if lines.next_fields()? != ["anfis-classifier", "1"] {
            return Err(lines.err("expected `anfis-classifier 1`".into()));
        }
        let mut models = Vec::new();
        for c in ClassLabel::ALL {
            if lines.next_fields()? != ["class", c.as_str()] {
                return Err(lines.err(format!("expected `class {c}`")));
            }
            models.push(AnfisModel::read_from(&mut lines)?);
        }
        Self::new(models)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_text(path, Self::from_text)
    }
}

/// One-vs-rest ANFIS classifier sharing a single FCM run across the classes.
pub fn fit_anfis_classifier(
    features: &Matrix,
    labels: &[ClassLabel],
    config: &AnfisConfig,
    optimizer: Option<&MetaheuristicSpec>,
    seed: u64,
) -> Result<(AnfisClassifier, FitReport)> {
    ovr::require_all_classes(labels)?;
    check_training_set(
        features,
        &ovr::binary_targets(labels, ClassLabel::HC),
        config.clusters,
    )?;
    let fcm = fcm_cluster(features, &config.fcm(), seed)?;
    let fitted = ovr::fit_per_class(labels, |class, targets| {
        let spec = optimizer.map(|s| MetaheuristicSpec {
            seed: rng::derive_seed(s.seed ^ seed, class.index() as u64),
            ..s.clone()
        });
        fit_from(features, targets, &fcm, config, spec.as_ref())
    })?;
    let mut report = FitReport {
        init_rmse: [0.0; 3],
        final_rmse: [0.0; 3],
        histories: Default::default(),
    };
    let mut models = Vec::new();
    for (k, (model, history)) in fitted.into_iter().enumerate() {
        report.init_rmse[k] = history[0];
        report.final_rmse[k] = *history
            .last()
            .expect("history starts with the initial RMSE");
        report.histories[k] = history;
        models.push(model);
    }
    Ok((AnfisClassifier::new(models)?, report))
}
