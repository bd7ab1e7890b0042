//! Fuzzy c-means and the Gaussian membership functions derived from it.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FcmConfig {
    pub clusters: usize,
    pub fuzzifier: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FcmConfig {
    fn default() -> Self {
        Self {
            clusters: 3,
            fuzzifier: 2.0,
            tol: 1e-6,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmResult {
    /// M × d.
    pub centers: Matrix,
    /// N × M, rows sum to 1.
    pub memberships: Matrix,
    pub fuzzifier: f64,
    pub iterations: usize,
    pub final_objective: f64,
    /// Objective after each center update.
    pub objective_history: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Membership row of one point given squared distances to every center.
fn membership_row(d2: &[f64], m: f64, out: &mut [f64]) {
    let zeros = d2.iter().filter(|&&d| d == 0.0).count();
    if zeros > 0 {
        for (o, &d) in out.iter_mut().zip(d2) {
            *o = if d == 0.0 { 1.0 / zeros as f64 } else { 0.0 };
        }
        return;
    }
    let p = 1.0 / (m - 1.0);
    // u_j = 1 / Σ_k (d_j / d_k)^p, evaluated relative to the nearest center.
    let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = d2.iter().map(|&d| (dmin / d).powf(p)).collect();
    let s: f64 = w.iter().sum();
    for (o, wj) in out.iter_mut().zip(&w) {
        *o = wj / s;
    }
}

fn update_memberships(data: &Matrix, centers: &Matrix, m: f64, u: &mut Matrix) {
    let mut d2 = vec![0.0; centers.rows()];
    for i in 0..data.rows() {
        for (j, d) in d2.iter_mut().enumerate() {
            *d = sq_dist(data.row(i), centers.row(j));
        }
        membership_row(&d2, m, u.row_mut(i));
    }
}

fn update_centers(data: &Matrix, u: &Matrix, m: f64) -> Matrix {
    let (n, d, k) = (data.rows(), data.cols(), u.cols());
    let mut c = Matrix::zeros(k, d);
    for j in 0..k {
        let mut wsum = 0.0;
        let row = c.row_mut(j);
        for i in 0..n {
            let w = u.get(i, j).powf(m);
            wsum += w;
            for (cv, xv) in row.iter_mut().zip(data.row(i)) {
                *cv += w * xv;
            }
        }
        if wsum > 0.0 {
            for cv in row.iter_mut() {
                *cv /= wsum;
            }
        }
    }
    c
}

fn objective(data: &Matrix, centers: &Matrix, u: &Matrix, m: f64) -> f64 {
    let mut j = 0.0;
    for i in 0..data.rows() {
        for k in 0..centers.rows() {
            j += u.get(i, k).powf(m) * sq_dist(data.row(i), centers.row(k));
        }
    }
    j
}

/// Standard alternating fuzzy c-means.
///
/// Centers start at distinct random data points. Each iteration updates the
/// memberships, then the centers; it stops once no center moves more than `tol`
/// (Euclidean) or after `max_iter` iterations. Memberships are recomputed from the
/// final centers.
pub fn fcm_cluster(data: &Matrix, config: &FcmConfig, seed: u64) -> Result<FcmResult> {
    let (n, k, m) = (data.rows(), config.clusters, config.fuzzifier);
    if k == 0 || n < k {
        return Err(Error::invalid(format!(
            "FCM needs N ≥ M ≥ 1, got N={n}, M={k}"
        )));
    }
    if !(m > 1.0 && m.is_finite()) {
        return Err(Error::invalid(format!("fuzzifier must exceed 1, got {m}")));
    }
    if !data.is_finite() {
        return Err(Error::invalid("FCM data contains non-finite values"));
    }
    let mut r = rng::seeded(seed);
    let picks = index::sample(&mut r, n, k).into_vec();
    let mut centers = data.select_rows(&picks);
    let mut u = Matrix::zeros(n, k);
    let mut history = Vec::new();
    let mut iterations = 0;
    while iterations < config.max_iter {
        iterations += 1;
        update_memberships(data, &centers, m, &mut u);
        let next = update_centers(data, &u, m);
        let shift = (0..k)
            .map(|j| sq_dist(next.row(j), centers.row(j)).sqrt())
            .fold(0.0, f64::max);
        centers = next;
        history.push(objective(data, &centers, &u, m));
        if shift < config.tol {
            break;
        }
    }
    update_memberships(data, &centers, m, &mut u);
    let final_objective = objective(data, &centers, &u, m);
    Ok(FcmResult {
        centers,
        memberships: u,
        fuzzifier: m,
        iterations,
        final_objective,
        objective_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMF {
    pub mean: f64,
    pub sigma: f64,
}

impl GaussianMF {
    pub fn new(mean: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mean.is_finite()) {
            return Err(Error::invalid(format!(
                "Gaussian MF needs finite mean and sigma > 0, got ({mean}, {sigma})"
            )));
        }
        Ok(Self { mean, sigma })
    }

    pub fn log_eval(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sigma;
        -0.5 * z * z
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.log_eval(x).exp()
    }
}

/// Gaussian with fixed mean and uncertain width: the lower MF uses `sigma1`,
/// the upper MF `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IT2GaussianMF {
    pub mean: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl IT2GaussianMF {
    pub fn new(mean: f64, sigma1: f64, sigma2: f64) -> Result<Self> {
        if !(sigma1 > 0.0 && sigma1 <= sigma2 && sigma2.is_finite() && mean.is_finite()) {
            return Err(Error::invalid(format!(
                "IT2 MF needs 0 < sigma1 <= sigma2, got mean {mean}, sigmas ({sigma1}, {sigma2})"
            )));
        }
        Ok(Self {
            mean,
            sigma1,
            sigma2,
        })
    }

    pub fn lower(&self) -> GaussianMF {
        GaussianMF {
            mean: self.mean,
            sigma: self.sigma1,
        }
    }

    pub fn upper(&self) -> GaussianMF {
        GaussianMF {
            mean: self.mean,
            sigma: self.sigma2,
        }
    }
}

/// `(lower, upper)` membership of `x`.
pub fn mf_eval(mf: &IT2GaussianMF, x: f64) -> (f64, f64) {
    (mf.lower().eval(x), mf.upper().eval(x))
}

/// Relative floor applied to derived sigmas.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Per-rule, per-dimension interval MFs from an FCM result.
///
/// The mean is the cluster center; sigma is the u^m-weighted standard deviation
/// of the dimension around it, floored at `SIGMA_FLOOR · range` (or `SIGMA_FLOOR`
/// for a constant dimension). The interval is `sigma·(1 ∓ delta)`.
pub fn derive_mfs(
    result: &FcmResult,
    data: &Matrix,
    delta: f64,
) -> Result<Vec<Vec<IT2GaussianMF>>> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::invalid(format!(
            "FOU delta must lie in [0, 1), got {delta}"
        )));
    }
    let (n, d) = (data.rows(), data.cols());
    if result.memberships.rows() != n || result.centers.cols() != d {
        return Err(Error::dim("FCM result does not match the data"));
    }
    let floors: Vec<f64> = data
        .column_ranges()
        .iter()
        .map(|(lo, hi)| {
            if hi > lo {
                SIGMA_FLOOR * (hi - lo)
            } else {
                SIGMA_FLOOR
            }
        })
        .collect();
    let m = result.fuzzifier;
    let mut floored = 0usize;
    let mut rules = Vec::with_capacity(result.centers.rows());
    for j in 0..result.centers.rows() {
        let w: Vec<f64> = (0..n)
            .map(|i| result.memberships.get(i, j).powf(m))
            .collect();
        let wsum: f64 = w.iter().sum();
        let mut mfs = Vec::with_capacity(d);
        for dim in 0..d {
            let c = result.centers.get(j, dim);
            let var = if wsum > 0.0 {
                (0..n)
                    .map(|i| w[i] * (data.get(i, dim) - c).powi(2))
                    .sum::<f64>()
                    / wsum
            } else {
                0.0
            };
            let mut sigma = var.sqrt();
            if !(sigma >= floors[dim]) {
                sigma = floors[dim];
                floored += 1;
            }
            mfs.push(IT2GaussianMF::new(
                c,
                sigma * (1.0 - delta),
                sigma * (1.0 + delta),
            )?);
        }
        rules.push(mfs);
    }
    if floored > 0 {
        log::warn!("{floored} membership widths hit the sigma floor (zero-spread dimensions)");
    }
    Ok(rules)
}
