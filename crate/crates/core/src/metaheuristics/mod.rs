//! Population optimizers over a bounded real vector: GA, PSO and GWO.
//!
//! All three share the same contract. The initial population is uniform over the
//! box (optionally with one individual placed at a given starting point), every
//! position is clipped to the box, the reported history is the best score found so
//! far (index 0 is the initial population), and each individual in each round draws
//! from its own seeded stream, so results do not depend on thread scheduling.

mod ga;
mod gwo;
mod pso;

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use ga::ga_minimize;
pub use gwo::{gwo_minimize, gwo_position_update, GwoState};
pub use pso::pso_minimize;

/// Scalar objective over a box.
type Evaluate<'a> = Box<dyn Fn(&[f64]) -> f64 + Sync + 'a>;

pub struct ObjectiveSpec<'a> {
    pub bounds: Vec<(f64, f64)>,
    evaluate: Evaluate<'a>,
    /// Placed into the initial population (clipped) when present.
    pub start: Option<Vec<f64>>,
}

impl<'a> ObjectiveSpec<'a> {
    pub fn new(
        bounds: Vec<(f64, f64)>,
        evaluate: impl Fn(&[f64]) -> f64 + Sync + 'a,
    ) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::invalid("objective dimension must be at least 1"));
        }
        if let Some(k) = bounds
            .iter()
            .position(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite())
        {
            return Err(Error::invalid(format!(
                "bound {k} is not a finite lo < hi: {:?}",
                bounds[k]
            )));
        }
        Ok(Self {
            bounds,
            evaluate: Box::new(evaluate),
            start: None,
        })
    }

    pub fn with_start(mut self, start: Vec<f64>) -> Result<Self> {
        if start.len() != self.dim() {
            return Err(Error::dim(format!(
                "start point has {} coords, objective {}",
                start.len(),
                self.dim()
            )));
        }
        self.start = Some(start);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    /// Objective value; non-finite values count as +∞.
    pub fn evaluate(&self, theta: &[f64]) -> f64 {
        let v = (self.evaluate)(theta);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    pub fn clip(&self, theta: &mut [f64]) {
        for (v, (lo, hi)) in theta.iter_mut().zip(&self.bounds) {
            *v = v.clamp(*lo, *hi);
        }
    }

    pub(crate) fn evaluate_all(&self, positions: &[Vec<f64>]) -> Vec<f64> {
        positions.par_iter().map(|p| self.evaluate(p)).collect()
    }

    /// Uniform positions over the box; individual 0 is the start point if set.
    pub(crate) fn initial_population(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                if i == 0 {
                    if let Some(s) = &self.start {
                        let mut s = s.clone();
                        self.clip(&mut s);
                        return s;
                    }
                }
                let mut r = rng::stream(seed, 0, i as u64);
                self.bounds
                    .iter()
                    .map(|&(lo, hi)| r.random_range(lo..=hi))
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaheuristicKind {
    Ga,
    Pso,
    Gwo,
}

impl MetaheuristicKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetaheuristicKind::Ga => "ga",
            MetaheuristicKind::Pso => "pso",
            MetaheuristicKind::Gwo => "gwo",
        }
    }
}

impl std::str::FromStr for MetaheuristicKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ga" => Ok(Self::Ga),
            "pso" => Ok(Self::Pso),
            "gwo" => Ok(Self::Gwo),
            _ => Err(Error::invalid(format!(
                "unknown optimizer `{s}` (expected ga, pso or gwo)"
            ))),
        }
    }
}

/// Optimizer settings. Unset fields take the defaults below (60 individuals
/// for GA/PSO, 5 wolves for GWO, 400 iterations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaheuristicSpec {
    pub kind: MetaheuristicKind,
    #[serde(default)]
    pub population: Option<usize>,
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::c")]
    pub c1: f64,
    #[serde(default = "defaults::c")]
    pub c2: f64,
    #[serde(default = "defaults::w")]
    pub w: f64,
    #[serde(default = "defaults::tournament")]
    pub tournament_size: usize,
    #[serde(default = "defaults::mutation_rate")]
    pub mutation_rate: f64,
    #[serde(default = "defaults::crossover_fraction")]
    pub crossover_fraction: f64,
    #[serde(default = "defaults::elite")]
    pub elite_count: usize,
    /// Initial Gaussian mutation width as a fraction of each coordinate's range;
    /// shrinks linearly to zero over the run.
    #[serde(default = "defaults::mutation_scale")]
    pub mutation_scale: f64,
}

mod defaults {
    pub fn max_iter() -> usize {
        400
    }
    pub fn c() -> f64 {
        2.0
    }
    pub fn w() -> f64 {
        0.2
    }
    pub fn tournament() -> usize {
        2
    }
    pub fn mutation_rate() -> f64 {
        0.05
    }
    pub fn crossover_fraction() -> f64 {
        0.8
    }
    pub fn elite() -> usize {
        5
    }
    pub fn mutation_scale() -> f64 {
        0.1
    }
}

impl MetaheuristicSpec {
    pub fn defaults(kind: MetaheuristicKind) -> Self {
        Self {
            kind,
            population: None,
            max_iter: defaults::max_iter(),
            seed: 0,
            c1: defaults::c(),
            c2: defaults::c(),
            w: defaults::w(),
            tournament_size: defaults::tournament(),
            mutation_rate: defaults::mutation_rate(),
            crossover_fraction: defaults::crossover_fraction(),
            elite_count: defaults::elite(),
            mutation_scale: defaults::mutation_scale(),
        }
    }

    pub fn population(&self) -> usize {
        self.population.unwrap_or(match self.kind {
            MetaheuristicKind::Gwo => 5,
            _ => 60,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.population();
        let bad = |m: String| Err(Error::Config(m));
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        match self.kind {
            MetaheuristicKind::Gwo if p < 3 => bad(format!("GWO needs at least 3 wolves, got {p}")),
            MetaheuristicKind::Pso if p < 1 => bad("PSO needs at least 1 particle".into()),
            MetaheuristicKind::Ga if p < self.elite_count.max(1) => bad(format!(
                "GA population {p} is smaller than the elite count {}",
                self.elite_count
            )),
            MetaheuristicKind::Ga if self.tournament_size == 0 => {
                bad("tournament size must be positive".into())
            }
            MetaheuristicKind::Ga if !(0.0..=1.0).contains(&self.mutation_rate) => bad(format!(
                "mutation rate {} outside [0, 1]",
                self.mutation_rate
            )),
            MetaheuristicKind::Ga if !(0.0..=1.0).contains(&self.crossover_fraction) => {
                bad(format!(
                    "crossover fraction {} outside [0, 1]",
                    self.crossover_fraction
                ))
            }
            MetaheuristicKind::Ga if !(self.mutation_scale >= 0.0) => {
                bad("mutation scale must be nonnegative".into())
            }
            MetaheuristicKind::Pso
                if ![self.c1, self.c2, self.w]
                    .iter()
                    .all(|v| v.is_finite() && *v >= 0.0) =>
            {
                bad("PSO coefficients must be finite and nonnegative".into())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub best: Vec<f64>,
    pub best_score: f64,
    /// Best score so far; entry 0 is the initial population, then one per iteration.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

pub fn minimize(objective: &ObjectiveSpec, spec: &MetaheuristicSpec) -> Result<OptimResult> {
    spec.validate()?;
    match spec.kind {
        MetaheuristicKind::Ga => ga_minimize(objective, spec),
        MetaheuristicKind::Pso => pso_minimize(objective, spec),
        MetaheuristicKind::Gwo => gwo_minimize(objective, spec),
    }
}

/// Index of the smallest score; ties go to the lowest index.
pub(crate) fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    best
}

/// `sqrt(mean((t - y)^2))`.
pub fn rmse(targets: &[f64], outputs: &[f64]) -> Result<f64> {
    Ok(mse(targets, outputs)?.sqrt())
}

pub fn mse(targets: &[f64], outputs: &[f64]) -> Result<f64> {
    if targets.len() != outputs.len() {
        return Err(Error::dim(format!(
            "{} targets, {} outputs",
            targets.len(),
            outputs.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::invalid("error of an empty sample"));
    }
    Ok(targets
        .iter()
        .zip(outputs)
        .map(|(t, y)| (t - y) * (t - y))
        .sum::<f64>()
        / targets.len() as f64)
}

pub fn sphere(theta: &[f64]) -> f64 {
    theta.iter().map(|v| v * v).sum()
}

pub fn write_history_csv(path: &Path, history: &[f64]) -> Result<()> {
    let mut s = String::from("iteration,best_score\n");
    for (i, v) in history.iter().enumerate() {
        s.push_str(&format!("{i},{v:e}\n"));
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}
