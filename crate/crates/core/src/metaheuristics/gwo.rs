use rand::Rng as _;

use super::{MetaheuristicSpec, ObjectiveSpec, OptimResult};
use crate::error::Result;
use crate::rng;

/// Pack state between iterations. Leaders are the best three positions seen,
/// ordered alpha, beta, delta.
#[derive(Debug, Clone, PartialEq)]
pub struct GwoState {
    pub wolves: Vec<Vec<f64>>,
    pub scores: Vec<f64>,
    pub leaders: [(Vec<f64>, f64); 3],
    pub a: f64,
    pub t: usize,
    pub t_max: usize,
}

impl GwoState {
    fn new(wolves: Vec<Vec<f64>>, scores: Vec<f64>, t_max: usize) -> Self {
        let leaders = best_three(
            wolves
                .iter()
                .zip(&scores)
                .map(|(w, &s)| (w.clone(), s))
                .collect(),
        );
        Self {
            wolves,
            scores,
            leaders,
            a: 2.0,
            t: 0,
            t_max,
        }
    }

    /// alpha ≤ beta ≤ delta ≤ every wolf.
    pub fn hierarchy_holds(&self) -> bool {
        let [(_, a), (_, b), (_, d)] = &self.leaders;
        a <= b
            && b <= d
            && self
                .scores
                .iter()
                .all(|s| d <= s || self.leaders.iter().any(|(_, l)| l == s))
    }

    fn step(&mut self, objective: &ObjectiveSpec, seed: u64) {
        self.t += 1;
        self.a = 2.0 * (1.0 - self.t as f64 / self.t_max as f64);
        let [(xa, _), (xb, _), (xd, _)] = &self.leaders;
        let leaders = [xa.as_slice(), xb.as_slice(), xd.as_slice()];
        let t = self.t as u64;
        let a = self.a;
        self.wolves = self
            .wolves
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let mut r = rng::stream(seed, t, i as u64);
                let mut next = gwo_position_update(x, leaders, a, &mut r);
                objective.clip(&mut next);
                next
            })
            .collect();
        self.scores = objective.evaluate_all(&self.wolves);
        let mut pool: Vec<(Vec<f64>, f64)> = self.leaders.to_vec();
        pool.extend(self.wolves.iter().cloned().zip(self.scores.iter().copied()));
        self.leaders = best_three(pool);
    }
}

/// Best three of `pool` by score; earlier entries win ties.
fn best_three(mut pool: Vec<(Vec<f64>, f64)>) -> [(Vec<f64>, f64); 3] {
    pool.sort_by(|x, y| x.1.total_cmp(&y.1));
    let mut it = pool.into_iter();
    let mut next = || it.next().expect("at least three candidates");
    [next(), next(), next()]
}

/// One wolf's move toward alpha, beta and delta.
///
/// Per coordinate and leader L: `A = a(2r1 - 1)`, `C = 2r2`, `D = |C·L - x|`,
/// `X_L = L - A·D`; the new coordinate is `(X_alpha + X_beta + X_delta) / 3`.
/// Bounds are not applied here.
pub fn gwo_position_update(x: &[f64], leaders: [&[f64]; 3], a: f64, r: &mut rng::Rng) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut sum = [0.0; 3];
            for (s, l) in sum.iter_mut().zip(leaders) {
                let r1: f64 = r.random();
                let r2: f64 = r.random();
                let big_a = a * (2.0 * r1 - 1.0);
                let c = 2.0 * r2;
                let d = (c * l[k] - x[k]).abs();
                *s = l[k] - big_a * d;
            }
            (sum[0] + sum[1] + sum[2]) / 3.0
        })
        .collect()
}

/// Grey wolf optimizer; `a` falls linearly from 2 to 0, reaching 0 on the last
/// iteration.
pub fn gwo_minimize(objective: &ObjectiveSpec, spec: &MetaheuristicSpec) -> Result<OptimResult> {
    spec.validate()?;
    let wolves = objective.initial_population(spec.population(), spec.seed);
    let scores = objective.evaluate_all(&wolves);
    let mut state = GwoState::new(wolves, scores, spec.max_iter);
    let mut history = vec![state.leaders[0].1];
    let mut evaluations = spec.population();
    for _ in 0..spec.max_iter {
        state.step(objective, spec.seed);
        evaluations += spec.population();
        debug_assert!(state.hierarchy_holds());
        history.push(state.leaders[0].1);
    }
    let (best, best_score) = state.leaders[0].clone();
    Ok(OptimResult {
        best,
        best_score,
        history,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metaheuristics::{sphere, MetaheuristicKind};

    #[test]
    fn a_schedule() {
        let obj = ObjectiveSpec::new(vec![(-1.0, 1.0); 2], sphere).unwrap();
        let wolves = obj.initial_population(5, 0);
        let scores = obj.evaluate_all(&wolves);
        let mut st = GwoState::new(wolves, scores, 10);
        let mut seen = Vec::new();
        for _ in 0..10 {
            st.step(&obj, 0);
            assert!(st.hierarchy_holds());
            seen.push(st.a);
        }
        assert_eq!(seen[4], 1.0);
        assert_eq!(seen[9], 0.0);
    }

    #[test]
    fn zero_a_moves_to_leader_mean() {
        let mut r = rng::seeded(5);
        let la = [1.0, -2.0, 0.3];
        let lb = [0.5, 4.0, -0.1];
        let ld = [2.0, 0.0, 7.0];
        let x = [9.0, 9.0, -9.0];
        let next = gwo_position_update(&x, [&la, &lb, &ld], 0.0, &mut r);
        for k in 0..3 {
            assert_eq!(next[k], (la[k] + lb[k] + ld[k]) / 3.0);
        }
    }

    #[test]
    fn thirty_dim_sphere() {
        let obj = ObjectiveSpec::new(vec![(-10.0, 10.0); 30], sphere).unwrap();
        let spec = MetaheuristicSpec::defaults(MetaheuristicKind::Gwo);
        let r = gwo_minimize(&obj, &spec).unwrap();
        assert!(r.best_score < 1e-2, "{}", r.best_score);
    }
}
