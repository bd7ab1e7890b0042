use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::{argmin, MetaheuristicSpec, ObjectiveSpec, OptimResult};
use crate::error::Result;
use crate::rng;

fn tournament(scores: &[f64], size: usize, r: &mut rng::Rng) -> usize {
    let mut best = r.random_range(0..scores.len());
    for _ in 1..size {
        let c = r.random_range(0..scores.len());
        if scores[c] < scores[best] || (scores[c] == scores[best] && c < best) {
            best = c;
        }
    }
    best
}

/// Real-coded GA.
///
/// Each generation keeps the `elite_count` best individuals unchanged. Of the
/// remaining children, `crossover_fraction` are blends `p1 + u·(p2 − p1)` of two
/// tournament winners (u uniform in [0, 1] per gene); the rest copy one winner.
/// Every non-elite child then mutates each gene with probability `mutation_rate`
/// by a Gaussian step whose width starts at `mutation_scale · range` and shrinks
/// linearly to zero.
pub fn ga_minimize(objective: &ObjectiveSpec, spec: &MetaheuristicSpec) -> Result<OptimResult> {
    spec.validate()?;
    let n = spec.population();
    let dim = objective.dim();
    let mut pop = objective.initial_population(n, spec.seed);
    let mut scores = objective.evaluate_all(&pop);
    let mut history = vec![scores[argmin(&scores)]];
    let mut evaluations = n;
    let ranges: Vec<f64> = objective.bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let elite = spec.elite_count.min(n);
    let n_children = n - elite;
    let n_cross = (spec.crossover_fraction * n_children as f64).round() as usize;
    for g in 1..=spec.max_iter {
        let shrink = 1.0 - (g - 1) as f64 / spec.max_iter as f64;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        let mut next: Vec<Vec<f64>> = order[..elite].iter().map(|&i| pop[i].clone()).collect();
        let mut next_scores: Vec<f64> = order[..elite].iter().map(|&i| scores[i]).collect();
        let children: Vec<Vec<f64>> = (0..n_children)
            .map(|c| {
                let mut r = rng::stream(spec.seed, g as u64, c as u64);
                let p1 = tournament(&scores, spec.tournament_size, &mut r);
                let mut child = pop[p1].clone();
                if c < n_cross {
                    let p2 = tournament(&scores, spec.tournament_size, &mut r);
                    for (k, v) in child.iter_mut().enumerate() {
                        let u: f64 = r.random();
                        *v += u * (pop[p2][k] - *v);
                    }
                }
                for k in 0..dim {
                    if spec.mutation_rate > 0.0 && r.random::<f64>() < spec.mutation_rate {
                        let z: f64 = StandardNormal.sample(&mut r);
                        child[k] += z * spec.mutation_scale * ranges[k] * shrink;
                    }
                }
                objective.clip(&mut child);
                child
            })
            .collect();
        next_scores.extend(objective.evaluate_all(&children));
        evaluations += children.len();
        next.extend(children);
        pop = next;
        scores = next_scores;
        let best = scores[argmin(&scores)];
        history.push(best.min(*history.last().expect("nonempty")));
    }
    let b = argmin(&scores);
    Ok(OptimResult {
        best: pop[b].clone(),
        best_score: scores[b],
        history,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metaheuristics::{sphere, MetaheuristicKind};

    #[test]
    fn pure_elitism_keeps_best_constant() {
        let obj = ObjectiveSpec::new(vec![(-5.0, 5.0); 4], sphere).unwrap();
        let spec = MetaheuristicSpec {
            mutation_rate: 0.0,
            crossover_fraction: 0.0,
            max_iter: 30,
            seed: 8,
            ..MetaheuristicSpec::defaults(MetaheuristicKind::Ga)
        };
        let r = ga_minimize(&obj, &spec).unwrap();
        assert!(r.history.iter().all(|&h| h == r.history[0]));
    }

    #[test]
    fn thirty_dim_sphere() {
        let obj = ObjectiveSpec::new(vec![(-10.0, 10.0); 30], sphere).unwrap();
        let r = ga_minimize(&obj, &MetaheuristicSpec::defaults(MetaheuristicKind::Ga)).unwrap();
        assert!(r.best_score < 1e-2, "{}", r.best_score);
    }
}
