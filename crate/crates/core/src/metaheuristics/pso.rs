use rand::Rng as _;

use super::{argmin, MetaheuristicSpec, ObjectiveSpec, OptimResult};
use crate::error::Result;
use crate::rng;

/// Global-best PSO:
/// `v ← w·v + c1·r1·(pbest − x) + c2·r2·(gbest − x)`, `x ← clip(x + v)`, with r1, r2
/// drawn per coordinate. Velocities start at zero.
///
/// Particles move one after another and the personal and global bests are updated
/// right after each move, so later particles in the same iteration already follow
/// an improved gbest.
pub fn pso_minimize(objective: &ObjectiveSpec, spec: &MetaheuristicSpec) -> Result<OptimResult> {
    spec.validate()?;
    let n = spec.population();
    let mut x = objective.initial_population(n, spec.seed);
    let mut v = vec![vec![0.0; objective.dim()]; n];
    let mut pbest = x.clone();
    let mut pscore = objective.evaluate_all(&x);
    let g = argmin(&pscore);
    let (mut gbest, mut gscore) = (pbest[g].clone(), pscore[g]);
    let mut history = vec![gscore];
    let mut evaluations = n;
    for t in 1..=spec.max_iter {
        for i in 0..n {
            let mut r = rng::stream(spec.seed, t as u64, i as u64);
            for k in 0..objective.dim() {
                let r1: f64 = r.random();
                let r2: f64 = r.random();
                v[i][k] = spec.w * v[i][k]
                    + spec.c1 * r1 * (pbest[i][k] - x[i][k])
                    + spec.c2 * r2 * (gbest[k] - x[i][k]);
                x[i][k] += v[i][k];
            }
            objective.clip(&mut x[i]);
            let score = objective.evaluate(&x[i]);
            evaluations += 1;
            if score < pscore[i] {
                pscore[i] = score;
                pbest[i].clone_from(&x[i]);
                if score < gscore {
                    gscore = score;
                    gbest.clone_from(&x[i]);
                }
            }
        }
        history.push(gscore);
    }
    Ok(OptimResult {
        best: gbest,
        best_score: gscore,
        history,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metaheuristics::{sphere, MetaheuristicKind};

    #[test]
    fn frozen_swarm_keeps_best_initial_sample() {
        let obj = ObjectiveSpec::new(vec![(-5.0, 5.0); 3], sphere).unwrap();
        let spec = MetaheuristicSpec {
            c1: 0.0,
            c2: 0.0,
            w: 0.0,
            max_iter: 20,
            seed: 4,
            ..MetaheuristicSpec::defaults(MetaheuristicKind::Pso)
        };
        let init = obj.initial_population(spec.population(), spec.seed);
        let scores = obj.evaluate_all(&init);
        let r = pso_minimize(&obj, &spec).unwrap();
        assert_eq!(r.best, init[argmin(&scores)]);
        assert!(r.history.iter().all(|&h| h == r.history[0]));
    }

    #[test]
    fn thirty_dim_sphere() {
        let obj = ObjectiveSpec::new(vec![(-10.0, 10.0); 30], sphere).unwrap();
        let r = pso_minimize(&obj, &MetaheuristicSpec::defaults(MetaheuristicKind::Pso)).unwrap();
        assert!(r.best_score < 1e-2, "{}", r.best_score);
    }
}
