//! Seeded fixtures shared by the criterion benches.

use fcfuzzy::connectivity::{connectivity_matrix, ConnectivityMatrix};
use fcfuzzy::data::{generate_synthetic, ClassLabel, SubjectRecord, SyntheticSpec};
use fcfuzzy::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform `[-1, 1)` matrix.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| r.random_range(-1.0..1.0))
            .collect(),
    )
    .expect("shape matches")
}

/// A few demo subjects (one per class unless `n` is larger).
pub fn demo_subjects(n: usize, seed: u64) -> Vec<SubjectRecord> {
    let mut spec = SyntheticSpec::demo(seed);
    let per = n.div_ceil(3).max(1);
    spec.n_per_class = [per, per, per];
    let mut recs = generate_synthetic(&spec).expect("demo spec is valid");
    recs.truncate(n);
    recs
}

pub fn demo_matrices(n: usize, seed: u64) -> (Vec<ConnectivityMatrix>, Vec<ClassLabel>) {
    let recs = demo_subjects(n, seed);
    let mats = recs
        .iter()
        .map(|r| connectivity_matrix(r).expect("valid record"))
        .collect();
    (mats, recs.iter().map(|r| r.label).collect())
}

/// Labels for `n` samples, cycling through the three classes.
pub fn cyclic_labels(n: usize) -> Vec<ClassLabel> {
    (0..n).map(|i| ClassLabel::ALL[i % 3]).collect()
}
