//! Seeded inputs for the benchmarks.

use majoraudit::metrics::Distribution;
use majoraudit::CostMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mass on `support` random points out of `k`.
pub fn random_distribution(rng: &mut impl Rng, k: usize, support: usize) -> Distribution {
    let mut mass = vec![0.0; k];
    for _ in 0..support {
        mass[rng.random_range(0..k)] += rng.random_range(0.1..1.0);
    }
    let total: f64 = mass.iter().sum();
    mass.iter_mut().for_each(|m| *m /= total);
    Distribution::new(mass).expect("normalized")
}

/// Symmetric cost in [0,1] with a zero diagonal.
pub fn random_cost(rng: &mut impl Rng, k: usize) -> CostMatrix {
    let mut rows = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let c = rng.random_range(0.0..1.0);
            rows[i][j] = c;
            rows[j][i] = c;
        }
    }
    CostMatrix::from_rows(rows, "bench").expect("square")
}

/// A numbered list of ten majors in the model's usual shape.
pub fn response_text() -> String {
    const NAMES: [&str; 10] = [
        "Environmental Science",
        "Computer Science",
        "Biology",
        "Economics",
        "Mechanical Engineering",
        "Political Science",
        "Mathematics",
        "English",
        "Nursing",
        "Psychology",
    ];
    NAMES.iter().enumerate().map(|(i, n)| format!("{}. {n}: a short rationale.\n", i + 1)).collect()
}
