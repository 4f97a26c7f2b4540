//! Fixtures shared by the integration tests.
#![allow(dead_code)]

use hamlearn::model::{enumerate_pkl, HamiltonianModel};
use hamlearn::PauliString;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest perturber set accepted when drawing random fixtures.
pub const MAX_PERTURBERS: usize = 256;

pub struct Fixture {
    pub model: HamiltonianModel,
    pub lambda: Vec<f64>,
    pub level: usize,
    pub perturbers: Vec<PauliString>,
}

impl Fixture {
    pub fn beta(&self) -> f64 {
        self.lambda.iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

/// Random 2-local models with `n ∈ {2..5}`, `|λ| ≤ 1` and `ℓ ∈ {1, 2, 3}`,
/// redrawn until the perturber set fits the dense budget.
pub fn random_fixtures(count: usize, seed: u64) -> Vec<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut i = 0;
    while out.len() < count {
        let n = 2 + i % 4;
        let level = 1 + (i / 4) % 3;
        i += 1;
        let num_terms = rng.gen_range(1..=n);
        let model = HamiltonianModel::random_local(n, 2, num_terms, 1.0, &mut rng).unwrap();
        let perturbers = enumerate_pkl(&model, level);
        if perturbers.len() > MAX_PERTURBERS {
            continue;
        }
        let lambda = model.true_coeffs().unwrap().to_vec();
        out.push(Fixture { model, lambda, level, perturbers });
    }
    out
}
