//! Shared fixtures for the benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tvmc_core::liouvillian::{self, Coupling, CouplingStrength, JumpKind, ModelKind, PairCounting, SignConvention};
use tvmc_core::{Lattice, LindbladianSpec, ModelParams, MpoAnsatz};

/// Short-range dissipative Ising chain with unit rates.
pub fn tfi_params(n_sites: usize) -> ModelParams {
    ModelParams {
        kind: ModelKind::Tfi,
        lattice: Lattice::Ring(n_sites),
        couplings: vec![Coupling {
            j: CouplingStrength::Ising(0.5),
            alpha: f64::INFINITY,
        }],
        h: 1.0,
        gamma: 1.0,
        jump: JumpKind::SpinDecayXy,
        sign: SignConvention::Positive,
        kac: false,
        r_trunc: 4,
        pair_counting: PairCounting::Unordered,
    }
}

pub fn tfi_spec(n_sites: usize) -> LindbladianSpec {
    liouvillian::build(&tfi_params(n_sites)).expect("valid benchmark model")
}

/// Seeded random ansatz scaled so that products of `n_sites` tensors stay O(1).
pub fn random_ansatz(n_sites: usize, chi: usize, seed: u64) -> MpoAnsatz {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (2.0 * chi as f64).sqrt();
    MpoAnsatz::random(n_sites, 1, 2, chi, scale, &mut rng)
        .and_then(|a| a.renormalized())
        .expect("valid benchmark ansatz")
}
