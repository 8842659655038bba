//! Fixtures shared by the benchmarks: seeded random worlds and the bundled
//! scenarios.

use oblivious_core::oracle::random::{random_world, RandomWorld, WorldBounds};
use oblivious_core::scenarios::bundled_all;
use oblivious_core::ScenarioSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// `count` worlds with the given planning depth, drawn from a fixed seed.
pub fn worlds(count: usize, depth: usize) -> Vec<RandomWorld> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let bounds = WorldBounds { max_depth: depth, ..WorldBounds::default() };
    (0..count)
        .map(|_| {
            let mut w = random_world(&mut rng, bounds);
            w.depth = depth;
            w
        })
        .collect()
}

pub fn scenarios() -> Vec<ScenarioSpec> {
    bundled_all()
}
