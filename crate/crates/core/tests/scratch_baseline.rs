// Scratch random-baseline check. Temporary.

use frontier_core::envs::MazePreset;
use frontier_core::orchestrator::random_policy_success;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn random_baseline() {
    for radius in [1.0, 1.5] {
        let mut spec = MazePreset::TestUmaze.load();
        spec.success_radius = radius;
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let rate = random_policy_success(&spec, 500, &mut rng);
        println!("radius {radius}: random success {rate:.4}");
    }
}
