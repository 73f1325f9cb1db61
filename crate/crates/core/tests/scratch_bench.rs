// Scratch micro-benchmark. Temporary.

use frontier_core::agent::{Episode, ReplayBuffer, SacAgent, SacConfig};
use frontier_core::diversify::{DiversifyConfig, Ensemble};
use frontier_core::envs::{reset, step, Action, MazePreset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
#[ignore]
fn bench_sac_update() {
    let spec = MazePreset::TestUmaze.load();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let cfg = SacConfig { hidden_dim: 128, hidden_depth: 3, batch_size: 128, ..SacConfig::default() };
    let mut agent = SacAgent::new(cfg, &spec, &mut rng);
    let dcfg = DiversifyConfig::default();
    let ens = Ensemble::new(&dcfg, spec.goal_bounds(), &mut rng);

    let mut buffer = ReplayBuffer::new(100_000);
    for _ in 0..20 {
        let mut s = reset(&spec);
        let mut states = vec![s];
        let mut actions = Vec::new();
        let mut terminals = Vec::new();
        loop {
            let a = Action {
                v: rng.gen_range(-1.0..1.0),
                omega: rng.gen_range(-0.78..0.78),
            };
            let (n, done) = step(&s, a, &spec);
            states.push(n);
            actions.push(a);
            terminals.push(done);
            s = n;
            if done {
                break;
            }
        }
        let len = actions.len();
        buffer.push_episode(Episode { states, actions, goals: vec![[4.0, -4.0]; len], terminals });
    }

    let mut train_rng = ChaCha8Rng::seed_from_u64(1);
    // Warmup.
    for _ in 0..20 {
        agent.sac_update(&ens, &mut buffer, &spec, &mut train_rng);
    }
    let t0 = std::time::Instant::now();
    let n = 200;
    for _ in 0..n {
        agent.sac_update(&ens, &mut buffer, &spec, &mut train_rng);
    }
    let dt = t0.elapsed();
    println!("sac_update: {:?} per call ({n} calls in {dt:?})", dt / n);
}
