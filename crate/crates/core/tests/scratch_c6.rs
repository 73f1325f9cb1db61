// Scratch calibration for the conditional non-collapse fixture. Temporary.

use frontier_core::diversify::{
    classifier_loss, update_ensemble, ClassifierBatch, DiversifyConfig, Ensemble,
    EnsembleOptimizer,
};
use frontier_core::GoalBounds;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blob(center: [f64; 2], scale: f64, shape: f64, n: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    (0..n)
        .map(|_| {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let dist = scale * rng.gen_range(0.0f64..1.0).powf(shape);
            [center[0] + dist * angle.cos(), center[1] + dist * angle.sin()]
        })
        .collect()
}

#[test]
#[ignore]
fn c6_probe() {
    let bounds = GoalBounds { half_width: 10.0, half_height: 10.0 };
    let reached = [6.0, 0.0];
    let unreached = [-6.0, 0.0];
    let desired = [reached, unreached];
    let cfg = DiversifyConfig {
        num_heads: 2,
        lambda: 1.0,
        goal_noise: 1.0,
        trunk_hidden: vec![64, 64, 64],
        head_hidden: vec![],
        learning_rate: 1e-2,
        weight_decay: 4.0,
        per_point_goals: true,
        ..DiversifyConfig::default()
    };

    for (start_scale, start_shape, n_reached, r_radius, r_shape, seed) in [
        (4.5, 3.0, 60usize, 0.9, 2.0, 0u64),
        (4.5, 3.0, 60, 0.9, 2.0, 1),
        (4.5, 3.0, 60, 0.9, 2.0, 2),
        (4.5, 3.0, 60, 1.2, 2.5, 0),
        (4.5, 3.0, 60, 1.2, 2.5, 1),
        (4.5, 3.0, 60, 1.2, 2.5, 2),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut buffer = blob([0.0, 0.0], start_scale, start_shape, 300, &mut rng);
        buffer.extend(blob(reached, r_radius, r_shape, n_reached, &mut rng));

        let mut ens = Ensemble::new(&cfg, bounds, &mut rng);
        let mut opt = EnsembleOptimizer::new(&ens, &cfg);
        update_ensemble(&mut ens, &mut opt, &cfg, &buffer, &desired, bounds, &mut rng, 500);

        let mut match_rng = ChaCha8Rng::seed_from_u64(1);
        let (goals, _) =
            frontier_core::curriculum::propose_curriculum(&ens, &buffer, &desired, 400, &mut match_rng)
                .unwrap();
        let cond_p = ens.pseudo_probability(goals[1], unreached);
        let cond_p_reached = ens.pseudo_probability(goals[0], reached);

        // Unconditional differential.
        let const_g = [0.0, 0.0];
        let ucfg = DiversifyConfig { relative_input: false, weight_decay: 0.0, ..cfg.clone() };
        let mut uncond = Ensemble::new(&ucfg, bounds, &mut rng);
        let mut uopt = EnsembleOptimizer::new(&uncond, &ucfg);
        for _ in 0..500 {
            let batch = ClassifierBatch {
                negatives: (0..cfg.batch_negatives)
                    .map(|_| (buffer[rng.gen_range(0..buffer.len())], const_g))
                    .collect(),
                positives: (0..cfg.batch_positives)
                    .map(|_| {
                        let g = desired[rng.gen_range(0..desired.len())];
                        (
                            [
                                g[0] + rng.gen_range(-cfg.goal_noise..=cfg.goal_noise),
                                g[1] + rng.gen_range(-cfg.goal_noise..=cfg.goal_noise),
                            ],
                            const_g,
                        )
                    })
                    .collect(),
                targets: (0..cfg.batch_targets).map(|_| (bounds.sample(&mut rng), const_g)).collect(),
            };
            let (_, grads) = classifier_loss(&uncond, &batch);
            uncond_step(&mut uopt, &mut uncond, grads);
        }
        let mut match_rng = ChaCha8Rng::seed_from_u64(1);
        let problem = frontier_core::curriculum::build_problem_with(
            &buffer,
            &desired,
            400,
            &mut match_rng,
            &|s, g| {
                let p = uncond.pseudo_probability(s, const_g);
                let y = uncond.pseudo_probability(g, const_g);
                frontier_core::diversify::cross_entropy(p, y, uncond.p_min)
            },
        )
        .unwrap();
        let result = frontier_core::curriculum::solve_matching(&problem).unwrap();
        let ucand = problem.candidates[result.assignment[1].0];
        let up = uncond.pseudo_probability(ucand, const_g);
        let d_reached = frontier_core::goal_distance(ucand, reached);
        let d_unreached = frontier_core::goal_distance(ucand, unreached);
        println!(
            "scale {start_scale} shape {start_shape} nr {n_reached} rr {r_radius} rs {r_shape} seed {seed}: cond_p {cond_p:.3} (reached-side {cond_p_reached:.3}) | uncond_p {up:.3} cand ({:.1},{:.1}) d_reached {d_reached:.1} d_unreached {d_unreached:.1}",
            ucand[0], ucand[1]
        );
    }
}

fn uncond_step(opt: &mut EnsembleOptimizer, ens: &mut Ensemble, grads: frontier_core::diversify::EnsembleGrads) {
    opt.apply(ens, &grads);
}
