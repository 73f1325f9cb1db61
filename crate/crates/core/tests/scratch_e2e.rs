// Scratch calibration for the desk-scale end-to-end run. Temporary.

use frontier_core::envs::goal_projection;
use rand::SeedableRng;
use frontier_core::orchestrator::{evaluate, run_iteration, RunState, TrainConfig};

fn coverage(state: &RunState) -> (f64, f64, f64, usize) {
    // Fraction of free cells visited, plus extremes of the visited cloud.
    let spec = &state.spec;
    let mut visited = vec![false; spec.cols * spec.rows];
    let mut max_y = f64::NEG_INFINITY;
    let mut min_x = f64::INFINITY;
    for ep in state.buffer.episodes() {
        for s in &ep.states {
            let p = goal_projection(s);
            let (c, r) = spec.cell_of(p);
            visited[r * spec.cols + c] = true;
            max_y = max_y.max(p[1]);
            min_x = min_x.min(p[0]);
        }
    }
    let mut free = 0;
    let mut seen = 0;
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            if !spec.is_wall_cell(c, r) {
                free += 1;
                if visited[r * spec.cols + c] {
                    seen += 1;
                }
            }
        }
    }
    (seen as f64 / free as f64, max_y, min_x, free)
}

#[test]
#[ignore]
fn umaze_desk_run_probe() {
    let variants: Vec<(&str, Box<dyn Fn(&mut TrainConfig)>)> = vec![
        ("sparse", Box::new(|c: &mut TrainConfig| {
            c.sac.reward = frontier_core::agent::RewardMode::SparseSuccess;
        })),
        ("intrinsic", Box::new(|_c: &mut TrainConfig| {})),
    ];
    for (name, tweak) in variants {
        let mut cfg = TrainConfig::desk_scale("test-umaze");
        cfg.iterations = 250;
        tweak(&mut cfg);
        let mut state = RunState::init(cfg).unwrap();
        let t0 = std::time::Instant::now();
        for i in 0..250 {
            run_iteration(&mut state).unwrap();
            if (i + 1) % 15 == 0 {
                let (cov, _, _, _) = coverage(&state);
                let ev = evaluate(&state.agent, &state.spec, 1);
                let mut finals = Vec::new();
                for &g in &state.spec.desired_outcomes {
                    let mut st = frontier_core::envs::reset(&state.spec);
                    let mut rr = rand_chacha::ChaCha8Rng::seed_from_u64(0);
                    for _ in 0..state.spec.horizon {
                        let a = state.agent.act(&st, g, frontier_core::agent::ActMode::Deterministic, &mut rr);
                        let (nx, done) = frontier_core::envs::step(&st, a, &state.spec);
                        st = nx;
                        if done || frontier_core::envs::is_success(&st, g, &state.spec) { break; }
                    }
                    finals.push((st.pos[0] * 10.0).round() / 10.0);
                    finals.push((st.pos[1] * 10.0).round() / 10.0);
                }
                println!(
                    "{name} iter {} cov {cov:.2} succ {:.2} finals {:?} alpha {:.3} [{:.0?}]",
                    i + 1, ev.success_rate, finals,
                    state.agent.alpha(), t0.elapsed()
                );
            }
        }
    }
}
