//! The full training loop: curriculum proposal, K rollouts with goal
//! switching, then interleaved actor-critic and classifier updates — plus
//! configuration profiles, evaluation, and the bipartite-l2 curriculum
//! distance metric.
//!
//! Reproducibility contract: four independent ChaCha streams (env, agent,
//! classifier, curriculum) are derived from the master seed, and each episode
//! rolls out under its own seed drawn from the env stream, so two runs with
//! the same config and seed produce bit-identical parameter trajectories and
//! metrics.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    goal_switch, intrinsic_reward, ActMode, Episode, GoalSwitchConfig, ReplayBuffer, RewardMode,
    SacAgent, SacConfig,
};
use crate::curriculum::{
    build_problem_with, dump_matching_csv, pair_cost, solve_matching, value_biased_cost,
    MatchProblem, MatchResult,
};
use crate::diversify::{update_ensemble, DiversifyConfig, Ensemble, EnsembleOptimizer};
use crate::envs::{is_success, reset, step, Action, MazePreset, MazeSpec};
use crate::error::{FrontierError, Result};
use crate::metrics::{MetricsRow, MetricsWriter};
use crate::{goal_distance, GoalPoint};

/// Unit for the classifier update cadence. The paper-table frequencies count
/// environment steps; the per-episode reading is exposed as an alternative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreqUnit {
    Steps,
    Episodes,
}

/// Cost used in the bipartite curriculum objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostVariant {
    /// Cross-entropy pair cost (the default).
    PairCost,
    /// Pair cost minus the critic's value of the candidate as a goal from the
    /// start state (the `+Value` variant).
    ValueBiased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumConfig {
    /// When false ("w/o Curriculum" ablation), episode goals are drawn
    /// uniformly from the desired set instead.
    pub enabled: bool,
    /// Candidate pool size M sampled from the buffer per proposal round.
    pub candidate_pool: usize,
    pub cost: CostVariant,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        CurriculumConfig { enabled: true, candidate_pool: 500, cost: CostVariant::PairCost }
    }
}

/// Everything a run needs, serializable to a TOML config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub profile: String,
    /// Maze preset name (`complex-maze`, `medium-maze`, `spiral-maze`,
    /// `test-umaze`).
    pub env: String,
    pub seed: u64,
    /// Total training iterations N.
    pub iterations: u64,
    /// Episodes per iteration K; defaults to the number of desired outcomes.
    pub rollouts_per_iter: Option<usize>,
    /// Update iterations M per training iteration; defaults to K * horizon
    /// (one update per collected env step).
    pub updates_per_iter: Option<usize>,
    pub horizon: Option<usize>,
    pub success_radius: Option<f64>,
    pub classifier_update_freq: u64,
    pub classifier_update_unit: FreqUnit,
    pub classifier_iters_per_update: usize,
    pub buffer_capacity: usize,
    pub eval_every_iters: u64,
    pub eval_episodes_per_goal: usize,
    /// Linear learning-rate decay for actor, critics and temperature:
    /// full rate until `lr_decay_from` (fraction of total iterations), then
    /// linearly down to `lr_final_scale` x base by the last iteration.
    /// `lr_final_scale = 1` disables the schedule.
    pub lr_decay_from: f64,
    pub lr_final_scale: f64,
    pub checkpoint_every_iters: Option<u64>,
    /// Dump each round's cost matrix and assignment as CSV next to the
    /// metrics log.
    pub dump_matching: bool,
    pub out_dir: Option<PathBuf>,
    pub curriculum: CurriculumConfig,
    pub goal_switch: GoalSwitchConfig,
    pub sac: SacConfig,
    pub diversify: DiversifyConfig,
}

pub const ENV_SEED: &str = "FRONTIER_SEED";
pub const ENV_OUT_DIR: &str = "FRONTIER_OUT_DIR";

impl TrainConfig {
    /// Documented defaults: every published table value, full scale.
    pub fn paper_default(env: &str) -> TrainConfig {
        TrainConfig {
            profile: "paper-default".into(),
            env: env.into(),
            seed: 0,
            iterations: 500,
            rollouts_per_iter: None,
            updates_per_iter: None,
            horizon: None,
            success_radius: None,
            classifier_update_freq: 2000,
            classifier_update_unit: FreqUnit::Steps,
            classifier_iters_per_update: 16,
            buffer_capacity: 3_000_000,
            eval_every_iters: 10,
            eval_episodes_per_goal: 5,
            lr_decay_from: 0.5,
            lr_final_scale: 1.0,
            checkpoint_every_iters: None,
            dump_matching: false,
            out_dir: None,
            curriculum: CurriculumConfig::default(),
            goal_switch: GoalSwitchConfig::default(),
            sac: SacConfig::default(),
            diversify: DiversifyConfig {
                trunk_hidden: vec![512, 512, 512],
                head_hidden: vec![],
                ..DiversifyConfig::default()
            },
        }
    }

    /// Laptop-size profile: every mechanism intact, explicit overrides only.
    /// Network width 128, batch 128, buffer 2e5, faster learning rates and a
    /// tighter classifier cadence to fit desk-scale step counts.
    pub fn desk_scale(env: &str) -> TrainConfig {
        let mut cfg = TrainConfig::paper_default(env);
        cfg.profile = "desk-scale".into();
        cfg.iterations = 400;
        cfg.updates_per_iter = Some(60);
        cfg.success_radius = Some(1.5);
        cfg.sac.hidden_dim = 128;
        cfg.sac.batch_size = 128;
        cfg.sac.lr_actor = 3e-4;
        cfg.sac.lr_critic = 3e-4;
        cfg.sac.lr_alpha = 3e-4;
        cfg.buffer_capacity = 200_000;
        cfg.classifier_update_freq = 100;
        cfg.diversify.goal_source = crate::diversify::GoalSource::BufferAndDesired;
        cfg.diversify.trunk_hidden = vec![64, 64, 64];
        cfg.diversify.head_hidden = vec![];
        cfg.diversify.learning_rate = 3e-3;
        cfg.lr_final_scale = 0.1;
        cfg
    }

    pub fn from_profile(profile: &str, env: &str) -> Result<TrainConfig> {
        match profile {
            "paper-default" => Ok(TrainConfig::paper_default(env)),
            "desk-scale" => Ok(TrainConfig::desk_scale(env)),
            other => Err(FrontierError::Config(format!(
                "unknown profile `{other}` (expected `paper-default` or `desk-scale`)"
            ))),
        }
    }

    pub fn load(path: &Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| FrontierError::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| FrontierError::Config(format!("serialize: {e}")))?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    /// Environment-variable overrides for the seed and the output directory.
    pub fn apply_env_overrides(&mut self) -> Result<()> {
        if let Ok(seed) = std::env::var(ENV_SEED) {
            self.seed = seed
                .parse()
                .map_err(|_| FrontierError::Config(format!("{ENV_SEED}: bad seed `{seed}`")))?;
        }
        if let Ok(dir) = std::env::var(ENV_OUT_DIR) {
            self.out_dir = Some(PathBuf::from(dir));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |key: &str, why: String| -> Result<()> {
            Err(FrontierError::Config(format!("{key}: {why}")))
        };
        if MazePreset::from_name(&self.env).is_none() {
            return fail("env", format!("unknown preset `{}`", self.env));
        }
        if self.classifier_update_freq == 0 {
            return fail("classifier_update_freq", "must be positive".into());
        }
        if self.buffer_capacity == 0 {
            return fail("buffer_capacity", "must be positive".into());
        }
        if self.eval_every_iters == 0 {
            return fail("eval_every_iters", "must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.sac.relabel_ratio) {
            return fail("sac.relabel_ratio", format!("{} outside [0,1]", self.sac.relabel_ratio));
        }
        if self.diversify.num_heads < 2 {
            return fail("diversify.num_heads", "needs at least 2 heads".into());
        }
        if !(self.diversify.p_min > 0.0 && self.diversify.p_min < 0.5) {
            return fail("diversify.p_min", format!("{} outside (0, 0.5)", self.diversify.p_min));
        }
        if self.curriculum.candidate_pool == 0 {
            return fail("curriculum.candidate_pool", "must be positive".into());
        }
        if self.goal_switch.n_probe == 0 {
            return fail("goal_switch.n_probe", "must be positive".into());
        }
        if let Some(0) = self.rollouts_per_iter {
            return fail("rollouts_per_iter", "must be positive when set".into());
        }
        Ok(())
    }

    /// Maze spec for this config: the named preset with horizon and success
    /// radius overrides applied.
    pub fn build_spec(&self) -> Result<MazeSpec> {
        let preset = MazePreset::from_name(&self.env)
            .ok_or_else(|| FrontierError::Config(format!("env: unknown preset `{}`", self.env)))?;
        let mut spec = preset.load();
        if let Some(h) = self.horizon {
            spec.horizon = h;
        }
        if let Some(r) = self.success_radius {
            spec.success_radius = r;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Independent deterministic randomness per concern.
pub struct RngStreams {
    pub env: ChaCha8Rng,
    pub agent: ChaCha8Rng,
    pub classifier: ChaCha8Rng,
    pub curriculum: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> RngStreams {
        let make = |stream: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            rng
        };
        RngStreams { env: make(1), agent: make(2), classifier: make(3), curriculum: make(4) }
    }
}

/// Complete dynamic state of a run; checkpoints capture all of it.
pub struct RunState {
    pub config: TrainConfig,
    pub spec: MazeSpec,
    pub iteration: u64,
    pub env_steps: u64,
    pub episodes_done: u64,
    pub classifier_updates_done: u64,
    pub agent: SacAgent,
    pub ensemble: Ensemble,
    pub ens_opt: EnsembleOptimizer,
    pub buffer: ReplayBuffer,
    pub rngs: RngStreams,
    /// Last proposed curriculum goals, for snapshots.
    pub last_proposed: Vec<GoalPoint>,
}

impl RunState {
    pub fn init(config: TrainConfig) -> Result<RunState> {
        config.validate()?;
        let spec = config.build_spec()?;
        let mut rngs = RngStreams::new(config.seed);
        let agent = SacAgent::new(config.sac.clone(), &spec, &mut rngs.agent);
        let ensemble = Ensemble::new(&config.diversify, spec.goal_bounds(), &mut rngs.classifier);
        let ens_opt = EnsembleOptimizer::new(&ensemble, &config.diversify);
        let buffer = ReplayBuffer::new(config.buffer_capacity);
        Ok(RunState {
            spec,
            iteration: 0,
            env_steps: 0,
            episodes_done: 0,
            classifier_updates_done: 0,
            agent,
            ensemble,
            ens_opt,
            buffer,
            rngs,
            last_proposed: Vec::new(),
            config,
        })
    }

    /// K: rollouts per iteration.
    pub fn effective_k(&self) -> usize {
        self.config.rollouts_per_iter.unwrap_or(self.spec.desired_outcomes.len())
    }

    /// M: SAC update iterations per training iteration.
    pub fn effective_m(&self) -> usize {
        self.config.updates_per_iter.unwrap_or(self.effective_k() * self.spec.horizon)
    }
}

/// Average minimum-cost bipartite matching distance between two equal-size
/// goal sets under the Euclidean metric.
pub fn curriculum_distance(proposed: &[GoalPoint], desired: &[GoalPoint]) -> Result<f64> {
    if proposed.len() != desired.len() {
        return Err(FrontierError::Matching(format!(
            "curriculum distance needs equal-size sets, got {} vs {}",
            proposed.len(),
            desired.len()
        )));
    }
    let mut costs = Vec::with_capacity(proposed.len() * desired.len());
    for &p in proposed {
        for &d in desired {
            costs.push(goal_distance(p, d));
        }
    }
    let problem = MatchProblem::new(proposed.to_vec(), desired.to_vec(), costs)?;
    let result = solve_matching(&problem)?;
    Ok(result.total_cost / desired.len() as f64)
}

/// One full episode with goal switching on achievement. Returns the episode
/// plus the sum of the per-step training rewards (for the metrics log).
fn rollout(
    spec: &MazeSpec,
    agent: &SacAgent,
    ens: &Ensemble,
    initial_goal: GoalPoint,
    gs_cfg: &GoalSwitchConfig,
    reward: RewardMode,
    rng: &mut ChaCha8Rng,
) -> (Episode, f64) {
    let switch_radius = gs_cfg.radius_factor * spec.success_radius;
    let mut state = reset(spec);
    let mut goal = initial_goal;
    let mut states = Vec::with_capacity(spec.horizon + 1);
    let mut actions = Vec::with_capacity(spec.horizon);
    let mut goals = Vec::with_capacity(spec.horizon);
    let mut terminals = Vec::with_capacity(spec.horizon);
    let mut reward_sum = 0.0;
    states.push(state);
    loop {
        if is_success(&state, goal, spec) {
            goal = goal_switch(ens, &state, goal, gs_cfg, switch_radius, spec, rng);
        }
        let action = agent.act(&state, goal, ActMode::Stochastic, rng);
        let (next, terminal) = step(&state, action, spec);
        reward_sum += match reward {
            RewardMode::Intrinsic => intrinsic_reward(ens, &next, goal),
            RewardMode::SparseSuccess => {
                if is_success(&next, goal, spec) {
                    1.0
                } else {
                    0.0
                }
            }
        };
        states.push(next);
        actions.push(action);
        goals.push(goal);
        terminals.push(terminal);
        state = next;
        if terminal {
            break;
        }
    }
    (Episode { states, actions, goals, terminals }, reward_sum)
}

/// Runs one training iteration: propose -> K rollouts -> pending classifier
/// updates -> M SAC updates -> periodic evaluation. Returns the metrics row.
pub fn run_iteration(state: &mut RunState) -> Result<MetricsRow> {
    apply_lr_schedule(state);
    let desired = state.spec.desired_outcomes.clone();
    let k = state.effective_k();

    // Curriculum proposal from the ensemble snapshot left by the previous
    // iteration. Falls back to uniform draws from the desired set while the
    // buffer is too small (and permanently in the "w/o Curriculum" ablation).
    let mut curr_dist = None;
    let mut proposal: Option<(MatchProblem, MatchResult)> = None;
    let buffer_points = state.buffer.achieved_points();
    let goals: Vec<GoalPoint> = if state.config.curriculum.enabled && buffer_points.len() >= desired.len()
    {
        let pool = state.config.curriculum.candidate_pool;
        let problem = match state.config.curriculum.cost {
            CostVariant::PairCost => build_problem_with(
                &buffer_points,
                &desired,
                pool,
                &mut state.rngs.curriculum,
                &|s, g| pair_cost(&state.ensemble, s, g),
            )?,
            CostVariant::ValueBiased => {
                let start = reset(&state.spec);
                let agent = &state.agent;
                let ens = &state.ensemble;
                build_problem_with(&buffer_points, &desired, pool, &mut state.rngs.curriculum, &|s, g| {
                    value_biased_cost(ens, &|p| agent.value_of_goal(&start, p), s, g)
                })?
            }
        };
        let result = solve_matching(&problem)?;
        let proposed: Vec<GoalPoint> =
            result.assignment.iter().map(|&(i, _)| problem.candidates[i]).collect();
        curr_dist = Some(curriculum_distance(&proposed, &desired)?);
        state.last_proposed = proposed.clone();
        proposal = Some((problem, result));
        proposed
    } else {
        (0..k)
            .map(|_| desired[state.rngs.curriculum.gen_range(0..desired.len())])
            .collect()
    };

    if state.config.dump_matching {
        if let (Some((problem, result)), Some(dir)) = (&proposal, &state.config.out_dir) {
            let tag = format!("{:06}", state.iteration + 1);
            dump_matching_csv(
                problem,
                result,
                &dir.join(format!("matching_costs_{tag}.csv")),
                &dir.join(format!("matching_assignment_{tag}.csv")),
            )?;
        }
    }

    // K rollouts under per-episode seeds drawn up front, so they could run in
    // parallel without changing the stored buffer.
    let episode_seeds: Vec<u64> = (0..k).map(|_| state.rngs.env.gen()).collect();
    let mut reward_sum = 0.0;
    let mut reward_steps = 0usize;
    for (r, &seed) in episode_seeds.iter().enumerate() {
        let mut ep_rng = ChaCha8Rng::seed_from_u64(seed);
        let goal = goals[r % goals.len()];
        let (episode, ep_reward) = rollout(
            &state.spec,
            &state.agent,
            &state.ensemble,
            goal,
            &state.config.goal_switch,
            state.config.sac.reward,
            &mut ep_rng,
        );
        state.env_steps += episode.len() as u64;
        reward_steps += episode.len();
        reward_sum += ep_reward;
        state.buffer.push_episode(episode);
        state.episodes_done += 1;
    }

    // Classifier updates: exactly floor(progress / freq) calls in total.
    let progress = match state.config.classifier_update_unit {
        FreqUnit::Steps => state.env_steps,
        FreqUnit::Episodes => state.episodes_done,
    };
    let due = progress / state.config.classifier_update_freq;
    let mut clf_losses = Vec::new();
    if due > state.classifier_updates_done {
        let points = state.buffer.achieved_points();
        for _ in state.classifier_updates_done..due {
            if let Some(loss) = update_ensemble(
                &mut state.ensemble,
                &mut state.ens_opt,
                &state.config.diversify,
                &points,
                &desired,
                state.spec.goal_bounds(),
                &mut state.rngs.classifier,
                state.config.classifier_iters_per_update,
            ) {
                clf_losses.push(loss);
            }
        }
        state.classifier_updates_done = due;
    }

    // M SAC updates once the buffer can fill a batch.
    let mut critic_losses = Vec::new();
    let mut actor_losses = Vec::new();
    let mut alpha = state.agent.alpha();
    if state.buffer.transition_count() >= state.config.sac.batch_size {
        for _ in 0..state.effective_m() {
            let diag = state.agent.sac_update(
                &state.ensemble,
                &mut state.buffer,
                &state.spec,
                &mut state.rngs.agent,
            );
            critic_losses.push(diag.critic_loss);
            if let Some(a) = diag.actor_loss {
                actor_losses.push(a);
            }
            alpha = diag.alpha;
        }
    }

    state.iteration += 1;

    let success = if state.iteration % state.config.eval_every_iters == 0 {
        Some(evaluate(&state.agent, &state.spec, state.config.eval_episodes_per_goal).success_rate)
    } else {
        None
    };

    let mean = |v: &[f64]| {
        if v.is_empty() {
            None
        } else {
            Some(v.iter().sum::<f64>() / v.len() as f64)
        }
    };
    Ok(MetricsRow {
        iter: state.iteration,
        steps: state.env_steps,
        curr_dist,
        success,
        mean_reward: if reward_steps > 0 { Some(reward_sum / reward_steps as f64) } else { None },
        clf_loss: mean(&clf_losses),
        critic_loss: mean(&critic_losses),
        actor_loss: mean(&actor_losses),
        alpha: Some(alpha),
    })
}

/// Linear late-training decay of the SAC learning rates, set from the
/// iteration counter so checkpoint resume reproduces it exactly.
fn apply_lr_schedule(state: &mut RunState) {
    let cfg = &state.config;
    if cfg.lr_final_scale >= 1.0 || cfg.iterations == 0 {
        return;
    }
    let from = (cfg.iterations as f64 * cfg.lr_decay_from).floor();
    let t = state.iteration as f64;
    let scale = if t <= from {
        1.0
    } else {
        let frac = (t - from) / (cfg.iterations as f64 - from).max(1.0);
        1.0 + (cfg.lr_final_scale - 1.0) * frac.min(1.0)
    };
    state.agent.opt_actor.lr = cfg.sac.lr_actor * scale;
    state.agent.opt_critics[0].lr = cfg.sac.lr_critic * scale;
    state.agent.opt_critics[1].lr = cfg.sac.lr_critic * scale;
    state.agent.opt_alpha.lr = cfg.sac.lr_alpha * scale;
}

/// Deterministic-policy evaluation toward every desired outcome. Reads the
/// agent immutably: no buffer writes, no parameter updates, no training rng.
pub struct EvalReport {
    pub success_rate: f64,
    pub per_goal: Vec<f64>,
}

pub fn evaluate(agent: &SacAgent, spec: &MazeSpec, episodes_per_goal: usize) -> EvalReport {
    // Deterministic actions never touch the rng; a throwaway stream keeps the
    // act() signature uniform.
    let mut scratch_rng = ChaCha8Rng::seed_from_u64(0);
    let mut per_goal = Vec::with_capacity(spec.desired_outcomes.len());
    for &goal in &spec.desired_outcomes {
        let mut successes = 0usize;
        for _ in 0..episodes_per_goal.max(1) {
            let mut state = reset(spec);
            let mut achieved = is_success(&state, goal, spec);
            while !achieved {
                let action = agent.act(&state, goal, ActMode::Deterministic, &mut scratch_rng);
                let (next, terminal) = step(&state, action, spec);
                state = next;
                achieved = is_success(&state, goal, spec);
                if terminal {
                    break;
                }
            }
            successes += achieved as usize;
        }
        per_goal.push(successes as f64 / episodes_per_goal.max(1) as f64);
    }
    let success_rate = per_goal.iter().sum::<f64>() / per_goal.len().max(1) as f64;
    EvalReport { success_rate, per_goal }
}

/// Success rate of a uniform-random policy, the Monte-Carlo floor the trained
/// agent is compared against.
pub fn random_policy_success(spec: &MazeSpec, episodes_per_goal: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut successes = 0usize;
    let mut total = 0usize;
    for &goal in &spec.desired_outcomes {
        for _ in 0..episodes_per_goal {
            let mut state = reset(spec);
            let mut achieved = is_success(&state, goal, spec);
            while !achieved {
                let action = Action {
                    v: rng.gen_range(-spec.v_max..=spec.v_max),
                    omega: rng.gen_range(-spec.omega_max..=spec.omega_max),
                };
                let (next, terminal) = step(&state, action, spec);
                state = next;
                achieved = is_success(&state, goal, spec);
                if terminal {
                    break;
                }
            }
            successes += achieved as usize;
            total += 1;
        }
    }
    successes as f64 / total.max(1) as f64
}

/// A finished (or checkpoint-resumed) run: final state plus all metrics rows
/// produced by this call.
pub struct TrainArtifacts {
    pub state: RunState,
    pub rows: Vec<MetricsRow>,
}

/// Trains from scratch per the config, writing artifacts (metrics CSV,
/// checkpoints, final snapshot) into `out_dir` when one is set.
pub fn train(config: TrainConfig) -> Result<TrainArtifacts> {
    let mut state = RunState::init(config)?;
    let rows = run_to_completion(&mut state)?;
    Ok(TrainArtifacts { state, rows })
}

/// Advances a run until `config.iterations`, appending metrics as it goes.
/// Safe to call on a checkpoint-loaded state: the parameter trajectory is
/// bit-identical to an uninterrupted run.
pub fn run_to_completion(state: &mut RunState) -> Result<Vec<MetricsRow>> {
    let mut writer = match &state.config.out_dir {
        Some(dir) => Some(MetricsWriter::open(&dir.join("metrics.csv"))?),
        None => None,
    };
    let mut rows = Vec::new();
    while state.iteration < state.config.iterations {
        let row = run_iteration(state)?;
        if let Some(w) = writer.as_mut() {
            w.append(&row)?;
        }
        if let (Some(every), Some(dir)) = (state.config.checkpoint_every_iters, state.config.out_dir.clone())
        {
            if state.iteration % every == 0 && state.iteration < state.config.iterations {
                crate::checkpoint::save_bundle(&dir.join(format!("ckpt_{:06}.bin", state.iteration)), state)?;
            }
        }
        rows.push(row);
    }
    if let Some(dir) = state.config.out_dir.clone() {
        crate::checkpoint::save_bundle(&dir.join("final.ckpt"), state)?;
        state.config.save(&dir.join("config.toml"))?;
        crate::metrics::render_snapshot(
            &state.spec,
            &state.buffer.achieved_points(),
            &state.last_proposed,
            &state.spec.desired_outcomes,
            &dir.join("snapshot.svg"),
        )?;
    }
    Ok(rows)
}
