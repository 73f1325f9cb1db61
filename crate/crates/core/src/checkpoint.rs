//! Run-state bundles: everything needed to resume training bit-exactly —
//! config, counters, all network and optimizer parameters, the replay buffer,
//! and the exact positions of every rng stream. A small TOML manifest is
//! written next to the binary bundle.
//!
//! Layout (little-endian, versioned):
//!
//! ```text
//! magic b"FRB1", u32 version
//! config TOML (length-prefixed bytes)
//! u64 iteration, env_steps, episodes_done, classifier_updates_done
//! 4 x rng stream { 32-byte seed, u64 stream id, u128 word position }
//! agent  { actor, critic0, critic1, target0, target1 (network format),
//!          f64 log_alpha, u64 updates_done,
//!          adam x3, scalar adam, f64 target_entropy }
//! ensemble { trunk + N heads (network format), adam x (N+1) }
//! u64 proposed-goal count + points
//! u64 episode count x episode payload
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Episode, ReplayBuffer};
use crate::binio::*;
use crate::envs::{Action, EnvState};
use crate::error::{FrontierError, Result};
use crate::ndnet::{load_mlp, save_mlp, AdamState, ScalarAdam};
use crate::orchestrator::{RunState, TrainConfig};

const MAGIC: &[u8; 4] = b"FRB1";
const VERSION: u32 = 1;

/// Human-readable sidecar written next to each bundle.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub env: String,
    pub profile: String,
    pub seed: u64,
    pub iteration: u64,
    pub env_steps: u64,
}

fn write_rng<W: Write>(w: &mut W, rng: &ChaCha8Rng) -> Result<()> {
    w.write_all(&rng.get_seed())?;
    write_u64(w, rng.get_stream())?;
    write_u128(w, rng.get_word_pos())?;
    Ok(())
}

fn read_rng<R: Read>(r: &mut R) -> Result<ChaCha8Rng> {
    let mut seed = [0u8; 32];
    r.read_exact(&mut seed)?;
    let stream = read_u64(r)?;
    let word_pos = read_u128(r)?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    Ok(rng)
}

fn write_adam<W: Write>(w: &mut W, adam: &AdamState) -> Result<()> {
    write_f64(w, adam.lr)?;
    write_u64(w, adam.step)?;
    let (m, v) = adam.moments();
    write_u64(w, m.len() as u64)?;
    for slot in m.iter().chain(v.iter()) {
        write_f64_slice(w, slot)?;
    }
    Ok(())
}

fn read_adam<R: Read>(r: &mut R) -> Result<AdamState> {
    let lr = read_f64(r)?;
    let step = read_u64(r)?;
    let slots = read_u64(r)? as usize;
    let mut m = Vec::with_capacity(slots);
    for _ in 0..slots {
        m.push(read_f64_vec(r)?);
    }
    let mut v = Vec::with_capacity(slots);
    for _ in 0..slots {
        v.push(read_f64_vec(r)?);
    }
    Ok(AdamState::restore(lr, step, m, v))
}

fn write_scalar_adam<W: Write>(w: &mut W, adam: &ScalarAdam) -> Result<()> {
    write_f64(w, adam.lr)?;
    write_u64(w, adam.step)?;
    write_f64(w, adam.m)?;
    write_f64(w, adam.v)?;
    Ok(())
}

fn read_scalar_adam<R: Read>(r: &mut R) -> Result<ScalarAdam> {
    let mut adam = ScalarAdam::new(read_f64(r)?);
    adam.step = read_u64(r)?;
    adam.m = read_f64(r)?;
    adam.v = read_f64(r)?;
    Ok(adam)
}

fn write_episode<W: Write>(w: &mut W, ep: &Episode) -> Result<()> {
    write_u64(w, ep.len() as u64)?;
    for s in &ep.states {
        write_f64(w, s.pos[0])?;
        write_f64(w, s.pos[1])?;
        write_f64(w, s.heading)?;
        write_f64(w, s.vel)?;
        write_f64(w, s.ang_vel)?;
        write_u64(w, s.step as u64)?;
    }
    for a in &ep.actions {
        write_f64(w, a.v)?;
        write_f64(w, a.omega)?;
    }
    for g in &ep.goals {
        write_f64(w, g[0])?;
        write_f64(w, g[1])?;
    }
    for &t in &ep.terminals {
        write_u8(w, t as u8)?;
    }
    Ok(())
}

fn read_episode<R: Read>(r: &mut R) -> Result<Episode> {
    let len = read_u64(r)? as usize;
    let mut states = Vec::with_capacity(len + 1);
    for _ in 0..=len {
        states.push(EnvState {
            pos: [read_f64(r)?, read_f64(r)?],
            heading: read_f64(r)?,
            vel: read_f64(r)?,
            ang_vel: read_f64(r)?,
            step: read_u64(r)? as usize,
        });
    }
    let mut actions = Vec::with_capacity(len);
    for _ in 0..len {
        actions.push(Action { v: read_f64(r)?, omega: read_f64(r)? });
    }
    let mut goals = Vec::with_capacity(len);
    for _ in 0..len {
        goals.push([read_f64(r)?, read_f64(r)?]);
    }
    let mut terminals = Vec::with_capacity(len);
    for _ in 0..len {
        terminals.push(read_u8(r)? != 0);
    }
    Ok(Episode { states, actions, goals, terminals })
}

pub fn save_bundle(path: &Path, state: &RunState) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;

    let config_toml = toml::to_string(&state.config)
        .map_err(|e| FrontierError::Checkpoint(format!("config serialize: {e}")))?;
    write_bytes(&mut w, config_toml.as_bytes())?;

    write_u64(&mut w, state.iteration)?;
    write_u64(&mut w, state.env_steps)?;
    write_u64(&mut w, state.episodes_done)?;
    write_u64(&mut w, state.classifier_updates_done)?;

    for rng in [&state.rngs.env, &state.rngs.agent, &state.rngs.classifier, &state.rngs.curriculum] {
        write_rng(&mut w, rng)?;
    }

    save_mlp(&mut w, &state.agent.actor)?;
    save_mlp(&mut w, &state.agent.critics[0])?;
    save_mlp(&mut w, &state.agent.critics[1])?;
    save_mlp(&mut w, &state.agent.targets[0])?;
    save_mlp(&mut w, &state.agent.targets[1])?;
    write_f64(&mut w, state.agent.log_alpha)?;
    write_u64(&mut w, state.agent.updates_done)?;
    write_adam(&mut w, &state.agent.opt_actor)?;
    write_adam(&mut w, &state.agent.opt_critics[0])?;
    write_adam(&mut w, &state.agent.opt_critics[1])?;
    write_scalar_adam(&mut w, &state.agent.opt_alpha)?;
    write_f64(&mut w, state.agent.target_entropy)?;

    save_mlp(&mut w, &state.ensemble.trunk)?;
    write_u64(&mut w, state.ensemble.heads.len() as u64)?;
    for head in &state.ensemble.heads {
        save_mlp(&mut w, head)?;
    }
    write_adam(&mut w, &state.ens_opt.trunk)?;
    for head_opt in &state.ens_opt.heads {
        write_adam(&mut w, head_opt)?;
    }

    write_u64(&mut w, state.last_proposed.len() as u64)?;
    for g in &state.last_proposed {
        write_f64(&mut w, g[0])?;
        write_f64(&mut w, g[1])?;
    }

    write_u64(&mut w, state.buffer.episode_count() as u64)?;
    for ep in state.buffer.episodes() {
        write_episode(&mut w, ep)?;
    }
    w.flush()?;

    let manifest = Manifest {
        format_version: VERSION,
        env: state.config.env.clone(),
        profile: state.config.profile.clone(),
        seed: state.config.seed,
        iteration: state.iteration,
        env_steps: state.env_steps,
    };
    let manifest_path = path.with_extension("manifest.toml");
    std::fs::write(
        manifest_path,
        toml::to_string_pretty(&manifest)
            .map_err(|e| FrontierError::Checkpoint(format!("manifest serialize: {e}")))?,
    )?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<RunState> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FrontierError::Checkpoint(format!("bad bundle magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(FrontierError::Checkpoint(format!(
            "unsupported bundle version {version}, this build reads {VERSION}"
        )));
    }

    let config_bytes = read_bytes(&mut r)?;
    let config_toml = String::from_utf8(config_bytes)
        .map_err(|e| FrontierError::Checkpoint(format!("config not utf-8: {e}")))?;
    let config: TrainConfig = toml::from_str(&config_toml)
        .map_err(|e| FrontierError::Checkpoint(format!("config parse: {e}")))?;

    // Rebuild a correctly-shaped state from the config, then overwrite every
    // dynamic piece with the stored values.
    let mut state = RunState::init(config)?;

    state.iteration = read_u64(&mut r)?;
    state.env_steps = read_u64(&mut r)?;
    state.episodes_done = read_u64(&mut r)?;
    state.classifier_updates_done = read_u64(&mut r)?;

    state.rngs.env = read_rng(&mut r)?;
    state.rngs.agent = read_rng(&mut r)?;
    state.rngs.classifier = read_rng(&mut r)?;
    state.rngs.curriculum = read_rng(&mut r)?;

    state.agent.actor = load_mlp(&mut r)?;
    state.agent.critics[0] = load_mlp(&mut r)?;
    state.agent.critics[1] = load_mlp(&mut r)?;
    state.agent.targets[0] = load_mlp(&mut r)?;
    state.agent.targets[1] = load_mlp(&mut r)?;
    state.agent.log_alpha = read_f64(&mut r)?;
    state.agent.updates_done = read_u64(&mut r)?;
    state.agent.opt_actor = read_adam(&mut r)?;
    state.agent.opt_critics[0] = read_adam(&mut r)?;
    state.agent.opt_critics[1] = read_adam(&mut r)?;
    state.agent.opt_alpha = read_scalar_adam(&mut r)?;
    state.agent.target_entropy = read_f64(&mut r)?;

    state.ensemble.trunk = load_mlp(&mut r)?;
    let n_heads = read_u64(&mut r)? as usize;
    if n_heads != state.ensemble.heads.len() {
        return Err(FrontierError::Checkpoint(format!(
            "bundle has {n_heads} heads, config builds {}",
            state.ensemble.heads.len()
        )));
    }
    for head in &mut state.ensemble.heads {
        *head = load_mlp(&mut r)?;
    }
    state.ens_opt.trunk = read_adam(&mut r)?;
    for head_opt in &mut state.ens_opt.heads {
        *head_opt = read_adam(&mut r)?;
    }

    let n_proposed = read_u64(&mut r)? as usize;
    state.last_proposed = (0..n_proposed)
        .map(|_| -> Result<[f64; 2]> { Ok([read_f64(&mut r)?, read_f64(&mut r)?]) })
        .collect::<Result<_>>()?;

    let n_episodes = read_u64(&mut r)? as usize;
    let mut buffer = ReplayBuffer::new(state.config.buffer_capacity);
    for _ in 0..n_episodes {
        buffer.push_episode(read_episode(&mut r)?);
    }
    state.buffer = buffer;
    Ok(state)
}
