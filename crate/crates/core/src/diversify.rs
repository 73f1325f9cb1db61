//! Goal-conditional classifier ensemble with diversification.
//!
//! A shared trunk feeds N logistic heads `f_i(s; g)`. Heads are trained to
//! classify labeled source data — replay-buffer states get label 0, noised
//! conditioned goals get label 1 — while the pairwise mutual information of
//! head predictions on an unlabeled uniform target pool is minimized. On
//! well-covered data the heads agree; far from any source data they disagree,
//! so the ensemble's mean prediction (the pseudo probability) sits near 0.5
//! exactly where exploration has not reached.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ndnet::{Activation, AdamState, ForwardTrace, Mlp, MlpGrads};
use crate::{GoalBounds, GoalPoint};

/// Where conditioned goals are drawn from while training the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoalSource {
    /// Uniform over the state-space box (the default).
    Uniform,
    /// Union of replay-buffer states and the desired outcome examples.
    BufferAndDesired,
}

/// Every knob of the ensemble and its training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversifyConfig {
    /// Head count N (at least 2).
    pub num_heads: usize,
    /// Weight of the pairwise mutual-information term.
    pub lambda: f64,
    /// Per-coordinate uniform noise scale for positive examples.
    pub goal_noise: f64,
    /// Probability clamp floor applied inside every log.
    pub p_min: f64,
    pub trunk_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub batch_negatives: usize,
    pub batch_positives: usize,
    pub batch_targets: usize,
    pub learning_rate: f64,
    /// Decoupled weight decay per optimizer step. Keeps logits small away
    /// from the source data so unexplored regions stay soft instead of
    /// saturating; 0 disables.
    pub weight_decay: f64,
    /// Append the difference s - g to the trunk input. Positives always have
    /// a small difference, so this makes goal-locality linearly accessible
    /// and the pseudo probability peaks at the conditioned goal instead of
    /// riding an extrapolation slope past it.
    pub relative_input: bool,
    pub goal_source: GoalSource,
    /// When false (default), one conditioned goal is shared per minibatch and
    /// resampled each iteration; when true, every batch row draws its own.
    pub per_point_goals: bool,
}

impl Default for DiversifyConfig {
    fn default() -> Self {
        DiversifyConfig {
            num_heads: 2,
            lambda: 1.0,
            goal_noise: 0.5,
            p_min: 1e-6,
            trunk_hidden: vec![64, 64, 64],
            head_hidden: vec![],
            batch_negatives: 256,
            batch_positives: 256,
            batch_targets: 256,
            learning_rate: 1e-3,
            weight_decay: 4.0,
            relative_input: true,
            goal_source: GoalSource::Uniform,
            per_point_goals: false,
        }
    }
}

/// Parameters of the conditional classifier ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    /// Shared trunk over the concatenated, normalized `(s, g)` input.
    pub trunk: Mlp,
    /// N heads, each ending in a single logistic unit.
    pub heads: Vec<Mlp>,
    pub lambda: f64,
    pub goal_noise: f64,
    pub p_min: f64,
    /// Per-coordinate input normalization (applied to both s and g).
    pub input_scale: [f64; 2],
    /// Whether the trunk input carries the extra s - g channels.
    pub relative_input: bool,
}

/// Adam states for the trunk and each head, plus the decay factor.
#[derive(Debug, Clone)]
pub struct EnsembleOptimizer {
    pub trunk: AdamState,
    pub heads: Vec<AdamState>,
    pub weight_decay: f64,
}

/// Parameter gradients matching [`Ensemble`] shapes.
pub struct EnsembleGrads {
    pub trunk: MlpGrads,
    pub heads: Vec<MlpGrads>,
}

/// One training minibatch. Rows pair a query point with the goal it is
/// conditioned on, so both the shared-goal and per-point-goal modes flow
/// through the same loss.
#[derive(Debug, Clone)]
pub struct ClassifierBatch {
    /// Replay-buffer states, label 0.
    pub negatives: Vec<(GoalPoint, GoalPoint)>,
    /// Conditioned goals plus noise, label 1.
    pub positives: Vec<(GoalPoint, GoalPoint)>,
    /// Uniform state-space samples for the mutual-information term.
    pub targets: Vec<(GoalPoint, GoalPoint)>,
}

impl Ensemble {
    pub fn new<R: Rng + ?Sized>(cfg: &DiversifyConfig, bounds: GoalBounds, rng: &mut R) -> Ensemble {
        assert!(cfg.num_heads >= 2, "ensemble needs at least 2 heads, got {}", cfg.num_heads);
        assert!(cfg.lambda >= 0.0 && cfg.goal_noise >= 0.0);
        assert!(cfg.p_min > 0.0 && cfg.p_min < 0.5, "p_min must be in (0, 0.5)");
        let mut trunk_dims = vec![if cfg.relative_input { 6 } else { 4 }];
        trunk_dims.extend_from_slice(&cfg.trunk_hidden);
        let trunk = Mlp::new(&trunk_dims, Activation::Relu, rng);
        let trunk_out = *trunk_dims.last().unwrap();
        let heads = (0..cfg.num_heads)
            .map(|_| {
                let mut dims = vec![trunk_out];
                dims.extend_from_slice(&cfg.head_hidden);
                dims.push(1);
                Mlp::new(&dims, Activation::Logistic, rng)
            })
            .collect();
        Ensemble {
            trunk,
            heads,
            lambda: cfg.lambda,
            goal_noise: cfg.goal_noise,
            p_min: cfg.p_min,
            input_scale: bounds.input_scale(),
            relative_input: cfg.relative_input,
        }
    }

    pub fn num_heads(&self) -> usize {
        self.heads.len()
    }

    fn net_input(&self, s: GoalPoint, g: GoalPoint) -> Vec<f64> {
        let mut x = vec![
            s[0] * self.input_scale[0],
            s[1] * self.input_scale[1],
            g[0] * self.input_scale[0],
            g[1] * self.input_scale[1],
        ];
        if self.relative_input {
            x.push((s[0] - g[0]) * self.input_scale[0]);
            x.push((s[1] - g[1]) * self.input_scale[1]);
        }
        x
    }

    /// All N head probabilities for a state conditioned on a goal.
    pub fn head_forward(&self, s: GoalPoint, g: GoalPoint) -> Vec<f64> {
        let x = self.net_input(s, g);
        assert!(x.iter().all(|v| v.is_finite()), "head_forward: non-finite input");
        let features = self.trunk.forward(&x);
        self.heads.iter().map(|h| h.forward(&features)[0]).collect()
    }

    /// Mean of the head outputs; ~0 on explored states, ~1 on states that look
    /// like the conditioned goal, ~0.5 where the heads disagree.
    pub fn pseudo_probability(&self, s: GoalPoint, g: GoalPoint) -> f64 {
        pseudo_from_probs(&self.head_forward(s, g))
    }
}

/// Arithmetic mean of head outputs.
pub fn pseudo_from_probs(probs: &[f64]) -> f64 {
    assert!(!probs.is_empty());
    probs.iter().sum::<f64>() / probs.len() as f64
}

#[inline]
fn clamp_prob(p: f64, p_min: f64) -> f64 {
    p.clamp(p_min, 1.0 - p_min)
}

/// Binary cross-entropy with a soft target, every probability clamped away
/// from {0, 1}.
pub fn cross_entropy(p: f64, y: f64, p_min: f64) -> f64 {
    let p = clamp_prob(p, p_min);
    let y = clamp_prob(y, p_min);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Mutual information between two Bernoulli prediction batches, in nats.
///
/// The joint 2x2 distribution is the batch mean of outer products
/// `[p_i, 1-p_i] (x) [p_j, 1-p_j]`; the marginals are the batch means. Returns
/// KL(joint || product of marginals) with `p_min` clamping inside the logs.
pub fn mi_loss(probs_i: &[f64], probs_j: &[f64], p_min: f64) -> f64 {
    mi_tables(probs_i, probs_j, p_min).0
}

/// MI value together with its gradient w.r.t. both probability batches.
pub fn mi_loss_grad(probs_i: &[f64], probs_j: &[f64], p_min: f64) -> (f64, Vec<f64>, Vec<f64>) {
    let (value, log_ratio) = mi_tables(probs_i, probs_j, p_min);
    let n = probs_i.len() as f64;
    // d MI / d p_i[b] = (1/B) * [ p_j (L11 - L01) + (1-p_j)(L10 - L00) ],
    // where L_ac = ln(J_ac / (M_a M_c)); the +-1 constants from the marginal
    // terms cancel because the joint's row and column sums are the marginals.
    let [l11, l10, l01, l00] = log_ratio;
    let grad_i = probs_j
        .iter()
        .map(|&pj| (pj * (l11 - l01) + (1.0 - pj) * (l10 - l00)) / n)
        .collect();
    let grad_j = probs_i
        .iter()
        .map(|&pi| (pi * (l11 - l10) + (1.0 - pi) * (l01 - l00)) / n)
        .collect();
    (value, grad_i, grad_j)
}

fn mi_tables(probs_i: &[f64], probs_j: &[f64], p_min: f64) -> (f64, [f64; 4]) {
    assert!(!probs_i.is_empty(), "mi_loss: empty batch");
    assert_eq!(probs_i.len(), probs_j.len(), "mi_loss: batch length mismatch");
    let n = probs_i.len() as f64;
    let mut j11 = 0.0;
    let mut m_i = 0.0;
    let mut m_j = 0.0;
    for (&pi, &pj) in probs_i.iter().zip(probs_j.iter()) {
        j11 += pi * pj;
        m_i += pi;
        m_j += pj;
    }
    j11 /= n;
    m_i /= n;
    m_j /= n;
    let j10 = m_i - j11;
    let j01 = m_j - j11;
    let j00 = 1.0 - m_i - m_j + j11;

    let floor = p_min * p_min;
    let log_ratio = |j: f64, ma: f64, mc: f64| -> f64 {
        (j.max(floor) / (ma * mc).max(floor)).ln()
    };
    let l11 = log_ratio(j11, m_i, m_j);
    let l10 = log_ratio(j10, m_i, 1.0 - m_j);
    let l01 = log_ratio(j01, 1.0 - m_i, m_j);
    let l00 = log_ratio(j00, 1.0 - m_i, 1.0 - m_j);

    // 0 * ln(0/..) contributes nothing.
    let term = |j: f64, l: f64| if j > 0.0 { j * l } else { 0.0 };
    let value = term(j11, l11) + term(j10, l10) + term(j01, l01) + term(j00, l00);
    (value.max(0.0), [l11, l10, l01, l00])
}

/// Loss of Eqs for the conditional ensemble on one minibatch, with gradients:
/// per-head cross-entropy on negatives and positives plus `lambda` times the
/// pairwise mutual information on the target pool, each term batch-averaged.
pub fn classifier_loss(ens: &Ensemble, batch: &ClassifierBatch) -> (f64, EnsembleGrads) {
    let n_heads = ens.num_heads();
    let mut grads = EnsembleGrads {
        trunk: MlpGrads::zeros_like(&ens.trunk),
        heads: ens.heads.iter().map(MlpGrads::zeros_like).collect(),
    };

    struct SampleTrace {
        trunk: ForwardTrace,
        heads: Vec<ForwardTrace>,
        probs: Vec<f64>,
        /// dL/dp per head, filled in before backprop.
        dprobs: Vec<f64>,
    }

    let run = |points: &[(GoalPoint, GoalPoint)]| -> Vec<SampleTrace> {
        points
            .iter()
            .map(|&(s, g)| {
                let x = ens.net_input(s, g);
                let trunk = ens.trunk.trace(&x);
                let features = trunk.output().to_vec();
                let heads: Vec<ForwardTrace> = ens.heads.iter().map(|h| h.trace(&features)).collect();
                let probs = heads.iter().map(|t| t.output()[0]).collect();
                SampleTrace { trunk, heads, probs, dprobs: vec![0.0; n_heads] }
            })
            .collect()
    };

    let mut neg = run(&batch.negatives);
    let mut pos = run(&batch.positives);
    let mut tgt = run(&batch.targets);

    let mut loss = 0.0;

    // Label-0 term over negatives.
    if !neg.is_empty() {
        let inv = 1.0 / neg.len() as f64;
        for sample in &mut neg {
            for i in 0..n_heads {
                let p = clamp_prob(sample.probs[i], ens.p_min);
                loss += inv * -(1.0 - p).ln();
                if sample.probs[i] > ens.p_min && sample.probs[i] < 1.0 - ens.p_min {
                    sample.dprobs[i] += inv / (1.0 - p);
                }
            }
        }
    }

    // Label-1 term over positives.
    if !pos.is_empty() {
        let inv = 1.0 / pos.len() as f64;
        for sample in &mut pos {
            for i in 0..n_heads {
                let p = clamp_prob(sample.probs[i], ens.p_min);
                loss += inv * -p.ln();
                if sample.probs[i] > ens.p_min && sample.probs[i] < 1.0 - ens.p_min {
                    sample.dprobs[i] += -inv / p;
                }
            }
        }
    }

    // Pairwise MI over the target pool; the sum runs over ordered pairs
    // (i, j), i != j, which doubles each unordered pair.
    if ens.lambda > 0.0 && !tgt.is_empty() {
        for i in 0..n_heads {
            for j in i + 1..n_heads {
                let pi: Vec<f64> = tgt.iter().map(|s| s.probs[i]).collect();
                let pj: Vec<f64> = tgt.iter().map(|s| s.probs[j]).collect();
                let (mi, gi, gj) = mi_loss_grad(&pi, &pj, ens.p_min);
                loss += 2.0 * ens.lambda * mi;
                for (sample, (&di, &dj)) in tgt.iter_mut().zip(gi.iter().zip(gj.iter())) {
                    sample.dprobs[i] += 2.0 * ens.lambda * di;
                    sample.dprobs[j] += 2.0 * ens.lambda * dj;
                }
            }
        }
    }

    // Backprop every sample through its head traces into the shared trunk.
    let trunk_in = ens.trunk.out_dim();
    for sample in neg.iter().chain(pos.iter()).chain(tgt.iter()) {
        let mut dtrunk_out = vec![0.0; trunk_in];
        for i in 0..n_heads {
            if sample.dprobs[i] == 0.0 {
                continue;
            }
            let dfeat =
                ens.heads[i].accumulate_from_trace(&sample.heads[i], &[sample.dprobs[i]], &mut grads.heads[i]);
            for (acc, d) in dtrunk_out.iter_mut().zip(dfeat.iter()) {
                *acc += d;
            }
        }
        ens.trunk.accumulate_from_trace(&sample.trunk, &dtrunk_out, &mut grads.trunk);
    }

    (loss, grads)
}

impl EnsembleOptimizer {
    pub fn new(ens: &Ensemble, cfg: &DiversifyConfig) -> EnsembleOptimizer {
        EnsembleOptimizer {
            trunk: AdamState::new(&ens.trunk, cfg.learning_rate),
            heads: ens.heads.iter().map(|h| AdamState::new(h, cfg.learning_rate)).collect(),
            weight_decay: cfg.weight_decay,
        }
    }

    pub fn apply(&mut self, ens: &mut Ensemble, grads: &EnsembleGrads) {
        self.trunk.update(&mut ens.trunk, &grads.trunk);
        for (head, (opt, g)) in ens.heads.iter_mut().zip(self.heads.iter_mut().zip(grads.heads.iter())) {
            opt.update(head, g);
        }
        if self.weight_decay > 0.0 {
            let shrink = 1.0 - self.trunk.lr * self.weight_decay;
            for net in std::iter::once(&mut ens.trunk).chain(ens.heads.iter_mut()) {
                for layer in &mut net.layers {
                    layer.weights.iter_mut().for_each(|w| *w *= shrink);
                    layer.bias.iter_mut().for_each(|b| *b *= shrink);
                }
            }
        }
    }
}

/// Draws one training minibatch. `buffer_points` are achieved goal-space
/// states (label 0); conditioned goals come from `cfg.goal_source`, positives
/// are those goals plus per-coordinate uniform noise.
pub fn sample_batch(
    ens: &Ensemble,
    cfg: &DiversifyConfig,
    buffer_points: &[GoalPoint],
    desired: &[GoalPoint],
    bounds: GoalBounds,
    rng: &mut ChaCha8Rng,
) -> ClassifierBatch {
    assert!(!buffer_points.is_empty(), "classifier update needs a nonempty buffer");
    let draw_goal = |rng: &mut ChaCha8Rng| -> GoalPoint {
        match cfg.goal_source {
            GoalSource::Uniform => bounds.sample(rng),
            // An even mixture of the two distributions: buffer states and
            // the desired-outcome examples. Mixing (rather than pooling the
            // raw point sets) keeps the handful of desired outcomes from
            // being drowned out by a large buffer.
            GoalSource::BufferAndDesired => {
                if desired.is_empty() || rng.gen_range(0..2) == 0 {
                    buffer_points[rng.gen_range(0..buffer_points.len())]
                } else {
                    desired[rng.gen_range(0..desired.len())]
                }
            }
        }
    };

    let shared_goal = draw_goal(rng);
    let goal = |rng: &mut ChaCha8Rng| -> GoalPoint {
        if cfg.per_point_goals {
            draw_goal(rng)
        } else {
            shared_goal
        }
    };

    let negatives = (0..cfg.batch_negatives)
        .map(|_| {
            let g = goal(rng);
            let s = buffer_points[rng.gen_range(0..buffer_points.len())];
            (s, g)
        })
        .collect();
    let noise = ens.goal_noise;
    let positives = (0..cfg.batch_positives)
        .map(|_| {
            let g = goal(rng);
            let jittered = [
                g[0] + rng.gen_range(-noise..=noise),
                g[1] + rng.gen_range(-noise..=noise),
            ];
            (jittered, g)
        })
        .collect();
    let targets = (0..cfg.batch_targets)
        .map(|_| {
            let g = goal(rng);
            (bounds.sample(rng), g)
        })
        .collect();
    ClassifierBatch { negatives, positives, targets }
}

/// Runs `iterations` Adam steps on freshly sampled batches. Returns the mean
/// loss across iterations (None when `iterations == 0`).
#[allow(clippy::too_many_arguments)]
pub fn update_ensemble(
    ens: &mut Ensemble,
    opt: &mut EnsembleOptimizer,
    cfg: &DiversifyConfig,
    buffer_points: &[GoalPoint],
    desired: &[GoalPoint],
    bounds: GoalBounds,
    rng: &mut ChaCha8Rng,
    iterations: usize,
) -> Option<f64> {
    if iterations == 0 {
        return None;
    }
    let mut total = 0.0;
    for _ in 0..iterations {
        let batch = sample_batch(ens, cfg, buffer_points, desired, bounds, rng);
        let (loss, grads) = classifier_loss(ens, &batch);
        debug_assert!(loss.is_finite(), "classifier loss diverged");
        opt.apply(ens, &grads);
        total += loss;
    }
    Some(total / iterations as f64)
}
