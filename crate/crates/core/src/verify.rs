//! Independent oracles and the check suites behind the `verify` subcommand.
//!
//! Everything here deliberately avoids the implementation paths it checks:
//! the matcher oracle enumerates assignments exhaustively, the gradient
//! oracle uses central finite differences over forward passes only, and the
//! mutual-information checks compare against hand-derived 2x2 closed forms.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::curriculum::{solve_matching, MatchProblem};
use crate::diversify::{classifier_loss, mi_loss, ClassifierBatch, DiversifyConfig, Ensemble};
use crate::ndnet::{Activation, Mlp};
use crate::GoalBounds;

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckReport { name, passed, detail }
    }
}

/// Exhaustive minimum over all injective assignments of desired outcomes to
/// candidates. `costs` is row-major M x K. Returns the minimal total and one
/// minimizing assignment (`result[j]` = candidate index).
pub fn brute_force_assignment(costs: &[f64], m: usize, k: usize) -> (f64, Vec<usize>) {
    assert!(m >= k && k >= 1, "need m >= k >= 1, got m={m} k={k}");
    assert_eq!(costs.len(), m * k);
    let mut best = f64::INFINITY;
    let mut best_assign = vec![usize::MAX; k];
    let mut current = vec![usize::MAX; k];

    fn recurse(
        costs: &[f64],
        m: usize,
        k: usize,
        j: usize,
        used: u64,
        partial: f64,
        current: &mut [usize],
        best: &mut f64,
        best_assign: &mut [usize],
    ) {
        if j == k {
            if partial < *best {
                *best = partial;
                best_assign.copy_from_slice(current);
            }
            return;
        }
        for i in 0..m {
            if used & (1 << i) != 0 {
                continue;
            }
            current[j] = i;
            recurse(costs, m, k, j + 1, used | (1 << i), partial + costs[i * k + j], current, best, best_assign);
        }
    }

    recurse(costs, m, k, 0, 0, 0.0, &mut current, &mut best, &mut best_assign);
    (best, best_assign)
}

/// 100 random rectangular cost matrices (M <= 6, K <= 4, costs U[0,10]):
/// the flow solver's total must equal the brute-force minimum exactly.
pub fn check_matching_oracle(cases: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let started = std::time::Instant::now();
    for case in 0..cases {
        let m = rng.gen_range(1..=6usize);
        let k = rng.gen_range(1..=m.min(4));
        let costs: Vec<f64> = (0..m * k).map(|_| rng.gen_range(0.0..10.0)).collect();
        let candidates = (0..m).map(|i| [i as f64, 0.0]).collect();
        let desired = (0..k).map(|j| [j as f64, 1.0]).collect();
        let problem = MatchProblem::new(candidates, desired, costs.clone()).expect("valid problem");
        let solved = match solve_matching(&problem) {
            Ok(r) => r,
            Err(e) => {
                return CheckReport::new("matching-oracle", false, format!("case {case}: solver error {e}"))
            }
        };
        let (brute_total, _) = brute_force_assignment(&costs, m, k);
        if solved.total_cost != brute_total {
            return CheckReport::new(
                "matching-oracle",
                false,
                format!(
                    "case {case} ({m}x{k}): solver {} != brute force {}",
                    solved.total_cost, brute_total
                ),
            );
        }
    }
    let elapsed = started.elapsed();
    CheckReport::new(
        "matching-oracle",
        elapsed.as_secs_f64() < 1.0,
        format!("{cases} random matrices matched brute force exactly in {elapsed:.2?}"),
    )
}

/// Central finite-difference gradient of a scalar function of the network
/// parameters. Touches only forward evaluations.
pub fn finite_diff_param_grad(mlp: &Mlp, h: f64, loss: &mut dyn FnMut(&Mlp) -> f64) -> Vec<f64> {
    let mut grads = Vec::new();
    let mut work = mlp.clone();
    for layer_idx in 0..mlp.layers.len() {
        for field in 0..2 {
            let n = if field == 0 {
                mlp.layers[layer_idx].weights.len()
            } else {
                mlp.layers[layer_idx].bias.len()
            };
            for p in 0..n {
                let read = |net: &Mlp| {
                    if field == 0 {
                        net.layers[layer_idx].weights[p]
                    } else {
                        net.layers[layer_idx].bias[p]
                    }
                };
                let write = |net: &mut Mlp, v: f64| {
                    if field == 0 {
                        net.layers[layer_idx].weights[p] = v;
                    } else {
                        net.layers[layer_idx].bias[p] = v;
                    }
                };
                let original = read(mlp);
                write(&mut work, original + h);
                let up = loss(&work);
                write(&mut work, original - h);
                let down = loss(&work);
                write(&mut work, original);
                grads.push((up - down) / (2.0 * h));
            }
        }
    }
    grads
}

fn flatten_grads(grads: &crate::ndnet::MlpGrads) -> Vec<f64> {
    grads
        .layers
        .iter()
        .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
        .collect()
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

/// Draws a random small network (up to 3 layers, up to 16 units) whose
/// pre-activations at the probe input stay away from the rectifier kink, so
/// central differences are valid.
fn random_smooth_net(rng: &mut ChaCha8Rng) -> (Mlp, Vec<f64>) {
    loop {
        let depth = rng.gen_range(1..=3usize);
        let mut dims = vec![rng.gen_range(1..=6usize)];
        for _ in 0..depth {
            dims.push(rng.gen_range(1..=16usize));
        }
        let mlp = Mlp::new(&dims, Activation::Identity, rng);
        let input: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-2.0..2.0)).collect();
        // Reject nets with a pre-activation close to a rectifier kink: the
        // analytic subgradient and the two-sided difference disagree there.
        let trace = mlp.trace(&input);
        let near_kink = trace.acts[1..trace.acts.len()]
            .iter()
            .flatten()
            .any(|&a| a.abs() < 1e-3);
        if !near_kink {
            return (mlp, input);
        }
    }
}

/// Analytic vs central finite-difference gradients on `nets` random small
/// networks, elementwise relative error below 1e-4.
pub fn check_gradient_oracle(nets: usize, seed: u64) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for net_idx in 0..nets {
        let (mlp, input) = random_smooth_net(&mut rng);
        let upstream: Vec<f64> = (0..mlp.out_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (grads, _) = mlp.backward(&input, &upstream);
        let analytic = flatten_grads(&grads);
        let numeric = finite_diff_param_grad(&mlp, 1e-4, &mut |net| {
            net.forward(&input).iter().zip(upstream.iter()).map(|(y, c)| y * c).sum()
        });
        let err = max_relative_error(&analytic, &numeric);
        worst = worst.max(err);
        if err >= 1e-4 {
            return CheckReport::new(
                "gradient-oracle",
                false,
                format!("net {net_idx}: max relative error {err:.3e} >= 1e-4"),
            );
        }
    }
    CheckReport::new(
        "gradient-oracle",
        true,
        format!("{nets} nets, worst elementwise relative error {worst:.3e}"),
    )
}

/// Deterministic 4-sample batch for the classifier-gradient check.
fn classifier_fixture(seed: u64) -> (Ensemble, ClassifierBatch) {
    let cfg = DiversifyConfig {
        trunk_hidden: vec![8, 8],
        head_hidden: vec![4],
        ..DiversifyConfig::default()
    };
    let bounds = GoalBounds { half_width: 10.0, half_height: 10.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ens = Ensemble::new(&cfg, bounds, &mut rng);
    let g = [5.0, 5.0];
    let batch = ClassifierBatch {
        negatives: vec![([-4.0, -3.0], g)],
        positives: vec![([5.2, 4.9], g)],
        targets: vec![([1.0, -7.0], g), ([-8.0, 2.0], g)],
    };
    (ens, batch)
}

/// Full classifier-loss gradient (cross-entropy terms plus the MI term)
/// against finite differences on a 4-sample batch, relative error below 1e-3.
pub fn check_classifier_gradient(seed: u64) -> CheckReport {
    let (ens, batch) = classifier_fixture(seed);
    let (_, grads) = classifier_loss(&ens, &batch);

    let mut analytic = flatten_grads(&grads.trunk);
    for h in &grads.heads {
        analytic.extend(flatten_grads(h));
    }

    let h = 1e-5;
    let mut numeric = finite_diff_param_grad(&ens.trunk, h, &mut |net| {
        let mut probe = ens.clone();
        probe.trunk = net.clone();
        classifier_loss(&probe, &batch).0
    });
    for head_idx in 0..ens.heads.len() {
        numeric.extend(finite_diff_param_grad(&ens.heads[head_idx], h, &mut |net| {
            let mut probe = ens.clone();
            probe.heads[head_idx] = net.clone();
            classifier_loss(&probe, &batch).0
        }));
    }

    let err = max_relative_error(&analytic, &numeric);
    CheckReport::new(
        "classifier-gradient",
        err < 1e-3,
        format!("max relative error {err:.3e} over {} parameters", analytic.len()),
    )
}

/// Closed-form 2x2 mutual-information cases: a constant head factorizes
/// exactly (MI ~ 0); perfectly correlated or anti-correlated hard predictions
/// give joint diag(0.5, 0.5) against a 0.25-uniform product, i.e. ln 2.
pub fn check_mi_closed_forms() -> CheckReport {
    let ln2 = std::f64::consts::LN_2;
    let constant = mi_loss(&[0.7, 0.7, 0.7, 0.7], &[0.1, 0.9, 0.4, 0.6], 1e-6);
    let correlated = mi_loss(&[1.0, 0.0], &[1.0, 0.0], 1e-6);
    let anti = mi_loss(&[1.0, 0.0], &[0.0, 1.0], 1e-6);
    let passed =
        constant < 1e-9 && (correlated - ln2).abs() < 1e-6 && (anti - ln2).abs() < 1e-6;
    CheckReport::new(
        "mi-closed-forms",
        passed,
        format!(
            "constant {constant:.2e}, correlated |d|={:.2e}, anti-correlated |d|={:.2e}",
            (correlated - ln2).abs(),
            (anti - ln2).abs()
        ),
    )
}

/// Pseudo-probability semantics: two heads at {1, 0} average to exactly 0.5,
/// and fuzzed ensemble outputs always stay inside [0, 1].
pub fn check_pseudo_probability(fuzz: usize, seed: u64) -> CheckReport {
    use crate::diversify::pseudo_from_probs;
    if pseudo_from_probs(&[1.0, 0.0]) != 0.5 {
        return CheckReport::new("pseudo-probability", false, "mean of {1,0} is not 0.5".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = DiversifyConfig {
        trunk_hidden: vec![16, 16],
        head_hidden: vec![],
        ..DiversifyConfig::default()
    };
    let bounds = GoalBounds { half_width: 18.0, half_height: 18.0 };
    let ens = Ensemble::new(&cfg, bounds, &mut rng);
    for i in 0..fuzz {
        let s = [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)];
        let g = [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)];
        let p = ens.pseudo_probability(s, g);
        if !(0.0..=1.0).contains(&p) {
            return CheckReport::new(
                "pseudo-probability",
                false,
                format!("sample {i}: pseudo probability {p} outside [0,1]"),
            );
        }
    }
    CheckReport::new(
        "pseudo-probability",
        true,
        format!("{{1,0}} -> 0.5 exactly; {fuzz} fuzzed inputs stayed in [0,1]"),
    )
}

/// The cheap oracle suites, in the order the `verify` subcommand prints them.
pub fn run_all() -> Vec<CheckReport> {
    vec![
        check_matching_oracle(100, 0xD15C0),
        check_gradient_oracle(50, 0x9AD5),
        check_classifier_gradient(0xC1A55),
        check_mi_closed_forms(),
        check_pseudo_probability(1_000_000, 0xF022),
        CheckReport::new(
            "metrics-schema",
            crate::metrics::CSV_HEADER == "iter,steps,curr_dist,success,mean_reward,clf_loss,critic_loss,actor_loss,alpha",
            format!("header `{}`", crate::metrics::CSV_HEADER),
        ),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brute_force_matches_hand_example() {
        // [[1,2],[2,1]]: diagonal wins with total 2.
        let (total, assign) = brute_force_assignment(&[1.0, 2.0, 2.0, 1.0], 2, 2);
        assert_eq!(total, 2.0);
        assert_eq!(assign, vec![0, 1]);
    }

    #[test]
    fn matching_oracle_passes() {
        let report = check_matching_oracle(100, 0xD15C0);
        assert!(report.passed, "{}", report.detail);
    }

    #[test]
    fn gradient_oracle_passes() {
        let report = check_gradient_oracle(50, 0x9AD5);
        assert!(report.passed, "{}", report.detail);
    }

    #[test]
    fn classifier_gradient_passes() {
        let report = check_classifier_gradient(0xC1A55);
        assert!(report.passed, "{}", report.detail);
    }

    #[test]
    fn mi_closed_forms_pass() {
        let report = check_mi_closed_forms();
        assert!(report.passed, "{}", report.detail);
    }
}
