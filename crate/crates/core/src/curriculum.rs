//! Curriculum goal selection by bipartite matching.
//!
//! Candidate states sampled from the replay buffer form one node set, the
//! desired outcome examples the other. Edge costs are the soft-target
//! cross-entropy between the candidate's pseudo probability (conditioned on
//! the outcome) and the outcome's own self-conditioned pseudo probability, so
//! the cheapest candidates sit where the ensemble rates a state as
//! goal-like-under-uncertainty. The assignment is solved exactly with a
//! successive-shortest-paths min-cost max-flow over unit capacities.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::diversify::{cross_entropy, Ensemble};
use crate::error::{FrontierError, Result};
use crate::GoalPoint;

/// A full bipartite matching instance: M candidates x K desired outcomes with
/// a dense cost matrix (row-major, `costs[i * K + j]`).
#[derive(Debug, Clone)]
pub struct MatchProblem {
    pub candidates: Vec<GoalPoint>,
    pub desired: Vec<GoalPoint>,
    pub costs: Vec<f64>,
}

/// A perfect matching on the desired side: `assignment[j] = (candidate, j)`,
/// candidates pairwise distinct, total cost minimal.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub assignment: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl MatchProblem {
    pub fn new(candidates: Vec<GoalPoint>, desired: Vec<GoalPoint>, costs: Vec<f64>) -> Result<MatchProblem> {
        if desired.is_empty() {
            return Err(FrontierError::Matching("no desired outcomes (K = 0)".into()));
        }
        if candidates.len() < desired.len() {
            return Err(FrontierError::Matching(format!(
                "{} candidates cannot cover {} desired outcomes",
                candidates.len(),
                desired.len()
            )));
        }
        if costs.len() != candidates.len() * desired.len() {
            return Err(FrontierError::Matching(format!(
                "cost matrix has {} entries, expected {}x{}",
                costs.len(),
                candidates.len(),
                desired.len()
            )));
        }
        if !costs.iter().all(|c| c.is_finite()) {
            return Err(FrontierError::Matching("non-finite cost entry".into()));
        }
        Ok(MatchProblem { candidates, desired, costs })
    }

    #[inline]
    pub fn cost(&self, candidate: usize, desired: usize) -> f64 {
        self.costs[candidate * self.desired.len() + desired]
    }
}

/// Edge cost of assigning buffer state `s` to desired outcome `g_plus`:
/// cross-entropy between `p_pseudo(s; g+)` and the soft target
/// `y = p_pseudo(g+; g+)`, both clamped. Nonnegative, minimized over p at
/// `p = y`.
pub fn pair_cost(ens: &Ensemble, s: GoalPoint, g_plus: GoalPoint) -> f64 {
    let p = ens.pseudo_probability(s, g_plus);
    let y = ens.pseudo_probability(g_plus, g_plus);
    cross_entropy(p, y, ens.p_min)
}

/// The `+Value` cost variant: [`pair_cost`] minus the critic's value of the
/// candidate as a goal from the start state. `value_of_goal` must already be
/// bound to the start state.
pub fn value_biased_cost(
    ens: &Ensemble,
    value_of_goal: &dyn Fn(GoalPoint) -> f64,
    s: GoalPoint,
    g_plus: GoalPoint,
) -> f64 {
    pair_cost(ens, s, g_plus) - value_of_goal(s)
}

/// Samples up to `m` candidates from the buffer without replacement (shrinks
/// to the buffer size when it is smaller, but fails below K) and fills the
/// cost matrix with `cost_fn`.
pub fn build_problem_with(
    buffer_points: &[GoalPoint],
    desired: &[GoalPoint],
    m: usize,
    rng: &mut ChaCha8Rng,
    cost_fn: &dyn Fn(GoalPoint, GoalPoint) -> f64,
) -> Result<MatchProblem> {
    if buffer_points.len() < desired.len() {
        return Err(FrontierError::Matching(format!(
            "replay buffer holds {} achieved states, need at least K = {} for matching",
            buffer_points.len(),
            desired.len()
        )));
    }
    let m_eff = m.min(buffer_points.len()).max(desired.len());
    // Partial Fisher-Yates over the index range keeps the draw uniform
    // without replacement.
    let mut indices: Vec<usize> = (0..buffer_points.len()).collect();
    for slot in 0..m_eff {
        let pick = rng.gen_range(slot..indices.len());
        indices.swap(slot, pick);
    }
    let candidates: Vec<GoalPoint> = indices[..m_eff].iter().map(|&i| buffer_points[i]).collect();

    let mut costs = Vec::with_capacity(m_eff * desired.len());
    for &s in &candidates {
        for &g in desired {
            costs.push(cost_fn(s, g));
        }
    }
    MatchProblem::new(candidates, desired.to_vec(), costs)
}

/// [`build_problem_with`] using the default ensemble cost of Eq-style pair
/// cross-entropy.
pub fn build_problem(
    ens: &Ensemble,
    buffer_points: &[GoalPoint],
    desired: &[GoalPoint],
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<MatchProblem> {
    build_problem_with(buffer_points, desired, m, rng, &|s, g| pair_cost(ens, s, g))
}

const COST_EPS: f64 = 1e-12;

#[derive(Clone, Copy, PartialEq)]
struct Dist {
    cost: f64,
    /// Index of the first candidate on the path; breaks cost ties toward the
    /// lowest candidate index deterministically.
    tie: u64,
}

const UNREACHED: Dist = Dist { cost: f64::INFINITY, tie: u64::MAX };

impl Dist {
    fn better_than(self, other: Dist) -> bool {
        if self.cost < other.cost - COST_EPS {
            return true;
        }
        (self.cost - other.cost).abs() <= COST_EPS && self.tie < other.tie
    }
}

/// Exact min-cost assignment of every desired outcome to a distinct candidate
/// via successive shortest paths over the unit-capacity flow network
/// source -> candidates -> desired -> sink. Path-cost comparisons use an
/// epsilon of 1e-12; ties prefer the lowest candidate index.
pub fn solve_matching(problem: &MatchProblem) -> Result<MatchResult> {
    let m = problem.candidates.len();
    let k = problem.desired.len();
    if m < k {
        return Err(FrontierError::Matching(format!("infeasible: {m} candidates < {k} desired")));
    }

    let mut assigned_to: Vec<Option<usize>> = vec![None; k];
    let mut cand_used = vec![false; m];

    for _round in 0..k {
        // Bellman-Ford with lexicographic (cost, first-candidate) distances.
        let mut dist_cand = vec![UNREACHED; m];
        let mut dist_des = vec![UNREACHED; k];
        let mut parent_des = vec![usize::MAX; k];
        let mut parent_cand_from: Vec<Option<usize>> = vec![None; m]; // None = source

        for (i, used) in cand_used.iter().enumerate() {
            if !used {
                dist_cand[i] = Dist { cost: 0.0, tie: i as u64 };
            }
        }

        let mut changed = true;
        let mut guard = 0;
        while changed {
            changed = false;
            guard += 1;
            assert!(guard <= m + k + 2, "matching solver failed to converge (negative cycle?)");
            for i in 0..m {
                if dist_cand[i].cost.is_infinite() {
                    continue;
                }
                for j in 0..k {
                    if assigned_to[j] == Some(i) {
                        continue;
                    }
                    let cand = Dist { cost: dist_cand[i].cost + problem.cost(i, j), tie: dist_cand[i].tie };
                    if cand.better_than(dist_des[j]) {
                        dist_des[j] = cand;
                        parent_des[j] = i;
                        changed = true;
                    }
                }
            }
            for j in 0..k {
                if dist_des[j].cost.is_infinite() {
                    continue;
                }
                if let Some(i) = assigned_to[j] {
                    let cand = Dist { cost: dist_des[j].cost - problem.cost(i, j), tie: dist_des[j].tie };
                    if cand.better_than(dist_cand[i]) {
                        dist_cand[i] = cand;
                        parent_cand_from[i] = Some(j);
                        changed = true;
                    }
                }
            }
        }

        // Cheapest unmatched desired node reaches the sink.
        let mut best: Option<usize> = None;
        for j in 0..k {
            if assigned_to[j].is_some() || dist_des[j].cost.is_infinite() {
                continue;
            }
            match best {
                None => best = Some(j),
                Some(b) if dist_des[j].better_than(dist_des[b]) => best = Some(j),
                _ => {}
            }
        }
        let mut j = best.ok_or_else(|| {
            FrontierError::Matching("no augmenting path; matching infeasible".into())
        })?;

        // Augment along the alternating path back to the source.
        loop {
            let i = parent_des[j];
            assigned_to[j] = Some(i);
            match parent_cand_from[i] {
                None => {
                    cand_used[i] = true;
                    break;
                }
                Some(j_prev) => j = j_prev,
            }
        }
    }

    let assignment: Vec<(usize, usize)> =
        (0..k).map(|j| (assigned_to[j].expect("perfect matching"), j)).collect();
    let total_cost = assignment.iter().map(|&(i, j)| problem.cost(i, j)).sum();
    Ok(MatchResult { assignment, total_cost })
}

/// End-to-end curriculum proposal: sample candidates, build the cost matrix,
/// solve the assignment, and return one goal per desired outcome in
/// desired-set order.
pub fn propose_curriculum(
    ens: &Ensemble,
    buffer_points: &[GoalPoint],
    desired: &[GoalPoint],
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<GoalPoint>, MatchResult)> {
    let problem = build_problem(ens, buffer_points, desired, m, rng)?;
    let result = solve_matching(&problem)?;
    let goals = result.assignment.iter().map(|&(i, _)| problem.candidates[i]).collect();
    Ok((goals, result))
}

/// Writes a round's cost matrix and assignment as a CSV pair for offline
/// inspection.
pub fn dump_matching_csv(
    problem: &MatchProblem,
    result: &MatchResult,
    costs_path: &std::path::Path,
    assignment_path: &std::path::Path,
) -> Result<()> {
    use std::io::Write;
    let mut costs = std::io::BufWriter::new(std::fs::File::create(costs_path)?);
    writeln!(costs, "candidate_x,candidate_y,{}", (0..problem.desired.len()).map(|j| format!("cost_{j}")).collect::<Vec<_>>().join(","))?;
    for (i, c) in problem.candidates.iter().enumerate() {
        let row: Vec<String> =
            (0..problem.desired.len()).map(|j| format!("{}", problem.cost(i, j))).collect();
        writeln!(costs, "{},{},{}", c[0], c[1], row.join(","))?;
    }
    let mut assign = std::io::BufWriter::new(std::fs::File::create(assignment_path)?);
    writeln!(assign, "desired_idx,desired_x,desired_y,candidate_idx,candidate_x,candidate_y,cost")?;
    for &(i, j) in &result.assignment {
        let d = problem.desired[j];
        let c = problem.candidates[i];
        writeln!(assign, "{j},{},{},{i},{},{},{}", d[0], d[1], c[0], c[1], problem.cost(i, j))?;
    }
    Ok(())
}
