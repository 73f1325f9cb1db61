//! Property tests for the assignment solver against the exhaustive oracle.

use frontier_core::curriculum::{solve_matching, MatchProblem};
use frontier_core::verify::brute_force_assignment;
use proptest::prelude::*;

fn arb_problem() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (1usize..=6).prop_flat_map(|m| {
        (1usize..=m.min(4)).prop_flat_map(move |k| {
            proptest::collection::vec(0.0f64..10.0, m * k).prop_map(move |costs| (m, k, costs))
        })
    })
}

fn make_problem(m: usize, k: usize, costs: Vec<f64>) -> MatchProblem {
    let candidates = (0..m).map(|i| [i as f64, 0.0]).collect();
    let desired = (0..k).map(|j| [j as f64, 1.0]).collect();
    MatchProblem::new(candidates, desired, costs).unwrap()
}

proptest! {
    #[test]
    fn solver_total_equals_brute_force((m, k, costs) in arb_problem()) {
        let problem = make_problem(m, k, costs.clone());
        let solved = solve_matching(&problem).unwrap();
        let (brute, _) = brute_force_assignment(&costs, m, k);
        prop_assert!((solved.total_cost - brute).abs() < 1e-9,
            "solver {} vs brute {}", solved.total_cost, brute);
        // Structural checks: perfect matching on the desired side, distinct
        // candidates.
        prop_assert_eq!(solved.assignment.len(), k);
        let mut used = std::collections::HashSet::new();
        for (j, &(cand, des)) in solved.assignment.iter().enumerate() {
            prop_assert_eq!(des, j);
            prop_assert!(cand < m);
            prop_assert!(used.insert(cand), "candidate {} reused", cand);
        }
    }

    #[test]
    fn constant_shift_preserves_assignment((m, k, costs) in arb_problem(), shift in -5.0f64..5.0) {
        let base = solve_matching(&make_problem(m, k, costs.clone())).unwrap();
        let shifted_costs: Vec<f64> = costs.iter().map(|c| c + shift).collect();
        let shifted = solve_matching(&make_problem(m, k, shifted_costs)).unwrap();
        prop_assert_eq!(&base.assignment, &shifted.assignment);
        prop_assert!((shifted.total_cost - (base.total_cost + shift * k as f64)).abs() < 1e-9);
    }

    #[test]
    fn candidate_permutation_is_equivariant((m, k, costs) in arb_problem(), seed in 0u64..1000) {
        // Continuous random costs make ties measure-zero, so the matched
        // candidate set must track a row permutation exactly.
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..m).collect();
        perm.shuffle(&mut rng);

        let base = solve_matching(&make_problem(m, k, costs.clone())).unwrap();
        let mut permuted_costs = vec![0.0; m * k];
        for (new_row, &old_row) in perm.iter().enumerate() {
            for j in 0..k {
                permuted_costs[new_row * k + j] = costs[old_row * k + j];
            }
        }
        let permuted = solve_matching(&make_problem(m, k, permuted_costs)).unwrap();
        // Map permuted assignment back through the row permutation.
        let mut mapped: Vec<(usize, usize)> = permuted
            .assignment
            .iter()
            .map(|&(cand, des)| (perm[cand], des))
            .collect();
        mapped.sort_by_key(|&(_, des)| des);
        prop_assert_eq!(&mapped, &base.assignment);
    }
}
