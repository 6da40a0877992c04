//! Bipartite perfect matching.
//!
//! Relating the shared-action histories of two runs requires pairing up
//! their invocations one-to-one such that every pair satisfies the action's
//! precondition. That is a perfect-matching question on the bipartite graph
//! whose left nodes are one run's invocations, right nodes the other's,
//! and edges the precondition-satisfying pairs.

/// Whether the bipartite graph with `n` left and `n` right nodes and edge
/// relation `edge(l, r)` has a perfect matching. Uses the standard
/// augmenting-path algorithm (Kuhn's), `O(n^3)` calls to `edge`.
///
/// Returns `false` immediately if the two sides have different sizes
/// (callers pass multiset/sequence lengths that may differ).
pub fn has_perfect_matching(n_left: usize, n_right: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    if n_left != n_right {
        return false;
    }
    // match_of[r] = left node currently matched to right node r.
    let mut match_of: Vec<Option<usize>> = vec![None; n_right];
    for l in 0..n_left {
        let mut visited = vec![false; n_right];
        if !augment(l, &edge, &mut match_of, &mut visited) {
            return false;
        }
    }
    true
}

/// Tries to find an augmenting path from left node `l`: either an
/// unmatched right neighbour, or a matched one whose partner can be
/// re-routed.
fn augment(
    l: usize,
    edge: &impl Fn(usize, usize) -> bool,
    match_of: &mut Vec<Option<usize>>,
    visited: &mut [bool],
) -> bool {
    for r in 0..match_of.len() {
        if visited[r] || !edge(l, r) {
            continue;
        }
        visited[r] = true;
        let rematched = match match_of[r] {
            None => true,
            Some(prev) => augment(prev, edge, match_of, visited),
        };
        if rematched {
            match_of[r] = Some(l);
            return true;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Brute force: try every pairing of left nodes with right nodes.
    fn matching_by_permutations(n: usize, edge: &impl Fn(usize, usize) -> bool) -> bool {
        fn go(l: usize, n: usize, used: &mut Vec<bool>, edge: &impl Fn(usize, usize) -> bool) -> bool {
            if l == n {
                return true;
            }
            for r in 0..n {
                if !used[r] && edge(l, r) {
                    used[r] = true;
                    if go(l + 1, n, used, edge) {
                        return true;
                    }
                    used[r] = false;
                }
            }
            false
        }
        go(0, n, &mut vec![false; n], edge)
    }

    #[test]
    fn empty_graph_matches_trivially() {
        assert!(has_perfect_matching(0, 0, |_, _| false));
    }

    #[test]
    fn size_mismatch_never_matches() {
        assert!(!has_perfect_matching(1, 2, |_, _| true));
        assert!(!has_perfect_matching(3, 0, |_, _| true));
    }

    #[test]
    fn requires_augmenting_reroute() {
        // l0 - {r0, r1}, l1 - {r0}: greedy l0->r0 must be re-routed to r1.
        let edges = [(0usize, 0usize), (0, 1), (1, 0)];
        assert!(has_perfect_matching(2, 2, |l, r| edges.contains(&(l, r))));
        // Remove l0-r1 and both left nodes compete for r0.
        let edges = [(0usize, 0usize), (1, 0)];
        assert!(!has_perfect_matching(2, 2, |l, r| edges.contains(&(l, r))));
    }

    #[test]
    fn agrees_with_permutation_search_on_random_graphs() {
        let mut rng = StdRng::seed_from_u64(0x0a7c_1150_5eed);
        for case in 0..500 {
            let n = rng.random_range(0..=5usize);
            let density = rng.random_range(0.0..=1.0f64);
            let mut adj = vec![vec![false; n]; n];
            for row in adj.iter_mut() {
                for cell in row.iter_mut() {
                    *cell = rng.random_bool(density);
                }
            }
            let edge = |l: usize, r: usize| adj[l][r];
            assert_eq!(
                has_perfect_matching(n, n, edge),
                matching_by_permutations(n, &edge),
                "case {case}: n={n} adj={adj:?}"
            );
        }
    }
}
