//! Greedy region-growing initial partition of the coarsest graph.

use super::coarsen::WGraph;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Grow `c` regions one at a time: seed each from a random unassigned vertex,
/// then repeatedly absorb the unassigned vertex with the strongest connection
/// to the region (ties to the lowest id) until the region reaches the weight
/// target. The last region takes whatever is left.
pub(crate) fn region_grow(g: &WGraph, c: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.n;
    let total = g.total_vwgt();
    let target = total as f64 / c as f64;

    let mut assignment = vec![usize::MAX; n];
    let mut n_unassigned = n;

    for region in 0..c {
        if n_unassigned == 0 {
            break;
        }
        if region == c - 1 {
            for a in assignment.iter_mut() {
                if *a == usize::MAX {
                    *a = region;
                }
            }
            break;
        }

        // Seed from a random unassigned vertex.
        let unassigned: Vec<usize> = (0..n).filter(|&u| assignment[u] == usize::MAX).collect();
        let seed = unassigned[rng.gen_range(0..unassigned.len())];

        let mut conn = vec![0u64; n];
        let mut weight = 0u64;
        let grab = |u: usize,
                    assignment: &mut Vec<usize>,
                    conn: &mut Vec<u64>,
                    weight: &mut u64,
                    n_unassigned: &mut usize| {
            assignment[u] = region;
            *weight += g.vwgt[u];
            *n_unassigned -= 1;
            for (v, w) in g.neighbors(u) {
                conn[v] += w;
            }
        };
        grab(seed, &mut assignment, &mut conn, &mut weight, &mut n_unassigned);

        while (weight as f64) < target && n_unassigned > 0 {
            let mut best: Option<(u64, usize)> = None;
            for u in 0..n {
                if assignment[u] != usize::MAX || conn[u] == 0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bw, bu)) => conn[u] > bw || (conn[u] == bw && u < bu),
                };
                if better {
                    best = Some((conn[u], u));
                }
            }
            match best {
                Some((_, u)) => {
                    grab(u, &mut assignment, &mut conn, &mut weight, &mut n_unassigned)
                }
                // Region has no unassigned neighbors (disconnected); stop growing.
                None => break,
            }
        }
    }

    // Unreached vertices (only possible when every region stalled): dump into
    // the last region so the assignment is total.
    for a in assignment.iter_mut() {
        if *a == usize::MAX {
            *a = c - 1;
        }
    }
    assignment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::from_edges;
    use rand::SeedableRng;

    #[test]
    fn two_triangles_split_cleanly() {
        let a = from_edges(&[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], 6).unwrap();
        let g = WGraph::from_sparse(&a);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let part = region_grow(&g, 2, &mut rng);
        assert_eq!(g.edge_cut(&part), 0);
        assert_eq!(part[0], part[1]);
        assert_eq!(part[1], part[2]);
        assert_eq!(part[3], part[4]);
        assert_ne!(part[0], part[3]);
    }

    #[test]
    fn covers_all_vertices() {
        let a = crate::synth::gnp(40, 0.1, 8).unwrap();
        let g = WGraph::from_sparse(&a);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let part = region_grow(&g, 5, &mut rng);
        assert!(part.iter().all(|&p| p < 5));
    }
}
