//! Boundary Kernighan-Lin / Fiduccia-Mattheyses refinement and the balance
//! repair pass that enforces the hard size cap.

use super::coarsen::WGraph;

/// Up to `max_passes` greedy passes. Each pass repeatedly applies the best
/// strictly-positive-gain boundary move that keeps every cluster within
/// `max_size` and never empties a cluster; moved vertices stay locked for the
/// rest of the pass. The cut is therefore non-increasing move by move.
pub(crate) fn fm_refine(
    g: &WGraph,
    part: &mut [usize],
    c: usize,
    max_passes: usize,
    max_size: u64,
) {
    if g.n == 0 || c <= 1 {
        return;
    }
    for _ in 0..max_passes {
        if !fm_pass(g, part, c, max_size) {
            break;
        }
    }
}

fn cluster_loads(g: &WGraph, part: &[usize], c: usize) -> (Vec<u64>, Vec<usize>) {
    let mut weight = vec![0u64; c];
    let mut count = vec![0usize; c];
    for u in 0..g.n {
        weight[part[u]] += g.vwgt[u];
        count[part[u]] += 1;
    }
    (weight, count)
}

/// One pass; returns true when at least one move was applied.
fn fm_pass(g: &WGraph, part: &mut [usize], c: usize, max_size: u64) -> bool {
    let (mut weight, mut count) = cluster_loads(g, part, c);
    let mut locked = vec![false; g.n];
    let mut moved = false;

    loop {
        let mut best: Option<(i64, usize, usize)> = None; // (gain, vertex, dest)
        let mut ext = vec![0u64; c];
        for u in 0..g.n {
            if locked[u] || count[part[u]] <= 1 {
                continue;
            }
            let from = part[u];
            let mut internal = 0u64;
            let mut touched: Vec<usize> = Vec::new();
            for (v, w) in g.neighbors(u) {
                if part[v] == from {
                    internal += w;
                } else {
                    if ext[part[v]] == 0 {
                        touched.push(part[v]);
                    }
                    ext[part[v]] += w;
                }
            }
            for &to in &touched {
                if weight[to] + g.vwgt[u] <= max_size {
                    let gain = ext[to] as i64 - internal as i64;
                    let better = match best {
                        None => gain > 0,
                        Some((bg, bu, bt)) => {
                            gain > bg || (gain == bg && (u < bu || (u == bu && to < bt)))
                        }
                    };
                    if gain > 0 && better {
                        best = Some((gain, u, to));
                    }
                }
            }
            for &to in &touched {
                ext[to] = 0;
            }
        }

        match best {
            Some((_, u, to)) => {
                let from = part[u];
                weight[from] -= g.vwgt[u];
                count[from] -= 1;
                weight[to] += g.vwgt[u];
                count[to] += 1;
                part[u] = to;
                locked[u] = true;
                moved = true;
            }
            None => break,
        }
    }
    moved
}

/// Force every cluster non-empty and under `max_size`, choosing the moves
/// that hurt the cut least. May increase the cut; runs before refinement.
pub(crate) fn repair_balance(g: &WGraph, part: &mut [usize], c: usize, max_size: u64) {
    let (mut weight, mut count) = cluster_loads(g, part, c);

    // Fill empty clusters from the heaviest cluster.
    loop {
        let empty = (0..c).find(|&t| count[t] == 0);
        let Some(empty) = empty else { break };
        let donor = (0..c)
            .filter(|&t| count[t] > 1)
            .max_by_key(|&t| (weight[t], std::cmp::Reverse(t)))
            .expect("some cluster must hold more than one vertex");
        let u = cheapest_leaver(g, part, donor);
        weight[donor] -= g.vwgt[u];
        count[donor] -= 1;
        weight[empty] += g.vwgt[u];
        count[empty] += 1;
        part[u] = empty;
    }

    // Shed weight from oversized clusters into the lightest cluster. A move
    // is taken only when it strictly lowers the donor below the dest's new
    // weight ceiling, so the sorted weight vector strictly decreases and the
    // loop terminates; with unit vertex weights (the finest level) this rule
    // always fires while any cluster sits above the cap.
    loop {
        let over = (0..c)
            .filter(|&t| weight[t] > max_size && count[t] > 1)
            .max_by_key(|&t| (weight[t], std::cmp::Reverse(t)));
        let Some(over) = over else { break };
        let dest = (0..c)
            .filter(|&t| t != over)
            .min_by_key(|&t| (weight[t], t))
            .expect("at least two clusters");
        let u = cheapest_leaver(g, part, over);
        if weight[dest] + g.vwgt[u] >= weight[over] {
            break; // moving would not reduce imbalance (oversized coarse vertex)
        }
        weight[over] -= g.vwgt[u];
        count[over] -= 1;
        weight[dest] += g.vwgt[u];
        count[dest] += 1;
        part[u] = dest;
    }
}

/// Vertex of `cluster` with the least internal connectivity (ties to the
/// lowest id) — the cheapest vertex to give away.
fn cheapest_leaver(g: &WGraph, part: &[usize], cluster: usize) -> usize {
    let mut best: Option<(u64, usize)> = None;
    for u in 0..g.n {
        if part[u] != cluster {
            continue;
        }
        let internal: u64 = g
            .neighbors(u)
            .filter(|&(v, _)| part[v] == cluster)
            .map(|(_, w)| w)
            .sum();
        let better = match best {
            None => true,
            Some((bi, bu)) => internal < bi || (internal == bi && u < bu),
        };
        if better {
            best = Some((internal, u));
        }
    }
    best.expect("cluster is non-empty").1
}
