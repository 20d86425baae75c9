//! Multilevel coarsening via heavy-edge matching.
//!
//! Vertex weights track how many original nodes a coarse vertex stands for;
//! edge weights count collapsed original edges; `self_wgt` keeps the weight
//! of edges that vanished inside a merged pair so no weight is ever lost.

use crate::sparse::SparseMatrix;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

/// Weighted graph in adjacency-array form, used internally by the partitioner.
#[derive(Debug, Clone)]
pub(crate) struct WGraph {
    pub n: usize,
    pub xadj: Vec<usize>,
    pub adjncy: Vec<usize>,
    pub ewgt: Vec<u64>,
    pub vwgt: Vec<u64>,
    pub self_wgt: Vec<u64>,
}

impl WGraph {
    pub fn from_sparse(a: &SparseMatrix) -> WGraph {
        let n = a.n_rows();
        let mut xadj = Vec::with_capacity(n + 1);
        let mut adjncy = Vec::with_capacity(a.nnz());
        xadj.push(0);
        for r in 0..n {
            let (cols, _) = a.row(r);
            for &c in cols {
                if c != r {
                    adjncy.push(c);
                }
            }
            xadj.push(adjncy.len());
        }
        let m = adjncy.len();
        WGraph {
            n,
            xadj,
            adjncy,
            ewgt: vec![1; m],
            vwgt: vec![1; n],
            self_wgt: vec![0; n],
        }
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        let span = self.xadj[u]..self.xadj[u + 1];
        self.adjncy[span.clone()]
            .iter()
            .copied()
            .zip(self.ewgt[span].iter().copied())
    }

    pub fn total_vwgt(&self) -> u64 {
        self.vwgt.iter().sum()
    }

    pub fn total_ewgt(&self) -> u64 {
        self.ewgt.iter().sum()
    }

    pub fn total_self_wgt(&self) -> u64 {
        self.self_wgt.iter().sum()
    }

    /// Sum of edge weights crossing the given assignment (directed count halved).
    pub fn edge_cut(&self, part: &[usize]) -> u64 {
        let mut cut = 0u64;
        for u in 0..self.n {
            for (v, w) in self.neighbors(u) {
                if part[u] != part[v] {
                    cut += w;
                }
            }
        }
        cut / 2
    }
}

/// One coarsening step: `graph` is the coarse graph, `cmap[u]` the coarse
/// vertex standing for fine vertex `u`.
#[derive(Debug)]
pub(crate) struct CoarseLevel {
    pub graph: WGraph,
    pub cmap: Vec<usize>,
}

/// Heavy-edge matching: visit vertices in a seeded random order, match each
/// unmatched vertex with its heaviest unmatched neighbor (ties to the lowest
/// node id). Returns the fine-to-coarse map and the coarse vertex count.
fn heavy_edge_matching(g: &WGraph, rng: &mut ChaCha8Rng) -> (Vec<usize>, usize) {
    let mut order: Vec<usize> = (0..g.n).collect();
    order.shuffle(rng);

    let mut partner: Vec<Option<usize>> = vec![None; g.n];
    for &u in &order {
        if partner[u].is_some() {
            continue;
        }
        let mut best: Option<(u64, usize)> = None;
        for (v, w) in g.neighbors(u) {
            if partner[v].is_some() || v == u {
                continue;
            }
            let better = match best {
                None => true,
                Some((bw, bv)) => w > bw || (w == bw && v < bv),
            };
            if better {
                best = Some((w, v));
            }
        }
        match best {
            Some((_, v)) => {
                partner[u] = Some(v);
                partner[v] = Some(u);
            }
            None => partner[u] = Some(u),
        }
    }

    let mut cmap = vec![usize::MAX; g.n];
    let mut next = 0usize;
    for u in 0..g.n {
        let p = partner[u].unwrap_or(u);
        if cmap[u] == usize::MAX {
            cmap[u] = next;
            if p != u {
                cmap[p] = next;
            }
            next += 1;
        }
    }
    (cmap, next)
}

/// Contract `g` along `cmap` into a coarse graph with merged parallel edges.
fn contract(g: &WGraph, cmap: &[usize], n_coarse: usize) -> WGraph {
    let mut vwgt = vec![0u64; n_coarse];
    let mut self_wgt = vec![0u64; n_coarse];
    for u in 0..g.n {
        vwgt[cmap[u]] += g.vwgt[u];
        self_wgt[cmap[u]] += g.self_wgt[u];
    }

    // Gather cross edges per coarse vertex, then sort and merge duplicates.
    let mut buckets: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n_coarse];
    for u in 0..g.n {
        let cu = cmap[u];
        for (v, w) in g.neighbors(u) {
            let cv = cmap[v];
            if cu == cv {
                self_wgt[cu] += w;
            } else {
                buckets[cu].push((cv, w));
            }
        }
    }
    // Internal weight was added once per directed entry; halve nothing — the
    // conservation law is stated over directed totals.

    let mut xadj = Vec::with_capacity(n_coarse + 1);
    let mut adjncy = Vec::new();
    let mut ewgt = Vec::new();
    xadj.push(0);
    for bucket in &mut buckets {
        bucket.sort_unstable();
        let mut i = 0;
        while i < bucket.len() {
            let (v, mut w) = bucket[i];
            let mut j = i + 1;
            while j < bucket.len() && bucket[j].0 == v {
                w += bucket[j].1;
                j += 1;
            }
            adjncy.push(v);
            ewgt.push(w);
            i = j;
        }
        xadj.push(adjncy.len());
    }

    WGraph {
        n: n_coarse,
        xadj,
        adjncy,
        ewgt,
        vwgt,
        self_wgt,
    }
}

/// Coarsen until at most `stop_n` vertices remain or contraction stalls.
pub(crate) fn multilevel_coarsen(g: &WGraph, stop_n: usize, rng: &mut ChaCha8Rng) -> Vec<CoarseLevel> {
    let conserved = g.total_ewgt() + g.total_self_wgt();
    let mut levels: Vec<CoarseLevel> = Vec::new();
    let mut current = g.clone();
    while current.n > stop_n {
        let (cmap, n_coarse) = heavy_edge_matching(&current, rng);
        // Stalled contraction (e.g. a graph of isolated vertices): stop.
        if n_coarse as f64 > current.n as f64 * 0.95 {
            break;
        }
        let coarse = contract(&current, &cmap, n_coarse);
        // No edge weight may vanish: collapsed edges move into self weights.
        debug_assert_eq!(coarse.total_ewgt() + coarse.total_self_wgt(), conserved);
        debug_assert_eq!(coarse.total_vwgt(), g.total_vwgt());
        current = coarse.clone();
        levels.push(CoarseLevel { graph: coarse, cmap });
    }
    levels
}
