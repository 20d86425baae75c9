//! Node clustering: a self-contained multilevel partitioner (heavy-edge
//! matching, greedy region growing, boundary FM refinement), the random
//! baseline, and partition-quality diagnostics.

mod coarsen;
mod initial;
mod refine;

use crate::error::{Error, Result};
use crate::labels::{entropy, LabelTable};
use crate::sparse::SparseMatrix;
use coarsen::{multilevel_coarsen, WGraph};
use initial::region_grow;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refine::{fm_refine, repair_balance};
use serde::Serialize;
use std::path::Path;

/// Soft balance bound used while refining.
const SOFT_BALANCE: f64 = 1.05;
/// Hard balance cap enforced on the final assignment.
const HARD_BALANCE: f64 = 1.3;
/// Refinement passes per level.
const REFINE_PASSES: usize = 8;
/// Independent region-growing attempts at the coarsest level.
const INITIAL_ATTEMPTS: usize = 4;

/// A disjoint cover of the node set by non-empty clusters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    n_clusters: usize,
    assignment: Vec<usize>,
    clusters: Vec<Vec<usize>>,
}

impl Partition {
    /// Build from a per-node assignment; cluster ids must be `< n_clusters`
    /// and every cluster must be non-empty.
    pub fn from_assignment(n_clusters: usize, assignment: Vec<usize>) -> Result<Self> {
        if n_clusters == 0 {
            return Err(Error::input("need at least one cluster"));
        }
        let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
        for (node, &t) in assignment.iter().enumerate() {
            if t >= n_clusters {
                return Err(Error::input(format!(
                    "node {node} assigned to cluster {t}, out of range"
                )));
            }
            clusters[t].push(node);
        }
        if let Some(empty) = clusters.iter().position(|c| c.is_empty()) {
            return Err(Error::input(format!("cluster {empty} is empty")));
        }
        Ok(Partition {
            n_clusters,
            assignment,
            clusters,
        })
    }

    pub fn n_clusters(&self) -> usize {
        self.n_clusters
    }

    pub fn n_nodes(&self) -> usize {
        self.assignment.len()
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn cluster(&self, t: usize) -> &[usize] {
        &self.clusters[t]
    }

    pub fn cluster_of(&self, node: usize) -> usize {
        self.assignment[node]
    }

    pub fn max_cluster_size(&self) -> usize {
        self.clusters.iter().map(|c| c.len()).max().unwrap_or(0)
    }

    /// max cluster size / (N / c).
    pub fn balance(&self) -> f64 {
        self.max_cluster_size() as f64 * self.n_clusters as f64 / self.n_nodes() as f64
    }
}

/// Quality statistics of a partition against its graph.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionQuality {
    pub edge_cut: u64,
    pub within_edges: u64,
    pub within_fraction: f64,
    pub balance: f64,
    /// Per-cluster Shannon entropy (nats) of the label histogram; empty when
    /// no labels were supplied.
    pub label_entropy: Vec<f64>,
}

impl PartitionQuality {
    pub fn mean_label_entropy(&self) -> f64 {
        if self.label_entropy.is_empty() {
            0.0
        } else {
            self.label_entropy.iter().sum::<f64>() / self.label_entropy.len() as f64
        }
    }
}

fn check_cluster_count(n: usize, c: usize) -> Result<()> {
    if c < 1 {
        return Err(Error::input("cluster count must be at least 1"));
    }
    if c > n {
        return Err(Error::input(format!(
            "cluster count {c} exceeds node count {n}"
        )));
    }
    Ok(())
}

fn size_cap(total: u64, c: usize, factor: f64, min_feasible: u64) -> u64 {
    let target = total as f64 / c as f64;
    ((target * factor).floor() as u64)
        .max((target.ceil()) as u64)
        .max(min_feasible)
}

/// Multilevel METIS-style partitioning: coarsen by heavy-edge matching, grow
/// an initial partition on the coarsest graph, then project back refining at
/// every level. Deterministic for a fixed seed; final balance is capped at
/// 1.3 (or the smallest feasible cluster size on tiny graphs).
pub fn metis_like_partition(a: &SparseMatrix, c: usize, seed: u64) -> Result<Partition> {
    if !a.is_square() {
        return Err(Error::input("adjacency must be square"));
    }
    let n = a.n_rows();
    check_cluster_count(n, c)?;
    if c == 1 {
        return Partition::from_assignment(1, vec![0; n]);
    }
    if c == n {
        return Partition::from_assignment(n, (0..n).collect());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fine = WGraph::from_sparse(a);
    let total = fine.total_vwgt();

    let stop_n = (2 * c).max(100);
    let levels = multilevel_coarsen(&fine, stop_n, &mut rng);

    let coarsest: &WGraph = levels.last().map(|l| &l.graph).unwrap_or(&fine);

    // Several seeded region-growing attempts; keep the cheapest cut.
    let mut best: Option<(u64, Vec<usize>)> = None;
    for _ in 0..INITIAL_ATTEMPTS {
        let mut part = region_grow(coarsest, c, &mut rng);
        let max_vwgt = coarsest.vwgt.iter().copied().max().unwrap_or(1);
        let cap = size_cap(total, c, HARD_BALANCE, max_vwgt);
        repair_balance(coarsest, &mut part, c, cap);
        let soft = size_cap(total, c, SOFT_BALANCE, max_vwgt);
        fm_refine(coarsest, &mut part, c, REFINE_PASSES, soft);
        let cut = coarsest.edge_cut(&part);
        if best.as_ref().is_none_or(|(bc, _)| cut < *bc) {
            best = Some((cut, part));
        }
    }
    let mut part = best.expect("at least one attempt").1;

    // Uncoarsen: project through each level, repairing and refining.
    for i in (0..levels.len()).rev() {
        let fine_graph: &WGraph = if i == 0 { &fine } else { &levels[i - 1].graph };
        let cmap = &levels[i].cmap;
        let mut fine_part = vec![0usize; fine_graph.n];
        for u in 0..fine_graph.n {
            fine_part[u] = part[cmap[u]];
        }
        let max_vwgt = fine_graph.vwgt.iter().copied().max().unwrap_or(1);
        let cap = size_cap(total, c, HARD_BALANCE, max_vwgt);
        repair_balance(fine_graph, &mut fine_part, c, cap);
        let soft = size_cap(total, c, SOFT_BALANCE, max_vwgt);
        fm_refine(fine_graph, &mut fine_part, c, REFINE_PASSES, soft);
        part = fine_part;
    }

    // Final hard cap at unit vertex weights.
    let cap = size_cap(total, c, HARD_BALANCE, 1);
    repair_balance(&fine, &mut part, c, cap);
    let soft = size_cap(total, c, SOFT_BALANCE, 1);
    fm_refine(&fine, &mut part, c, REFINE_PASSES, soft);

    Partition::from_assignment(c, part)
}

/// Uniform random assignment; empty clusters are repaired by moving one node
/// out of the largest cluster. Deterministic for a fixed seed.
pub fn random_partition(n: usize, c: usize, seed: u64) -> Result<Partition> {
    check_cluster_count(n, c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();

    let mut counts = vec![0usize; c];
    for &t in &assignment {
        counts[t] += 1;
    }
    loop {
        let Some(empty) = (0..c).find(|&t| counts[t] == 0) else {
            break;
        };
        let largest = (0..c).max_by_key(|&t| (counts[t], std::cmp::Reverse(t))).unwrap();
        let node = assignment
            .iter()
            .position(|&t| t == largest)
            .expect("largest cluster is non-empty");
        assignment[node] = empty;
        counts[largest] -= 1;
        counts[empty] += 1;
    }
    Partition::from_assignment(c, assignment)
}

/// Exact cut/balance statistics, plus per-cluster label entropy when labels
/// are available.
pub fn quality(
    a: &SparseMatrix,
    p: &Partition,
    labels: Option<&LabelTable>,
) -> Result<PartitionQuality> {
    if p.n_nodes() != a.n_rows() {
        return Err(Error::input(format!(
            "partition covers {} nodes but graph has {}",
            p.n_nodes(),
            a.n_rows()
        )));
    }
    let mut cut = 0u64;
    let mut within = 0u64;
    for r in 0..a.n_rows() {
        let (cols, _) = a.row(r);
        for &c in cols {
            if c <= r {
                continue; // count each undirected edge once
            }
            if p.cluster_of(r) == p.cluster_of(c) {
                within += 1;
            } else {
                cut += 1;
            }
        }
    }
    let total = within + cut;
    let within_fraction = if total == 0 {
        1.0
    } else {
        within as f64 / total as f64
    };

    let label_entropy = match labels {
        Some(table) => {
            if table.n_nodes() != p.n_nodes() {
                return Err(Error::input("label table does not match partition size"));
            }
            (0..p.n_clusters())
                .map(|t| entropy(&table.histogram(p.cluster(t).iter().copied())))
                .collect()
        }
        None => Vec::new(),
    };

    Ok(PartitionQuality {
        edge_cut: cut,
        within_edges: within,
        within_fraction,
        balance: p.balance(),
        label_entropy,
    })
}

/// Write the partition in the text exchange format: one "node\tcluster" line
/// per node, nodes ascending.
pub fn write_partition(path: &Path, p: &Partition) -> Result<()> {
    let mut out = String::with_capacity(p.n_nodes() * 8);
    for (node, &t) in p.assignment().iter().enumerate() {
        out.push_str(&format!("{node}\t{t}\n"));
    }
    crate::data::write_atomic(path, out.as_bytes())
}

/// Read the text exchange format. Node ids must appear in ascending order
/// starting at 0; cluster ids are compacted to drop empty clusters (external
/// tools occasionally emit them).
pub fn read_partition(path: &Path, expect_n: Option<usize>) -> Result<Partition> {
    let text = std::fs::read_to_string(path)?;
    let display = path.display().to_string();
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (node_tok, cluster_tok) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::data(
                    &display,
                    idx + 1,
                    "expected \"node\\tcluster\"",
                ))
            }
        };
        let node: usize = node_tok
            .trim()
            .parse()
            .map_err(|_| Error::data(&display, idx + 1, format!("bad node id `{node_tok}`")))?;
        if node != raw.len() {
            return Err(Error::data(
                &display,
                idx + 1,
                format!("expected node {} in ascending order, found {node}", raw.len()),
            ));
        }
        let cluster: usize = cluster_tok.trim().parse().map_err(|_| {
            Error::data(&display, idx + 1, format!("bad cluster id `{cluster_tok}`"))
        })?;
        raw.push(cluster);
    }
    if let Some(n) = expect_n {
        if raw.len() != n {
            return Err(Error::input(format!(
                "partition file covers {} nodes but graph has {n}",
                raw.len()
            )));
        }
    }
    if raw.is_empty() {
        return Err(Error::input("partition file is empty"));
    }
    // Compact cluster ids, preserving order of first appearance by id.
    let max_id = *raw.iter().max().unwrap();
    let mut used = vec![false; max_id + 1];
    for &t in &raw {
        used[t] = true;
    }
    let mut remap = vec![usize::MAX; max_id + 1];
    let mut next = 0usize;
    for (id, &u) in used.iter().enumerate() {
        if u {
            remap[id] = next;
            next += 1;
        }
    }
    let assignment: Vec<usize> = raw.into_iter().map(|t| remap[t]).collect();
    Partition::from_assignment(next, assignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::from_edges;

    fn two_triangles() -> SparseMatrix {
        from_edges(&[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], 6).unwrap()
    }

    fn k5_bridge() -> SparseMatrix {
        let mut edges = Vec::new();
        for i in 0..5 {
            for j in i + 1..5 {
                edges.push((i, j));
                edges.push((i + 5, j + 5));
            }
        }
        edges.push((0, 5));
        from_edges(&edges, 10).unwrap()
    }

    /// Brute-force minimum cut over all 2-partitions within the balance cap.
    fn brute_force_min_cut_2(a: &SparseMatrix) -> u64 {
        let n = a.n_rows();
        let cap = ((n as f64 / 2.0 * 1.3).floor() as usize).max(n.div_ceil(2));
        let mut best = u64::MAX;
        for mask in 1u32..(1 << n) - 1 {
            let size = mask.count_ones() as usize;
            if size > cap || n - size > cap {
                continue;
            }
            let mut cut = 0u64;
            for r in 0..n {
                let (cols, _) = a.row(r);
                for &c in cols {
                    if c > r && ((mask >> r) & 1) != ((mask >> c) & 1) {
                        cut += 1;
                    }
                }
            }
            best = best.min(cut);
        }
        best
    }

    #[test]
    fn single_cluster_trivial() {
        let a = two_triangles();
        let p = metis_like_partition(&a, 1, 0).unwrap();
        assert_eq!(p.n_clusters(), 1);
        let q = quality(&a, &p, None).unwrap();
        assert_eq!(q.edge_cut, 0);
        assert_eq!(q.within_fraction, 1.0);
    }

    #[test]
    fn two_triangles_perfect_split() {
        let a = two_triangles();
        assert_eq!(brute_force_min_cut_2(&a), 0);
        for seed in 0..5 {
            let p = metis_like_partition(&a, 2, seed).unwrap();
            let q = quality(&a, &p, None).unwrap();
            assert_eq!(q.edge_cut, 0, "seed {seed}");
        }
    }

    #[test]
    fn k5_bridge_cut_is_one() {
        let a = k5_bridge();
        assert_eq!(brute_force_min_cut_2(&a), 1);
        for seed in 0..5 {
            let p = metis_like_partition(&a, 2, seed).unwrap();
            let q = quality(&a, &p, None).unwrap();
            assert_eq!(q.edge_cut, 1, "seed {seed}");
            assert!(p.balance() <= 1.3);
        }
    }

    #[test]
    fn partition_is_deterministic() {
        let a = crate::synth::gnp(120, 0.08, 3).unwrap();
        let p1 = metis_like_partition(&a, 6, 42).unwrap();
        let p2 = metis_like_partition(&a, 6, 42).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn rejects_bad_cluster_counts() {
        let a = two_triangles();
        assert!(metis_like_partition(&a, 0, 0).is_err());
        assert!(metis_like_partition(&a, 7, 0).is_err());
        assert!(random_partition(6, 0, 0).is_err());
        assert!(random_partition(6, 7, 0).is_err());
    }

    #[test]
    fn singleton_partition_covers_everything() {
        let a = two_triangles();
        let p = metis_like_partition(&a, 6, 0).unwrap();
        assert_eq!(p.max_cluster_size(), 1);
        let q = quality(&a, &p, None).unwrap();
        assert_eq!(q.within_fraction, 0.0);
    }

    #[test]
    fn random_partition_single_and_singleton() {
        let p = random_partition(5, 1, 0).unwrap();
        assert_eq!(p.n_clusters(), 1);
        let p = random_partition(5, 5, 0).unwrap();
        assert_eq!(p.max_cluster_size(), 1);
    }

    #[test]
    fn random_partition_within_fraction_near_inverse_c() {
        // Each edge lands within-cluster with probability 1/c.
        let a = crate::synth::gnp(100, 0.1, 77).unwrap();
        let mut mean = 0.0;
        for seed in 0..20 {
            let p = random_partition(100, 10, seed).unwrap();
            let q = quality(&a, &p, None).unwrap();
            mean += q.within_fraction;
        }
        mean /= 20.0;
        assert!((mean - 0.1).abs() < 0.05, "mean within fraction {mean}");
    }

    #[test]
    fn quality_counts_match_naive_double_loop() {
        let a = crate::synth::gnp(150, 0.05, 5).unwrap();
        let p = metis_like_partition(&a, 4, 9).unwrap();
        let q = quality(&a, &p, None).unwrap();
        let mut cut = 0u64;
        let mut within = 0u64;
        let dense = a.to_dense();
        for i in 0..150 {
            for j in i + 1..150 {
                if dense.get(i, j) != 0.0 {
                    if p.cluster_of(i) == p.cluster_of(j) {
                        within += 1;
                    } else {
                        cut += 1;
                    }
                }
            }
        }
        assert_eq!(q.edge_cut, cut);
        assert_eq!(q.within_edges, within);
        assert_eq!(cut + within, a.nnz() as u64 / 2);
    }

    #[test]
    fn label_entropy_pure_and_balanced() {
        let a = two_triangles();
        let p = metis_like_partition(&a, 2, 0).unwrap();
        // All nodes of one triangle share a label: entropy 0.
        let labels = LabelTable::multiclass(&[0, 0, 0, 1, 1, 1]).unwrap();
        let q = quality(&a, &p, Some(&labels)).unwrap();
        assert!(q.label_entropy.iter().all(|&e| e == 0.0));
        // 50/50 labels inside each cluster: entropy ln 2.
        let labels = LabelTable::multiclass(&[0, 1, 0, 1, 0, 1]).unwrap();
        let q = quality(&a, &p, Some(&labels)).unwrap();
        for &e in &q.label_entropy {
            assert!((e - std::f64::consts::LN_2).abs() < 0.3);
        }
    }

    #[test]
    fn metis_beats_random_on_sbm() {
        let mut wins = 0;
        for seed in 0..10u64 {
            let (a, _) = crate::synth::sbm(&[100, 100], 0.1, 0.01, seed).unwrap();
            let pm = metis_like_partition(&a, 2, seed).unwrap();
            let pr = random_partition(200, 2, seed).unwrap();
            let qm = quality(&a, &pm, None).unwrap();
            let qr = quality(&a, &pr, None).unwrap();
            if qm.edge_cut < qr.edge_cut {
                wins += 1;
            }
        }
        assert!(wins >= 9, "metis won only {wins}/10");
    }

    #[test]
    fn partition_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("part.tsv");
        let p = random_partition(20, 4, 3).unwrap();
        write_partition(&path, &p).unwrap();
        let back = read_partition(&path, Some(20)).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn partition_file_compacts_empty_clusters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("part.tsv");
        std::fs::write(&path, "0\t0\n1\t5\n2\t5\n").unwrap();
        let p = read_partition(&path, Some(3)).unwrap();
        assert_eq!(p.n_clusters(), 2);
        assert_eq!(p.assignment(), &[0, 1, 1]);
    }

    #[test]
    fn partition_file_rejects_disorder() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("part.tsv");
        std::fs::write(&path, "1\t0\n0\t1\n").unwrap();
        assert!(read_partition(&path, None).is_err());
    }

    #[test]
    fn balance_cap_holds_on_random_graphs() {
        for seed in 0..5u64 {
            let a = crate::synth::gnp(90, 0.06, seed).unwrap();
            for c in [2usize, 3, 7, 13] {
                let p = metis_like_partition(&a, c, seed).unwrap();
                let feasible = ((90usize).div_ceil(c)) as f64 * c as f64 / 90.0;
                assert!(
                    p.balance() <= f64::max(1.3, feasible) + 1e-9,
                    "balance {} for c={c} seed={seed}",
                    p.balance()
                );
            }
        }
    }
}
