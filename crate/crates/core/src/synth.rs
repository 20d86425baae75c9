//! Seeded synthetic graph generators: stochastic block models, G(n,p),
//! random regular graphs, and a citation-network-scale classification
//! fixture. These back the property tests and the bundled demo data.

use crate::data::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::labels::LabelTable;
use crate::sparse::{from_edges, DenseMatrix, SparseMatrix};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Erdos-Renyi G(n, p).
pub fn gnp(n: usize, p: f64, seed: u64) -> Result<SparseMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    from_edges(&edges, n)
}

/// Stochastic block model; returns the adjacency and the block id of each node.
pub fn sbm(block_sizes: &[usize], p_in: f64, p_out: f64, seed: u64) -> Result<(SparseMatrix, Vec<u32>)> {
    let n: usize = block_sizes.iter().sum();
    let mut block = Vec::with_capacity(n);
    for (b, &size) in block_sizes.iter().enumerate() {
        block.extend(std::iter::repeat(b as u32).take(size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if block[i] == block[j] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Ok((from_edges(&edges, n)?, block))
}

/// Random d-regular graph via the pairing model, retried until simple.
pub fn random_regular(n: usize, d: usize, seed: u64) -> Result<SparseMatrix> {
    if n * d % 2 != 0 {
        return Err(Error::input("n*d must be even for a d-regular graph"));
    }
    if d >= n {
        return Err(Error::input("degree must be below node count"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'attempt: for _ in 0..10_000 {
        let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat(v).take(d)).collect();
        stubs.shuffle(&mut rng);
        let mut seen = std::collections::HashSet::new();
        let mut edges = Vec::with_capacity(n * d / 2);
        for pair in stubs.chunks(2) {
            let (a, b) = (pair[0], pair[1]);
            if a == b {
                continue 'attempt;
            }
            if !seen.insert((a.min(b), a.max(b))) {
                continue 'attempt;
            }
            edges.push((a, b));
        }
        return from_edges(&edges, n);
    }
    Err(Error::input("failed to sample a simple regular graph"))
}

/// Rooted tree where every node down to `depth` has exactly `arity` children.
/// Node 0 is the root; returns the adjacency.
pub fn balanced_tree(arity: usize, depth: usize) -> Result<SparseMatrix> {
    let mut edges = Vec::new();
    let mut level: Vec<usize> = vec![0];
    let mut next_id = 1usize;
    for _ in 0..depth {
        let mut next_level = Vec::with_capacity(level.len() * arity);
        for &parent in &level {
            for _ in 0..arity {
                edges.push((parent, next_id));
                next_level.push(next_id);
                next_id += 1;
            }
        }
        level = next_level;
    }
    from_edges(&edges, next_id)
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; consumes two uniforms per call.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Class-centroid features with Gaussian noise: rows near their class mean.
pub fn class_features(
    labels: &[u32],
    n_classes: usize,
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<DenseMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = DenseMatrix::zeros(n_classes, dim);
    for v in centroids.values_mut() {
        *v = gaussian(&mut rng);
    }
    let mut x = DenseMatrix::zeros(labels.len(), dim);
    for (i, &l) in labels.iter().enumerate() {
        let c = centroids.row(l as usize).to_vec();
        let row = x.row_mut(i);
        for (dst, base) in row.iter_mut().zip(c) {
            *dst = base + noise * gaussian(&mut rng);
        }
    }
    Ok(x)
}

/// Configuration for the citation-network-scale fixture.
#[derive(Debug, Clone)]
pub struct CitationConfig {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub n_classes: usize,
    pub feature_dim: usize,
    /// Probability that a sampled edge joins two nodes of the same class.
    pub homophily: f64,
    /// Gaussian feature noise around the class centroid.
    pub feature_noise: f64,
    pub train_per_class: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for CitationConfig {
    fn default() -> Self {
        CitationConfig {
            n_nodes: 2708,
            n_edges: 5278,
            n_classes: 7,
            feature_dim: 32,
            homophily: 0.81,
            feature_noise: 4.0,
            train_per_class: 20,
            n_val: 500,
            n_test: 1000,
            seed: 20,
        }
    }
}

/// Deterministic homophilous classification graph with an exact edge count,
/// shaped like a small citation network (labels follow dense communities,
/// features cluster around per-class centroids).
pub fn citation_fixture(cfg: &CitationConfig) -> Result<Dataset> {
    let n = cfg.n_nodes;
    let k = cfg.n_classes;
    if cfg.n_edges > n * (n - 1) / 2 {
        return Err(Error::input("too many edges requested"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Uneven class sizes, heavier early classes, like real citation data.
    let weights: Vec<f64> = (0..k).map(|c| 2.0 / (1.0 + c as f64)).collect();
    let total_weight: f64 = weights.iter().sum();
    let mut labels = vec![0u32; n];
    for l in labels.iter_mut() {
        let mut r = rng.gen::<f64>() * total_weight;
        let mut cls = k - 1;
        for (c, w) in weights.iter().enumerate() {
            r -= w;
            if r <= 0.0 {
                cls = c;
                break;
            }
        }
        *l = cls as u32;
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (node, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(node);
    }

    // Sample distinct edges until the exact target count is reached.
    let mut seen = std::collections::HashSet::new();
    let mut edges = Vec::with_capacity(cfg.n_edges);
    while edges.len() < cfg.n_edges {
        let same_class = rng.gen::<f64>() < cfg.homophily;
        let a = rng.gen_range(0..n);
        let b = if same_class {
            let peers = &by_class[labels[a] as usize];
            peers[rng.gen_range(0..peers.len())]
        } else {
            rng.gen_range(0..n)
        };
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        if seen.insert(key) {
            edges.push(key);
        }
    }
    let graph = from_edges(&edges, n)?;
    debug_assert_eq!(graph.nnz(), 2 * cfg.n_edges);

    let features = class_features(&labels, k, cfg.feature_dim, cfg.feature_noise, cfg.seed ^ 0x5eed)?;

    // Planetoid-style split: a few labeled nodes per class, then val and test.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut train = Vec::new();
    let mut taken = vec![false; n];
    let mut per_class = vec![0usize; k];
    for &node in &order {
        let c = labels[node] as usize;
        if per_class[c] < cfg.train_per_class {
            per_class[c] += 1;
            taken[node] = true;
            train.push(node);
        }
    }
    let mut val = Vec::new();
    let mut test = Vec::new();
    for &node in &order {
        if taken[node] {
            continue;
        }
        if val.len() < cfg.n_val {
            val.push(node);
        } else if test.len() < cfg.n_test {
            test.push(node);
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();

    Dataset::new(
        graph,
        features,
        LabelTable::multiclass(&labels)?,
        Splits { train, val, test },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sbm_is_deterministic_and_blocky() {
        let (a, blocks) = sbm(&[50, 50], 0.2, 0.01, 3).unwrap();
        let (b, _) = sbm(&[50, 50], 0.2, 0.01, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(blocks[0], 0);
        assert_eq!(blocks[99], 1);
        let mut within = 0usize;
        let mut cross = 0usize;
        for r in 0..100 {
            let (cols, _) = a.row(r);
            for &c in cols {
                if blocks[r] == blocks[c] {
                    within += 1;
                } else {
                    cross += 1;
                }
            }
        }
        assert!(within > 5 * cross, "within={within} cross={cross}");
    }

    #[test]
    fn random_regular_has_uniform_degree() {
        let a = random_regular(100, 3, 7).unwrap();
        for r in 0..100 {
            assert_eq!(a.row(r).0.len(), 3);
        }
    }

    #[test]
    fn balanced_tree_counts() {
        // arity 3, depth 2: 1 + 3 + 9 nodes, 12 edges.
        let t = balanced_tree(3, 2).unwrap();
        assert_eq!(t.n_rows(), 13);
        assert_eq!(t.nnz(), 24);
        assert_eq!(t.row(0).0.len(), 3);
    }

    #[test]
    fn citation_fixture_exact_counts() {
        let cfg = CitationConfig {
            n_nodes: 300,
            n_edges: 700,
            n_classes: 5,
            feature_dim: 16,
            train_per_class: 5,
            n_val: 40,
            n_test: 80,
            ..CitationConfig::default()
        };
        let ds = citation_fixture(&cfg).unwrap();
        assert_eq!(ds.n_nodes(), 300);
        assert_eq!(ds.graph.nnz(), 1400);
        assert_eq!(ds.splits.train.len(), 25);
        assert_eq!(ds.splits.val.len(), 40);
        assert_eq!(ds.splits.test.len(), 80);
        let again = citation_fixture(&cfg).unwrap();
        assert_eq!(ds.graph, again.graph);
        assert_eq!(ds.features, again.features);
    }
}
