//! Stochastic multiple-partition batching: sample q clusters per step,
//! assemble their union subgraph with between-cluster links restored, and
//! renormalize the combined adjacency with the subgraph's own degrees.

use crate::error::{Error, Result};
use crate::labels::{entropy, LabelTable};
use crate::partition::Partition;
use crate::seeds::index_seed;
use crate::sparse::{
    extract_submatrix, row_normalize_aug, sym_normalize_aug, DenseMatrix, SparseMatrix,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Which normalization produces the propagation matrix A'.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// (D+I)^-1 (A+I); the default.
    Row,
    /// D~^-1/2 (A+I) D~^-1/2.
    Sym,
}

impl NormMode {
    pub fn apply(self, a: &SparseMatrix) -> Result<SparseMatrix> {
        match self {
            NormMode::Row => row_normalize_aug(a),
            NormMode::Sym => sym_normalize_aug(a),
        }
    }
}

/// Cluster visit order for one epoch: a fresh permutation of `[0, p)` chunked
/// into groups of `q`; the final group may be smaller so that every cluster
/// appears exactly once per epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochSchedule {
    order: Vec<usize>,
    group_size: usize,
}

impl EpochSchedule {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn n_batches(&self) -> usize {
        self.order.len().div_ceil(self.group_size)
    }

    pub fn groups(&self) -> impl Iterator<Item = &[usize]> {
        self.order.chunks(self.group_size)
    }
}

/// Permutation for (seed, epoch); without-replacement grouping of clusters.
pub fn make_schedule(p: usize, q: usize, seed: u64, epoch: u64) -> Result<EpochSchedule> {
    if p == 0 {
        return Err(Error::input("schedule needs at least one cluster"));
    }
    if q < 1 || q > p {
        return Err(Error::input(format!(
            "clusters per batch must lie in [1, {p}], got {q}"
        )));
    }
    let mut order: Vec<usize> = (0..p).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(index_seed(seed, epoch));
    order.shuffle(&mut rng);
    Ok(EpochSchedule {
        order,
        group_size: q,
    })
}

/// One training batch: the induced subgraph over the sampled clusters.
#[derive(Debug, Clone)]
pub struct Batch {
    /// Union of the sampled clusters' nodes, ascending global ids.
    pub global_ids: Vec<usize>,
    /// Renormalized adjacency over local ids.
    pub adj_norm: SparseMatrix,
    /// Nonzeros of the raw (un-normalized) subgraph adjacency; this is the
    /// batch's embedding utilization.
    pub raw_nnz: usize,
    pub features: DenseMatrix,
    pub labels: LabelTable,
    pub train_mask: Vec<bool>,
    pub cluster_ids: Vec<usize>,
    /// First-layer propagation product, filled in when precompute is on.
    pub precomputed_ax: Option<DenseMatrix>,
}

impl Batch {
    pub fn n_nodes(&self) -> usize {
        self.global_ids.len()
    }

    pub fn n_train(&self) -> usize {
        self.train_mask.iter().filter(|&&m| m).count()
    }

    /// Cache A'X for the first layer.
    pub fn with_precomputed_ax(mut self) -> Result<Batch> {
        self.precomputed_ax = Some(crate::model::precompute_ax(&self.adj_norm, &self.features)?);
        Ok(self)
    }
}

/// Assemble the batch over the union of `cluster_ids`: extract the subgraph
/// (between-cluster links among the sampled clusters included), renormalize
/// it with its own degrees, and slice features, labels, and the train mask.
pub fn build_batch(
    a_full: &SparseMatrix,
    x: &DenseMatrix,
    y: &LabelTable,
    part: &Partition,
    cluster_ids: &[usize],
    norm_mode: NormMode,
    train_split: &[bool],
) -> Result<Batch> {
    if cluster_ids.is_empty() {
        return Err(Error::input("batch needs at least one cluster"));
    }
    let mut seen = vec![false; part.n_clusters()];
    let mut global_ids = Vec::new();
    for &t in cluster_ids {
        if t >= part.n_clusters() {
            return Err(Error::input(format!("cluster id {t} out of range")));
        }
        if seen[t] {
            return Err(Error::input(format!("cluster id {t} sampled twice")));
        }
        seen[t] = true;
        global_ids.extend_from_slice(part.cluster(t));
    }
    if global_ids.is_empty() {
        return Err(Error::input("sampled clusters are empty"));
    }
    global_ids.sort_unstable();

    if train_split.len() != a_full.n_rows() {
        return Err(Error::input("train split mask must cover every node"));
    }

    let raw = extract_submatrix(a_full, &global_ids)?;
    let raw_nnz = raw.nnz();
    let adj_norm = norm_mode.apply(&raw)?;
    let features = x.select_rows(&global_ids)?;
    let labels = y.slice(&global_ids)?;
    let train_mask = global_ids.iter().map(|&g| train_split[g]).collect();

    Ok(Batch {
        global_ids,
        adj_norm,
        raw_nnz,
        features,
        labels,
        train_mask,
        cluster_ids: cluster_ids.to_vec(),
        precomputed_ax: None,
    })
}

/// Shannon entropy (nats) of each batch's training-label histogram.
pub fn batch_label_entropy(batches: &[Batch]) -> Vec<f64> {
    batches
        .iter()
        .map(|b| {
            let hist = b
                .labels
                .histogram((0..b.n_nodes()).filter(|&i| b.train_mask[i]));
            entropy(&hist)
        })
        .collect()
}
