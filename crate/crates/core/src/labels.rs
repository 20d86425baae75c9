//! Node label storage for multi-class and multi-label tasks, plus the
//! Shannon-entropy helper used by partition and batch diagnostics.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Multiclass,
    Multilabel,
}

/// Per-node label sets. Multiclass nodes carry exactly one label id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelTable {
    n_classes: usize,
    rows: Vec<Vec<u32>>,
}

impl LabelTable {
    pub fn new(n_classes: usize, rows: Vec<Vec<u32>>) -> Result<Self> {
        for (node, labels) in rows.iter().enumerate() {
            for &l in labels {
                if l as usize >= n_classes {
                    return Err(Error::input(format!(
                        "node {node}: label {l} out of range for {n_classes} classes"
                    )));
                }
            }
            if labels.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::input(format!(
                    "node {node}: labels must be sorted and distinct"
                )));
            }
        }
        Ok(LabelTable { n_classes, rows })
    }

    /// Single-label table from one class id per node.
    pub fn multiclass(ids: &[u32]) -> Result<Self> {
        let n_classes = ids.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        LabelTable::new(n_classes, ids.iter().map(|&l| vec![l]).collect())
    }

    pub fn n_nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels_of(&self, node: usize) -> &[u32] {
        &self.rows[node]
    }

    /// Single label of a node; error if the node does not have exactly one.
    pub fn class_of(&self, node: usize) -> Result<u32> {
        match self.rows[node].as_slice() {
            [l] => Ok(*l),
            other => Err(Error::input(format!(
                "node {node} has {} labels; expected exactly one",
                other.len()
            ))),
        }
    }

    /// True when some node carries more than one label.
    pub fn looks_multilabel(&self) -> bool {
        self.rows.iter().any(|r| r.len() > 1)
    }

    /// Inferred task: multilabel as soon as any node has several labels.
    pub fn inferred_task(&self) -> Task {
        if self.looks_multilabel() {
            Task::Multilabel
        } else {
            Task::Multiclass
        }
    }

    /// Check the table is usable for `task`.
    pub fn validate_for(&self, task: Task) -> Result<()> {
        if task == Task::Multiclass {
            for (node, labels) in self.rows.iter().enumerate() {
                if labels.len() != 1 {
                    return Err(Error::input(format!(
                        "multiclass task but node {node} has {} labels",
                        labels.len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Table restricted to `nodes`, in that order.
    pub fn slice(&self, nodes: &[usize]) -> Result<LabelTable> {
        let mut rows = Vec::with_capacity(nodes.len());
        for &n in nodes {
            if n >= self.rows.len() {
                return Err(Error::input(format!("node {n} out of range")));
            }
            rows.push(self.rows[n].clone());
        }
        Ok(LabelTable {
            n_classes: self.n_classes,
            rows,
        })
    }

    /// Label-occurrence histogram over a subset of nodes.
    pub fn histogram(&self, nodes: impl Iterator<Item = usize>) -> Vec<u64> {
        let mut hist = vec![0u64; self.n_classes];
        for n in nodes {
            for &l in &self.rows[n] {
                hist[l as usize] += 1;
            }
        }
        hist
    }
}

/// Shannon entropy in nats of a count histogram; zero for an empty histogram.
pub fn entropy(hist: &[u64]) -> f64 {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let q = c as f64 / total;
            -q * q.ln()
        })
        .sum()
}
