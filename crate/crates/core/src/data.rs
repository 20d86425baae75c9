//! Dataset loading, validation, and feature normalization.
//!
//! A dataset directory holds four files:
//!   graph.tsv     one undirected edge per line, "src\tdst", 0-based ids
//!   features.csv  header "N,F", then N comma-separated rows
//!   labels.tsv    "node\tlabel" (multiclass) or "node\tl1,l2,..." (multilabel)
//!   splits.json   {"train":[...],"val":[...],"test":[...]}

use crate::error::{Error, Result};
use crate::labels::{LabelTable, Task};
use crate::sparse::{from_edges, DenseMatrix, SparseMatrix};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (name, ids) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &id in ids.iter() {
                if id >= n {
                    return Err(Error::input(format!(
                        "split `{name}` contains node {id}, out of range for {n} nodes"
                    )));
                }
                if seen[id] {
                    return Err(Error::input(format!(
                        "splits overlap: node {id} appears more than once"
                    )));
                }
                seen[id] = true;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: SparseMatrix,
    pub features: DenseMatrix,
    pub labels: LabelTable,
    pub splits: Splits,
    pub task: Task,
}

impl Dataset {
    pub fn new(
        graph: SparseMatrix,
        features: DenseMatrix,
        labels: LabelTable,
        splits: Splits,
    ) -> Result<Self> {
        let n = graph.n_rows();
        if !graph.is_square() {
            return Err(Error::input("graph must be square"));
        }
        if features.n_rows() != n {
            return Err(Error::input(format!(
                "feature rows ({}) must match node count ({n})",
                features.n_rows()
            )));
        }
        if labels.n_nodes() != n {
            return Err(Error::input(format!(
                "label rows ({}) must match node count ({n})",
                labels.n_nodes()
            )));
        }
        if !features.is_finite() {
            return Err(Error::input("features contain non-finite values"));
        }
        splits.validate(n)?;
        let task = labels.inferred_task();
        Ok(Dataset {
            graph,
            features,
            labels,
            splits,
            task,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.graph.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_cols()
    }

    pub fn n_classes(&self) -> usize {
        self.labels.n_classes()
    }
}

fn file_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

/// Load and validate a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let (features, n) = load_features(&file_path(dir, "features.csv"))?;
    let graph = load_graph(&file_path(dir, "graph.tsv"), n)?;
    let labels = load_labels(&file_path(dir, "labels.tsv"), n)?;
    let splits: Splits = serde_json::from_str(&read_to_string(&file_path(dir, "splits.json"))?)?;
    Dataset::new(graph, features, labels, splits)
}

fn load_features(path: &Path) -> Result<(DenseMatrix, usize)> {
    let text = read_to_string(path)?;
    let display = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::data(&display, 1, "empty features file"))?;
    let dims: Vec<&str> = header.trim().split(',').collect();
    if dims.len() != 2 {
        return Err(Error::data(&display, 1, "header must be \"N,F\""));
    }
    let n: usize = dims[0]
        .trim()
        .parse()
        .map_err(|_| Error::data(&display, 1, "bad node count in header"))?;
    let f: usize = dims[1]
        .trim()
        .parse()
        .map_err(|_| Error::data(&display, 1, "bad feature count in header"))?;
    let mut values = Vec::with_capacity(n * f);
    let mut rows = 0usize;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0usize;
        for tok in line.trim().split(',') {
            let v: f64 = tok.trim().parse().map_err(|_| {
                Error::data(&display, idx + 1, format!("bad feature value `{tok}`"))
            })?;
            values.push(v);
            count += 1;
        }
        if count != f {
            return Err(Error::data(
                &display,
                idx + 1,
                format!("expected {f} values, found {count}"),
            ));
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::data(
            &display,
            rows + 1,
            format!("header promised {n} rows, found {rows}"),
        ));
    }
    Ok((DenseMatrix::from_values(n, f, values)?, n))
}

fn load_graph(path: &Path, n: usize) -> Result<SparseMatrix> {
    let text = read_to_string(path)?;
    let display = path.display().to_string();
    let mut edges = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (src, dst) = match (parts.next(), parts.next(), parts.next()) {
            (Some(s), Some(d), None) => (s, d),
            _ => {
                return Err(Error::data(
                    &display,
                    idx + 1,
                    "expected \"src\\tdst\"",
                ))
            }
        };
        let s: usize = src
            .trim()
            .parse()
            .map_err(|_| Error::data(&display, idx + 1, format!("bad node id `{src}`")))?;
        let d: usize = dst
            .trim()
            .parse()
            .map_err(|_| Error::data(&display, idx + 1, format!("bad node id `{dst}`")))?;
        if s >= n || d >= n {
            return Err(Error::data(
                &display,
                idx + 1,
                format!("edge ({s},{d}) out of range for {n} nodes"),
            ));
        }
        edges.push((s, d));
    }
    from_edges(&edges, n)
}

fn load_labels(path: &Path, n: usize) -> Result<LabelTable> {
    let text = read_to_string(path)?;
    let display = path.display().to_string();
    let mut rows: Vec<Option<Vec<u32>>> = vec![None; n];
    let mut max_label = 0u32;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (node_tok, label_tok) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::data(
                    &display,
                    idx + 1,
                    "expected \"node\\tlabels\"",
                ))
            }
        };
        let node: usize = node_tok
            .trim()
            .parse()
            .map_err(|_| Error::data(&display, idx + 1, format!("bad node id `{node_tok}`")))?;
        if node >= n {
            return Err(Error::data(
                &display,
                idx + 1,
                format!("node {node} out of range for {n} nodes"),
            ));
        }
        if rows[node].is_some() {
            return Err(Error::data(
                &display,
                idx + 1,
                format!("node {node} labeled twice"),
            ));
        }
        let mut labels = Vec::new();
        for tok in label_tok.trim().split(',') {
            let l: u32 = tok.trim().parse().map_err(|_| {
                Error::data(&display, idx + 1, format!("bad label `{tok}`"))
            })?;
            max_label = max_label.max(l);
            labels.push(l);
        }
        labels.sort_unstable();
        labels.dedup();
        rows[node] = Some(labels);
    }
    let mut table = Vec::with_capacity(n);
    for (node, row) in rows.into_iter().enumerate() {
        table.push(row.ok_or_else(|| {
            Error::data(&display, 0, format!("node {node} has no label line"))
        })?);
    }
    LabelTable::new(max_label as usize + 1, table)
}

/// Write a dataset directory in the canonical on-disk layout.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    let n = ds.n_nodes();

    let mut graph = String::new();
    for r in 0..n {
        let (cols, _) = ds.graph.row(r);
        for &c in cols {
            if r < c {
                graph.push_str(&format!("{r}\t{c}\n"));
            }
        }
    }
    write_atomic(&file_path(dir, "graph.tsv"), graph.as_bytes())?;

    let mut feats = format!("{},{}\n", n, ds.n_features());
    for r in 0..n {
        let row: Vec<String> = ds.features.row(r).iter().map(|v| format!("{v}")).collect();
        feats.push_str(&row.join(","));
        feats.push('\n');
    }
    write_atomic(&file_path(dir, "features.csv"), feats.as_bytes())?;

    let mut labels = String::new();
    for node in 0..n {
        let row: Vec<String> = ds
            .labels
            .labels_of(node)
            .iter()
            .map(|l| l.to_string())
            .collect();
        labels.push_str(&format!("{node}\t{}\n", row.join(",")));
    }
    write_atomic(&file_path(dir, "labels.tsv"), labels.as_bytes())?;

    let splits = serde_json::to_string_pretty(&ds.splits)?;
    write_atomic(&file_path(dir, "splits.json"), splits.as_bytes())?;
    Ok(())
}

/// Write via a temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name().and_then(|s| s.to_str()).unwrap_or("out"),
        std::process::id()
    ));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Per-column z-score using mean and population std of the TRAINING rows
/// only; zero-variance columns are cleared to zero everywhere.
pub fn normalize_features(x: &DenseMatrix, train_nodes: &[usize]) -> Result<DenseMatrix> {
    if train_nodes.is_empty() {
        return Err(Error::input("normalize_features requires training nodes"));
    }
    let f = x.n_cols();
    let m = train_nodes.len() as f64;
    let mut mean = vec![0.0f64; f];
    for &r in train_nodes {
        for (acc, v) in mean.iter_mut().zip(x.row(r)) {
            *acc += v;
        }
    }
    for v in &mut mean {
        *v /= m;
    }
    let mut var = vec![0.0f64; f];
    for &r in train_nodes {
        for ((acc, mu), v) in var.iter_mut().zip(&mean).zip(x.row(r)) {
            let d = v - mu;
            *acc += d * d;
        }
    }
    for v in &mut var {
        *v /= m;
    }
    let std: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();

    let mut out = x.clone();
    for r in 0..out.n_rows() {
        let row = out.row_mut(r);
        for c in 0..f {
            row[c] = if std[c] == 0.0 {
                0.0
            } else {
                (row[c] - mean[c]) / std[c]
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_dataset() -> Dataset {
        let graph = from_edges(&[(0, 1), (1, 2), (0, 2)], 3).unwrap();
        let features =
            DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let labels = LabelTable::multiclass(&[0, 1, 0]).unwrap();
        let splits = Splits {
            train: vec![0, 1],
            val: vec![],
            test: vec![2],
        };
        Dataset::new(graph, features, labels, splits).unwrap()
    }

    #[test]
    fn round_trip_toy_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy_dataset();
        write_dataset(dir.path(), &ds).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.n_nodes(), 3);
        assert_eq!(back.graph.nnz(), 6);
        assert_eq!(back.graph, ds.graph);
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.splits, ds.splits);
        assert_eq!(back.task, Task::Multiclass);
    }

    #[test]
    fn overlapping_splits_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = toy_dataset();
        ds.splits.test = vec![0];
        write_dataset(dir.path(), &ds).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("overlap"), "{err}");
    }

    #[test]
    fn multilabel_tokens_parse_as_id_set() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy_dataset();
        write_dataset(dir.path(), &ds).unwrap();
        std::fs::write(
            dir.path().join("labels.tsv"),
            "0\t1,3,7\n1\t0\n2\t7,3\n",
        )
        .unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.labels.labels_of(0), &[1, 3, 7]);
        assert_eq!(back.labels.labels_of(2), &[3, 7]);
        assert_eq!(back.task, Task::Multilabel);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy_dataset();
        write_dataset(dir.path(), &ds).unwrap();
        std::fs::write(dir.path().join("graph.tsv"), "0\t1\nbroken line\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        match err {
            Error::Data { line, .. } => assert_eq!(line, 2),
            other => panic!("expected data error, got {other}"),
        }
    }

    #[test]
    fn feature_row_count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy_dataset();
        write_dataset(dir.path(), &ds).unwrap();
        std::fs::write(dir.path().join("features.csv"), "3,2\n1,0\n0,1\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn normalize_constant_column_zeroed() {
        let x = DenseMatrix::from_rows(&[vec![5.0, 1.0], vec![5.0, 3.0], vec![5.0, 2.0]]).unwrap();
        let out = normalize_features(&x, &[0, 1, 2]).unwrap();
        assert_eq!(out.get(0, 0), 0.0);
        assert_eq!(out.get(1, 0), 0.0);
        assert_eq!(out.get(2, 0), 0.0);
    }

    #[test]
    fn normalize_plus_minus_one_fixed_point() {
        let x = DenseMatrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let out = normalize_features(&x, &[0, 1]).unwrap();
        assert!((out.get(0, 0) + 1.0).abs() < 1e-12);
        assert!((out.get(1, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalize_uses_population_std_of_train_rows() {
        // Train column {0,2,4}: mean 2, population std sqrt(8/3).
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![2.0], vec![4.0], vec![6.0]]).unwrap();
        let out = normalize_features(&x, &[0, 1, 2]).unwrap();
        let s = (8.0f64 / 3.0).sqrt();
        assert!((out.get(0, 0) + 2.0 / s).abs() < 1e-12);
        assert!((out.get(1, 0) - 0.0).abs() < 1e-12);
        assert!((out.get(2, 0) - 2.0 / s).abs() < 1e-12);
        assert!((out.get(3, 0) - 4.0 / s).abs() < 1e-12);
    }
}
