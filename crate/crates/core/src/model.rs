//! GCN forward pass, cross-entropy losses, and the hand-derived backward
//! pass for all four layer variants, plus inverted dropout, first-layer
//! propagation precompute, and prediction metrics.

use crate::batch::Batch;
use crate::error::{Error, Result};
use crate::labels::{LabelTable, Task};
use crate::sparse::{spmm, DenseMatrix, SparseMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Propagation rule used by every layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerVariant {
    /// Z = A'XW.
    Plain,
    /// Interior layers add the skip X <- relu(Z) + X between equal widths.
    Residual,
    /// Z = A~XW with the self-loop row normalization; propagation formula is
    /// the plain one, the character comes from the normalization choice.
    IdentityAug,
    /// Z = (A~ + lambda diag(A~)) X W.
    DiagEnhanced,
}

/// Weights and hyper-shape of an L-layer GCN.
#[derive(Debug, Clone)]
pub struct GcnModel {
    dims: Vec<usize>,
    weights: Vec<DenseMatrix>,
    variant: LayerVariant,
    lambda: f64,
    task: Task,
}

impl GcnModel {
    /// `dims` lists F_0..F_L; weights start at zero (see [`GcnModel::init_weights`]).
    pub fn new(dims: Vec<usize>, variant: LayerVariant, lambda: f64, task: Task) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::input("model needs at least one layer"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::input("layer widths must be positive"));
        }
        if !lambda.is_finite() {
            return Err(Error::input("lambda must be finite"));
        }
        let n_layers = dims.len() - 1;
        if variant == LayerVariant::Residual {
            for l in 1..n_layers.saturating_sub(1) {
                if dims[l] != dims[l + 1] {
                    return Err(Error::input(format!(
                        "residual variant requires equal widths, got {} -> {} at layer {l}",
                        dims[l],
                        dims[l + 1]
                    )));
                }
            }
        }
        let weights = (0..n_layers)
            .map(|l| DenseMatrix::zeros(dims[l], dims[l + 1]))
            .collect();
        Ok(GcnModel {
            dims,
            weights,
            variant,
            lambda,
            task,
        })
    }

    /// Glorot-style uniform init: W ~ U(-s, s) with s = sqrt(6 / (F_l + F_{l+1})).
    pub fn init_weights(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for l in 0..self.n_layers() {
            let s = (6.0 / (self.dims[l] + self.dims[l + 1]) as f64).sqrt();
            for v in self.weights[l].values_mut() {
                *v = rng.gen_range(-s..s);
            }
        }
    }

    pub fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn variant(&self) -> LayerVariant {
        self.variant
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn weights(&self) -> &[DenseMatrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [DenseMatrix] {
        &mut self.weights
    }

    pub fn set_weights(&mut self, weights: Vec<DenseMatrix>) -> Result<()> {
        if weights.len() != self.n_layers() {
            return Err(Error::input("weight count mismatch"));
        }
        for (l, w) in weights.iter().enumerate() {
            if w.n_rows() != self.dims[l] || w.n_cols() != self.dims[l + 1] {
                return Err(Error::input(format!("weight {l} has the wrong shape")));
            }
            if !w.is_finite() {
                return Err(Error::input(format!("weight {l} holds non-finite values")));
            }
        }
        self.weights = weights;
        Ok(())
    }

    /// Residual skip applies between equal-width interior layers past the first.
    fn residual_applies(&self, layer: usize) -> bool {
        self.variant == LayerVariant::Residual
            && layer >= 1
            && layer + 1 < self.n_layers().max(1)
            && self.dims[layer] == self.dims[layer + 1]
    }
}

/// Effective propagation product M·x, where M is the adjacency for plain,
/// residual, and identity-augmented layers, and A~ + lambda·diag(A~) for the
/// diagonal-enhanced variant.
fn propagate_x(
    variant: LayerVariant,
    adj: &SparseMatrix,
    diag: &[f64],
    lambda: f64,
    x: &DenseMatrix,
) -> Result<DenseMatrix> {
    let mut p = spmm(adj, x)?;
    if variant == LayerVariant::DiagEnhanced && lambda != 0.0 {
        for r in 0..p.n_rows() {
            let scale = lambda * diag[r];
            let src = x.row(r);
            let dst = p.row_mut(r);
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }
    Ok(p)
}

/// One layer pre-activation: M·x·w for the variant's effective matrix M.
pub fn propagate(
    variant: LayerVariant,
    adj_norm: &SparseMatrix,
    x: &DenseMatrix,
    w: &DenseMatrix,
    lambda: f64,
) -> Result<DenseMatrix> {
    if !adj_norm.is_square() {
        return Err(Error::input("adjacency must be square"));
    }
    let diag = adj_norm.diagonal();
    propagate_x(variant, adj_norm, &diag, lambda, x)?.matmul(w)
}

/// A'X, computed once so the first layer can skip its propagation.
pub fn precompute_ax(adj_norm: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    spmm(adj_norm, x)
}

/// Cached tensors from one forward pass, enough to run the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Post-dropout input of each layer (for layer 0 with precompute, the
    /// dropped A'X product).
    inputs: Vec<DenseMatrix>,
    /// Propagated input P = M·H of each layer (equals `inputs[0]` when the
    /// first layer used the precomputed product).
    propagated: Vec<DenseMatrix>,
    /// Pre-activations Z^{l+1}; the last entry holds the logits.
    preacts: Vec<DenseMatrix>,
    /// Inverted-dropout masks, entries 0 or 1/(1-rate); None in eval mode.
    masks: Vec<Option<DenseMatrix>>,
    used_precomputed: bool,
}

impl ForwardTrace {
    pub fn logits(&self) -> &DenseMatrix {
        self.preacts.last().expect("at least one layer")
    }

    /// Post-dropout input the given layer consumed.
    pub fn layer_input(&self, layer: usize) -> &DenseMatrix {
        &self.inputs[layer]
    }

    pub fn preactivation(&self, layer: usize) -> &DenseMatrix {
        &self.preacts[layer]
    }

    /// Whether layer 0 consumed a precomputed A'X product.
    pub fn used_precomputed(&self) -> bool {
        self.used_precomputed
    }
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mut m = DenseMatrix::zeros(rows, cols);
    for v in m.values_mut() {
        if rng.gen::<f64>() < keep {
            *v = scale;
        }
    }
    m
}

fn apply_mask(x: &DenseMatrix, mask: &DenseMatrix) -> DenseMatrix {
    let mut out = x.clone();
    for (o, m) in out.values_mut().iter_mut().zip(mask.values()) {
        *o *= m;
    }
    out
}

/// Run the network over an explicit adjacency and feature matrix.
///
/// ReLU on every layer but the last, which emits raw logits. In training
/// mode inverted dropout is applied to each layer's input; evaluation mode
/// is deterministic and applies none.
pub fn forward_parts(
    model: &GcnModel,
    adj_norm: &SparseMatrix,
    features: &DenseMatrix,
    precomputed_ax: Option<&DenseMatrix>,
    dropout_rate: f64,
    rng_seed: u64,
    training: bool,
) -> Result<ForwardTrace> {
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::input("dropout rate must lie in [0, 1)"));
    }
    if features.n_cols() != model.dims[0] {
        return Err(Error::input(format!(
            "feature width {} does not match F_0 = {}",
            features.n_cols(),
            model.dims[0]
        )));
    }
    if adj_norm.n_rows() != features.n_rows() || !adj_norm.is_square() {
        return Err(Error::input("adjacency and features disagree on node count"));
    }

    let n_layers = model.n_layers();
    let diag = adj_norm.diagonal();
    let drop = training && dropout_rate > 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let mut inputs = Vec::with_capacity(n_layers);
    let mut propagated = Vec::with_capacity(n_layers);
    let mut preacts = Vec::with_capacity(n_layers);
    let mut masks = Vec::with_capacity(n_layers);

    let mut x = features.clone();
    for layer in 0..n_layers {
        let raw_input = if layer == 0 {
            match precomputed_ax {
                Some(ax) => {
                    if ax.n_rows() != features.n_rows() || ax.n_cols() != model.dims[0] {
                        return Err(Error::input("precomputed A'X has the wrong shape"));
                    }
                    ax.clone()
                }
                None => x,
            }
        } else {
            x
        };

        let (h, mask) = if drop {
            let mask = dropout_mask(raw_input.n_rows(), raw_input.n_cols(), dropout_rate, &mut rng);
            (apply_mask(&raw_input, &mask), Some(mask))
        } else {
            (raw_input, None)
        };

        let p = if layer == 0 && precomputed_ax.is_some() {
            h.clone()
        } else {
            propagate_x(model.variant, adj_norm, &diag, model.lambda, &h)?
        };
        let z = p.matmul(&model.weights[layer])?;
        if !z.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite activation at layer {layer}"
            )));
        }

        if layer + 1 < n_layers {
            let mut next = z.relu();
            if model.residual_applies(layer) {
                next.add_assign(&h)?;
            }
            x = next;
        } else {
            x = DenseMatrix::zeros(0, 0); // final layer output lives in preacts
        }

        inputs.push(h);
        propagated.push(p);
        preacts.push(z);
        masks.push(mask);
    }

    Ok(ForwardTrace {
        inputs,
        propagated,
        preacts,
        masks,
        used_precomputed: precomputed_ax.is_some(),
    })
}

/// Forward over a batch; uses the batch's precomputed A'X when present.
pub fn forward(
    model: &GcnModel,
    batch: &Batch,
    dropout_rate: f64,
    rng_seed: u64,
    training: bool,
) -> Result<ForwardTrace> {
    forward_parts(
        model,
        &batch.adj_norm,
        &batch.features,
        batch.precomputed_ax.as_ref(),
        dropout_rate,
        rng_seed,
        training,
    )
}

/// Per-weight gradients plus how many training rows produced them.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<DenseMatrix>,
    train_count: usize,
}

impl Gradients {
    pub fn from_parts(grads: Vec<DenseMatrix>, train_count: usize) -> Gradients {
        Gradients { grads, train_count }
    }

    pub fn per_weight(&self) -> &[DenseMatrix] {
        &self.grads
    }

    /// Number of training rows behind this gradient; zero means the batch
    /// carried no training nodes and the gradients are all zero.
    pub fn train_count(&self) -> usize {
        self.train_count
    }
}

fn multiclass_loss_grad(
    logits: &DenseMatrix,
    labels: &LabelTable,
    train_mask: &[bool],
) -> Result<(f64, DenseMatrix, usize)> {
    let n_train = train_mask.iter().filter(|&&m| m).count();
    let mut grad = DenseMatrix::zeros(logits.n_rows(), logits.n_cols());
    if n_train == 0 {
        return Ok((0.0, grad, 0));
    }
    let scale = 1.0 / n_train as f64;
    let mut loss = 0.0;
    for i in 0..logits.n_rows() {
        if !train_mask[i] {
            continue;
        }
        let y = labels.class_of(i)? as usize;
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let lse = max + sum_exp.ln();
        loss += (lse - row[y]) * scale;
        let g = grad.row_mut(i);
        for (k, &z) in row.iter().enumerate() {
            let p = (z - lse).exp();
            g[k] = (p - if k == y { 1.0 } else { 0.0 }) * scale;
        }
    }
    Ok((loss, grad, n_train))
}

fn multilabel_loss_grad(
    logits: &DenseMatrix,
    labels: &LabelTable,
    train_mask: &[bool],
) -> Result<(f64, DenseMatrix, usize)> {
    let n_train = train_mask.iter().filter(|&&m| m).count();
    let k = logits.n_cols();
    let mut grad = DenseMatrix::zeros(logits.n_rows(), k);
    if n_train == 0 {
        return Ok((0.0, grad, 0));
    }
    let scale = 1.0 / (n_train * k) as f64;
    let mut loss = 0.0;
    for i in 0..logits.n_rows() {
        if !train_mask[i] {
            continue;
        }
        let mut targets = vec![0.0f64; k];
        for &l in labels.labels_of(i) {
            targets[l as usize] = 1.0;
        }
        let row = logits.row(i);
        let g = grad.row_mut(i);
        for c in 0..k {
            let z = row[c];
            let y = targets[c];
            // Stable binary cross-entropy with logits.
            loss += (z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()) * scale;
            let sig = 1.0 / (1.0 + (-z).exp());
            g[c] = (sig - y) * scale;
        }
    }
    Ok((loss, grad, n_train))
}

/// Loss over the batch's training rows and reverse-mode gradients for every
/// weight matrix. Row normalization is not symmetric, so the backward
/// propagation goes through the explicit transpose of the batch adjacency.
pub fn loss_and_grad(model: &GcnModel, trace: &ForwardTrace, batch: &Batch) -> Result<(f64, Gradients)> {
    let n_layers = model.n_layers();
    if trace.preacts.len() != n_layers {
        return Err(Error::input("trace does not match model depth"));
    }
    let logits = trace.logits();
    if logits.n_rows() != batch.n_nodes() || logits.n_cols() != *model.dims.last().unwrap() {
        return Err(Error::input("trace does not match batch"));
    }

    let (loss, loss_grad, train_count) = match model.task {
        Task::Multiclass => multiclass_loss_grad(logits, &batch.labels, &batch.train_mask)?,
        Task::Multilabel => multilabel_loss_grad(logits, &batch.labels, &batch.train_mask)?,
    };
    if !loss.is_finite() {
        return Err(Error::numeric("non-finite loss"));
    }

    let mut grads: Vec<DenseMatrix> = model
        .weights
        .iter()
        .map(|w| DenseMatrix::zeros(w.n_rows(), w.n_cols()))
        .collect();

    if train_count == 0 {
        return Ok((
            0.0,
            Gradients {
                grads,
                train_count: 0,
            },
        ));
    }

    let adj_t = if n_layers > 1 {
        Some(batch.adj_norm.transpose())
    } else {
        None
    };
    let diag = batch.adj_norm.diagonal();

    // g_x carries dLoss/dX^{l+1} between iterations.
    let mut g_x = DenseMatrix::zeros(0, 0);
    for layer in (0..n_layers).rev() {
        let g_z = if layer + 1 == n_layers {
            loss_grad.clone()
        } else {
            // ReLU subgradient gate against the cached pre-activation.
            let z = &trace.preacts[layer];
            let mut g = g_x.clone();
            for (gv, zv) in g.values_mut().iter_mut().zip(z.values()) {
                if *zv <= 0.0 {
                    *gv = 0.0;
                }
            }
            g
        };

        grads[layer] = trace.propagated[layer].matmul_tn(&g_z)?;

        if layer == 0 {
            break; // features are leaves; no input gradient needed
        }

        let d_p = g_z.matmul_nt(&model.weights[layer])?;
        let adj_t = adj_t.as_ref().expect("transpose exists for deep models");
        let mut d_h = spmm(adj_t, &d_p)?;
        if model.variant == LayerVariant::DiagEnhanced && model.lambda != 0.0 {
            for r in 0..d_h.n_rows() {
                let scale = model.lambda * diag[r];
                let src = d_p.row(r);
                let dst = d_h.row_mut(r);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += scale * s;
                }
            }
        }
        if model.residual_applies(layer) {
            d_h.add_assign(&g_x)?;
        }
        if let Some(mask) = &trace.masks[layer] {
            d_h = apply_mask(&d_h, mask);
        }
        g_x = d_h;
    }

    for g in &grads {
        if !g.is_finite() {
            return Err(Error::numeric("non-finite gradient"));
        }
    }

    Ok((
        loss,
        Gradients {
            grads,
            train_count,
        },
    ))
}

/// Micro-F1 and accuracy over `split` nodes, predicting with argmax for
/// multiclass and a zero-logit threshold for multilabel.
pub fn predict_metrics(
    model: &GcnModel,
    graph_norm: &SparseMatrix,
    features: &DenseMatrix,
    labels: &LabelTable,
    split: &[usize],
) -> Result<(f64, f64)> {
    if split.is_empty() {
        return Err(Error::input("empty evaluation split"));
    }
    let trace = forward_parts(model, graph_norm, features, None, 0.0, 0, false)?;
    let logits = trace.logits();

    match model.task {
        Task::Multiclass => {
            let mut correct = 0usize;
            for &i in split {
                let row = logits.row(i);
                let pred = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(k, _)| k)
                    .unwrap();
                if pred as u32 == labels.class_of(i)? {
                    correct += 1;
                }
            }
            let acc = correct as f64 / split.len() as f64;
            // Single-label micro-F1 pools one prediction per node: equals accuracy.
            Ok((acc, acc))
        }
        Task::Multilabel => {
            let k = logits.n_cols();
            let mut tp = 0u64;
            let mut fp = 0u64;
            let mut fn_ = 0u64;
            let mut exact = 0usize;
            for &i in split {
                let mut truth = vec![false; k];
                for &l in labels.labels_of(i) {
                    truth[l as usize] = true;
                }
                let row = logits.row(i);
                let mut all_match = true;
                for c in 0..k {
                    let pred = row[c] > 0.0;
                    match (pred, truth[c]) {
                        (true, true) => tp += 1,
                        (true, false) => {
                            fp += 1;
                            all_match = false;
                        }
                        (false, true) => {
                            fn_ += 1;
                            all_match = false;
                        }
                        (false, false) => {}
                    }
                }
                if all_match {
                    exact += 1;
                }
            }
            let denom = 2 * tp + fp + fn_;
            let micro_f1 = if denom == 0 {
                1.0
            } else {
                2.0 * tp as f64 / denom as f64
            };
            Ok((micro_f1, exact as f64 / split.len() as f64))
        }
    }
}
