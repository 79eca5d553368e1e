//! Self-supervised objectives (masked-atom and bond-type prediction) and pretraining.

use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GinModel, ATOM_VOCAB, MASK_TOKEN};
use crate::chem::{parse_smiles, MolGraph};
use crate::error::{Error, Result, RowDiagnostic};
use crate::nn::{affine, affine_backward, cross_entropy, Adam, AdamConfig, Parameters};

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedGraph {
    pub graph: MolGraph,
    /// Sorted atom indices whose input token is replaced by the mask token.
    pub masked_indices: Vec<usize>,
    /// Atomic numbers at `masked_indices`.
    pub original_labels: Vec<u8>,
}

impl MaskedGraph {
    fn tokens(&self) -> Vec<usize> {
        let mut tokens: Vec<usize> = self
            .graph
            .atoms
            .iter()
            .map(|a| a.atomic_number as usize)
            .collect();
        for &i in &self.masked_indices {
            tokens[i] = MASK_TOKEN;
        }
        tokens
    }
}

/// Masks `ceil(ratio * n)` atoms (at least one) chosen without replacement.
pub fn mask_atoms(graph: &MolGraph, ratio: f64, seed: u64) -> Result<MaskedGraph> {
    let n = graph.atom_count();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot mask an empty graph".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "mask ratio {ratio} outside (0, 1)"
        )));
    }
    let count = ((ratio * n as f64).ceil() as usize).clamp(1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masked_indices = sample(&mut rng, n, count).into_vec();
    masked_indices.sort_unstable();
    let original_labels = masked_indices
        .iter()
        .map(|&i| graph.atoms[i].atomic_number)
        .collect();
    Ok(MaskedGraph {
        graph: graph.clone(),
        masked_indices,
        original_labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SslLoss {
    pub total: f64,
    pub atom_loss: f64,
    pub bond_loss: f64,
}

pub fn ssl_loss(model: &GinModel, masked: &MaskedGraph) -> Result<SslLoss> {
    ssl_loss_impl(model, masked, false).map(|(loss, _)| loss)
}

/// Loss plus gradients ordered like `Parameters::tensors`.
pub fn ssl_loss_and_grad(
    model: &GinModel,
    masked: &MaskedGraph,
) -> Result<(SslLoss, Vec<Vec<f64>>)> {
    ssl_loss_impl(model, masked, true).map(|(loss, g)| (loss, g.expect("requested gradients")))
}

fn ssl_loss_impl(
    model: &GinModel,
    masked: &MaskedGraph,
    with_grad: bool,
) -> Result<(SslLoss, Option<Vec<Vec<f64>>>)> {
    let graph = &masked.graph;
    if graph.is_empty() || masked.masked_indices.is_empty() {
        return Err(Error::InvalidArgument(
            "masked graph has no masked atoms".into(),
        ));
    }
    let h = model.hidden_dim();
    let tokens = masked.tokens();
    let pass = model.forward_tokens(&tokens, &graph.adjacency());
    let nodes = &pass.output;
    let idx = model.grad_index();
    let mut grads = with_grad.then(|| model.zero_grads());
    let mut d_nodes = vec![vec![0.0; h]; nodes.len()];

    let m = masked.masked_indices.len() as f64;
    let mut atom_loss = 0.0;
    for (&v, &label) in masked.masked_indices.iter().zip(&masked.original_labels) {
        let logits = affine(&nodes[v], &model.atom_head_w.data, &model.atom_head_b.data);
        let (ce, dlogits) = cross_entropy(&logits, label as usize);
        atom_loss += ce;
        if let Some(g) = grads.as_mut() {
            let dlogits: Vec<f64> = dlogits.iter().map(|x| x / m).collect();
            let (gw, rest) = g[idx.head(0)..].split_first_mut().unwrap();
            let dh = affine_backward(
                &nodes[v],
                &model.atom_head_w.data,
                &dlogits,
                gw,
                &mut rest[0],
            );
            for (a, b) in d_nodes[v].iter_mut().zip(dh) {
                *a += b;
            }
        }
    }
    atom_loss /= m;

    let mut bond_loss = 0.0;
    if !graph.bonds.is_empty() {
        let nb = graph.bond_count() as f64;
        for bond in &graph.bonds {
            let (u, v) = bond.endpoints();
            let pair: Vec<f64> = nodes[u].iter().zip(&nodes[v]).map(|(a, b)| a + b).collect();
            let logits = affine(&pair, &model.bond_head_w.data, &model.bond_head_b.data);
            let (ce, dlogits) = cross_entropy(&logits, bond.order.index());
            bond_loss += ce;
            if let Some(g) = grads.as_mut() {
                let dlogits: Vec<f64> = dlogits.iter().map(|x| x / nb).collect();
                let (gw, rest) = g[idx.head(2)..].split_first_mut().unwrap();
                let dpair =
                    affine_backward(&pair, &model.bond_head_w.data, &dlogits, gw, &mut rest[0]);
                for j in 0..h {
                    d_nodes[u][j] += dpair[j];
                    d_nodes[v][j] += dpair[j];
                }
            }
        }
        bond_loss /= nb;
    }

    if let Some(g) = grads.as_mut() {
        model.backward(&tokens, &pass, d_nodes, g);
    }
    Ok((
        SslLoss {
            total: atom_loss + bond_loss,
            atom_loss,
            bond_loss,
        },
        grads,
    ))
}

const EVAL_MASK_STREAM: u64 = 0xE7A1_0000_0000_0001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainOptions {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        PretrainOptions {
            lr: 1e-3,
            epochs: 50,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainReport {
    /// Mean loss over the corpus after each epoch, using one fixed mask per graph.
    pub epochs: Vec<SslLoss>,
    /// Mean loss over the freshly masked training graphs seen during each epoch.
    pub train: Vec<SslLoss>,
}

fn mean_loss(losses: impl Iterator<Item = SslLoss>) -> SslLoss {
    let mut n = 0.0;
    let mut sum = SslLoss {
        total: 0.0,
        atom_loss: 0.0,
        bond_loss: 0.0,
    };
    for l in losses {
        sum.total += l.total;
        sum.atom_loss += l.atom_loss;
        sum.bond_loss += l.bond_loss;
        n += 1.0;
    }
    SslLoss {
        total: sum.total / n,
        atom_loss: sum.atom_loss / n,
        bond_loss: sum.bond_loss / n,
    }
}

/// Minibatch Adam on the summed SSL objective. Parameters stay binary32-representable.
pub fn pretrain(
    model: &mut GinModel,
    corpus: &[MolGraph],
    opts: &PretrainOptions,
) -> Result<PretrainReport> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("pretraining corpus is empty".into()));
    }
    if let Some(i) = corpus.iter().position(MolGraph::is_empty) {
        return Err(Error::InvalidArgument(format!("corpus graph {i} is empty")));
    }
    if opts.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be positive".into()));
    }
    if !(opts.lr >= 0.0 && opts.lr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "invalid learning rate {}",
            opts.lr
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut eval_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ EVAL_MASK_STREAM);
    let eval_masks = corpus
        .iter()
        .map(|g| mask_atoms(g, model.config.mask_ratio, eval_rng.gen()))
        .collect::<Result<Vec<_>>>()?;
    let mut adam = Adam::new(AdamConfig::with_lr(opts.lr), model);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut history = Vec::with_capacity(opts.epochs);
    let mut train_history = Vec::with_capacity(opts.epochs);
    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut seen = Vec::with_capacity(corpus.len());
        for batch in order.chunks(opts.batch_size) {
            let mut grads = model.zero_grads();
            for &gi in batch {
                let masked = mask_atoms(&corpus[gi], model.config.mask_ratio, rng.gen())?;
                let (loss, g) = ssl_loss_and_grad(model, &masked)?;
                if !loss.total.is_finite() {
                    return Err(Error::Numerical(format!(
                        "non-finite loss at epoch {} on corpus graph {gi}: {loss:?}",
                        epoch + 1
                    )));
                }
                seen.push(loss);
                for (acc, gt) in grads.iter_mut().zip(&g) {
                    for (a, b) in acc.iter_mut().zip(gt) {
                        *a += b;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                g.iter_mut().for_each(|x| *x *= scale);
            }
            adam.step(model, &grads, true);
        }
        let mean = mean_loss(
            eval_masks
                .iter()
                .map(|m| ssl_loss(model, m))
                .collect::<Result<Vec<_>>>()?
                .into_iter(),
        );
        if !mean.total.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite evaluation loss after epoch {}",
                epoch + 1
            )));
        }
        train_history.push(mean_loss(seen.into_iter()));
        log::info!(
            "epoch {:>3}: total {:.4} atom {:.4} bond {:.4}",
            epoch + 1,
            mean.total,
            mean.atom_loss,
            mean.bond_loss
        );
        history.push(mean);
    }
    if !model.all_finite() {
        return Err(Error::Numerical(
            "pretraining produced non-finite parameters".into(),
        ));
    }
    Ok(PretrainReport {
        epochs: history,
        train: train_history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskAccuracy {
    pub accuracy: f64,
    /// Accuracy of always predicting the most frequent element of the corpus.
    pub majority_baseline: f64,
}

/// Masked-atom recovery accuracy over one masking draw per graph.
pub fn masked_atom_accuracy(
    model: &GinModel,
    corpus: &[MolGraph],
    seed: u64,
) -> Result<MaskAccuracy> {
    let mut counts = [0usize; ATOM_VOCAB];
    for g in corpus {
        for a in &g.atoms {
            counts[a.atomic_number as usize] += 1;
        }
    }
    let majority = counts
        .iter()
        .enumerate()
        .max_by_key(|&(z, c)| (c, std::cmp::Reverse(z)))
        .map(|(z, _)| z)
        .unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut hits, mut majority_hits, mut total) = (0usize, 0usize, 0usize);
    for g in corpus {
        let masked = mask_atoms(g, model.config.mask_ratio, rng.gen())?;
        let pass = model.forward_tokens(&masked.tokens(), &g.adjacency());
        for (&v, &label) in masked.masked_indices.iter().zip(&masked.original_labels) {
            let logits = affine(
                &pass.output[v],
                &model.atom_head_w.data,
                &model.atom_head_b.data,
            );
            let pred = logits
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            hits += (pred == label as usize) as usize;
            majority_hits += (majority == label as usize) as usize;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    Ok(MaskAccuracy {
        accuracy: hits as f64 / total as f64,
        majority_baseline: majority_hits as f64 / total as f64,
    })
}

/// Reads one SMILES per line; blank lines and `#` comments are skipped.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<MolGraph>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut graphs = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let smiles = line.split_whitespace().next().unwrap_or(line);
        match parse_smiles(smiles) {
            Ok(g) if !g.is_empty() => graphs.push(g),
            Ok(_) => bad.push(RowDiagnostic {
                line: i + 1,
                message: "empty molecule".into(),
            }),
            Err(e) => bad.push(RowDiagnostic {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Rows {
            path: path.to_path_buf(),
            rows: bad,
        });
    }
    Ok(graphs)
}
