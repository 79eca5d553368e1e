//! Graph Isomorphism Network encoder with edge features.
//!
//! Layer update for node `v`:
//!
//! ```text
//! a_v   = (1 + eps_k) h_v + sum_{u in N(v)} relu(h_u + bond_embedding_k[order(u, v)])
//! h'_v  = W2 relu(W1 a_v + b1) + b2
//! ```
//!
//! Inputs are atomic-number embeddings (plus one mask token). Graph
//! embeddings are the mean of final-layer node states. Neighbor sums and
//! the pooling sum add each coordinate in ascending value order, so
//! outputs do not depend on how atoms are numbered, bit for bit.

mod checkpoint;
mod ssl;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chem::{BondOrder, MolGraph};
use crate::error::{Error, Result};
use crate::nn::{affine, affine_backward, Parameters, Tensor};

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC,
};
pub use ssl::{
    mask_atoms, masked_atom_accuracy, pretrain, read_corpus, ssl_loss, ssl_loss_and_grad,
    MaskAccuracy, MaskedGraph, PretrainOptions, PretrainReport, SslLoss,
};

/// Atomic numbers 0..=118 plus the mask token.
pub const ATOM_VOCAB: usize = 120;
pub const MASK_TOKEN: usize = 119;
pub const BOND_VOCAB: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GinConfig {
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub mask_ratio: f64,
    pub seed: u64,
}

impl Default for GinConfig {
    fn default() -> Self {
        GinConfig {
            hidden_dim: 128,
            num_layers: 3,
            mask_ratio: 0.15,
            seed: 0,
        }
    }
}

impl GinConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim < 2 {
            return Err(Error::Config(format!(
                "hidden_dim must be >= 2, got {}",
                self.hidden_dim
            )));
        }
        if self.num_layers < 1 {
            return Err(Error::Config("num_layers must be >= 1".into()));
        }
        if !(self.mask_ratio > 0.0 && self.mask_ratio < 1.0) {
            return Err(Error::Config(format!(
                "mask_ratio must be in (0, 1), got {}",
                self.mask_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GinLayer {
    pub epsilon: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub bond_embedding: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GinModel {
    pub config: GinConfig,
    pub atom_embedding: Tensor,
    pub layers: Vec<GinLayer>,
    pub atom_head_w: Tensor,
    pub atom_head_b: Tensor,
    pub bond_head_w: Tensor,
    pub bond_head_b: Tensor,
}

const TENSORS_PER_LAYER: usize = 6;

impl Parameters for GinModel {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut out = vec![&self.atom_embedding];
        for l in &self.layers {
            out.extend([&l.epsilon, &l.w1, &l.b1, &l.w2, &l.b2, &l.bond_embedding]);
        }
        out.extend([
            &self.atom_head_w,
            &self.atom_head_b,
            &self.bond_head_w,
            &self.bond_head_b,
        ]);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.atom_embedding];
        for l in &mut self.layers {
            out.extend([
                &mut l.epsilon,
                &mut l.w1,
                &mut l.b1,
                &mut l.w2,
                &mut l.b2,
                &mut l.bond_embedding,
            ]);
        }
        out.extend([
            &mut self.atom_head_w,
            &mut self.atom_head_b,
            &mut self.bond_head_w,
            &mut self.bond_head_b,
        ]);
        out
    }
}

/// Positions of each tensor inside the `Parameters` ordering.
pub(crate) struct GradIndex {
    layers: usize,
}

impl GradIndex {
    const ATOM_EMBEDDING: usize = 0;
    fn layer(&self, k: usize, which: usize) -> usize {
        1 + k * TENSORS_PER_LAYER + which
    }
    fn head(&self, which: usize) -> usize {
        1 + self.layers * TENSORS_PER_LAYER + which
    }
}

/// Per-layer intermediates kept for backpropagation.
pub(crate) struct LayerCache {
    input: Vec<Vec<f64>>,
    /// For each receiving node: `(sender, bond class, h_sender + bond embedding)`.
    messages: Vec<Vec<(usize, usize, Vec<f64>)>>,
    aggregated: Vec<Vec<f64>>,
    hidden_pre: Vec<Vec<f64>>,
}

pub(crate) struct ForwardPass {
    pub(crate) output: Vec<Vec<f64>>,
    caches: Vec<LayerCache>,
}

/// Sum in ascending value order.
fn sorted_sum(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

pub(crate) type Adjacency = Vec<Vec<(usize, BondOrder)>>;

impl GinModel {
    pub fn new(config: GinConfig) -> Result<Self> {
        config.validate()?;
        let h = config.hidden_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let atom_embedding = Tensor::uniform("atom_embedding", &[ATOM_VOCAB, h], 1, &mut rng);
        let layers = (0..config.num_layers)
            .map(|k| {
                let name = |s: &str| format!("layers.{k}.{s}");
                GinLayer {
                    epsilon: Tensor::zeros(name("epsilon"), &[1]),
                    w1: Tensor::uniform(name("mlp.0.weight"), &[h, h], h, &mut rng),
                    b1: Tensor::uniform(name("mlp.0.bias"), &[h], h, &mut rng),
                    w2: Tensor::uniform(name("mlp.1.weight"), &[h, h], h, &mut rng),
                    b2: Tensor::uniform(name("mlp.1.bias"), &[h], h, &mut rng),
                    bond_embedding: Tensor::uniform(
                        name("bond_embedding"),
                        &[BOND_VOCAB, h],
                        1,
                        &mut rng,
                    ),
                }
            })
            .collect();
        Ok(GinModel {
            config,
            atom_embedding,
            layers,
            atom_head_w: Tensor::uniform("atom_head.weight", &[h, ATOM_VOCAB], h, &mut rng),
            atom_head_b: Tensor::uniform("atom_head.bias", &[ATOM_VOCAB], h, &mut rng),
            bond_head_w: Tensor::uniform("bond_head.weight", &[h, BOND_VOCAB], h, &mut rng),
            bond_head_b: Tensor::uniform("bond_head.bias", &[BOND_VOCAB], h, &mut rng),
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub(crate) fn grad_index(&self) -> GradIndex {
        GradIndex {
            layers: self.layers.len(),
        }
    }

    fn embedding_row(&self, token: usize) -> Vec<f64> {
        let h = self.hidden_dim();
        self.atom_embedding.data[token * h..(token + 1) * h].to_vec()
    }

    pub(crate) fn forward_tokens(&self, tokens: &[usize], adj: &Adjacency) -> ForwardPass {
        let h = self.hidden_dim();
        let mut state: Vec<Vec<f64>> = tokens.iter().map(|&t| self.embedding_row(t)).collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut column = Vec::new();
        for layer in &self.layers {
            let eps = layer.epsilon.data[0];
            let messages: Vec<Vec<(usize, usize, Vec<f64>)>> = adj
                .iter()
                .map(|nbrs| {
                    nbrs.iter()
                        .map(|&(u, order)| {
                            let b = order.index();
                            let e = &layer.bond_embedding.data[b * h..(b + 1) * h];
                            let pre = state[u].iter().zip(e).map(|(x, y)| x + y).collect();
                            (u, b, pre)
                        })
                        .collect()
                })
                .collect();
            let aggregated: Vec<Vec<f64>> = state
                .iter()
                .zip(&messages)
                .map(|(hv, msgs)| {
                    (0..h)
                        .map(|j| {
                            column.clear();
                            column.extend(msgs.iter().map(|(_, _, m)| m[j].max(0.0)));
                            (1.0 + eps) * hv[j] + sorted_sum(&mut column)
                        })
                        .collect()
                })
                .collect();
            let hidden_pre: Vec<Vec<f64>> = aggregated
                .iter()
                .map(|a| affine(a, &layer.w1.data, &layer.b1.data))
                .collect();
            let output = hidden_pre
                .iter()
                .map(|z| {
                    let r: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
                    affine(&r, &layer.w2.data, &layer.b2.data)
                })
                .collect();
            let input = std::mem::replace(&mut state, output);
            caches.push(LayerCache {
                input,
                messages,
                aggregated,
                hidden_pre,
            });
        }
        ForwardPass {
            output: state,
            caches,
        }
    }

    /// Backpropagates `d_output` (gradient w.r.t. final node states) into `grads`.
    pub(crate) fn backward(
        &self,
        tokens: &[usize],
        pass: &ForwardPass,
        d_output: Vec<Vec<f64>>,
        grads: &mut [Vec<f64>],
    ) {
        let h = self.hidden_dim();
        let idx = self.grad_index();
        let mut d_state = d_output;
        for (k, (layer, cache)) in self.layers.iter().zip(&pass.caches).enumerate().rev() {
            let eps = layer.epsilon.data[0];
            let n = d_state.len();
            let mut d_input = vec![vec![0.0; h]; n];
            let mut d_eps = 0.0;
            for v in 0..n {
                let z = &cache.hidden_pre[v];
                let r: Vec<f64> = z.iter().map(|x| x.max(0.0)).collect();
                let (gw2, rest) = grads[idx.layer(k, 3)..].split_first_mut().unwrap();
                let dr = affine_backward(&r, &layer.w2.data, &d_state[v], gw2, &mut rest[0]);
                let dz: Vec<f64> = dr
                    .iter()
                    .zip(z)
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                let (gw1, rest) = grads[idx.layer(k, 1)..].split_first_mut().unwrap();
                let da =
                    affine_backward(&cache.aggregated[v], &layer.w1.data, &dz, gw1, &mut rest[0]);
                let hv = &cache.input[v];
                for j in 0..h {
                    d_eps += da[j] * hv[j];
                    d_input[v][j] += (1.0 + eps) * da[j];
                }
                for (u, b, pre) in &cache.messages[v] {
                    let gbond = &mut grads[idx.layer(k, 5)][b * h..(b + 1) * h];
                    for j in 0..h {
                        if pre[j] > 0.0 {
                            d_input[*u][j] += da[j];
                            gbond[j] += da[j];
                        }
                    }
                }
            }
            grads[idx.layer(k, 0)][0] += d_eps;
            d_state = d_input;
        }
        let g = &mut grads[GradIndex::ATOM_EMBEDDING];
        for (token, d) in tokens.iter().zip(&d_state) {
            for (gj, dj) in g[token * h..(token + 1) * h].iter_mut().zip(d) {
                *gj += dj;
            }
        }
    }

    /// Final-layer node embeddings, one row per atom.
    pub fn forward(&self, graph: &MolGraph) -> Result<Vec<Vec<f64>>> {
        if graph.is_empty() {
            return Err(Error::InvalidArgument(
                "cannot run the encoder on an empty graph".into(),
            ));
        }
        let tokens: Vec<usize> = graph
            .atoms
            .iter()
            .map(|a| a.atomic_number as usize)
            .collect();
        Ok(self.forward_tokens(&tokens, &graph.adjacency()).output)
    }

    /// Mean-pooled graph embedding of length `hidden_dim`.
    pub fn encode(&self, graph: &MolGraph) -> Result<Vec<f64>> {
        let nodes = self.forward(graph)?;
        Ok(mean_pool(&nodes))
    }
}

pub(crate) fn mean_pool(nodes: &[Vec<f64>]) -> Vec<f64> {
    let n = nodes.len() as f64;
    let dim = nodes.first().map_or(0, Vec::len);
    let mut column = Vec::with_capacity(nodes.len());
    (0..dim)
        .map(|j| {
            column.clear();
            column.extend(nodes.iter().map(|r| r[j]));
            sorted_sum(&mut column) / n
        })
        .collect()
}

pub fn init_model(config: GinConfig) -> Result<GinModel> {
    GinModel::new(config)
}
