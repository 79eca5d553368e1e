//! Projection heads trained with a symmetric InfoNCE objective so paired
//! embeddings from two modalities land close together.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{log_sum_exp, Adam, AdamConfig, Parameters, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentConfig {
    pub temperature: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Output width of both heads (also their hidden width).
    pub d_z: usize,
    pub seed: u64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig {
            temperature: 0.07,
            lr: 1e-2,
            epochs: 100,
            d_z: 64,
            seed: 0,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature {} must be positive and finite",
                self.temperature
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "alignment lr {} must be non-negative",
                self.lr
            )));
        }
        if self.d_z == 0 {
            return Err(Error::Config("alignment d_z must be positive".into()));
        }
        Ok(())
    }
}

/// `x -> W2 relu(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

struct HeadCache {
    hidden: DMatrix<f64>,
}

fn row_major(t: &Tensor) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.shape[0], t.shape[1], &t.data)
}

fn add_bias(m: &mut DMatrix<f64>, b: &[f64]) {
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col.add_scalar_mut(b[j]);
    }
}

fn accumulate_row_major(dst: &mut [f64], m: &DMatrix<f64>) {
    let cols = m.ncols();
    for i in 0..m.nrows() {
        for j in 0..cols {
            dst[i * cols + j] += m[(i, j)];
        }
    }
}

fn accumulate_column_sums(dst: &mut [f64], m: &DMatrix<f64>) {
    for (j, col) in m.column_iter().enumerate() {
        dst[j] += col.sum();
    }
}

impl ProjectionHead {
    pub fn new(prefix: &str, d_in: usize, d_z: usize, rng: &mut ChaCha8Rng) -> Self {
        ProjectionHead {
            w1: Tensor::uniform(format!("{prefix}.0.weight"), &[d_in, d_z], d_in, rng),
            b1: Tensor::uniform(format!("{prefix}.0.bias"), &[d_z], d_in, rng),
            w2: Tensor::uniform(format!("{prefix}.2.weight"), &[d_z, d_z], d_z, rng),
            b2: Tensor::uniform(format!("{prefix}.2.bias"), &[d_z], d_z, rng),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.shape[0]
    }

    pub fn output_dim(&self) -> usize {
        self.b2.len()
    }

    fn forward_cached(&self, x: &DMatrix<f64>) -> (DMatrix<f64>, HeadCache) {
        let mut hidden = x * row_major(&self.w1);
        add_bias(&mut hidden, &self.b1.data);
        hidden.apply(|v| *v = v.max(0.0));
        let mut out = &hidden * row_major(&self.w2);
        add_bias(&mut out, &self.b2.data);
        (out, HeadCache { hidden })
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "projection head expects {} columns, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(self.forward_cached(x).0)
    }

    /// Accumulates into `grads = [w1, b1, w2, b2]`.
    fn backward(
        &self,
        x: &DMatrix<f64>,
        cache: &HeadCache,
        d_out: &DMatrix<f64>,
        grads: &mut [Vec<f64>],
    ) {
        let [g_w1, g_b1, g_w2, g_b2] = grads else {
            panic!("projection head has four tensors");
        };
        let h = &cache.hidden;
        accumulate_row_major(g_w2, &(h.transpose() * d_out));
        accumulate_column_sums(g_b2, d_out);
        let mut d_pre = d_out * row_major(&self.w2).transpose();
        d_pre.zip_apply(h, |d, a| {
            if a <= 0.0 {
                *d = 0.0
            }
        });
        accumulate_row_major(g_w1, &(x.transpose() * &d_pre));
        accumulate_column_sums(g_b1, &d_pre);
    }
}

impl Parameters for ProjectionHead {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w1, &self.b1, &self.w2, &self.b2]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

/// One head per modality; parameters ordered sequence head first.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentHeads {
    pub seq: ProjectionHead,
    pub graph: ProjectionHead,
}

impl AlignmentHeads {
    pub fn new(d_seq: usize, d_graph: usize, d_z: usize, seed: u64) -> Result<Self> {
        if d_seq == 0 || d_graph == 0 || d_z == 0 {
            return Err(Error::InvalidArgument(
                "projection head dimensions must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(AlignmentHeads {
            seq: ProjectionHead::new("seq_head", d_seq, d_z, &mut rng),
            graph: ProjectionHead::new("graph_head", d_graph, d_z, &mut rng),
        })
    }
}

impl Parameters for AlignmentHeads {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = self.seq.tensors();
        t.extend(self.graph.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = self.seq.tensors_mut();
        t.extend(self.graph.tensors_mut());
        t
    }
}

const NORM_FLOOR: f64 = 1e-12;

/// Rows scaled to unit Euclidean norm (norms floored at 1e-12).
pub fn l2_normalize_rows(z: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = z.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm().max(NORM_FLOOR);
        row /= norm;
    }
    out
}

fn check_pair(zs: &DMatrix<f64>, zg: &DMatrix<f64>, temperature: f64) -> Result<()> {
    if zs.shape() != zg.shape() {
        return Err(Error::Dimension(format!(
            "paired embeddings {:?} vs {:?}",
            zs.shape(),
            zg.shape()
        )));
    }
    if zs.nrows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "contrastive loss needs n >= 2 pairs, got {}",
            zs.nrows()
        )));
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "temperature {temperature} must be positive"
        )));
    }
    Ok(())
}

/// Symmetric InfoNCE over cosine similarities divided by `temperature`.
pub fn contrastive_loss(zs: &DMatrix<f64>, zg: &DMatrix<f64>, temperature: f64) -> Result<f64> {
    contrastive_loss_and_grad(zs, zg, temperature).map(|(loss, _, _)| loss)
}

/// Loss and its gradients with respect to the un-normalized inputs.
pub fn contrastive_loss_and_grad(
    zs: &DMatrix<f64>,
    zg: &DMatrix<f64>,
    temperature: f64,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    check_pair(zs, zg, temperature)?;
    let n = zs.nrows();
    let us = l2_normalize_rows(zs);
    let ug = l2_normalize_rows(zg);
    let s = &us * ug.transpose() / temperature;

    let mut d_s = DMatrix::zeros(n, n);
    let scale = 0.5 / n as f64;
    let mut row_loss = 0.0;
    for i in 0..n {
        let row: Vec<f64> = s.row(i).iter().copied().collect();
        let lse = log_sum_exp(&row);
        row_loss += lse - s[(i, i)];
        for j in 0..n {
            d_s[(i, j)] += scale * ((s[(i, j)] - lse).exp() - if i == j { 1.0 } else { 0.0 });
        }
    }
    let mut col_loss = 0.0;
    for j in 0..n {
        let col: Vec<f64> = s.column(j).iter().copied().collect();
        let lse = log_sum_exp(&col);
        col_loss += lse - s[(j, j)];
        for i in 0..n {
            d_s[(i, j)] += scale * ((s[(i, j)] - lse).exp() - if i == j { 1.0 } else { 0.0 });
        }
    }
    let loss = 0.5 * (row_loss / n as f64 + col_loss / n as f64);

    let d_us = &d_s * &ug / temperature;
    let d_ug = d_s.transpose() * &us / temperature;
    Ok((
        loss,
        normalize_backward(zs, &us, &d_us),
        normalize_backward(zg, &ug, &d_ug),
    ))
}

fn normalize_backward(z: &DMatrix<f64>, u: &DMatrix<f64>, du: &DMatrix<f64>) -> DMatrix<f64> {
    let mut dz = DMatrix::zeros(z.nrows(), z.ncols());
    for i in 0..z.nrows() {
        let norm = z.row(i).norm();
        if norm < NORM_FLOOR {
            dz.set_row(i, &(du.row(i) / NORM_FLOOR));
            continue;
        }
        let proj = u.row(i).dot(&du.row(i));
        dz.set_row(i, &((du.row(i) - u.row(i) * proj) / norm));
    }
    dz
}

fn check_inputs(heads: &AlignmentHeads, xs: &DMatrix<f64>, xg: &DMatrix<f64>) -> Result<()> {
    if xs.nrows() != xg.nrows() {
        return Err(Error::Dimension(format!(
            "{} sequence rows vs {} graph rows",
            xs.nrows(),
            xg.nrows()
        )));
    }
    if xs.ncols() != heads.seq.input_dim() || xg.ncols() != heads.graph.input_dim() {
        return Err(Error::Dimension(format!(
            "heads expect {}/{} columns, got {}/{}",
            heads.seq.input_dim(),
            heads.graph.input_dim(),
            xs.ncols(),
            xg.ncols()
        )));
    }
    Ok(())
}

pub fn alignment_loss(
    heads: &AlignmentHeads,
    xs: &DMatrix<f64>,
    xg: &DMatrix<f64>,
    temperature: f64,
) -> Result<f64> {
    check_inputs(heads, xs, xg)?;
    contrastive_loss(
        &heads.seq.forward_cached(xs).0,
        &heads.graph.forward_cached(xg).0,
        temperature,
    )
}

/// Loss and gradients ordered like `AlignmentHeads::tensors`.
pub fn alignment_loss_and_grad(
    heads: &AlignmentHeads,
    xs: &DMatrix<f64>,
    xg: &DMatrix<f64>,
    temperature: f64,
) -> Result<(f64, Vec<Vec<f64>>)> {
    check_inputs(heads, xs, xg)?;
    let (zs, cache_s) = heads.seq.forward_cached(xs);
    let (zg, cache_g) = heads.graph.forward_cached(xg);
    let (loss, dzs, dzg) = contrastive_loss_and_grad(&zs, &zg, temperature)?;
    let mut grads = heads.zero_grads();
    let (gs, gg) = grads.split_at_mut(4);
    heads.seq.backward(xs, &cache_s, &dzs, gs);
    heads.graph.backward(xg, &cache_g, &dzg, gg);
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    /// Loss before each update, then once more after the last one.
    pub losses: Vec<f64>,
    pub seq_embeddings: DMatrix<f64>,
    pub graph_embeddings: DMatrix<f64>,
}

/// Full-batch Adam on the paired rows. Callers pass training rows only.
pub fn train_alignment(
    heads: &mut AlignmentHeads,
    xs: &DMatrix<f64>,
    xg: &DMatrix<f64>,
    config: &AlignmentConfig,
) -> Result<AlignmentReport> {
    config
        .validate()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr), heads);
    let mut losses = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..config.epochs {
        let (loss, grads) = alignment_loss_and_grad(heads, xs, xg, config.temperature)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite alignment loss at epoch {}",
                epoch + 1
            )));
        }
        losses.push(loss);
        adam.step(heads, &grads, false);
    }
    let final_loss = alignment_loss(heads, xs, xg, config.temperature)?;
    if !final_loss.is_finite() || !heads.all_finite() {
        return Err(Error::Numerical("alignment training diverged".into()));
    }
    losses.push(final_loss);
    Ok(AlignmentReport {
        losses,
        seq_embeddings: heads.seq.forward(xs)?,
        graph_embeddings: heads.graph.forward(xg)?,
    })
}
