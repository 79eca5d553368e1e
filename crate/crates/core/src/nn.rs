//! Small dense building blocks shared by the graph encoder and the
//! projection heads: named tensors, affine maps and an Adam optimizer.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        Tensor {
            name: name.into(),
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, rounded to binary32.
    pub fn uniform(
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut t = Tensor::zeros(name, shape);
        for x in &mut t.data {
            *x = round_f32(rng.gen_range(-bound..bound));
        }
        t
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

pub(crate) fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

/// Ordered access to every trainable tensor of a model.
pub trait Parameters {
    fn tensors(&self) -> Vec<&Tensor>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor>;

    fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.tensors().iter().map(|t| vec![0.0; t.len()]).collect()
    }

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

/// `y = x W + b` for a single row; `w` is `[n_in x n_out]` row-major.
pub(crate) fn affine(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n_out = b.len();
    debug_assert_eq!(w.len(), x.len() * n_out);
    let mut y = vec![0.0; n_out];
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * n_out..(i + 1) * n_out];
        for (yj, &wij) in y.iter_mut().zip(row) {
            *yj += xi * wij;
        }
    }
    for (yj, &bj) in y.iter_mut().zip(b) {
        *yj += bj;
    }
    y
}

/// Accumulates parameter gradients of `affine` and returns `dL/dx`.
pub(crate) fn affine_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let n_out = dy.len();
    let mut dx = vec![0.0; x.len()];
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * n_out..(i + 1) * n_out];
        let drow = &mut dw[i * n_out..(i + 1) * n_out];
        let mut acc = 0.0;
        for j in 0..n_out {
            drow[j] += xi * dy[j];
            acc += row[j] * dy[j];
        }
        dx[i] = acc;
    }
    for (dbj, &g) in db.iter_mut().zip(dy) {
        *dbj += g;
    }
    dx
}

/// Numerically stable `ln(sum(exp(x)))`.
pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Cross-entropy of `logits` against `target` and its gradient w.r.t. the logits.
pub(crate) fn cross_entropy(logits: &[f64], target: usize) -> (f64, Vec<f64>) {
    let lse = log_sum_exp(logits);
    let grad = logits
        .iter()
        .enumerate()
        .map(|(j, &z)| (z - lse).exp() - if j == target { 1.0 } else { 0.0 })
        .collect();
    (lse - logits[target], grad)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, model: &impl Parameters) -> Self {
        Adam {
            config,
            step: 0,
            m: model.zero_grads(),
            v: model.zero_grads(),
        }
    }

    /// One update; when `f32_storage` is set parameters are rounded to binary32 afterwards.
    pub fn step(&mut self, model: &mut impl Parameters, grads: &[Vec<f64>], f32_storage: bool) {
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let bc1 = 1.0 - beta1.powi(self.step);
        let bc2 = 1.0 - beta2.powi(self.step);
        for (((tensor, g), m), v) in model
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..tensor.data.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                if lr == 0.0 {
                    continue;
                }
                let update = lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                let x = tensor.data[i] - update;
                tensor.data[i] = if f32_storage { round_f32(x) } else { x };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn affine_gradient() {
        let x = [0.3, -1.2];
        let w = [0.5, -0.25, 1.0, 2.0, 0.1, -0.7];
        let b = [0.1, 0.2, 0.3];
        let y = affine(&x, &w, &b);
        assert!((y[0] - (0.3 * 0.5 - 1.2 * 2.0 + 0.1)).abs() < 1e-15);
        let dy = [1.0, 0.0, -1.0];
        let mut dw = [0.0; 6];
        let mut db = [0.0; 3];
        let dx = affine_backward(&x, &w, &dy, &mut dw, &mut db);
        assert_eq!(dx, vec![0.5 - 1.0, 2.0 + 0.7]);
        assert_eq!(db, [1.0, 0.0, -1.0]);
        assert_eq!(dw[0], 0.3);
        assert_eq!(dw[5], 1.2);
    }

    #[test]
    fn cross_entropy_uniform() {
        let (loss, grad) = cross_entropy(&[0.0; 4], 2);
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        assert!((grad.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn uniform_init_is_f32_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = Tensor::uniform("w", &[4, 4], 16, &mut rng);
        assert!(t.data.iter().all(|&x| x.abs() <= 0.25 && round_f32(x) == x));
    }
}
