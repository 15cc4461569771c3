//! Reference computations for tests. Everything here takes the slow, obvious
//! route so it can check the production paths in `influence-ad-core`.

use influence_ad_core::influence::{subsample_indices, tracin_cp, InfluenceConfig};
use influence_ad_core::models::{Autoencoder, DsvddModel, VaeModel};
use influence_ad_core::numeric::{Activation, DenseMatrix, FlatParams, MlpSpec, Objective, Rng};
use influence_ad_core::training::CheckpointStore;
use influence_ad_core::Result;

/// Step used by [`central_difference_gradient`].
pub const FD_STEP: f64 = 1e-6;

/// Gradient magnitudes below this are compared absolutely rather than relatively.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

/// Central finite differences of the loss, one coordinate at a time, with the
/// noise held fixed.
pub fn central_difference_gradient<O: Objective + ?Sized>(
    objective: &O,
    params: &[f64],
    x: &[f64],
    noise: &[f64],
    step: f64,
) -> Result<Vec<f64>> {
    let mut p = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let orig = p[k];
        p[k] = orig + step;
        let up = objective.loss(&p, x, noise)?;
        p[k] = orig - step;
        let down = objective.loss(&p, x, noise)?;
        p[k] = orig;
        out.push((up - down) / (2.0 * step));
    }
    Ok(out)
}

/// Largest coordinate-wise `|a - b| / max(|a|, |b|, REL_ERROR_FLOOR)`.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(REL_ERROR_FLOOR))
        .fold(0.0, f64::max)
}

/// Mean influence by the literal double loop: every validation row against
/// every subsampled training row, each pair through [`tracin_cp`].
pub fn naive_tracin_ad<O: Objective + ?Sized>(
    objective: &O,
    store: &CheckpointStore,
    train: &DenseMatrix,
    val: &DenseMatrix,
    cfg: &InfluenceConfig,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(val.rows());
    for x_prime in val.iter_rows() {
        let mut total = 0.0;
        for i in 0..store.len() {
            for &row in &subsample_indices(cfg, train.rows(), i) {
                total += pair_influence_at(objective, store, i, train.row(row), x_prime, cfg.seed)?;
            }
        }
        out.push(total / cfg.subsample_size as f64);
    }
    Ok(out)
}

/// `eta_i * grad l(theta_i, x') . grad l(theta_i, x)` for one checkpoint.
fn pair_influence_at<O: Objective + ?Sized>(
    objective: &O,
    store: &CheckpointStore,
    index: usize,
    x: &[f64],
    x_prime: &[f64],
    seed: u64,
) -> Result<f64> {
    let g = influence_ad_core::influence::checkpoint_gradient(objective, store, index, x, seed)?;
    let gp =
        influence_ad_core::influence::checkpoint_gradient(objective, store, index, x_prime, seed)?;
    let mut dot = 0.0;
    for (a, b) in g.iter().zip(&gp) {
        dot += a * b;
    }
    Ok(store.checkpoints()[index].learning_rate * dot)
}

/// Full TracInCP of every subsampled training row when the subsample is fixed
/// across checkpoints; cross-checks [`naive_tracin_ad`] through `tracin_cp`.
pub fn naive_tracin_ad_fixed<O: Objective + ?Sized>(
    objective: &O,
    store: &CheckpointStore,
    train: &DenseMatrix,
    val: &DenseMatrix,
    cfg: &InfluenceConfig,
) -> Result<Vec<f64>> {
    assert!(!cfg.resample_per_checkpoint);
    let b = subsample_indices(cfg, train.rows(), 0);
    val.iter_rows()
        .map(|x_prime| {
            let mut total = 0.0;
            for &row in &b {
                total += tracin_cp(objective, store, train.row(row), x_prime, cfg.seed)?;
            }
            Ok(total / b.len() as f64)
        })
        .collect()
}

/// Ranks starting at 1, ties receiving their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va * vb).sqrt()
}

/// Two-pass mean and sample standard deviation.
pub fn two_pass_mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn random_hidden(rng: &mut Rng, max_layers: usize) -> Vec<usize> {
    let n = (rng.next_u64() % (max_layers as u64 + 1)) as usize;
    (0..n).map(|_| 1 + (rng.next_u64() % 8) as usize).collect()
}

fn small_dim(rng: &mut Rng, max: usize) -> usize {
    1 + (rng.next_u64() % max as u64) as usize
}

/// Glorot init with biases jittered away from zero, so bias gradients are exercised.
fn jittered_params(spec_params: Vec<f64>, rng: &mut Rng) -> Vec<f64> {
    spec_params
        .into_iter()
        .map(|v| v + rng.uniform_range(-0.3, 0.3))
        .collect()
}

/// Random tanh autoencoder with widths <= 8 and at most 3 layers.
pub fn random_autoencoder(rng: &mut Rng) -> (Autoencoder, FlatParams) {
    let d = small_dim(rng, 6);
    let mut widths = vec![d];
    widths.extend(random_hidden(rng, 2));
    widths.push(d);
    let ae = Autoencoder::new(MlpSpec::new(&widths, Activation::Tanh).unwrap()).unwrap();
    let values = jittered_params(ae.spec().init_params(rng), rng);
    let p = FlatParams::from_values(ae.layout().clone(), values).unwrap();
    (ae, p)
}

/// Random Deep-SVDD encoder with widths <= 8, at most 3 layers, and a random center.
pub fn random_dsvdd(rng: &mut Rng) -> (DsvddModel, FlatParams) {
    let d = small_dim(rng, 6);
    let latent = small_dim(rng, 4);
    let hidden = random_hidden(rng, 2);
    let spec = DsvddModel::encoder_spec(d, &hidden, latent).unwrap();
    let center = (0..latent).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
    let model = DsvddModel::new(spec.clone(), center).unwrap();
    let values = jittered_params(spec.init_params(rng), rng);
    let p = FlatParams::from_values(model.layout().clone(), values).unwrap();
    (model, p)
}

/// Random VAE with widths <= 8, at most 3 layers per network, and 1..=3 Monte-Carlo draws.
pub fn random_vae(rng: &mut Rng) -> (VaeModel, FlatParams) {
    let d = small_dim(rng, 5);
    let latent = small_dim(rng, 3);
    let hidden = random_hidden(rng, 1);
    let l = small_dim(rng, 3);
    let model = VaeModel::symmetric(d, &hidden, latent, l, Activation::Tanh).unwrap();
    let init = model.init_params(rng).into_values();
    let values = jittered_params(init, rng);
    let p = FlatParams::from_values(model.layout().clone(), values).unwrap();
    (model, p)
}

pub fn random_sample(rng: &mut Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.uniform_range(-1.5, 1.5)).collect()
}

pub fn random_matrix(rng: &mut Rng, rows: usize, cols: usize) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}
