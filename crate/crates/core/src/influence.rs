//! Checkpoint influence (TracInCP) and the mean-influence anomaly score.
//!
//! For a store of checkpoints `(theta_i, eta_i)` the influence of a training
//! sample `x` on a test sample `x'` is
//!
//! ```text
//! infl(x, x') = sum_i eta_i * grad l(theta_i, x') . grad l(theta_i, x)
//! ```
//!
//! and the anomaly score of `x'` is built from the mean influence over a
//! random subsample `B` of the training set, `1/m * sum_{x in B} infl(x, x')`.
//! Training data supports normal samples strongly, so a low mean influence
//! flags an anomaly; [`InfluenceResult::anomaly_scores`] negates the mean so
//! that higher means more anomalous.
//!
//! Stochastic objectives draw their noise from a stream keyed by
//! `(seed, checkpoint epoch, sample content)`. Scores are therefore
//! reproducible, identical for duplicate rows, and independent of how the
//! work is split across threads.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::{dot, sample_key, DenseMatrix, Objective, Rng};
use crate::training::{mean_loss, train, CheckpointStore, TrainConfig};

const TAG_GRAD_NOISE: u64 = 0x4752_4144;
const TAG_SUBSAMPLE: u64 = 0x5355_4253;

/// Rows summed sequentially per parallel task when averaging train gradients.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfluenceConfig {
    /// Size `m` of the training subsample.
    pub subsample_size: usize,
    /// Redraw the subsample at every checkpoint instead of once up front.
    pub resample_per_checkpoint: bool,
    pub seed: u64,
}

/// Which end of the mean influence is read as anomalous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    /// Low influence flags an anomaly; the score is the negated mean.
    #[default]
    LowInfluence,
    /// High influence flags an anomaly; the score is the mean itself.
    HighInfluence,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::LowInfluence => "low-influence",
            Orientation::HighInfluence => "high-influence",
        }
    }
}

impl core::str::FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low-influence" => Ok(Orientation::LowInfluence),
            "high-influence" => Ok(Orientation::HighInfluence),
            other => Err(Error::Config(format!(
                "unknown orientation `{other}` (expected low-influence or high-influence)"
            ))),
        }
    }
}

/// Mean influence per validation row.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceResult {
    pub values: Vec<f64>,
}

impl InfluenceResult {
    /// Negated mean influence, so that higher = more anomalous.
    pub fn anomaly_scores(&self) -> Vec<f64> {
        self.oriented_scores(Orientation::LowInfluence)
    }

    pub fn oriented_scores(&self, orientation: Orientation) -> Vec<f64> {
        match orientation {
            Orientation::LowInfluence => self.values.iter().map(|v| -v).collect(),
            Orientation::HighInfluence => self.values.clone(),
        }
    }
}

/// Gradient of `objective` at checkpoint `index` of `store` for sample `x`,
/// with noise keyed by the checkpoint's epoch and the sample's content.
pub fn checkpoint_gradient<O: Objective + ?Sized>(
    objective: &O,
    store: &CheckpointStore,
    index: usize,
    x: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    let cp = &store.checkpoints()[index];
    let mut noise = vec![0.0; objective.noise_len()];
    if !noise.is_empty() {
        Rng::keyed(seed, &[TAG_GRAD_NOISE, cp.epoch, sample_key(x)])
            .fill_standard_normal(&mut noise);
    }
    let mut grad = vec![0.0; cp.params.len()];
    objective.accumulate_gradient(cp.params.values(), x, &noise, 1.0, &mut grad)?;
    Ok(grad)
}

fn check_store<O: Objective + ?Sized>(objective: &O, store: &CheckpointStore) -> Result<()> {
    if store.is_empty() {
        return Err(Error::Config(String::from(
            "influence needs at least one checkpoint",
        )));
    }
    store.check_compatible(objective)
}

/// `sum_i eta_i * grad l(theta_i, x_prime) . grad l(theta_i, x)`.
pub fn tracin_cp<O: Objective + ?Sized>(
    objective: &O,
    store: &CheckpointStore,
    x: &[f64],
    x_prime: &[f64],
    seed: u64,
) -> Result<f64> {
    check_store(objective, store)?;
    let mut total = 0.0;
    for (i, cp) in store.checkpoints().iter().enumerate() {
        let g = checkpoint_gradient(objective, store, i, x, seed)?;
        let g_prime = checkpoint_gradient(objective, store, i, x_prime, seed)?;
        total += cp.learning_rate * dot(&g_prime, &g);
    }
    Ok(total)
}

/// Influence of `x` on its own loss; never negative.
pub fn self_influence<O: Objective + ?Sized>(
    objective: &O,
    store: &CheckpointStore,
    x: &[f64],
    seed: u64,
) -> Result<f64> {
    check_store(objective, store)?;
    let mut total = 0.0;
    for (i, cp) in store.checkpoints().iter().enumerate() {
        let g = checkpoint_gradient(objective, store, i, x, seed)?;
        total += cp.learning_rate * dot(&g, &g);
    }
    Ok(total)
}

/// Training rows forming the subsample used at checkpoint `index`.
pub fn subsample_indices(cfg: &InfluenceConfig, train_rows: usize, index: usize) -> Vec<usize> {
    let mut rng = if cfg.resample_per_checkpoint {
        Rng::keyed(cfg.seed, &[TAG_SUBSAMPLE, index as u64])
    } else {
        Rng::keyed(cfg.seed, &[TAG_SUBSAMPLE])
    };
    rng.sample_indices(train_rows, cfg.subsample_size)
}

/// Mean checkpoint influence of a training subsample on every validation row.
///
/// The subsample's gradients are averaged once per checkpoint and dotted with
/// each validation gradient, which equals the mean of the per-pair products.
pub fn tracin_ad<O: Objective + ?Sized>(
    objective: &O,
    store: &CheckpointStore,
    train_set: &DenseMatrix,
    val_set: &DenseMatrix,
    cfg: &InfluenceConfig,
) -> Result<InfluenceResult> {
    check_store(objective, store)?;
    if cfg.subsample_size == 0 || cfg.subsample_size > train_set.rows() {
        return Err(Error::Input(format!(
            "subsample size m = {} must be in 1..={} (training rows)",
            cfg.subsample_size,
            train_set.rows()
        )));
    }
    for (name, m) in [("training", train_set), ("validation", val_set)] {
        if m.cols() != objective.input_dim() {
            return Err(Error::Input(format!(
                "{name} set has {} columns, model expects {}",
                m.cols(),
                objective.input_dim()
            )));
        }
    }

    let mut values = vec![0.0; val_set.rows()];
    let fixed_subsample = (!cfg.resample_per_checkpoint)
        .then(|| subsample_indices(cfg, train_set.rows(), 0));
    for (i, cp) in store.checkpoints().iter().enumerate() {
        let subsample = match &fixed_subsample {
            Some(b) => b.clone(),
            None => subsample_indices(cfg, train_set.rows(), i),
        };
        let mean_grad = mean_train_gradient(objective, store, i, train_set, &subsample, cfg.seed)?;
        let contributions = map_rows(val_set.rows(), |j| {
            let g = checkpoint_gradient(objective, store, i, val_set.row(j), cfg.seed)
                .map_err(|e| with_sample(e, j))?;
            Ok(cp.learning_rate * dot(&g, &mean_grad))
        })?;
        for (v, c) in values.iter_mut().zip(contributions) {
            *v += c;
        }
    }
    Ok(InfluenceResult { values })
}

fn mean_train_gradient<O: Objective + ?Sized>(
    objective: &O,
    store: &CheckpointStore,
    index: usize,
    train_set: &DenseMatrix,
    subsample: &[usize],
    seed: u64,
) -> Result<Vec<f64>> {
    let n_params = store.layout().total_len();
    let chunks: Vec<&[usize]> = subsample.chunks(GRAD_CHUNK).collect();
    let partials = map_rows(chunks.len(), |c| {
        let mut sum = vec![0.0; n_params];
        for &row in chunks[c] {
            let g = checkpoint_gradient(objective, store, index, train_set.row(row), seed)
                .map_err(|e| with_sample(e, row))?;
            for (s, gi) in sum.iter_mut().zip(&g) {
                *s += gi;
            }
        }
        Ok(sum)
    })?;
    let mut mean = vec![0.0; n_params];
    for part in partials {
        for (m, p) in mean.iter_mut().zip(&part) {
            *m += p;
        }
    }
    let inv = 1.0 / subsample.len() as f64;
    mean.iter_mut().for_each(|m| *m *= inv);
    Ok(mean)
}

fn with_sample(e: Error, sample: usize) -> Error {
    match e {
        Error::NonFinite { context, .. } => Error::NonFinite { context, sample },
        other => other,
    }
}

/// `f(0..n)` collected in index order, in parallel when available.
fn map_rows<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Leave-one-out influence `l(theta, x') - l(theta_without_x, x')`, where both
/// parameter vectors come from full training runs with the same seed.
///
/// Only meant for tiny problems where retraining twice is cheap; it is the
/// ground truth the checkpoint approximation is compared against.
pub fn loo_influence_oracle<O: Objective + ?Sized>(
    objective: &O,
    init: &crate::numeric::FlatParams,
    train_set: &DenseMatrix,
    x_index: usize,
    x_prime: &[f64],
    cfg: &TrainConfig,
) -> Result<f64> {
    if train_set.rows() < 2 {
        return Err(Error::Input(String::from(
            "leave-one-out influence needs at least 2 training samples",
        )));
    }
    if x_index >= train_set.rows() {
        return Err(Error::Input(format!(
            "sample index {x_index} out of range for {} rows",
            train_set.rows()
        )));
    }
    let keep: Vec<usize> = (0..train_set.rows()).filter(|&i| i != x_index).collect();
    let reduced = train_set.select_rows(&keep);
    let full = train(objective, init, train_set, cfg)?.store;
    let without = train(objective, init, &reduced, cfg)?.store;
    let probe = DenseMatrix::from_rows(&[x_prime])?;
    let final_params = |s: &CheckpointStore| s.last().expect("train always snapshots").params.clone();
    let with_loss = mean_loss(objective, &final_params(&full), &probe, cfg.seed)?;
    let without_loss = mean_loss(objective, &final_params(&without), &probe, cfg.seed)?;
    Ok(with_loss - without_loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Centroid;
    use crate::training::Checkpoint;

    fn scalar_store(theta: f64, eta: f64) -> (Centroid, CheckpointStore) {
        let m = Centroid::new(1);
        let mut store = CheckpointStore::for_objective(&m);
        store
            .push(Checkpoint {
                epoch: 1,
                learning_rate: eta,
                params: m.params(vec![theta]).unwrap(),
            })
            .unwrap();
        (m, store)
    }

    #[test]
    fn scalar_tracin_cp_by_hand() {
        // 0.1 * (0 - 2) * (0 - 1) = 0.2
        let (m, store) = scalar_store(0.0, 0.1);
        let v = tracin_cp(&m, &store, &[1.0], &[2.0], 0).unwrap();
        assert!((v - 0.2).abs() < 1e-15);
        let s = self_influence(&m, &store, &[1.0], 0).unwrap();
        assert!((s - 0.1).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_gives_zero() {
        let (m, store) = scalar_store(3.0, 0.5);
        assert_eq!(tracin_cp(&m, &store, &[1.0], &[3.0], 0).unwrap(), 0.0);
        assert_eq!(self_influence(&m, &store, &[3.0], 0).unwrap(), 0.0);
    }

    #[test]
    fn empty_store_is_a_config_error() {
        let m = Centroid::new(1);
        let store = CheckpointStore::for_objective(&m);
        assert!(matches!(
            tracin_cp(&m, &store, &[1.0], &[1.0], 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn subsample_too_large() {
        let (m, store) = scalar_store(0.0, 0.1);
        let train_set = DenseMatrix::from_rows(&[[1.0], [2.0]]).unwrap();
        let cfg = InfluenceConfig {
            subsample_size: 3,
            resample_per_checkpoint: false,
            seed: 0,
        };
        assert!(matches!(
            tracin_ad(&m, &store, &train_set, &train_set, &cfg),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn full_subsample_is_plain_mean() {
        let (m, store) = scalar_store(0.5, 0.1);
        let train_set = DenseMatrix::from_rows(&[[1.0], [2.0], [-1.0]]).unwrap();
        let val = DenseMatrix::from_rows(&[[4.0]]).unwrap();
        let cfg = InfluenceConfig {
            subsample_size: 3,
            resample_per_checkpoint: false,
            seed: 9,
        };
        let got = tracin_ad(&m, &store, &train_set, &val, &cfg).unwrap().values[0];
        let expected: f64 = train_set
            .iter_rows()
            .map(|x| tracin_cp(&m, &store, x, &[4.0], 9).unwrap())
            .sum::<f64>()
            / 3.0;
        assert!((got - expected).abs() < 1e-14);
    }

    #[test]
    fn loo_needs_two_samples() {
        let m = Centroid::new(1);
        let init = m.params(vec![0.0]).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 1,
            learning_rate: 0.1,
            checkpoint_step: 1,
            seed: 0,
        };
        let one = DenseMatrix::from_rows(&[[1.0]]).unwrap();
        assert!(matches!(
            loo_influence_oracle(&m, &init, &one, 0, &[1.0], &cfg),
            Err(Error::Input(_))
        ));
    }
}
