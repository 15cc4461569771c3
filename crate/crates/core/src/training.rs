//! Minibatch SGD with periodic parameter snapshots, and the binary checkpoint
//! store format.
//!
//! Store layout (all integers and floats little-endian):
//!
//! ```text
//! magic        4 bytes  "TIAD"
//! version      u32      STORE_VERSION
//! fingerprint  32 bytes SHA-256 of the model description and parameter layout
//! count        u64      number of checkpoints
//! per checkpoint:
//!   epoch      u64
//!   eta        f64
//!   n_params   u64
//!   params     n_params x f64
//! ```

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::numeric::{DenseMatrix, FlatParams, Objective, ParamLayout, Rng};

pub const STORE_MAGIC: [u8; 4] = *b"TIAD";
pub const STORE_VERSION: u32 = 1;

// Stream tags for `Rng::keyed`.
const TAG_SHUFFLE: u64 = 0x5348_5546;
const TAG_NOISE: u64 = 0x4e4f_4953;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Epochs between snapshots. The final epoch is always snapshotted.
    pub checkpoint_step: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config(String::from("epochs must be >= 1")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config(String::from("batch size must be >= 1")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be a positive finite number, got {}",
                self.learning_rate
            )));
        }
        if self.checkpoint_step == 0 {
            return Err(Error::Config(String::from("checkpoint step must be >= 1")));
        }
        Ok(())
    }

    /// Epoch indices (1-based) at which snapshots are taken.
    pub fn checkpoint_epochs(&self) -> Vec<usize> {
        let mut epochs: Vec<usize> = (1..=self.epochs)
            .filter(|e| e % self.checkpoint_step == 0)
            .collect();
        if epochs.last() != Some(&self.epochs) {
            epochs.push(self.epochs);
        }
        epochs
    }
}

/// Parameters snapshotted after `epoch` epochs, with the step size used during that epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: u64,
    pub learning_rate: f64,
    pub params: FlatParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointStore {
    fingerprint: [u8; 32],
    layout: Arc<ParamLayout>,
    checkpoints: Vec<Checkpoint>,
}

impl CheckpointStore {
    pub fn new(fingerprint: [u8; 32], layout: Arc<ParamLayout>) -> Self {
        CheckpointStore {
            fingerprint,
            layout,
            checkpoints: Vec::new(),
        }
    }

    /// Empty store bound to `objective`'s fingerprint and layout.
    pub fn for_objective<O: Objective + ?Sized>(objective: &O) -> Self {
        CheckpointStore::new(objective.fingerprint(), objective.layout().clone())
    }

    pub fn push(&mut self, checkpoint: Checkpoint) -> Result<()> {
        if checkpoint.params.layout().as_ref() != self.layout.as_ref() {
            return Err(Error::Incompatible(String::from(
                "checkpoint layout differs from the store layout",
            )));
        }
        if let Some(last) = self.checkpoints.last() {
            if checkpoint.epoch <= last.epoch {
                return Err(Error::Input(format!(
                    "checkpoint epochs must increase strictly ({} after {})",
                    checkpoint.epoch, last.epoch
                )));
            }
        }
        if !(checkpoint.learning_rate > 0.0 && checkpoint.learning_rate.is_finite()) {
            return Err(Error::Input(format!(
                "checkpoint learning rate must be positive, got {}",
                checkpoint.learning_rate
            )));
        }
        self.checkpoints.push(checkpoint);
        Ok(())
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn last(&self) -> Option<&Checkpoint> {
        self.checkpoints.last()
    }

    /// Fails unless the store was produced for `objective`.
    pub fn check_compatible<O: Objective + ?Sized>(&self, objective: &O) -> Result<()> {
        if self.fingerprint != objective.fingerprint() {
            return Err(Error::Incompatible(String::from(
                "store fingerprint does not match the model configuration",
            )));
        }
        if self.layout.as_ref() != objective.layout().as_ref() {
            return Err(Error::Incompatible(String::from(
                "store layout does not match the model configuration",
            )));
        }
        Ok(())
    }

    /// Store holding only the checkpoint at `index`.
    pub fn singleton(&self, index: usize) -> CheckpointStore {
        CheckpointStore {
            fingerprint: self.fingerprint,
            layout: self.layout.clone(),
            checkpoints: vec![self.checkpoints[index].clone()],
        }
    }

    /// Same checkpoints with every learning rate multiplied by `factor`.
    pub fn scale_learning_rates(&self, factor: f64) -> CheckpointStore {
        let mut out = self.clone();
        for cp in &mut out.checkpoints {
            cp.learning_rate *= factor;
        }
        out
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n_params = self.layout.total_len();
        let mut out =
            Vec::with_capacity(48 + self.checkpoints.len() * (24 + 8 * n_params));
        out.extend_from_slice(&STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint);
        out.extend_from_slice(&(self.checkpoints.len() as u64).to_le_bytes());
        for cp in &self.checkpoints {
            out.extend_from_slice(&cp.epoch.to_le_bytes());
            out.extend_from_slice(&cp.learning_rate.to_le_bytes());
            out.extend_from_slice(&(cp.params.len() as u64).to_le_bytes());
            for v in cp.params.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Decodes a store written for `objective`. Nothing is returned unless the
    /// whole buffer is valid.
    pub fn from_bytes<O: Objective + ?Sized>(bytes: &[u8], objective: &O) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4)?;
        if magic != STORE_MAGIC {
            return Err(Error::Corrupt(String::from("bad magic bytes")));
        }
        let version = r.u32()?;
        if version != STORE_VERSION {
            return Err(Error::Corrupt(format!("unsupported store version {version}")));
        }
        let mut fingerprint = [0u8; 32];
        fingerprint.copy_from_slice(r.take(32)?);
        if fingerprint != objective.fingerprint() {
            return Err(Error::Incompatible(String::from(
                "store fingerprint does not match the model configuration",
            )));
        }
        let layout = objective.layout().clone();
        let count = r.u64()?;
        let mut store = CheckpointStore::new(fingerprint, layout.clone());
        for i in 0..count {
            let epoch = r.u64()?;
            let learning_rate = r.f64()?;
            let n = r.u64()? as usize;
            if n != layout.total_len() {
                return Err(Error::Corrupt(format!(
                    "checkpoint {i} holds {n} parameters, layout needs {}",
                    layout.total_len()
                )));
            }
            let raw = r.take(n.checked_mul(8).ok_or_else(|| {
                Error::Corrupt(String::from("parameter count overflows"))
            })?)?;
            let values: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let params = FlatParams::from_values(layout.clone(), values)?;
            store
                .push(Checkpoint {
                    epoch,
                    learning_rate,
                    params,
                })
                .map_err(|e| Error::Corrupt(format!("checkpoint {i}: {e}")))?;
        }
        if !r.is_empty() {
            return Err(Error::Corrupt(format!("{} trailing bytes", r.remaining())));
        }
        Ok(store)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Corrupt(format!(
                "truncated: needed {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn is_empty(&self) -> bool {
        self.remaining() == 0
    }
}

/// Result of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub store: CheckpointStore,
    /// Mean per-sample loss seen during each epoch (before each step's update).
    pub epoch_losses: Vec<f64>,
}

/// Trains `objective` from `init` by shuffled minibatch SGD at a constant
/// learning rate, snapshotting the parameters per `cfg`.
pub fn train<O: Objective + ?Sized>(
    objective: &O,
    init: &FlatParams,
    train_set: &DenseMatrix,
    cfg: &TrainConfig,
) -> Result<TrainRun> {
    cfg.validate()?;
    if train_set.rows() == 0 {
        return Err(Error::Input(String::from("training set is empty")));
    }
    if train_set.cols() != objective.input_dim() {
        return Err(Error::shape(
            "training columns",
            objective.input_dim(),
            train_set.cols(),
        ));
    }
    if init.layout().as_ref() != objective.layout().as_ref() {
        return Err(Error::Incompatible(String::from(
            "initial parameters do not match the model layout",
        )));
    }

    let mut store = CheckpointStore::for_objective(objective);
    let mut shuffle_rng = Rng::keyed(cfg.seed, &[TAG_SHUFFLE]);
    let mut noise_rng = Rng::keyed(cfg.seed, &[TAG_NOISE]);
    let mut params = init.values().to_vec();
    let mut grad = vec![0.0; params.len()];
    let mut noise = vec![0.0; objective.noise_len()];
    let mut order: Vec<usize> = (0..train_set.rows()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &row in batch {
                noise_rng.fill_standard_normal(&mut noise);
                let loss = objective
                    .accumulate_gradient(&params, train_set.row(row), &noise, scale, &mut grad)
                    .map_err(|e| match e {
                        Error::NonFinite { .. } => Error::Diverged {
                            epoch,
                            batch: batch_idx,
                        },
                        other => other,
                    })?;
                if !loss.is_finite() {
                    return Err(Error::Diverged {
                        epoch,
                        batch: batch_idx,
                    });
                }
                loss_sum += loss;
            }
            for (p, g) in params.iter_mut().zip(&grad) {
                *p -= cfg.learning_rate * g;
            }
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_idx,
                });
            }
        }
        epoch_losses.push(loss_sum / train_set.rows() as f64);
        if epoch % cfg.checkpoint_step == 0 || epoch == cfg.epochs {
            store.push(Checkpoint {
                epoch: epoch as u64,
                learning_rate: cfg.learning_rate,
                params: FlatParams::from_values(objective.layout().clone(), params.clone())?,
            })?;
        }
    }
    Ok(TrainRun {
        store,
        epoch_losses,
    })
}

/// Mean loss of `params` over every row of `data`, each row with noise keyed
/// by `(seed, row)`.
pub fn mean_loss<O: Objective + ?Sized>(
    objective: &O,
    params: &FlatParams,
    data: &DenseMatrix,
    seed: u64,
) -> Result<f64> {
    if data.rows() == 0 {
        return Err(Error::Input(String::from("cannot average a loss over zero rows")));
    }
    let mut total = 0.0;
    for (i, row) in data.iter_rows().enumerate() {
        let noise = objective.draw_noise(&mut Rng::keyed(seed, &[TAG_NOISE, i as u64]));
        total += objective
            .loss(params.values(), row, &noise)
            .map_err(|e| match e {
                Error::NonFinite { context, .. } => Error::NonFinite { context, sample: i },
                other => other,
            })?;
    }
    Ok(total / data.rows() as f64)
}
