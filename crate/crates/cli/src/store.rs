use std::path::Path;

use influence_ad_core::numeric::Objective;
use influence_ad_core::training::CheckpointStore;

use crate::error::{CliError, Result};

pub fn save_store(store: &CheckpointStore, path: &Path) -> Result<()> {
    std::fs::write(path, store.to_bytes()).map_err(|e| CliError::io(path, e))
}

/// Reads a store and checks it was written for `objective`.
pub fn load_store<O: Objective + ?Sized>(path: &Path, objective: &O) -> Result<CheckpointStore> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    CheckpointStore::from_bytes(&bytes, objective).map_err(|e| match e {
        influence_ad_core::Error::Corrupt(msg) => {
            CliError::data(path, format!("corrupt checkpoint store: {msg}"))
        }
        other => other.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use influence_ad_core::models::Autoencoder;
    use influence_ad_core::numeric::{Activation, DenseMatrix, MlpSpec, Rng};
    use influence_ad_core::training::{train, TrainConfig};

    #[test]
    fn file_round_trip_and_errors() {
        let ae = Autoencoder::new(MlpSpec::new(&[2, 3, 2], Activation::Tanh).unwrap()).unwrap();
        let init = ae.init_params(&mut Rng::new(0));
        let data = DenseMatrix::from_vec(3, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6]).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            learning_rate: 0.1,
            checkpoint_step: 1,
            seed: 0,
        };
        let store = train(&ae, &init, &data, &cfg).unwrap().store;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.tiad");
        save_store(&store, &path).unwrap();
        assert_eq!(load_store(&path, &ae).unwrap(), store);

        let other = Autoencoder::new(MlpSpec::new(&[2, 4, 2], Activation::Tanh).unwrap()).unwrap();
        assert_eq!(load_store(&path, &other).unwrap_err().exit_code(), 1);

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert_eq!(load_store(&path, &ae).unwrap_err().exit_code(), 2);
        assert_eq!(load_store(&dir.path().join("none"), &ae).unwrap_err().exit_code(), 2);
    }
}
