use std::sync::Arc;

use influence_ad_core::models::{dsvdd_center_init, Autoencoder, DsvddModel, VaeModel};
use influence_ad_core::numeric::{
    Activation, DenseMatrix, FlatParams, MlpSpec, Objective, ParamLayout, Rng,
};
use influence_ad_core::training::{
    mean_loss, train, Checkpoint, CheckpointStore, TrainConfig,
};
use influence_ad_core::Error;
use influence_ad_oracles::{random_autoencoder, random_matrix, random_vae};
use proptest::prelude::*;

fn cfg(epochs: usize, batch_size: usize, lr: f64, step: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size,
        learning_rate: lr,
        checkpoint_step: step,
        seed,
    }
}

/// Unit-variance cluster stretched along the first axis, so a bottleneck has structure to learn.
fn cluster(rng: &mut Rng, rows: usize, d: usize) -> DenseMatrix {
    let mut m = random_matrix(rng, rows, d);
    for r in 0..rows {
        let row = m.row_mut(r);
        let t = row[0];
        for (j, v) in row.iter_mut().enumerate() {
            *v = 0.3 * *v + t * (1.0 + j as f64) * 0.5;
        }
    }
    m
}

#[test]
fn identical_inputs_give_identical_stores() {
    for seed in 0..10 {
        let mut rng = Rng::new(seed);
        let (vae, init) = random_vae(&mut rng);
        let data = random_matrix(&mut rng, 25, vae.input_dim());
        let c = cfg(6, 4, 0.02, 2, seed);
        let a = train(&vae, &init, &data, &c).unwrap();
        let b = train(&vae, &init, &data, &c).unwrap();
        assert_eq!(a.store.to_bytes(), b.store.to_bytes());
        assert_eq!(a.epoch_losses, b.epoch_losses);

        let other = train(&vae, &init, &data, &cfg(6, 4, 0.02, 2, seed + 1)).unwrap();
        assert_ne!(a.store.to_bytes(), other.store.to_bytes());
    }
}

#[test]
fn thyroid_schedule_has_25_checkpoints() {
    let c = cfg(250, 16, 1e-4, 10, 0);
    let epochs = c.checkpoint_epochs();
    assert_eq!(epochs.len(), 25);
    assert_eq!(epochs.first(), Some(&10));
    assert_eq!(epochs.last(), Some(&250));
}

#[test]
fn training_lowers_the_loss() {
    let mut rng = Rng::new(21);
    let data = cluster(&mut rng, 200, 6);

    let vae = VaeModel::symmetric(6, &[16], 2, 4, Activation::Tanh).unwrap();
    let init = vae.init_params(&mut Rng::new(1));
    let run = train(&vae, &init, &data, &cfg(30, 16, 0.01, 10, 1)).unwrap();

    let ae = Autoencoder::new(MlpSpec::new(&[6, 16, 2, 16, 6], Activation::Tanh).unwrap()).unwrap();
    let ae_init = ae.init_params(&mut Rng::new(2));
    let ae_run = train(&ae, &ae_init, &data, &cfg(30, 16, 0.01, 10, 2)).unwrap();

    let spec = DsvddModel::encoder_spec(6, &[16, 8], 4).unwrap();
    let d_init = DsvddModel::init_params(&spec, &mut Rng::new(3));
    let center = dsvdd_center_init(&spec, d_init.values(), &data).unwrap();
    let dsvdd = DsvddModel::new(spec, center).unwrap();
    let d_run = train(&dsvdd, &d_init, &data, &cfg(30, 16, 0.01, 10, 3)).unwrap();

    let objectives: [(&dyn Objective, _); 3] =
        [(&vae, run.store), (&ae, ae_run.store), (&dsvdd, d_run.store)];
    for (obj, store) in objectives {
        let first = mean_loss(obj, &store.checkpoints()[0].params, &data, 9).unwrap();
        let last = mean_loss(obj, &store.last().unwrap().params, &data, 9).unwrap();
        assert!(last < first, "{}: {first} -> {last}", obj.describe());
    }
}

#[test]
fn checkpoints_carry_the_configured_rate() {
    let mut rng = Rng::new(4);
    let (ae, init) = random_autoencoder(&mut rng);
    let data = random_matrix(&mut rng, 10, ae.input_dim());
    let run = train(&ae, &init, &data, &cfg(5, 3, 0.025, 2, 4)).unwrap();
    let epochs: Vec<u64> = run.store.checkpoints().iter().map(|c| c.epoch).collect();
    assert_eq!(epochs, vec![2, 4, 5]);
    assert!(run.store.checkpoints().iter().all(|c| c.learning_rate == 0.025));
    assert_eq!(run.epoch_losses.len(), 5);
}

#[test]
fn rejects_bad_inputs() {
    let mut rng = Rng::new(5);
    let (ae, init) = random_autoencoder(&mut rng);
    let data = random_matrix(&mut rng, 4, ae.input_dim());
    assert!(matches!(
        train(&ae, &init, &data, &cfg(0, 1, 0.1, 1, 0)),
        Err(Error::Config(_))
    ));
    let empty = DenseMatrix::zeros(0, ae.input_dim());
    assert!(train(&ae, &init, &empty, &cfg(1, 1, 0.1, 1, 0)).is_err());
    let wide = random_matrix(&mut rng, 4, ae.input_dim() + 1);
    assert!(train(&ae, &init, &wide, &cfg(1, 1, 0.1, 1, 0)).is_err());
}

#[test]
fn store_rejects_foreign_model() {
    let mut rng = Rng::new(6);
    let ae = Autoencoder::new(MlpSpec::new(&[3, 4, 3], Activation::Tanh).unwrap()).unwrap();
    let ae2 = Autoencoder::new(MlpSpec::new(&[3, 4, 3], Activation::Relu).unwrap()).unwrap();
    let init = ae.init_params(&mut rng);
    let data = random_matrix(&mut rng, 6, 3);
    let store = train(&ae, &init, &data, &cfg(2, 2, 0.1, 1, 0)).unwrap().store;
    let bytes = store.to_bytes();
    assert!(matches!(
        CheckpointStore::from_bytes(&bytes, &ae2),
        Err(Error::Incompatible(_))
    ));
    let mut flipped = bytes.clone();
    flipped[0] ^= 0xff;
    assert!(matches!(
        CheckpointStore::from_bytes(&flipped, &ae),
        Err(Error::Corrupt(_))
    ));
}

/// Generic objective over an arbitrary flat layout, for codec round trips.
struct Opaque {
    layout: Arc<ParamLayout>,
}

impl Objective for Opaque {
    fn kind(&self) -> influence_ad_core::numeric::LossKind {
        influence_ad_core::numeric::LossKind::Mse
    }
    fn input_dim(&self) -> usize {
        1
    }
    fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }
    fn loss(&self, _: &[f64], _: &[f64], _: &[f64]) -> influence_ad_core::Result<f64> {
        Ok(0.0)
    }
    fn accumulate_gradient(
        &self,
        _: &[f64],
        _: &[f64],
        _: &[f64],
        _: f64,
        _: &mut [f64],
    ) -> influence_ad_core::Result<f64> {
        Ok(0.0)
    }
    fn describe(&self) -> String {
        format!("opaque|{}", self.layout.total_len())
    }
}

fn any_bits_f64() -> impl Strategy<Value = f64> {
    // every finite bit pattern, including -0.0 and subnormals
    any::<u64>()
        .prop_map(f64::from_bits)
        .prop_filter("finite", |v| v.is_finite())
}

proptest! {
    #[test]
    fn store_bytes_round_trip(
        n in 1usize..20,
        cps in prop::collection::vec((1u64..5, 1e-9f64..10.0), 0..5),
        values in prop::collection::vec(any_bits_f64(), 100),
    ) {
        let obj = Opaque { layout: Arc::new(ParamLayout::vector(n)) };
        let mut store = CheckpointStore::for_objective(&obj);
        let mut epoch = 0;
        for (k, (gap, eta)) in cps.iter().enumerate() {
            epoch += gap;
            let v: Vec<f64> = values.iter().cycle().skip(k).take(n).copied().collect();
            store.push(Checkpoint {
                epoch,
                learning_rate: *eta,
                params: FlatParams::from_values(obj.layout.clone(), v).unwrap(),
            }).unwrap();
        }
        let bytes = store.to_bytes();
        let back = CheckpointStore::from_bytes(&bytes, &obj).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes.clone());
        for (a, b) in store.checkpoints().iter().zip(back.checkpoints()) {
            prop_assert_eq!(a.epoch, b.epoch);
            prop_assert_eq!(a.learning_rate.to_bits(), b.learning_rate.to_bits());
            let same = a.params.values().iter().zip(b.params.values()).all(|(x, y)| x.to_bits() == y.to_bits());
            prop_assert!(same);
        }
        prop_assert_eq!(back.fingerprint(), store.fingerprint());

        // any truncation is rejected
        if bytes.len() > 1 {
            let cut = bytes.len() / 2;
            prop_assert!(matches!(
                CheckpointStore::from_bytes(&bytes[..cut], &obj),
                Err(Error::Corrupt(_))
            ));
        }
    }

    #[test]
    fn checkpoint_count_is_ceiling(epochs in 1usize..200, step in 1usize..40) {
        let c = cfg(epochs, 1, 0.1, step, 0);
        let e = c.checkpoint_epochs();
        prop_assert_eq!(e.len(), epochs.div_ceil(step));
        prop_assert_eq!(*e.last().unwrap(), epochs);
        prop_assert!(e.windows(2).all(|w| w[0] < w[1]));
    }
}
