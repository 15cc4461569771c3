//! One experiment end to end: split, initialize, train, score, evaluate.

use std::path::Path;

use influence_ad_core::eval::ScoreReport;
use influence_ad_core::influence::tracin_ad;
use influence_ad_core::models::{dsvdd_center_init, DsvddModel, VaeModel};
use influence_ad_core::numeric::{DenseMatrix, FlatParams, MlpSpec, Objective, Rng};
use influence_ad_core::training::{train, CheckpointStore};
use log::info;
use rayon::prelude::*;

use crate::config::{ModelKind, RunConfig, Scorer};
use crate::data::{load_encoded, load_split, make_split, DatasetSplit, Encoded, MissingReport, Recipe};
use crate::error::{CliError, Result};

const TAG_INIT: u64 = 0x494e_4954;

pub enum Model {
    Vae(VaeModel),
    Dsvdd(DsvddModel),
}

impl Model {
    pub fn objective(&self) -> &dyn Objective {
        match self {
            Model::Vae(m) => m,
            Model::Dsvdd(m) => m,
        }
    }
}

/// Builds the configured model for inputs of width `train.cols()` and draws
/// its initial parameters from `seed`. The Deep-SVDD center comes from the
/// initial encoder's outputs on `train`.
pub fn build_model(cfg: &RunConfig, train: &DenseMatrix, seed: u64) -> Result<(Model, FlatParams)> {
    let d = train.cols();
    let mut rng = Rng::keyed(seed, &[TAG_INIT]);
    match cfg.model {
        ModelKind::Vae => {
            let mut enc = vec![d];
            enc.extend(&cfg.hidden);
            enc.push(2 * cfg.latent_dim);
            let mut dec = vec![cfg.latent_dim];
            dec.extend(&cfg.decoder_hidden);
            dec.push(d);
            let vae = VaeModel::new(
                MlpSpec::new(&enc, cfg.activation)?,
                MlpSpec::new(&dec, cfg.activation)?,
                cfg.mc_samples,
            )?;
            let init = vae.init_params(&mut rng);
            Ok((Model::Vae(vae), init))
        }
        ModelKind::Dsvdd => {
            let mut widths = vec![d];
            widths.extend(&cfg.hidden);
            widths.push(cfg.latent_dim);
            let spec = MlpSpec::new(&widths, cfg.activation)?.without_final_bias();
            let init = DsvddModel::init_params(&spec, &mut rng);
            let center = dsvdd_center_init(&spec, init.values(), train)?;
            Ok((Model::Dsvdd(DsvddModel::new(spec, center)?), init))
        }
    }
}

/// Where each run's split comes from.
pub enum DataSource {
    /// Encoded table, split afresh with each run's seed.
    Table {
        recipe: Recipe,
        encoded: Encoded,
        missing: MissingReport,
    },
    /// One prepared split shared by all runs.
    Fixed(DatasetSplit),
}

impl DataSource {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        if let Some(path) = &cfg.split {
            return Ok(DataSource::Fixed(load_split(path)?));
        }
        let recipe = Recipe::read(&cfg.recipe)?;
        let (encoded, missing) = load_encoded(&recipe, &cfg.data_dir)?;
        Ok(DataSource::Table {
            recipe,
            encoded,
            missing,
        })
    }

    pub fn split(&self, seed: u64) -> Result<DatasetSplit> {
        match self {
            DataSource::Table { recipe, encoded, .. } => make_split(encoded, recipe, seed),
            DataSource::Fixed(s) => Ok(s.clone()),
        }
    }

    pub fn missing(&self) -> Option<&MissingReport> {
        match self {
            DataSource::Table { missing, .. } => Some(missing),
            DataSource::Fixed(_) => None,
        }
    }
}

/// Anomaly scores (higher = more anomalous) of every validation row.
pub fn score(
    cfg: &RunConfig,
    model: &Model,
    store: &CheckpointStore,
    split: &DatasetSplit,
    scorer: Scorer,
    run: usize,
) -> Result<Vec<f64>> {
    let last = store
        .last()
        .ok_or_else(|| CliError::config("checkpoint store is empty"))?;
    let per_row = |f: &(dyn Fn(&[f64]) -> influence_ad_core::Result<f64> + Sync)| -> Result<Vec<f64>> {
        let rows: Vec<&[f64]> = split.val.iter_rows().collect();
        Ok(rows.par_iter().map(|x| f(x)).collect::<influence_ad_core::Result<Vec<f64>>>()?)
    };
    match (scorer, model) {
        (Scorer::TracinAd, _) => {
            let r = tracin_ad(model.objective(), store, &split.train, &split.val, &cfg.influence(run))?;
            Ok(r.oriented_scores(cfg.orientation))
        }
        (Scorer::Reconstruction, Model::Vae(vae)) => {
            per_row(&|x| vae.reconstruction_score(last.params.values(), x))
        }
        (Scorer::DsvddPlain, Model::Dsvdd(m)) => per_row(&|x| m.score(last.params.values(), x)),
        (s, _) => Err(CliError::config(format!("scorer `{s}` does not apply to this model"))),
    }
}

/// Everything one run produced.
pub struct RunOutput {
    pub run: usize,
    pub seed: u64,
    pub split: DatasetSplit,
    pub store: CheckpointStore,
    pub epoch_losses: Vec<f64>,
    /// One report per configured scorer, in config order.
    pub reports: Vec<(Scorer, ScoreReport)>,
}

/// Trains run `run` from scratch and scores it with every configured scorer.
pub fn execute_run(cfg: &RunConfig, data: &DataSource, run: usize) -> Result<RunOutput> {
    let seed = cfg.run_seed(run);
    let split = data.split(seed)?;
    let (model, init) = build_model(cfg, &split.train, seed)?;
    let trained = train(model.objective(), &init, &split.train, &cfg.train_for_run(run))?;
    info!(
        "run {run} (seed {seed}): trained {} checkpoints, final epoch loss {:.6}",
        trained.store.len(),
        trained.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    let reports = evaluate_store(cfg, &model, &trained.store, &split, run)?;
    Ok(RunOutput {
        run,
        seed,
        split,
        store: trained.store,
        epoch_losses: trained.epoch_losses,
        reports,
    })
}

/// Scores an existing store with every configured scorer.
pub fn evaluate_store(
    cfg: &RunConfig,
    model: &Model,
    store: &CheckpointStore,
    split: &DatasetSplit,
    run: usize,
) -> Result<Vec<(Scorer, ScoreReport)>> {
    let rho = split.rho();
    cfg.scorers
        .iter()
        .map(|&s| {
            let scores = score(cfg, model, store, split, s, run)?;
            let report = ScoreReport::evaluate(scores, split.val_labels.clone(), rho, cfg.run_seed(run))?;
            info!("run {run}: {s} f1 = {:.4}", report.f1());
            Ok((s, report))
        })
        .collect()
}

/// All configured runs, in run order. Runs execute concurrently when the
/// config allows it; each run's result depends only on its own seed.
pub fn execute_runs(cfg: &RunConfig, data: &DataSource) -> Result<Vec<RunOutput>> {
    if cfg.parallel_runs {
        (0..cfg.runs).into_par_iter().map(|r| execute_run(cfg, data, r)).collect()
    } else {
        (0..cfg.runs).map(|r| execute_run(cfg, data, r)).collect()
    }
}

/// Loads a stored run: rebuilds the model for `split` and `seed`, then checks
/// the store's fingerprint against it.
pub fn model_for_store(
    cfg: &RunConfig,
    split: &DatasetSplit,
    store_path: &Path,
) -> Result<(Model, CheckpointStore)> {
    let (model, _) = build_model(cfg, &split.train, cfg.run_seed(0))?;
    let store = crate::store::load_store(store_path, model.objective())?;
    Ok((model, store))
}
