//! The four subcommands. Each reads a config, writes its artifacts under an
//! output directory and returns the lines to print.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;

use crate::config::RunConfig;
use crate::data::{load_encoded, make_split, save_split, Recipe};
use crate::error::{CliError, Result};
use crate::keyvalue::KeyValues;
use crate::pipeline::{build_model, evaluate_store, execute_runs, model_for_store, DataSource, RunOutput};
use crate::report::{
    version, write_json, write_loss_trace, write_scores_csv, DatasetSummary, EvaluationSummary,
    Provenance,
};
use crate::store::save_store;

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Reads a run config and applies `--seed` and `--out`. A seed override also
/// moves the influence seed unless the file pins it.
pub fn load_config(path: &Path, ov: &Overrides) -> Result<RunConfig> {
    let mut kv = KeyValues::read(path)?;
    if let Some(seed) = ov.seed {
        kv.set("seed", seed);
    }
    let mut cfg = RunConfig::from_keyvalues(kv)?;
    if let Some(out) = &ov.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Serialize)]
struct PrepareInfo {
    version: String,
    command: &'static str,
    recipe: String,
    seed: u64,
    dataset: DatasetSummary,
}

/// Splits and standardizes a dataset. `path` is a recipe or a run config
/// naming one; the output defaults to the config's `out_dir`, else `out`.
pub fn prepare(path: &Path, ov: &Overrides) -> Result<Vec<String>> {
    let kv = KeyValues::read(path)?;
    let (recipe, data_dir, seed, out) = if kv.contains("recipe") {
        let cfg = load_config(path, ov)?;
        let seed = cfg.run_seed(0);
        (Recipe::read(&cfg.recipe)?, cfg.data_dir, seed, cfg.out_dir)
    } else {
        let recipe = Recipe::from_keyvalues(kv)?;
        let data_dir = std::env::var_os(crate::config::DATA_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("data"));
        let out = ov.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        (recipe, data_dir, ov.seed.unwrap_or(0), out)
    };
    let (encoded, missing) = load_encoded(&recipe, &data_dir)?;
    let split = make_split(&encoded, &recipe, seed)?;
    create_dir(&out)?;
    save_split(&split, &out.join("split.tias"))?;
    write_json(
        &out.join("prepare.json"),
        &PrepareInfo {
            version: version(),
            command: "prepare",
            recipe: recipe.name.clone(),
            seed,
            dataset: DatasetSummary::new(&split, Some(&missing)),
        },
    )?;
    Ok(vec![split.summary_line()])
}

#[derive(Serialize)]
struct TrainInfo {
    #[serde(flatten)]
    provenance: Provenance,
    dataset: DatasetSummary,
    checkpoints: Vec<(u64, f64)>,
    final_loss: f64,
    wall_seconds: f64,
}

/// Trains run 0 and writes its checkpoint store and loss trace.
pub fn train(path: &Path, ov: &Overrides) -> Result<Vec<String>> {
    let cfg = load_config(path, ov)?;
    let started = Instant::now();
    let data = DataSource::load(&cfg)?;
    let seed = cfg.run_seed(0);
    let split = data.split(seed)?;
    let (model, init) = build_model(&cfg, &split.train, seed)?;
    let trained = influence_ad_core::training::train(
        model.objective(),
        &init,
        &split.train,
        &cfg.train_for_run(0),
    )?;
    create_dir(&cfg.out_dir)?;
    save_store(&trained.store, &cfg.out_dir.join("store.tiad"))?;
    write_loss_trace(&cfg.out_dir.join("loss_trace.csv"), &trained.epoch_losses)?;
    let final_loss = trained.epoch_losses.last().copied().unwrap_or(f64::NAN);
    write_json(
        &cfg.out_dir.join("train.json"),
        &TrainInfo {
            provenance: Provenance::new("train", &cfg),
            dataset: DatasetSummary::new(&split, data.missing()),
            checkpoints: trained
                .store
                .checkpoints()
                .iter()
                .map(|c| (c.epoch, c.learning_rate))
                .collect(),
            final_loss,
            wall_seconds: started.elapsed().as_secs_f64(),
        },
    )?;
    Ok(vec![
        split.summary_line(),
        format!(
            "checkpoints={} final_loss={final_loss:.6}",
            trained.store.len()
        ),
    ])
}

fn write_runs(cfg: &RunConfig, runs: &[RunOutput]) -> Result<()> {
    for o in runs {
        let dir = cfg.out_dir.join(format!("run-{}", o.run));
        create_dir(&dir)?;
        for (scorer, report) in &o.reports {
            write_scores_csv(
                &dir.join(format!("scores-{scorer}.csv")),
                &report.scores,
                &report.labels,
            )?;
        }
        if !o.epoch_losses.is_empty() {
            write_loss_trace(&dir.join("loss_trace.csv"), &o.epoch_losses)?;
        }
    }
    Ok(())
}

/// Scores every configured run. A single run reuses `store` (or
/// `<out>/store.tiad` when present) instead of retraining.
pub fn evaluate(path: &Path, ov: &Overrides, store: Option<&Path>) -> Result<Vec<String>> {
    let cfg = load_config(path, ov)?;
    let started = Instant::now();
    let data = DataSource::load(&cfg)?;
    let default_store = cfg.out_dir.join("store.tiad");
    let store_path = match store {
        Some(p) => Some(p.to_path_buf()),
        None if cfg.runs == 1 && default_store.is_file() => Some(default_store),
        None => None,
    };
    let runs = match store_path {
        Some(p) => {
            if cfg.runs != 1 {
                return Err(CliError::config(
                    "a stored checkpoint file covers one run; set runs = 1 or drop --store",
                ));
            }
            info!("scoring stored checkpoints {}", p.display());
            let split = data.split(cfg.run_seed(0))?;
            let (model, store) = model_for_store(&cfg, &split, &p)?;
            let reports = evaluate_store(&cfg, &model, &store, &split, 0)?;
            vec![RunOutput {
                run: 0,
                seed: cfg.run_seed(0),
                split,
                store,
                epoch_losses: Vec::new(),
                reports,
            }]
        }
        None => execute_runs(&cfg, &data)?,
    };
    create_dir(&cfg.out_dir)?;
    write_runs(&cfg, &runs)?;
    let mut summary = EvaluationSummary::from_runs(Provenance::new("evaluate", &cfg), data.missing(), &runs)?;
    summary.wall_seconds = Some(started.elapsed().as_secs_f64());
    write_json(&cfg.out_dir.join("summary.json"), &summary)?;
    let mut lines = vec![runs[0].split.summary_line()];
    lines.extend(summary.lines());
    Ok(lines)
}

/// Retrains every run and compares the first two scorers with a paired test.
pub fn bench(path: &Path, ov: &Overrides) -> Result<Vec<String>> {
    let cfg = load_config(path, ov)?;
    let started = Instant::now();
    let data = DataSource::load(&cfg)?;
    let runs = execute_runs(&cfg, &data)?;
    create_dir(&cfg.out_dir)?;
    write_runs(&cfg, &runs)?;
    let mut summary = EvaluationSummary::from_runs(Provenance::new("bench", &cfg), data.missing(), &runs)?;
    summary.wall_seconds = Some(started.elapsed().as_secs_f64());
    write_json(&cfg.out_dir.join("bench.json"), &summary)?;
    let mut lines = vec![runs[0].split.summary_line()];
    lines.extend(summary.lines());
    Ok(lines)
}
