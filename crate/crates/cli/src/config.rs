//! Run configuration: dataset, model, training, influence and scoring settings
//! for one experiment, read from a flat `key = value` file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use influence_ad_core::influence::{InfluenceConfig, Orientation};
use influence_ad_core::numeric::Activation;
use influence_ad_core::training::TrainConfig;

use crate::error::{CliError, Result};
use crate::keyvalue::{parse_list, KeyValues};

/// Environment variable naming the directory holding the source files.
pub const DATA_DIR_ENV: &str = "INFLUENCE_AD_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Vae,
    Dsvdd,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "vae" => Ok(ModelKind::Vae),
            "dsvdd" => Ok(ModelKind::Dsvdd),
            other => Err(format!("unknown model `{other}` (vae or dsvdd)")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Vae => "vae",
            ModelKind::Dsvdd => "dsvdd",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scorer {
    /// Mean checkpoint influence of a training subsample.
    TracinAd,
    /// VAE reconstruction error at the posterior mean.
    Reconstruction,
    /// Squared distance to the Deep-SVDD center.
    DsvddPlain,
}

impl Scorer {
    pub fn name(self) -> &'static str {
        match self {
            Scorer::TracinAd => "tracinad",
            Scorer::Reconstruction => "reconstruction",
            Scorer::DsvddPlain => "dsvdd-plain",
        }
    }
}

impl FromStr for Scorer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "tracinad" => Ok(Scorer::TracinAd),
            "reconstruction" => Ok(Scorer::Reconstruction),
            "dsvdd-plain" => Ok(Scorer::DsvddPlain),
            other => Err(format!(
                "unknown scorer `{other}` (tracinad, reconstruction or dsvdd-plain)"
            )),
        }
    }
}

impl fmt::Display for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// File the config was read from; relative paths inside it resolve against its directory.
    pub path: PathBuf,
    pub recipe: PathBuf,
    pub data_dir: PathBuf,
    /// Prepared split to reuse for every run instead of splitting per seed.
    pub split: Option<PathBuf>,
    pub model: ModelKind,
    pub hidden: Vec<usize>,
    /// Defaults to `hidden` reversed.
    pub decoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub activation: Activation,
    /// Monte-Carlo draws per VAE loss evaluation.
    pub mc_samples: usize,
    pub train: TrainConfig,
    pub subsample_size: usize,
    pub resample_per_checkpoint: bool,
    pub influence_seed: u64,
    pub orientation: Orientation,
    pub scorers: Vec<Scorer>,
    pub runs: usize,
    pub parallel_runs: bool,
    pub out_dir: PathBuf,
}

fn activation_name(a: Activation) -> &'static str {
    match a {
        Activation::Tanh => "tanh",
        Activation::Relu => "relu",
        Activation::Identity => "identity",
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        Self::from_keyvalues(KeyValues::read(path)?)
    }

    pub fn from_keyvalues(mut kv: KeyValues) -> Result<Self> {
        let path = kv.path().to_path_buf();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let list = |kv: &mut KeyValues, key: &str| -> Result<Option<Vec<usize>>> {
            match kv.take_str(key) {
                None => Ok(None),
                Some(raw) => parse_list(&raw)
                    .map(Some)
                    .map_err(|e| CliError::config(format!("{}: `{key}`: {e}", path.display()))),
            }
        };

        let recipe = resolve(&base, PathBuf::from(kv.require_str("recipe")?));
        let data_dir = match kv.take_str("data_dir") {
            Some(d) => resolve(&base, PathBuf::from(d)),
            None => std::env::var_os(DATA_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("data")),
        };
        let split = kv.take_str("split").map(|s| resolve(&base, PathBuf::from(s)));
        let model: ModelKind = kv.require("model")?;
        let hidden = list(&mut kv, "hidden")?.unwrap_or_default();
        let decoder_hidden = list(&mut kv, "decoder_hidden")?
            .unwrap_or_else(|| hidden.iter().rev().copied().collect());
        let latent_dim: usize = kv.require("latent_dim")?;
        let activation_raw = kv.take_str("activation").unwrap_or_else(|| "tanh".into());
        let activation: Activation = activation_raw
            .parse()
            .map_err(|e| CliError::config(format!("{}: `activation`: {e}", path.display())))?;
        let mc_samples = kv.take_or("mc_samples", 1usize)?;
        let seed = kv.take_or("seed", 0u64)?;
        let train = TrainConfig {
            epochs: kv.require("epochs")?,
            batch_size: kv.require("batch_size")?,
            learning_rate: kv.require("learning_rate")?,
            checkpoint_step: kv.take_or("checkpoint_step", 1usize)?,
            seed,
        };
        let subsample_size = kv.take_or("subsample_size", 64usize)?;
        let resample_per_checkpoint = kv.take_or("resample_per_checkpoint", false)?;
        let influence_seed = kv.take_or("influence_seed", seed)?;
        let orientation_raw = kv.take_str("orientation").unwrap_or_else(|| "low-influence".into());
        let orientation: Orientation = orientation_raw
            .parse()
            .map_err(|e| CliError::config(format!("{}: `orientation`: {e}", path.display())))?;
        let scorers_raw = kv.take_str("scorer").unwrap_or_else(|| "tracinad".into());
        let scorers: Vec<Scorer> = parse_list(&scorers_raw)
            .map_err(|e| CliError::config(format!("{}: `scorer`: {e}", path.display())))?;
        let runs = kv.take_or("runs", 1usize)?;
        let parallel_runs = kv.take_or("parallel_runs", true)?;
        let out_dir = resolve(
            &base,
            PathBuf::from(kv.take_str("out_dir").unwrap_or_else(|| "out".into())),
        );
        kv.finish()?;

        let cfg = RunConfig {
            path,
            recipe,
            data_dir,
            split,
            model,
            hidden,
            decoder_hidden,
            latent_dim,
            activation,
            mc_samples,
            train,
            subsample_size,
            resample_per_checkpoint,
            influence_seed,
            orientation,
            scorers,
            runs,
            parallel_runs,
            out_dir,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(CliError::config(format!("{}: {msg}", self.path.display())));
        self.train.validate()?;
        if self.latent_dim == 0 || self.hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return fail("layer widths must be at least 1".into());
        }
        if self.mc_samples == 0 {
            return fail("mc_samples must be at least 1".into());
        }
        if self.subsample_size == 0 {
            return fail("subsample_size must be at least 1".into());
        }
        if self.runs == 0 {
            return fail("runs must be at least 1".into());
        }
        if self.scorers.is_empty() {
            return fail("no scorer selected".into());
        }
        for s in &self.scorers {
            match (s, self.model) {
                (Scorer::Reconstruction, ModelKind::Dsvdd) | (Scorer::DsvddPlain, ModelKind::Vae) => {
                    return fail(format!("scorer `{s}` does not apply to model `{}`", self.model))
                }
                _ => {}
            }
        }
        let mut seen = self.scorers.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.scorers.len() {
            return fail("a scorer is listed twice".into());
        }
        Ok(())
    }

    /// Influence settings for run `r`.
    pub fn influence(&self, run: usize) -> InfluenceConfig {
        InfluenceConfig {
            subsample_size: self.subsample_size,
            resample_per_checkpoint: self.resample_per_checkpoint,
            seed: self.influence_seed.wrapping_add(run as u64),
        }
    }

    /// Training settings for run `r`: every seed moves by `r`.
    pub fn train_for_run(&self, run: usize) -> TrainConfig {
        TrainConfig {
            seed: self.run_seed(run),
            ..self.train.clone()
        }
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.train.seed.wrapping_add(run as u64)
    }

    /// Every resolved setting, defaults included, as written in a config file.
    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("config_path", self.path.display().to_string());
        put("recipe", self.recipe.display().to_string());
        put("data_dir", self.data_dir.display().to_string());
        put(
            "split",
            self.split.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
        );
        put("model", self.model.to_string());
        put("hidden", join(&self.hidden));
        put("decoder_hidden", join(&self.decoder_hidden));
        put("latent_dim", self.latent_dim.to_string());
        put("activation", activation_name(self.activation).into());
        put("mc_samples", self.mc_samples.to_string());
        put("epochs", self.train.epochs.to_string());
        put("batch_size", self.train.batch_size.to_string());
        put("learning_rate", format!("{:e}", self.train.learning_rate));
        put("checkpoint_step", self.train.checkpoint_step.to_string());
        put("seed", self.train.seed.to_string());
        put("subsample_size", self.subsample_size.to_string());
        put("resample_per_checkpoint", self.resample_per_checkpoint.to_string());
        put("influence_seed", self.influence_seed.to_string());
        put("orientation", self.orientation.as_str().into());
        put("scorer", join(&self.scorers));
        put("runs", self.runs.to_string());
        put("parallel_runs", self.parallel_runs.to_string());
        put("out_dir", self.out_dir.display().to_string());
        m
    }
}
