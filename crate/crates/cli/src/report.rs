//! Output artifacts: per-sample score CSVs, loss traces and JSON summaries.

use std::collections::BTreeMap;
use std::path::Path;

use influence_ad_core::eval::{aggregate_runs, paired_t_statistic, ScoreReport};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{RunConfig, Scorer};
use crate::data::{DatasetSplit, MissingReport};
use crate::error::{CliError, Result};
use crate::pipeline::RunOutput;

/// Crate version plus `git describe` of the build tree.
pub fn version() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("INFLUENCE_AD_GIT_DESCRIBE"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| CliError::data(path, e.to_string()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::data(path, e.to_string())
}

/// `sample_index,score,label` with label 1 for anomalies.
pub fn write_scores_csv(path: &Path, scores: &[f64], labels: &[bool]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["sample_index", "score", "label"]).map_err(csv_err(path))?;
    for (i, (s, l)) in scores.iter().zip(labels).enumerate() {
        w.write_record([i.to_string(), s.to_string(), (*l as u8).to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `epoch,mean_loss`, one row per epoch.
pub fn write_loss_trace(path: &Path, epoch_losses: &[f64]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "mean_loss"]).map_err(csv_err(path))?;
    for (e, l) in epoch_losses.iter().enumerate() {
        w.write_record([(e + 1).to_string(), l.to_string()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::data(path, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: String,
    pub command: String,
    pub config: BTreeMap<String, String>,
}

impl Provenance {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Provenance {
            version: version(),
            command: command.to_string(),
            config: cfg.echo(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub name: String,
    pub dim: usize,
    pub train_rows: usize,
    pub val_rows: usize,
    pub val_anomalies: usize,
    pub rho: f64,
    pub dropped_rows: Option<usize>,
    pub dropped_columns: Option<Vec<usize>>,
}

impl DatasetSummary {
    pub fn new(split: &DatasetSplit, missing: Option<&MissingReport>) -> Self {
        DatasetSummary {
            name: split.name.clone(),
            dim: split.dim(),
            train_rows: split.train.rows(),
            val_rows: split.val.rows(),
            val_anomalies: split.val_labels.iter().filter(|&&a| a).count(),
            rho: split.rho(),
            dropped_rows: missing.map(|m| m.dropped_rows),
            dropped_columns: missing.map(|m| m.dropped_columns.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunScore {
    pub run: usize,
    pub seed: u64,
    pub threshold: f64,
    pub flagged: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
}

impl RunScore {
    fn new(run: usize, r: &ScoreReport) -> Self {
        let c = &r.confusion;
        RunScore {
            run,
            seed: r.seed,
            threshold: r.threshold,
            flagged: r.predicted.iter().filter(|&&p| p).count(),
            precision: c.precision,
            recall: c.recall,
            f1: c.f1,
            true_positives: c.true_positives,
            false_positives: c.false_positives,
            false_negatives: c.false_negatives,
            true_negatives: c.true_negatives,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScorerSummary {
    pub scorer: String,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub single_run: bool,
    pub runs: Vec<RunScore>,
}

/// One-sided paired comparison of F1 per run: is `a` better than `b`?
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub a: String,
    pub b: String,
    pub runs: usize,
    pub mean_difference: f64,
    pub t: f64,
    pub df: f64,
    pub p_one_sided: f64,
}

pub fn compare(a: (Scorer, &[f64]), b: (Scorer, &[f64])) -> Result<Comparison> {
    let (t, df) = paired_t_statistic(a.1, b.1)?;
    let diffs: Vec<f64> = a.1.iter().zip(b.1).map(|(x, y)| x - y).collect();
    let mean_difference = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let p_one_sided = if t.is_nan() {
        1.0
    } else if t == f64::INFINITY {
        0.0
    } else if t == f64::NEG_INFINITY {
        1.0
    } else {
        let dist = StudentsT::new(0.0, 1.0, df)
            .map_err(|e| CliError::config(format!("t distribution: {e}")))?;
        1.0 - dist.cdf(t)
    };
    Ok(Comparison {
        a: a.0.to_string(),
        b: b.0.to_string(),
        runs: diffs.len(),
        mean_difference,
        t,
        df,
        p_one_sided,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationSummary {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub dataset: DatasetSummary,
    pub scorers: Vec<ScorerSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comparison: Option<Comparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_seconds: Option<f64>,
}

impl EvaluationSummary {
    pub fn from_runs(
        provenance: Provenance,
        missing: Option<&MissingReport>,
        runs: &[RunOutput],
    ) -> Result<Self> {
        let first = runs.first().ok_or_else(|| CliError::config("no runs to summarize"))?;
        let mut scorers = Vec::new();
        for (k, (scorer, _)) in first.reports.iter().enumerate() {
            let per_run: Vec<RunScore> = runs.iter().map(|o| RunScore::new(o.run, &o.reports[k].1)).collect();
            let f1s: Vec<f64> = per_run.iter().map(|r| r.f1).collect();
            let agg = aggregate_runs(&f1s)?;
            scorers.push(ScorerSummary {
                scorer: scorer.to_string(),
                f1_mean: agg.mean,
                f1_std: agg.std,
                single_run: agg.single_run,
                runs: per_run,
            });
        }
        let comparison = if first.reports.len() >= 2 && runs.len() >= 2 {
            let f1 = |k: usize| -> Vec<f64> { runs.iter().map(|o| o.reports[k].1.f1()).collect() };
            let (a, b) = (f1(0), f1(1));
            Some(compare((first.reports[0].0, &a), (first.reports[1].0, &b))?)
        } else {
            None
        };
        Ok(EvaluationSummary {
            provenance,
            dataset: DatasetSummary::new(&first.split, missing),
            scorers,
            comparison,
            wall_seconds: None,
        })
    }

    /// One line per scorer for the terminal.
    pub fn lines(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .scorers
            .iter()
            .map(|s| {
                format!(
                    "scorer={} runs={} f1_mean={:.4} f1_std={:.4}",
                    s.scorer,
                    s.runs.len(),
                    s.f1_mean,
                    s.f1_std
                )
            })
            .collect();
        if let Some(c) = &self.comparison {
            out.push(format!(
                "paired {} - {}: mean={:.4} t={:.3} p={:.4}",
                c.a, c.b, c.mean_difference, c.t, c.p_one_sided
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comparison_p_value() {
        // diffs 1, 2, 3: t = 2 * sqrt(3) with 2 df; one-sided p = 0.03709
        let a = [2.0, 3.0, 4.0];
        let b = [1.0, 1.0, 1.0];
        let c = compare((Scorer::TracinAd, &a), (Scorer::DsvddPlain, &b)).unwrap();
        assert_eq!(c.df, 2.0);
        assert!((c.p_one_sided - 0.037_089_950_113_724_29).abs() < 1e-9, "{}", c.p_one_sided);
        assert_eq!(c.mean_difference, 2.0);

        let same = compare((Scorer::TracinAd, &b), (Scorer::DsvddPlain, &b)).unwrap();
        assert_eq!(same.p_one_sided, 0.5);
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_scores_csv(&p, &[0.5, -1.25], &[false, true]).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "sample_index,score,label\n0,0.5,0\n1,-1.25,1\n"
        );
        let p = dir.path().join("l.csv");
        write_loss_trace(&p, &[2.0, 1.5]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "epoch,mean_loss\n1,2\n2,1.5\n");
    }

    #[test]
    fn version_has_describe() {
        let v = version();
        assert!(v.starts_with(env!("CARGO_PKG_VERSION")));
        assert!(v.contains('('));
    }
}
