//! Contamination-ratio thresholding, F1 and multi-run aggregation.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Slack absorbed before rounding `rho * n` up, so that a ratio computed as
/// `count / n` recovers `count` exactly.
const RATIO_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Thresholded {
    /// Score of the lowest-ranked flagged sample.
    pub threshold: f64,
    pub flagged: Vec<bool>,
    pub n_flagged: usize,
}

/// Number of samples flagged at contamination ratio `rho` among `n`: `ceil(rho * n)`.
pub fn flag_count(rho: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let k = libm::ceil(rho * n as f64 - RATIO_SLACK) as usize;
    k.clamp(1, n)
}

/// Flags the `ceil(rho * N)` highest scores. Ties rank by ascending index.
pub fn threshold_by_ratio(scores: &[f64], rho: f64) -> Result<Thresholded> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Input(format!(
            "contamination ratio must lie in (0, 1), got {rho}"
        )));
    }
    if scores.is_empty() {
        return Err(Error::Input(String::from("no scores to threshold")));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(Error::NonFinite {
            context: "anomaly score",
            sample: i,
        });
    }
    let k = flag_count(rho, scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut flagged = vec![false; scores.len()];
    for &i in &order[..k] {
        flagged[i] = true;
    }
    Ok(Thresholded {
        threshold: scores[order[k - 1]],
        flagged,
        n_flagged: k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Confusion {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub true_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 with anomalies as the positive class; `0/0` counts as 0.
pub fn f1_score(predicted: &[bool], labels: &[bool]) -> Result<Confusion> {
    if predicted.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut fneg, mut tn) = (0, 0, 0, 0);
    for (&p, &l) in predicted.iter().zip(labels) {
        match (p, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Confusion {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fneg,
        true_negatives: tn,
        precision,
        recall,
        f1,
    })
}

/// Scores of one run, thresholded and compared with the labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub predicted: Vec<bool>,
    pub threshold: f64,
    pub confusion: Confusion,
    pub seed: u64,
}

impl ScoreReport {
    pub fn evaluate(scores: Vec<f64>, labels: Vec<bool>, rho: f64, seed: u64) -> Result<Self> {
        let t = threshold_by_ratio(&scores, rho)?;
        let confusion = f1_score(&t.flagged, &labels)?;
        Ok(ScoreReport {
            scores,
            labels,
            predicted: t.flagged,
            threshold: t.threshold,
            confusion,
            seed,
        })
    }

    pub fn f1(&self) -> f64 {
        self.confusion.f1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunAggregate {
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 for a single run.
    pub std: f64,
    pub single_run: bool,
}

pub fn aggregate_runs(values: &[f64]) -> Result<RunAggregate> {
    if values.is_empty() {
        return Err(Error::Input(String::from("no runs to aggregate")));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() == 1 {
        0.0
    } else {
        libm::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
    };
    Ok(RunAggregate {
        values: values.to_vec(),
        mean,
        std,
        single_run: values.len() == 1,
    })
}

/// Expected F1 of a uniformly random ranking when exactly the true number of
/// anomalies is flagged: precision and recall both equal `rho`.
pub fn random_ranking_f1(rho: f64) -> f64 {
    rho
}

/// Paired t statistic for `mean(a - b) > 0` and its degrees of freedom.
pub fn paired_t_statistic(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::Input(format!(
            "paired test needs two equal-length samples of size >= 2 (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let agg = aggregate_runs(&diffs)?;
    let n = diffs.len() as f64;
    let se = agg.std / libm::sqrt(n);
    let t = if se == 0.0 {
        if agg.mean > 0.0 {
            f64::INFINITY
        } else if agg.mean < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    } else {
        agg.mean / se
    };
    Ok((t, n - 1.0))
}
