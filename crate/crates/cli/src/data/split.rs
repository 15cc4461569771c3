//! Train/validation protocol: half the normal rows train, the other half plus
//! every anomaly validate. Features are z-scored with training statistics.

use std::path::Path;

use influence_ad_core::numeric::{DenseMatrix, Rng};

use super::recipe::Recipe;
use super::table::Encoded;
use crate::error::{CliError, Result};

const TAG_SPLIT: u64 = 0x5350_4c54;
const TAG_SUBSAMPLE: u64 = 0x5245_5653;

pub const SPLIT_MAGIC: [u8; 4] = *b"TIAS";
pub const SPLIT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: String,
    pub seed: u64,
    /// Normal rows only.
    pub train: DenseMatrix,
    pub val: DenseMatrix,
    /// `true` marks an anomaly.
    pub val_labels: Vec<bool>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub n_continuous: usize,
    /// Row indices into the encoded table.
    pub train_rows: Vec<usize>,
    pub val_rows: Vec<usize>,
}

impl DatasetSplit {
    pub fn dim(&self) -> usize {
        self.train.cols()
    }

    /// Share of anomalies in the validation set.
    pub fn rho(&self) -> f64 {
        self.val_labels.iter().filter(|&&a| a).count() as f64 / self.val_labels.len() as f64
    }

    pub fn summary_line(&self) -> String {
        format!(
            "train={} val={} rho={:.3}",
            self.train.rows(),
            self.val.rows(),
            self.rho()
        )
    }
}

/// Splits `data` per the recipe's protocol, seeded by `seed`.
pub fn make_split(data: &Encoded, recipe: &Recipe, seed: u64) -> Result<DatasetSplit> {
    let n = data.features.rows();
    let is_anomaly: Vec<bool> = data.labels.iter().map(|l| recipe.classes.is_anomaly(l)).collect();
    let normals: Vec<usize> = (0..n).filter(|&i| !is_anomaly[i]).collect();
    let mut anomalies: Vec<usize> = (0..n).filter(|&i| is_anomaly[i]).collect();
    if anomalies.is_empty() {
        return Err(CliError::config(format!(
            "recipe `{}`: the class rule marks no row as anomalous",
            recipe.name
        )));
    }
    if normals.len() < 2 {
        return Err(CliError::config(format!(
            "recipe `{}`: need at least 2 normal rows, found {}",
            recipe.name,
            normals.len()
        )));
    }
    if let Some(fraction) = recipe.anomaly_fraction {
        let keep = ((fraction * normals.len() as f64 + 1e-9).floor() as usize).max(1);
        if keep < anomalies.len() {
            let mut rng = Rng::keyed(seed, &[TAG_SUBSAMPLE]);
            let mut picked: Vec<usize> = rng
                .sample_indices(anomalies.len(), keep)
                .into_iter()
                .map(|k| anomalies[k])
                .collect();
            picked.sort_unstable();
            anomalies = picked;
        }
    }

    let mut shuffled = normals.clone();
    Rng::keyed(seed, &[TAG_SPLIT]).shuffle(&mut shuffled);
    let n_train = normals.len() / 2;
    let mut train_rows = shuffled[..n_train].to_vec();
    train_rows.sort_unstable();
    let mut val_rows: Vec<usize> = shuffled[n_train..].iter().chain(&anomalies).copied().collect();
    val_rows.sort_unstable();

    let d = data.features.cols();
    let (means, stds) = zscore_fit(&data.features, &train_rows, data.n_continuous);
    let scale = |rows: &[usize]| {
        let mut m = data.features.select_rows(rows);
        for r in 0..m.rows() {
            for (j, v) in m.row_mut(r).iter_mut().enumerate() {
                *v = (*v - means[j]) / stds[j];
            }
        }
        m
    };
    let train = scale(&train_rows);
    let val = scale(&val_rows);
    debug_assert_eq!(train.cols(), d);
    Ok(DatasetSplit {
        name: recipe.name.clone(),
        seed,
        train,
        val,
        val_labels: val_rows.iter().map(|&i| is_anomaly[i]).collect(),
        means,
        stds,
        n_continuous: data.n_continuous,
        train_rows,
        val_rows,
    })
}

/// Mean and population standard deviation of the first `n_continuous`
/// columns over `rows`. Constant columns get std 1; one-hot columns get the
/// identity transform.
fn zscore_fit(m: &DenseMatrix, rows: &[usize], n_continuous: usize) -> (Vec<f64>, Vec<f64>) {
    let d = m.cols();
    let mut means = vec![0.0; d];
    let mut stds = vec![1.0; d];
    let n = rows.len() as f64;
    for j in 0..n_continuous {
        let mean = rows.iter().map(|&r| m.get(r, j)).sum::<f64>() / n;
        let var = rows.iter().map(|&r| (m.get(r, j) - mean).powi(2)).sum::<f64>() / n;
        means[j] = mean;
        let sd = var.sqrt();
        stds[j] = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
    }
    (means, stds)
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl DatasetSplit {
    /// Little-endian binary layout: magic, version, seed, name, shapes,
    /// normalization, both matrices, labels, row indices.
    pub fn to_bytes(&self) -> Vec<u8> {
        let d = self.dim();
        let mut out = Vec::new();
        out.extend_from_slice(&SPLIT_MAGIC);
        out.extend_from_slice(&SPLIT_VERSION.to_le_bytes());
        put_u64(&mut out, self.seed);
        put_u64(&mut out, self.name.len() as u64);
        out.extend_from_slice(self.name.as_bytes());
        for v in [d, self.n_continuous, self.train.rows(), self.val.rows()] {
            put_u64(&mut out, v as u64);
        }
        put_f64s(&mut out, &self.means);
        put_f64s(&mut out, &self.stds);
        put_f64s(&mut out, self.train.as_slice());
        put_f64s(&mut out, self.val.as_slice());
        out.extend(self.val_labels.iter().map(|&b| b as u8));
        for &r in self.train_rows.iter().chain(&self.val_rows) {
            put_u64(&mut out, r as u64);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |msg: &str| CliError::data(path, format!("corrupt split file: {msg}"));
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).ok_or_else(|| corrupt("truncated"))? != SPLIT_MAGIC {
            return Err(corrupt("bad magic bytes"));
        }
        let version = u32::from_le_bytes(r.take(4).ok_or_else(|| corrupt("truncated"))?.try_into().unwrap());
        if version != SPLIT_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let seed = r.u64().ok_or_else(|| corrupt("truncated"))?;
        let name_len = r.len().ok_or_else(|| corrupt("truncated"))?;
        let name = String::from_utf8(r.take(name_len).ok_or_else(|| corrupt("truncated"))?.to_vec())
            .map_err(|_| corrupt("name is not UTF-8"))?;
        let mut dims = [0usize; 4];
        for v in &mut dims {
            *v = r.len().ok_or_else(|| corrupt("truncated"))?;
        }
        let [d, n_continuous, n_train, n_val] = dims;
        let means = r.f64s(d).ok_or_else(|| corrupt("truncated"))?;
        let stds = r.f64s(d).ok_or_else(|| corrupt("truncated"))?;
        let train = r.f64s(n_train.checked_mul(d).ok_or_else(|| corrupt("size overflow"))?).ok_or_else(|| corrupt("truncated"))?;
        let val = r.f64s(n_val.checked_mul(d).ok_or_else(|| corrupt("size overflow"))?).ok_or_else(|| corrupt("truncated"))?;
        let labels = r.take(n_val).ok_or_else(|| corrupt("truncated"))?;
        if labels.iter().any(|&b| b > 1) {
            return Err(corrupt("label byte is not 0 or 1"));
        }
        let val_labels = labels.iter().map(|&b| b == 1).collect();
        let mut rows = Vec::with_capacity(n_train + n_val);
        for _ in 0..n_train + n_val {
            rows.push(r.len().ok_or_else(|| corrupt("truncated"))?);
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes"));
        }
        let val_rows = rows.split_off(n_train);
        let matrix = |rows, data| DenseMatrix::from_vec(rows, d, data).map_err(|e| corrupt(&e.to_string()));
        Ok(DatasetSplit {
            name,
            seed,
            train: matrix(n_train, train)?,
            val: matrix(n_val, val)?,
            val_labels,
            means,
            stds,
            n_continuous,
            train_rows: rows,
            val_rows,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn len(&mut self) -> Option<usize> {
        self.u64().and_then(|v| usize::try_from(v).ok())
    }

    fn f64s(&mut self, n: usize) -> Option<Vec<f64>> {
        let raw = self.take(n.checked_mul(8)?)?;
        Some(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

pub fn save_split(split: &DatasetSplit, path: &Path) -> Result<()> {
    std::fs::write(path, split.to_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn load_split(path: &Path) -> Result<DatasetSplit> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    DatasetSplit::from_bytes(&bytes, path)
}
