//! Reading a recipe's source file into typed columns, dropping missing values
//! and expanding categorical columns.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use influence_ad_core::numeric::DenseMatrix;
use log::info;

use super::recipe::{Delimiter, MissingPolicy, Recipe};
use crate::error::{CliError, Result};

const MISSING_CODE: u32 = u32::MAX;

/// Source rows after parsing, with missing cells marked.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub path: PathBuf,
    /// Original indices of the continuous columns still present.
    pub continuous_cols: Vec<usize>,
    /// Row-major, NaN where the source had the missing marker.
    continuous: Vec<f64>,
    pub categorical_cols: Vec<usize>,
    /// Level names per categorical column, indexed by code.
    levels: Vec<Vec<String>>,
    /// Row-major codes, `MISSING_CODE` for gaps.
    codes: Vec<u32>,
    pub labels: Vec<String>,
    /// 1-based source line of every row.
    pub lines: Vec<u64>,
}

/// What the missing-value pass removed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MissingReport {
    pub dropped_columns: Vec<usize>,
    pub dropped_rows: usize,
}

impl RawTable {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    fn n_cont(&self) -> usize {
        self.continuous_cols.len()
    }

    fn n_cat(&self) -> usize {
        self.categorical_cols.len()
    }

    /// Applies the recipe's policy; afterwards no cell is missing.
    pub fn drop_missing(&mut self, policy: MissingPolicy) -> MissingReport {
        let n = self.rows();
        let (nc, nk) = (self.n_cont(), self.n_cat());
        let mut cont_missing = vec![0usize; nc];
        let mut cat_missing = vec![0usize; nk];
        for r in 0..n {
            for (j, m) in cont_missing.iter_mut().enumerate() {
                *m += self.continuous[r * nc + j].is_nan() as usize;
            }
            for (j, m) in cat_missing.iter_mut().enumerate() {
                *m += (self.codes[r * nk + j] == MISSING_CODE) as usize;
            }
        }
        let drop_col = |count: usize| match policy {
            MissingPolicy::DropColumns => count > 0,
            MissingPolicy::MajorityColumnElseRow => 2 * count > n,
        };
        let keep_cont: Vec<usize> = (0..nc).filter(|&j| !drop_col(cont_missing[j])).collect();
        let keep_cat: Vec<usize> = (0..nk).filter(|&j| !drop_col(cat_missing[j])).collect();

        let mut report = MissingReport::default();
        report.dropped_columns.extend(
            (0..nc)
                .filter(|j| !keep_cont.contains(j))
                .map(|j| self.continuous_cols[j]),
        );
        report.dropped_columns.extend(
            (0..nk)
                .filter(|j| !keep_cat.contains(j))
                .map(|j| self.categorical_cols[j]),
        );
        report.dropped_columns.sort_unstable();

        let mut continuous = Vec::with_capacity(n * keep_cont.len());
        let mut codes = Vec::with_capacity(n * keep_cat.len());
        let mut labels = Vec::with_capacity(n);
        let mut lines = Vec::with_capacity(n);
        for r in 0..n {
            let cont_row = keep_cont.iter().map(|&j| self.continuous[r * nc + j]);
            let code_row = keep_cat.iter().map(|&j| self.codes[r * nk + j]);
            if cont_row.clone().any(f64::is_nan) || code_row.clone().any(|c| c == MISSING_CODE) {
                report.dropped_rows += 1;
                continue;
            }
            continuous.extend(cont_row);
            codes.extend(code_row);
            labels.push(std::mem::take(&mut self.labels[r]));
            lines.push(self.lines[r]);
        }
        self.continuous_cols = keep_cont.iter().map(|&j| self.continuous_cols[j]).collect();
        self.categorical_cols = keep_cat.iter().map(|&j| self.categorical_cols[j]).collect();
        self.levels = keep_cat.iter().map(|&j| std::mem::take(&mut self.levels[j])).collect();
        self.continuous = continuous;
        self.codes = codes;
        self.labels = labels;
        self.lines = lines;
        report
    }

    /// Continuous columns followed by one 0/1 column per observed level of each
    /// categorical column (levels in sorted order).
    pub fn encode(&self) -> Result<Encoded> {
        let n = self.rows();
        let (nc, nk) = (self.n_cont(), self.n_cat());
        // sorted level order, and the level codes actually present
        let mut maps = Vec::with_capacity(nk);
        let mut width = nc;
        for j in 0..nk {
            let mut used = vec![false; self.levels[j].len()];
            for r in 0..n {
                let c = self.codes[r * nk + j];
                if c == MISSING_CODE {
                    return Err(CliError::Schema {
                        path: self.path.clone(),
                        line: self.lines[r],
                        message: format!("missing value in column {}", self.categorical_cols[j]),
                    });
                }
                used[c as usize] = true;
            }
            let mut present: Vec<(&str, u32)> = self.levels[j]
                .iter()
                .enumerate()
                .filter(|(c, _)| used[*c])
                .map(|(c, s)| (s.as_str(), c as u32))
                .collect();
            present.sort();
            let mut slot = vec![usize::MAX; self.levels[j].len()];
            for (k, (_, c)) in present.iter().enumerate() {
                slot[*c as usize] = width + k;
            }
            width += present.len();
            maps.push(slot);
        }

        let mut data = vec![0.0; n * width];
        for r in 0..n {
            let row = &mut data[r * width..(r + 1) * width];
            let values = &self.continuous[r * nc..(r + 1) * nc];
            for (j, (&v, out)) in values.iter().zip(&mut row[..nc]).enumerate() {
                if v.is_nan() {
                    return Err(CliError::Schema {
                        path: self.path.clone(),
                        line: self.lines[r],
                        message: format!("missing value in column {}", self.continuous_cols[j]),
                    });
                }
                *out = v;
            }
            for (j, slot) in maps.iter().enumerate() {
                row[slot[self.codes[r * nk + j] as usize]] = 1.0;
            }
        }
        Ok(Encoded {
            features: DenseMatrix::from_vec(n, width, data)?,
            n_continuous: nc,
            labels: self.labels.clone(),
        })
    }
}

/// Numeric feature matrix ready for splitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub features: DenseMatrix,
    /// Leading columns that get z-scored; the rest are one-hot indicators.
    pub n_continuous: usize,
    pub labels: Vec<String>,
}

struct Builder<'a> {
    recipe: &'a Recipe,
    path: PathBuf,
    table: RawTable,
    level_ids: Vec<BTreeMap<String, u32>>,
}

impl<'a> Builder<'a> {
    fn new(recipe: &'a Recipe, path: PathBuf) -> Self {
        let mut categorical_cols = recipe.categorical.clone();
        categorical_cols.sort_unstable();
        let mut continuous_cols = recipe.continuous.clone();
        continuous_cols.sort_unstable();
        let nk = categorical_cols.len();
        Builder {
            recipe,
            table: RawTable {
                path: path.clone(),
                continuous_cols,
                continuous: Vec::new(),
                categorical_cols,
                levels: vec![Vec::new(); nk],
                codes: Vec::new(),
                labels: Vec::new(),
                lines: Vec::new(),
            },
            path,
            level_ids: vec![BTreeMap::new(); nk],
        }
    }

    fn push<'f>(&mut self, line: u64, fields: impl Iterator<Item = &'f str>) -> Result<()> {
        let fields: Vec<&str> = fields.map(str::trim).collect();
        if fields.len() != self.recipe.columns {
            return Err(CliError::Schema {
                path: self.path.clone(),
                line,
                message: format!(
                    "expected {} fields, found {}",
                    self.recipe.columns,
                    fields.len()
                ),
            });
        }
        let marker = self.recipe.missing_marker.as_str();
        for &c in &self.table.continuous_cols {
            let raw = fields[c];
            let v = if raw == marker {
                f64::NAN
            } else {
                match raw.parse::<f64>() {
                    Ok(v) if v.is_finite() => v,
                    _ => {
                        return Err(CliError::Schema {
                            path: self.path.clone(),
                            line,
                            message: format!("column {c}: `{raw}` is not a finite number"),
                        })
                    }
                }
            };
            self.table.continuous.push(v);
        }
        for (j, &c) in self.table.categorical_cols.iter().enumerate() {
            let raw = fields[c];
            let code = if raw == marker {
                MISSING_CODE
            } else {
                let next = self.table.levels[j].len() as u32;
                let id = *self.level_ids[j].entry(raw.to_string()).or_insert(next);
                if id == next {
                    self.table.levels[j].push(raw.to_string());
                }
                id
            };
            self.table.codes.push(code);
        }
        let label = fields[self.recipe.label_column];
        if label.is_empty() || label == marker {
            return Err(CliError::Schema {
                path: self.path.clone(),
                line,
                message: "missing class label".into(),
            });
        }
        self.table.labels.push(label.to_string());
        self.table.lines.push(line);
        Ok(())
    }
}

/// Parses the recipe's source file under `data_dir`.
pub fn load_recipe(recipe: &Recipe, data_dir: &Path) -> Result<RawTable> {
    let path = recipe.source_path(data_dir);
    let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
    let mut b = Builder::new(recipe, path.clone());
    match recipe.delimiter {
        Delimiter::Whitespace => {
            let reader = BufReader::new(file);
            for (i, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| CliError::io(&path, e))?;
                if (i == 0 && recipe.header) || line.trim().is_empty() {
                    continue;
                }
                b.push(i as u64 + 1, line.split_whitespace())?;
            }
        }
        Delimiter::Comma => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(recipe.header)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(BufReader::new(file));
            let mut record = csv::StringRecord::new();
            loop {
                match reader.read_record(&mut record) {
                    Ok(false) => break,
                    Ok(true) => {
                        let line = record.position().map_or(0, |p| p.line());
                        b.push(line, record.iter())?;
                    }
                    Err(e) => {
                        let line = e.position().map_or(0, |p| p.line());
                        return Err(CliError::Schema {
                            path: path.clone(),
                            line,
                            message: e.to_string(),
                        });
                    }
                }
            }
        }
    }
    if b.table.rows() == 0 {
        return Err(CliError::Schema {
            path,
            line: 0,
            message: "no data rows".into(),
        });
    }
    info!("{}: read {} rows", path.display(), b.table.rows());
    Ok(b.table)
}

/// Loads, drops missing values per the recipe, and one-hot encodes.
pub fn load_encoded(recipe: &Recipe, data_dir: &Path) -> Result<(Encoded, MissingReport)> {
    let mut table = load_recipe(recipe, data_dir)?;
    let report = table.drop_missing(recipe.missing);
    if !report.dropped_columns.is_empty() || report.dropped_rows > 0 {
        info!(
            "{}: missing values dropped {} columns {:?} and {} rows",
            recipe.name,
            report.dropped_columns.len(),
            report.dropped_columns,
            report.dropped_rows
        );
    }
    if table.rows() == 0 {
        return Err(CliError::data(&table.path, "no rows left after dropping missing values"));
    }
    Ok((table.encode()?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keyvalue::KeyValues;
    use std::io::Write;

    fn recipe(text: &str) -> Recipe {
        Recipe::from_keyvalues(KeyValues::parse(text, Path::new("r")).unwrap()).unwrap()
    }

    fn write(dir: &Path, name: &str, body: &str) {
        let mut f = File::create(dir.join(name)).unwrap();
        f.write_all(body.as_bytes()).unwrap();
    }

    const TOY: &str = "name = toy\nsource = toy.csv\ncolumns = 4\nlabel_column = 3\n\
                       continuous = 0-1\ncategorical = 2\nanomaly_classes = bad\n";

    #[test]
    fn comma_file_with_one_hot() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "toy.csv", "1,2,tcp,ok\n3,4,udp,bad\n\n5,6,tcp,ok\n");
        let (enc, rep) = load_encoded(&recipe(TOY), dir.path()).unwrap();
        assert_eq!(rep, MissingReport::default());
        assert_eq!(enc.n_continuous, 2);
        assert_eq!(enc.features.cols(), 4);
        assert_eq!(enc.features.row(1), &[3.0, 4.0, 0.0, 1.0]);
        assert_eq!(enc.features.row(2), &[5.0, 6.0, 1.0, 0.0]);
        assert_eq!(enc.labels, vec!["ok", "bad", "ok"]);
    }

    #[test]
    fn schema_errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "toy.csv", "1,2,tcp,ok\n3,4,udp\n");
        let err = load_recipe(&recipe(TOY), dir.path()).unwrap_err().to_string();
        assert!(err.ends_with("toy.csv:2: expected 4 fields, found 3"), "{err}");

        write(dir.path(), "toy.csv", "1,2,tcp,ok\n1,x,tcp,ok\n");
        let err = load_recipe(&recipe(TOY), dir.path()).unwrap_err().to_string();
        assert!(err.contains("toy.csv:2: column 1"), "{err}");

        write(dir.path(), "toy.csv", "");
        let err = load_recipe(&recipe(TOY), dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(matches!(err, CliError::Schema { .. }));
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_recipe(&recipe(TOY), dir.path()).unwrap_err();
        assert!(err.to_string().contains("toy.csv"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn whitespace_and_missing_policies() {
        let dir = tempfile::tempdir().unwrap();
        // column 0 is mostly missing, column 1 has one gap
        write(
            dir.path(),
            "w.data",
            "?  1 a ok\n? ? a ok\n 3   5 b bad\n? 7 a ok\n",
        );
        let text = TOY.replace("toy.csv", "w.data") + "delimiter = whitespace\n";
        let (enc, rep) = load_encoded(&recipe(&text), dir.path()).unwrap();
        assert_eq!(rep.dropped_columns, vec![0]);
        assert_eq!(rep.dropped_rows, 1);
        assert_eq!(enc.n_continuous, 1);
        assert_eq!(enc.features.rows(), 3);

        let text = text + "missing = drop-columns\n";
        let (enc, rep) = load_encoded(&recipe(&text), dir.path()).unwrap();
        assert_eq!(rep.dropped_columns, vec![0, 1]);
        assert_eq!(rep.dropped_rows, 0);
        assert_eq!(enc.n_continuous, 0);
        assert_eq!(enc.features.rows(), 4);
    }
}
