use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, Result};
use crate::keyvalue::{parse_indices, parse_list, KeyValues};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Comma,
    /// Any run of spaces or tabs.
    Whitespace,
}

impl FromStr for Delimiter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "comma" | "," => Ok(Delimiter::Comma),
            "whitespace" => Ok(Delimiter::Whitespace),
            other => Err(format!("unknown delimiter `{other}` (comma or whitespace)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MissingPolicy {
    /// Drop a column when more than half its values are missing, then drop
    /// every row that still has a gap.
    MajorityColumnElseRow,
    /// Drop every column with any missing value.
    DropColumns,
}

impl MissingPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            MissingPolicy::MajorityColumnElseRow => "majority-column-else-row",
            MissingPolicy::DropColumns => "drop-columns",
        }
    }
}

impl FromStr for MissingPolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "majority-column-else-row" => Ok(MissingPolicy::MajorityColumnElseRow),
            "drop-columns" => Ok(MissingPolicy::DropColumns),
            other => Err(format!(
                "unknown missing-value policy `{other}` (majority-column-else-row or drop-columns)"
            )),
        }
    }
}

/// Which label values mark a row as anomalous.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassRule {
    /// Rows whose label is listed are anomalies.
    Anomalous(Vec<String>),
    /// Rows whose label is listed are normal; everything else is an anomaly.
    Normal(Vec<String>),
}

impl ClassRule {
    pub fn is_anomaly(&self, label: &str) -> bool {
        match self {
            ClassRule::Anomalous(set) => set.iter().any(|c| label_matches(c, label)),
            ClassRule::Normal(set) => !set.iter().any(|c| label_matches(c, label)),
        }
    }
}

/// Exact match, or numeric equality so that `3` matches `3.0`.
fn label_matches(class: &str, label: &str) -> bool {
    if class == label {
        return true;
    }
    match (class.parse::<f64>(), label.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recipe {
    pub name: String,
    /// Relative paths resolve against the data directory.
    pub source: PathBuf,
    pub delimiter: Delimiter,
    pub header: bool,
    pub columns: usize,
    pub label_column: usize,
    pub continuous: Vec<usize>,
    pub categorical: Vec<usize>,
    pub dropped: Vec<usize>,
    pub classes: ClassRule,
    /// Anomalies are subsampled to this fraction of the normal count before splitting.
    pub anomaly_fraction: Option<f64>,
    pub missing: MissingPolicy,
    pub missing_marker: String,
}

impl Recipe {
    pub fn read(path: &Path) -> Result<Self> {
        Self::from_keyvalues(KeyValues::read(path)?)
    }

    pub fn from_keyvalues(mut kv: KeyValues) -> Result<Self> {
        let path = kv.path().to_path_buf();
        let bad = |key: &str, e: String| {
            CliError::config(format!("{}: `{key}`: {e}", path.display()))
        };
        let name = kv.require_str("name")?;
        let source = PathBuf::from(kv.require_str("source")?);
        let delimiter = kv.take_or("delimiter", Delimiter::Comma)?;
        let header = kv.take_or("header", false)?;
        let columns: usize = kv.require("columns")?;
        let label_column: usize = kv.require("label_column")?;
        let mut indices = |key: &str| -> Result<Vec<usize>> {
            let raw = kv.take_str(key).unwrap_or_default();
            parse_indices(&raw).map_err(|e| bad(key, e))
        };
        let continuous = indices("continuous")?;
        let categorical = indices("categorical")?;
        let dropped = indices("dropped")?;

        let anomalous = kv.take_str("anomaly_classes");
        let normal = kv.take_str("normal_classes");
        let classes = match (anomalous, normal) {
            (Some(a), None) => ClassRule::Anomalous(parse_list(&a).map_err(|e| bad("anomaly_classes", e))?),
            (None, Some(n)) => ClassRule::Normal(parse_list(&n).map_err(|e| bad("normal_classes", e))?),
            _ => {
                return Err(CliError::config(format!(
                    "{}: set exactly one of `anomaly_classes` and `normal_classes`",
                    path.display()
                )))
            }
        };
        let reverse = kv.take_or("reverse", false)?;
        let fraction: Option<f64> = kv.take("anomaly_fraction")?;
        let anomaly_fraction = match (reverse, fraction) {
            (false, None) => None,
            (false, Some(_)) => {
                return Err(CliError::config(format!(
                    "{}: `anomaly_fraction` only applies with `reverse = true`",
                    path.display()
                )))
            }
            (true, f) => Some(f.unwrap_or(0.25)),
        };
        let missing = kv.take_or("missing", MissingPolicy::MajorityColumnElseRow)?;
        let missing_marker = kv.take_str("missing_marker").unwrap_or_else(|| "?".to_string());
        kv.finish()?;

        let recipe = Recipe {
            name,
            source,
            delimiter,
            header,
            columns,
            label_column,
            continuous,
            categorical,
            dropped,
            classes,
            anomaly_fraction,
            missing,
            missing_marker,
        };
        recipe.validate().map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        Ok(recipe)
    }

    /// Column roles must be disjoint and cover every column exactly once.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut role: Vec<Option<&str>> = vec![None; self.columns];
        let groups = [
            ("continuous", &self.continuous[..]),
            ("categorical", &self.categorical[..]),
            ("dropped", &self.dropped[..]),
            ("label", std::slice::from_ref(&self.label_column)),
        ];
        for (name, cols) in groups {
            for &c in cols {
                let slot = role
                    .get_mut(c)
                    .ok_or_else(|| format!("{name} column {c} is past the {} columns", self.columns))?;
                if let Some(prev) = slot {
                    return Err(format!("column {c} is both {prev} and {name}"));
                }
                *slot = Some(name);
            }
        }
        if let Some(c) = role.iter().position(Option::is_none) {
            return Err(format!("column {c} has no role"));
        }
        if self.continuous.is_empty() && self.categorical.is_empty() {
            return Err("no feature columns".into());
        }
        if let Some(f) = self.anomaly_fraction {
            if !(f > 0.0 && f.is_finite()) {
                return Err(format!("anomaly_fraction must be positive, got {f}"));
            }
        }
        Ok(())
    }

    pub fn source_path(&self, data_dir: &Path) -> PathBuf {
        if self.source.is_absolute() {
            self.source.clone()
        } else {
            data_dir.join(&self.source)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn recipe(text: &str) -> Result<Recipe> {
        Recipe::from_keyvalues(KeyValues::parse(text, Path::new("r.recipe"))?)
    }

    const TOY: &str = "name = toy\nsource = toy.csv\ncolumns = 4\nlabel_column = 3\n\
                       continuous = 0-1\ncategorical = 2\nanomaly_classes = bad\n";

    #[test]
    fn toy_recipe() {
        let r = recipe(TOY).unwrap();
        assert_eq!(r.continuous, vec![0, 1]);
        assert_eq!(r.delimiter, Delimiter::Comma);
        assert_eq!(r.missing, MissingPolicy::MajorityColumnElseRow);
        assert!(r.classes.is_anomaly("bad"));
        assert!(!r.classes.is_anomaly("good"));
        assert_eq!(r.source_path(Path::new("/d")), PathBuf::from("/d/toy.csv"));
    }

    #[test]
    fn roles_must_partition_columns() {
        assert!(recipe(&TOY.replace("columns = 4", "columns = 5")).is_err());
        assert!(recipe(&TOY.replace("categorical = 2", "categorical = 1-2")).is_err());
        assert!(recipe(&TOY.replace("label_column = 3", "label_column = 9")).is_err());
    }

    #[test]
    fn class_rules() {
        let r = recipe(&TOY.replace("anomaly_classes = bad", "normal_classes = normal.")).unwrap();
        assert!(r.classes.is_anomaly("smurf."));
        assert!(!r.classes.is_anomaly("normal."));
        assert!(recipe(&format!("{TOY}normal_classes = x\n")).is_err());
        let r = recipe(&TOY.replace("bad", "3, 14")).unwrap();
        assert!(r.classes.is_anomaly("3.0"));
        assert!(r.classes.is_anomaly("14"));
        assert!(!r.classes.is_anomaly("1"));
    }

    #[test]
    fn reverse_defaults_to_a_quarter() {
        let r = recipe(&format!("{TOY}reverse = true\n")).unwrap();
        assert_eq!(r.anomaly_fraction, Some(0.25));
        assert!(recipe(&format!("{TOY}anomaly_fraction = 0.5\n")).is_err());
    }
}
