//! Dataset recipes, ingestion and the train/validation split.

mod recipe;
mod split;
mod table;

pub use recipe::{ClassRule, Delimiter, MissingPolicy, Recipe};
pub use split::{load_split, make_split, save_split, DatasetSplit, SPLIT_MAGIC, SPLIT_VERSION};
pub use table::{load_encoded, load_recipe, Encoded, MissingReport, RawTable};
