//! Synthetic source files with the layout and class counts of the real
//! benchmark files, plus helpers for driving the binary.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use influence_ad_core::numeric::Rng;

pub fn workspace() -> PathBuf {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    root.canonicalize().unwrap_or(root)
}

pub fn recipe(name: &str) -> PathBuf {
    workspace().join("recipes").join(format!("{name}.recipe"))
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_influence-ad"))
}

pub fn run(args: &[&str], data_dir: &Path) -> Output {
    bin()
        .args(args)
        .env("INFLUENCE_AD_DATA", data_dir)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Puts the rows of each class in a seeded random order.
fn shuffled_labels(counts: &[(&str, usize)], rng: &mut Rng) -> Vec<String> {
    let mut labels: Vec<String> = counts
        .iter()
        .flat_map(|(l, n)| std::iter::repeat_n(l.to_string(), *n))
        .collect();
    rng.shuffle(&mut labels);
    labels
}

/// 3772 rows like `ann-train.data`: 6 continuous and 15 binary attributes,
/// class 1 for 93 rows. Lines end in two spaces as in the original.
pub fn write_thyroid(dir: &Path) {
    let mut rng = Rng::new(11);
    let labels = shuffled_labels(&[("1", 93), ("2", 191), ("3", 3488)], &mut rng);
    let mut text = String::new();
    for label in labels {
        let shift = if label == "1" { 0.3 } else { 0.0 };
        write!(text, "{:.2}", rng.uniform()).unwrap();
        for _ in 0..15 {
            write!(text, " {}", (rng.uniform() < 0.2) as u8).unwrap();
        }
        for _ in 0..5 {
            write!(text, " {:.4}", 0.02 + 0.1 * rng.uniform() + shift * rng.uniform()).unwrap();
        }
        writeln!(text, " {label}  ").unwrap();
    }
    std::fs::write(dir.join("ann-train.data"), text).unwrap();
}

/// 452 rows like `arrhythmia.data`: 279 attributes, five of them with `?`
/// cells, and 66 rows in the small classes.
pub fn write_arrhythmia(dir: &Path) {
    let mut rng = Rng::new(12);
    let labels = shuffled_labels(
        &[
            ("1", 245),
            ("2", 44),
            ("6", 25),
            ("10", 50),
            ("16", 22),
            ("3", 15),
            ("4", 15),
            ("5", 13),
            ("7", 3),
            ("8", 2),
            ("9", 9),
            ("14", 4),
            ("15", 5),
        ],
        &mut rng,
    );
    let missing_cols = [10, 11, 12, 13, 14];
    let mut text = String::new();
    for (row, label) in labels.iter().enumerate() {
        for c in 0..279 {
            if missing_cols.contains(&c) && (row + c) % 7 == 0 {
                text.push('?');
            } else {
                write!(text, "{:.1}", 100.0 * rng.standard_normal()).unwrap();
            }
            text.push(',');
        }
        writeln!(text, "{label}").unwrap();
    }
    std::fs::write(dir.join("arrhythmia.data"), text).unwrap();
}

/// 494,021 rows like `kddcup.data_10_percent`: 97,278 `normal.` rows and
/// 396,743 attacks, 41 attributes of which 7 are categorical.
pub fn write_kdd(dir: &Path) {
    let mut rng = Rng::new(13);
    let labels = shuffled_labels(
        &[("normal.", 97_278), ("smurf.", 280_790), ("neptune.", 107_201), ("back.", 8_752)],
        &mut rng,
    );
    let protocols = ["tcp", "udp", "icmp"];
    let services = ["http", "smtp", "ecr_i", "private", "ftp"];
    let flags = ["SF", "S0", "REJ"];
    let mut text = String::with_capacity(labels.len() * 110);
    for label in &labels {
        let k = rng.next_u64();
        write!(
            text,
            "{},{},{},{},{}",
            k % 50,
            protocols[(k >> 8) as usize % 3],
            services[(k >> 12) as usize % 5],
            flags[(k >> 16) as usize % 3],
            (k >> 20) % 3000
        )
        .unwrap();
        for c in 5..41 {
            if [6, 11, 20, 21].contains(&c) {
                write!(text, ",{}", (k >> (c + 24)) & 1).unwrap();
            } else {
                write!(text, ",{}", (k >> (c % 40)) % 7).unwrap();
            }
        }
        writeln!(text, ",{label}").unwrap();
    }
    std::fs::write(dir.join("kddcup.data_10_percent"), text).unwrap();
}

/// A run config for `recipe` with every other key from `extra`.
pub fn write_config(dir: &Path, name: &str, recipe_name: &str, extra: &str) -> PathBuf {
    let path = dir.join(name);
    let text = format!("recipe = {}\n{extra}", recipe(recipe_name).display());
    std::fs::write(&path, text).unwrap();
    path
}

pub const SMALL_VAE: &str = "model = vae\nhidden = 8\nlatent_dim = 2\nmc_samples = 2\n\
                             epochs = 4\nbatch_size = 64\nlearning_rate = 1e-3\n\
                             checkpoint_step = 2\nsubsample_size = 16\n\
                             scorer = tracinad, reconstruction\n";
