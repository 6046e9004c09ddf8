//! Run configuration, TOML config files and flag merging.

use std::path::PathBuf;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::io::Orientation;
use super::preprocess::PreprocessConfig;
use crate::bench::TransformSettings;
use crate::error::{Error, Result};
use crate::glasso::{DEFAULT_EBIC_GAMMA, DEFAULT_PATH_LENGTH, DEFAULT_PATH_RATIO, DEFAULT_TOL};
use crate::init::DEFAULT_GAMMA;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitializerKind {
    #[default]
    Moment,
    /// Moments shrunk towards the log mean-variance trend.
    Mirna,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitializerConfig {
    pub kind: InitializerKind,
    /// Weight on the observed moments (mirna only).
    pub gamma: f64,
    /// Estimate one weight per variable by bootstrap instead of using `gamma`.
    pub empirical_bayes: bool,
    pub bootstrap_reps: usize,
}

impl Default for InitializerConfig {
    fn default() -> Self {
        Self {
            kind: InitializerKind::Moment,
            gamma: DEFAULT_GAMMA,
            empirical_bayes: false,
            bootstrap_reps: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub length: usize,
    pub ratio: f64,
    pub tol: f64,
    /// Explicit decreasing penalties; replaces the geometric grid.
    pub lambdas: Option<Vec<f64>>,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            length: DEFAULT_PATH_LENGTH,
            ratio: DEFAULT_PATH_RATIO,
            tol: DEFAULT_TOL,
            lambdas: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub orientation: Orientation,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub preprocess: PreprocessConfig,
    pub initializer: InitializerConfig,
    pub transform: TransformSettings,
    pub path: PathConfig,
    pub ebic_gamma: f64,
    pub top_k: usize,
    /// Reuse a matching transformed matrix from the output directory.
    pub resume: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: None,
            orientation: Orientation::default(),
            output_dir: PathBuf::from("plngraph-out"),
            seed: 1,
            preprocess: PreprocessConfig::default(),
            initializer: InitializerConfig::default(),
            transform: TransformSettings::default(),
            path: PathConfig::default(),
            ebic_gamma: DEFAULT_EBIC_GAMMA,
            top_k: 10,
            resume: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let q = self.preprocess.min_variance_quantile;
        if !(0.0..1.0).contains(&q) {
            return Err(Error::Config(format!("min_variance_quantile {q} not in [0, 1)")));
        }
        let g = self.initializer.gamma;
        if self.initializer.kind == InitializerKind::Mirna && !(g > 0.0 && g < 1.0) {
            return Err(Error::Config(format!("initializer gamma {g} not in (0, 1)")));
        }
        if !(0.0..=1.0).contains(&self.ebic_gamma) {
            return Err(Error::Config(format!("ebic_gamma {} not in [0, 1]", self.ebic_gamma)));
        }
        if !(self.transform.rel_tol > 0.0) {
            return Err(Error::Config("transform rel_tol must be positive".into()));
        }
        if let Some(l) = &self.path.lambdas {
            if l.is_empty() || l.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Config("path lambdas must be positive and non-empty".into()));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        merge_settings(Some(text), &[]).map(|(c, _)| c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, without the output location and
    /// the resume switch, which do not affect results.
    pub fn hash(&self) -> String {
        let normalized = Self {
            output_dir: PathBuf::new(),
            resume: false,
            ..self.clone()
        };
        sha256_hex(serde_json::to_string(&normalized).expect("config serializes").as_bytes())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Build settings from an optional TOML document and dotted-key flag values.
/// A key set in both places keeps the file's value; a warning is returned for
/// every flag that disagreed with the file.
pub fn merge_settings<T: DeserializeOwned>(
    file: Option<&str>,
    flags: &[(String, toml::Value)],
) -> Result<(T, Vec<String>)> {
    let mut table = match file {
        Some(text) => text
            .parse::<toml::Table>()
            .map_err(|e| Error::Config(format!("config file: {e}")))?,
        None => toml::Table::new(),
    };
    let file_table = table.clone();
    let mut warnings = Vec::new();
    for (key, value) in flags {
        let parts: Vec<&str> = key.split('.').collect();
        match lookup(&file_table, &parts) {
            Some(existing) => {
                if existing != value {
                    warnings.push(format!(
                        "flag value {key} = {value} ignored; the config file sets {key} = {existing}"
                    ));
                }
            }
            None => insert(&mut table, &parts, value.clone())?,
        }
    }
    let settings = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    Ok((settings, warnings))
}

fn lookup<'a>(table: &'a toml::Table, parts: &[&str]) -> Option<&'a toml::Value> {
    let (last, head) = parts.split_last()?;
    let mut t = table;
    for p in head {
        t = t.get(*p)?.as_table()?;
    }
    t.get(*last)
}

fn insert(table: &mut toml::Table, parts: &[&str], value: toml::Value) -> Result<()> {
    let (last, head) = parts.split_last().expect("non-empty key");
    let mut t = table;
    for p in head {
        t = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(c.hash(), PipelineConfig::default().hash());
    }

    #[test]
    fn file_wins_with_warning() {
        let file = "seed = 9\n[preprocess]\nmin_variance_quantile = 0.5\n";
        let flags = vec![
            ("seed".to_string(), toml::Value::Integer(3)),
            ("preprocess.depth_adjust".to_string(), toml::Value::Boolean(false)),
            ("preprocess.min_variance_quantile".to_string(), toml::Value::Float(0.5)),
        ];
        let (c, warnings): (PipelineConfig, _) = merge_settings(Some(file), &flags).unwrap();
        assert_eq!(c.seed, 9);
        assert!(!c.preprocess.depth_adjust);
        assert_eq!(c.preprocess.min_variance_quantile, 0.5);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("seed"));
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let e = PipelineConfig::from_toml("sead = 1\n").unwrap_err();
        assert_eq!(e.exit_code(), 4);
        let mut c = PipelineConfig::default();
        c.preprocess.min_variance_quantile = 1.0;
        assert_eq!(c.validate().unwrap_err().exit_code(), 4);
    }
}
