//! Persisted evolution artifacts and nearest-prototype retrieval.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::evolution::{EvolutionOutcome, GroupArchive, Population, RunConfig, TrainingSet};
use crate::problems::{Instance, Task};
use crate::profiles::{extract_profile, nearest_group, GroupModel};
use crate::solvers::SolverConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LibraryError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("missing schema_version")]
    MissingVersion,
    #[error("schema_version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("invalid library: {0}")]
    Invalid(String),
    #[error("query is a {got} instance, library serves {expected}")]
    TaskMismatch { expected: Task, got: Task },
    #[error("archive for group {0} is empty")]
    EmptyArchive(usize),
}

impl From<serde_json::Error> for LibraryError {
    fn from(e: serde_json::Error) -> Self {
        LibraryError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the run config JSON.
    pub run_config_hash: String,
    pub seed: u64,
    pub iterations: usize,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverLibrary {
    pub schema_version: u32,
    pub task: Task,
    pub model: GroupModel,
    pub archives: Vec<GroupArchive>,
    pub population: Population,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub group: usize,
    /// Euclidean distance from the normalized query to every prototype.
    pub distances: Vec<f64>,
    pub config_id: String,
    pub config: SolverConfig,
}

#[derive(Deserialize)]
struct Header {
    schema_version: Option<serde_json::Value>,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("run config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

impl SolverLibrary {
    pub fn from_outcome(outcome: &EvolutionOutcome, training: &TrainingSet, cfg: &RunConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            task: training.task,
            model: training.model.clone(),
            archives: outcome.archives.clone(),
            population: outcome.population.clone(),
            provenance: Provenance {
                run_config_hash: config_hash(cfg),
                seed: cfg.seed,
                iterations: outcome.iterations,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
        }
    }

    pub fn validate(&self) -> Result<(), LibraryError> {
        let bad = |m: String| Err(LibraryError::Invalid(m));
        if self.schema_version != SCHEMA_VERSION {
            return Err(LibraryError::VersionMismatch {
                found: self.schema_version as u64,
                expected: SCHEMA_VERSION,
            });
        }
        self.model.validate().map_err(|e| LibraryError::Invalid(e.to_string()))?;
        if self.model.task != self.task {
            return bad(format!("group model is for {}, library for {}", self.model.task, self.task));
        }
        if self.archives.len() != self.model.g {
            return bad(format!("group model has G={} but there are {} archives", self.model.g, self.archives.len()));
        }
        for (g, a) in self.archives.iter().enumerate() {
            if a.group != g {
                return bad(format!("archive {g} is labelled group {}", a.group));
            }
            if a.entries.len() > a.capacity {
                return bad(format!("archive {g} exceeds its capacity"));
            }
            for e in &a.entries {
                e.config
                    .validate_for(self.task)
                    .map_err(|err| LibraryError::Invalid(format!("archive {g} entry {}: {err}", e.id)))?;
            }
        }
        for m in &self.population.members {
            m.config
                .validate_for(self.task)
                .map_err(|err| LibraryError::Invalid(format!("population member {}: {err}", m.id)))?;
        }
        if self.provenance.run_config_hash.is_empty() {
            return bad("provenance is missing its run config hash".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("library serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, LibraryError> {
        let header: Header = serde_json::from_str(text)?;
        match header.schema_version {
            None => return Err(LibraryError::MissingVersion),
            Some(v) if v.as_u64() != Some(SCHEMA_VERSION as u64) => {
                return Err(LibraryError::VersionMismatch {
                    found: v.as_u64().unwrap_or(u64::MAX),
                    expected: SCHEMA_VERSION,
                })
            }
            Some(_) => {}
        }
        let lib: SolverLibrary = serde_json::from_str(text)?;
        lib.validate()?;
        Ok(lib)
    }

    pub fn save(&self, path: &Path) -> Result<(), LibraryError> {
        fs::write(path, self.to_json()).map_err(|source| LibraryError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, LibraryError> {
        let text = fs::read_to_string(path).map_err(|source| LibraryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Rank-1 entry of the archive whose prototype is nearest to the query.
    pub fn retrieve(&self, instance: &Instance) -> Result<Retrieval, LibraryError> {
        if instance.task() != self.task {
            return Err(LibraryError::TaskMismatch {
                expected: self.task,
                got: instance.task(),
            });
        }
        let profile = extract_profile(instance);
        let group = nearest_group(&profile, &self.model).map_err(|e| LibraryError::Invalid(e.to_string()))?;
        let z = self.model.normalize(&profile.features);
        let distances = self
            .model
            .prototypes
            .iter()
            .map(|p| p.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .collect();
        let entry = self.archives[group].best().ok_or(LibraryError::EmptyArchive(group))?;
        Ok(Retrieval {
            group,
            distances,
            config_id: entry.id.clone(),
            config: entry.config.clone(),
        })
    }
}
