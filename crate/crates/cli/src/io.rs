use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use solvevo_core::problems::{read_tsplib_file, Instance};

use crate::Failure;

pub fn data_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

/// Native JSON instance or TSPLIB `.tsp` file.
pub fn load_instance(path: &Path) -> Result<Instance, Failure> {
    let inst = if path.extension().is_some_and(|e| e == "tsp") {
        Instance::Tsp(read_tsplib_file(path).map_err(|e| data_err(path, e))?)
    } else {
        let text = fs::read_to_string(path).map_err(|e| data_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| data_err(path, e))?
    };
    inst.validate().map_err(|e| data_err(path, e))?;
    Ok(inst)
}

fn is_instance_file(p: &Path) -> bool {
    let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
    p.is_file() && (name.ends_with(".tsp") || (name.ends_with(".json") && name != "manifest.json"))
}

/// Every instance file in `dir`, sorted by file name; ids are file stems.
pub fn load_dir(dir: &Path) -> Result<Vec<(String, Instance)>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| data_err(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_instance_file(p))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Data(format!("{}: no instance files", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or("instance").to_string();
            load_instance(p).map(|i| (id, i))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| data_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| data_err(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| data_err(dir, e))
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Written next to every output so a run can be repeated exactly.
#[derive(Debug, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub command: &'static str,
    pub config: C,
    pub seed: u64,
    pub tool_version: &'static str,
    pub started: f64,
    pub finished: f64,
    pub outputs: Vec<String>,
}

impl<C: Serialize> RunManifest<C> {
    pub fn new(command: &'static str, config: C, seed: u64) -> Self {
        Self {
            command,
            config,
            seed,
            tool_version: env!("CARGO_PKG_VERSION"),
            started: unix_now(),
            finished: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn finish(mut self, path: &Path) -> Result<(), Failure> {
        self.finished = unix_now();
        write_json(path, &self)
    }
}
