use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use jdd_core::mixture::{JumpDiffusionParams, NllModel};
use jdd_core::plotdata::Provenance;
use jdd_core::reach::sindy_params;
use jdd_core::sindy::KmModels;
use jdd_core::trajectory::{load_trajectory_file, GoalSet, Trajectory};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// First 16 hex digits of the SHA-256 of `value`'s JSON form.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    let digest = Sha256::digest(&json);
    format!("{digest:x}")[..16].to_string()
}

pub fn provenance<T: Serialize>(value: &T, seed: u64) -> Provenance {
    Provenance {
        config_hash: config_hash(value),
        seed,
    }
}

/// Destination for one output: a file, or stdout when no path is given.
pub fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            Box::new(io::BufWriter::new(
                fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
            ))
        }
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut w = sink(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn trajectory(path: &Path) -> Result<Trajectory> {
    load_trajectory_file(path).with_context(|| format!("loading trajectory {}", path.display()))
}

pub fn goals(path: &Path) -> Result<GoalSet> {
    GoalSet::load(path).with_context(|| format!("loading goals {}", path.display()))
}

/// Reads per-transition goal labels from a CSV with a `label` column. Entries
/// are goal indices or goal labels.
pub fn labels(path: &Path, goals: &GoalSet) -> Result<Vec<usize>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut col = None;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some(c) = col else {
            col = Some(
                fields
                    .iter()
                    .position(|f| *f == "label")
                    .with_context(|| format!("{}: header has no `label` column", path.display()))?,
            );
            continue;
        };
        let v = fields
            .get(c)
            .with_context(|| format!("{} line {}: missing label", path.display(), idx + 1))?;
        let k = match v.parse::<usize>() {
            Ok(k) => k,
            Err(_) => goals
                .goals
                .iter()
                .position(|g| g.label == *v)
                .with_context(|| format!("{} line {}: unknown goal {v:?}", path.display(), idx + 1))?,
        };
        if k >= goals.len() {
            bail!("{} line {}: goal index {k} out of range", path.display(), idx + 1);
        }
        out.push(k);
    }
    Ok(out)
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("not a number: {v:?}"))
        })
        .collect()
}

/// A fitted model as stored on disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelFile {
    Nll {
        config_hash: String,
        seed: u64,
        model: NllModel,
    },
    Sindy {
        config_hash: String,
        seed: u64,
        /// Goal positions used when evaluating the moment models.
        goals: Vec<Vec<f64>>,
        models: Vec<KmModels>,
    },
}

impl ModelFile {
    pub fn dims(&self) -> usize {
        match self {
            ModelFile::Nll { model, .. } => model.params.first().map_or(0, Vec::len),
            ModelFile::Sindy { models, .. } => models.len(),
        }
    }

    pub fn dt(&self) -> f64 {
        match self {
            ModelFile::Nll { model, .. } => model.dt,
            ModelFile::Sindy { models, .. } => models[0].dt,
        }
    }

    /// `params[goal][dim]` at start state `x0`.
    pub fn params_at(&self, x0: &[f64]) -> Result<Vec<Vec<JumpDiffusionParams>>> {
        if x0.len() != self.dims() {
            bail!("--x0 has {} values but the model has {} dimensions", x0.len(), self.dims());
        }
        Ok(match self {
            ModelFile::Nll { model, .. } => model.params.clone(),
            ModelFile::Sindy { goals, models, .. } => sindy_params(models, x0, goals),
        })
    }
}

pub fn model(path: &Path) -> Result<ModelFile> {
    let m: ModelFile = read_json(path)?;
    if m.dims() == 0 {
        bail!("{}: model has no dimensions", path.display());
    }
    Ok(m)
}

/// `path` with its extension replaced.
pub fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}
