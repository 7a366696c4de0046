//! Append-only run directories and their manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::LoadedConfig;
use crate::CliError;

pub const MANIFEST_FILE: &str = "run_manifest.json";
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub run_id: String,
    pub command: String,
    /// Command arguments beyond the config, e.g. the regime.
    pub arguments: BTreeMap<String, String>,
    pub config_sha256: String,
    pub seeds: BTreeMap<String, u64>,
    /// Upstream runs by role (`ingest`, `split`, `train`, ...).
    pub parents: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    /// Files written by this run, relative to the run directory.
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut h = Sha256::new();
    io::copy(&mut fs::File::open(path)?, &mut h)?;
    Ok(hex::encode(h.finalize()))
}

/// Digest a file, or every file below a directory in path order.
pub fn digest_inputs(path: &Path) -> io::Result<Vec<FileDigest>> {
    if path.is_file() {
        return Ok(vec![FileDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        }]);
    }
    let mut files = Vec::new();
    collect_files(path, &mut files)?;
    files.sort();
    files
        .into_iter()
        .map(|p| {
            Ok(FileDigest {
                sha256: sha256_file(&p)?,
                path: p.display().to_string(),
            })
        })
        .collect()
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let p = entry?.path();
        if p.is_dir() {
            collect_files(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    /// `(sequence, id)` of every run directory, optionally of one command.
    /// The sequence number is shared by all commands.
    fn run_ids(&self, command: Option<&str>) -> Vec<(u32, String)> {
        let mut ids: Vec<(u32, String)> = fs::read_dir(self.runs_dir())
            .into_iter()
            .flatten()
            .filter_map(|e| e.ok()?.file_name().into_string().ok())
            .filter_map(|name| {
                let (cmd, n) = name.rsplit_once('-')?;
                if command.is_some_and(|c| c != cmd) {
                    return None;
                }
                Some((n.parse::<u32>().ok()?, name))
            })
            .collect();
        ids.sort();
        ids
    }

    /// All completed runs of `command`, oldest first.
    pub fn completed_runs(&self, command: &str) -> Vec<String> {
        self.run_ids(Some(command))
            .into_iter()
            .map(|(_, id)| id)
            .filter(|id| self.runs_dir().join(id).join(MANIFEST_FILE).is_file())
            .collect()
    }

    /// The newest completed run of any of `commands`, or a prerequisite error.
    pub fn latest(&self, commands: &[&str], needed_for: &str) -> Result<CompletedRun, CliError> {
        let newest = commands
            .iter()
            .flat_map(|c| self.run_ids(Some(c)))
            .filter(|(_, id)| self.runs_dir().join(id).join(MANIFEST_FILE).is_file())
            .max();
        match newest {
            Some((_, id)) => self.open(&id),
            None => Err(CliError::Prerequisite(format!(
                "`{needed_for}` needs a completed `{}` run in {}; run `oodscore {}` first",
                commands[0],
                self.runs_dir().display(),
                commands[0]
            ))),
        }
    }

    pub fn open(&self, run_id: &str) -> Result<CompletedRun, CliError> {
        let dir = self.runs_dir().join(run_id);
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|_| {
            CliError::Prerequisite(format!("run `{run_id}` not found or incomplete in {}", self.runs_dir().display()))
        })?;
        let manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Runtime(format!("{}: unreadable run manifest: {e}", path.display())))?;
        Ok(CompletedRun { dir, manifest })
    }

    /// Create the next `<command>-NNNN` directory, numbered after every
    /// existing run. Existing directories are never reused.
    pub fn create_run(&self, command: &str) -> Result<RunDir, CliError> {
        let runs = self.runs_dir();
        fs::create_dir_all(&runs).map_err(|e| io_error(&runs, e))?;
        let mut n = self.run_ids(None).last().map_or(1, |(n, _)| n + 1);
        loop {
            let id = format!("{command}-{n:04}");
            let dir = runs.join(&id);
            match fs::create_dir(&dir) {
                Ok(()) => {
                    return Ok(RunDir {
                        id,
                        dir,
                        command: command.to_string(),
                        outputs: Vec::new(),
                        inputs: Vec::new(),
                        parents: BTreeMap::new(),
                        arguments: BTreeMap::new(),
                    })
                }
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => n += 1,
                Err(e) => return Err(io_error(&dir, e)),
            }
        }
    }
}

pub fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone)]
pub struct CompletedRun {
    pub dir: PathBuf,
    pub manifest: RunManifest,
}

impl CompletedRun {
    pub fn id(&self) -> &str {
        &self.manifest.run_id
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// The upstream run with `role`, which this run or it may itself be.
    pub fn parent(&self, ws: &Workspace, role: &str) -> Result<CompletedRun, CliError> {
        if self.manifest.command == role {
            return Ok(self.clone());
        }
        let id = self.manifest.parents.get(role).ok_or_else(|| {
            CliError::Prerequisite(format!("run `{}` has no upstream `{role}` run", self.id()))
        })?;
        ws.open(id)
    }
}

/// A run in progress. The manifest is written last, so a directory without
/// one is an aborted run and is ignored by lookups.
#[derive(Debug)]
pub struct RunDir {
    pub id: String,
    pub dir: PathBuf,
    command: String,
    outputs: Vec<PathBuf>,
    inputs: Vec<FileDigest>,
    parents: BTreeMap<String, String>,
    arguments: BTreeMap<String, String>,
}

impl RunDir {
    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub fn write(&mut self, rel: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
        }
        fs::write(&p, bytes).map_err(|e| io_error(&p, e))?;
        self.record_output(&p);
        Ok(p)
    }

    /// Note a file written by other code under the run directory.
    pub fn record_output(&mut self, path: &Path) {
        if !self.outputs.iter().any(|o| o == path) {
            self.outputs.push(path.to_path_buf());
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<(), CliError> {
        let digests = digest_inputs(path).map_err(|e| io_error(path, e))?;
        self.inputs.extend(digests);
        Ok(())
    }

    /// Record `run` as the upstream `role`, inheriting its own parents.
    pub fn add_parent(&mut self, role: &str, run: &CompletedRun) {
        for (r, id) in &run.manifest.parents {
            self.parents.entry(r.clone()).or_insert_with(|| id.clone());
        }
        self.parents.insert(role.to_string(), run.id().to_string());
    }

    pub fn argument(&mut self, key: &str, value: impl Into<String>) {
        self.arguments.insert(key.to_string(), value.into());
    }

    pub fn finish(mut self, config: &LoadedConfig) -> Result<PathBuf, CliError> {
        let json = serde_json::to_string_pretty(&config.config).expect("config serializes");
        self.write(CONFIG_FILE, json)?;
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for p in &self.outputs {
            outputs.push(FileDigest {
                path: p.strip_prefix(&self.dir).unwrap_or(p).display().to_string(),
                sha256: sha256_file(p).map_err(|e| io_error(p, e))?,
            });
        }
        outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            tool: "oodscore".into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            run_id: self.id.clone(),
            command: self.command.clone(),
            arguments: self.arguments,
            config_sha256: config.sha256.clone(),
            seeds: config.seeds(),
            parents: self.parents,
            inputs: self.inputs,
            outputs,
        };
        let path = self.dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| io_error(&path, e))?;
        Ok(self.dir)
    }
}
