//! File-backed model store.
//!
//! ```text
//! <root>/<assignment_id>/<corpus_id>/config.json
//!                                   /events.jsonl
//!                                   /corpus.json
//!                                   /models/<model_id>/model.json
//!                                   /models/<model_id>/clusters/<c>/automaton.json
//!                                   /models/<model_id>/clusters/<c>/layout.json
//! ```
//!
//! Files are written to a temporary sibling and renamed into place; a model
//! directory is assembled under a temporary name and renamed as a whole, so
//! readers never see half a build. Ids are content hashes, which makes
//! ingesting or building the same thing twice a no-op.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tutorviz_core::cluster::{partition_corpus, ClusterModel, ClusterParams, Feature, Method};
use tutorviz_core::layout::{default_layout, LayoutGraph};
use tutorviz_core::replay::{parse_corpus, write_corpus, Diagnostic};
use tutorviz_core::{group_super_states, AssignmentConfig, Automaton, StudentLog};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown {what} {id:?}")]
    NotFound { what: &'static str, id: String },
    #[error(transparent)]
    Core(#[from] tutorviz_core::Error),
    #[error("store i/o error at {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("corrupt store document {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
}

pub type StoreResult<T> = Result<T, StoreError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

fn hash_id(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..8])
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> StoreResult<()> {
    let dir = path.parent().expect("store paths have a parent");
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("store documents serialize");
    bytes.push(b'\n');
    bytes
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> StoreResult<T> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| StoreError::Json { path: path.to_path_buf(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub corpus_id: String,
    pub assignment_id: String,
    pub n_students: usize,
    pub n_events: usize,
    /// Lines that could not be read at ingestion.
    pub diagnostics: Vec<String>,
    /// Error label (such as `f1t20_f1t16`) to the tutoring change targeting it.
    #[serde(default)]
    pub changes: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub record: CorpusRecord,
    pub config: AssignmentConfig,
    pub logs: Vec<StudentLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub cluster: usize,
    pub n_students: usize,
    pub states: usize,
    pub edges: usize,
    pub centroid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: String,
    pub corpus_id: String,
    pub assignment_id: String,
    pub model: ClusterModel,
    pub clusters: Vec<ClusterSummary>,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> StoreResult<Store> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn subdirs(dir: &Path) -> StoreResult<Vec<PathBuf>> {
        let mut out = Vec::new();
        if !dir.is_dir() {
            return Ok(out);
        }
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let entry = entry.map_err(io_err(dir))?;
            let name = entry.file_name();
            if entry.path().is_dir() && !name.to_string_lossy().starts_with('.') {
                out.push(entry.path());
            }
        }
        out.sort();
        Ok(out)
    }

    fn corpus_dirs(&self) -> StoreResult<Vec<PathBuf>> {
        let mut out = Vec::new();
        for assignment in Self::subdirs(&self.root)? {
            out.extend(Self::subdirs(&assignment)?.into_iter().filter(|d| d.join("corpus.json").is_file()));
        }
        Ok(out)
    }

    fn corpus_dir(&self, corpus_id: &str) -> StoreResult<PathBuf> {
        self.corpus_dirs()?
            .into_iter()
            .find(|d| d.file_name().is_some_and(|n| n == corpus_id))
            .ok_or_else(|| StoreError::NotFound { what: "corpus", id: corpus_id.to_string() })
    }

    fn model_dir(&self, model_id: &str) -> StoreResult<PathBuf> {
        for corpus in self.corpus_dirs()? {
            let dir = corpus.join("models").join(model_id);
            if dir.join("model.json").is_file() {
                return Ok(dir);
            }
        }
        Err(StoreError::NotFound { what: "model", id: model_id.to_string() })
    }

    /// Persists a corpus, students in id order; the id is a hash of the
    /// configuration, the events and the change map.
    pub fn ingest(
        &self,
        config: &AssignmentConfig,
        logs: &[StudentLog],
        diagnostics: &[Diagnostic],
        changes: &BTreeMap<String, String>,
    ) -> StoreResult<CorpusRecord> {
        if logs.is_empty() {
            return Err(tutorviz_core::Error::EmptyCorpus.into());
        }
        // the id must not depend on the order the inputs arrived in
        let mut logs = logs.to_vec();
        logs.sort_by(|a, b| a.student_id.cmp(&b.student_id));
        let config_bytes = to_json(config);
        let mut events = Vec::new();
        write_corpus(&logs, &mut events).map_err(StoreError::Core)?;
        let changes_bytes = to_json(changes);
        let corpus_id = hash_id(&[&config_bytes, &events, &changes_bytes]);
        let record = CorpusRecord {
            corpus_id: corpus_id.clone(),
            assignment_id: config.assignment_id.clone(),
            n_students: logs.len(),
            n_events: logs.iter().map(|l| l.events.len()).sum(),
            diagnostics: diagnostics.iter().map(ToString::to_string).collect(),
            changes: changes.clone(),
        };
        let dir = self.root.join(&config.assignment_id).join(&corpus_id);
        write_atomic(&dir.join("config.json"), &config_bytes)?;
        write_atomic(&dir.join("events.jsonl"), &events)?;
        // corpus.json goes last: it is what makes the corpus visible
        write_atomic(&dir.join("corpus.json"), &to_json(&record))?;
        Ok(record)
    }

    pub fn corpora(&self) -> StoreResult<Vec<CorpusRecord>> {
        self.corpus_dirs()?.iter().map(|d| read_json(&d.join("corpus.json"))).collect()
    }

    pub fn corpus(&self, corpus_id: &str) -> StoreResult<LoadedCorpus> {
        let dir = self.corpus_dir(corpus_id)?;
        let record: CorpusRecord = read_json(&dir.join("corpus.json"))?;
        let config: AssignmentConfig = read_json(&dir.join("config.json"))?;
        let path = dir.join("events.jsonl");
        let file = fs::File::open(&path).map_err(io_err(&path))?;
        let parsed = parse_corpus(std::io::BufReader::new(file), Some("events.jsonl"))?;
        Ok(LoadedCorpus { record, config, logs: parsed.logs })
    }

    /// Clusters a stored corpus and persists one grouped automaton and its
    /// layout per cluster.
    pub fn build(&self, corpus_id: &str, method: Method, feature: Feature, params: &ClusterParams) -> StoreResult<ModelRecord> {
        let corpus = self.corpus(corpus_id)?;
        let params_bytes = serde_json::to_vec(params).expect("params serialize");
        let model_id = hash_id(&[corpus_id.as_bytes(), method.as_str().as_bytes(), feature.as_str().as_bytes(), &params_bytes]);
        let (model, automata) = partition_corpus(&corpus.logs, &corpus.config, method, feature, params)?;

        let models_dir = self.corpus_dir(corpus_id)?.join("models");
        fs::create_dir_all(&models_dir).map_err(io_err(&models_dir))?;
        let staging = tempfile::Builder::new().prefix(".build-").tempdir_in(&models_dir).map_err(io_err(&models_dir))?;
        let mut clusters = Vec::new();
        for (c, a) in automata.iter().enumerate() {
            let grouped: Automaton = group_super_states(a);
            let layout = default_layout(&grouped, &corpus.config.correct_flow);
            let dir = staging.path().join("clusters").join(c.to_string());
            write_atomic(&dir.join("automaton.json"), &to_json(&grouped))?;
            write_atomic(&dir.join("layout.json"), &to_json(&layout))?;
            clusters.push(ClusterSummary {
                cluster: c,
                n_students: grouped.n_students,
                states: grouped.states.len(),
                edges: grouped.edges.len(),
                centroid: model.centroids[c].clone(),
            });
        }
        let record = ModelRecord {
            model_id: model_id.clone(),
            corpus_id: corpus_id.to_string(),
            assignment_id: corpus.config.assignment_id,
            model,
            clusters,
        };
        write_atomic(&staging.path().join("model.json"), &to_json(&record))?;

        let target = models_dir.join(&model_id);
        if target.exists() {
            // same inputs, same bytes: keep what readers may already hold
            return Ok(record);
        }
        let staged = staging.keep();
        fs::rename(&staged, &target).map_err(io_err(&target))?;
        Ok(record)
    }

    pub fn models(&self) -> StoreResult<Vec<ModelRecord>> {
        let mut out = Vec::new();
        for corpus in self.corpus_dirs()? {
            for dir in Self::subdirs(&corpus.join("models"))? {
                if dir.join("model.json").is_file() {
                    out.push(read_json(&dir.join("model.json"))?);
                }
            }
        }
        Ok(out)
    }

    pub fn model(&self, model_id: &str) -> StoreResult<ModelRecord> {
        read_json(&self.model_dir(model_id)?.join("model.json"))
    }

    fn cluster_file(&self, model_id: &str, cluster: usize, name: &str) -> StoreResult<PathBuf> {
        let path = self.model_dir(model_id)?.join("clusters").join(cluster.to_string()).join(name);
        if !path.is_file() {
            return Err(StoreError::NotFound { what: "cluster", id: format!("{model_id}/{cluster}") });
        }
        Ok(path)
    }

    pub fn automaton(&self, model_id: &str, cluster: usize) -> StoreResult<Automaton> {
        read_json(&self.cluster_file(model_id, cluster, "automaton.json")?)
    }

    pub fn layout(&self, model_id: &str, cluster: usize) -> StoreResult<LayoutGraph> {
        read_json(&self.cluster_file(model_id, cluster, "layout.json")?)
    }

    /// Raw bytes of a stored cluster document.
    pub fn document(&self, model_id: &str, cluster: usize, name: &str) -> StoreResult<Vec<u8>> {
        let path = self.cluster_file(model_id, cluster, name)?;
        fs::read(&path).map_err(io_err(&path))
    }
}
