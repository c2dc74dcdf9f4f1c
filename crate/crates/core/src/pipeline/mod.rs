//! End-to-end orchestration: dataset → text → tokenizer + fine-tuned model →
//! embeddings → clustering sweep → report.
//!
//! Every stage reads its inputs from and writes its outputs to one output
//! directory, so any stage can be rerun from the artifacts of the previous
//! ones.

mod project;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use project::{project_2d, Projection, ProjectionError};
pub use report::{
    hash_artifacts, report_json, sha256_hex, write_report_csv, Manifest, QualityReport, ReportRow, SweepPoint,
    REPORT_CSV_HEADER,
};

use crate::cluster::{select_k, write_assignments, AlgorithmKind, AlgorithmSpec, ClusterError};
use crate::codec::{encode_text, load_csv, write_corpus, CodecError, ColumnKind, TabularDataset, Variant};
use crate::embed::{
    embed_records, fetch_embeddings, load_embeddings, save_embeddings, EmbedError, EmbeddingMatrix, PoolingMode,
    Provenance,
};
use crate::lm::{
    read_checkpoint, train, write_checkpoint, write_trace, ModelConfig, ModelError, PerEpoch, TrainConfig,
};
use crate::metrics::{quality_scores, MetricError};
use crate::rng::{mix_seed, stream_rng};
use crate::tokenizer::{tokenize, train_bpe, TokenSequence, TokenizerError, Vocabulary};
use crate::Params;

pub const CONFIG_FILE: &str = "config.json";
pub const SPLIT_FILE: &str = "split.json";
pub const TRAIN_CORPUS_FILE: &str = "train_corpus.txt";
pub const TEST_CORPUS_FILE: &str = "test_corpus.txt";
pub const VOCAB_FILE: &str = "vocab.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const TRACE_FILE: &str = "loss_trace.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.ersm";
pub const QUALITY_FILE: &str = "quality.json";
pub const PROJECTION_FILE: &str = "projection.csv";
pub const PROJECTION_META_FILE: &str = "projection.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const MANIFEST_FILE: &str = "manifest.json";
/// Wall-clock times per stage; kept apart so the other artifacts stay
/// byte-reproducible.
pub const TIMINGS_FILE: &str = "timings.json";

const SPLIT_STREAM: u64 = 0x5B17;
const EPOCH_SHUFFLE_STREAM: u64 = 0xE90C_0000;

pub fn assignments_file(kind: AlgorithmKind) -> String {
    format!("assignments_{}.csv", kind.name())
}

/// Where the embeddings for the clustering stage come from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum EmbeddingSource {
    /// The model trained by this pipeline.
    #[default]
    Internal,
    /// An ERSM file written by another provider.
    File(PathBuf),
    /// A provider speaking the v1 HTTP protocol at this base URL.
    Http(String),
}

impl FromStr for EmbeddingSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "internal" {
            Ok(EmbeddingSource::Internal)
        } else if let Some(path) = s.strip_prefix("file:") {
            Ok(EmbeddingSource::File(path.into()))
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(EmbeddingSource::Http(s.to_string()))
        } else if let Some(url) = s.strip_prefix("http:") {
            if url.starts_with("http://") || url.starts_with("https://") {
                Ok(EmbeddingSource::Http(url.to_string()))
            } else {
                Ok(EmbeddingSource::Http(format!("http://{url}")))
            }
        } else {
            Err(format!("embedding source `{s}` is not internal, file:PATH or http:URL"))
        }
    }
}

impl fmt::Display for EmbeddingSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmbeddingSource::Internal => write!(f, "internal"),
            EmbeddingSource::File(p) => write!(f, "file:{}", p.display()),
            EmbeddingSource::Http(u) => write!(f, "http:{u}"),
        }
    }
}

impl Serialize for EmbeddingSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EmbeddingSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Pipeline settings. Every key is optional in the JSON form.
///
/// `seed` drives the split, model initialization and training (it replaces
/// `train.seed`); `shuffle_seed` defaults to it. `model.vocab_size` is the
/// BPE target size, and the model is built for the vocabulary actually
/// trained. `train.dropout` is the dropout used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: Option<PathBuf>,
    /// Per-column parse overrides, in header order.
    pub column_kinds: Vec<ColumnKind>,
    pub variant: Variant,
    pub seed: u64,
    pub shuffle_seed: Option<u64>,
    /// Draw fresh clause orders every training epoch.
    pub reshuffle_each_epoch: bool,
    /// Share of rows held out for embedding and clustering.
    pub test_fraction: f64,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub pooling: PoolingMode,
    pub embed_batch_size: usize,
    pub embeddings_from: EmbeddingSource,
    pub provider_timeout_secs: f64,
    pub algorithms: Vec<AlgorithmSpec>,
    /// Inclusive `[min, max]` candidate cluster counts.
    pub k_range: [usize; 2],
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            column_kinds: Vec::new(),
            variant: Variant::Base,
            seed: 0,
            shuffle_seed: None,
            reshuffle_each_epoch: true,
            test_fraction: 0.2,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            pooling: PoolingMode::Mean,
            embed_batch_size: 8,
            embeddings_from: EmbeddingSource::Internal,
            provider_timeout_secs: 60.0,
            algorithms: AlgorithmKind::ALL.into_iter().map(AlgorithmSpec::reference).collect(),
            k_range: [2, 10],
        }
    }
}

impl PipelineConfig {
    pub fn from_json(json: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(json).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let fail = |m: String| Err(PipelineError::Config(m));
        let [lo, hi] = self.k_range;
        if lo < 2 || lo > hi {
            return fail(format!("k_range [{lo}, {hi}] must satisfy 2 <= min <= max"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction <= 1.0) {
            return fail(format!("test_fraction {} must lie in (0, 1]", self.test_fraction));
        }
        if self.algorithms.is_empty() {
            return fail("no algorithms configured".into());
        }
        let mut kinds: Vec<AlgorithmKind> = self.algorithms.iter().map(AlgorithmSpec::kind).collect();
        kinds.sort_by_key(|k| k.name());
        if let Some(w) = kinds.windows(2).find(|w| w[0] == w[1]) {
            return fail(format!("algorithm {} listed twice", w[0].name()));
        }
        if self.model.vocab_size < Vocabulary::min_size() {
            return fail(format!(
                "model.vocab_size {} is below the byte-level minimum {}",
                self.model.vocab_size,
                Vocabulary::min_size()
            ));
        }
        self.model_config(self.model.vocab_size)
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train.validate().map_err(PipelineError::Config)?;
        if self.embed_batch_size == 0 {
            return fail("embed_batch_size must be positive".into());
        }
        if !(self.provider_timeout_secs > 0.0 && self.provider_timeout_secs.is_finite()) {
            return fail("provider_timeout_secs must be positive".into());
        }
        Ok(())
    }

    pub fn shuffle_seed(&self) -> u64 {
        self.shuffle_seed.unwrap_or(self.seed)
    }

    fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            dropout: self.train.dropout,
            ..self.model
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// The configuration as hashed into the manifest: location-independent,
    /// so the dataset path and output directory do not enter it.
    pub fn canonical_json(&self) -> Vec<u8> {
        let mut c = self.clone();
        c.dataset = None;
        if let EmbeddingSource::File(_) = c.embeddings_from {
            c.embeddings_from = EmbeddingSource::File(PathBuf::new());
        }
        serde_json::to_vec(&c).expect("config serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Encode,
    Train,
    Embed,
    Cluster,
    Project,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Encode => "encode",
            Stage::Train => "train",
            Stage::Embed => "embed",
            Stage::Cluster => "cluster",
            Stage::Project => "project",
            Stage::Report => "report",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error("{path}: {source}")]
    Artifact { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    ArtifactJson { path: PathBuf, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: StageError,
    },
}

impl PipelineError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            PipelineError::Config(_) => None,
        }
    }
}

trait InStage<T> {
    fn during(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: Into<StageError>> InStage<T> for Result<T, E> {
    fn during(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::Stage {
            stage,
            source: e.into(),
        })
    }
}

fn read_artifact(dir: &Path, name: &str, stage: Stage) -> Result<Vec<u8>, PipelineError> {
    let path = dir.join(name);
    fs::read(&path)
        .map_err(|source| StageError::Artifact { path, source })
        .during(stage)
}

fn write_artifact(dir: &Path, name: &str, bytes: &[u8], stage: Stage) -> Result<(), PipelineError> {
    let path = dir.join(name);
    fs::write(&path, bytes)
        .map_err(|source| StageError::Artifact { path, source })
        .during(stage)
}

fn read_json<T: for<'de> Deserialize<'de>>(dir: &Path, name: &str, stage: Stage) -> Result<T, PipelineError> {
    let bytes = read_artifact(dir, name, stage)?;
    serde_json::from_slice(&bytes)
        .map_err(|source| StageError::ArtifactJson {
            path: dir.join(name),
            source,
        })
        .during(stage)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, stage: Stage) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
    bytes.push(b'\n');
    write_artifact(dir, name, &bytes, stage)
}

fn lines(bytes: &[u8], name: &str, stage: Stage) -> Result<Vec<String>, PipelineError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| StageError::Invalid(format!("{name}: {e}")))
        .during(stage)?;
    Ok(text.lines().map(str::to_string).collect())
}

fn record_timing(dir: &Path, key: &str, elapsed: Duration) {
    let path = dir.join(TIMINGS_FILE);
    let mut timings: BTreeMap<String, f64> = fs::read(&path)
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .unwrap_or_default();
    timings.insert(key.to_string(), elapsed.as_secs_f64());
    if let Ok(bytes) = serde_json::to_vec_pretty(&timings) {
        let _ = fs::write(path, bytes);
    }
}

fn timed<T>(dir: &Path, key: &str, f: impl FnOnce() -> Result<T, PipelineError>) -> Result<T, PipelineError> {
    let start = Instant::now();
    let out = f()?;
    let elapsed = start.elapsed();
    log::info!("{key} done in {:.1}s", elapsed.as_secs_f64());
    record_timing(dir, key, elapsed);
    Ok(out)
}

/// Training and held-out row indices, each sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Seeded split holding out `ceil(test_fraction · n)` rows. With a fraction
/// of 1 every row is used for both training and embedding.
pub fn split_rows(n: usize, test_fraction: f64, seed: u64) -> Split {
    if test_fraction >= 1.0 {
        let all: Vec<usize> = (0..n).collect();
        return Split {
            train_rows: all.clone(),
            test_rows: all,
        };
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, SPLIT_STREAM));
    let n_test = ((n as f64 * test_fraction).ceil() as usize).clamp(1, n);
    let mut test_rows = order[..n_test].to_vec();
    let mut train_rows = order[n_test..].to_vec();
    test_rows.sort_unstable();
    train_rows.sort_unstable();
    Split { train_rows, test_rows }
}

/// Shuffle seed for training epoch `epoch`; epoch 0 uses the base seed so it
/// matches the written training corpus.
pub fn epoch_shuffle_seed(base: u64, epoch: usize) -> u64 {
    if epoch == 0 {
        base
    } else {
        mix_seed(base, EPOCH_SHUFFLE_STREAM + epoch as u64)
    }
}

fn load_dataset(cfg: &PipelineConfig, stage: Stage) -> Result<TabularDataset, PipelineError> {
    let path = cfg
        .dataset
        .as_deref()
        .ok_or_else(|| PipelineError::Config("no dataset configured".into()))?;
    load_csv(path, &cfg.column_kinds).during(stage)
}

fn encode_rows(ds: &TabularDataset, rows: &[usize], seed: u64, variant: Variant) -> Result<Vec<String>, CodecError> {
    rows.iter().map(|&r| encode_text(ds, r, seed, variant)).collect()
}

fn write_config(cfg: &PipelineConfig, out: &Path, stage: Stage) -> Result<(), PipelineError> {
    fs::create_dir_all(out)
        .map_err(|source| StageError::Artifact {
            path: out.to_path_buf(),
            source,
        })
        .during(stage)?;
    write_json(out, CONFIG_FILE, cfg, stage)
}

/// Splits the dataset and writes the encoded training and held-out corpora.
pub fn run_encode(cfg: &PipelineConfig, out: &Path) -> Result<Split, PipelineError> {
    cfg.validate()?;
    let stage = Stage::Encode;
    write_config(cfg, out, stage)?;
    timed(out, "encode", || {
        let ds = load_dataset(cfg, stage)?;
        let split = split_rows(ds.n_rows(), cfg.test_fraction, cfg.seed);
        if split.train_rows.is_empty() {
            return Err(StageError::Invalid("no rows left for training".into())).during(stage);
        }
        let seed = cfg.shuffle_seed();
        let train = encode_rows(&ds, &split.train_rows, seed, cfg.variant).during(stage)?;
        let test = encode_rows(&ds, &split.test_rows, seed, cfg.variant).during(stage)?;
        for (name, corpus) in [(TRAIN_CORPUS_FILE, &train), (TEST_CORPUS_FILE, &test)] {
            let mut buf = Vec::new();
            write_corpus(&mut buf, corpus).expect("writes to memory");
            write_artifact(out, name, &buf, stage)?;
        }
        write_json(out, SPLIT_FILE, &split, stage)?;
        log::info!("encoded {} training and {} held-out rows", train.len(), test.len());
        Ok(split)
    })
}

fn to_sequence(vocab: &Vocabulary, text: &str, max: usize, truncated: &mut usize) -> TokenSequence {
    let mut seq = tokenize(vocab, text);
    if seq.ids.len() > max {
        seq.ids.truncate(max);
        *truncated += 1;
    }
    seq
}

/// Outcome of the training stage.
pub struct Trained {
    pub vocab: Vocabulary,
    pub params: Params,
    pub final_loss: Option<f64>,
}

/// Trains the tokenizer on the training corpus, then fine-tunes a freshly
/// initialized model on it.
pub fn run_train(cfg: &PipelineConfig, out: &Path) -> Result<Trained, PipelineError> {
    cfg.validate()?;
    let stage = Stage::Train;
    write_config(cfg, out, stage)?;
    timed(out, "train", || {
        let corpus = lines(&read_artifact(out, TRAIN_CORPUS_FILE, stage)?, TRAIN_CORPUS_FILE, stage)?;
        let vocab = train_bpe(&corpus, cfg.model.vocab_size).during(stage)?;
        write_artifact(out, VOCAB_FILE, vocab.to_json().as_bytes(), stage)?;
        let model_cfg = cfg.model_config(vocab.len());
        let params = Params::init(model_cfg, cfg.seed).during(stage)?;
        let max = model_cfg.context_len;
        let pad = vocab.specials().pad;

        let mut truncated = 0;
        let first: Vec<TokenSequence> = corpus
            .iter()
            .map(|t| to_sequence(&vocab, t, max, &mut truncated))
            .collect();
        if truncated > 0 {
            log::warn!(
                "{truncated} of {} training records truncated to {max} tokens",
                corpus.len()
            );
        }
        let outcome = if cfg.reshuffle_each_epoch {
            let ds = load_dataset(cfg, stage)?;
            let split: Split = read_json(out, SPLIT_FILE, stage)?;
            if let Some(&bad) = split.train_rows.iter().find(|&&r| r >= ds.n_rows()) {
                return Err(StageError::Invalid(format!("split row {bad} is outside the dataset"))).during(stage);
            }
            let base = cfg.shuffle_seed();
            let epochs = PerEpoch(|epoch: usize| {
                if epoch == 0 {
                    return first.clone();
                }
                let seed = epoch_shuffle_seed(base, epoch);
                let mut ignored = 0;
                split
                    .train_rows
                    .iter()
                    .map(|&r| {
                        let text = encode_text(&ds, r, seed, cfg.variant).expect("split rows are in range");
                        to_sequence(&vocab, &text, max, &mut ignored)
                    })
                    .collect()
            });
            train(params, &epochs, &cfg.train_config(), pad).during(stage)?
        } else {
            train(params, &first, &cfg.train_config(), pad).during(stage)?
        };
        let mut ckpt = Vec::new();
        write_checkpoint(&mut ckpt, &outcome.params, cfg.seed).during(stage)?;
        write_artifact(out, CHECKPOINT_FILE, &ckpt, stage)?;
        let mut trace = Vec::new();
        write_trace(&mut trace, &outcome.trace).expect("writes to memory");
        write_artifact(out, TRACE_FILE, &trace, stage)?;
        Ok(Trained {
            vocab,
            params: outcome.params,
            final_loss: outcome.trace.last().map(|r| r.loss),
        })
    })
}

/// Embeds the held-out corpus with the configured source and writes the
/// ERSM file.
pub fn run_embed(cfg: &PipelineConfig, out: &Path) -> Result<EmbeddingMatrix, PipelineError> {
    cfg.validate()?;
    let stage = Stage::Embed;
    write_config(cfg, out, stage)?;
    timed(out, "embed", || {
        let matrix = match &cfg.embeddings_from {
            EmbeddingSource::File(path) => load_embeddings(path).during(stage)?,
            source => {
                let records = lines(&read_artifact(out, TEST_CORPUS_FILE, stage)?, TEST_CORPUS_FILE, stage)?;
                let split: Split = read_json(out, SPLIT_FILE, stage)?;
                if split.test_rows.len() != records.len() {
                    return Err(StageError::Invalid(format!(
                        "{} held-out rows but {} corpus lines",
                        split.test_rows.len(),
                        records.len()
                    )))
                    .during(stage);
                }
                let row_ids: Vec<u64> = split.test_rows.iter().map(|&r| r as u64).collect();
                match source {
                    EmbeddingSource::Http(url) => fetch_embeddings(
                        url,
                        &records,
                        row_ids,
                        cfg.pooling,
                        Duration::from_secs_f64(cfg.provider_timeout_secs),
                    )
                    .during(stage)?,
                    _ => {
                        let vocab_bytes = read_artifact(out, VOCAB_FILE, stage)?;
                        let vocab_text = String::from_utf8_lossy(&vocab_bytes);
                        let vocab = Vocabulary::from_json(&vocab_text).during(stage)?;
                        let ckpt = read_artifact(out, CHECKPOINT_FILE, stage)?;
                        let (_, params) = read_checkpoint(ckpt.as_slice()).during(stage)?;
                        let embedded =
                            embed_records(&params, &vocab, &records, row_ids, cfg.pooling, cfg.embed_batch_size)
                                .during(stage)?;
                        embedded.matrix
                    }
                }
            }
        };
        save_embeddings(&matrix, &out.join(EMBEDDINGS_FILE)).during(stage)?;
        Ok(matrix)
    })
}

fn approach_name(cfg: &PipelineConfig, provenance: &Provenance) -> String {
    match provenance {
        Provenance::Internal { .. } => cfg.variant.approach_name().to_string(),
        Provenance::External { provider } => provider.clone(),
    }
}

/// Sweeps `k` for every configured algorithm on the stored embeddings,
/// writes per-algorithm assignments and the quality results.
pub fn run_cluster(cfg: &PipelineConfig, out: &Path) -> Result<QualityReport, PipelineError> {
    cfg.validate()?;
    let stage = Stage::Cluster;
    write_config(cfg, out, stage)?;
    let matrix = load_embeddings(&out.join(EMBEDDINGS_FILE)).during(stage)?;
    let x = matrix.to_array::<f64>();
    let [lo, hi] = cfg.k_range;
    if hi + 1 > x.nrows() {
        return Err(StageError::Invalid(format!(
            "k_range max {hi} needs more than {hi} embedded rows, have {}",
            x.nrows()
        )))
        .during(stage);
    }
    let approach = approach_name(cfg, matrix.provenance());
    let mut rows = Vec::new();
    for spec in &cfg.algorithms {
        let kind = spec.kind();
        let row = timed(out, &format!("cluster/{}", kind.name()), || {
            let sel = select_k(x.view(), spec, lo..=hi).during(stage)?;
            let scores = quality_scores(x.view(), &sel.assignment.labels).during(stage)?;
            let mut csv = Vec::new();
            write_assignments(&mut csv, matrix.row_ids(), &sel.assignment).expect("writes to memory");
            write_artifact(out, &assignments_file(kind), &csv, stage)?;
            log::info!(
                "{}: best k {} with silhouette {:.4}",
                kind.name(),
                sel.best_k,
                scores.silhouette
            );
            Ok(ReportRow {
                approach: approach.clone(),
                algorithm: kind,
                best_k: sel.best_k,
                ss: scores.silhouette,
                chi: scores.chi,
                dbi: scores.dbi,
                sweep: sel.sweep.iter().map(|&(k, ss)| SweepPoint { k, ss }).collect(),
            })
        })?;
        rows.push(row);
    }
    let report = QualityReport::new(approach, matrix.provenance().clone(), rows);
    write_json(out, QUALITY_FILE, &report, stage)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProjectionMeta {
    method: String,
    note: String,
    explained_variance: [f64; 2],
    total_variance: f64,
}

/// Writes a 2-D PCA projection of the stored embeddings.
pub fn run_project(cfg: &PipelineConfig, out: &Path) -> Result<Projection<f64>, PipelineError> {
    cfg.validate()?;
    let stage = Stage::Project;
    let matrix = load_embeddings(&out.join(EMBEDDINGS_FILE)).during(stage)?;
    let proj = project_2d(matrix.to_array::<f64>().view()).during(stage)?;
    let mut csv = String::from("row_id,pc1,pc2\n");
    for (id, row) in matrix.row_ids().iter().zip(proj.coords.rows()) {
        csv += &format!("{id},{},{}\n", row[0], row[1]);
    }
    write_artifact(out, PROJECTION_FILE, csv.as_bytes(), stage)?;
    let meta = ProjectionMeta {
        method: "pca".into(),
        note: "principal-component projection, a linear substitute for a t-SNE view".into(),
        explained_variance: proj.explained_variance,
        total_variance: proj.total_variance,
    };
    write_json(out, PROJECTION_META_FILE, &meta, stage)?;
    Ok(proj)
}

/// Artifacts covered by the manifest, in a fixed order; those not yet
/// written are skipped.
fn manifest_artifacts(cfg: &PipelineConfig, out: &Path) -> Vec<String> {
    let mut names: Vec<String> = [
        SPLIT_FILE,
        TRAIN_CORPUS_FILE,
        TEST_CORPUS_FILE,
        VOCAB_FILE,
        CHECKPOINT_FILE,
        TRACE_FILE,
        EMBEDDINGS_FILE,
        QUALITY_FILE,
        PROJECTION_FILE,
        PROJECTION_META_FILE,
        REPORT_CSV_FILE,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    names.extend(cfg.algorithms.iter().map(|s| assignments_file(s.kind())));
    names.retain(|n| out.join(n).is_file());
    names.sort();
    names
}

/// Writes `report.csv`, the manifest, and `report.json` carrying the
/// manifest hash.
pub fn run_report(cfg: &PipelineConfig, out: &Path) -> Result<(QualityReport, Manifest), PipelineError> {
    cfg.validate()?;
    let stage = Stage::Report;
    let mut report: QualityReport = read_json(out, QUALITY_FILE, stage)?;
    let mut csv = Vec::new();
    write_report_csv(&mut csv, &report).expect("writes to memory");
    write_artifact(out, REPORT_CSV_FILE, &csv, stage)?;

    let split: Option<Split> = read_json(out, SPLIT_FILE, stage).ok();
    let artifacts = hash_artifacts(out, &manifest_artifacts(cfg, out))
        .map_err(|source| StageError::Artifact {
            path: out.to_path_buf(),
            source,
        })
        .during(stage)?;
    let dataset = match &cfg.dataset {
        Some(p) => Some(
            fs::read(p)
                .map_err(|source| StageError::Artifact {
                    path: p.clone(),
                    source,
                })
                .during(stage)?,
        ),
        None => None,
    };
    let (train_rows, test_rows) = split.map(|s| (s.train_rows, s.test_rows)).unwrap_or_default();
    let manifest = Manifest::build(
        &cfg.canonical_json(),
        dataset.as_deref(),
        artifacts,
        train_rows,
        test_rows,
    );
    write_json(out, MANIFEST_FILE, &manifest, stage)?;
    report.manifest_hash = Some(manifest.hash.clone());
    write_artifact(out, REPORT_JSON_FILE, report_json(&report).as_bytes(), stage)?;
    Ok((report, manifest))
}

/// Runs every stage in order. With an external embedding source the
/// tokenizer and model are not trained.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<QualityReport, PipelineError> {
    cfg.validate()?;
    let start = Instant::now();
    match cfg.embeddings_from {
        EmbeddingSource::Internal => {
            run_encode(cfg, out)?;
            run_train(cfg, out)?;
        }
        EmbeddingSource::Http(_) => {
            run_encode(cfg, out)?;
        }
        EmbeddingSource::File(_) => {
            write_config(cfg, out, Stage::Embed)?;
        }
    }
    run_embed(cfg, out)?;
    run_cluster(cfg, out)?;
    run_project(cfg, out)?;
    let (report, _) = run_report(cfg, out)?;
    record_timing(out, "total", start.elapsed());
    Ok(report)
}
