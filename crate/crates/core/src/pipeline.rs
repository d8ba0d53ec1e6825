//! End-to-end runs: ingest, graph, centrality, features, labels, split,
//! train, evaluate and detect.
//!
//! Every stage materializes its output under the run directory. A manifest
//! listing each artifact's SHA-256 is written last, so a directory without a
//! manifest is an incomplete run.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::analysis::{Confusion, EvalReport};
use crate::argraph::{build_graph, ArgGraph};
use crate::features::{aggregate_features, FeatureSelector, UserFeatureVector};
use crate::ingest::{parse_corpus, Conversation};
use crate::io;
use crate::labeling::{balance_dataset, cumulative_approval, flag_top_users, label_examples, Dataset, LabeledExample, Provenance};
use crate::learners::{train, Hyperparams, ModelKind, TrainedModel};
use crate::metrics::{centralities, CentralityScores};
use crate::synth::{generate, GroundTruth, SynthConfig};

/// Bumped whenever a stage changes the bytes it writes.
pub const STAGE_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad configuration or input detected before any work is done.
    #[error("{stage}: {message}")]
    Invalid { stage: &'static str, message: String },
    #[error("{stage}: {message}")]
    Failed { stage: &'static str, message: String },
}

impl PipelineError {
    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Invalid { stage, .. } | PipelineError::Failed { stage, .. } => stage,
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(self, PipelineError::Invalid { .. })
    }
}

fn failed(stage: &'static str) -> impl Fn(&dyn std::fmt::Display) -> PipelineError {
    move |e| PipelineError::Failed {
        stage,
        message: e.to_string(),
    }
}

fn invalid(stage: &'static str, message: impl Into<String>) -> PipelineError {
    PipelineError::Invalid {
        stage,
        message: message.into(),
    }
}

fn default_fraction() -> f64 {
    0.05
}
fn default_selector() -> String {
    "minimal".into()
}
fn default_kind() -> ModelKind {
    ModelKind::RandomForest
}
fn default_holdout() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// JSONL corpora to ingest. Ignored when `synth` is set.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    /// Generate the corpus instead of reading it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    /// Planted truth file, for scoring against known top users.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default = "default_selector")]
    pub selector: String,
    #[serde(default = "default_kind")]
    pub kind: ModelKind,
    /// Model hyperparameters; their seed is replaced by the run seed.
    #[serde(default)]
    pub hyperparams: Hyperparams,
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Share of users, per class, held out for evaluation.
    #[serde(default = "default_holdout")]
    pub holdout_fraction: f64,
    /// Size of the balanced training set; all available positives when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance_size: Option<usize>,
}

impl RunConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            inputs: Vec::new(),
            synth: None,
            truth: None,
            fraction: default_fraction(),
            selector: default_selector(),
            kind: default_kind(),
            hyperparams: Hyperparams::default(),
            seed: 0,
            out_dir: out_dir.into(),
            holdout_fraction: default_holdout(),
            balance_size: None,
        }
    }

    pub fn validate(&self) -> Result<FeatureSelector, PipelineError> {
        match &self.synth {
            Some(s) => s.validate().map_err(|e| invalid("synth", e.to_string()))?,
            None if self.inputs.is_empty() => return Err(invalid("ingest", "no input paths and no synth config")),
            None => {
                for p in &self.inputs {
                    if !p.is_file() {
                        return Err(invalid("ingest", format!("input path {} does not exist", p.display())));
                    }
                }
            }
        }
        if let Some(t) = &self.truth {
            if !t.is_file() {
                return Err(invalid("evaluate", format!("truth path {} does not exist", t.display())));
            }
        }
        if !(self.fraction > 0.0 && self.fraction < 1.0) {
            return Err(invalid("label", format!("fraction {} must lie in (0, 1)", self.fraction)));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(invalid("split", "holdout_fraction must lie in (0, 1)"));
        }
        self.hyperparams.validate().map_err(|e| invalid("train", e.to_string()))?;
        FeatureSelector::parse(&self.selector).map_err(|e| invalid("features", e.to_string()))
    }

    fn model_hyperparams(&self) -> Hyperparams {
        Hyperparams {
            seed: self.seed,
            ..self.hyperparams.clone()
        }
    }
}

/// Graph, centralities and per-user features of one conversation.
#[derive(Debug, Clone)]
pub struct ConversationArtifacts {
    pub graph: ArgGraph,
    pub centrality: CentralityScores,
    pub features: BTreeMap<String, UserFeatureVector>,
}

/// Runs the per-conversation stages concurrently; output keeps input order.
pub fn extract(conversations: &[Conversation]) -> Result<Vec<ConversationArtifacts>, PipelineError> {
    conversations
        .par_iter()
        .map(|c| {
            let graph = build_graph(c).map_err(|e| failed("graph")(&format!("{}: {e}", c.id())))?;
            let centrality = centralities(&graph);
            let features = aggregate_features(&graph, &centrality, c).map_err(|e| failed("features")(&e))?;
            Ok(ConversationArtifacts {
                graph,
                centrality,
                features,
            })
        })
        .collect()
}

pub fn feature_rows(artifacts: &[ConversationArtifacts]) -> Vec<(String, UserFeatureVector)> {
    artifacts
        .iter()
        .flat_map(|a| a.features.values().map(|v| (a.graph.conversation_id.clone(), v.clone())))
        .collect()
}

/// Splits examples by user. Within each class, `holdout_fraction` of the
/// users (rounded, at least one) are held out with all their examples.
pub fn split_by_user(
    examples: &[LabeledExample],
    holdout_fraction: f64,
    seed: u64,
) -> (Vec<LabeledExample>, Vec<LabeledExample>) {
    let mut users: BTreeMap<&str, bool> = BTreeMap::new();
    for e in examples {
        users.insert(&e.user_id, e.is_top);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held: BTreeSet<&str> = BTreeSet::new();
    for class in [true, false] {
        let members: Vec<&str> = users.iter().filter(|(_, &t)| t == class).map(|(u, _)| *u).collect();
        if members.is_empty() {
            continue;
        }
        let take = ((members.len() as f64 * holdout_fraction).round() as usize).clamp(1, members.len());
        for i in index::sample(&mut rng, members.len(), take) {
            held.insert(members[i]);
        }
    }
    examples.iter().cloned().partition(|e| !held.contains(e.user_id.as_str()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDetection {
    pub user_id: String,
    pub examples: usize,
    /// Mean model score over the user's conversations.
    pub score: f64,
    pub flagged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub is_top: Option<bool>,
}

/// Scores each example and averages per user; a user is flagged when the
/// mean score exceeds one half.
pub fn detect_users(model: &TrainedModel, examples: &[LabeledExample], labels_known: bool) -> Result<Vec<UserDetection>, PipelineError> {
    let selector = model_selector(model)?;
    let mut per_user: BTreeMap<&str, (usize, f64, bool)> = BTreeMap::new();
    for e in examples {
        let x = crate::features::select_features(&e.features, &selector);
        let p = model.predict(&x).map_err(|e| failed("detect")(&e))?;
        let entry = per_user.entry(&e.user_id).or_insert((0, 0.0, e.is_top));
        entry.0 += 1;
        entry.1 += p.score;
    }
    Ok(per_user
        .into_iter()
        .map(|(u, (n, total, top))| {
            let score = total / n as f64;
            UserDetection {
                user_id: u.to_string(),
                examples: n,
                score,
                flagged: score > 0.5,
                is_top: labels_known.then_some(top),
            }
        })
        .collect())
}

pub fn model_selector(model: &TrainedModel) -> Result<FeatureSelector, PipelineError> {
    let members = model
        .selector
        .members
        .iter()
        .map(|m| m.parse())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| invalid("detect", format!("model selector: {e}")))?;
    Ok(FeatureSelector::custom(model.selector.name.clone(), members))
}

pub fn user_report(detections: &[UserDetection], truth: &dyn Fn(&UserDetection) -> bool) -> EvalReport {
    let predicted: Vec<bool> = detections.iter().map(|d| d.flagged).collect();
    let actual: Vec<bool> = detections.iter().map(truth).collect();
    EvalReport::from_confusion(Confusion::from_predictions(&predicted, &actual))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectReport {
    pub seed: u64,
    pub kind: ModelKind,
    pub selector: String,
    pub fraction: f64,
    pub n_conversations: usize,
    pub n_users: usize,
    pub n_train: usize,
    pub n_holdout_examples: usize,
    pub n_holdout_users: usize,
    /// Per conversation-user example.
    pub examples: EvalReport,
    /// Per holdout user, against the approval-based labels.
    pub users: EvalReport,
    /// Per holdout user, against the planted truth when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planted: Option<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub name: String,
    pub version: u32,
    pub outputs: Vec<ArtifactEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub inputs: Vec<ArtifactEntry>,
    pub stages: Vec<StageEntry>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<(String, u64)> {
    let bytes = fs::read(path)?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

struct RunDir {
    root: PathBuf,
    stages: Vec<StageEntry>,
}

impl RunDir {
    /// Writes `name` through `fill` and records it under `stage`.
    fn write<F>(&mut self, stage: &'static str, name: &str, fill: F) -> Result<(), PipelineError>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), Box<dyn std::error::Error>>,
    {
        let path = self.root.join(name);
        let file = File::create(&path).map_err(|e| failed(stage)(&format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        fill(&mut w).map_err(|e| failed(stage)(&e))?;
        w.flush().map_err(|e| failed(stage)(&e))?;
        drop(w);
        let (sha256, bytes) = sha256_file(&path).map_err(|e| failed(stage)(&e))?;
        let entry = ArtifactEntry {
            path: name.to_string(),
            sha256,
            bytes,
        };
        match self.stages.iter_mut().find(|s| s.name == stage) {
            Some(s) => s.outputs.push(entry),
            None => self.stages.push(StageEntry {
                name: stage.to_string(),
                version: STAGE_VERSION,
                outputs: vec![entry],
            }),
        }
        Ok(())
    }
}

pub fn read_corpus(paths: &[PathBuf]) -> Result<Vec<Conversation>, PipelineError> {
    let mut conversations = Vec::new();
    for p in paths {
        let file = File::open(p).map_err(|e| failed("ingest")(&format!("{}: {e}", p.display())))?;
        let lines: Vec<String> = BufReader::new(file)
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|e| failed("ingest")(&format!("{}: {e}", p.display())))?;
        let parsed = parse_corpus(lines).map_err(|e| failed("ingest")(&format!("{}: {e}", p.display())))?;
        conversations.extend(parsed);
    }
    let mut seen = BTreeSet::new();
    for c in &conversations {
        if !seen.insert(c.id().to_string()) {
            return Err(failed("ingest")(&format!("conversation {} appears in more than one input", c.id())));
        }
    }
    Ok(conversations)
}

pub struct RunOutcome {
    pub report: DetectReport,
    pub detections: Vec<UserDetection>,
    pub manifest: Manifest,
}

/// Executes every stage under `config.out_dir`.
pub fn run_detect(config: &RunConfig) -> Result<RunOutcome, PipelineError> {
    let selector = config.validate()?;
    fs::create_dir_all(&config.out_dir).map_err(|e| invalid("setup", format!("{}: {e}", config.out_dir.display())))?;
    let manifest_path = config.out_dir.join(MANIFEST_FILE);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| failed("setup")(&e))?;
    }
    let mut dir = RunDir {
        root: config.out_dir.clone(),
        stages: Vec::new(),
    };

    info!("ingest");
    let mut planted: Option<BTreeSet<String>> = None;
    let mut inputs = Vec::new();
    let conversations = match &config.synth {
        Some(s) => {
            let corpus = generate(s).map_err(|e| failed("synth")(&e))?;
            let truth = corpus.truth(s.seed);
            dir.write("synth", "truth.json", |w| Ok(io::write_json_pretty(&truth, w)?))?;
            planted = Some(corpus.ground_truth_top);
            corpus.conversations
        }
        None => {
            for p in &config.inputs {
                let (sha256, bytes) = sha256_file(p).map_err(|e| failed("ingest")(&e))?;
                inputs.push(ArtifactEntry {
                    path: p.display().to_string(),
                    sha256,
                    bytes,
                });
            }
            read_corpus(&config.inputs)?
        }
    };
    if let Some(t) = &config.truth {
        let text = fs::read_to_string(t).map_err(|e| failed("evaluate")(&e))?;
        let truth: GroundTruth = serde_json::from_str(&text).map_err(|e| failed("evaluate")(&e))?;
        planted = Some(truth.top.into_iter().collect());
    }
    dir.write("ingest", "posts.jsonl", |w| {
        for c in &conversations {
            c.write_jsonl(&mut *w)?;
        }
        Ok(())
    })?;

    info!("graph, centrality, features over {} conversations", conversations.len());
    let artifacts = extract(&conversations)?;
    let graphs: Vec<ArgGraph> = artifacts.iter().map(|a| a.graph.clone()).collect();
    dir.write("graph", "graphs.jsonl", |w| Ok(io::write_graphs(&graphs, w)?))?;
    let cent_rows: Vec<(&ArgGraph, &CentralityScores)> = artifacts.iter().map(|a| (&a.graph, &a.centrality)).collect();
    dir.write("centrality", "centrality.csv", |w| Ok(io::write_centralities(&cent_rows, w)?))?;
    let rows = feature_rows(&artifacts);
    dir.write("features", "features.csv", |w| Ok(io::write_features(&rows, w)?))?;

    info!("label");
    let approvals = cumulative_approval(conversations.iter().flat_map(|c| c.posts()));
    let top = flag_top_users(approvals.values(), config.fraction).map_err(|e| failed("label")(&e))?;
    let examples = label_examples(&rows, &top);
    dir.write("label", "approvals.csv", |w| Ok(io::write_approvals(&approvals, &top, w)?))?;
    dir.write("label", "labels.csv", |w| Ok(io::write_labeled(&examples, w)?))?;

    info!("split and balance");
    let (pool, holdout) = split_by_user(&examples, config.holdout_fraction, config.seed);
    let positives = pool.iter().filter(|e| e.is_top).count();
    let negatives = pool.len() - positives;
    let size = config.balance_size.unwrap_or(2 * positives.min(negatives));
    let balanced: Dataset = balance_dataset(&pool, size, config.seed, selector.clone()).map_err(|e| failed("balance")(&e))?;
    dir.write("balance", "train.csv", |w| Ok(io::write_labeled(&balanced.examples, w)?))?;
    dir.write("balance", "holdout.csv", |w| Ok(io::write_labeled(&holdout, w)?))?;

    info!("train {} on {} examples", config.kind, balanced.len());
    let mut model = train(config.kind, &balanced.samples(), &config.model_hyperparams()).map_err(|e| failed("train")(&e))?;
    model.selector.name = selector.name.clone();
    dir.write("train", "model.json", |w| {
        w.write_all(model.to_json().as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    })?;

    info!("evaluate on {} holdout examples", holdout.len());
    let holdout_set = Dataset::new(holdout.clone(), selector.clone(), Provenance::Validation);
    let example_report = crate::analysis::evaluate(&model, &holdout_set.samples()).map_err(|e| failed("evaluate")(&e))?;
    let detections = detect_users(&model, &holdout, true)?;
    let users = user_report(&detections, &|d| d.is_top == Some(true));
    let planted_report = planted
        .as_ref()
        .map(|p| user_report(&detections, &|d| p.contains(&d.user_id)));
    let report = DetectReport {
        seed: config.seed,
        kind: config.kind,
        selector: selector.name.clone(),
        fraction: config.fraction,
        n_conversations: conversations.len(),
        n_users: approvals.len(),
        n_train: balanced.len(),
        n_holdout_examples: holdout.len(),
        n_holdout_users: detections.len(),
        examples: example_report,
        users,
        planted: planted_report,
    };
    dir.write("evaluate", "report.json", |w| Ok(io::write_json_pretty(&report, w)?))?;
    dir.write("evaluate", "flagged.csv", |w| Ok(write_detections(&detections, planted.as_ref(), w)?))?;

    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed,
        config: config.clone(),
        inputs,
        stages: dir.stages,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| failed("manifest")(&e))?;
    fs::write(&manifest_path, format!("{text}\n")).map_err(|e| failed("manifest")(&e))?;
    Ok(RunOutcome {
        report,
        detections,
        manifest,
    })
}

/// `user_id,examples,score,flagged[,is_top][,planted]`.
pub fn write_detections<W: Write>(
    detections: &[UserDetection],
    planted: Option<&BTreeSet<String>>,
    out: W,
) -> Result<(), io::IoError> {
    let mut w = csv::Writer::from_writer(out);
    let labelled = detections.iter().any(|d| d.is_top.is_some());
    let mut header = vec!["user_id", "examples", "score", "flagged"];
    if labelled {
        header.push("is_top");
    }
    if planted.is_some() {
        header.push("planted");
    }
    w.write_record(&header)?;
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    for d in detections {
        let mut r = vec![d.user_id.clone(), d.examples.to_string(), format!("{}", d.score), flag(d.flagged)];
        if labelled {
            r.push(flag(d.is_top == Some(true)));
        }
        if let Some(p) = planted {
            r.push(flag(p.contains(&d.user_id)));
        }
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}
