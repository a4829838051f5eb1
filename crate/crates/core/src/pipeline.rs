//! End-to-end runs: corpus generation with a checksummed manifest, world
//! construction per answering mode, question answering and metrics.
//!
//! A corpus directory holds `manifest.json` and one `sets/NNNNN.json` per
//! problem set (`{index, seed, set, questions}`). The manifest lists every
//! file with its SHA-256 and a corpus checksum over those digests.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gnn::{self, Dynamics, GnnError, Ppl, TrainConfig};
use crate::inference::{infer_properties, InferenceConfig, InferenceError};
use crate::model::{PropertyGraph, Question, QuestionType, VideoSet};
use crate::physics::PhysicsConfig;
use crate::program::{
    counterfactual_requests, execute, CfEdit, CounterfactualWorld, Program, World,
};
use crate::questions::{
    balance_corpus, generate_questions, BalanceConfig, BalanceReport, QuestionClass,
    QuestionConfig, QuestionError,
};
use crate::scene_gen::{generate_video_set, split_seeds, GenConfig, GenError};
use crate::worlds::{
    apply_edit, build_world, graph_properties, roster_properties, with_properties, FutureSource,
    WorldError,
};

pub const CORPUS_FORMAT: &str = "comphy-corpus/1";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("set {index}: {source}")]
    Generate {
        index: usize,
        #[source]
        source: GenError,
    },
    #[error("set {index}: {source}")]
    Questions {
        index: usize,
        #[source]
        source: QuestionError,
    },
    #[error("set {index}: {source}")]
    Inference {
        index: usize,
        #[source]
        source: InferenceError,
    },
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("no answers to evaluate")]
    EmptyCorpus,
}

/// Every tunable of a run; any missing section takes defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub physics: PhysicsConfig,
    pub gen: GenConfig,
    pub questions: QuestionConfig,
    pub balance: BalanceConfig,
    pub inference: InferenceConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Reads a `.toml` or `.json` file.
    pub fn load(path: &Path) -> Result<RunConfig, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.into(),
            source,
        })?;
        let bad = |reason: String| PipelineError::Config {
            path: path.into(),
            reason,
        };
        let cfg: RunConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| bad(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?
        };
        cfg.physics.validate().map_err(|e| bad(e.to_string()))?;
        cfg.gen.validate().map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub index: usize,
    pub seed: u64,
    pub set: VideoSet,
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub seed: u64,
    pub sets: usize,
    pub config: RunConfig,
    pub balance: BalanceReport,
    pub files: Vec<FileDigest>,
    /// SHA-256 over the concatenated file digests, in file order.
    pub corpus_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub entries: Vec<CorpusEntry>,
    pub balance: BalanceReport,
}

/// Generates `n` sets with questions from a root seed, then balances the
/// pooled question mix. Sets are generated in parallel; output does not
/// depend on thread count.
pub fn generate_corpus(seed: u64, n: usize, cfg: &RunConfig) -> Result<Corpus, PipelineError> {
    let seeds = split_seeds(seed, n);
    let mut entries = seeds
        .par_iter()
        .enumerate()
        .map(|(index, &s)| {
            let set = generate_video_set(s, &cfg.gen, &cfg.physics)
                .map_err(|source| PipelineError::Generate { index, source })?;
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let g = generate_questions(&set, &cfg.questions, &cfg.physics, &mut rng)
                .map_err(|source| PipelineError::Questions { index, source })?;
            Ok(CorpusEntry {
                index,
                seed: s,
                set,
                questions: g.questions,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let mut lists: Vec<Vec<Question>> = entries
        .iter_mut()
        .map(|e| std::mem::take(&mut e.questions))
        .collect();
    let balance = balance_corpus(
        &mut lists,
        &cfg.balance,
        &mut ChaCha8Rng::seed_from_u64(seed),
    );
    for (e, qs) in entries.iter_mut().zip(lists) {
        e.questions = qs;
    }
    Ok(Corpus { entries, balance })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    std::fs::write(path, bytes).map_err(|source| PipelineError::Io {
        path: path.into(),
        source,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|source| PipelineError::Io {
        path: path.into(),
        source,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable value");
    v.push(b'\n');
    v
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    write_file(path, &to_json(value))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    serde_json::from_slice(&read_file(path)?).map_err(|source| PipelineError::Json {
        path: path.into(),
        source,
    })
}

/// Writes the corpus and its manifest under `dir`.
pub fn write_corpus(
    dir: &Path,
    seed: u64,
    corpus: &Corpus,
    cfg: &RunConfig,
) -> Result<Manifest, PipelineError> {
    let sets_dir = dir.join("sets");
    std::fs::create_dir_all(&sets_dir).map_err(|source| PipelineError::Io {
        path: sets_dir.clone(),
        source,
    })?;
    let mut files = Vec::with_capacity(corpus.entries.len());
    let mut all = Sha256::new();
    for e in &corpus.entries {
        let rel = format!("sets/{:05}.json", e.index);
        let bytes = to_json(e);
        let digest = sha256_hex(&bytes);
        all.update(digest.as_bytes());
        write_file(&dir.join(&rel), &bytes)?;
        files.push(FileDigest {
            path: rel,
            sha256: digest,
        });
    }
    let manifest = Manifest {
        format: CORPUS_FORMAT.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed,
        sets: corpus.entries.len(),
        config: cfg.clone(),
        balance: corpus.balance.clone(),
        files,
        corpus_sha256: hex::encode(all.finalize()),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Reads a corpus, verifying every file against the manifest.
pub fn read_corpus(dir: &Path) -> Result<(Manifest, Vec<CorpusEntry>), PipelineError> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    if manifest.format != CORPUS_FORMAT {
        return Err(PipelineError::Corpus(format!(
            "unknown format `{}`",
            manifest.format
        )));
    }
    let mut entries = Vec::with_capacity(manifest.files.len());
    for f in &manifest.files {
        let path = dir.join(&f.path);
        let bytes = read_file(&path)?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err(PipelineError::Corpus(format!(
                "{} does not match its checksum",
                f.path
            )));
        }
        entries.push(
            serde_json::from_slice(&bytes)
                .map_err(|source| PipelineError::Json { path, source })?,
        );
    }
    Ok((manifest, entries))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Ground-truth properties and recorded worlds.
    Oracle,
    /// Enumeration-inferred properties and re-simulated worlds.
    Inferred,
    /// Learned properties and rolled-out dynamics.
    Gnn,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Mode, String> {
        match s {
            "oracle" => Ok(Mode::Oracle),
            "inferred" => Ok(Mode::Inferred),
            "gnn" => Ok(Mode::Gnn),
            _ => Err(format!(
                "unknown mode `{s}` (expected oracle, inferred or gnn)"
            )),
        }
    }
}

/// What answering needs besides the corpus.
#[derive(Debug, Clone, Copy)]
pub enum Answerer<'a> {
    Oracle,
    Inferred(&'a InferenceConfig),
    Gnn {
        ppl: &'a Ppl,
        dynamics: &'a Dynamics,
    },
}

impl Answerer<'_> {
    pub fn mode(&self) -> Mode {
        match self {
            Answerer::Oracle => Mode::Oracle,
            Answerer::Inferred(_) => Mode::Inferred,
            Answerer::Gnn { .. } => Mode::Gnn,
        }
    }
}

/// Every counterfactual edit the programs ask for, resolved on the target.
pub fn requested_edits<'a>(
    set: &VideoSet,
    programs: impl IntoIterator<Item = &'a Program>,
) -> Vec<CfEdit> {
    let probe = World::new(set.target.clone(), roster_properties(&set.roster));
    let mut edits = BTreeSet::new();
    for p in programs {
        if let Ok(e) = counterfactual_requests(p, &probe) {
            edits.extend(e);
        }
    }
    edits.into_iter().collect()
}

/// Programs of a question and all its options.
pub fn question_programs(questions: &[Question]) -> impl Iterator<Item = &Program> {
    questions
        .iter()
        .flat_map(|q| std::iter::once(&q.program).chain(q.choices.iter().map(|c| &c.program)))
}

fn gnn_world(
    set: &VideoSet,
    edits: &[CfEdit],
    ppl: &Ppl,
    dynm: &Dynamics,
    physics: &PhysicsConfig,
) -> Result<World, PipelineError> {
    let graph = gnn::predict_graph(ppl, set, physics)?;
    let props = graph_properties(&graph, &set.target.ids());
    let objects = with_properties(&set.target.objects, &props);
    let mut world = World::new(set.target.clone(), props);
    world.future = Some(gnn::predicted_future(
        dynm,
        &set.target,
        &objects,
        set.future.frames.len(),
        physics,
    )?);
    for &edit in edits {
        let record =
            gnn::predicted_counterfactual(dynm, &set.target, &apply_edit(&objects, edit), physics)?;
        world
            .counterfactuals
            .push(CounterfactualWorld { edit, record });
    }
    Ok(world)
}

/// The world bundle `answerer` evaluates programs against, with one
/// counterfactual record per edit.
pub fn build_worlds(
    index: usize,
    set: &VideoSet,
    edits: &[CfEdit],
    answerer: Answerer,
    physics: &PhysicsConfig,
) -> Result<World, PipelineError> {
    match answerer {
        Answerer::Oracle => Ok(build_world(
            set,
            roster_properties(&set.roster),
            edits,
            FutureSource::Recorded,
            physics,
        )?),
        Answerer::Inferred(cfg) => {
            let inf = infer_properties(set, physics, cfg)
                .map_err(|source| PipelineError::Inference { index, source })?;
            let props = graph_properties(&inf.graph, &set.target.ids());
            Ok(build_world(
                set,
                props,
                edits,
                FutureSource::Simulated,
                physics,
            )?)
        }
        Answerer::Gnn { ppl, dynamics } => gnn_world(set, edits, ppl, dynamics, physics),
    }
}

/// Outcome of one question. A question is correct exactly when every option is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub set: usize,
    pub question: String,
    pub qtype: QuestionType,
    pub template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predicted_choices: Vec<Option<bool>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub truth_choices: Vec<bool>,
    pub correct_options: Vec<bool>,
    pub correct: bool,
    /// Error categories met while answering; each counts the option as wrong.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

fn answer_one(index: usize, q: &Question, world: Result<&World, &str>) -> AnswerRecord {
    let mut errors = Vec::new();
    let mut run = |p| match world {
        Ok(w) => match execute(p, w) {
            Ok(v) => Some(v),
            Err(e) => {
                errors.push(e.kind.category().to_string());
                None
            }
        },
        Err(category) => {
            errors.push(category.to_string());
            None
        }
    };
    let mut rec = AnswerRecord {
        set: index,
        question: q.id.clone(),
        qtype: q.qtype,
        template: q.template.clone(),
        predicted: None,
        truth: q.answer.clone(),
        predicted_choices: Vec::new(),
        truth_choices: Vec::new(),
        correct_options: Vec::new(),
        correct: false,
        errors: Vec::new(),
    };
    if q.qtype.is_multiple_choice() {
        for c in &q.choices {
            let v = run(&c.program).and_then(|v| v.as_bool());
            rec.predicted_choices.push(v);
            rec.truth_choices.push(c.answer);
            rec.correct_options.push(v == Some(c.answer));
        }
    } else {
        rec.predicted = run(&q.program).map(|v| v.answer_text());
        rec.correct_options
            .push(rec.predicted.is_some() && rec.predicted == q.answer);
    }
    rec.correct = !rec.correct_options.is_empty() && rec.correct_options.iter().all(|c| *c);
    rec.errors = errors;
    rec
}

/// Answers one set's questions; a world that cannot be built marks every
/// question wrong under the `world` category.
pub fn answer_set(
    entry: &CorpusEntry,
    answerer: Answerer,
    physics: &PhysicsConfig,
) -> Vec<AnswerRecord> {
    let edits = requested_edits(&entry.set, question_programs(&entry.questions));
    let world = build_worlds(entry.index, &entry.set, &edits, answerer, physics);
    if let Err(e) = &world {
        log::warn!("set {}: {e}", entry.index);
    }
    let w = world.as_ref().map_err(|_| "world");
    entry
        .questions
        .iter()
        .map(|q| answer_one(entry.index, q, w))
        .collect()
}

/// Answers every question; sets are processed in parallel, output order is corpus order.
pub fn answer(
    entries: &[CorpusEntry],
    answerer: Answerer,
    physics: &PhysicsConfig,
) -> Vec<AnswerRecord> {
    entries
        .par_iter()
        .map(|e| answer_set(e, answerer, physics))
        .flatten()
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub questions: usize,
    pub options: usize,
    pub correct_questions: usize,
    pub correct_options: usize,
    pub per_option: f64,
    pub per_question: f64,
}

impl ClassAccuracy {
    fn add(&mut self, r: &AnswerRecord) {
        self.questions += 1;
        self.options += r.correct_options.len();
        self.correct_questions += r.correct as usize;
        self.correct_options += r.correct_options.iter().filter(|c| **c).count();
    }

    fn finish(&mut self) {
        let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        self.per_option = frac(self.correct_options, self.options);
        self.per_question = frac(self.correct_questions, self.questions);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub factual: ClassAccuracy,
    pub predictive: ClassAccuracy,
    pub counterfactual: ClassAccuracy,
    /// Error category counts over all options.
    pub errors: BTreeMap<String, usize>,
}

pub fn evaluate(records: &[AnswerRecord]) -> Result<Metrics, PipelineError> {
    if records.is_empty() {
        return Err(PipelineError::EmptyCorpus);
    }
    let mut m = Metrics {
        factual: ClassAccuracy::default(),
        predictive: ClassAccuracy::default(),
        counterfactual: ClassAccuracy::default(),
        errors: BTreeMap::new(),
    };
    for r in records {
        match QuestionClass::of(r.qtype) {
            QuestionClass::Factual => m.factual.add(r),
            QuestionClass::Predictive => m.predictive.add(r),
            QuestionClass::Counterfactual => m.counterfactual.add(r),
        }
        for e in &r.errors {
            *m.errors.entry(e.clone()).or_default() += 1;
        }
    }
    m.factual.finish();
    m.predictive.finish();
    m.counterfactual.finish();
    Ok(m)
}

/// Plain-text table: factual accuracy, then per-option and per-question
/// accuracy for predictive and counterfactual questions.
pub fn render_table(m: &Metrics) -> String {
    let mut s = String::new();
    let pct = |x: f64| format!("{:.1}", 100.0 * x);
    let _ = writeln!(
        s,
        "{:<10} {:>9} | {:^19} | {:^19}",
        "", "factual", "predictive", "counterfactual"
    );
    let _ = writeln!(
        s,
        "{:<10} {:>9} | {:>9} {:>9} | {:>9} {:>9}",
        "", "", "per opt.", "per ques.", "per opt.", "per ques."
    );
    let _ = writeln!(
        s,
        "{:<10} {:>9} | {:>9} {:>9} | {:>9} {:>9}",
        "accuracy",
        pct(m.factual.per_question),
        pct(m.predictive.per_option),
        pct(m.predictive.per_question),
        pct(m.counterfactual.per_option),
        pct(m.counterfactual.per_question)
    );
    let _ = writeln!(
        s,
        "{:<10} {:>9} | {:>9} {:>9} | {:>9} {:>9}",
        "count",
        m.factual.questions,
        m.predictive.options,
        m.predictive.questions,
        m.counterfactual.options,
        m.counterfactual.questions
    );
    for (k, v) in &m.errors {
        let _ = writeln!(s, "error {k}: {v}");
    }
    s
}

/// Inferred property graph per set, as written by `infer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferredSet {
    pub set: usize,
    pub graph: PropertyGraph,
    pub ambiguous: bool,
    pub rule_conflicts: Vec<String>,
    pub masses_correct: usize,
    pub masses: usize,
    pub edges_correct: usize,
    pub edges: usize,
}

pub fn infer_corpus(
    entries: &[CorpusEntry],
    physics: &PhysicsConfig,
    cfg: &InferenceConfig,
) -> Result<Vec<InferredSet>, PipelineError> {
    entries
        .par_iter()
        .map(|e| {
            let inf = infer_properties(&e.set, physics, cfg).map_err(|source| {
                PipelineError::Inference {
                    index: e.index,
                    source,
                }
            })?;
            let truth = PropertyGraph::from_roster(&e.set.roster);
            let mut out = InferredSet {
                set: e.index,
                ambiguous: inf.enumeration.ambiguous,
                rule_conflicts: inf.rule_conflicts.clone(),
                masses_correct: 0,
                masses: truth.node_mass.len(),
                edges_correct: 0,
                edges: truth.edge_charge.len(),
                graph: inf.graph,
            };
            out.masses_correct = truth
                .node_mass
                .iter()
                .filter(|(id, l)| out.graph.mass(**id) == Some(l.label))
                .count();
            out.edges_correct = truth
                .edge_charge
                .iter()
                .filter(|(p, l)| out.graph.edge(p.lo(), p.hi()) == Some(l.label))
                .count();
            Ok(out)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(qtype: QuestionType, options: &[bool]) -> AnswerRecord {
        AnswerRecord {
            set: 0,
            question: "q0".into(),
            qtype,
            template: "t".into(),
            predicted: None,
            truth: None,
            predicted_choices: Vec::new(),
            truth_choices: Vec::new(),
            correct_options: options.to_vec(),
            correct: options.iter().all(|c| *c),
            errors: Vec::new(),
        }
    }

    #[test]
    fn per_option_and_per_question() {
        let m = evaluate(&[record(QuestionType::Predictive, &[true, true])]).unwrap();
        assert_eq!(
            (m.predictive.per_option, m.predictive.per_question),
            (1.0, 1.0)
        );
        let m = evaluate(&[record(QuestionType::CounterfactualMass, &[true, false])]).unwrap();
        assert_eq!(
            (m.counterfactual.per_option, m.counterfactual.per_question),
            (0.5, 0.0)
        );
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(evaluate(&[]), Err(PipelineError::EmptyCorpus)));
    }

    #[test]
    fn oracle_answers_everything_and_corpus_round_trips() {
        let cfg = RunConfig::default();
        let corpus = generate_corpus(3, 4, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_corpus(dir.path(), 3, &corpus, &cfg).unwrap();
        let (m2, entries) = read_corpus(dir.path()).unwrap();
        assert_eq!(manifest, m2);
        assert_eq!(entries, corpus.entries);
        let records = answer(&entries, Answerer::Oracle, &cfg.physics);
        assert!(
            records.iter().all(|r| r.correct && r.errors.is_empty()),
            "{records:?}"
        );
    }

    #[test]
    fn tampered_corpus_is_rejected() {
        let cfg = RunConfig::default();
        let corpus = generate_corpus(5, 1, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), 5, &corpus, &cfg).unwrap();
        let p = dir.path().join("sets/00000.json");
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.push(b' ');
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(
            read_corpus(dir.path()),
            Err(PipelineError::Corpus(_))
        ));
    }

    #[test]
    fn missing_world_marks_questions_wrong() {
        let cfg = RunConfig::default();
        let corpus = generate_corpus(9, 1, &cfg).unwrap();
        let e = &corpus.entries[0];
        let recs: Vec<_> = e
            .questions
            .iter()
            .map(|q| answer_one(0, q, Err("world")))
            .collect();
        assert!(recs
            .iter()
            .all(|r| !r.correct && r.errors.iter().all(|c| c == "world")));
    }
}
