//! End-to-end extraction: QG inference, QA inference, decoding and scoring.
//!
//! A run writes these files to the output directory, one row per task in task
//! order:
//!
//! | file                | row                                   |
//! |---------------------|---------------------------------------|
//! | `qg_inputs.jsonl`   | [`Seq2SeqExample`] without output     |
//! | `qg_outputs.jsonl`  | [`QuestionRow`], raw generated text   |
//! | `qa_inputs.jsonl`   | [`Seq2SeqExample`] without output     |
//! | `qa_outputs.jsonl`  | [`AnswerRow`], raw generated text     |
//! | `decoded.jsonl`     | [`DecodedRow`]                        |
//! | `predictions.jsonl` | [`ArgumentUnit`], one per span        |
//! | `report.json`       | [`PipelineReport`]                    |
//!
//! Generated outputs are appended batch by batch, so a backend failure leaves
//! everything produced up to that point on disk.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::backend::{
    default_qa_params, default_qg_params, Backend, BackendError, GenerationParams, GenerationRequest,
    HttpBackend, ModelKind, OracleBackend, OracleBook, ParamOverrides,
};
use crate::corpus::{load_corpus, CorpusError, SentenceRecord};
use crate::decode::{decode_answer, MatchedSpan, DEFAULT_EOS_TOKEN};
use crate::example::{ExampleError, ExampleMeta, Seq2SeqExample};
use crate::ontology::{load_registry, RegistryError, TemplateRegistry};
use crate::qa_data::emit_qa_inference;
use crate::question_gen::qg_input;
use crate::scoring::{argument_units, trigger_units, ArgumentUnit, ScoreReport};

pub const DEFAULT_BATCH_SIZE: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Example(#[from] ExampleError),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// 2 for backend failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Backend(_) => 2,
            _ => 1,
        }
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One question to ask: role `role` of mention `mention` in record `record`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub record: usize,
    pub mention: usize,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedMention {
    pub id: String,
    pub mention: usize,
    pub event_type: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TaskPlan {
    pub tasks: Vec<Task>,
    /// Mentions whose event type the registry does not know.
    pub skipped: Vec<SkippedMention>,
}

/// Corpus order, then mention order, then the event type's role order.
pub fn enumerate_tasks(registry: &TemplateRegistry, corpus: &[SentenceRecord]) -> TaskPlan {
    let mut plan = TaskPlan::default();
    for (ri, record) in corpus.iter().enumerate() {
        for (mi, mention) in record.mentions.iter().enumerate() {
            match registry.queryable_roles(&mention.event_type) {
                Some(roles) => plan.tasks.extend(roles.into_iter().map(|role| Task {
                    record: ri,
                    mention: mi,
                    role: role.to_string(),
                })),
                None => {
                    warn!(
                        "record {} mention {mi}: unknown event type {}, skipped",
                        record.id, mention.event_type
                    );
                    plan.skipped.push(SkippedMention {
                        id: record.id.clone(),
                        mention: mi,
                        event_type: mention.event_type.clone(),
                    });
                }
            }
        }
    }
    plan
}

/// A generated question for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub id: String,
    #[serde(default)]
    pub mention: usize,
    pub role: String,
    pub question: String,
}

/// A generated answer for one task, before decoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRow {
    pub id: String,
    #[serde(default)]
    pub mention: usize,
    pub role: String,
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodedRow {
    pub id: String,
    pub mention: usize,
    pub role: String,
    pub spans: Vec<MatchedSpan>,
    pub discarded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub scores: ScoreReport,
    pub tasks: usize,
    pub skipped_mentions: Vec<SkippedMention>,
    /// Answer candidates that could not be located in their sentence.
    pub discarded_candidates: usize,
}

/// Cleans a generated question: trims, drops a trailing eos token and makes
/// sure it ends with `?`. `None` if nothing is left.
pub fn normalize_question(raw: &str, eos_token: &str) -> Option<String> {
    let mut q = raw.trim();
    if !eos_token.is_empty() {
        q = q.strip_suffix(eos_token).unwrap_or(q).trim_end();
    }
    if q.is_empty() {
        return None;
    }
    let mut q = q.to_string();
    if !q.ends_with('?') {
        q.push('?');
    }
    Some(q)
}

/// Maps record ids to corpus positions, rejecting duplicates.
pub fn index_records(corpus: &[SentenceRecord]) -> Result<HashMap<&str, usize>, PipelineError> {
    let mut index = HashMap::with_capacity(corpus.len());
    for (i, record) in corpus.iter().enumerate() {
        if index.insert(record.id.as_str(), i).is_some() {
            return Err(PipelineError::Invalid(format!("duplicate record id {}", record.id)));
        }
    }
    Ok(index)
}

fn lookup<'c>(
    corpus: &'c [SentenceRecord],
    index: &HashMap<&str, usize>,
    id: &str,
) -> Result<&'c SentenceRecord, PipelineError> {
    index
        .get(id)
        .map(|&i| &corpus[i])
        .ok_or_else(|| PipelineError::Invalid(format!("record {id} not in corpus")))
}

/// QG inference inputs for every task.
pub fn qg_inference_examples(corpus: &[SentenceRecord], plan: &TaskPlan) -> Vec<Seq2SeqExample> {
    plan.tasks
        .iter()
        .map(|task| {
            let record = &corpus[task.record];
            let mention = &record.mentions[task.mention];
            Seq2SeqExample {
                id: record.id.clone(),
                role: task.role.clone(),
                input: qg_input(&record.text, mention, &task.role),
                output: None,
                meta: ExampleMeta {
                    event_type: mention.event_type.clone(),
                    trigger: mention.trigger,
                    mention: task.mention,
                },
            }
        })
        .collect()
}

/// QA inference inputs from generated questions. An empty question is a
/// backend error pointing at its row.
pub fn qa_inference_examples(
    corpus: &[SentenceRecord],
    questions: &[QuestionRow],
    eos_token: &str,
) -> Result<Vec<Seq2SeqExample>, PipelineError> {
    let index = index_records(corpus)?;
    questions
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let record = lookup(corpus, &index, &row.id)?;
            let question = normalize_question(&row.question, eos_token).ok_or(BackendError::EmptyOutput {
                model: ModelKind::Qg,
                index: i,
            })?;
            Ok(emit_qa_inference(&question, record, row.mention, &row.role)?)
        })
        .collect()
}

/// Decodes raw answers into spans and prediction rows.
pub fn decode_answers(
    corpus: &[SentenceRecord],
    answers: &[AnswerRow],
    eos_token: &str,
) -> Result<(Vec<DecodedRow>, Vec<ArgumentUnit>), PipelineError> {
    let index = index_records(corpus)?;
    let mut decoded = Vec::with_capacity(answers.len());
    let mut predictions = Vec::new();
    for row in answers {
        let record = lookup(corpus, &index, &row.id)?;
        let mention = record.mentions.get(row.mention).ok_or_else(|| ExampleError::NoSuchMention {
            id: record.id.clone(),
            index: row.mention,
        })?;
        let spans = decode_answer(&row.raw, eos_token, &record.text);
        predictions.extend(spans.spans.iter().map(|s| ArgumentUnit {
            id: record.id.clone(),
            event_type: mention.event_type.clone(),
            role: row.role.clone(),
            start: s.start,
            end: s.end,
            surface: s.surface.clone(),
        }));
        decoded.push(DecodedRow {
            id: row.id.clone(),
            mention: row.mention,
            role: row.role.clone(),
            spans: spans.spans,
            discarded: spans.discarded,
        });
    }
    Ok((decoded, predictions))
}

/// Where generation requests go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    Http(String),
    Oracle(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(path) = s.strip_prefix("oracle:") {
            if path.is_empty() {
                return Err("oracle backend needs a book path".into());
            }
            Ok(BackendSpec::Oracle(PathBuf::from(path)))
        } else if s.starts_with("http://") || s.starts_with("https://") {
            Ok(BackendSpec::Http(s.to_string()))
        } else {
            Err(format!("backend {s:?} is neither http(s)://... nor oracle:<path>"))
        }
    }
}

impl BackendSpec {
    pub fn build(&self) -> Result<Box<dyn Backend>, PipelineError> {
        Ok(match self {
            BackendSpec::Http(url) => Box::new(HttpBackend::new(url.clone())?),
            BackendSpec::Oracle(path) => {
                let book = OracleBook::load(path).map_err(|e| PipelineError::Config(e.to_string()))?;
                Box::new(OracleBackend::new(book))
            }
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    registry: Option<PathBuf>,
    corpus: PathBuf,
    #[serde(default)]
    gold: Option<PathBuf>,
    backend: String,
    #[serde(default)]
    eos_token: Option<String>,
    #[serde(default)]
    qg: ParamOverrides,
    #[serde(default)]
    qa: ParamOverrides,
    output_dir: PathBuf,
    #[serde(default)]
    batch_size: Option<usize>,
}

/// A pipeline run. Relative paths in a config file are resolved against the
/// file's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// `None` uses the built-in ACE registry.
    pub registry: Option<PathBuf>,
    pub corpus: PathBuf,
    /// Reference corpus for scoring; defaults to `corpus`.
    pub gold: Option<PathBuf>,
    pub backend: BackendSpec,
    pub eos_token: String,
    pub qg: ParamOverrides,
    pub qa: ParamOverrides,
    pub output_dir: PathBuf,
    pub batch_size: usize,
}

impl PipelineConfig {
    pub fn from_json(json: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let raw: RawConfig = serde_json::from_str(json).map_err(|e| PipelineError::Config(e.to_string()))?;
        let resolve = |p: PathBuf| if p.is_relative() { base_dir.join(p) } else { p };
        let backend = match raw.backend.parse().map_err(PipelineError::Config)? {
            BackendSpec::Oracle(p) => BackendSpec::Oracle(resolve(p)),
            http => http,
        };
        let batch_size = raw.batch_size.unwrap_or(DEFAULT_BATCH_SIZE);
        if batch_size == 0 {
            return Err(PipelineError::Config("batch_size must be at least 1".into()));
        }
        Ok(Self {
            registry: raw.registry.map(resolve),
            corpus: resolve(raw.corpus),
            gold: raw.gold.map(resolve),
            backend,
            eos_token: raw.eos_token.unwrap_or_else(|| DEFAULT_EOS_TOKEN.to_string()),
            qg: raw.qg,
            qa: raw.qa,
            output_dir: resolve(raw.output_dir),
            batch_size,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let json = std::fs::read_to_string(path).map_err(io_error(path))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_json(&json, base)
    }

    /// Fails on the first referenced input that does not exist.
    pub fn check_paths(&self) -> Result<(), PipelineError> {
        let oracle = match &self.backend {
            BackendSpec::Oracle(p) => Some(p),
            BackendSpec::Http(_) => None,
        };
        let inputs = [self.registry.as_ref(), Some(&self.corpus), self.gold.as_ref(), oracle];
        for path in inputs.into_iter().flatten() {
            if !path.exists() {
                return Err(PipelineError::Config(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn options(&self) -> RunOptions {
        RunOptions {
            eos_token: self.eos_token.clone(),
            qg_params: default_qg_params().with_overrides(&self.qg),
            qa_params: default_qa_params().with_overrides(&self.qa),
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub eos_token: String,
    pub qg_params: GenerationParams,
    pub qa_params: GenerationParams,
    pub batch_size: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            eos_token: DEFAULT_EOS_TOKEN.to_string(),
            qg_params: default_qg_params(),
            qa_params: default_qa_params(),
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }
}

/// Loads everything named by `config`, then runs [`run_with_backend`].
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    config.check_paths()?;
    let registry = match &config.registry {
        Some(path) => load_registry(path)?,
        None => TemplateRegistry::ace(),
    };
    let corpus = load_corpus(&config.corpus)?;
    let gold = match &config.gold {
        Some(path) => load_corpus(path)?,
        None => corpus.clone(),
    };
    let backend = config.backend.build()?;
    run_with_backend(&registry, &corpus, &gold, &backend, &config.options(), &config.output_dir)
}

struct JsonlSink {
    path: PathBuf,
    writer: BufWriter<File>,
}

impl JsonlSink {
    fn create(dir: &Path, name: &str) -> Result<Self, PipelineError> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(io_error(&path))?;
        Ok(Self {
            path,
            writer: BufWriter::new(file),
        })
    }

    fn write<T: Serialize>(&mut self, rows: &[T]) -> Result<(), PipelineError> {
        crate::write_jsonl(&mut self.writer, rows)
            .and_then(|_| self.writer.flush())
            .map_err(io_error(&self.path))
    }
}

/// Generates in batches, persisting each batch before requesting the next.
fn generate_stage<B, T, F>(
    backend: &B,
    model: ModelKind,
    examples: &[Seq2SeqExample],
    params: GenerationParams,
    batch_size: usize,
    sink: &mut JsonlSink,
    row: F,
) -> Result<Vec<String>, PipelineError>
where
    B: Backend + ?Sized,
    T: Serialize,
    F: Fn(&Seq2SeqExample, String) -> T,
{
    let mut outputs = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(batch_size.max(1)) {
        let inputs: Vec<String> = chunk.iter().map(|e| e.input.clone()).collect();
        let request = GenerationRequest::new(inputs, params)?;
        let batch = backend.generate(model, &request)?;
        if batch.len() != chunk.len() {
            return Err(BackendError::Protocol(format!("{} outputs for {} inputs", batch.len(), chunk.len())).into());
        }
        let rows: Vec<T> = chunk.iter().zip(&batch).map(|(e, o)| row(e, o.clone())).collect();
        sink.write(&rows)?;
        outputs.extend(batch);
    }
    Ok(outputs)
}

/// Runs every stage against an already constructed backend.
///
/// Inputs are validated before the first request. Scoring compares the
/// triggers of `corpus` and the decoded arguments against `gold`.
pub fn run_with_backend<B: Backend + ?Sized>(
    registry: &TemplateRegistry,
    corpus: &[SentenceRecord],
    gold: &[SentenceRecord],
    backend: &B,
    options: &RunOptions,
    output_dir: &Path,
) -> Result<PipelineReport, PipelineError> {
    index_records(corpus)?;
    index_records(gold)?;
    std::fs::create_dir_all(output_dir).map_err(io_error(output_dir))?;

    let plan = enumerate_tasks(registry, corpus);
    info!(
        "{} tasks over {} records ({} mentions skipped)",
        plan.tasks.len(),
        corpus.len(),
        plan.skipped.len()
    );

    let qg_examples = qg_inference_examples(corpus, &plan);
    JsonlSink::create(output_dir, "qg_inputs.jsonl")?.write(&qg_examples)?;
    let mut qg_sink = JsonlSink::create(output_dir, "qg_outputs.jsonl")?;
    let qg_outputs = generate_stage(
        backend,
        ModelKind::Qg,
        &qg_examples,
        options.qg_params,
        options.batch_size,
        &mut qg_sink,
        |e, question| QuestionRow {
            id: e.id.clone(),
            mention: e.meta.mention,
            role: e.role.clone(),
            question,
        },
    )?;
    info!("generated {} questions", qg_outputs.len());

    let questions: Vec<QuestionRow> = qg_examples
        .iter()
        .zip(qg_outputs)
        .map(|(e, question)| QuestionRow {
            id: e.id.clone(),
            mention: e.meta.mention,
            role: e.role.clone(),
            question,
        })
        .collect();
    let qa_examples = qa_inference_examples(corpus, &questions, &options.eos_token)?;
    JsonlSink::create(output_dir, "qa_inputs.jsonl")?.write(&qa_examples)?;
    let mut qa_sink = JsonlSink::create(output_dir, "qa_outputs.jsonl")?;
    let answer_row = |e: &Seq2SeqExample, raw: String| AnswerRow {
        id: e.id.clone(),
        mention: e.meta.mention,
        role: e.role.clone(),
        raw,
    };
    let qa_outputs = generate_stage(
        backend,
        ModelKind::Qa,
        &qa_examples,
        options.qa_params,
        options.batch_size,
        &mut qa_sink,
        answer_row,
    )?;
    info!("generated {} answers", qa_outputs.len());

    let answers: Vec<AnswerRow> = qa_examples
        .iter()
        .zip(qa_outputs)
        .map(|(e, raw)| answer_row(e, raw))
        .collect();
    let (decoded, predictions) = decode_answers(corpus, &answers, &options.eos_token)?;
    JsonlSink::create(output_dir, "decoded.jsonl")?.write(&decoded)?;
    JsonlSink::create(output_dir, "predictions.jsonl")?.write(&predictions)?;

    let scores = ScoreReport::compute(
        &trigger_units(corpus),
        &trigger_units(gold),
        &predictions,
        &argument_units(gold),
    );
    let report = PipelineReport {
        scores,
        tasks: plan.tasks.len(),
        skipped_mentions: plan.skipped,
        discarded_candidates: decoded.iter().map(|d| d.discarded.len()).sum(),
    };
    let report_path = output_dir.join("report.json");
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    std::fs::write(&report_path, json).map_err(io_error(&report_path))?;
    Ok(report)
}
