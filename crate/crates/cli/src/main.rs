use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use qga_core::backend::{default_params, generate_batched, BackendError, ModelKind, OracleBook, ParamOverrides};
use qga_core::corpus::{load_corpus, SentenceRecord};
use qga_core::pipeline::{
    decode_answers, enumerate_tasks, normalize_question, qa_inference_examples, run_pipeline, AnswerRow, BackendSpec,
    PipelineConfig, PipelineError, QuestionRow, DEFAULT_BATCH_SIZE,
};
use qga_core::scoring::{argument_units, rouge1, trigger_units, ArgumentUnit, ScoreReport};
use qga_core::{
    emit_qa_training, emit_qg_example, load_jsonl, load_registry, write_jsonl, Seq2SeqExample, TemplateRegistry,
    DEFAULT_EOS_TOKEN,
};

/// Event argument extraction by question generation and answering.
#[derive(Parser)]
#[command(name = "qga", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build QG examples (input plus gold question) for every (mention, role).
    PrepareQg {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        registry: RegistryArg,
        #[arg(long, value_enum, default_value_t = Mode::Train)]
        mode: Mode,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build QA examples: all candidate questions (train) or generated questions (infer).
    PrepareQa {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        registry: RegistryArg,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Generated questions ({"id","mention","role","question"}); required for infer.
        #[arg(long)]
        questions: Option<PathBuf>,
        #[arg(long, default_value = DEFAULT_EOS_TOKEN)]
        eos_token: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run QG or QA examples through a backend.
    Infer {
        #[arg(long, value_enum)]
        stage: Stage,
        /// Examples produced by prepare-qg or prepare-qa.
        #[arg(long)]
        input: PathBuf,
        /// http(s)://host:port or oracle:<book.jsonl>
        #[arg(long)]
        backend: String,
        #[arg(long, default_value_t = DEFAULT_BATCH_SIZE)]
        batch_size: usize,
        #[arg(long)]
        max_length: Option<u32>,
        #[arg(long)]
        num_beams: Option<u32>,
        #[arg(long, allow_hyphen_values = true)]
        length_penalty: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Turn raw answers ({"id","mention","role","raw"}) into argument predictions.
    Decode {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        answers: PathBuf,
        #[arg(long, default_value = DEFAULT_EOS_TOKEN)]
        eos_token: String,
        /// Also write per-task spans and discarded candidates here.
        #[arg(long)]
        decoded: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score argument predictions against a gold corpus, or questions with ROUGE-1.
    Score {
        /// Prediction rows; with --qg-eval, generated question rows.
        #[arg(long)]
        predictions: PathBuf,
        /// Gold corpus; with --qg-eval, QG examples from prepare-qg.
        #[arg(long)]
        gold: PathBuf,
        /// Corpus whose triggers were used for prediction (defaults to the gold corpus).
        #[arg(long)]
        triggers: Option<PathBuf>,
        #[arg(long)]
        qg_eval: bool,
        #[arg(long, default_value = DEFAULT_EOS_TOKEN)]
        eos_token: String,
        /// Write the machine-readable report here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run QG, QA, decoding and scoring as configured.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write an oracle book answering every task with gold questions and answers.
    OracleBook {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        registry: RegistryArg,
        #[arg(long, default_value = DEFAULT_EOS_TOKEN)]
        eos_token: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct RegistryArg {
    /// Template registry JSON (defaults to the built-in ACE templates).
    #[arg(long = "registry")]
    path: Option<PathBuf>,
}

impl RegistryArg {
    fn load(&self) -> Result<TemplateRegistry> {
        match &self.path {
            Some(path) => Ok(load_registry(path)?),
            None => Ok(TemplateRegistry::ace()),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Stage {
    Qg,
    Qa,
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_rows<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<()> {
    let mut out = open_output(path)?;
    write_jsonl(&mut out, rows)?;
    out.flush()?;
    Ok(())
}

fn corpus(path: &Path) -> Result<Vec<SentenceRecord>> {
    load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn prepare_qg(corpus: &[SentenceRecord], registry: &TemplateRegistry, mode: Mode) -> Result<Vec<Seq2SeqExample>> {
    let plan = enumerate_tasks(registry, corpus);
    let mut examples = Vec::with_capacity(plan.tasks.len());
    for task in &plan.tasks {
        let mut example = emit_qg_example(registry, &corpus[task.record], task.mention, &task.role)?;
        if mode == Mode::Infer {
            example.output = None;
        }
        examples.push(example);
    }
    Ok(examples)
}

fn prepare_qa_train(corpus: &[SentenceRecord], registry: &TemplateRegistry) -> Result<Vec<Seq2SeqExample>> {
    let plan = enumerate_tasks(registry, corpus);
    let mut examples = Vec::new();
    for task in &plan.tasks {
        examples.extend(emit_qa_training(registry, &corpus[task.record], task.mention, &task.role)?);
    }
    info!("{} QA examples from {} tasks", examples.len(), plan.tasks.len());
    Ok(examples)
}

fn infer(
    stage: Stage,
    input: &Path,
    backend: &str,
    batch_size: usize,
    overrides: ParamOverrides,
    output: Option<&Path>,
) -> Result<()> {
    let examples: Vec<Seq2SeqExample> = load_jsonl(input)?;
    let spec: BackendSpec = backend.parse().map_err(anyhow::Error::msg)?;
    let backend = spec.build()?;
    let model = match stage {
        Stage::Qg => ModelKind::Qg,
        Stage::Qa => ModelKind::Qa,
    };
    let params = default_params(model).with_overrides(&overrides);
    let inputs: Vec<String> = examples.iter().map(|e| e.input.clone()).collect();
    let outputs = if inputs.is_empty() {
        Vec::new()
    } else {
        generate_batched(&backend, model, &inputs, params, batch_size)?
    };
    match stage {
        Stage::Qg => {
            let rows: Vec<QuestionRow> = examples
                .iter()
                .zip(outputs)
                .map(|(e, question)| QuestionRow {
                    id: e.id.clone(),
                    mention: e.meta.mention,
                    role: e.role.clone(),
                    question,
                })
                .collect();
            write_rows(output, &rows)
        }
        Stage::Qa => {
            let rows: Vec<AnswerRow> = examples
                .iter()
                .zip(outputs)
                .map(|(e, raw)| AnswerRow {
                    id: e.id.clone(),
                    mention: e.meta.mention,
                    role: e.role.clone(),
                    raw,
                })
                .collect();
            write_rows(output, &rows)
        }
    }
}

#[derive(Serialize)]
struct QgEval {
    rouge1: f64,
    count: usize,
}

fn qg_eval(predictions: &Path, references: &Path, eos_token: &str) -> Result<QgEval> {
    let questions: Vec<QuestionRow> = load_jsonl(predictions)?;
    let examples: Vec<Seq2SeqExample> = load_jsonl(references)?;
    let mut gold: HashMap<(&str, usize, &str), &str> = HashMap::new();
    for e in &examples {
        let Some(output) = e.output.as_deref() else {
            bail!("reference {} / {} has no output question", e.id, e.role);
        };
        gold.insert((e.id.as_str(), e.meta.mention, e.role.as_str()), output);
    }
    let mut total = 0.0;
    for q in &questions {
        let Some(reference) = gold.get(&(q.id.as_str(), q.mention, q.role.as_str())) else {
            bail!("no reference question for {} mention {} role {}", q.id, q.mention, q.role);
        };
        let candidate = normalize_question(&q.question, eos_token).unwrap_or_default();
        total += rouge1(&candidate, reference);
    }
    let count = questions.len();
    Ok(QgEval {
        rouge1: if count == 0 { 0.0 } else { total / count as f64 },
        count,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    std::fs::write(path, json).with_context(|| format!("cannot write {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::PrepareQg {
            corpus: path,
            registry,
            mode,
            output,
        } => {
            let examples = prepare_qg(&corpus(&path)?, &registry.load()?, mode)?;
            write_rows(output.as_deref(), &examples)
        }
        Command::PrepareQa {
            corpus: path,
            registry,
            mode,
            questions,
            eos_token,
            output,
        } => {
            let records = corpus(&path)?;
            let examples = match (mode, questions) {
                (Mode::Train, None) => prepare_qa_train(&records, &registry.load()?)?,
                (Mode::Train, Some(_)) => bail!("--questions is only used with --mode infer"),
                (Mode::Infer, Some(q)) => {
                    let rows: Vec<QuestionRow> = load_jsonl(&q)?;
                    qa_inference_examples(&records, &rows, &eos_token)?
                }
                (Mode::Infer, None) => bail!("--mode infer needs --questions"),
            };
            write_rows(output.as_deref(), &examples)
        }
        Command::Infer {
            stage,
            input,
            backend,
            batch_size,
            max_length,
            num_beams,
            length_penalty,
            output,
        } => {
            let overrides = ParamOverrides {
                max_length,
                num_beams,
                length_penalty,
            };
            infer(stage, &input, &backend, batch_size, overrides, output.as_deref())
        }
        Command::Decode {
            corpus: path,
            answers,
            eos_token,
            decoded,
            output,
        } => {
            let answers: Vec<AnswerRow> = load_jsonl(&answers)?;
            let (rows, predictions) = decode_answers(&corpus(&path)?, &answers, &eos_token)?;
            if let Some(decoded) = decoded {
                write_rows(Some(&decoded), &rows)?;
            }
            let discarded: usize = rows.iter().map(|r| r.discarded.len()).sum();
            info!("{} spans decoded, {discarded} candidates discarded", predictions.len());
            write_rows(output.as_deref(), &predictions)
        }
        Command::Score {
            predictions,
            gold,
            triggers,
            qg_eval: true,
            eos_token,
            json,
        } => {
            if triggers.is_some() {
                bail!("--triggers does not apply to --qg-eval");
            }
            let eval = qg_eval(&predictions, &gold, &eos_token)?;
            println!("ROUGE-1 {:.2} over {} questions", eval.rouge1 * 100.0, eval.count);
            if let Some(path) = json {
                write_json(&path, &eval)?;
            }
            Ok(())
        }
        Command::Score {
            predictions,
            gold,
            triggers,
            qg_eval: false,
            json,
            ..
        } => {
            let predictions: Vec<ArgumentUnit> = load_jsonl(&predictions)?;
            let gold = corpus(&gold)?;
            let predicted_triggers = match triggers {
                Some(path) => trigger_units(&corpus(&path)?),
                None => trigger_units(&gold),
            };
            let report = ScoreReport::compute(&predicted_triggers, &trigger_units(&gold), &predictions, &argument_units(&gold));
            print!("{report}");
            if let Some(path) = json {
                write_json(&path, &report)?;
            }
            Ok(())
        }
        Command::Pipeline { config } => {
            let config = PipelineConfig::load(&config)?;
            let report = run_pipeline(&config)?;
            print!("{}", report.scores);
            println!(
                "{} tasks, {} mentions skipped, {} answer candidates discarded; artifacts in {}",
                report.tasks,
                report.skipped_mentions.len(),
                report.discarded_candidates,
                config.output_dir.display()
            );
            Ok(())
        }
        Command::OracleBook {
            corpus: path,
            registry,
            eos_token,
            output,
        } => {
            let book = OracleBook::from_gold(&registry.load()?, &corpus(&path)?, &eos_token)?;
            let mut out = open_output(output.as_deref())?;
            book.write(&mut out)?;
            out.flush()?;
            info!("{} oracle entries", book.len());
            Ok(())
        }
    }
}

/// The error chain, skipping causes already quoted by the message before them.
fn describe(err: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if parts.last().is_some_and(|prev| prev.ends_with(&text)) {
            continue;
        }
        parts.push(text);
    }
    parts.join(": ")
}

/// 2 when a backend failed anywhere in the error chain, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let backend = err.chain().any(|cause| {
        cause.is::<BackendError>() || matches!(cause.downcast_ref::<PipelineError>(), Some(PipelineError::Backend(_)))
    });
    if backend {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return ExitCode::from(if err.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
