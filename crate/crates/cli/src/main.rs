use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use phrasesum::corpus::{corpus_stats, load_corpus, CellKey, CorpusError, PromptKind, ReflectionCorpus};
use phrasesum::evalmetrics::PrfScore;
use phrasesum::extractor::{evaluate_extraction, gold_spans, CrfModel, PhraseExtractor};
use phrasesum::pipeline::experiments::{crossval_extraction, mean_prf};
use phrasesum::pipeline::{
    build_lsa_table, load_resources, run_crossval, summarize, summary_from_json, summary_scores, train_models,
    MetricKind, PipelineConfig, PipelineError, ReportFormat, TrainedModels,
};
use phrasesum::similarity::{build_lsa, build_pair_training_set, text_documents, train_similarity, SimilarityModel};

#[derive(Parser)]
#[command(name = "phrasesum", version, about = "Phrase summaries of student responses with supporter counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Responses JSONL.
    #[arg(long)]
    corpus: PathBuf,
    /// Annotations JSONL.
    #[arg(long)]
    annotations: PathBuf,
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for fold-level parallelism.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and print its statistics.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the CRF phrase extractor on every annotated lecture.
    TrainExtractor {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Extract candidate phrases with a trained extractor.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        lecture: Option<String>,
        #[arg(long)]
        prompt: Option<PromptKind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact-match extraction scores: a given model, or leave-one-lecture-out
    /// CRF versus the noun-phrase baseline.
    EvalExtraction {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the similarity ensemble on highlight pairs.
    TrainSimilarity {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build LSA word vectors from the corpus or a background text file.
    BuildLsa {
        #[command(flatten)]
        common: Common,
        /// Plain text, one document per line.
        #[arg(long)]
        background: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize one lecture (both prompts unless one is given).
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lecture: String,
        #[arg(long)]
        prompt: Option<PromptKind>,
        /// System variant; overrides the configuration.
        #[arg(long)]
        system: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-lecture-out cross-validation of all configured variants.
    Crossval {
        #[command(flatten)]
        common: Common,
        /// Output directory for report.tsv, report.json and report.md.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score summary JSON files against the annotations.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Summary JSON files (one summary or an array each).
        #[arg(long, required = true, num_args = 1..)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Errors split by exit code.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e = e.into();
        if is_validation(&e) {
            Failure::Validation(e)
        } else {
            Failure::Runtime(e)
        }
    }
}

fn is_validation(e: &anyhow::Error) -> bool {
    if e.downcast_ref::<CorpusError>().is_some() {
        return true;
    }
    match e.downcast_ref::<PipelineError>() {
        Some(p) => pipeline_validation(p),
        None => false,
    }
}

fn pipeline_validation(e: &PipelineError) -> bool {
    match e {
        PipelineError::Corpus(_) | PipelineError::Config(_) | PipelineError::TooFewLectures(_) => true,
        PipelineError::Fold { error, .. } => pipeline_validation(error),
        _ => false,
    }
}

type Result<T> = std::result::Result<T, Failure>;

struct RunContext {
    corpus: ReflectionCorpus,
    config: PipelineConfig,
    jobs: usize,
}

fn setup(common: &Common) -> Result<RunContext> {
    let corpus = load_corpus(&common.corpus, &common.annotations)?;
    let mut config = match &common.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.validate()?;
    let jobs = common
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok(RunContext { corpus, config, jobs })
}

fn output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(text.as_bytes()).context("writing stdout")?;
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn selected_cells(corpus: &ReflectionCorpus, lecture: Option<&str>, prompt: Option<PromptKind>) -> Result<Vec<CellKey>> {
    if let Some(l) = lecture {
        if !corpus.lecture_ids().iter().any(|x| x == l) {
            return Err(PipelineError::Config(format!("unknown lecture {l:?}")).into());
        }
    }
    Ok(corpus
        .cells()
        .into_iter()
        .filter(|c| lecture.is_none_or(|l| c.lecture_id == l) && prompt.is_none_or(|p| c.prompt == p))
        .collect())
}

fn prf_line(label: &str, s: &PrfScore) -> String {
    format!("{label}\t{:.3}\t{:.3}\t{:.3}\n", s.p, s.r, s.f)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { common, out } => {
            let ctx = setup(&common)?;
            let stats = corpus_stats(&ctx.corpus)?;
            let mut text = serde_json::to_string_pretty(&stats).context("serializing stats")?;
            text.push('\n');
            output(out.as_deref(), &text)
        }
        Command::TrainExtractor { common, out } => {
            let ctx = setup(&common)?;
            let (extractor, trace) = PhraseExtractor::train(&ctx.corpus, ctx.config.crf_config())?;
            log::info!("trained in {} iterations (converged: {})", trace.iterations, trace.converged);
            let mut w = create(&out)?;
            extractor.model.write(&mut w).context("writing model")?;
            w.flush().context("writing model")?;
            Ok(())
        }
        Command::Extract {
            common,
            model,
            lecture,
            prompt,
            out,
        } => {
            let ctx = setup(&common)?;
            let extractor = PhraseExtractor {
                model: CrfModel::read(open(&model)?)?,
            };
            let mut text = String::new();
            for cell in selected_cells(&ctx.corpus, lecture.as_deref(), prompt)? {
                for p in extractor.extract_cell(&ctx.corpus, &cell) {
                    let line = serde_json::json!({
                        "lecture_id": p.response.lecture_id,
                        "prompt": p.response.prompt,
                        "student_id": p.response.student_id,
                        "span": [p.span.start, p.span.end],
                        "text": p.text(),
                    });
                    text.push_str(&line.to_string());
                    text.push('\n');
                }
            }
            output(out.as_deref(), &text)
        }
        Command::EvalExtraction { common, model, out } => {
            let ctx = setup(&common)?;
            let mut text = String::from("lecture\tsystem\tP\tR\tF\n");
            match model {
                Some(path) => {
                    let extractor = PhraseExtractor {
                        model: CrfModel::read(open(&path)?)?,
                    };
                    let mut all = Vec::new();
                    for cell in ctx.corpus.cells() {
                        if ctx.corpus.annotations(&cell).is_empty() {
                            continue;
                        }
                        let gold = gold_spans(&ctx.corpus, &cell)?;
                        let s = evaluate_extraction(&extractor.extract_cell(&ctx.corpus, &cell), &gold);
                        text.push_str(&prf_line(&format!("{}:{}\tcrf", cell.lecture_id, cell.prompt), &s));
                        all.push(s);
                    }
                    text.push_str(&prf_line("ALL\tcrf", &mean_prf(all)));
                }
                None => {
                    let folds = crossval_extraction(&ctx.corpus, &ctx.config, ctx.jobs)?;
                    for f in &folds {
                        text.push_str(&prf_line(&format!("{}\tcrf", f.lecture_id), &f.system));
                        if let Some(b) = &f.baseline {
                            text.push_str(&prf_line(&format!("{}\tnp_chunk", f.lecture_id), b));
                        }
                    }
                    text.push_str(&prf_line("ALL\tcrf", &mean_prf(folds.iter().map(|f| f.system))));
                    if folds.iter().all(|f| f.baseline.is_some()) {
                        text.push_str(&prf_line("ALL\tnp_chunk", &mean_prf(folds.iter().filter_map(|f| f.baseline))));
                    }
                }
            }
            output(out.as_deref(), &text)
        }
        Command::TrainSimilarity { common, out } => {
            let ctx = setup(&common)?;
            let mut resources = load_resources(&ctx.config.paths)?;
            resources.lsa = Some(Arc::new(build_lsa_table(&ctx.corpus, &ctx.config)?));
            let pairs = build_pair_training_set(&ctx.corpus);
            let (model, trace) = train_similarity(&pairs, &resources, ctx.config.svm_config())?;
            log::info!(
                "{} pairs, final objective {:.4}",
                pairs.len(),
                trace.objective.last().copied().unwrap_or(f64::NAN)
            );
            let mut w = create(&out)?;
            model.write(&mut w).context("writing model")?;
            w.flush().context("writing model")?;
            Ok(())
        }
        Command::BuildLsa {
            common,
            background,
            dim,
            out,
        } => {
            let ctx = setup(&common)?;
            let k = dim.unwrap_or(ctx.config.lsa_dim);
            let docs = match background {
                Some(p) => text_documents(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?),
                None => phrasesum::similarity::corpus_documents(&ctx.corpus),
            };
            let space = build_lsa(&docs, k, &ctx.config.svd_config())?;
            let mut w = create(&out)?;
            space.table.write(&mut w).context("writing vectors")?;
            w.flush().context("writing vectors")?;
            Ok(())
        }
        Command::Summarize {
            common,
            lecture,
            prompt,
            system,
            out,
        } => {
            let mut ctx = setup(&common)?;
            if let Some(s) = system {
                ctx.config.variant = s.parse()?;
            }
            let cells = selected_cells(&ctx.corpus, Some(&lecture), prompt)?;
            let models = summarize_models(&ctx, &lecture)?;
            let mut summaries = Vec::new();
            for cell in &cells {
                let s = summarize(&ctx.corpus, cell, ctx.config.variant, &models, &ctx.config)?;
                eprint!("{} {}\n{}", cell.lecture_id, cell.prompt, s.render_text());
                summaries.push(s.to_json());
            }
            let mut text = serde_json::to_string_pretty(&summaries).context("serializing summaries")?;
            text.push('\n');
            output(out.as_deref(), &text)
        }
        Command::Crossval { common, out } => {
            let ctx = setup(&common)?;
            let report = run_crossval(&ctx.corpus, &ctx.config, ctx.jobs)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (name, format) in [
                ("report.tsv", ReportFormat::Tsv),
                ("report.json", ReportFormat::Json),
                ("report.md", ReportFormat::Markdown),
            ] {
                output(Some(&out.join(name)), &format.render(&report))?;
            }
            print!("{}", ReportFormat::Markdown.render(&report));
            Ok(())
        }
        Command::Eval { common, summaries, out } => {
            let ctx = setup(&common)?;
            let mut text = String::from("course\tlecture\tprompt\tsystem\tmetric\tP\tR\tF\n");
            for path in summaries {
                let raw = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                let value: serde_json::Value =
                    serde_json::from_str(&raw).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
                let items = match value {
                    serde_json::Value::Array(a) => a,
                    v => vec![v],
                };
                for item in items {
                    let summary = summary_from_json(&item, &ctx.corpus)?;
                    let cell = CellKey::new(summary.lecture_id.clone(), summary.prompt);
                    let (scores, _) = summary_scores(&summary, ctx.corpus.annotations(&cell))?;
                    for metric in MetricKind::ALL {
                        let s = scores[&metric];
                        text.push_str(&format!(
                            "{}\t{}\t{}\t{}\t{}\t{:.3}\t{:.3}\t{:.3}\n",
                            ctx.corpus.course_id(),
                            summary.lecture_id,
                            summary.prompt,
                            summary.system,
                            metric.name(),
                            s.p,
                            s.r,
                            s.f
                        ));
                    }
                }
            }
            output(out.as_deref(), &text)
        }
    }
}

/// Models for summarizing `lecture`: pretrained files when configured,
/// otherwise trained on the remaining lectures (or all of them when the
/// corpus has only one).
fn summarize_models(ctx: &RunContext, lecture: &str) -> Result<TrainedModels> {
    let variant = ctx.config.variant;
    let mut resources = load_resources(&ctx.config.paths)?;
    if variant.uses_lsa() {
        resources.lsa = Some(Arc::new(build_lsa_table(&ctx.corpus, &ctx.config)?));
    }
    let train = if ctx.corpus.lecture_ids().len() > 1 {
        ctx.corpus.without_lecture(lecture)
    } else {
        ctx.corpus.clone()
    };
    let paths = &ctx.config.paths;
    let need_training = (variant.uses_crf() && paths.extractor_model.is_none())
        || (variant.uses_learned_similarity() && paths.similarity_model.is_none());
    let mut models = if need_training {
        train_models(&train, &[variant], &resources, &ctx.config)?
    } else {
        TrainedModels {
            resources: resources.clone(),
            ..Default::default()
        }
    };
    if let Some(p) = &paths.extractor_model {
        models.extractor = Some(PhraseExtractor {
            model: CrfModel::read(open(p)?)?,
        });
    }
    if let Some(p) = &paths.similarity_model {
        models.similarity = Some(SimilarityModel::read(open(p)?)?);
    }
    Ok(models)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
