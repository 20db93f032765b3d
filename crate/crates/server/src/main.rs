use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::{bail, Context};
use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tracing_subscriber::EnvFilter;

use sciqa_core::analytics::{accuracy_report, read_events, usage_report, TimeRange};
use sciqa_core::corpus::{Source, FIRST_EXAM_YEAR, LAST_EXAM_YEAR};
use sciqa_core::embedder::{EmbedderConfig, Provider, DEFAULT_REFERENCE_DIM, DEFAULT_REMOTE_DIM};
use sciqa_core::fixtures;
use sciqa_core::qa::{build_passage_index, build_question_index, AskLog, QaConfig};
use sciqa_core::topics::{
    default_topic_labels, parse_label_list, run_pipeline, topic_distribution, FeaturizerChoice,
    TopicDataset, TopicModel, TrainConfig,
};
use sciqa_core::vindex::{DEFAULT_PASSAGE_THRESHOLD, DEFAULT_QUESTION_THRESHOLD};
use sciqa_server::workspace::{load_state, DataDir};

#[derive(Parser)]
#[command(name = "sciqa", version, about = "Science question answering service")]
struct Cli {
    /// Directory holding the corpus, index snapshots, models and logs.
    #[arg(long, env = "SCIQA_DATA_DIR", default_value = "data", global = true)]
    data_dir: PathBuf,

    #[command(flatten)]
    embed: EmbedArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(
        long,
        env = "EMBED_PROVIDER",
        default_value = "reference",
        global = true
    )]
    embed_provider: String,
    /// Defaults to 256 for the reference provider and 768 for remote.
    #[arg(long, env = "EMBED_DIM", global = true)]
    embed_dim: Option<usize>,
    /// Base URL of the remote embedding service.
    #[arg(long, env = "EMBED_URL", global = true)]
    embed_url: Option<String>,
    #[arg(long, env = "EMBED_TIMEOUT_MS", default_value_t = sciqa_core::embedder::DEFAULT_TIMEOUT_MS, global = true)]
    embed_timeout_ms: u64,
}

impl EmbedArgs {
    fn config(&self) -> anyhow::Result<EmbedderConfig> {
        let provider: Provider = self.embed_provider.parse()?;
        let mut config = match provider {
            Provider::Reference => {
                EmbedderConfig::reference(self.embed_dim.unwrap_or(DEFAULT_REFERENCE_DIM))
            }
            Provider::Remote => {
                let url = self
                    .embed_url
                    .clone()
                    .context("EMBED_URL / --embed-url is required for the remote provider")?;
                EmbedderConfig::remote(url, self.embed_dim.unwrap_or(DEFAULT_REMOTE_DIM))
            }
        };
        config.timeout_ms = self.embed_timeout_ms;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a JSON-lines paragraph file and split it into passages.
    IngestParagraphs {
        file: PathBuf,
        #[arg(long, value_enum, default_value = "textbook-dataset")]
        source: SourceArg,
        /// Figure manifest (JSON lines) to load first.
        #[arg(long)]
        figures: Option<PathBuf>,
    },
    /// Ingest past exam questions from CSV files.
    IngestExams {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Load a topic CSV (columns `topic`, `passage`) as the training set.
    IngestTopics {
        file: PathBuf,
        /// Label list, one per line. Defaults to the built-in 48 topics.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Accept whatever labels the file contains.
        #[arg(long, conflicts_with = "labels")]
        any_labels: bool,
    },
    /// Embed passages and exam questions and write index snapshots.
    BuildIndex,
    /// Train the topic classifier on the ingested topic samples.
    TrainTopics {
        #[arg(long, value_enum, default_value = "tfidf")]
        featurizer: FeaturizerArg,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the held-out confusion matrix here as CSV.
        #[arg(long)]
        confusion_out: Option<PathBuf>,
    },
    /// Assign a topic to every exam question with the trained classifier.
    ClassifyBank,
    /// Print analytics as JSON.
    Report {
        #[arg(long)]
        accuracy: bool,
        #[arg(long)]
        usage: bool,
        #[arg(long)]
        distribution: bool,
        /// Start of the reporting window (RFC 3339).
        #[arg(long)]
        from: Option<DateTime<Utc>>,
        /// End of the reporting window, exclusive (RFC 3339).
        #[arg(long)]
        to: Option<DateTime<Utc>>,
        #[arg(long, default_value_t = FIRST_EXAM_YEAR)]
        from_year: i32,
        #[arg(long, default_value_t = LAST_EXAM_YEAR)]
        to_year: i32,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long, env = "SCIQA_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        #[arg(long, env = "PASSAGE_THRESHOLD", default_value_t = DEFAULT_PASSAGE_THRESHOLD)]
        passage_threshold: f64,
        #[arg(long, env = "QUESTION_THRESHOLD", default_value_t = DEFAULT_QUESTION_THRESHOLD)]
        question_threshold: f64,
    },
    /// Write a synthetic demo corpus (paragraphs, exam CSVs, topic samples).
    GenerateFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        paragraphs: usize,
        #[arg(long, default_value_t = 12)]
        per_section: usize,
        #[arg(long, default_value_t = 20)]
        topic_samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    TextbookDataset,
    SimpleEncyclopedia,
}

impl From<SourceArg> for Source {
    fn from(s: SourceArg) -> Self {
        match s {
            SourceArg::TextbookDataset => Source::TextbookDataset,
            SourceArg::SimpleEncyclopedia => Source::SimpleEncyclopedia,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FeaturizerArg {
    Tfidf,
    Embedding,
}

fn print_json(value: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    let written = serde_json::to_writer_pretty(&mut out, value)
        .map_err(std::io::Error::from)
        .and_then(|()| writeln!(out));
    match written {
        // The reader went away (e.g. piped into `head`).
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let dir = DataDir::new(&cli.data_dir);
    if !matches!(cli.command, Command::GenerateFixtures { .. }) {
        fs::create_dir_all(dir.root())
            .with_context(|| format!("creating {}", dir.root().display()))?;
    }

    match cli.command {
        Command::IngestParagraphs {
            file,
            source,
            figures,
        } => {
            let mut store = dir.open_corpus()?;
            let mut figure_count = 0;
            if let Some(f) = figures {
                figure_count = store.ingest_figures(&f)?.figures;
            }
            let mut report = store.ingest_paragraphs(&file, source.into())?;
            report.figures = figure_count;
            for r in &report.rejected {
                tracing::warn!("{}:{}: {}", file.display(), r.line, r.reason);
            }
            dir.save_corpus(&store)?;
            print_json(&report)?;
        }
        Command::IngestExams { files } => {
            let mut store = dir.open_corpus()?;
            let mut reports = Vec::new();
            for f in &files {
                let report = store.ingest_exam_csv(f)?;
                for r in &report.rejected {
                    tracing::warn!("{}:{}: {}", f.display(), r.line, r.reason);
                }
                reports.push(json!({ "file": f.display().to_string(), "report": report }));
            }
            dir.save_corpus(&store)?;
            print_json(&reports)?;
        }
        Command::IngestTopics {
            file,
            labels,
            any_labels,
        } => {
            let label_set = if any_labels {
                None
            } else if let Some(path) = labels {
                let text = fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                Some(parse_label_list(&text))
            } else {
                Some(default_topic_labels())
            };
            let data = TopicDataset::from_csv(&file, label_set)?;
            data.to_csv(dir.topic_dataset())?;
            let counts: Vec<_> = data.labels().iter().zip(data.class_counts()).collect();
            print_json(
                &json!({ "samples": data.len(), "labels": data.labels().len(), "class_counts": counts }),
            )?;
        }
        Command::BuildIndex => {
            let embedder = cli.embed.config()?.build()?;
            let store = dir.open_corpus()?;
            let passages = build_passage_index(&store, embedder.as_ref())?;
            passages.save(dir.passage_index())?;
            let questions = build_question_index(&store, embedder.as_ref())?;
            questions.save(dir.question_index())?;
            print_json(&json!({
                "passages": passages.len(),
                "questions": questions.len(),
                "dim": passages.dim(),
            }))?;
        }
        Command::TrainTopics {
            featurizer,
            seed,
            confusion_out,
        } => {
            let path = dir.topic_dataset();
            if !path.exists() {
                bail!(
                    "topic samples {} not found; run ingest-topics first",
                    path.display()
                );
            }
            // The stored file already passed label checks at ingest time.
            let data = TopicDataset::from_csv(&path, None)?;
            let choice = match featurizer {
                FeaturizerArg::Tfidf => FeaturizerChoice::Tfidf,
                FeaturizerArg::Embedding => FeaturizerChoice::embedding(cli.embed.config()?),
            };
            let config = TrainConfig {
                seed,
                ..TrainConfig::default()
            };
            let report = run_pipeline(&data, &choice, &config)?;
            report.final_model.save(dir.topic_model())?;
            if let Some(out) = confusion_out {
                fs::write(&out, report.holdout.confusion.to_csv())
                    .with_context(|| format!("writing {}", out.display()))?;
            }
            let recalls: Vec<_> = report
                .holdout
                .confusion
                .labels()
                .iter()
                .zip(&report.holdout.recalls)
                .collect();
            print_json(&json!({
                "train_size": report.train_size,
                "test_size": report.test_size,
                "cv": report.cv,
                "holdout_uar": report.holdout.uar,
                "recalls": recalls,
                "warnings": report.holdout.warnings,
                "model": dir.topic_model().display().to_string(),
            }))?;
        }
        Command::ClassifyBank => {
            let path = dir.topic_model();
            let model =
                TopicModel::load(&path).with_context(|| format!("loading {}", path.display()))?;
            let mut store = dir.open_corpus()?;
            let (ids, texts): (Vec<String>, Vec<String>) = store
                .questions()
                .map(|q| (q.id.clone(), q.text.clone()))
                .unzip();
            let predictions = model.predict_batch(&texts)?;
            for (id, p) in ids.iter().zip(predictions) {
                store.set_topic(id, Some(p.label))?;
            }
            dir.save_corpus(&store)?;
            print_json(&json!({ "classified": ids.len() }))?;
        }
        Command::Report {
            accuracy,
            usage,
            distribution,
            from,
            to,
            from_year,
            to_year,
        } => {
            if !(accuracy || usage || distribution) {
                bail!("choose at least one of --accuracy, --usage, --distribution");
            }
            let range = TimeRange { from, to };
            let events = if dir.event_log().exists() {
                read_events(&dir.event_log())
                    .map_err(|e| anyhow::anyhow!("{}: {e}", dir.event_log().display()))?
            } else {
                Vec::new()
            };
            let mut out = serde_json::Map::new();
            if accuracy {
                let windowed: Vec<_> = events
                    .iter()
                    .filter(|e| match e {
                        sciqa_core::analytics::Event::Feedback(f) => range.contains(f.ts),
                        _ => false,
                    })
                    .cloned()
                    .collect();
                out.insert(
                    "accuracy".into(),
                    serde_json::to_value(accuracy_report(&windowed))?,
                );
            }
            if usage {
                let asked = AskLog::open(dir.ask_log())?.count_between(from, to);
                out.insert(
                    "usage".into(),
                    serde_json::to_value(usage_report(&events, range, asked))?,
                );
            }
            if distribution {
                let store = dir.open_corpus()?;
                let shares = topic_distribution(store.questions(), from_year..=to_year);
                out.insert("distribution".into(), serde_json::to_value(shares)?);
            }
            print_json(&out)?;
        }
        Command::Serve {
            addr,
            passage_threshold,
            question_threshold,
        } => {
            let qa = QaConfig {
                passage_threshold,
                question_threshold,
            };
            let state = load_state(&dir, &cli.embed.config()?, qa)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                tracing::info!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, sciqa_server::router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
        Command::GenerateFixtures {
            out,
            paragraphs,
            per_section,
            topic_samples,
            seed,
        } => {
            let exams = out.join("exams");
            fs::create_dir_all(&exams).with_context(|| format!("creating {}", exams.display()))?;
            fs::write(
                out.join("paragraphs.jsonl"),
                fixtures::paragraph_jsonl(paragraphs, 5, seed),
            )?;
            fs::write(
                out.join("figures.jsonl"),
                fixtures::figure_jsonl(paragraphs),
            )?;
            let (files, _) = fixtures::exam_csvs(per_section, seed);
            for (year, csv) in &files {
                fs::write(exams.join(format!("{year}.csv")), csv)?;
            }
            let samples = fixtures::separable_topic_samples(topic_samples, seed);
            let data = TopicDataset::new(samples, Some(default_topic_labels()))?;
            data.to_csv(out.join("topic_samples.csv"))?;
            print_json(&json!({
                "paragraphs": paragraphs,
                "exam_files": files.len(),
                "topic_samples": data.len(),
                "out": out.display().to_string(),
            }))?;
        }
    }
    Ok(())
}
