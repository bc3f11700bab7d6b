//! Command line entry points for ingestion, catalog inspection, exemplar
//! indexing, evaluation and serving.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use gtfs_chat_core::catalog::{describe_database, render_prompt, Annotations, PromptDocument};
use gtfs_chat_core::config::ServiceConfig;
use gtfs_chat_core::db::open_read_only;
use gtfs_chat_core::eval::{
    draft_gold, expand_templates, grade, read_json, run_suite, summarize, write_json, ExpandConfig,
    GoldEntry, GoldResults, HttpChatClient, ParaphraseMode, RepeatPlan, RunStore, SuiteOptions,
    TemplateId, DEFAULT_SCALAR_TOLERANCE,
};
use gtfs_chat_core::exemplars::{
    index_path_for, load_exemplars, parse_exemplars, SimilarityIndex, DEFAULT_EXEMPLARS,
};
use gtfs_chat_core::guard::SqlGuard;
use gtfs_chat_core::ingest::{ingest, FeedSource};
use gtfs_chat_core::provider::Providers;

#[derive(Debug, Parser)]
#[command(
    name = "gtfs-chat",
    version,
    about = "Natural-language questions over GTFS transit data"
)]
pub struct Cli {
    /// Service configuration file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the transit database from GTFS feeds.
    Ingest(IngestArgs),
    #[command(subcommand)]
    Catalog(CatalogCommand),
    #[command(subcommand)]
    Exemplars(ExemplarCommand),
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Feed directory; pair each with a --tag, in order.
    #[arg(long = "feed", required = true)]
    pub feeds: Vec<PathBuf>,
    /// Agency tag for the feed at the same position.
    #[arg(long = "tag", required = true)]
    pub tags: Vec<String>,
    /// GeoJSON FeatureCollection of municipality polygons.
    #[arg(long)]
    pub municipalities: PathBuf,
    #[arg(long)]
    pub db: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum CatalogCommand {
    /// Print the prompt the SQL generator sees.
    Render {
        #[arg(long)]
        db: PathBuf,
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExemplarCommand {
    /// Validate the exemplars and embed them next to the exemplar file.
    BuildIndex {
        #[arg(long)]
        db: PathBuf,
        /// Exemplar file; defaults to the configured one.
        #[arg(long)]
        exemplars: Option<PathBuf>,
        /// Output path; defaults to `<exemplars>.index.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct StoreArg {
    /// Run store database; defaults to the configured one.
    #[arg(long)]
    pub store: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Generate questions from the templates and draft their gold queries.
    Expand {
        #[arg(long)]
        db: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        t1: Option<usize>,
        #[arg(long)]
        t2: Option<usize>,
        #[arg(long)]
        t3: Option<usize>,
        #[arg(long)]
        rider_probability: Option<f64>,
        #[arg(long)]
        invalid_probability: Option<f64>,
        /// Let the configured provider paraphrase each question.
        #[arg(long)]
        paraphrase: bool,
        /// Also write the questions to this JSON file.
        #[arg(long)]
        questions_out: Option<PathBuf>,
        /// Also write the drafted gold queries to this JSON file for review.
        #[arg(long)]
        gold_out: Option<PathBuf>,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Replace the stored gold queries with a reviewed JSON file.
    ImportGold {
        file: PathBuf,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Ask every stored question against a running service.
    Run {
        #[arg(long)]
        endpoint: String,
        #[arg(long, default_value_t = 1, conflicts_with = "plan")]
        repeats: u32,
        /// JSON repeat plan: {"uniform": n} or {"per_question": {"T1-01": 3, ...}}.
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Spread a total number of asks over list questions (T1, T2).
        #[arg(long, requires = "scalar_total", conflicts_with_all = ["plan", "repeats"])]
        list_total: Option<u32>,
        /// Spread a total number of asks over scalar questions (T3).
        #[arg(long, requires = "list_total")]
        scalar_total: Option<u32>,
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        #[arg(long)]
        run_id: Option<String>,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Grade a stored run against the gold queries.
    Grade {
        #[arg(long)]
        db: PathBuf,
        /// Run to grade; the latest one by default.
        #[arg(long)]
        run: Option<String>,
        #[arg(long, default_value_t = DEFAULT_SCALAR_TOLERANCE)]
        tolerance: f64,
        #[command(flatten)]
        store: StoreArg,
    },
    /// Summarize the graded outcomes of a run.
    Report {
        #[arg(long)]
        run: Option<String>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
        #[command(flatten)]
        store: StoreArg,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub db: PathBuf,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub host: Option<String>,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ServiceConfig> {
    match path {
        Some(p) => ServiceConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ServiceConfig::default()),
    }
}

fn open_store(config: &ServiceConfig, arg: &StoreArg) -> anyhow::Result<RunStore> {
    let path = arg.store.as_deref().unwrap_or(&config.server.store);
    RunStore::open(path).with_context(|| format!("opening run store {}", path.display()))
}

fn resolve_run(store: &RunStore, run: Option<String>) -> anyhow::Result<String> {
    match run {
        Some(id) => Ok(id),
        None => store
            .latest_run_id()?
            .context("the run store holds no runs"),
    }
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(cli.config.as_deref())?;
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Ingest(args) => {
            if args.feeds.len() != args.tags.len() {
                bail!(
                    "{} --feed but {} --tag arguments",
                    args.feeds.len(),
                    args.tags.len()
                );
            }
            let feeds: Vec<FeedSource> = args
                .feeds
                .iter()
                .zip(&args.tags)
                .map(|(dir, tag)| FeedSource::new(dir, tag.as_str()))
                .collect();
            let summary = ingest(&feeds, &args.municipalities, &args.db)?;
            for (tag, counts) in &summary.counts {
                let counts: Vec<String> = counts
                    .iter()
                    .map(|(table, n)| format!("{table}={n}"))
                    .collect();
                writeln!(out, "{tag}: {}", counts.join(" "))?;
            }
            writeln!(
                out,
                "stops assigned to a municipality: {}",
                summary.assignment.matched
            )?;
            if !summary.assignment.unmatched.is_empty() {
                writeln!(
                    out,
                    "stops outside every municipality: {}",
                    summary.assignment.unmatched.len()
                )?;
            }
            for issue in &summary.row_issues {
                writeln!(
                    out,
                    "skipped {}:{}: {}",
                    issue.file, issue.line, issue.message
                )?;
            }
            writeln!(out, "wrote {}", args.db.display())?;
        }
        Command::Catalog(CatalogCommand::Render { db, annotations }) => {
            let annotations = match annotations {
                Some(path) => Annotations::load(&path)?,
                None => Annotations::builtin(),
            };
            let conn = open_read_only(&db)?;
            let (catalog, warnings) = describe_database(&conn, &annotations)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            write!(
                out,
                "{}",
                render_prompt(&PromptDocument::new(&catalog, config.agent.rule_set()))
            )?;
        }
        Command::Exemplars(ExemplarCommand::BuildIndex {
            db,
            exemplars,
            out: target,
        }) => {
            let conn = open_read_only(&db)?;
            let (catalog, _) = describe_database(&conn, &Annotations::builtin())?;
            let guard = SqlGuard::new(catalog)?;
            let source = exemplars.or(config.exemplars.clone());
            let pairs = match &source {
                Some(path) => load_exemplars(path, &guard)?,
                None => parse_exemplars(DEFAULT_EXEMPLARS, &guard)?,
            };
            let target = match (target, &source) {
                (Some(t), _) => t,
                (None, Some(s)) => index_path_for(s),
                (None, None) => bail!("the shipped exemplars are embedded at startup; pass --out to write an index anyway"),
            };
            let providers = Providers::from_config(&config.provider)?;
            let index = SimilarityIndex::build(&pairs, providers.embedding.as_ref())?;
            index.save(&target)?;
            writeln!(
                out,
                "indexed {} exemplars with {} into {}",
                pairs.len(),
                index.provider_id,
                target.display()
            )?;
        }
        Command::Eval(cmd) => eval(cmd, &config, &mut out)?,
        Command::Serve(args) => {
            let mut config = config;
            if let Some(port) = args.port {
                config.server.port = port;
            }
            if let Some(host) = args.host {
                config.server.host = host;
            }
            let state = gtfs_chat_server::AppState::open(&args.db, &config)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(gtfs_chat_server::serve(state))?;
        }
    }
    Ok(())
}

fn eval(cmd: EvalCommand, config: &ServiceConfig, out: &mut impl Write) -> anyhow::Result<()> {
    match cmd {
        EvalCommand::Expand {
            db,
            seed,
            t1,
            t2,
            t3,
            rider_probability,
            invalid_probability,
            paraphrase,
            questions_out,
            gold_out,
            store,
        } => {
            let mut cfg = ExpandConfig {
                seed,
                ..Default::default()
            };
            for (id, n) in [
                (TemplateId::T1, t1),
                (TemplateId::T2, t2),
                (TemplateId::T3, t3),
            ] {
                if let Some(n) = n {
                    cfg.counts.insert(id, n);
                }
            }
            if let Some(p) = rider_probability {
                cfg.rider_probability = p;
            }
            if let Some(p) = invalid_probability {
                cfg.invalid_probability = p;
            }
            let providers = if paraphrase {
                cfg.paraphrase = ParaphraseMode::Provider;
                Some(Providers::from_config(&config.provider)?)
            } else {
                None
            };
            let conn = open_read_only(&db)?;
            let questions = expand_templates(
                &conn,
                &cfg,
                providers.as_ref().map(|p| p.completion.as_ref()),
            )?;
            let gold = draft_gold(&questions);
            let store = open_store(config, &store)?;
            store.save_questions(&questions)?;
            store.save_gold(&gold)?;
            if let Some(path) = questions_out {
                write_json(&path, &questions)?;
            }
            if let Some(path) = gold_out {
                write_json(&path, &gold)?;
            }
            for q in &questions {
                writeln!(out, "{}\t{}", q.id, q.text)?;
            }
        }
        EvalCommand::ImportGold { file, store } => {
            let gold: Vec<GoldEntry> = read_json(&file)?;
            open_store(config, &store)?.save_gold(&gold)?;
            writeln!(out, "stored {} gold queries", gold.len())?;
        }
        EvalCommand::Run {
            endpoint,
            repeats,
            plan,
            list_total,
            scalar_total,
            parallelism,
            run_id,
            store,
        } => {
            let store = open_store(config, &store)?;
            let questions = store.load_questions()?;
            if questions.is_empty() {
                bail!("no stored questions; run `eval expand` first");
            }
            let plan = match (plan, list_total, scalar_total) {
                (Some(path), _, _) => read_json::<RepeatPlan>(&path)?,
                (None, Some(list), Some(scalar)) => {
                    let (lists, scalars): (Vec<_>, Vec<_>) = questions
                        .iter()
                        .cloned()
                        .partition(|q| q.template_id != TemplateId::T3);
                    RepeatPlan::distribute(&[(&lists, list), (&scalars, scalar)])
                }
                _ => RepeatPlan::Uniform(repeats),
            };
            let run_id = run_id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
            let client = HttpChatClient::new(endpoint);
            let run = run_suite(&questions, &client, &plan, SuiteOptions { parallelism });
            store.save_run(
                &run_id,
                &run.records,
                run.partial,
                run.abort_reason.as_deref(),
            )?;
            writeln!(out, "run {run_id}: {} attempts recorded", run.records.len())?;
            if run.partial {
                bail!(
                    "run {run_id} stopped early: {}",
                    run.abort_reason.unwrap_or_default()
                );
            }
        }
        EvalCommand::Grade {
            db,
            run,
            tolerance,
            store,
        } => {
            let store = open_store(config, &store)?;
            let run_id = resolve_run(&store, run)?;
            let records = store.load_run(&run_id)?;
            let conn = open_read_only(&db)?;
            let (catalog, _) = describe_database(&conn, &Annotations::builtin())?;
            let guard = SqlGuard::new(catalog)?;
            let gold = GoldResults::execute(&store.load_gold()?, &guard, &conn)?;
            let outcomes = grade(&records, &gold, tolerance)?;
            store.save_outcomes(&run_id, &outcomes)?;
            writeln!(out, "graded {} attempts of run {run_id}", outcomes.len())?;
        }
        EvalCommand::Report { run, format, store } => {
            let store = open_store(config, &store)?;
            let run_id = resolve_run(&store, run)?;
            let outcomes = store.load_outcomes(&run_id)?;
            if outcomes.is_empty() {
                bail!("run {run_id} has not been graded");
            }
            let summary = summarize(&outcomes);
            match format {
                ReportFormat::Json => writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&summary.to_report_json())?
                )?,
                ReportFormat::Text => write!(out, "{}", summary.to_text())?,
            }
        }
    }
    Ok(())
}
