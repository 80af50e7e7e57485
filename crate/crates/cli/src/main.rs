//! `dockast` — drives the Dockerfile corpus pipeline stage by stage or
//! end to end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dockast_core::abstraction::{abstract_document, AbstractionTable};
use dockast_core::codec::{DecodeOptions, JsonlReader, JsonlWriter};
use dockast_core::corpus::{
    self, deduplicate, ingest, run_pipeline, write_artifacts, Manifest, PipelineConfig,
};
use dockast_core::rules::{bundled_rules, corpus_report, load_rules_file, Report, TreeRule};
use dockast_core::schema::{enrich, rank_commands, SchemaSet};
use dockast_core::shell::expand_run_nodes;
use dockast_core::{DocumentRoot, Parallelism, Rep};

#[derive(Parser)]
#[command(
    name = "dockast",
    version,
    about = "Dockerfile corpus pipeline: nested-language ASTs, schema-parsed commands, abstraction tags, and tree-rule checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Preserve unknown JSONL keys instead of rejecting them.
    #[arg(long, global = true)]
    permissive: bool,

    /// Worker threads for per-file stages (1 = sequential, default = all
    /// cores).
    #[arg(long, global = true)]
    parallelism: Option<usize>,
}

#[derive(Args)]
struct StageIo {
    /// Input JSONL (`.jsonl`, `.jsonl.gz`, `.jsonl.xz`).
    #[arg(long)]
    input: PathBuf,
    /// Output JSONL; a `.gz`/`.xz` suffix selects compression.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest a directory of Dockerfiles, deduplicate, and emit Phase-I
    /// ASTs.
    Parse {
        /// Directory to scan for files whose name contains "dockerfile".
        #[arg(long)]
        input: PathBuf,
        /// Output JSONL for the Phase-I trees.
        #[arg(long)]
        output: PathBuf,
        /// Also write the rejects report here (JSONL).
        #[arg(long)]
        rejects: Option<PathBuf>,
        /// Fix every ingest_time to this Unix epoch for reproducible
        /// output.
        #[arg(long)]
        epoch: Option<i64>,
    },
    /// Parse the embedded shell of every RUN (Phase I -> Phase II).
    Shell(StageIo),
    /// Rewrite known command invocations into SC-* trees (Phase II ->
    /// Phase III).
    Enrich {
        #[command(flatten)]
        io: StageIo,
        /// Directory of `<utility>.yaml` schemas (default: bundled set).
        #[arg(long)]
        schemas: Option<PathBuf>,
    },
    /// Insert abstraction tags on literal values (Phase III ->
    /// abstracted).
    Abstract {
        #[command(flatten)]
        io: StageIo,
        /// Abstraction table file, `NAME<TAB>pattern` per line (default:
        /// bundled table).
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Check tree rules over abstracted gold and corpus streams and print
    /// the violation report.
    Check {
        /// Gold stream (abstracted JSONL).
        #[arg(long)]
        gold: PathBuf,
        /// Corpus stream (abstracted JSONL).
        #[arg(long)]
        corpus: PathBuf,
        /// Rule file (default: bundled rules).
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Exit with status 1 when any violation is found.
        #[arg(long)]
        fail_on_violation: bool,
        /// Emit the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Rank command names by frequency over Phase-II documents.
    Stats {
        /// Input JSONL of Phase-II documents.
        #[arg(long)]
        input: PathBuf,
        /// Number of entries to print.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Run every stage over a directory and write all representation
    /// artifacts.
    Pipeline {
        /// Directory to ingest.
        #[arg(long)]
        input: PathBuf,
        /// Output directory for the artifact tree.
        #[arg(long)]
        output: PathBuf,
        /// Glob over relative paths selecting gold files (e.g.
        /// `gold/**`).
        #[arg(long)]
        gold_marker: Option<String>,
        #[arg(long)]
        schemas: Option<PathBuf>,
        #[arg(long)]
        table: Option<PathBuf>,
        /// Sidecar JSONL with pass-through metadata fields keyed by
        /// file_sha or source_path.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Fix every ingest_time to this Unix epoch for reproducible
        /// output.
        #[arg(long)]
        epoch: Option<i64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let parallelism = match cli.parallelism {
        Some(0) | None => Parallelism::default(),
        Some(1) => Parallelism::Sequential,
        Some(n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .ok();
            Parallelism::default()
        }
    };
    let decode = if cli.permissive {
        DecodeOptions::permissive()
    } else {
        DecodeOptions::default()
    };

    match cli.command {
        Command::Parse {
            input,
            output,
            rejects,
            epoch,
        } => {
            let ingested = ingest(&input, |_| false, epoch)
                .with_context(|| format!("ingesting {}", input.display()))?;
            for (path, why) in &ingested.skipped {
                eprintln!("warning: skipped {}: {why}", path.display());
            }
            let unique = deduplicate(ingested.records);
            let mut writer = open_writer(&output)?;
            let mut reject_rows = Vec::new();
            for record in &unique {
                match corpus::phase1_document(record) {
                    Ok(doc) => writer.write_doc(&doc)?,
                    Err(reason) => reject_rows.push(corpus::Reject {
                        file_sha: record.file_sha.to_string(),
                        source_path: record.source_path.clone(),
                        reason,
                    }),
                }
            }
            writer.finish()?;
            if !reject_rows.is_empty() {
                eprintln!("rejected {} file(s)", reject_rows.len());
                for r in &reject_rows {
                    eprintln!("  {} {} ({})", r.file_sha, r.source_path, r.reason);
                }
            }
            if let Some(path) = rejects {
                let mut out = String::new();
                for r in &reject_rows {
                    out.push_str(&serde_json::to_string(r)?);
                    out.push('\n');
                }
                std::fs::write(&path, out)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Shell(io) => {
            let docs = read_stage(&io.input, Rep::Phase1, decode)?;
            let out = dockast_core::par::map_vec(parallelism, docs, |doc| {
                let expanded = expand_run_nodes(&doc);
                for flag in &expanded.flags {
                    eprintln!(
                        "warning: {}: RUN at {:?} kept as literal: {}",
                        doc.file_sha(),
                        flag.path,
                        flag.error
                    );
                }
                expanded.doc.with_rep(Rep::Phase2)
            });
            write_docs(&io.output, &out)
        }

        Command::Enrich { io, schemas } => {
            let set = match schemas {
                Some(dir) => SchemaSet::load_dir(&dir)
                    .with_context(|| format!("loading schemas from {}", dir.display()))?,
                None => SchemaSet::bundled().clone(),
            };
            let docs = read_stage(&io.input, Rep::Phase2, decode)?;
            let out = dockast_core::par::map_vec(parallelism, docs, |doc| {
                enrich(&doc, &set).doc.with_rep(Rep::Phase3)
            });
            write_docs(&io.output, &out)
        }

        Command::Abstract { io, table } => {
            let table = match table {
                Some(path) => AbstractionTable::load(&path)
                    .with_context(|| format!("loading table {}", path.display()))?,
                None => AbstractionTable::bundled().clone(),
            };
            let docs = read_stage(&io.input, Rep::Phase3, decode)?;
            let out = dockast_core::par::map_vec(parallelism, docs, |doc| {
                abstract_document(&doc, &table).with_rep(Rep::Abstracted)
            });
            write_docs(&io.output, &out)
        }

        Command::Check {
            gold,
            corpus,
            rules,
            fail_on_violation,
            json,
        } => {
            let rules = load_rule_set(rules.as_deref())?;
            let gold_docs = read_stage(&gold, Rep::Abstracted, decode)?;
            let corpus_docs = read_stage(&corpus, Rep::Abstracted, decode)?;
            let report = corpus_report(&gold_docs, &corpus_docs, &rules);
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print_report(&report);
            }
            let total = report.gold.violations + report.corpus.violations;
            if fail_on_violation && total > 0 {
                return Ok(ExitCode::from(1));
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Stats { input, top } => {
            if top == 0 {
                bail!("--top must be at least 1");
            }
            let docs = read_stage(&input, Rep::Phase2, decode)?;
            for (command, count) in rank_commands(&docs, top) {
                println!("{command}\t{count}");
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Pipeline {
            input,
            output,
            gold_marker,
            schemas,
            table,
            manifest,
            epoch,
        } => {
            let matcher = match gold_marker {
                Some(pattern) => Some(
                    globset::Glob::new(&pattern)
                        .with_context(|| format!("invalid gold marker glob `{pattern}`"))?
                        .compile_matcher(),
                ),
                None => None,
            };
            let set = match schemas {
                Some(dir) => SchemaSet::load_dir(&dir)
                    .with_context(|| format!("loading schemas from {}", dir.display()))?,
                None => SchemaSet::bundled().clone(),
            };
            let table = match table {
                Some(path) => AbstractionTable::load(&path)
                    .with_context(|| format!("loading table {}", path.display()))?,
                None => AbstractionTable::bundled().clone(),
            };
            let manifest = match manifest {
                Some(path) => Some(Manifest::load(&path)?),
                None => None,
            };

            let is_gold = |path: &Path| matcher.as_ref().is_some_and(|m| m.is_match(path));
            let ingested = ingest(&input, is_gold, epoch)
                .with_context(|| format!("ingesting {}", input.display()))?;
            for (path, why) in &ingested.skipped {
                eprintln!("warning: skipped {}: {why}", path.display());
            }
            let config = PipelineConfig {
                schemas: &set,
                table: &table,
                manifest: manifest.as_ref(),
                parallelism,
            };
            let result = run_pipeline(ingested.records, &config);
            write_artifacts(&result, &output)
                .with_context(|| format!("writing artifacts under {}", output.display()))?;

            let s = &result.stats;
            eprintln!(
                "gold: {} ingested, {} unique, {} parsed, {} rejected",
                s.gold.ingested, s.gold.unique, s.gold.parsed, s.gold.rejected
            );
            eprintln!(
                "corpus: {} ingested, {} unique, {} parsed, {} rejected",
                s.corpus.ingested, s.corpus.unique, s.corpus.parsed, s.corpus.rejected
            );
            for issue in &result.shell_issues {
                eprintln!(
                    "warning: {} ({}): RUN kept as literal: {}",
                    issue.file_sha, issue.source_path, issue.error
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Reads one stage's JSONL, enforcing the representation marker when
/// present: a line stamped with a different stage is a usage error.
fn read_stage(path: &Path, expected: Rep, decode: DecodeOptions) -> Result<Vec<DocumentRoot>> {
    let reader =
        JsonlReader::open(path, decode).with_context(|| format!("opening {}", path.display()))?;
    let mut docs = Vec::new();
    for item in reader {
        let doc = item.with_context(|| format!("reading {}", path.display()))?;
        if let Some(rep) = doc.rep() {
            if rep != expected {
                bail!(
                    "{}: document {} carries marker {} but this stage consumes {}",
                    path.display(),
                    doc.file_sha(),
                    rep,
                    expected
                );
            }
        }
        docs.push(doc);
    }
    Ok(docs)
}

fn open_writer(path: &Path) -> Result<JsonlWriter> {
    JsonlWriter::create(path).with_context(|| format!("creating {}", path.display()))
}

fn write_docs(path: &Path, docs: &[DocumentRoot]) -> Result<ExitCode> {
    let mut writer = open_writer(path)?;
    for doc in docs {
        writer.write_doc(doc)?;
    }
    writer.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn load_rule_set(path: Option<&Path>) -> Result<Vec<TreeRule>> {
    Ok(match path {
        Some(p) => {
            load_rules_file(p).with_context(|| format!("loading rules from {}", p.display()))?
        }
        None => bundled_rules().to_vec(),
    })
}

fn print_report(report: &Report) {
    let width = report
        .rows
        .iter()
        .map(|r| r.rule_id.len())
        .chain(["rule".len()])
        .max()
        .unwrap_or(4);
    println!(
        "{:<width$}  {:<8}  {:>6}  {:>6}",
        "rule", "severity", "gold", "corpus"
    );
    for row in &report.rows {
        let severity = format!("{:?}", row.severity).to_lowercase();
        println!(
            "{:<width$}  {:<8}  {:>6}  {:>6}",
            row.rule_id, severity, row.gold, row.corpus
        );
    }
    println!(
        "gold:   files={} violations={} mean={:.2}",
        report.gold.files, report.gold.violations, report.gold.mean_per_file
    );
    println!(
        "corpus: files={} violations={} mean={:.2}",
        report.corpus.files, report.corpus.violations, report.corpus.mean_per_file
    );
    match report.ratio {
        Some(r) => println!("corpus/gold ratio: {r:.2}"),
        None => println!("corpus/gold ratio: undefined"),
    }
}
