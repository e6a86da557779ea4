//! Command-line entry point for the benchmark pipeline.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use solvbench::adversarial::{
    inject, select_clean_samples, MutationSpec, SnippetKind, SnippetLibrary,
};
use solvbench::annotate::{
    cohen_kappa, consensus_vote_all, ingest_detector_report, read_findings, read_labels,
    sample_for_review, write_jsonl, AnnotatorLabels, LabelRecord,
};
use solvbench::corpus::{corpus_stats, load_samples, ContractSample, ManifestRecord};
use solvbench::pipeline::{
    ingest_human_eval, load_bundle, render_tables, run_benchmark, score_records, BundleRecord,
    RunConfig, TableFormat,
};
use solvbench::prompts::parse_verdict;
use solvbench::taxonomy::{TaxonomyConfig, VulnClass};

#[derive(Parser)]
#[command(
    name = "solvbench",
    version,
    about = "LLM benchmark pipeline for Solidity vulnerability detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus ingestion and statistics.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Findings normalization, consensus voting, agreement, review subsets.
    #[command(subcommand)]
    Annotate(AnnotateCommand),
    /// Build adversarial mutants from clean samples.
    Inject(InjectArgs),
    /// Score verdicts against gold labels.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// End-to-end benchmark runs and reporting.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Ingest a directory of .sol files into a deduplicated manifest.
    Ingest {
        /// Directory to scan recursively for .sol files.
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print dataset statistics for a manifest and its labels.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        labels: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnnotateCommand {
    /// Normalize one detector's raw report into findings JSONL.
    Ingest {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        detector: String,
        #[arg(long)]
        out: PathBuf,
        /// Taxonomy/detector-map config; bundled defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Vote findings into consensus ground-truth labels.
    Vote {
        #[arg(long)]
        findings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        threshold: usize,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Cohen's kappa between two annotator sheets.
    Kappa {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Deterministic stratified review subset.
    Review {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        fraction: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InjectArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Directory holding the corpus .sol files.
    #[arg(long)]
    corpus: PathBuf,
    /// Comma-separated classes: reentrancy, arithmetic, txorigin.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "reentrancy,arithmetic,txorigin"
    )]
    classes: Vec<String>,
    /// Number of clean samples to mutate.
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Cap the total number of emitted mutants.
    #[arg(long)]
    total_cap: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Score model responses against gold labels.
    Score {
        #[arg(long)]
        gold: PathBuf,
        /// JSONL of {"id", "model"?, "strategy"?, "response"} lines.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also render tables into this directory.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        exclude_not_mentioned: bool,
    },
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Run the full benchmark described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Prompt template directory, overriding the config.
        #[arg(long)]
        template_dir: Option<PathBuf>,
        /// Override the base URL of every configured endpoint.
        #[arg(long)]
        base_url: Option<String>,
        /// Override the model of every configured endpoint.
        #[arg(long)]
        model: Option<String>,
        /// Override the sampling temperature.
        #[arg(long)]
        temperature: Option<f64>,
        /// Override the per-endpoint request concurrency.
        #[arg(long)]
        concurrency: Option<usize>,
        /// Clip oversize prompts instead of rejecting them.
        #[arg(long)]
        truncate: bool,
    },
    /// Render tables from a persisted bundle.
    Render {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        #[arg(long, default_value = "tables")]
        out: PathBuf,
        #[arg(long)]
        exclude_not_mentioned: bool,
    },
    /// Summarize a human-evaluation score sheet.
    Human {
        #[arg(long)]
        scores: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Markdown,
}

impl From<FormatArg> for TableFormat {
    fn from(value: FormatArg) -> TableFormat {
        match value {
            FormatArg::Csv => TableFormat::Csv,
            FormatArg::Markdown => TableFormat::Markdown,
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Corpus(cmd) => run_corpus(cmd),
        Command::Annotate(cmd) => run_annotate(cmd),
        Command::Inject(args) => run_inject(args),
        Command::Metrics(cmd) => run_metrics(cmd),
        Command::Bench(cmd) => run_bench(cmd),
    }
}

/// Walk a directory tree for .sol files in sorted order.
fn collect_sol_files(root: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in
            std::fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))?
        {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "sol") {
                files.push(path);
            }
        }
    }
    files.sort();
    Ok(files)
}

/// Load a corpus directory; sample ids are root-relative paths.
fn load_corpus_dir(root: &Path) -> Result<Vec<ContractSample>> {
    let mut samples = Vec::new();
    for path in collect_sol_files(root)? {
        let id = path
            .strip_prefix(root)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/");
        let source = std::fs::read_to_string(&path)?;
        match ContractSample::from_source(id, source) {
            Ok(sample) => samples.push(sample),
            Err(err) => eprintln!("warning: skipping {}: {err}", path.display()),
        }
    }
    Ok(samples)
}

fn run_corpus(cmd: CorpusCommand) -> Result<()> {
    match cmd {
        CorpusCommand::Ingest { dir, out } => {
            let samples = load_corpus_dir(&dir)?;
            let total = samples.len();
            let deduped = solvbench::corpus::dedup(samples);
            let records: Vec<ManifestRecord> = deduped
                .iter()
                .map(|s| ManifestRecord::from_sample(s, &dir.join(&s.id)))
                .collect();
            solvbench::corpus::write_manifest(&records, &out)?;
            println!(
                "ingested {} files, {} unique samples -> {}",
                total,
                deduped.len(),
                out.display()
            );
        }
        CorpusCommand::Stats { manifest, labels } => {
            let samples = load_samples(&manifest)?;
            let labels = read_labels(&labels)?;
            let stats = corpus_stats(&samples, &labels)?;
            println!("{}", serde_json::to_string_pretty(&stats)?);
        }
    }
    Ok(())
}

fn load_taxonomy(path: Option<&PathBuf>) -> Result<TaxonomyConfig> {
    Ok(match path {
        Some(p) => TaxonomyConfig::load(p)?,
        None => TaxonomyConfig::default(),
    })
}

fn read_annotator_sheet(path: &Path) -> Result<AnnotatorLabels> {
    #[derive(serde::Deserialize)]
    struct SheetLine {
        contract_id: String,
        label: String,
    }
    let lines: Vec<SheetLine> = solvbench::annotate::read_jsonl(path)?;
    let mut labels = BTreeMap::new();
    for line in lines {
        labels.insert(line.contract_id, line.label);
    }
    Ok(AnnotatorLabels {
        annotator: path.display().to_string(),
        labels,
    })
}

fn run_annotate(cmd: AnnotateCommand) -> Result<()> {
    match cmd {
        AnnotateCommand::Ingest {
            report,
            detector,
            out,
            config,
        } => {
            let taxonomy = load_taxonomy(config.as_ref())?;
            let (findings, dropped) =
                ingest_detector_report(&report, &detector, &taxonomy.detectors)?;
            write_jsonl(&findings, &out)?;
            println!(
                "{}: {} findings mapped, {} outside the taxonomy dropped",
                detector,
                findings.len(),
                dropped
            );
        }
        AnnotateCommand::Vote {
            findings,
            out,
            threshold,
            config,
        } => {
            let taxonomy = load_taxonomy(config.as_ref())?;
            let findings = read_findings(&findings)?;
            let labels = consensus_vote_all(&findings, threshold, &taxonomy.severities)?;
            let vulnerable = labels.iter().filter(|l| l.vulnerable).count();
            write_jsonl(&labels, &out)?;
            println!(
                "{} contracts voted: {} vulnerable, {} clean -> {}",
                labels.len(),
                vulnerable,
                labels.len() - vulnerable,
                out.display()
            );
        }
        AnnotateCommand::Kappa { a, b } => {
            let sheet_a = read_annotator_sheet(&a)?;
            let sheet_b = read_annotator_sheet(&b)?;
            let kappa = cohen_kappa(&sheet_a, &sheet_b)?;
            println!("kappa = {kappa:.6} over {} items", sheet_a.labels.len());
        }
        AnnotateCommand::Review {
            labels,
            fraction,
            seed,
            out,
        } => {
            let labels = read_labels(&labels)?;
            let subset = sample_for_review(&labels, fraction, seed)?;
            println!(
                "selected {} of {} records for review",
                subset.len(),
                labels.len()
            );
            if let Some(path) = out {
                write_jsonl(&subset, &path)?;
                println!("wrote {}", path.display());
            } else {
                for record in &subset {
                    println!("{}", record.contract_id);
                }
            }
        }
    }
    Ok(())
}

fn parse_class_alias(alias: &str) -> Result<VulnClass> {
    let folded = alias.trim().to_lowercase();
    let class = match folded.as_str() {
        "reentrancy" => VulnClass::Reentrancy,
        "arithmetic" | "overflow" | "underflow" => VulnClass::ArithmeticOverflowUnderflow,
        "txorigin" | "tx-origin" | "tx.origin" => VulnClass::TxOrigin,
        other => VulnClass::fuzzy_parse(other)
            .ok_or_else(|| anyhow::anyhow!("unknown class alias `{alias}`"))?,
    };
    Ok(class)
}

fn run_inject(args: InjectArgs) -> Result<()> {
    let taxonomy = load_taxonomy(args.config.as_ref())?;
    let labels = read_labels(&args.labels)?;
    let samples = load_corpus_dir(&args.corpus)?;
    let classes: Vec<VulnClass> = args
        .classes
        .iter()
        .map(|c| parse_class_alias(c))
        .collect::<Result<_>>()?;
    let selected = select_clean_samples(&samples, &labels, args.n, args.seed)?;
    let library = SnippetLibrary::default();

    std::fs::create_dir_all(&args.out)?;
    let mut mutant_labels = Vec::new();
    let mut manifest = Vec::new();
    let mut produced = 0usize;
    'outer: for (index, sample) in selected.iter().enumerate() {
        for class in &classes {
            if let Some(cap) = args.total_cap {
                if produced >= cap {
                    break 'outer;
                }
            }
            let snippets: Vec<_> = library
                .for_class(*class)
                .into_iter()
                .filter(|s| s.kind == SnippetKind::Function)
                .collect();
            let snippet = snippets[index % snippets.len()];
            let spec = MutationSpec::new(*class, snippet.id, args.seed.wrapping_add(index as u64));
            let mutant = inject(sample, &spec, &library, &taxonomy.severities)?;
            let file_name = format!("{}.sol", mutant.id.replace(['/', '\\'], "_"));
            std::fs::write(args.out.join(&file_name), &mutant.mutated_source)?;
            manifest.push(serde_json::json!({
                "id": mutant.id,
                "path": file_name,
                "base_id": mutant.base_id,
                "injected_start": mutant.injected_span.0,
                "injected_end": mutant.injected_span.1,
            }));
            mutant_labels.push(mutant.ground_truth.clone());
            produced += 1;
        }
    }
    write_jsonl(&mutant_labels, &args.out.join("labels.jsonl"))?;
    write_jsonl(&manifest, &args.out.join("manifest.jsonl"))?;
    println!(
        "wrote {} mutants over {} clean samples -> {}",
        produced,
        selected.len(),
        args.out.display()
    );
    Ok(())
}

fn run_metrics(cmd: MetricsCommand) -> Result<()> {
    match cmd {
        MetricsCommand::Score {
            gold,
            pred,
            out,
            csv,
            exclude_not_mentioned,
        } => {
            // accepts raw {"id", "response"} lines as well as the run
            // directory's verdicts.jsonl with pre-parsed verdicts
            #[derive(serde::Deserialize)]
            struct VerdictLine {
                id: String,
                #[serde(default = "default_model")]
                model: String,
                #[serde(default = "default_strategy")]
                strategy: String,
                #[serde(default)]
                response: Option<String>,
                #[serde(default)]
                verdict: Option<solvbench::prompts::ModelVerdict>,
            }
            fn default_model() -> String {
                "model".to_string()
            }
            fn default_strategy() -> String {
                "default".to_string()
            }

            let gold_labels = read_labels(&gold)?;
            let by_id: std::collections::HashMap<&str, &LabelRecord> = gold_labels
                .iter()
                .map(|l| (l.contract_id.as_str(), l))
                .collect();
            let lines: Vec<VerdictLine> = solvbench::annotate::read_jsonl(&pred)?;
            let mut records = Vec::new();
            let mut models = Vec::new();
            let mut strategies = Vec::new();
            for line in lines {
                let gold = by_id
                    .get(line.id.as_str())
                    .ok_or_else(|| anyhow::anyhow!("no gold label for `{}`", line.id))?;
                let verdict = match (line.verdict, &line.response) {
                    (Some(verdict), _) => verdict,
                    (None, Some(response)) => parse_verdict(response),
                    (None, None) => {
                        anyhow::bail!("`{}` has neither a response nor a verdict", line.id)
                    }
                };
                if !models.contains(&line.model) {
                    models.push(line.model.clone());
                }
                if !strategies.contains(&line.strategy) {
                    strategies.push(line.strategy.clone());
                }
                records.push(BundleRecord {
                    id: line.id,
                    strategy: line.strategy,
                    model: line.model,
                    gold: (*gold).clone(),
                    verdict,
                });
            }
            let groups = score_records(&records, &models, &strategies, exclude_not_mentioned)?;
            std::fs::write(&out, serde_json::to_string_pretty(&groups)?)?;
            println!("scored {} verdicts -> {}", records.len(), out.display());
            if let Some(dir) = csv {
                let bundle = solvbench::pipeline::EvalBundle {
                    models,
                    strategies,
                    records,
                    groups,
                };
                let written = render_tables(&bundle, TableFormat::Csv, &dir)?;
                println!("rendered {} tables under {}", written.len(), dir.display());
            }
        }
    }
    Ok(())
}

fn run_bench(cmd: BenchCommand) -> Result<()> {
    match cmd {
        BenchCommand::Run {
            config,
            template_dir,
            base_url,
            model,
            temperature,
            concurrency,
            truncate,
        } => {
            let mut config = RunConfig::load(&config)?;
            if template_dir.is_some() {
                config.template_dir = template_dir;
            }
            for endpoint in &mut config.endpoints {
                if let Some(url) = &base_url {
                    endpoint.base_url = url.clone();
                }
                if let Some(model) = &model {
                    endpoint.model = model.clone();
                }
                if let Some(t) = temperature {
                    endpoint.temperature = t;
                }
                if let Some(n) = concurrency {
                    endpoint.max_in_flight = n;
                }
                if truncate {
                    endpoint.truncate_oversize = true;
                }
            }
            let (bundle, stats) = run_benchmark(&config)?;
            let tables_dir = config.out_dir.join("tables");
            render_tables(&bundle, TableFormat::Csv, &tables_dir)?;
            println!(
                "{} verdicts ({} network, {} cached, {} retries) -> {}",
                bundle.records.len(),
                stats.network_calls,
                stats.cache_hits,
                stats.retries,
                config.out_dir.display()
            );
        }
        BenchCommand::Render {
            bundle,
            format,
            out,
            exclude_not_mentioned,
        } => {
            let bundle = load_bundle(&bundle, exclude_not_mentioned)?;
            let written = render_tables(&bundle, format.into(), &out)?;
            for path in written {
                println!("wrote {}", path.display());
            }
        }
        BenchCommand::Human { scores } => {
            let summary = ingest_human_eval(&scores)?;
            println!(
                "{} rows, mean score {:.2}/3, accuracy {:.1}%",
                summary.rows,
                summary.mean_score,
                summary.accuracy * 100.0
            );
        }
    }
    Ok(())
}
