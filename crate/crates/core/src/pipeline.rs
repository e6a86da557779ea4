//! End-to-end benchmark orchestration: corpus + labels in, prompts out to
//! endpoints (cache-aware), verdicts parsed and scored, tables rendered.
//!
//! Collection and scoring are strictly separated: raw responses are
//! persisted before any parsing, and every metric is recomputable from the
//! stored verdicts alone. With a warm cache a rerun performs zero network
//! requests and reproduces the results byte-for-byte.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::{read_labels, write_jsonl, LabelRecord};
use crate::corpus::{load_samples, ContractSample};
use crate::error::{Error, Result};
use crate::llmclient::{ChatClient, EndpointConfig};
use crate::metrics::{
    classification_report, generation_scores, mcc_binary, mcc_multiclass, BinaryCounts,
    ClassificationReport, ConfusionMatrix, GenerationScores,
};
use crate::prompts::{
    build_prompt, gold_labels, parse_verdict, render_gold, Exemplar, ModelVerdict, Presence,
    PromptStrategy, TemplateSet,
};
use crate::taxonomy::{Severity, VulnClass};

/// One endpoint entry in a run config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EndpointSpec {
    /// Display name in results; defaults to the model name.
    #[serde(default)]
    pub name: Option<String>,
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    /// Environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub max_input_chars: Option<usize>,
    #[serde(default)]
    pub truncate_oversize: bool,
}

fn default_max_output_tokens() -> u32 {
    256
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_in_flight() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    250
}

impl EndpointSpec {
    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or(&self.model)
    }

    pub fn to_endpoint_config(&self) -> EndpointConfig {
        let mut config = EndpointConfig::new(&self.base_url, &self.model);
        config.temperature = self.temperature;
        config.max_output_tokens = self.max_output_tokens;
        config.request_timeout = std::time::Duration::from_secs(self.request_timeout_secs);
        config.max_retries = self.max_retries;
        config.max_in_flight = self.max_in_flight;
        config.retry_backoff = std::time::Duration::from_millis(self.retry_backoff_ms);
        config.max_input_chars = self.max_input_chars;
        config.truncate_oversize = self.truncate_oversize;
        config.api_key = self
            .api_key_env
            .as_deref()
            .or(Some("OPENAI_API_KEY"))
            .and_then(|var| std::env::var(var).ok());
        config
    }
}

/// Full configuration of a benchmark run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub labels: PathBuf,
    pub endpoints: Vec<EndpointSpec>,
    pub strategies: Vec<PromptStrategy>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_split_seed")]
    pub split_seed: u64,
    pub out_dir: PathBuf,
    /// Defaults to `<out_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub template_dir: Option<PathBuf>,
    /// Drop non-vulnerable gold rows from severity scoring.
    #[serde(default)]
    pub exclude_not_mentioned: bool,
}

fn default_test_fraction() -> f64 {
    0.2
}
fn default_split_seed() -> u64 {
    7
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::InvalidSplitFraction(self.test_fraction));
        }
        if self.endpoints.is_empty() {
            return Err(Error::Config("run config lists no endpoints".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Config("run config lists no strategies".into()));
        }
        for strategy in &self.strategies {
            strategy.validate()?;
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.out_dir.join("cache"))
    }
}

/// Train/test split with stratification warnings.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<LabelRecord>,
    pub test: Vec<LabelRecord>,
    pub warnings: Vec<String>,
}

/// Deterministic split stratified by (vulnerable, class). Strata with a
/// single member cannot be stratified and go to train with a warning.
pub fn split_dataset(
    labels: &[LabelRecord],
    test_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidSplitFraction(test_fraction));
    }
    let mut strata: BTreeMap<(bool, Option<VulnClass>), Vec<usize>> = BTreeMap::new();
    for (idx, label) in labels.iter().enumerate() {
        strata
            .entry((label.vulnerable, label.class))
            .or_default()
            .push(idx);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_indices: HashSet<usize> = HashSet::new();
    let mut warnings = Vec::new();
    for ((vulnerable, class), members) in &strata {
        if members.len() < 2 {
            warnings.push(format!(
                "stratum (vulnerable={vulnerable}, class={}) has {} member(s); assigned to train",
                class.map(|c| c.canonical()).unwrap_or("None"),
                members.len()
            ));
            continue;
        }
        let mut take = (test_fraction * members.len() as f64 + 0.5).floor() as usize;
        take = take.min(members.len() - 1);
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        test_indices.extend(shuffled.into_iter().take(take));
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (idx, label) in labels.iter().enumerate() {
        if test_indices.contains(&idx) {
            test.push(label.clone());
        } else {
            train.push(label.clone());
        }
    }
    Ok(DatasetSplit {
        train,
        test,
        warnings,
    })
}

/// One scored evaluation item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleRecord {
    pub id: String,
    pub strategy: String,
    pub model: String,
    pub gold: LabelRecord,
    pub verdict: ModelVerdict,
}

/// Raw response persisted before scoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawResponseRecord {
    pub id: String,
    pub strategy: String,
    pub model: String,
    pub response: String,
}

/// Parsed verdict persisted per item, gold omitted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub id: String,
    pub strategy: String,
    pub model: String,
    pub verdict: ModelVerdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MccTriple {
    pub presence: f64,
    pub vuln_type: f64,
    pub severity: f64,
}

/// Derived metrics for one (model, strategy) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub model: String,
    pub strategy: String,
    pub samples: usize,
    pub presence: ClassificationReport,
    pub vuln_type: ClassificationReport,
    pub severity: ClassificationReport,
    pub mcc: MccTriple,
    pub generation: GenerationScores,
}

/// Everything one run produces: per-item verdicts plus derived metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalBundle {
    pub models: Vec<String>,
    pub strategies: Vec<String>,
    pub records: Vec<BundleRecord>,
    pub groups: Vec<GroupMetrics>,
}

/// Collection-side statistics, deliberately not part of any persisted
/// artifact so warm-cache reruns stay byte-identical.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunStats {
    pub network_calls: usize,
    pub cache_hits: usize,
    pub retries: u32,
}

impl EvalBundle {
    /// One verdict per (sample, strategy, model).
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for record in &self.records {
            if !seen.insert((
                record.id.as_str(),
                record.strategy.as_str(),
                record.model.as_str(),
            )) {
                return Err(Error::Config(format!(
                    "duplicate verdict for ({}, {}, {})",
                    record.id, record.strategy, record.model
                )));
            }
        }
        Ok(())
    }
}

/// Score bundle records into per-(model, strategy) metrics.
///
/// `Unparseable` counts against the model on all three sub-tasks: it is a
/// reserved wrong class for type and severity, and the wrong side of the
/// binary presence split.
pub fn score_records(
    records: &[BundleRecord],
    models: &[String],
    strategies: &[String],
    exclude_not_mentioned: bool,
) -> Result<Vec<GroupMetrics>> {
    let presence_classes: Vec<String> = ["Yes", "No", "Unparseable"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut type_classes: Vec<String> = VulnClass::ALL
        .iter()
        .map(|c| c.canonical().to_string())
        .collect();
    type_classes.push("None".to_string());
    type_classes.push("Unparseable".to_string());
    let mut severity_classes: Vec<String> = Severity::ALL
        .iter()
        .map(|s| s.canonical().to_string())
        .collect();
    severity_classes.push("None".to_string());
    severity_classes.push("Unparseable".to_string());

    let mut groups = Vec::new();
    for model in models {
        for strategy in strategies {
            let group: Vec<&BundleRecord> = records
                .iter()
                .filter(|r| &r.model == model && &r.strategy == strategy)
                .collect();
            if group.is_empty() {
                continue;
            }

            let mut presence_gold = Vec::new();
            let mut presence_pred = Vec::new();
            let mut type_gold = Vec::new();
            let mut type_pred = Vec::new();
            let mut severity_gold = Vec::new();
            let mut severity_pred = Vec::new();
            let mut binary = BinaryCounts::new(0, 0, 0, 0);
            let mut pairs = Vec::new();

            for record in &group {
                let (g_presence, g_type, g_severity) = gold_labels(&record.gold);
                presence_gold.push(g_presence.to_string());
                presence_pred.push(record.verdict.presence_label().to_string());
                type_gold.push(g_type);
                type_pred.push(record.verdict.class_label());
                if !(exclude_not_mentioned && g_severity == "NotMentioned") {
                    severity_gold.push(g_severity);
                    severity_pred.push(record.verdict.severity_label());
                }
                match (record.gold.vulnerable, record.verdict.presence) {
                    (true, Presence::Yes) => binary.true_pos += 1,
                    (true, _) => binary.false_neg += 1,
                    (false, Presence::No) => binary.true_neg += 1,
                    (false, _) => binary.false_pos += 1,
                }
                pairs.push((record.verdict.raw.clone(), render_gold(&record.gold)));
            }

            let type_cm = ConfusionMatrix::from_labels(&type_gold, &type_pred, &type_classes)?;
            let severity_cm =
                ConfusionMatrix::from_labels(&severity_gold, &severity_pred, &severity_classes)?;
            groups.push(GroupMetrics {
                model: model.clone(),
                strategy: strategy.clone(),
                samples: group.len(),
                presence: classification_report(&presence_gold, &presence_pred, &presence_classes)?,
                vuln_type: crate::metrics::report_from_matrix(&type_cm),
                severity: crate::metrics::report_from_matrix(&severity_cm),
                mcc: MccTriple {
                    presence: mcc_binary(&binary),
                    vuln_type: mcc_multiclass(&type_cm),
                    severity: mcc_multiclass(&severity_cm),
                },
                generation: generation_scores(&pairs)?,
            });
        }
    }
    Ok(groups)
}

/// Run the whole benchmark described by `config`: one verdict per labeled
/// sample per strategy per endpoint.
///
/// Responses come from the cache when present; every completed call is
/// cached before the run proceeds, so an aborted run resumes where it
/// stopped. Raw responses are persisted before parsing, then verdicts and
/// metrics are derived and written under `out_dir`.
pub fn run_benchmark(config: &RunConfig) -> Result<(EvalBundle, RunStats)> {
    config.validate()?;
    let samples = load_samples(&config.manifest)?;
    let labels = read_labels(&config.labels)?;
    let samples_by_id: HashMap<&str, &ContractSample> =
        samples.iter().map(|s| (s.id.as_str(), s)).collect();
    for label in &labels {
        if !samples_by_id.contains_key(label.contract_id.as_str()) {
            return Err(Error::DanglingLabel(label.contract_id.clone()));
        }
    }

    // few-shot exemplars come from the train split only, so the exemplar
    // pool stays disjoint from the test set; a train sample under
    // evaluation is excluded from its own pool
    let split = split_dataset(&labels, config.test_fraction, config.split_seed)?;
    let exemplar_pool: Vec<Exemplar> = split
        .train
        .iter()
        .map(|label| Exemplar {
            id: label.contract_id.clone(),
            code: samples_by_id[label.contract_id.as_str()].normalized.clone(),
            label: label.clone(),
        })
        .collect();

    let templates = match &config.template_dir {
        Some(dir) => TemplateSet::load(dir)?,
        None => TemplateSet::default(),
    };

    let mut eval_labels = labels.clone();
    eval_labels.sort_by(|a, b| a.contract_id.cmp(&b.contract_id));

    let cache_dir = config.cache_dir();
    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::create_dir_all(&cache_dir)?;
    std::fs::write(
        config.out_dir.join("config.json"),
        serde_json::to_string_pretty(config)?,
    )?;

    let models: Vec<String> = config
        .endpoints
        .iter()
        .map(|e| e.display_name().to_string())
        .collect();
    let strategy_labels: Vec<String> = config.strategies.iter().map(|s| s.label()).collect();

    let mut stats = RunStats::default();
    let mut raw_records: Vec<RawResponseRecord> = Vec::new();
    let mut records: Vec<BundleRecord> = Vec::new();

    for endpoint in &config.endpoints {
        let client = ChatClient::new(endpoint.to_endpoint_config(), Some(cache_dir.clone()))?;
        for strategy in &config.strategies {
            let mut conversations = Vec::with_capacity(eval_labels.len());
            for label in &eval_labels {
                let sample = samples_by_id[label.contract_id.as_str()];
                let needs_filter = matches!(strategy, PromptStrategy::FewShot { .. })
                    && exemplar_pool.iter().any(|e| e.id == sample.id);
                let conversation = if needs_filter {
                    let pool: Vec<Exemplar> = exemplar_pool
                        .iter()
                        .filter(|e| e.id != sample.id)
                        .cloned()
                        .collect();
                    build_prompt(sample, strategy, &pool, &templates)?
                } else {
                    build_prompt(sample, strategy, &exemplar_pool, &templates)?
                };
                conversations.push(conversation);
            }
            let outcomes = client.complete_batch(&conversations);
            for (label, outcome) in eval_labels.iter().zip(outcomes) {
                let outcome = outcome?;
                if outcome.from_cache {
                    stats.cache_hits += 1;
                } else {
                    stats.network_calls += 1;
                }
                stats.retries += outcome.retries;
                raw_records.push(RawResponseRecord {
                    id: label.contract_id.clone(),
                    strategy: strategy.label(),
                    model: endpoint.display_name().to_string(),
                    response: outcome.content,
                });
            }
        }
    }

    // raw text lands on disk before any parsing or scoring
    write_jsonl(&raw_records, &config.out_dir.join("raw_responses.jsonl"))?;

    let labels_by_id: HashMap<&str, &LabelRecord> =
        labels.iter().map(|l| (l.contract_id.as_str(), l)).collect();
    for raw in &raw_records {
        let gold = labels_by_id
            .get(raw.id.as_str())
            .copied()
            .expect("evaluated ids come from the labels file");
        records.push(BundleRecord {
            id: raw.id.clone(),
            strategy: raw.strategy.clone(),
            model: raw.model.clone(),
            gold: gold.clone(),
            verdict: parse_verdict(&raw.response),
        });
    }

    let groups = score_records(
        &records,
        &models,
        &strategy_labels,
        config.exclude_not_mentioned,
    )?;
    let bundle = EvalBundle {
        models,
        strategies: strategy_labels,
        records,
        groups,
    };
    bundle.validate()?;

    let verdicts: Vec<VerdictRecord> = bundle
        .records
        .iter()
        .map(|r| VerdictRecord {
            id: r.id.clone(),
            strategy: r.strategy.clone(),
            model: r.model.clone(),
            verdict: r.verdict.clone(),
        })
        .collect();
    write_jsonl(&verdicts, &config.out_dir.join("verdicts.jsonl"))?;
    write_jsonl(&bundle.records, &config.out_dir.join("bundle.jsonl"))?;
    let metrics_doc = serde_json::json!({
        "models": bundle.models,
        "strategies": bundle.strategies,
        "groups": bundle.groups,
    });
    std::fs::write(
        config.out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics_doc)?,
    )?;

    Ok((bundle, stats))
}

/// Rebuild a bundle from a persisted records file, rescoring from the
/// stored verdicts.
pub fn load_bundle(path: &Path, exclude_not_mentioned: bool) -> Result<EvalBundle> {
    let records: Vec<BundleRecord> = crate::annotate::read_jsonl(path)?;
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut models = Vec::new();
    let mut strategies = Vec::new();
    for record in &records {
        if !models.contains(&record.model) {
            models.push(record.model.clone());
        }
        if !strategies.contains(&record.strategy) {
            strategies.push(record.strategy.clone());
        }
    }
    let groups = score_records(&records, &models, &strategies, exclude_not_mentioned)?;
    Ok(EvalBundle {
        models,
        strategies,
        records,
        groups,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl TableFormat {
    fn extension(&self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Markdown => "md",
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.0}", x * 100.0)
}

fn write_table(
    path: &Path,
    format: TableFormat,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<()> {
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(&header.join(","));
            out.push('\n');
            for row in rows {
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            out.push_str(&format!("| {} |\n", header.join(" | ")));
            out.push_str(&format!("|{}\n", " --- |".repeat(header.len())));
            for row in rows {
                out.push_str(&format!("| {} |\n", row.join(" | ")));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Render the per-task classification tables (whole percentages), the MCC
/// table, and one generation-scores table per strategy. Strategies declared
/// in the bundle but absent from the records are noted in `NOTES.txt`
/// instead of producing an empty table.
pub fn render_tables(
    bundle: &EvalBundle,
    format: TableFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if bundle.records.is_empty() {
        return Err(Error::EmptyInput);
    }
    std::fs::create_dir_all(out_dir)?;
    let ext = format.extension();
    let mut written = Vec::new();
    let mut notes = Vec::new();

    type ReportPick = fn(&GroupMetrics) -> &ClassificationReport;
    let tasks: [(&str, ReportPick); 3] = [
        ("presence", |g| &g.presence),
        ("type", |g| &g.vuln_type),
        ("severity", |g| &g.severity),
    ];
    for (task, pick) in tasks {
        let rows: Vec<Vec<String>> = bundle
            .groups
            .iter()
            .map(|group| {
                let report = pick(group);
                vec![
                    group.model.clone(),
                    group.strategy.clone(),
                    pct(report.accuracy),
                    pct(report.precision),
                    pct(report.recall),
                    pct(report.f1),
                ]
            })
            .collect();
        let path = out_dir.join(format!("{task}.{ext}"));
        write_table(
            &path,
            format,
            &["Model", "Strategy", "Accuracy", "Precision", "Recall", "F1"],
            &rows,
        )?;
        written.push(path);
    }

    let mcc_rows: Vec<Vec<String>> = bundle
        .groups
        .iter()
        .map(|group| {
            vec![
                group.model.clone(),
                group.strategy.clone(),
                format!("{:.6}", group.mcc.presence),
                format!("{:.6}", group.mcc.vuln_type),
                format!("{:.6}", group.mcc.severity),
            ]
        })
        .collect();
    let mcc_path = out_dir.join(format!("mcc.{ext}"));
    write_table(
        &mcc_path,
        format,
        &[
            "Model",
            "Strategy",
            "MCC Presence",
            "MCC Type",
            "MCC Severity",
        ],
        &mcc_rows,
    )?;
    written.push(mcc_path);

    for strategy in &bundle.strategies {
        let rows: Vec<Vec<String>> = bundle
            .groups
            .iter()
            .filter(|g| &g.strategy == strategy)
            .map(|group| {
                vec![
                    group.model.clone(),
                    format!("{:.6}", group.generation.bleu1),
                    format!("{:.6}", group.generation.bleu2),
                    format!("{:.6}", group.generation.bleu3),
                    format!("{:.6}", group.generation.rouge1),
                    format!("{:.6}", group.generation.rouge2),
                    format!("{:.6}", group.generation.rouge_l),
                ]
            })
            .collect();
        if rows.is_empty() {
            notes.push(format!(
                "strategy `{strategy}`: no verdicts in bundle; generation table omitted"
            ));
            continue;
        }
        let path = out_dir.join(format!("generation_{strategy}.{ext}"));
        write_table(
            &path,
            format,
            &[
                "Model", "BLEU-1", "BLEU-2", "BLEU-3", "ROUGE-1", "ROUGE-2", "ROUGE-L",
            ],
            &rows,
        )?;
        written.push(path);
    }

    if !notes.is_empty() {
        let path = out_dir.join("NOTES.txt");
        std::fs::write(&path, notes.join("\n") + "\n")?;
        written.push(path);
    }
    Ok(written)
}

/// Summary of a human scoring sheet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanEvalSummary {
    pub rows: usize,
    pub mean_score: f64,
    /// mean / 3, the fraction of the maximum score.
    pub accuracy: f64,
}

/// Ingest a CSV of (sample id, evaluator id, score in 0..=3) rows, with an
/// optional header line.
pub fn ingest_human_eval(path: &Path) -> Result<HumanEvalSummary> {
    let text = std::fs::read_to_string(path)?;
    let mut sum = 0i64;
    let mut rows = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(Error::malformed(
                path,
                idx + 1,
                "expected sample,evaluator,score",
            ));
        }
        match fields[2].parse::<i64>() {
            Ok(score) => {
                if !(0..=3).contains(&score) {
                    return Err(Error::ScoreOutOfRange(score));
                }
                sum += score;
                rows += 1;
            }
            Err(_) if rows == 0 && fields[2].eq_ignore_ascii_case("score") => {
                // header line
            }
            Err(_) => {
                return Err(Error::malformed(path, idx + 1, "score is not an integer"));
            }
        }
    }
    if rows == 0 {
        return Err(Error::EmptyInput);
    }
    let mean_score = sum as f64 / rows as f64;
    Ok(HumanEvalSummary {
        rows,
        mean_score,
        accuracy: mean_score / 3.0,
    })
}
