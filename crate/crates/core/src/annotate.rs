//! Consensus ground-truth labeling from detector findings, inter-annotator
//! agreement, and review-subset selection.
//!
//! A class is confirmed for a contract when at least `threshold` distinct
//! detectors report it. Votes count tools, not findings: repeated findings
//! of one class by one detector collapse to a single vote.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{DetectorMap, Severity, SeverityMap, VulnClass};

/// One detector-reported issue, already normalized into the taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub detector_id: String,
    pub contract_id: String,
    pub class: VulnClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function_name: Option<String>,
    #[serde(default)]
    pub lines: Vec<usize>,
    pub raw_label: String,
}

/// Ground-truth tuple for one contract: presence, type, severity, plus the
/// located function/lines and any runner-up confirmed classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub contract_id: String,
    pub vulnerable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<VulnClass>,
    pub severity: Severity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vulnerable_function: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vulnerable_lines: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub secondary_classes: Vec<VulnClass>,
}

impl LabelRecord {
    pub fn clean(contract_id: impl Into<String>) -> LabelRecord {
        LabelRecord {
            contract_id: contract_id.into(),
            vulnerable: false,
            class: None,
            severity: Severity::NotMentioned,
            vulnerable_function: None,
            vulnerable_lines: Vec::new(),
            secondary_classes: Vec::new(),
        }
    }

    pub fn vulnerable(
        contract_id: impl Into<String>,
        class: VulnClass,
        severity: Severity,
    ) -> LabelRecord {
        LabelRecord {
            contract_id: contract_id.into(),
            vulnerable: true,
            class: Some(class),
            severity,
            vulnerable_function: None,
            vulnerable_lines: Vec::new(),
            secondary_classes: Vec::new(),
        }
    }

    /// Structural invariants tying presence, class, and severity together.
    pub fn is_consistent(&self) -> bool {
        if self.vulnerable {
            self.class.is_some()
                && matches!(
                    self.severity,
                    Severity::High | Severity::Medium | Severity::Low
                )
        } else {
            self.class.is_none()
                && self.severity == Severity::NotMentioned
                && self.vulnerable_lines.is_empty()
        }
    }
}

/// Vote findings for one contract into a consensus label.
///
/// Per class, distinct detectors are counted; classes reaching `threshold`
/// are confirmed. The winner is the confirmed class with the most votes
/// (ties broken by canonical class order), the rest land in
/// `secondary_classes`. Lines are the union over winning-class findings and
/// the function is the most frequent one among them (ties lexicographic).
pub fn consensus_vote(
    contract_id: &str,
    findings: &[Finding],
    threshold: usize,
    severities: &SeverityMap,
) -> Result<LabelRecord> {
    if threshold < 1 {
        return Err(Error::InvalidThreshold(threshold));
    }

    let mut votes: BTreeMap<VulnClass, BTreeSet<&str>> = BTreeMap::new();
    for finding in findings {
        votes
            .entry(finding.class)
            .or_default()
            .insert(finding.detector_id.as_str());
    }

    let confirmed: Vec<(VulnClass, usize)> = votes
        .iter()
        .map(|(class, detectors)| (*class, detectors.len()))
        .filter(|(_, count)| *count >= threshold)
        .collect();

    if confirmed.is_empty() {
        return Ok(LabelRecord::clean(contract_id));
    }

    // max vote count; BTreeMap iteration already runs in canonical order,
    // so the first class at the max is the tie-break winner
    let top = confirmed.iter().map(|(_, c)| *c).max().unwrap();
    let winner = confirmed.iter().find(|(_, c)| *c == top).unwrap().0;
    let secondary: Vec<VulnClass> = confirmed
        .iter()
        .map(|(class, _)| *class)
        .filter(|class| *class != winner)
        .collect();

    let mut lines: BTreeSet<usize> = BTreeSet::new();
    let mut function_freq: BTreeMap<&str, usize> = BTreeMap::new();
    for finding in findings.iter().filter(|f| f.class == winner) {
        lines.extend(finding.lines.iter().copied());
        if let Some(name) = &finding.function_name {
            *function_freq.entry(name.as_str()).or_insert(0) += 1;
        }
    }
    // highest count wins; BTreeMap order gives the lexicographic tie-break
    let vulnerable_function = function_freq
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(name, _)| (*name).to_string());

    Ok(LabelRecord {
        contract_id: contract_id.to_string(),
        vulnerable: true,
        class: Some(winner),
        severity: severities.default_severity(winner),
        vulnerable_function,
        vulnerable_lines: lines.into_iter().collect(),
        secondary_classes: secondary,
    })
}

/// Vote a whole findings file, grouping by contract id. Output is ordered
/// by contract id.
pub fn consensus_vote_all(
    findings: &[Finding],
    threshold: usize,
    severities: &SeverityMap,
) -> Result<Vec<LabelRecord>> {
    let mut by_contract: BTreeMap<&str, Vec<Finding>> = BTreeMap::new();
    for finding in findings {
        by_contract
            .entry(finding.contract_id.as_str())
            .or_default()
            .push(finding.clone());
    }
    by_contract
        .iter()
        .map(|(id, group)| consensus_vote(id, group, threshold, severities))
        .collect()
}

/// One annotator's sheet: contract id -> categorical label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotatorLabels {
    pub annotator: String,
    pub labels: BTreeMap<String, String>,
}

/// Cohen's kappa between two annotators over identical key sets.
///
/// kappa = (p_o - p_e) / (1 - p_e). When chance agreement reaches 1 the
/// statistic is defined as 1 for perfect agreement and is an error
/// otherwise.
pub fn cohen_kappa(a: &AnnotatorLabels, b: &AnnotatorLabels) -> Result<f64> {
    if a.labels.is_empty() || a.labels.len() != b.labels.len() {
        return Err(Error::KeyMismatch);
    }
    if !a.labels.keys().eq(b.labels.keys()) {
        return Err(Error::KeyMismatch);
    }
    let n = a.labels.len() as f64;

    let mut agree = 0usize;
    let mut marg_a: BTreeMap<&str, usize> = BTreeMap::new();
    let mut marg_b: BTreeMap<&str, usize> = BTreeMap::new();
    for (key, label_a) in &a.labels {
        let label_b = &b.labels[key];
        if label_a == label_b {
            agree += 1;
        }
        *marg_a.entry(label_a.as_str()).or_insert(0) += 1;
        *marg_b.entry(label_b.as_str()).or_insert(0) += 1;
    }
    let p_o = agree as f64 / n;
    let mut p_e = 0.0;
    for (label, count_a) in &marg_a {
        if let Some(count_b) = marg_b.get(label) {
            p_e += (*count_a as f64 / n) * (*count_b as f64 / n);
        }
    }

    if (1.0 - p_e).abs() < 1e-12 {
        if (1.0 - p_o).abs() < 1e-12 {
            return Ok(1.0);
        }
        return Err(Error::DegenerateKappa);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Deterministic class-stratified subset of size floor(fraction * n) for
/// human review.
pub fn sample_for_review(
    labels: &[LabelRecord],
    fraction: f64,
    seed: u64,
) -> Result<Vec<LabelRecord>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidFraction(fraction));
    }
    let target = (fraction * labels.len() as f64).floor() as usize;

    // group indices by stratum: confirmed class, or None for clean records
    let mut strata: BTreeMap<Option<VulnClass>, Vec<usize>> = BTreeMap::new();
    for (idx, label) in labels.iter().enumerate() {
        strata.entry(label.class).or_default().push(idx);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = labels.len() as f64;

    // proportional base allocation, then largest remainders fill the gap
    let mut allocation: Vec<(Option<VulnClass>, usize, f64)> = strata
        .iter()
        .map(|(class, members)| {
            let exact = target as f64 * members.len() as f64 / n;
            (*class, exact.floor() as usize, exact - exact.floor())
        })
        .collect();
    let assigned: usize = allocation.iter().map(|(_, k, _)| *k).sum();
    let mut remaining = target.saturating_sub(assigned);
    allocation.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    for entry in allocation.iter_mut() {
        if remaining == 0 {
            break;
        }
        if entry.1 < strata[&entry.0].len() {
            entry.1 += 1;
            remaining -= 1;
        }
    }

    let mut picked: Vec<usize> = Vec::with_capacity(target);
    allocation.sort_by_key(|entry| entry.0);
    for (class, take, _) in allocation {
        let mut members = strata[&class].clone();
        members.shuffle(&mut rng);
        picked.extend(members.into_iter().take(take));
    }
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| labels[i].clone()).collect())
}

/// Raw, un-normalized detector output line: the documented per-tool report
/// schema.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawReportLine {
    contract_id: String,
    label: String,
    #[serde(default)]
    function: Option<String>,
    #[serde(default)]
    lines: Vec<usize>,
}

/// Parse a per-tool report (JSON Lines) and normalize its labels into the
/// taxonomy. Returns the mapped findings plus the count of findings dropped
/// because their label is outside the 13-class scope.
pub fn ingest_detector_report(
    path: &Path,
    detector_id: &str,
    detectors: &DetectorMap,
) -> Result<(Vec<Finding>, usize)> {
    let text = std::fs::read_to_string(path)?;
    let mut findings = Vec::new();
    let mut dropped = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawReportLine = serde_json::from_str(line)
            .map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
        match detectors.normalize_finding(detector_id, &raw.label)? {
            Some(class) => {
                let mut lines = raw.lines;
                lines.sort_unstable();
                lines.dedup();
                findings.push(Finding {
                    detector_id: detector_id.to_string(),
                    contract_id: raw.contract_id,
                    class,
                    function_name: raw.function,
                    lines,
                    raw_label: raw.label,
                });
            }
            None => dropped += 1,
        }
    }
    Ok((findings, dropped))
}

/// JSONL readers/writers for findings and labels.
pub fn read_findings(path: &Path) -> Result<Vec<Finding>> {
    read_jsonl(path)
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    read_jsonl(path)
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    let mut items = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(line)
            .map_err(|e| Error::malformed(path, idx + 1, e.to_string()))?;
        items.push(item);
    }
    Ok(items)
}

/// Index labels by contract id.
pub fn labels_by_id(labels: &[LabelRecord]) -> HashMap<&str, &LabelRecord> {
    labels.iter().map(|l| (l.contract_id.as_str(), l)).collect()
}
