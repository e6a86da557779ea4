//! Independent brute-force reference implementations used as oracles.
//!
//! These deliberately share no code with the crate: different data
//! structures, different formulas (definition-level rather than simplified),
//! so agreement is evidence of correctness rather than of shared bugs.

use std::collections::BTreeMap;

fn toks(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(|t| t.to_string())
        .collect()
}

fn grams(tokens: &[String], n: usize) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    if n > 0 && tokens.len() >= n {
        for i in 0..=tokens.len() - n {
            let key = tokens[i..i + n].join("\u{1f}");
            *out.entry(key).or_insert(0) += 1;
        }
    }
    out
}

fn precision_at(candidate: &[String], reference: &[String], n: usize) -> f64 {
    let c = grams(candidate, n);
    let r = grams(reference, n);
    let total: u64 = c.values().sum();
    if total == 0 {
        return if r.is_empty() { 1.0 } else { 0.0 };
    }
    let mut matched = 0u64;
    for (gram, count) in &c {
        let clip = r.get(gram).copied().unwrap_or(0);
        matched += if *count < clip { *count } else { clip };
    }
    matched as f64 / total as f64
}

/// Unsmoothed sentence BLEU from the definition: product of clipped
/// precisions to the 1/n power, times the brevity penalty.
pub fn bleu_ref(candidate: &str, reference: &str, max_n: usize) -> f64 {
    let c = toks(candidate);
    let r = toks(reference);
    assert!(!r.is_empty(), "reference must be non-empty");
    if c.is_empty() {
        return 0.0;
    }
    let mut product = 1.0f64;
    for n in 1..=max_n {
        let p = precision_at(&c, &r, n);
        if p == 0.0 {
            return 0.0;
        }
        product *= p;
    }
    let bp = if (c.len() as f64) < (r.len() as f64) {
        (1.0 - r.len() as f64 / c.len() as f64).exp()
    } else {
        1.0
    };
    bp * product.powf(1.0 / max_n as f64)
}

fn overlap_sorted(a: &[String], b: &[String]) -> u64 {
    // multiset intersection by merging sorted lists
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort();
    y.sort();
    let (mut i, mut j, mut shared) = (0usize, 0usize, 0u64);
    while i < x.len() && j < y.len() {
        match x[i].cmp(&y[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                shared += 1;
                i += 1;
                j += 1;
            }
        }
    }
    shared
}

fn gram_list(tokens: &[String], n: usize) -> Vec<String> {
    if n == 0 || tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n)
        .map(|i| tokens[i..i + n].join("\u{1f}"))
        .collect()
}

/// ROUGE-1/2/L recomputed from definitions: multiset n-gram overlap F1 and
/// a full LCS dynamic-programming table.
pub fn rouge_ref(candidate: &str, reference: &str) -> (f64, f64, f64) {
    let c = toks(candidate);
    let r = toks(reference);
    assert!(!r.is_empty(), "reference must be non-empty");
    if c.is_empty() {
        return (0.0, 0.0, 0.0);
    }

    let f_measure = |p: f64, rec: f64| {
        if p + rec > 0.0 {
            2.0 * p * rec / (p + rec)
        } else {
            0.0
        }
    };
    let rouge_n = |n: usize| {
        let cg = gram_list(&c, n);
        let rg = gram_list(&r, n);
        if cg.is_empty() && rg.is_empty() {
            return 1.0;
        }
        if cg.is_empty() || rg.is_empty() {
            return 0.0;
        }
        let shared = overlap_sorted(&cg, &rg) as f64;
        f_measure(shared / cg.len() as f64, shared / rg.len() as f64)
    };

    // full DP table
    let mut table = vec![vec![0usize; r.len() + 1]; c.len() + 1];
    for i in 1..=c.len() {
        for j in 1..=r.len() {
            table[i][j] = if c[i - 1] == r[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    let lcs = table[c.len()][r.len()] as f64;
    let rouge_l = f_measure(lcs / c.len() as f64, lcs / r.len() as f64);

    (rouge_n(1), rouge_n(2), rouge_l)
}

/// Binary MCC straight from the formula.
pub fn mcc_binary_ref(tp: u64, false_neg: u64, tn: u64, fp: u64) -> f64 {
    let (tp, fn_, tn, fp) = (tp as f64, false_neg as f64, tn as f64, fp as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

/// Multiclass MCC from the definition: Pearson correlation between the
/// one-hot gold and prediction indicator variables, expanded item by item.
pub fn mcc_multiclass_ref(counts: &[Vec<u64>]) -> f64 {
    let k = counts.len();
    let total: u64 = counts.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;

    // per-class means of the indicators
    let mut gold_mean = vec![0.0f64; k];
    let mut pred_mean = vec![0.0f64; k];
    for g in 0..k {
        for p in 0..k {
            gold_mean[g] += counts[g][p] as f64;
            pred_mean[p] += counts[g][p] as f64;
        }
    }
    for m in gold_mean.iter_mut().chain(pred_mean.iter_mut()) {
        *m /= n;
    }

    let (mut cov_xy, mut cov_xx, mut cov_yy) = (0.0f64, 0.0f64, 0.0f64);
    for class in 0..k {
        for g in 0..k {
            for p in 0..k {
                let weight = counts[g][p] as f64;
                if weight == 0.0 {
                    continue;
                }
                let x = if g == class { 1.0 } else { 0.0 } - gold_mean[class];
                let y = if p == class { 1.0 } else { 0.0 } - pred_mean[class];
                cov_xy += weight * x * y;
                cov_xx += weight * x * x;
                cov_yy += weight * y * y;
            }
        }
    }
    if cov_xx <= 0.0 || cov_yy <= 0.0 {
        return 0.0;
    }
    cov_xy / (cov_xx.sqrt() * cov_yy.sqrt())
}

/// Cohen's kappa from the definition over paired labels.
pub fn kappa_ref(pairs: &[(String, String)]) -> Option<f64> {
    if pairs.is_empty() {
        return None;
    }
    let n = pairs.len() as f64;
    let observed = pairs.iter().filter(|(a, b)| a == b).count() as f64 / n;
    let mut count_a: BTreeMap<&str, f64> = BTreeMap::new();
    let mut count_b: BTreeMap<&str, f64> = BTreeMap::new();
    for (a, b) in pairs {
        *count_a.entry(a.as_str()).or_insert(0.0) += 1.0;
        *count_b.entry(b.as_str()).or_insert(0.0) += 1.0;
    }
    let mut expected = 0.0;
    for (label, ca) in &count_a {
        if let Some(cb) = count_b.get(label) {
            expected += (ca / n) * (cb / n);
        }
    }
    if (1.0 - expected).abs() < 1e-12 {
        return if (1.0 - observed).abs() < 1e-12 {
            Some(1.0)
        } else {
            None
        };
    }
    Some((observed - expected) / (1.0 - expected))
}

/// Accuracy and weighted precision/recall/F1 by naive per-class loops.
pub fn report_ref(gold: &[String], pred: &[String], classes: &[String]) -> (f64, f64, f64, f64) {
    let n = gold.len() as f64;
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count() as f64;
    let accuracy = correct / n;

    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for class in classes {
        let tp = gold
            .iter()
            .zip(pred)
            .filter(|(g, p)| *g == class && *p == class)
            .count() as f64;
        let gold_count = gold.iter().filter(|g| *g == class).count() as f64;
        let pred_count = pred.iter().filter(|p| *p == class).count() as f64;
        let precision = if pred_count > 0.0 {
            tp / pred_count
        } else {
            0.0
        };
        let recall = if gold_count > 0.0 {
            tp / gold_count
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let weight = gold_count / n;
        wp += weight * precision;
        wr += weight * recall;
        wf += weight * f1;
    }
    (accuracy, wp, wr, wf)
}

/// Expected consensus outcome derived independently: distinct detectors per
/// class, threshold filter, max-vote winner with canonical-order tie-break.
/// Returns (vulnerable, winner, secondary classes, vote count of winner).
pub fn consensus_ref(
    findings: &[(String, solvbench::taxonomy::VulnClass)],
    threshold: usize,
) -> (
    bool,
    Option<solvbench::taxonomy::VulnClass>,
    Vec<solvbench::taxonomy::VulnClass>,
    usize,
) {
    use solvbench::taxonomy::VulnClass;
    let mut votes: Vec<(VulnClass, usize)> = Vec::new();
    for class in VulnClass::ALL {
        let mut detectors: Vec<&str> = findings
            .iter()
            .filter(|(_, c)| *c == class)
            .map(|(d, _)| d.as_str())
            .collect();
        detectors.sort();
        detectors.dedup();
        if !detectors.is_empty() {
            votes.push((class, detectors.len()));
        }
    }
    let confirmed: Vec<(VulnClass, usize)> =
        votes.into_iter().filter(|(_, v)| *v >= threshold).collect();
    if confirmed.is_empty() {
        return (false, None, Vec::new(), 0);
    }
    let best = confirmed.iter().map(|(_, v)| *v).max().unwrap();
    // VulnClass::ALL iteration order above already is canonical order
    let winner = confirmed
        .iter()
        .find(|(_, v)| *v == best)
        .map(|(c, _)| *c)
        .unwrap();
    let secondary: Vec<VulnClass> = confirmed
        .iter()
        .filter(|(c, _)| *c != winner)
        .map(|(c, _)| *c)
        .collect();
    (true, Some(winner), secondary, best)
}
