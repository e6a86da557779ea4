//! Evaluation metrics: confusion matrices, accuracy and weighted
//! precision/recall/F1, binary and multiclass MCC, BLEU-1/2/3,
//! ROUGE-1/2/L, and base-vs-finetuned improvement percentages.
//!
//! Conventions pinned here once: weighted (support-proportional) averaging
//! for P/R/F1, MCC zero denominators give 0, BLEU is unsmoothed with a
//! sentence-level mean, ROUGE is reported as F1, and generation metrics
//! tokenize by lowercasing and splitting on whitespace.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// K x K confusion matrix over a fixed class list.
/// `counts[i][j]` is the number of items with gold class `i` predicted as
/// class `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

/// Binary view of a confusion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryCounts {
    pub true_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
    pub false_pos: u64,
}

impl ConfusionMatrix {
    /// Count gold/pred label pairs. Every label must appear in `classes`;
    /// empty inputs are an error since there is nothing to score.
    pub fn from_labels(
        gold: &[String],
        pred: &[String],
        classes: &[String],
    ) -> Result<ConfusionMatrix> {
        if gold.len() != pred.len() {
            return Err(Error::LengthMismatch {
                gold: gold.len(),
                pred: pred.len(),
            });
        }
        if gold.is_empty() {
            return Err(Error::EmptyInput);
        }
        let index: HashMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        if index.len() != classes.len() {
            return Err(Error::Config("class list contains duplicates".into()));
        }
        let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
        for (g, p) in gold.iter().zip(pred) {
            let gi = *index
                .get(g.as_str())
                .ok_or_else(|| Error::LabelOutsideClasses(g.clone()))?;
            let pi = *index
                .get(p.as_str())
                .ok_or_else(|| Error::LabelOutsideClasses(p.clone()))?;
            counts[gi][pi] += 1;
        }
        Ok(ConfusionMatrix {
            classes: classes.to_vec(),
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Gold count of class `i` (row sum).
    pub fn support(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    /// Predicted count of class `i` (column sum).
    pub fn predicted(&self, i: usize) -> u64 {
        self.counts.iter().map(|row| row[i]).sum()
    }

    /// TP/TN/FP/FN with class index `positive` as the positive class.
    /// Meaningful for 2x2 matrices; larger matrices collapse one-vs-rest.
    pub fn binary(&self, positive: usize) -> BinaryCounts {
        let tp = self.counts[positive][positive];
        let fp = self.predicted(positive) - tp;
        let fn_ = self.support(positive) - tp;
        let tn = self.total() - tp - fp - fn_;
        BinaryCounts {
            true_pos: tp,
            false_neg: fn_,
            true_neg: tn,
            false_pos: fp,
        }
    }
}

impl BinaryCounts {
    pub fn new(true_pos: u64, false_neg: u64, true_neg: u64, false_pos: u64) -> BinaryCounts {
        BinaryCounts {
            true_pos,
            false_neg,
            true_neg,
            false_pos,
        }
    }
}

/// Binary Matthews correlation:
/// (TP*TN - FP*FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN)).
/// Any zero factor in the denominator gives 0.
pub fn mcc_binary(c: &BinaryCounts) -> f64 {
    let (tp, tn, fp, fn_) = (
        c.true_pos as i128,
        c.true_neg as i128,
        c.false_pos as i128,
        c.false_neg as i128,
    );
    let denom_factors = [tp + fp, tp + fn_, tn + fp, tn + fn_];
    if denom_factors.contains(&0) {
        return 0.0;
    }
    // exact integer products keep the TP<->TN, FP<->FN relabeling symmetry
    // bit-for-bit
    let numerator = (tp * tn - fp * fn_) as f64;
    let denominator = (denom_factors.iter().product::<i128>() as f64).sqrt();
    numerator / denominator
}

/// Multiclass Matthews correlation in covariance form:
/// (c*s - sum_k p_k t_k) / sqrt((s^2 - sum p_k^2)(s^2 - sum t_k^2))
/// with c the trace, s the total, and t_k / p_k the gold / predicted
/// counts. Reduces exactly to the binary formula for K = 2; zero
/// denominators give 0.
pub fn mcc_multiclass(cm: &ConfusionMatrix) -> f64 {
    let k = cm.classes.len();
    let s = cm.total() as i128;
    let c = cm.trace() as i128;
    let mut sum_pt = 0i128;
    let mut sum_p2 = 0i128;
    let mut sum_t2 = 0i128;
    for i in 0..k {
        let p = cm.predicted(i) as i128;
        let t = cm.support(i) as i128;
        sum_pt += p * t;
        sum_p2 += p * p;
        sum_t2 += t * t;
    }
    let cov_xy = (c * s - sum_pt) as f64;
    let cov_xx = (s * s - sum_p2) as f64;
    let cov_yy = (s * s - sum_t2) as f64;
    if cov_xx <= 0.0 || cov_yy <= 0.0 {
        return 0.0;
    }
    cov_xy / (cov_xx.sqrt() * cov_yy.sqrt())
}

/// Per-class one-vs-rest scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Accuracy plus support-weighted precision/recall/F1. With single-label
/// multiclass data, weighted recall equals accuracy exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

/// Build the confusion matrix and reduce it to a classification report.
/// Per-class precision with no predictions of that class is 0.
pub fn classification_report(
    gold: &[String],
    pred: &[String],
    classes: &[String],
) -> Result<ClassificationReport> {
    let cm = ConfusionMatrix::from_labels(gold, pred, classes)?;
    Ok(report_from_matrix(&cm))
}

pub fn report_from_matrix(cm: &ConfusionMatrix) -> ClassificationReport {
    let total = cm.total() as f64;
    let mut per_class = Vec::with_capacity(cm.classes.len());
    let (mut w_precision, mut w_f1) = (0.0, 0.0);
    let mut recall_hits = 0u64;
    for (i, class) in cm.classes.iter().enumerate() {
        let tp = cm.counts[i][i] as f64;
        let support = cm.support(i);
        let predicted = cm.predicted(i) as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if support > 0 {
            tp / support as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let weight = support as f64 / total;
        w_precision += precision * weight;
        w_f1 += f1 * weight;
        // weighted recall: (support/total) * (tp/support) sums to
        // trace/total, so accumulate the exact integer form
        recall_hits += cm.counts[i][i];
        per_class.push(ClassMetrics {
            class: class.clone(),
            precision,
            recall,
            f1,
            support,
        });
    }
    ClassificationReport {
        accuracy: cm.trace() as f64 / total,
        precision: w_precision,
        recall: recall_hits as f64 / total,
        f1: w_f1,
        per_class,
    }
}

/// Lowercase whitespace tokenization shared by BLEU and ROUGE.
fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram precision. When neither side has any n-gram of this order
/// the precision is vacuously 1, so identical short texts still score 1.
fn clipped_precision(candidate: &[String], reference: &[String], n: usize) -> f64 {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let cand_total: u64 = cand.values().sum();
    if cand_total == 0 {
        return if refs.is_empty() { 1.0 } else { 0.0 };
    }
    let clipped: u64 = cand
        .iter()
        .map(|(gram, count)| (*count).min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    clipped as f64 / cand_total as f64
}

/// Sentence BLEU with uniform weights over n = 1..=max_n, no smoothing, and
/// brevity penalty exp(1 - r/c) when the candidate is shorter than the
/// reference. Any zero precision zeroes the score. Empty candidates score
/// 0; empty references are an error.
pub fn bleu(candidate: &str, reference: &str, max_n: usize) -> Result<f64> {
    let reference_tokens = tokenize(reference);
    if reference_tokens.is_empty() {
        return Err(Error::EmptyReference);
    }
    let candidate_tokens = tokenize(candidate);
    if candidate_tokens.is_empty() {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let p = clipped_precision(&candidate_tokens, &reference_tokens, n);
        if p == 0.0 {
            return Ok(0.0);
        }
        log_sum += p.ln();
    }
    let precision_mean = (log_sum / max_n as f64).exp();
    let c = candidate_tokens.len() as f64;
    let r = reference_tokens.len() as f64;
    let brevity = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    Ok(brevity * precision_mean)
}

/// Corpus BLEU: the mean of per-sample sentence scores.
pub fn bleu_corpus(pairs: &[(String, String)], max_n: usize) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sum = 0.0;
    for (candidate, reference) in pairs {
        sum += bleu(candidate, reference, max_n)?;
    }
    Ok(sum / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> f64 {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let cand_total: u64 = cand.values().sum();
    let ref_total: u64 = refs.values().sum();
    if cand_total == 0 && ref_total == 0 {
        // both too short for this order: vacuous match
        return 1.0;
    }
    if cand_total == 0 || ref_total == 0 {
        return 0.0;
    }
    let overlap: u64 = cand
        .iter()
        .map(|(gram, count)| (*count).min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    f1_from(
        overlap as f64 / cand_total as f64,
        overlap as f64 / ref_total as f64,
    )
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// ROUGE-1/2 as clipped n-gram overlap F1 and ROUGE-L as LCS F1, with the
/// same tokenization as BLEU. Empty candidates score all zeros; empty
/// references are an error.
pub fn rouge(candidate: &str, reference: &str) -> Result<RougeScores> {
    let reference_tokens = tokenize(reference);
    if reference_tokens.is_empty() {
        return Err(Error::EmptyReference);
    }
    let candidate_tokens = tokenize(candidate);
    if candidate_tokens.is_empty() {
        return Ok(RougeScores {
            rouge1: 0.0,
            rouge2: 0.0,
            rouge_l: 0.0,
        });
    }
    let lcs = lcs_len(&candidate_tokens, &reference_tokens) as f64;
    let rouge_l = f1_from(
        lcs / candidate_tokens.len() as f64,
        lcs / reference_tokens.len() as f64,
    );
    Ok(RougeScores {
        rouge1: rouge_n(&candidate_tokens, &reference_tokens, 1),
        rouge2: rouge_n(&candidate_tokens, &reference_tokens, 2),
        rouge_l,
    })
}

/// BLEU-1/2/3 and ROUGE-1/2/L means over a corpus of candidate/reference
/// pairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationScores {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
}

pub fn generation_scores(pairs: &[(String, String)]) -> Result<GenerationScores> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = pairs.len() as f64;
    let (mut r1, mut r2, mut rl) = (0.0, 0.0, 0.0);
    for (candidate, reference) in pairs {
        let scores = rouge(candidate, reference)?;
        r1 += scores.rouge1;
        r2 += scores.rouge2;
        rl += scores.rouge_l;
    }
    Ok(GenerationScores {
        bleu1: bleu_corpus(pairs, 1)?,
        bleu2: bleu_corpus(pairs, 2)?,
        bleu3: bleu_corpus(pairs, 3)?,
        rouge1: r1 / n,
        rouge2: r2 / n,
        rouge_l: rl / n,
    })
}

/// Relative improvement in percent: (finetuned - base) / |base| * 100.
/// Undefined (None) when the base score is 0.
pub fn improvement(base: f64, finetuned: f64) -> Option<f64> {
    if base == 0.0 {
        return None;
    }
    Some((finetuned - base) / base.abs() * 100.0)
}
