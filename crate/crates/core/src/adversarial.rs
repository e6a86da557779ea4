//! Adversarial robustness: inject known bug patterns into clean contracts
//! and score how well models hold up against the resulting mutants.
//!
//! Injection only ever inserts whole lines, so deleting the injected span
//! from a mutant restores the original source byte-for-byte. The default
//! site appends a complete vulnerable function just before a contract's
//! closing brace, which keeps braces balanced by construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::LabelRecord;
use crate::corpus::{contract_bodies, extract_functions, ContractSample};
use crate::error::{Error, Result};
use crate::metrics::ClassificationReport;
use crate::prompts::{gold_labels, ModelVerdict};
use crate::taxonomy::{Severity, SeverityMap, VulnClass};

/// The classes covered by the injection study.
pub const INJECTABLE_CLASSES: [VulnClass; 3] = [
    VulnClass::Reentrancy,
    VulnClass::ArithmeticOverflowUnderflow,
    VulnClass::TxOrigin,
];

/// Where a snippet lands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectionSite {
    /// Insert a complete vulnerable function before a contract's closing
    /// brace (the default).
    NewFunction,
    /// Insert statements before a function body's closing brace.
    FunctionBodyEnd,
}

/// One requested mutation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MutationSpec {
    pub target_class: VulnClass,
    pub snippet_id: String,
    pub site: InjectionSite,
    pub seed: u64,
}

impl MutationSpec {
    pub fn new(target_class: VulnClass, snippet_id: impl Into<String>, seed: u64) -> MutationSpec {
        MutationSpec {
            target_class,
            snippet_id: snippet_id.into(),
            site: InjectionSite::NewFunction,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !INJECTABLE_CLASSES.contains(&self.target_class) {
            return Err(Error::NotInjectable(self.target_class.to_string()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnippetKind {
    /// A complete function declaration, for the new-function site.
    Function,
    /// Bare statements, for the function-body-end site.
    Statements,
}

/// One bug pattern from the bundled library.
#[derive(Debug, Clone)]
pub struct Snippet {
    pub id: &'static str,
    pub class: VulnClass,
    pub kind: SnippetKind,
    /// Declared function name for `Function` snippets.
    pub function_name: Option<&'static str>,
    pub text: &'static str,
}

/// The bundled snippet library, patterned on classic injected-bug corpora.
pub struct SnippetLibrary {
    snippets: Vec<Snippet>,
}

impl Default for SnippetLibrary {
    fn default() -> Self {
        use SnippetKind::*;
        use VulnClass::*;
        SnippetLibrary {
            snippets: vec![
                Snippet {
                    id: "reentrancy_withdraw",
                    class: Reentrancy,
                    kind: Function,
                    function_name: Some("withdrawPending_re"),
                    text: include_str!("../snippets/reentrancy_withdraw.sol"),
                },
                Snippet {
                    id: "reentrancy_claim",
                    class: Reentrancy,
                    kind: Function,
                    function_name: Some("claimReward_re"),
                    text: include_str!("../snippets/reentrancy_claim.sol"),
                },
                Snippet {
                    id: "reentrancy_stmt",
                    class: Reentrancy,
                    kind: Statements,
                    function_name: None,
                    text: include_str!("../snippets/reentrancy_stmt.sol"),
                },
                Snippet {
                    id: "txorigin_transfer",
                    class: TxOrigin,
                    kind: Function,
                    function_name: Some("transferOwnership_tx"),
                    text: include_str!("../snippets/txorigin_transfer.sol"),
                },
                Snippet {
                    id: "txorigin_withdraw",
                    class: TxOrigin,
                    kind: Function,
                    function_name: Some("withdrawAll_tx"),
                    text: include_str!("../snippets/txorigin_withdraw.sol"),
                },
                Snippet {
                    id: "txorigin_stmt",
                    class: TxOrigin,
                    kind: Statements,
                    function_name: None,
                    text: include_str!("../snippets/txorigin_stmt.sol"),
                },
                Snippet {
                    id: "arithmetic_sub",
                    class: ArithmeticOverflowUnderflow,
                    kind: Function,
                    function_name: Some("decreaseAllowance_ar"),
                    text: include_str!("../snippets/arithmetic_sub.sol"),
                },
                Snippet {
                    id: "arithmetic_lock",
                    class: ArithmeticOverflowUnderflow,
                    kind: Function,
                    function_name: Some("extendLock_ar"),
                    text: include_str!("../snippets/arithmetic_lock.sol"),
                },
                Snippet {
                    id: "arithmetic_stmt",
                    class: ArithmeticOverflowUnderflow,
                    kind: Statements,
                    function_name: None,
                    text: include_str!("../snippets/arithmetic_stmt.sol"),
                },
            ],
        }
    }
}

impl SnippetLibrary {
    pub fn get(&self, id: &str) -> Result<&Snippet> {
        self.snippets
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::UnknownSnippet(id.to_string()))
    }

    pub fn for_class(&self, class: VulnClass) -> Vec<&Snippet> {
        self.snippets.iter().filter(|s| s.class == class).collect()
    }

    /// Default new-function snippet for a class.
    pub fn default_for_class(&self, class: VulnClass) -> Result<&Snippet> {
        self.snippets
            .iter()
            .find(|s| s.class == class && s.kind == SnippetKind::Function)
            .ok_or_else(|| Error::NotInjectable(class.to_string()))
    }

    pub fn ids(&self) -> Vec<&'static str> {
        self.snippets.iter().map(|s| s.id).collect()
    }
}

/// A clean contract with a known bug inserted, carrying constructed ground
/// truth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mutant {
    pub id: String,
    pub base_id: String,
    pub mutated_source: String,
    /// 1-based inclusive line range of the inserted block in the mutated
    /// source.
    pub injected_span: (usize, usize),
    pub ground_truth: LabelRecord,
}

impl Mutant {
    /// Delete the injected lines; the result is the original source,
    /// byte-exact.
    pub fn restored_source(&self) -> String {
        let (start, end) = self.injected_span;
        self.mutated_source
            .split_inclusive('\n')
            .enumerate()
            .filter(|(idx, _)| {
                let line = idx + 1;
                line < start || line > end
            })
            .map(|(_, text)| text)
            .collect()
    }
}

/// Deterministic seeded pick of `n` non-vulnerable samples.
pub fn select_clean_samples<'a>(
    samples: &'a [ContractSample],
    labels: &[LabelRecord],
    n: usize,
    seed: u64,
) -> Result<Vec<&'a ContractSample>> {
    if n == 0 {
        return Err(Error::Config("requested 0 clean samples".into()));
    }
    let by_id: std::collections::HashMap<&str, &ContractSample> =
        samples.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut clean: Vec<&ContractSample> = Vec::new();
    for label in labels.iter().filter(|l| !l.vulnerable) {
        let sample = by_id
            .get(label.contract_id.as_str())
            .ok_or_else(|| Error::DanglingLabel(label.contract_id.clone()))?;
        clean.push(sample);
    }
    if clean.len() < n {
        return Err(Error::NotEnoughSamples {
            wanted: n,
            available: clean.len(),
        });
    }
    clean.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<&ContractSample> = Vec::with_capacity(n);
    let mut indices: Vec<usize> = (0..clean.len()).collect();
    for _ in 0..n {
        let at = rng.gen_range(0..indices.len());
        picked.push(clean[indices.swap_remove(at)]);
    }
    picked.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(picked)
}

/// Inject one snippet into one sample at a seed-chosen valid site.
pub fn inject(
    sample: &ContractSample,
    spec: &MutationSpec,
    library: &SnippetLibrary,
    severities: &SeverityMap,
) -> Result<Mutant> {
    spec.validate()?;
    let snippet = library.get(&spec.snippet_id)?;
    if snippet.class != spec.target_class {
        return Err(Error::Config(format!(
            "snippet `{}` injects {}, not {}",
            snippet.id, snippet.class, spec.target_class
        )));
    }
    let expected_kind = match spec.site {
        InjectionSite::NewFunction => SnippetKind::Function,
        InjectionSite::FunctionBodyEnd => SnippetKind::Statements,
    };
    if snippet.kind != expected_kind {
        return Err(Error::Config(format!(
            "snippet `{}` does not fit the {:?} site",
            snippet.id, spec.site
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (insert_before_line, host_function) = match spec.site {
        InjectionSite::NewFunction => {
            let bodies = contract_bodies(&sample.source)?;
            // the closing brace must sit below the opening one so a whole
            // inserted line lands inside the body
            let usable: Vec<_> = bodies
                .iter()
                .filter(|b| b.close_line > b.open_line)
                .collect();
            if usable.is_empty() {
                return Err(Error::NoInjectionSite(sample.id.clone()));
            }
            let body = usable[rng.gen_range(0..usable.len())];
            (body.close_line, None)
        }
        InjectionSite::FunctionBodyEnd => {
            let functions = extract_functions(&sample.source)?;
            let usable: Vec<_> = functions
                .iter()
                .filter(|f| f.end_line > f.start_line)
                .collect();
            if usable.is_empty() {
                return Err(Error::NoInjectionSite(sample.id.clone()));
            }
            let function = usable[rng.gen_range(0..usable.len())];
            (function.end_line, Some(function.name.clone()))
        }
    };

    let indent = "    ";
    let snippet_lines: Vec<String> = snippet
        .text
        .lines()
        .map(|l| {
            if l.is_empty() {
                l.to_string()
            } else {
                format!("{indent}{l}")
            }
        })
        .collect();

    let mut mutated = String::with_capacity(sample.source.len() + snippet.text.len() + 64);
    let mut injected_start = 0usize;
    for (idx, line) in sample.source.split_inclusive('\n').enumerate() {
        if idx + 1 == insert_before_line {
            injected_start = idx + 1;
            for snippet_line in &snippet_lines {
                mutated.push_str(snippet_line);
                mutated.push('\n');
            }
        }
        mutated.push_str(line);
    }
    if injected_start == 0 {
        return Err(Error::NoInjectionSite(sample.id.clone()));
    }
    let injected_span = (injected_start, injected_start + snippet_lines.len() - 1);

    // the mutant must still tokenize with balanced braces
    extract_functions(&mutated)?;

    let severity = severities.default_severity(spec.target_class);
    let id = format!("{}__{}", sample.id, snippet.id);
    let ground_truth = LabelRecord {
        contract_id: id.clone(),
        vulnerable: true,
        class: Some(spec.target_class),
        severity,
        vulnerable_function: snippet.function_name.map(str::to_string).or(host_function),
        vulnerable_lines: (injected_span.0..=injected_span.1).collect(),
        secondary_classes: Vec::new(),
    };

    Ok(Mutant {
        id,
        base_id: sample.id.clone(),
        mutated_source: mutated,
        injected_span,
        ground_truth,
    })
}

/// Reports for the three sub-tasks over a mutant set. All gold labels are
/// positive by construction, so binary true negatives are structurally 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub presence: ClassificationReport,
    pub vuln_type: ClassificationReport,
    pub severity: ClassificationReport,
}

/// Score verdicts against mutant ground truth, one verdict per mutant id.
pub fn robustness_eval(
    mutants: &[Mutant],
    verdicts: &[(String, ModelVerdict)],
) -> Result<RobustnessReport> {
    if mutants.len() != verdicts.len() {
        return Err(Error::VerdictMismatch(format!(
            "{} mutants vs {} verdicts",
            mutants.len(),
            verdicts.len()
        )));
    }
    let by_id: std::collections::HashMap<&str, &ModelVerdict> =
        verdicts.iter().map(|(id, v)| (id.as_str(), v)).collect();

    let mut presence_gold = Vec::new();
    let mut presence_pred = Vec::new();
    let mut type_gold = Vec::new();
    let mut type_pred = Vec::new();
    let mut severity_gold = Vec::new();
    let mut severity_pred = Vec::new();

    for mutant in mutants {
        let verdict = by_id
            .get(mutant.id.as_str())
            .ok_or_else(|| Error::VerdictMismatch(format!("no verdict for `{}`", mutant.id)))?;
        let (g_presence, g_type, g_severity) = gold_labels(&mutant.ground_truth);
        presence_gold.push(g_presence.to_string());
        presence_pred.push(verdict.presence_label().to_string());
        type_gold.push(g_type);
        type_pred.push(verdict.class_label());
        severity_gold.push(g_severity);
        severity_pred.push(verdict.severity_label());
    }

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

    Ok(RobustnessReport {
        presence: crate::metrics::classification_report(
            &presence_gold,
            &presence_pred,
            &presence_classes,
        )?,
        vuln_type: crate::metrics::classification_report(&type_gold, &type_pred, &type_classes)?,
        severity: crate::metrics::classification_report(
            &severity_gold,
            &severity_pred,
            &severity_classes,
        )?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts::{parse_verdict, render_gold};

    fn clean_sample(id: &str) -> ContractSample {
        let source = format!(
            "pragma solidity ^0.5.0;\ncontract Safe_{id} {{\n    uint256 total;\n    function add_{id}(uint256 v) public {{\n        total = v;\n    }}\n}}\n"
        );
        ContractSample::from_source(id, source).unwrap()
    }

    #[test]
    fn txorigin_injection_carries_the_marker_token() {
        let sample = clean_sample("a");
        let spec = MutationSpec::new(VulnClass::TxOrigin, "txorigin_transfer", 7);
        let mutant = inject(
            &sample,
            &spec,
            &SnippetLibrary::default(),
            &SeverityMap::default(),
        )
        .unwrap();
        assert!(mutant.mutated_source.contains("tx.origin"));
        assert!(mutant.ground_truth.vulnerable);
        assert_eq!(mutant.ground_truth.class, Some(VulnClass::TxOrigin));
        assert_eq!(
            mutant.ground_truth.severity,
            SeverityMap::default().default_severity(VulnClass::TxOrigin)
        );
    }

    #[test]
    fn reentrancy_snippet_has_call_then_state_write() {
        let library = SnippetLibrary::default();
        let snippet = library.get("reentrancy_withdraw").unwrap();
        let call_at = snippet.text.find(".call").expect("external call present");
        let write_at = snippet.text.rfind("-=").expect("state write present");
        assert!(
            call_at < write_at,
            "state write must follow the external call"
        );

        let sample = clean_sample("b");
        let spec = MutationSpec::new(VulnClass::Reentrancy, "reentrancy_withdraw", 3);
        let mutant = inject(&sample, &spec, &library, &SeverityMap::default()).unwrap();
        assert!(mutant.mutated_source.contains(".call.value"));
    }

    #[test]
    fn deleting_injected_span_restores_original_bytes() {
        let sample = clean_sample("c");
        for (class, snippet_id) in [
            (VulnClass::Reentrancy, "reentrancy_claim"),
            (VulnClass::TxOrigin, "txorigin_withdraw"),
            (VulnClass::ArithmeticOverflowUnderflow, "arithmetic_lock"),
        ] {
            let spec = MutationSpec::new(class, snippet_id, 11);
            let mutant = inject(
                &sample,
                &spec,
                &SnippetLibrary::default(),
                &SeverityMap::default(),
            )
            .unwrap();
            assert_eq!(mutant.restored_source(), sample.source);
        }
    }

    #[test]
    fn new_function_site_adds_exactly_one_function() {
        let sample = clean_sample("d");
        let base_count = sample.functions.len();
        let spec = MutationSpec::new(VulnClass::ArithmeticOverflowUnderflow, "arithmetic_sub", 5);
        let mutant = inject(
            &sample,
            &spec,
            &SnippetLibrary::default(),
            &SeverityMap::default(),
        )
        .unwrap();
        let mutated_functions = extract_functions(&mutant.mutated_source).unwrap();
        assert_eq!(mutated_functions.len(), base_count + 1);
    }

    #[test]
    fn body_end_site_uses_statement_snippets() {
        let sample = clean_sample("e");
        let mut spec = MutationSpec::new(VulnClass::TxOrigin, "txorigin_stmt", 5);
        spec.site = InjectionSite::FunctionBodyEnd;
        let mutant = inject(
            &sample,
            &spec,
            &SnippetLibrary::default(),
            &SeverityMap::default(),
        )
        .unwrap();
        assert!(mutant.mutated_source.contains("tx.origin"));
        assert_eq!(mutant.restored_source(), sample.source);
        // statements land inside a function, so the count is unchanged
        let mutated_functions = extract_functions(&mutant.mutated_source).unwrap();
        assert_eq!(mutated_functions.len(), sample.functions.len());
    }

    #[test]
    fn injection_is_deterministic() {
        let sample = clean_sample("f");
        let spec = MutationSpec::new(VulnClass::Reentrancy, "reentrancy_withdraw", 21);
        let library = SnippetLibrary::default();
        let severities = SeverityMap::default();
        let a = inject(&sample, &spec, &library, &severities).unwrap();
        let b = inject(&sample, &spec, &library, &severities).unwrap();
        assert_eq!(a.mutated_source, b.mutated_source);
        assert_eq!(a.injected_span, b.injected_span);
    }

    #[test]
    fn unknown_snippet_and_wrong_class_error() {
        let sample = clean_sample("g");
        let library = SnippetLibrary::default();
        let severities = SeverityMap::default();
        let spec = MutationSpec::new(VulnClass::Reentrancy, "no_such_snippet", 1);
        assert!(matches!(
            inject(&sample, &spec, &library, &severities),
            Err(Error::UnknownSnippet(_))
        ));
        let spec = MutationSpec::new(VulnClass::Reentrancy, "txorigin_transfer", 1);
        assert!(matches!(
            inject(&sample, &spec, &library, &severities),
            Err(Error::Config(_))
        ));
        let spec = MutationSpec::new(VulnClass::GaslessSend, "reentrancy_claim", 1);
        assert!(matches!(
            inject(&sample, &spec, &library, &severities),
            Err(Error::NotInjectable(_))
        ));
    }

    #[test]
    fn no_contract_body_means_no_site() {
        let sample = ContractSample::from_source("empty", "pragma solidity ^0.8.0;").unwrap();
        let spec = MutationSpec::new(VulnClass::TxOrigin, "txorigin_transfer", 1);
        assert!(matches!(
            inject(
                &sample,
                &spec,
                &SnippetLibrary::default(),
                &SeverityMap::default()
            ),
            Err(Error::NoInjectionSite(_))
        ));
    }

    #[test]
    fn clean_selection_is_seeded_and_validated() {
        let samples: Vec<ContractSample> =
            (0..10).map(|i| clean_sample(&format!("s{i}"))).collect();
        let labels: Vec<LabelRecord> = (0..10)
            .map(|i| LabelRecord::clean(format!("s{i}")))
            .collect();
        let a = select_clean_samples(&samples, &labels, 5, 9).unwrap();
        let b = select_clean_samples(&samples, &labels, 5, 9).unwrap();
        assert_eq!(
            a.iter().map(|s| &s.id).collect::<Vec<_>>(),
            b.iter().map(|s| &s.id).collect::<Vec<_>>()
        );
        assert!(select_clean_samples(&samples, &labels, 11, 9).is_err());
        assert!(select_clean_samples(&samples, &labels, 0, 9).is_err());
    }

    #[test]
    fn oracle_verdicts_score_perfectly() {
        let library = SnippetLibrary::default();
        let severities = SeverityMap::default();
        let mut mutants = Vec::new();
        for i in 0..6 {
            let sample = clean_sample(&format!("m{i}"));
            let class = INJECTABLE_CLASSES[i % 3];
            let snippet = library.default_for_class(class).unwrap();
            let spec = MutationSpec::new(class, snippet.id, i as u64);
            mutants.push(inject(&sample, &spec, &library, &severities).unwrap());
        }
        let verdicts: Vec<(String, ModelVerdict)> = mutants
            .iter()
            .map(|m| (m.id.clone(), parse_verdict(&render_gold(&m.ground_truth))))
            .collect();
        let report = robustness_eval(&mutants, &verdicts).unwrap();
        assert_eq!(report.presence.precision, 1.0);
        assert_eq!(report.presence.recall, 1.0);
        assert_eq!(report.presence.f1, 1.0);
        assert_eq!(report.vuln_type.f1, 1.0);
        assert_eq!(report.severity.f1, 1.0);
    }

    #[test]
    fn constant_no_scores_zero_recall() {
        let library = SnippetLibrary::default();
        let severities = SeverityMap::default();
        let sample = clean_sample("n");
        let spec = MutationSpec::new(VulnClass::Reentrancy, "reentrancy_withdraw", 2);
        let mutant = inject(&sample, &spec, &library, &severities).unwrap();
        let verdicts = vec![(mutant.id.clone(), parse_verdict("Vulnerability: No"))];
        let report = robustness_eval(&[mutant], &verdicts).unwrap();
        assert_eq!(report.presence.recall, 0.0);
        assert_eq!(report.presence.f1, 0.0);
    }
}
