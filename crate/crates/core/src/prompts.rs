//! Prompt rendering for the three prompting strategies, and parsing of model
//! responses into structured verdicts.
//!
//! Every prompt imposes the same fixed output grammar
//! (`Vulnerability: <Yes|No>; Type: <class|None>; Severity:
//! <High|Medium|Low|None>`), because generations are scored as
//! classifications and that only works when the labels are extractable.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotate::LabelRecord;
use crate::corpus::ContractSample;
use crate::error::{Error, Result};
use crate::taxonomy::{Severity, VulnClass};

/// Prompting strategy for one evaluation run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PromptStrategy {
    ZeroShot,
    FewShot {
        #[serde(default = "default_few_shot_k")]
        k: usize,
        #[serde(default)]
        exemplar_seed: u64,
    },
    ChainOfThought {
        #[serde(default = "default_steps_id")]
        steps: String,
    },
}

fn default_few_shot_k() -> usize {
    3
}

fn default_steps_id() -> String {
    "default".to_string()
}

impl PromptStrategy {
    /// Short label used in result files and table names.
    pub fn label(&self) -> String {
        match self {
            PromptStrategy::ZeroShot => "zero_shot".to_string(),
            PromptStrategy::FewShot { k, .. } => format!("few_shot_k{k}"),
            PromptStrategy::ChainOfThought { .. } => "chain_of_thought".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let PromptStrategy::FewShot { k, .. } = self {
            if *k < 1 {
                return Err(Error::Config("few-shot k must be >= 1".to_string()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Message {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Message {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Message {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

/// An ordered chat: one system message, then alternating user/assistant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Conversation {
    pub messages: Vec<Message>,
}

impl Conversation {
    pub fn new(messages: Vec<Message>) -> Result<Conversation> {
        let conv = Conversation { messages };
        conv.validate()?;
        Ok(conv)
    }

    pub fn validate(&self) -> Result<()> {
        if self.messages.first().map(|m| m.role) != Some(Role::System) {
            return Err(Error::Config(
                "conversation must start with a system message".into(),
            ));
        }
        let mut expect_user = true;
        for message in &self.messages[1..] {
            let expected = if expect_user {
                Role::User
            } else {
                Role::Assistant
            };
            if message.role != expected {
                return Err(Error::Config(
                    "conversation roles must alternate user/assistant".into(),
                ));
            }
            expect_user = !expect_user;
        }
        Ok(())
    }
}

/// One labeled exemplar available for few-shot prompting.
#[derive(Debug, Clone)]
pub struct Exemplar {
    pub id: String,
    pub code: String,
    pub label: LabelRecord,
}

/// The plain-text templates a prompt is rendered from. Placeholders:
/// `{{code}}` for the contract source, `{{steps}}` for the reasoning steps,
/// and `{{exemplars}}` for the exemplar count (usable in custom system
/// templates).
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub system: String,
    pub user: String,
    pub user_cot: String,
    pub steps: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let mut steps = BTreeMap::new();
        steps.insert(
            "default".to_string(),
            include_str!("../templates/steps_default.txt").to_string(),
        );
        TemplateSet {
            system: include_str!("../templates/system.txt").to_string(),
            user: include_str!("../templates/user.txt").to_string(),
            user_cot: include_str!("../templates/user_cot.txt").to_string(),
            steps,
        }
    }
}

impl TemplateSet {
    /// Load `system.txt`, `user.txt`, `user_cot.txt`, and every
    /// `steps_<id>.txt` from a directory. Missing files fall back to the
    /// bundled defaults.
    pub fn load(dir: &Path) -> Result<TemplateSet> {
        let mut set = TemplateSet::default();
        let read = |name: &str| -> Result<Option<String>> {
            let path = dir.join(name);
            if path.is_file() {
                Ok(Some(std::fs::read_to_string(&path)?))
            } else {
                Ok(None)
            }
        };
        if let Some(text) = read("system.txt")? {
            set.system = text;
        }
        if let Some(text) = read("user.txt")? {
            set.user = text;
        }
        if let Some(text) = read("user_cot.txt")? {
            set.user_cot = text;
        }
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().to_string();
            if let Some(id) = name
                .strip_prefix("steps_")
                .and_then(|n| n.strip_suffix(".txt"))
            {
                set.steps
                    .insert(id.to_string(), std::fs::read_to_string(entry.path())?);
            }
        }
        Ok(set)
    }
}

fn render(template: &str, code: &str, steps: &str, exemplars: usize) -> String {
    template
        .replace("{{code}}", code)
        .replace("{{steps}}", steps)
        .replace("{{exemplars}}", &exemplars.to_string())
}

/// Render one sample into a chat conversation under the given strategy.
///
/// Zero-shot yields `[system, user]`. Few-shot prepends `k` exemplar
/// user/assistant pairs, chosen class-stratified and deterministically from
/// `exemplar_seed`; the pool must not contain the target sample.
/// Chain-of-thought embeds the numbered reasoning steps in the user message.
pub fn build_prompt(
    sample: &ContractSample,
    strategy: &PromptStrategy,
    exemplar_pool: &[Exemplar],
    templates: &TemplateSet,
) -> Result<Conversation> {
    strategy.validate()?;
    let mut messages = Vec::new();

    match strategy {
        PromptStrategy::ZeroShot => {
            messages.push(Message::system(render(&templates.system, "", "", 0)));
            messages.push(Message::user(render(
                &templates.user,
                &sample.normalized,
                "",
                0,
            )));
        }
        PromptStrategy::FewShot { k, exemplar_seed } => {
            if let Some(leak) = exemplar_pool.iter().find(|e| e.id == sample.id) {
                return Err(Error::ExemplarLeak(leak.id.clone()));
            }
            if exemplar_pool.len() < *k {
                return Err(Error::ExemplarPoolTooSmall {
                    wanted: *k,
                    available: exemplar_pool.len(),
                });
            }
            let chosen = pick_exemplars(exemplar_pool, *k, *exemplar_seed);
            messages.push(Message::system(render(&templates.system, "", "", *k)));
            for exemplar in chosen {
                messages.push(Message::user(render(
                    &templates.user,
                    &exemplar.code,
                    "",
                    *k,
                )));
                messages.push(Message::assistant(render_gold(&exemplar.label)));
            }
            messages.push(Message::user(render(
                &templates.user,
                &sample.normalized,
                "",
                *k,
            )));
        }
        PromptStrategy::ChainOfThought { steps } => {
            let step_text = templates
                .steps
                .get(steps)
                .ok_or_else(|| Error::Config(format!("unknown step template `{steps}`")))?;
            messages.push(Message::system(render(&templates.system, "", "", 0)));
            messages.push(Message::user(render(
                &templates.user_cot,
                &sample.normalized,
                step_text.trim_end(),
                0,
            )));
        }
    }
    Conversation::new(messages)
}

/// Class-stratified deterministic exemplar choice: group the pool by gold
/// class, shuffle within groups by seed, then round-robin across groups in
/// canonical order until `k` are taken.
fn pick_exemplars(pool: &[Exemplar], k: usize, seed: u64) -> Vec<&Exemplar> {
    let mut groups: BTreeMap<Option<VulnClass>, Vec<&Exemplar>> = BTreeMap::new();
    for exemplar in pool {
        groups
            .entry(exemplar.label.class)
            .or_default()
            .push(exemplar);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut queues: Vec<Vec<&Exemplar>> = groups
        .into_values()
        .map(|mut members| {
            members.shuffle(&mut rng);
            members
        })
        .collect();

    let mut chosen = Vec::with_capacity(k);
    while chosen.len() < k {
        let mut took_any = false;
        for queue in queues.iter_mut() {
            if chosen.len() == k {
                break;
            }
            if let Some(exemplar) = queue.pop() {
                chosen.push(exemplar);
                took_any = true;
            }
        }
        if !took_any {
            break;
        }
    }
    chosen
}

/// Presence verdict extracted from a model response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Presence {
    Yes,
    No,
    Unparseable,
}

/// Structured parse of a model response: the (presence, type, severity)
/// estimate plus the raw text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelVerdict {
    pub presence: Presence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<VulnClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<Severity>,
    pub raw: String,
}

impl ModelVerdict {
    pub fn unparseable(raw: impl Into<String>) -> ModelVerdict {
        ModelVerdict {
            presence: Presence::Unparseable,
            class: None,
            severity: None,
            raw: raw.into(),
        }
    }

    /// Label used when scoring the presence sub-task.
    pub fn presence_label(&self) -> &'static str {
        match self.presence {
            Presence::Yes => "Yes",
            Presence::No => "No",
            Presence::Unparseable => "Unparseable",
        }
    }

    /// Label used when scoring the type sub-task. `Unparseable` maps to a
    /// reserved class so it always scores as a wrong prediction.
    pub fn class_label(&self) -> String {
        match self.presence {
            Presence::Unparseable => "Unparseable".to_string(),
            _ => match self.class {
                Some(class) => class.canonical().to_string(),
                None => "None".to_string(),
            },
        }
    }

    /// Label used when scoring the severity sub-task. A `No` verdict means
    /// the model asserts there is nothing to rate, which corresponds to the
    /// `NotMentioned` gold value on clean contracts.
    pub fn severity_label(&self) -> String {
        match self.presence {
            Presence::Unparseable => "Unparseable".to_string(),
            Presence::No => Severity::NotMentioned.canonical().to_string(),
            Presence::Yes => match self.severity {
                Some(sev) => sev.canonical().to_string(),
                None => "None".to_string(),
            },
        }
    }
}

/// Gold labels for scoring, in the same label space the verdict helpers use.
pub fn gold_labels(label: &LabelRecord) -> (&'static str, String, String) {
    let presence = if label.vulnerable { "Yes" } else { "No" };
    let class = match label.class {
        Some(class) => class.canonical().to_string(),
        None => "None".to_string(),
    };
    (presence, class, label.severity.canonical().to_string())
}

/// Extract a structured verdict from free-form response text.
///
/// Labeled fields are matched case-insensitively, tolerating surrounding
/// prose, markdown markers, and either newline- or semicolon-separated
/// fields. Class and severity strings go through the three-stage fuzzy
/// match. A response with no recognizable field is `Unparseable` unless it
/// plainly states that nothing was found.
pub fn parse_verdict(text: &str) -> ModelVerdict {
    #[derive(Clone, Copy)]
    enum Field {
        Presence,
        Class,
        Severity,
    }

    // keys are matched on the trailing words before a colon, so prefixes
    // like "Final answer:" or markdown list markers do not hide a field
    fn field_for(key: &str) -> Option<Field> {
        match key {
            "vulnerability" | "vulnerable" | "vulnerability detected" | "vulnerability present" => {
                Some(Field::Presence)
            }
            "type"
            | "vulnerability type"
            | "vulnerability class"
            | "class"
            | "type of vulnerability" => Some(Field::Class),
            "severity" | "severity level" | "vulnerability severity" => Some(Field::Severity),
            _ => None,
        }
    }

    fn match_key(part: &str) -> Option<Field> {
        let normalized: String = part
            .chars()
            .map(|c| {
                if c.is_alphanumeric() {
                    c.to_ascii_lowercase()
                } else {
                    ' '
                }
            })
            .collect();
        let words: Vec<&str> = normalized
            .split_whitespace()
            .filter(|w| !w.chars().all(|c| c.is_ascii_digit()))
            .collect();
        let longest = words.len().min(3);
        for take in (1..=longest).rev() {
            if let Some(field) = field_for(&words[words.len() - take..].join(" ")) {
                return Some(field);
            }
        }
        None
    }

    let mut presence: Option<Presence> = None;
    let mut class: Option<VulnClass> = None;
    let mut class_seen = false;
    let mut severity: Option<Severity> = None;

    // later occurrences win, so a chain-of-thought final answer overrides
    // field mentions from the reasoning body
    for segment in text.lines().flat_map(|line| line.split(';')) {
        let parts: Vec<&str> = segment.split(':').collect();
        for i in 0..parts.len().saturating_sub(1) {
            let Some(field) = match_key(parts[i]) else {
                continue;
            };
            let value = parts[i + 1].trim().trim_matches('*').trim();
            match field {
                Field::Presence => {
                    let first = value
                        .split_whitespace()
                        .next()
                        .unwrap_or("")
                        .trim_matches(|c: char| !c.is_alphanumeric())
                        .to_lowercase();
                    match first.as_str() {
                        "yes" => presence = Some(Presence::Yes),
                        "no" => presence = Some(Presence::No),
                        _ => {}
                    }
                }
                Field::Class => {
                    // a list keeps only its first entry (the primary class)
                    let primary = value.split(',').next().unwrap_or(value).trim();
                    class_seen = true;
                    class = if is_none_marker(value) || is_none_marker(primary) {
                        None
                    } else {
                        VulnClass::fuzzy_parse(value).or_else(|| VulnClass::fuzzy_parse(primary))
                    };
                }
                Field::Severity => {
                    let primary = value.split(',').next().unwrap_or(value).trim();
                    severity = if is_none_marker(value) || is_none_marker(primary) {
                        None
                    } else {
                        Severity::fuzzy_parse(value).or_else(|| Severity::fuzzy_parse(primary))
                    };
                }
            }
        }
    }

    // fallback: a bare "nothing found" sentence still counts as a No
    if presence.is_none() && !class_seen {
        let folded = text.to_lowercase();
        if folded.contains("no vulnerability")
            || folded.contains("no vulnerabilities")
            || folded.contains("not vulnerable")
        {
            presence = Some(Presence::No);
        }
    }

    match presence {
        Some(Presence::Yes) => ModelVerdict {
            presence: Presence::Yes,
            class,
            severity,
            raw: text.to_string(),
        },
        Some(Presence::No) => ModelVerdict {
            presence: Presence::No,
            class: None,
            severity: None,
            raw: text.to_string(),
        },
        _ => ModelVerdict::unparseable(text),
    }
}

fn is_none_marker(value: &str) -> bool {
    let folded = value
        .trim_matches(|c: char| !c.is_alphanumeric() && c != '/')
        .to_lowercase();
    matches!(folded.as_str(), "none" | "n/a" | "na" | "" | "nil")
}

/// Render a gold label in the exact grammar `parse_verdict` accepts, for
/// fine-tune targets and few-shot exemplar answers.
pub fn render_gold(label: &LabelRecord) -> String {
    if label.vulnerable {
        let class = label.class.map(|c| c.canonical()).unwrap_or("None");
        format!(
            "Vulnerability: Yes\nType: {}\nSeverity: {}",
            class,
            label.severity.canonical()
        )
    } else {
        "Vulnerability: No\nType: None\nSeverity: None".to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str) -> ContractSample {
        ContractSample::from_source(id, format!("contract C_{id} {{ uint x; }}")).unwrap()
    }

    fn exemplar(id: &str, class: Option<VulnClass>) -> Exemplar {
        let label = match class {
            Some(c) => LabelRecord::vulnerable(id, c, Severity::High),
            None => LabelRecord::clean(id),
        };
        Exemplar {
            id: id.to_string(),
            code: format!("contract E_{id} {{}}"),
            label,
        }
    }

    #[test]
    fn zero_shot_is_system_then_user() {
        let conv = build_prompt(
            &sample("t1"),
            &PromptStrategy::ZeroShot,
            &[],
            &TemplateSet::default(),
        )
        .unwrap();
        assert_eq!(conv.messages.len(), 2);
        assert_eq!(conv.messages[0].role, Role::System);
        assert_eq!(conv.messages[1].role, Role::User);
        assert!(conv.messages[1].content.contains("contract C_t1"));
        assert!(conv.messages[0].content.contains(
            "Vulnerability: <Yes|No>; Type: <class|None>; Severity: <High|Medium|Low|None>"
        ));
    }

    #[test]
    fn few_shot_structure_and_no_leakage() {
        let pool = vec![
            exemplar("e1", Some(VulnClass::Reentrancy)),
            exemplar("e2", Some(VulnClass::TxOrigin)),
            exemplar("e3", None),
            exemplar("e4", Some(VulnClass::AccessControl)),
        ];
        let conv = build_prompt(
            &sample("t1"),
            &PromptStrategy::FewShot {
                k: 3,
                exemplar_seed: 5,
            },
            &pool,
            &TemplateSet::default(),
        )
        .unwrap();
        // 1 system + 3 x (user, assistant) + final user
        assert_eq!(conv.messages.len(), 8);
        assert_eq!(conv.messages[0].role, Role::System);
        for pair in conv.messages[1..7].chunks(2) {
            assert_eq!(pair[0].role, Role::User);
            assert_eq!(pair[1].role, Role::Assistant);
        }
        assert_eq!(conv.messages[7].role, Role::User);
        assert!(!conv
            .messages
            .iter()
            .any(|m| m.content.contains("contract E_t1")));
    }

    #[test]
    fn few_shot_rejects_leak_and_small_pool() {
        let pool = vec![exemplar("t1", None), exemplar("e2", None)];
        let err = build_prompt(
            &sample("t1"),
            &PromptStrategy::FewShot {
                k: 1,
                exemplar_seed: 0,
            },
            &pool,
            &TemplateSet::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ExemplarLeak(_)));

        let pool = vec![exemplar("e2", None)];
        let err = build_prompt(
            &sample("t1"),
            &PromptStrategy::FewShot {
                k: 3,
                exemplar_seed: 0,
            },
            &pool,
            &TemplateSet::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ExemplarPoolTooSmall { .. }));
    }

    #[test]
    fn chain_of_thought_contains_step_markers() {
        let conv = build_prompt(
            &sample("t1"),
            &PromptStrategy::ChainOfThought {
                steps: "default".into(),
            },
            &[],
            &TemplateSet::default(),
        )
        .unwrap();
        let user = &conv.messages[1].content;
        for marker in ["1.", "2.", "3.", "4.", "5.", "6.", "7."] {
            assert!(user.contains(marker), "missing step marker {marker}");
        }
    }

    #[test]
    fn build_prompt_is_deterministic() {
        let pool: Vec<Exemplar> = (0..6)
            .map(|i| exemplar(&format!("e{i}"), Some(VulnClass::ALL[i])))
            .collect();
        let strategy = PromptStrategy::FewShot {
            k: 4,
            exemplar_seed: 42,
        };
        let templates = TemplateSet::default();
        let a = build_prompt(&sample("t1"), &strategy, &pool, &templates).unwrap();
        let b = build_prompt(&sample("t1"), &strategy, &pool, &templates).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parse_canonical_form() {
        let v = parse_verdict("Vulnerability: Yes\nType: Reentrancy\nSeverity: High");
        assert_eq!(v.presence, Presence::Yes);
        assert_eq!(v.class, Some(VulnClass::Reentrancy));
        assert_eq!(v.severity, Some(Severity::High));
    }

    #[test]
    fn parse_semicolon_form() {
        let v = parse_verdict("Vulnerability: No; Type: None; Severity: None");
        assert_eq!(v.presence, Presence::No);
        assert_eq!(v.class, None);
        assert_eq!(v.severity, None);
    }

    #[test]
    fn parse_prose_no_fallback() {
        let v = parse_verdict("No vulnerability detected in this contract.");
        assert_eq!(v.presence, Presence::No);
        assert_eq!(v.class, None);
        assert_eq!(v.severity, None);
    }

    #[test]
    fn parse_refusal_is_unparseable() {
        let v = parse_verdict("As an AI model, I cannot review smart contracts.");
        assert_eq!(v.presence, Presence::Unparseable);
        assert_eq!(v.class, None);
        assert_eq!(v.severity, None);
    }

    #[test]
    fn no_verdict_forces_class_and_severity_empty() {
        let v = parse_verdict("Vulnerability: No\nType: Reentrancy\nSeverity: High");
        assert_eq!(v.presence, Presence::No);
        assert_eq!(v.class, None);
        assert_eq!(v.severity, None);
    }

    #[test]
    fn round_trip_over_all_label_combinations() {
        let severities = [Severity::High, Severity::Medium, Severity::Low];
        let mut combos = 0;
        for class in VulnClass::ALL {
            for sev in severities {
                let label = LabelRecord::vulnerable("c", class, sev);
                let v = parse_verdict(&render_gold(&label));
                assert_eq!(v.presence, Presence::Yes);
                assert_eq!(v.class, Some(class));
                assert_eq!(v.severity, Some(sev));
                combos += 1;
            }
        }
        let clean = LabelRecord::clean("c");
        let v = parse_verdict(&render_gold(&clean));
        assert_eq!(v.presence, Presence::No);
        assert_eq!(v.class, None);
        assert_eq!(v.severity, None);
        combos += 1;
        assert_eq!(combos, 40);
    }
}
