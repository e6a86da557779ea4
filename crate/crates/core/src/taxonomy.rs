//! Vulnerability taxonomy: the 13-class catalog, the severity scale, and the
//! mapping from raw detector labels into the catalog.
//!
//! Canonical class names are the bit-exact strings used in prompts, label
//! files, and verdict parsing. Variant declaration order is alphabetical by
//! canonical name, and that order doubles as the deterministic tie-break
//! order everywhere ties need breaking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The closed set of vulnerability classes under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VulnClass {
    AccessControl,
    ArithmeticOverflowUnderflow,
    BadRandomness,
    DenialOfService,
    FrontRunning,
    GaslessSend,
    Reentrancy,
    ShortAddresses,
    TimeManipulation,
    TxOrigin,
    UncheckedLowLevelCall,
    UnsafeDelegateCall,
    UnsafeSuicide,
}

pub const CLASS_COUNT: usize = 13;

impl VulnClass {
    /// All classes in canonical (alphabetical) order.
    pub const ALL: [VulnClass; CLASS_COUNT] = [
        VulnClass::AccessControl,
        VulnClass::ArithmeticOverflowUnderflow,
        VulnClass::BadRandomness,
        VulnClass::DenialOfService,
        VulnClass::FrontRunning,
        VulnClass::GaslessSend,
        VulnClass::Reentrancy,
        VulnClass::ShortAddresses,
        VulnClass::TimeManipulation,
        VulnClass::TxOrigin,
        VulnClass::UncheckedLowLevelCall,
        VulnClass::UnsafeDelegateCall,
        VulnClass::UnsafeSuicide,
    ];

    pub fn canonical(&self) -> &'static str {
        match self {
            VulnClass::AccessControl => "AccessControl",
            VulnClass::ArithmeticOverflowUnderflow => "ArithmeticOverflowUnderflow",
            VulnClass::BadRandomness => "BadRandomness",
            VulnClass::DenialOfService => "DenialOfService",
            VulnClass::FrontRunning => "FrontRunning",
            VulnClass::GaslessSend => "GaslessSend",
            VulnClass::Reentrancy => "Reentrancy",
            VulnClass::ShortAddresses => "ShortAddresses",
            VulnClass::TimeManipulation => "TimeManipulation",
            VulnClass::TxOrigin => "TxOrigin",
            VulnClass::UncheckedLowLevelCall => "UncheckedLowLevelCall",
            VulnClass::UnsafeDelegateCall => "UnsafeDelegateCall",
            VulnClass::UnsafeSuicide => "UnsafeSuicide",
        }
    }

    /// Exact parse of a canonical name.
    pub fn parse(name: &str) -> Result<VulnClass> {
        VulnClass::ALL
            .iter()
            .copied()
            .find(|c| c.canonical() == name)
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    /// Three-stage fuzzy match: exact canonical, then case-folded, then with
    /// all non-alphanumeric characters stripped. Anything looser is refused
    /// so that sloppy model output is never silently credited.
    pub fn fuzzy_parse(text: &str) -> Option<VulnClass> {
        let trimmed = text.trim();
        if let Ok(c) = VulnClass::parse(trimmed) {
            return Some(c);
        }
        let folded = trimmed.to_lowercase();
        if let Some(c) = VulnClass::ALL
            .iter()
            .copied()
            .find(|c| c.canonical().to_lowercase() == folded)
        {
            return Some(c);
        }
        let stripped = strip_key(trimmed);
        if stripped.is_empty() {
            return None;
        }
        VulnClass::ALL
            .iter()
            .copied()
            .find(|c| strip_key(c.canonical()) == stripped)
    }
}

impl std::fmt::Display for VulnClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.canonical())
    }
}

/// Lowercase and drop every non-alphanumeric character.
fn strip_key(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(|c| c.to_lowercase())
        .collect()
}

/// Severity scale. `Low < Medium < High` are comparable; `NotMentioned`
/// marks non-vulnerable records and is incomparable with the other three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Severity {
    High,
    Medium,
    Low,
    NotMentioned,
}

impl Severity {
    pub const ALL: [Severity; 4] = [
        Severity::High,
        Severity::Medium,
        Severity::Low,
        Severity::NotMentioned,
    ];

    pub fn canonical(&self) -> &'static str {
        match self {
            Severity::High => "High",
            Severity::Medium => "Medium",
            Severity::Low => "Low",
            Severity::NotMentioned => "NotMentioned",
        }
    }

    pub fn parse(name: &str) -> Result<Severity> {
        Severity::ALL
            .iter()
            .copied()
            .find(|s| s.canonical() == name)
            .ok_or_else(|| Error::UnknownSeverity(name.to_string()))
    }

    /// Same three-stage matching as [`VulnClass::fuzzy_parse`].
    pub fn fuzzy_parse(text: &str) -> Option<Severity> {
        let trimmed = text.trim();
        if let Ok(s) = Severity::parse(trimmed) {
            return Some(s);
        }
        let stripped = strip_key(trimmed);
        if stripped.is_empty() {
            return None;
        }
        Severity::ALL
            .iter()
            .copied()
            .find(|s| strip_key(s.canonical()) == stripped)
    }

    /// Partial order on the scale: `NotMentioned` compares only to itself.
    pub fn partial_cmp_severity(&self, other: &Severity) -> Option<std::cmp::Ordering> {
        fn rank(s: Severity) -> Option<u8> {
            match s {
                Severity::Low => Some(0),
                Severity::Medium => Some(1),
                Severity::High => Some(2),
                Severity::NotMentioned => None,
            }
        }
        match (rank(*self), rank(*other)) {
            (Some(a), Some(b)) => Some(a.cmp(&b)),
            _ if self == other => Some(std::cmp::Ordering::Equal),
            _ => None,
        }
    }
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.canonical())
    }
}

/// Default severity assigned to each confirmed class, with config overrides.
///
/// Severity is modeled as a function of the class. The bundled defaults skew
/// High, mirroring the strongly High-heavy label distributions this kind of
/// consensus labeling produces.
#[derive(Debug, Clone)]
pub struct SeverityMap {
    map: BTreeMap<VulnClass, Severity>,
}

impl Default for SeverityMap {
    fn default() -> Self {
        use Severity::*;
        use VulnClass::*;
        let mut map = BTreeMap::new();
        for (class, sev) in [
            (AccessControl, High),
            (ArithmeticOverflowUnderflow, High),
            (BadRandomness, Medium),
            (DenialOfService, Medium),
            (FrontRunning, Medium),
            (GaslessSend, Medium),
            (Reentrancy, High),
            (ShortAddresses, Low),
            (TimeManipulation, Medium),
            (TxOrigin, High),
            (UncheckedLowLevelCall, High),
            (UnsafeDelegateCall, High),
            (UnsafeSuicide, High),
        ] {
            map.insert(class, sev);
        }
        SeverityMap { map }
    }
}

impl SeverityMap {
    /// Total over all 13 classes; never returns `NotMentioned`.
    pub fn default_severity(&self, class: VulnClass) -> Severity {
        self.map[&class]
    }

    /// Apply overrides on top of the defaults. `NotMentioned` is rejected.
    pub fn with_overrides(mut self, overrides: &BTreeMap<VulnClass, Severity>) -> Result<Self> {
        for (class, sev) in overrides {
            if *sev == Severity::NotMentioned {
                return Err(Error::Config(format!(
                    "severity override for {class} may not be NotMentioned"
                )));
            }
            self.map.insert(*class, *sev);
        }
        Ok(self)
    }
}

/// Per-detector mapping from raw tool labels to taxonomy classes.
///
/// Raw labels outside the 13-class scope are intentionally absent from the
/// table; findings carrying them are dropped before voting.
#[derive(Debug, Clone)]
pub struct DetectorMap {
    detectors: BTreeMap<String, BTreeMap<String, VulnClass>>,
}

impl DetectorMap {
    pub fn new(detectors: BTreeMap<String, BTreeMap<String, VulnClass>>) -> Self {
        DetectorMap { detectors }
    }

    pub fn detector_ids(&self) -> impl Iterator<Item = &str> {
        self.detectors.keys().map(String::as_str)
    }

    /// Map one raw detector label into the taxonomy.
    ///
    /// Returns `Ok(None)` when the label is known to be out of scope for the
    /// 13 classes, and an error when the detector itself is unknown.
    pub fn normalize_finding(
        &self,
        detector_id: &str,
        raw_label: &str,
    ) -> Result<Option<VulnClass>> {
        let table = self
            .detectors
            .get(detector_id)
            .ok_or_else(|| Error::UnknownDetector(detector_id.to_string()))?;
        Ok(table.get(raw_label).copied())
    }
}

/// On-disk shape of the taxonomy config file: severity defaults plus the
/// detector label tables, both editable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaxonomyConfigFile {
    #[serde(default)]
    pub severity_defaults: BTreeMap<String, String>,
    #[serde(default)]
    pub detectors: BTreeMap<String, BTreeMap<String, String>>,
}

/// Loaded taxonomy configuration: severity defaults plus detector tables.
#[derive(Debug, Clone)]
pub struct TaxonomyConfig {
    pub severities: SeverityMap,
    pub detectors: DetectorMap,
}

const DEFAULT_CONFIG: &str = include_str!("../configs/taxonomy.json");

impl Default for TaxonomyConfig {
    fn default() -> Self {
        TaxonomyConfig::from_json(DEFAULT_CONFIG).expect("bundled taxonomy config must parse")
    }
}

impl TaxonomyConfig {
    pub fn from_json(json: &str) -> Result<TaxonomyConfig> {
        let file: TaxonomyConfigFile = serde_json::from_str(json)?;
        TaxonomyConfig::from_file(file)
    }

    pub fn load(path: &std::path::Path) -> Result<TaxonomyConfig> {
        let text = std::fs::read_to_string(path)?;
        TaxonomyConfig::from_json(&text)
    }

    fn from_file(file: TaxonomyConfigFile) -> Result<TaxonomyConfig> {
        let mut overrides = BTreeMap::new();
        for (class, sev) in &file.severity_defaults {
            overrides.insert(VulnClass::parse(class)?, Severity::parse(sev)?);
        }
        let severities = SeverityMap::default().with_overrides(&overrides)?;

        let mut detectors = BTreeMap::new();
        for (detector, table) in &file.detectors {
            let mut mapped = BTreeMap::new();
            for (raw, class) in table {
                mapped.insert(raw.clone(), VulnClass::parse(class)?);
            }
            detectors.insert(detector.clone(), mapped);
        }
        Ok(TaxonomyConfig {
            severities,
            detectors: DetectorMap::new(detectors),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_alphabetical() {
        let mut sorted = VulnClass::ALL.to_vec();
        sorted.sort_by_key(|c| c.canonical());
        assert_eq!(sorted, VulnClass::ALL.to_vec());
        // Enum ordering must agree with canonical-string ordering.
        for pair in VulnClass::ALL.windows(2) {
            assert!(pair[0] < pair[1]);
            assert!(pair[0].canonical() < pair[1].canonical());
        }
    }

    #[test]
    fn canonical_round_trip() {
        for class in VulnClass::ALL {
            assert_eq!(VulnClass::parse(class.canonical()).unwrap(), class);
        }
        for sev in Severity::ALL {
            assert_eq!(Severity::parse(sev.canonical()).unwrap(), sev);
        }
    }

    #[test]
    fn fuzzy_match_stages() {
        assert_eq!(
            VulnClass::fuzzy_parse("Reentrancy"),
            Some(VulnClass::Reentrancy)
        );
        assert_eq!(
            VulnClass::fuzzy_parse("reentrancy"),
            Some(VulnClass::Reentrancy)
        );
        assert_eq!(
            VulnClass::fuzzy_parse("tx.origin"),
            Some(VulnClass::TxOrigin)
        );
        assert_eq!(
            VulnClass::fuzzy_parse("Arithmetic Overflow/Underflow"),
            Some(VulnClass::ArithmeticOverflowUnderflow)
        );
        assert_eq!(
            VulnClass::fuzzy_parse("unchecked low-level call"),
            Some(VulnClass::UncheckedLowLevelCall)
        );
        assert_eq!(VulnClass::fuzzy_parse("integer stuff"), None);
        assert_eq!(VulnClass::fuzzy_parse(""), None);
        assert_eq!(
            Severity::fuzzy_parse("not mentioned"),
            Some(Severity::NotMentioned)
        );
        assert_eq!(Severity::fuzzy_parse("HIGH"), Some(Severity::High));
    }

    #[test]
    fn severity_partial_order() {
        use std::cmp::Ordering::*;
        assert_eq!(
            Severity::Low.partial_cmp_severity(&Severity::High),
            Some(Less)
        );
        assert_eq!(
            Severity::High.partial_cmp_severity(&Severity::Medium),
            Some(Greater)
        );
        assert_eq!(
            Severity::NotMentioned.partial_cmp_severity(&Severity::NotMentioned),
            Some(Equal)
        );
        assert_eq!(
            Severity::NotMentioned.partial_cmp_severity(&Severity::High),
            None
        );
        assert_eq!(
            Severity::Low.partial_cmp_severity(&Severity::NotMentioned),
            None
        );
    }

    #[test]
    fn default_severity_is_total_and_never_not_mentioned() {
        let map = SeverityMap::default();
        for class in VulnClass::ALL {
            assert_ne!(map.default_severity(class), Severity::NotMentioned);
        }
        assert_eq!(map.default_severity(VulnClass::Reentrancy), Severity::High);
    }

    #[test]
    fn severity_override_precedence() {
        let mut overrides = BTreeMap::new();
        overrides.insert(VulnClass::TxOrigin, Severity::Medium);
        let map = SeverityMap::default().with_overrides(&overrides).unwrap();
        assert_eq!(map.default_severity(VulnClass::TxOrigin), Severity::Medium);
        assert_eq!(map.default_severity(VulnClass::Reentrancy), Severity::High);
    }

    #[test]
    fn not_mentioned_override_is_rejected() {
        let mut overrides = BTreeMap::new();
        overrides.insert(VulnClass::TxOrigin, Severity::NotMentioned);
        assert!(SeverityMap::default().with_overrides(&overrides).is_err());
    }

    #[test]
    fn bundled_detector_map_lookups() {
        let config = TaxonomyConfig::default();
        assert_eq!(
            config
                .detectors
                .normalize_finding("slither", "reentrancy-eth")
                .unwrap(),
            Some(VulnClass::Reentrancy)
        );
        assert_eq!(
            config
                .detectors
                .normalize_finding("mythril", "some-unmapped-check")
                .unwrap(),
            None
        );
        assert!(matches!(
            config
                .detectors
                .normalize_finding("unknown-tool", "anything"),
            Err(Error::UnknownDetector(_))
        ));
    }

    #[test]
    fn config_file_severity_override_applies() {
        let config = TaxonomyConfig::from_json(
            r#"{"severity_defaults": {"TxOrigin": "Medium"}, "detectors": {"mytool": {"x": "Reentrancy"}}}"#,
        )
        .unwrap();
        assert_eq!(
            config.severities.default_severity(VulnClass::TxOrigin),
            Severity::Medium
        );
        assert_eq!(
            config.detectors.normalize_finding("mytool", "x").unwrap(),
            Some(VulnClass::Reentrancy)
        );
    }

    #[test]
    fn normalize_finding_is_pure() {
        let config = TaxonomyConfig::default();
        let a = config
            .detectors
            .normalize_finding("oyente", "Re-Entrancy Vulnerability");
        let b = config
            .detectors
            .normalize_finding("oyente", "Re-Entrancy Vulnerability");
        assert_eq!(a.unwrap(), b.unwrap());
    }
}
