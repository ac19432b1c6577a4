//! Purpose and data vocabulary, service descriptors, and their validity rules.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PurposeCategory {
    DeviceAccess,
    AdSelection,
    ContentService,
    MarketResearch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Purpose {
    pub id: String,
    pub label: String,
    pub category: PurposeCategory,
    /// True when the label names a concrete service such as "Route planning".
    pub specific: bool,
}

impl Purpose {
    pub fn new(id: &str, label: &str, category: PurposeCategory, specific: bool) -> Self {
        Self {
            id: id.to_owned(),
            label: label.to_owned(),
            category,
            specific,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataCategory {
    pub id: String,
    pub label: String,
}

impl DataCategory {
    pub fn new(id: &str, label: &str) -> Self {
        Self {
            id: id.to_owned(),
            label: label.to_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionPeriod {
    LessThanDay,
    LessThanMonth,
    LessThanYear,
    YearOrMore,
}

impl fmt::Display for RetentionPeriod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::LessThanDay => "less than a day",
            Self::LessThanMonth => "less than a month",
            Self::LessThanYear => "less than a year",
            Self::YearOrMore => "a year or more",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessorKind {
    SystemItself,
    Company,
    Government,
    Conglomerate,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AccessorEntity {
    pub name: String,
    pub kind: AccessorKind,
}

impl AccessorEntity {
    pub fn new(name: &str, kind: AccessorKind) -> Self {
        Self {
            name: name.to_owned(),
            kind,
        }
    }

    pub fn system_itself() -> Self {
        Self::new("system itself", AccessorKind::SystemItself)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    SourceCode,
    Model,
    TrainingData,
    Metadata,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 4] = [
        Self::SourceCode,
        Self::Model,
        Self::TrainingData,
        Self::Metadata,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::SourceCode => "source_code",
            Self::Model => "model",
            Self::TrainingData => "training_data",
            Self::Metadata => "metadata",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Code artifacts are served when code is available, data artifacts
    /// (training data and its metadata) when training data is available.
    pub fn is_claimed_by(self, d: &AIServiceDescriptor) -> bool {
        match self {
            Self::SourceCode | Self::Model => d.code_available,
            Self::TrainingData | Self::Metadata => d.training_data_available,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ArtifactLocation {
    pub kind: ArtifactKind,
    pub locator: String,
}

/// A registered AI service: one purpose, the personal data it needs, and
/// what it discloses about its code and data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AIServiceDescriptor {
    pub id: String,
    pub name: String,
    /// Content digest of every other field; see [`AIServiceDescriptor::compute_version`].
    #[serde(default)]
    pub version: String,
    pub purpose: String,
    #[serde(default)]
    pub data_categories: BTreeSet<String>,
    pub retention: RetentionPeriod,
    #[serde(default)]
    pub accessors: BTreeSet<AccessorEntity>,
    #[serde(default)]
    pub code_available: bool,
    #[serde(default)]
    pub training_data_available: bool,
    #[serde(default)]
    pub declared_objective: bool,
    #[serde(default)]
    pub artifact_locations: BTreeSet<ArtifactLocation>,
    /// Serve a reduced function instead of refusing when consent is missing.
    #[serde(default)]
    pub degraded_fallback: bool,
}

impl AIServiceDescriptor {
    pub fn new(id: &str, name: &str, purpose: &str, retention: RetentionPeriod) -> Self {
        Self {
            id: id.to_owned(),
            name: name.to_owned(),
            version: String::new(),
            purpose: purpose.to_owned(),
            data_categories: BTreeSet::new(),
            retention,
            accessors: BTreeSet::new(),
            code_available: false,
            training_data_available: false,
            declared_objective: false,
            artifact_locations: BTreeSet::new(),
            degraded_fallback: false,
        }
    }

    pub fn with_categories<I: IntoIterator<Item = S>, S: Into<String>>(mut self, cats: I) -> Self {
        self.data_categories = cats.into_iter().map(Into::into).collect();
        self
    }

    pub fn with_accessor(mut self, a: AccessorEntity) -> Self {
        self.accessors.insert(a);
        self
    }

    pub fn with_artifact(mut self, kind: ArtifactKind, locator: &str) -> Self {
        match kind {
            ArtifactKind::SourceCode | ArtifactKind::Model => self.code_available = true,
            ArtifactKind::TrainingData | ArtifactKind::Metadata => {
                self.training_data_available = true
            }
        }
        self.artifact_locations.insert(ArtifactLocation {
            kind,
            locator: locator.to_owned(),
        });
        self
    }

    pub fn objective(mut self, declared: bool) -> Self {
        self.declared_objective = declared;
        self
    }

    /// Digest of the canonical serialization with `version` blanked.
    pub fn compute_version(&self) -> String {
        let mut content = self.clone();
        content.version.clear();
        digest::digest_of(&content)
    }

    pub fn sealed(mut self) -> Self {
        self.version = self.compute_version();
        self
    }

    pub fn uses_personal_data(&self) -> bool {
        !self.data_categories.is_empty()
    }

    pub fn locations(&self, kind: ArtifactKind) -> impl Iterator<Item = &ArtifactLocation> {
        self.artifact_locations
            .iter()
            .filter(move |l| l.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDescriptor {
    pub id: String,
    pub name: String,
    pub services: Vec<AIServiceDescriptor>,
    pub version: String,
}

impl SystemDescriptor {
    /// Digest over the ordered service versions.
    pub fn compute_version(services: &[AIServiceDescriptor]) -> String {
        digest::digest_parts(services.iter().map(|s| s.version.as_bytes()))
    }
}

/// Case-insensitive substring patterns for purpose wording that is too vague
/// to consent to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaguePatterns {
    patterns: Vec<String>,
}

fn normalize(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl VaguePatterns {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(patterns: I) -> Self {
        Self {
            patterns: patterns
                .into_iter()
                .map(|p| normalize(p.as_ref()))
                .collect(),
        }
    }

    /// Seeded with the wording of the catch-all "internal uses" purpose.
    pub fn seeded() -> Self {
        Self::new(["develop and improve product", "other internal uses"])
    }

    pub fn add(&mut self, pattern: &str) {
        self.patterns.push(normalize(pattern));
    }

    pub fn matches(&self, label: &str) -> bool {
        let label = normalize(label);
        self.patterns
            .iter()
            .any(|p| !p.is_empty() && label.contains(p.as_str()))
    }
}

impl Default for VaguePatterns {
    fn default() -> Self {
        Self::seeded()
    }
}

/// Non-empty, no whitespace or control characters, no `,`, `{` or `}`.
pub fn is_valid_id(id: &str) -> bool {
    !id.is_empty()
        && !id
            .chars()
            .any(|c| c.is_whitespace() || c.is_control() || matches!(c, ',' | '{' | '}'))
}

/// The purposes, data categories, and vagueness patterns descriptors are
/// checked against.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub purposes: BTreeMap<String, Purpose>,
    pub categories: BTreeMap<String, DataCategory>,
    pub vague: VaguePatterns,
}

pub fn seed_purposes() -> Vec<Purpose> {
    use PurposeCategory::*;
    vec![
        Purpose::new(
            "device-access",
            "Access device storage and/or data",
            DeviceAccess,
            false,
        ),
        Purpose::new(
            "ad-selection",
            "Ad selection or evaluation",
            AdSelection,
            false,
        ),
        Purpose::new(
            "content-selection",
            "Content selection, creation and/or evaluation",
            ContentService,
            false,
        ),
        Purpose::new("market-research", "Market research", MarketResearch, false),
        Purpose::new("route-planning", "Route planning", ContentService, true),
        Purpose::new(
            "product-recommendation",
            "Product recommendation",
            ContentService,
            true,
        ),
        Purpose::new(
            "language-translation",
            "Language translation",
            ContentService,
            true,
        ),
        Purpose::new("image-generation", "Image generation", ContentService, true),
        Purpose::new(
            "conversational-agents",
            "Conversational agents",
            ContentService,
            true,
        ),
    ]
}

pub fn seed_categories() -> Vec<DataCategory> {
    vec![
        DataCategory::new("location", "Location"),
        DataCategory::new("images", "Images"),
        DataCategory::new("navigation", "Navigation"),
        DataCategory::new("use-statistics", "Use statistics"),
    ]
}

impl Vocabulary {
    pub fn empty() -> Self {
        Self {
            purposes: BTreeMap::new(),
            categories: BTreeMap::new(),
            vague: VaguePatterns::seeded(),
        }
    }

    pub fn seeded() -> Self {
        let mut v = Self::empty();
        for p in seed_purposes() {
            v.purposes.insert(p.id.clone(), p);
        }
        for c in seed_categories() {
            v.categories.insert(c.id.clone(), c);
        }
        v
    }

    pub fn purpose(&self, id: &str) -> Option<&Purpose> {
        self.purposes.get(id)
    }

    pub fn category(&self, id: &str) -> Option<&DataCategory> {
        self.categories.get(id)
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::seeded()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Violation {
    VaguePurpose { purpose: String, label: String },
    MissingArtifact { kind: ArtifactKind },
    UnauditableObjectivity,
    NoAccessors,
    DuplicateSystemAccessor,
}

impl Violation {
    pub fn rule(&self) -> &'static str {
        match self {
            Violation::VaguePurpose { .. } => "vague_purpose",
            Violation::MissingArtifact { .. } => "missing_artifact",
            Violation::UnauditableObjectivity => "unauditable_objectivity",
            Violation::NoAccessors => "no_accessors",
            Violation::DuplicateSystemAccessor => "duplicate_system_accessor",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::VaguePurpose { purpose, label } => write!(f, "vague purpose: {purpose} ({label:?})"),
            Violation::MissingArtifact { kind } => {
                write!(f, "missing artifact location: availability claimed without a {} locator", kind.as_str())
            }
            Violation::UnauditableObjectivity => {
                f.write_str("unauditable objectivity: declared objective while using personal data without open code")
            }
            Violation::NoAccessors => f.write_str("no accessors: personal data requested but nobody declared to access it"),
            Violation::DuplicateSystemAccessor => f.write_str("duplicate accessor: the system itself is listed more than once"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UnresolvedReference {
    #[error("unknown purpose {0:?}")]
    Purpose(String),
    #[error("unknown data category {0:?}")]
    Category(String),
}

/// Checks that need nothing beyond the descriptor itself.
pub fn structural_violations(d: &AIServiceDescriptor) -> Vec<Violation> {
    let mut out = Vec::new();
    if d.code_available && d.locations(ArtifactKind::SourceCode).next().is_none() {
        out.push(Violation::MissingArtifact {
            kind: ArtifactKind::SourceCode,
        });
    }
    if d.training_data_available && d.locations(ArtifactKind::TrainingData).next().is_none() {
        out.push(Violation::MissingArtifact {
            kind: ArtifactKind::TrainingData,
        });
    }
    if d.declared_objective && d.uses_personal_data() && !d.code_available {
        out.push(Violation::UnauditableObjectivity);
    }
    if d.uses_personal_data() && d.accessors.is_empty() {
        out.push(Violation::NoAccessors);
    }
    if d.accessors
        .iter()
        .filter(|a| a.kind == AccessorKind::SystemItself)
        .count()
        > 1
    {
        out.push(Violation::DuplicateSystemAccessor);
    }
    out
}

pub fn validate_service_descriptor(
    d: &AIServiceDescriptor,
    vocab: &Vocabulary,
) -> Result<Vec<Violation>, UnresolvedReference> {
    let purpose = vocab
        .purpose(&d.purpose)
        .ok_or_else(|| UnresolvedReference::Purpose(d.purpose.clone()))?;
    if let Some(missing) = d
        .data_categories
        .iter()
        .find(|c| vocab.category(c).is_none())
    {
        return Err(UnresolvedReference::Category(missing.clone()));
    }
    let mut out = Vec::new();
    if vocab.vague.matches(&purpose.label) {
        out.push(Violation::VaguePurpose {
            purpose: purpose.id.clone(),
            label: purpose.label.clone(),
        });
    }
    out.extend(structural_violations(d));
    Ok(out)
}
