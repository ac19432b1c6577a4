//! Purposes, data categories, service/system descriptors, and the two
//! factsheets built from them.
//!
//! Descriptor documents are kept by version digest and never overwritten, so
//! any version a consent or audit record points at stays readable.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::{
    is_valid_id, validate_service_descriptor, AIServiceDescriptor, AccessorEntity, ArtifactKind,
    DataCategory, Purpose, PurposeCategory, RetentionPeriod, SystemDescriptor, UnresolvedReference,
    Violation, Vocabulary,
};
use crate::digest::canonical_json;
use crate::sign::SignTriplet;
use crate::signs::{aggregate_system_signs, derive_service_signs, SystemSigns};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("purpose label {0:?} is vague or ambiguous")]
    VaguePurpose(String),
    #[error("id {0:?} is already registered")]
    DuplicateId(String),
    #[error("id {0:?} is not a valid identifier")]
    InvalidId(String),
    #[error("label must not be empty")]
    EmptyLabel,
    #[error("unknown system {0:?}")]
    UnknownSystem(String),
    #[error("unknown service {0:?}")]
    UnknownService(String),
    #[error("service {service:?} already belongs to system {system:?}")]
    ServiceInOtherSystem { service: String, system: String },
    #[error("descriptor {service:?} failed validation: {}", fmt_violations(.violations))]
    ValidationFailed {
        service: String,
        violations: Vec<Violation>,
    },
    #[error(transparent)]
    Unresolved(#[from] UnresolvedReference),
    #[error("bundle {bundle:?}: {reason}")]
    InvalidBundle { bundle: String, reason: String },
}

fn fmt_violations(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Services whose consents are requested and granted together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentBundle {
    pub bundle_id: String,
    pub members: BTreeSet<String>,
    pub category: PurposeCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrivacyFactsheetRow {
    pub service_id: String,
    pub data_categories: BTreeSet<String>,
    pub purpose: Purpose,
    pub retention: RetentionPeriod,
    pub accessors: BTreeSet<AccessorEntity>,
    pub default_granted: bool,
    pub bundle_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactLink {
    pub kind: ArtifactKind,
    pub locator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransparencyFactsheetRow {
    pub service_id: String,
    pub name: String,
    pub purpose: Purpose,
    pub data_categories: BTreeSet<String>,
    pub signs: SignTriplet,
    pub artifact_links: Vec<ArtifactLink>,
    pub bundle_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransparencyFactsheet {
    pub system_id: String,
    pub rows: Vec<TransparencyFactsheetRow>,
    pub system_signs: SystemSigns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Registration<'a> {
    pub version: &'a str,
    pub change_of_conditions: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct SystemEntry {
    id: String,
    name: String,
    services: Vec<String>,
    version: String,
    signs: SystemSigns,
    bundles: BTreeMap<String, ConsentBundle>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registry {
    vocab: Vocabulary,
    systems: BTreeMap<String, SystemEntry>,
    owner: BTreeMap<String, String>,
    current: BTreeMap<String, AIServiceDescriptor>,
    /// version digest -> canonical descriptor document
    versions: BTreeMap<String, String>,
}

impl Default for Registry {
    fn default() -> Self {
        Self::new()
    }
}

impl Registry {
    /// A registry preloaded with the seed purposes and data categories.
    pub fn new() -> Self {
        Self::with_vocabulary(Vocabulary::seeded())
    }

    pub fn with_vocabulary(vocab: Vocabulary) -> Self {
        Self {
            vocab,
            systems: BTreeMap::new(),
            owner: BTreeMap::new(),
            current: BTreeMap::new(),
            versions: BTreeMap::new(),
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn add_vague_pattern(&mut self, pattern: &str) {
        self.vocab.vague.add(pattern);
    }

    pub fn register_purpose(&mut self, p: Purpose) -> Result<String, RegistryError> {
        if p.label.trim().is_empty() {
            return Err(RegistryError::EmptyLabel);
        }
        if !is_valid_id(&p.id) {
            return Err(RegistryError::InvalidId(p.id));
        }
        if self.vocab.vague.matches(&p.label) {
            return Err(RegistryError::VaguePurpose(p.label));
        }
        if self.vocab.purposes.contains_key(&p.id) {
            return Err(RegistryError::DuplicateId(p.id));
        }
        let id = p.id.clone();
        self.vocab.purposes.insert(id.clone(), p);
        Ok(id)
    }

    pub fn register_category(&mut self, c: DataCategory) -> Result<String, RegistryError> {
        if !is_valid_id(&c.id) {
            return Err(RegistryError::InvalidId(c.id));
        }
        if self.vocab.categories.contains_key(&c.id) {
            return Err(RegistryError::DuplicateId(c.id));
        }
        let id = c.id.clone();
        self.vocab.categories.insert(id.clone(), c);
        Ok(id)
    }

    pub fn register_system(&mut self, id: &str, name: &str) -> Result<(), RegistryError> {
        if !is_valid_id(id) {
            return Err(RegistryError::InvalidId(id.to_owned()));
        }
        if self.systems.contains_key(id) {
            return Err(RegistryError::DuplicateId(id.to_owned()));
        }
        self.systems.insert(
            id.to_owned(),
            SystemEntry {
                id: id.to_owned(),
                name: name.to_owned(),
                services: Vec::new(),
                version: SystemDescriptor::compute_version(&[]),
                signs: SystemSigns::no_ai(),
                bundles: BTreeMap::new(),
            },
        );
        Ok(())
    }

    pub fn has_system(&self, id: &str) -> bool {
        self.systems.contains_key(id)
    }

    pub fn system_ids(&self) -> impl Iterator<Item = &str> {
        self.systems.keys().map(String::as_str)
    }

    /// Stores `d` under its content digest. Reports a change of conditions
    /// when the service is new or its digest differs from the current one.
    pub fn register_service(
        &mut self,
        system_id: &str,
        mut d: AIServiceDescriptor,
    ) -> Result<Registration<'_>, RegistryError> {
        if !self.systems.contains_key(system_id) {
            return Err(RegistryError::UnknownSystem(system_id.to_owned()));
        }
        if !is_valid_id(&d.id) {
            return Err(RegistryError::InvalidId(d.id));
        }
        if let Some(owner) = self.owner.get(&d.id) {
            if owner != system_id {
                return Err(RegistryError::ServiceInOtherSystem {
                    service: d.id,
                    system: owner.clone(),
                });
            }
        }
        let violations = validate_service_descriptor(&d, &self.vocab)?;
        if !violations.is_empty() {
            return Err(RegistryError::ValidationFailed {
                service: d.id,
                violations,
            });
        }

        d.version = d.compute_version();
        let changed = self
            .current
            .get(&d.id)
            .is_none_or(|old| old.version != d.version);
        let id = d.id.clone();
        let version = d.version.clone();
        if changed {
            let doc = String::from_utf8(canonical_json(&d)).expect("json is utf-8");
            self.versions.entry(version.clone()).or_insert(doc);
            self.current.insert(id.clone(), d);
            self.owner.insert(id.clone(), system_id.to_owned());
            let entry = self.systems.get_mut(system_id).expect("checked above");
            if !entry.services.contains(&id) {
                entry.services.push(id.clone());
            }
            self.refresh_system(system_id);
        }
        Ok(Registration {
            version: &self.current[&id].version,
            change_of_conditions: changed,
        })
    }

    fn refresh_system(&mut self, system_id: &str) {
        let services: Vec<AIServiceDescriptor> = self.systems[system_id]
            .services
            .iter()
            .map(|s| self.current[s].clone())
            .collect();
        let triplets: Vec<SignTriplet> = services
            .iter()
            .map(|d| derive_service_signs(d).expect("registered descriptors are valid"))
            .collect();
        let entry = self.systems.get_mut(system_id).expect("system exists");
        entry.version = SystemDescriptor::compute_version(&services);
        entry.signs = aggregate_system_signs(&triplets).expect("derived triplets are valid");
    }

    pub fn declare_bundle(
        &mut self,
        system_id: &str,
        bundle: ConsentBundle,
    ) -> Result<(), RegistryError> {
        let entry = self
            .systems
            .get(system_id)
            .ok_or_else(|| RegistryError::UnknownSystem(system_id.to_owned()))?;
        let invalid = |reason: String| RegistryError::InvalidBundle {
            bundle: bundle.bundle_id.clone(),
            reason,
        };
        if !is_valid_id(&bundle.bundle_id) {
            return Err(RegistryError::InvalidId(bundle.bundle_id));
        }
        if bundle.members.is_empty() {
            return Err(invalid("bundle has no members".into()));
        }
        for m in &bundle.members {
            if !entry.services.contains(m) {
                return Err(invalid(format!(
                    "service {m:?} is not part of system {system_id:?}"
                )));
            }
            let purpose = &self.current[m].purpose;
            let cat = self.vocab.purpose(purpose).map(|p| p.category);
            if cat != Some(bundle.category) {
                return Err(invalid(format!(
                    "service {m:?} has a purpose outside {:?}",
                    bundle.category
                )));
            }
            if let Some(other) = entry
                .bundles
                .values()
                .find(|b| b.bundle_id != bundle.bundle_id && b.members.contains(m))
            {
                return Err(invalid(format!(
                    "service {m:?} already belongs to bundle {:?}",
                    other.bundle_id
                )));
            }
        }
        let entry = self.systems.get_mut(system_id).expect("checked above");
        entry.bundles.insert(bundle.bundle_id.clone(), bundle);
        Ok(())
    }

    pub fn service(&self, id: &str) -> Option<&AIServiceDescriptor> {
        self.current.get(id)
    }

    pub fn system_of(&self, service_id: &str) -> Option<&str> {
        self.owner.get(service_id).map(String::as_str)
    }

    pub fn services_of(&self, system_id: &str) -> Result<Vec<&AIServiceDescriptor>, RegistryError> {
        let entry = self.entry(system_id)?;
        Ok(entry.services.iter().map(|s| &self.current[s]).collect())
    }

    /// Canonical document stored for a version digest.
    pub fn descriptor_document(&self, version: &str) -> Option<&str> {
        self.versions.get(version).map(String::as_str)
    }

    fn entry(&self, system_id: &str) -> Result<&SystemEntry, RegistryError> {
        self.systems
            .get(system_id)
            .ok_or_else(|| RegistryError::UnknownSystem(system_id.to_owned()))
    }

    pub fn system(&self, system_id: &str) -> Result<SystemDescriptor, RegistryError> {
        let entry = self.entry(system_id)?;
        Ok(SystemDescriptor {
            id: entry.id.clone(),
            name: entry.name.clone(),
            services: entry
                .services
                .iter()
                .map(|s| self.current[s].clone())
                .collect(),
            version: entry.version.clone(),
        })
    }

    pub fn system_signs(&self, system_id: &str) -> Result<SystemSigns, RegistryError> {
        Ok(self.entry(system_id)?.signs)
    }

    fn bundle_of(entry: &SystemEntry, service_id: &str) -> Option<String> {
        entry
            .bundles
            .values()
            .find(|b| b.members.contains(service_id))
            .map(|b| b.bundle_id.clone())
    }

    fn purpose_of(&self, d: &AIServiceDescriptor) -> Purpose {
        self.vocab
            .purpose(&d.purpose)
            .cloned()
            .expect("registered descriptors resolve")
    }

    /// One row per service that requests personal data, sorted by service id.
    pub fn build_privacy_factsheet(
        &self,
        system_id: &str,
    ) -> Result<Vec<PrivacyFactsheetRow>, RegistryError> {
        let entry = self.entry(system_id)?;
        let mut rows: Vec<_> = entry
            .services
            .iter()
            .map(|s| &self.current[s])
            .filter(|d| d.uses_personal_data())
            .map(|d| PrivacyFactsheetRow {
                service_id: d.id.clone(),
                data_categories: d.data_categories.clone(),
                purpose: self.purpose_of(d),
                retention: d.retention,
                accessors: d.accessors.clone(),
                default_granted: false,
                bundle_id: Self::bundle_of(entry, &d.id),
            })
            .collect();
        rows.sort_by(|a, b| a.service_id.cmp(&b.service_id));
        Ok(rows)
    }

    /// One row per AI service, signs derived afresh from the stored version.
    pub fn build_transparency_factsheet(
        &self,
        system_id: &str,
    ) -> Result<TransparencyFactsheet, RegistryError> {
        let entry = self.entry(system_id)?;
        let mut rows: Vec<_> = entry
            .services
            .iter()
            .map(|s| &self.current[s])
            .map(|d| TransparencyFactsheetRow {
                service_id: d.id.clone(),
                name: d.name.clone(),
                purpose: self.purpose_of(d),
                data_categories: d.data_categories.clone(),
                signs: derive_service_signs(d).expect("registered descriptors are valid"),
                artifact_links: d
                    .artifact_locations
                    .iter()
                    .filter(|l| l.kind.is_claimed_by(d))
                    .map(|l| ArtifactLink {
                        kind: l.kind,
                        locator: l.locator.clone(),
                    })
                    .collect(),
                bundle_id: Self::bundle_of(entry, &d.id),
            })
            .collect();
        rows.sort_by(|a, b| a.service_id.cmp(&b.service_id));
        Ok(TransparencyFactsheet {
            system_id: system_id.to_owned(),
            rows,
            system_signs: entry.signs,
        })
    }
}
