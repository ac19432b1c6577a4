//! The JSON document an operator writes to describe one system: its extra
//! vocabulary, its services and their consent bundles.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::descriptor::{is_valid_id, AIServiceDescriptor, DataCategory, Purpose, Vocabulary};
use crate::registry::{ConsentBundle, Registry, RegistryError};
use crate::sign::SignTriplet;
use crate::signs::{derive_service_signs, SystemSigns};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemDocument {
    pub id: String,
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub purposes: Vec<Purpose>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub data_categories: Vec<DataCategory>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub vague_patterns: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bundles: Vec<ConsentBundle>,
    #[serde(default)]
    pub services: Vec<AIServiceDescriptor>,
}

/// One problem found in a document, attributed to a service, purpose or
/// bundle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub subject: String,
    pub rule: String,
    pub message: String,
}

impl Problem {
    fn new(subject: impl Into<String>, rule: &str, message: impl Into<String>) -> Self {
        Self {
            subject: subject.into(),
            rule: rule.to_owned(),
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: [{}] {}", self.subject, self.rule, self.message)
    }
}

fn registry_rule(e: &RegistryError) -> &'static str {
    match e {
        RegistryError::VaguePurpose(_) => "vague_purpose",
        RegistryError::DuplicateId(_) => "duplicate_id",
        RegistryError::InvalidId(_) => "invalid_id",
        RegistryError::EmptyLabel => "empty_label",
        RegistryError::UnknownSystem(_) | RegistryError::UnknownService(_) => "unknown_reference",
        RegistryError::ServiceInOtherSystem { .. } => "duplicate_id",
        RegistryError::ValidationFailed { .. } => "invalid_descriptor",
        RegistryError::Unresolved(_) => "unresolved_reference",
        RegistryError::InvalidBundle { .. } => "invalid_bundle",
    }
}

impl SystemDocument {
    pub fn parse(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents serialize")
    }

    /// Every problem in the document. Unlike [`Self::into_registry`] this
    /// keeps going after the first failure, and judges services against
    /// their declared purposes even when those purposes are themselves
    /// rejected.
    pub fn validate(&self) -> Vec<Problem> {
        let mut problems = Vec::new();
        if !is_valid_id(&self.id) {
            problems.push(Problem::new(
                format!("system {}", self.id),
                "invalid_id",
                "system id is not a valid identifier",
            ));
        }
        let mut registry = Registry::new();
        for p in &self.vague_patterns {
            registry.add_vague_pattern(p);
        }
        for c in &self.data_categories {
            if let Err(e) = registry.register_category(c.clone()) {
                problems.push(Problem::new(
                    format!("category {}", c.id),
                    registry_rule(&e),
                    e.to_string(),
                ));
            }
        }
        let mut vocab: Vocabulary = registry.vocabulary().clone();
        for p in &self.purposes {
            if let Err(e) = registry.register_purpose(p.clone()) {
                let message = match &e {
                    RegistryError::VaguePurpose(label) => {
                        format!("vague purpose: {} ({label:?})", p.id)
                    }
                    other => other.to_string(),
                };
                problems.push(Problem::new(
                    format!("purpose {}", p.id),
                    registry_rule(&e),
                    message,
                ));
            }
            vocab
                .purposes
                .entry(p.id.clone())
                .or_insert_with(|| p.clone());
        }
        let mut seen = BTreeSet::new();
        for d in &self.services {
            let subject = format!("service {}", d.id);
            if !is_valid_id(&d.id) {
                problems.push(Problem::new(
                    &subject,
                    "invalid_id",
                    "service id is not a valid identifier",
                ));
            }
            if !seen.insert(d.id.as_str()) {
                problems.push(Problem::new(
                    &subject,
                    "duplicate_id",
                    "service id appears more than once",
                ));
            }
            match crate::descriptor::validate_service_descriptor(d, &vocab) {
                Ok(vs) => problems.extend(
                    vs.iter()
                        .map(|v| Problem::new(&subject, v.rule(), v.to_string())),
                ),
                Err(u) => problems.push(Problem::new(
                    &subject,
                    "unresolved_reference",
                    u.to_string(),
                )),
            }
        }
        if problems.is_empty() {
            if let Err(e) = self.clone().into_registry() {
                problems.push(Problem::new(
                    format!("system {}", self.id),
                    registry_rule(&e),
                    e.to_string(),
                ));
            }
        }
        problems
    }

    /// A fresh registry holding this system. Stops at the first failure.
    pub fn into_registry(self) -> Result<Registry, RegistryError> {
        let mut r = Registry::new();
        for p in &self.vague_patterns {
            r.add_vague_pattern(p);
        }
        for c in self.data_categories {
            r.register_category(c)?;
        }
        for p in self.purposes {
            r.register_purpose(p)?;
        }
        r.register_system(&self.id, &self.name)?;
        let mut seen = BTreeSet::new();
        for d in self.services {
            if !seen.insert(d.id.clone()) {
                return Err(RegistryError::DuplicateId(d.id));
            }
            r.register_service(&self.id, d)?;
        }
        for b in self.bundles {
            r.declare_bundle(&self.id, b)?;
        }
        Ok(r)
    }

    /// Per-service triplets in document order plus the system aggregate.
    pub fn signs(&self) -> Result<(Vec<(String, SignTriplet)>, SystemSigns), RegistryError> {
        let registry = self.clone().into_registry()?;
        let per_service = registry
            .services_of(&self.id)?
            .into_iter()
            .map(|d| {
                (
                    d.id.clone(),
                    derive_service_signs(d).expect("registered descriptors are valid"),
                )
            })
            .collect();
        Ok((per_service, registry.system_signs(&self.id)?))
    }
}
