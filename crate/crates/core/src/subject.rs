//! Subject-access types: export packages, request filters and complaints.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consent::ConsentGrant;
use crate::data::{PersonalDataRecord, RecordId, RecordSelector, SourceKind};
use crate::registry::Registry;

/// Where the gateway serves a user's audit trace.
pub const TRACE_LOCATOR: &str = "/my-data/trace";

/// Optional narrowing of a subject-access request. Absent fields match all.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessFilters {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categories: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub purposes: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<BTreeSet<SourceKind>>,
}

impl AccessFilters {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn categories<I: IntoIterator<Item = S>, S: Into<String>>(cats: I) -> Self {
        Self {
            categories: Some(cats.into_iter().map(Into::into).collect()),
            ..Self::default()
        }
    }

    /// Record selector for these filters. A purpose filter selects the
    /// categories declared by services pursuing one of those purposes.
    pub fn selector(&self, registry: &Registry, system_id: &str) -> RecordSelector {
        let by_purpose = self.purposes.as_ref().map(|ps| {
            registry
                .services_of(system_id)
                .unwrap_or_default()
                .into_iter()
                .filter(|d| ps.contains(&d.purpose))
                .flat_map(|d| d.data_categories.iter().cloned())
                .collect::<BTreeSet<String>>()
        });
        let categories = match (&self.categories, by_purpose) {
            (Some(c), Some(p)) => Some(c.intersection(&p).cloned().collect()),
            (Some(c), None) => Some(c.clone()),
            (None, p) => p,
        };
        RecordSelector {
            categories,
            sources: self.sources.clone(),
        }
    }

    pub fn admits_grant(&self, g: &ConsentGrant) -> bool {
        self.purposes
            .as_ref()
            .is_none_or(|p| p.contains(&g.purpose_id))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Complaint {
    pub receipt_id: String,
    pub user_id: String,
    pub text: String,
    pub filed_at: DateTime<Utc>,
}

/// Everything the system holds about one user.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataPackage {
    pub user_id: String,
    pub generated_at: DateTime<Utc>,
    pub records: Vec<PersonalDataRecord>,
    pub grants: Vec<ConsentGrant>,
    pub complaints: Vec<Complaint>,
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubjectError {
    #[error("complaint text is empty")]
    EmptyText,
    #[error("record {0} not found")]
    NotFound(RecordId),
    #[error("record {0} is erased")]
    AlreadyErased(RecordId),
    #[error("payload is empty")]
    EmptyPayload,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{AIServiceDescriptor, AccessorEntity, RetentionPeriod};

    #[test]
    fn purpose_filter_maps_to_declared_categories() {
        let mut r = Registry::new();
        r.register_system("s", "S").unwrap();
        r.register_service(
            "s",
            AIServiceDescriptor::new(
                "route",
                "Routes",
                "route-planning",
                RetentionPeriod::LessThanDay,
            )
            .with_categories(["location"])
            .with_accessor(AccessorEntity::system_itself()),
        )
        .unwrap();
        let f = AccessFilters {
            purposes: Some(["route-planning".to_string()].into()),
            ..AccessFilters::all()
        };
        assert_eq!(
            f.selector(&r, "s").categories,
            Some(["location".to_string()].into())
        );
        let both = AccessFilters {
            categories: Some(["images".to_string()].into()),
            ..f
        };
        assert_eq!(both.selector(&r, "s").categories, Some(BTreeSet::new()));
        assert_eq!(
            AccessFilters::all().selector(&r, "s"),
            RecordSelector::all()
        );
    }
}
