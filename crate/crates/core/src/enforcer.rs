//! The consent enforcer: the only path from stored personal data to a
//! service. It turns live grants into a filter, selects the matching records,
//! and freezes them into an immutable view.
//!
//! Filters describe themselves as one line:
//!
//! ```text
//! user=<id> service=<id>@<version> purpose=<id> allow={<sorted categories>} consent=<generation>
//! ```

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consent::ConsentStore;
use crate::data::{DataStore, PersonalDataRecord, RecordId, RecordSelector};
use crate::digest;
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterPredicate {
    pub user_id: String,
    pub service_id: String,
    pub service_version: String,
    pub purpose_id: String,
    pub allowed_categories: BTreeSet<String>,
    /// Generation of the consent store the filter was evaluated against.
    pub consent_version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnforcementError {
    #[error("unknown service {0:?}")]
    UnknownService(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("{recipient:?} is not a declared accessor of service {service:?}")]
    UndeclaredRecipient { service: String, recipient: String },
}

pub fn build_filter(
    registry: &Registry,
    consents: &ConsentStore,
    user_id: &str,
    service_id: &str,
) -> Result<FilterPredicate, EnforcementError> {
    let d = registry
        .service(service_id)
        .ok_or_else(|| EnforcementError::UnknownService(service_id.to_owned()))?;
    let allowed = d
        .data_categories
        .iter()
        .filter(|c| consents.is_permitted(registry, user_id, service_id, c, &d.purpose))
        .cloned()
        .collect();
    Ok(FilterPredicate {
        user_id: user_id.to_owned(),
        service_id: service_id.to_owned(),
        service_version: d.version.clone(),
        purpose_id: d.purpose.clone(),
        allowed_categories: allowed,
        consent_version: consents.generation(),
    })
}

pub fn describe_filter(f: &FilterPredicate) -> String {
    let allow = f
        .allowed_categories
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(",");
    format!(
        "user={} service={}@{} purpose={} allow={{{}}} consent={}",
        f.user_id, f.service_id, f.service_version, f.purpose_id, allow, f.consent_version
    )
}

/// Inverse of [`describe_filter`] for ids without whitespace.
pub fn parse_filter_description(s: &str) -> Option<FilterPredicate> {
    let mut tokens = s.split(' ');
    let mut field = |key: &str| tokens.next()?.strip_prefix(key).map(str::to_owned);
    let user_id = field("user=")?;
    let service = field("service=")?;
    let purpose_id = field("purpose=")?;
    let allow = field("allow=")?;
    let consent = field("consent=")?;
    if tokens.next().is_some() {
        return None;
    }
    let (service_id, service_version) = service.rsplit_once('@')?;
    let inner = allow.strip_prefix('{')?.strip_suffix('}')?;
    let allowed_categories = if inner.is_empty() {
        BTreeSet::new()
    } else {
        inner.split(',').map(str::to_owned).collect()
    };
    Some(FilterPredicate {
        user_id,
        service_id: service_id.to_owned(),
        service_version: service_version.to_owned(),
        purpose_id,
        allowed_categories,
        consent_version: consent.parse().ok()?,
    })
}

/// Records of `f.user_id` the filter lets through, optionally narrowed to
/// `requested`. Fails on records that look corrupted rather than serving them.
pub fn select_records(
    data: &DataStore,
    f: &FilterPredicate,
    requested: Option<&BTreeSet<String>>,
) -> Result<Vec<PersonalDataRecord>, EnforcementError> {
    let cats: BTreeSet<String> = match requested {
        Some(r) => f.allowed_categories.intersection(r).cloned().collect(),
        None => f.allowed_categories.clone(),
    };
    if cats.is_empty() {
        return Ok(Vec::new());
    }
    let selected = data.get_records(
        &f.user_id,
        &RecordSelector::categories(cats.iter().cloned()),
    );
    let mut out = Vec::with_capacity(selected.len());
    for r in selected {
        if r.user_id != f.user_id || !cats.contains(&r.category) {
            return Err(EnforcementError::StorageFailure(format!(
                "record {} escaped its selector",
                r.record_id
            )));
        }
        if r.payload.as_ref().is_none_or(Vec::is_empty) {
            return Err(EnforcementError::StorageFailure(format!(
                "live record {} has no payload",
                r.record_id
            )));
        }
        out.push(r.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilteredView {
    pub view_id: String,
    pub user_id: String,
    pub service_id: String,
    pub service_version: String,
    /// Present when the view was handed to a third-party accessor.
    #[serde(default)]
    pub recipient: Option<String>,
    pub filter: String,
    pub records: Vec<PersonalDataRecord>,
    pub data_version: String,
    /// Digest over the record ids, versions, categories and payloads.
    pub records_digest: String,
    pub created_at: DateTime<Utc>,
}

pub fn records_digest(records: &[PersonalDataRecord]) -> String {
    let items: Vec<(RecordId, u32, &str, String)> = records
        .iter()
        .map(|r| {
            (
                r.record_id,
                r.version,
                r.category.as_str(),
                digest::sha256_hex(r.payload.as_deref().unwrap_or_default()),
            )
        })
        .collect();
    digest::digest_of(&items)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Denial {
    pub user_id: String,
    pub service_id: String,
    pub requested: BTreeSet<String>,
    pub missing: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum AccessOutcome {
    Granted { view: FilteredView },
    Denied { denial: Denial },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedView {
    pub view: FilteredView,
    pub invalidated: bool,
}

/// Materialized views addressable by id, oldest evicted first once the
/// cache is full. Invalidation drops the records and keeps the digest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewCache {
    views: BTreeMap<u64, CachedView>,
    next: u64,
}

pub const DEFAULT_VIEW_CAPACITY: usize = 1024;

fn view_number(view_id: &str) -> Option<u64> {
    view_id.strip_prefix('v')?.parse().ok()
}

impl ViewCache {
    pub fn next_id(&mut self) -> String {
        self.next += 1;
        format!("v{}", self.next)
    }

    /// Stores `view`, then evicts the oldest views beyond `capacity`.
    pub fn insert(&mut self, view: FilteredView, capacity: usize) {
        let Some(n) = view_number(&view.view_id) else {
            return;
        };
        self.views.insert(
            n,
            CachedView {
                view,
                invalidated: false,
            },
        );
        while self.views.len() > capacity {
            self.views.pop_first();
        }
    }

    pub fn get(&self, view_id: &str) -> Option<&CachedView> {
        self.views.get(&view_number(view_id)?)
    }

    pub fn invalidate_user(&mut self, user_id: &str) -> usize {
        let mut n = 0;
        for c in self
            .views
            .values_mut()
            .filter(|c| c.view.user_id == user_id && !c.invalidated)
        {
            c.invalidated = true;
            c.view.records.clear();
            n += 1;
        }
        n
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }
}
