//! The consent grants database.
//!
//! Only explicitly granted consents are stored; anything absent is denied.
//! Each grant pins the service version it was given for, so a descriptor
//! change leaves the grant in place but no longer permits access until the
//! user grants again.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest;
use crate::registry::{Registry, RegistryError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentGrant {
    pub user_id: String,
    pub service_id: String,
    pub service_version: String,
    pub purpose_id: String,
    pub data_categories: BTreeSet<String>,
    pub granted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentSnapshot {
    pub snapshot_id: u64,
    pub taken_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
    pub grants: Vec<ConsentGrant>,
}

impl ConsentSnapshot {
    pub fn digest(&self) -> String {
        digest::digest_of(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevocationReceipt {
    pub user_id: String,
    pub service_id: String,
    pub revoked_at: DateTime<Utc>,
    pub already_absent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConsentError {
    #[error("unknown service {0:?}")]
    UnknownService(String),
    #[error("service {service:?} does not declare data category {category:?}")]
    CategoryNotDeclared { service: String, category: String },
    #[error("unknown system {0:?}")]
    UnknownSystem(String),
}

/// Outcome of [`ConsentStore::grant`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrantOutcome {
    pub grant: ConsentGrant,
    /// False when an identical, version-current grant already existed.
    pub created: bool,
}

pub const DEFAULT_SNAPSHOT_RETENTION_DAYS: i64 = 90;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentStore {
    /// user id -> service id -> grant
    grants: BTreeMap<String, BTreeMap<String, ConsentGrant>>,
    snapshots: Vec<ConsentSnapshot>,
    next_snapshot: u64,
    retention_secs: i64,
    /// Bumped on every change to the live grant set.
    generation: u64,
}

impl Default for ConsentStore {
    fn default() -> Self {
        Self::new(Duration::days(DEFAULT_SNAPSHOT_RETENTION_DAYS))
    }
}

impl ConsentStore {
    pub fn new(snapshot_retention: Duration) -> Self {
        Self {
            grants: BTreeMap::new(),
            snapshots: Vec::new(),
            next_snapshot: 1,
            retention_secs: snapshot_retention.num_seconds(),
            generation: 0,
        }
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn snapshot_retention(&self) -> Duration {
        Duration::seconds(self.retention_secs)
    }

    pub fn set_snapshot_retention(&mut self, retention: Duration) {
        self.retention_secs = retention.num_seconds();
    }

    /// Records consent for `categories` of `service_id`. Repeating an
    /// identical grant returns the stored record unchanged; any other grant
    /// for the same service replaces the previous one.
    pub fn grant(
        &mut self,
        registry: &Registry,
        user_id: &str,
        service_id: &str,
        categories: &BTreeSet<String>,
        at: DateTime<Utc>,
    ) -> Result<GrantOutcome, ConsentError> {
        let d = registry
            .service(service_id)
            .ok_or_else(|| ConsentError::UnknownService(service_id.to_owned()))?;
        if let Some(c) = categories.iter().find(|c| !d.data_categories.contains(*c)) {
            return Err(ConsentError::CategoryNotDeclared {
                service: service_id.to_owned(),
                category: c.clone(),
            });
        }
        if let Some(existing) = self.live_grant(user_id, service_id) {
            if existing.service_version == d.version && &existing.data_categories == categories {
                return Ok(GrantOutcome {
                    grant: existing.clone(),
                    created: false,
                });
            }
        }
        let grant = ConsentGrant {
            user_id: user_id.to_owned(),
            service_id: service_id.to_owned(),
            service_version: d.version.clone(),
            purpose_id: d.purpose.clone(),
            data_categories: categories.clone(),
            granted_at: at,
        };
        self.grants
            .entry(user_id.to_owned())
            .or_default()
            .insert(service_id.to_owned(), grant.clone());
        self.generation += 1;
        Ok(GrantOutcome {
            grant,
            created: true,
        })
    }

    pub fn revoke(
        &mut self,
        user_id: &str,
        service_id: &str,
        at: DateTime<Utc>,
    ) -> RevocationReceipt {
        let removed = self
            .grants
            .get_mut(user_id)
            .and_then(|m| m.remove(service_id));
        if self.grants.get(user_id).is_some_and(BTreeMap::is_empty) {
            self.grants.remove(user_id);
        }
        if removed.is_some() {
            self.generation += 1;
        }
        RevocationReceipt {
            user_id: user_id.to_owned(),
            service_id: service_id.to_owned(),
            revoked_at: at,
            already_absent: removed.is_none(),
        }
    }

    pub fn live_grant(&self, user_id: &str, service_id: &str) -> Option<&ConsentGrant> {
        self.grants.get(user_id).and_then(|m| m.get(service_id))
    }

    /// The grant, if it exists and was given for the service's current version.
    pub fn current_grant<'a>(
        &'a self,
        registry: &Registry,
        user_id: &str,
        service_id: &str,
    ) -> Option<&'a ConsentGrant> {
        let d = registry.service(service_id)?;
        self.live_grant(user_id, service_id)
            .filter(|g| g.service_version == d.version)
    }

    pub fn grants_of(&self, user_id: &str) -> impl Iterator<Item = &ConsentGrant> {
        self.grants
            .get(user_id)
            .into_iter()
            .flat_map(BTreeMap::values)
    }

    pub fn all_grants(&self) -> impl Iterator<Item = &ConsentGrant> {
        self.grants.values().flat_map(BTreeMap::values)
    }

    pub fn is_permitted(
        &self,
        registry: &Registry,
        user_id: &str,
        service_id: &str,
        category: &str,
        purpose: &str,
    ) -> bool {
        let Some(d) = registry.service(service_id) else {
            return false;
        };
        d.purpose == purpose
            && self
                .current_grant(registry, user_id, service_id)
                .is_some_and(|g| g.data_categories.contains(category))
    }

    /// Data-using services of the system without a version-current grant.
    pub fn pending_consents(
        &self,
        registry: &Registry,
        user_id: &str,
        system_id: &str,
    ) -> Result<Vec<String>, ConsentError> {
        let services = registry.services_of(system_id).map_err(|e| match e {
            RegistryError::UnknownSystem(s) => ConsentError::UnknownSystem(s),
            other => ConsentError::UnknownSystem(other.to_string()),
        })?;
        let mut out: Vec<String> = services
            .into_iter()
            .filter(|d| d.uses_personal_data())
            .filter(|d| self.current_grant(registry, user_id, &d.id).is_none())
            .map(|d| d.id.clone())
            .collect();
        out.sort();
        Ok(out)
    }

    pub fn snapshot(&mut self, at: DateTime<Utc>) -> ConsentSnapshot {
        let snap = ConsentSnapshot {
            snapshot_id: self.next_snapshot,
            taken_at: at,
            expires_at: at + self.snapshot_retention(),
            grants: self.all_grants().cloned().collect(),
        };
        self.next_snapshot += 1;
        self.snapshots.push(snap.clone());
        snap
    }

    pub fn snapshots(&self) -> &[ConsentSnapshot] {
        &self.snapshots
    }

    pub fn last_snapshot_at(&self) -> Option<DateTime<Utc>> {
        self.snapshots.last().map(|s| s.taken_at)
    }

    /// Drops snapshots whose expiry lies strictly before `now`.
    pub fn prune(&mut self, now: DateTime<Utc>) -> usize {
        let before = self.snapshots.len();
        self.snapshots.retain(|s| s.expires_at >= now);
        before - self.snapshots.len()
    }
}
