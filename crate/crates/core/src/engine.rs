//! The enforcement engine: one system's registry, consents, personal data,
//! views and audit trail behind a single lock.
//!
//! Every operation observes one consistent state and appends its audit
//! record before returning. Data reaches services only through
//! [`Engine::materialize_view`], [`Engine::enforce_access`] and
//! [`Engine::share_with_accessor`].

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{
    AuditEntry, AuditLog, AuditQuery, AuditRecord, FirstBadSeq, Origin, TraceDocument,
};
use crate::clock::Clock;
use crate::consent::{
    ConsentError, ConsentGrant, ConsentSnapshot, ConsentStore, GrantOutcome, RevocationReceipt,
};
use crate::data::{DataError, DataSource, DataStore, PersonalDataRecord, RecordId};
use crate::descriptor::{AIServiceDescriptor, AccessorKind};
use crate::document::SystemDocument;
use crate::enforcer::{
    build_filter, describe_filter, records_digest, select_records, AccessOutcome, CachedView,
    Denial, EnforcementError, FilteredView, ViewCache,
};
use crate::registry::{PrivacyFactsheetRow, Registry, RegistryError, TransparencyFactsheet};
use crate::signs::SystemSigns;
use crate::subject::{AccessFilters, Complaint, DataPackage, SubjectError, TRACE_LOCATOR};

pub const DEFAULT_SNAPSHOT_INTERVAL_HOURS: i64 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    pub snapshot_interval: Duration,
    pub snapshot_retention: Duration,
    /// Materialized views kept addressable by id.
    pub view_capacity: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            snapshot_interval: Duration::hours(DEFAULT_SNAPSHOT_INTERVAL_HOURS),
            snapshot_retention: Duration::days(crate::consent::DEFAULT_SNAPSHOT_RETENTION_DAYS),
            view_capacity: crate::enforcer::DEFAULT_VIEW_CAPACITY,
        }
    }
}

/// Everything the engine persists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineState {
    pub system_id: String,
    pub registry: Registry,
    pub consents: ConsentStore,
    pub data: DataStore,
    pub audit: AuditLog,
    pub views: ViewCache,
    pub complaints: Vec<Complaint>,
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("state format: {0}")]
    Format(#[from] serde_json::Error),
    #[error("state names system {0:?} which its registry does not hold")]
    MissingSystem(String),
}

pub struct Engine {
    state: RwLock<EngineState>,
    revision: AtomicU64,
    clock: Arc<dyn Clock>,
    config: EngineConfig,
}

fn join(set: &BTreeSet<String>) -> String {
    set.iter().map(String::as_str).collect::<Vec<_>>().join(",")
}

impl Engine {
    pub fn new(
        registry: Registry,
        system_id: &str,
        clock: Arc<dyn Clock>,
        config: EngineConfig,
    ) -> Result<Self, RegistryError> {
        if !registry.has_system(system_id) {
            return Err(RegistryError::UnknownSystem(system_id.to_owned()));
        }
        let state = EngineState {
            system_id: system_id.to_owned(),
            registry,
            consents: ConsentStore::new(config.snapshot_retention),
            data: DataStore::new(),
            audit: AuditLog::new(),
            views: ViewCache::default(),
            complaints: Vec::new(),
        };
        Ok(Self::from_state(state, clock, config))
    }

    pub fn from_state(mut state: EngineState, clock: Arc<dyn Clock>, config: EngineConfig) -> Self {
        state
            .consents
            .set_snapshot_retention(config.snapshot_retention);
        Self {
            state: RwLock::new(state),
            revision: AtomicU64::new(0),
            clock,
            config,
        }
    }

    pub fn load(
        path: &Path,
        clock: Arc<dyn Clock>,
        config: EngineConfig,
    ) -> Result<Self, PersistError> {
        let state: EngineState = serde_json::from_slice(&std::fs::read(path)?)?;
        if !state.registry.has_system(&state.system_id) {
            return Err(PersistError::MissingSystem(state.system_id));
        }
        Ok(Self::from_state(state, clock, config))
    }

    /// Atomically replaces `path` with the current state and returns the
    /// revision that was written.
    pub fn save(&self, path: &Path) -> Result<u64, PersistError> {
        let (bytes, rev) = {
            let st = self.state.read();
            (serde_json::to_vec(&*st)?, self.revision())
        };
        let dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(rev)
    }

    pub fn state(&self) -> EngineState {
        self.state.read().clone()
    }

    /// Incremented by every operation that may have changed the state.
    pub fn revision(&self) -> u64 {
        self.revision.load(Ordering::SeqCst)
    }

    pub fn config(&self) -> EngineConfig {
        self.config
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn mutate<R>(&self, f: impl FnOnce(&mut EngineState, DateTime<Utc>) -> R) -> R {
        let now = self.clock.now();
        let mut st = self.state.write();
        Self::housekeeping(&mut st, &self.config, now);
        let out = f(&mut st, now);
        self.revision.fetch_add(1, Ordering::SeqCst);
        out
    }

    fn housekeeping(st: &mut EngineState, config: &EngineConfig, now: DateTime<Utc>) -> bool {
        let due = st
            .consents
            .last_snapshot_at()
            .is_none_or(|last| now - last >= config.snapshot_interval);
        if due {
            st.consents.snapshot(now);
        }
        st.consents.prune(now) > 0 || due
    }

    /// Takes a consent snapshot if one is due and prunes expired ones.
    /// Returns whether anything changed.
    pub fn maintain(&self) -> bool {
        let now = self.clock.now();
        let changed = Self::housekeeping(&mut self.state.write(), &self.config, now);
        if changed {
            self.revision.fetch_add(1, Ordering::SeqCst);
        }
        changed
    }

    fn append(st: &mut EngineState, entry: AuditEntry) -> u64 {
        st.audit
            .append(entry)
            .expect("engine entries carry every required field")
    }

    // Transparency.

    pub fn system_id(&self) -> String {
        self.state.read().system_id.clone()
    }

    pub fn signs(&self) -> SystemSigns {
        let st = self.state.read();
        st.registry
            .system_signs(&st.system_id)
            .expect("engine system exists")
    }

    pub fn privacy_factsheet(&self) -> Vec<PrivacyFactsheetRow> {
        let st = self.state.read();
        st.registry
            .build_privacy_factsheet(&st.system_id)
            .expect("engine system exists")
    }

    pub fn transparency_factsheet(&self) -> TransparencyFactsheet {
        let st = self.state.read();
        st.registry
            .build_transparency_factsheet(&st.system_id)
            .expect("engine system exists")
    }

    /// A service of this engine's system.
    pub fn service(&self, service_id: &str) -> Option<AIServiceDescriptor> {
        let st = self.state.read();
        st.registry
            .services_of(&st.system_id)
            .ok()?
            .into_iter()
            .find(|d| d.id == service_id)
            .cloned()
    }

    /// Registers or updates a service. Returns its version and whether the
    /// conditions changed.
    pub fn register_service(
        &self,
        d: AIServiceDescriptor,
    ) -> Result<(String, bool), RegistryError> {
        self.mutate(|st, _| {
            let sys = st.system_id.clone();
            let reg = st.registry.register_service(&sys, d)?;
            Ok((reg.version.to_owned(), reg.change_of_conditions))
        })
    }

    /// Brings the registry in line with `doc`: new vocabulary entries and
    /// services are added and changed services get new versions, which
    /// makes earlier grants for them stale. Returns the changed service ids.
    pub fn apply_document(&self, doc: &SystemDocument) -> Result<Vec<String>, RegistryError> {
        self.mutate(|st, _| {
            if doc.id != st.system_id {
                return Err(RegistryError::UnknownSystem(doc.id.clone()));
            }
            for p in &doc.vague_patterns {
                st.registry.add_vague_pattern(p);
            }
            for c in &doc.data_categories {
                if st.registry.vocabulary().category(&c.id).is_none() {
                    st.registry.register_category(c.clone())?;
                }
            }
            for p in &doc.purposes {
                if st.registry.vocabulary().purpose(&p.id) != Some(p) {
                    st.registry.register_purpose(p.clone())?;
                }
            }
            let mut changed = Vec::new();
            for d in &doc.services {
                if st
                    .registry
                    .register_service(&doc.id, d.clone())?
                    .change_of_conditions
                {
                    changed.push(d.id.clone());
                }
            }
            for b in &doc.bundles {
                st.registry.declare_bundle(&doc.id, b.clone())?;
            }
            Ok(changed)
        })
    }

    // Consent.

    pub fn grant(
        &self,
        user_id: &str,
        service_id: &str,
        categories: &BTreeSet<String>,
    ) -> Result<GrantOutcome, ConsentError> {
        self.mutate(|st, now| {
            Self::check_service(st, service_id)
                .map_err(|_| ConsentError::UnknownService(service_id.to_owned()))?;
            let out = st
                .consents
                .grant(&st.registry, user_id, service_id, categories, now)?;
            let note = if out.created { "" } else { " (unchanged)" };
            let entry = AuditEntry::new(Origin::ConsentChange, now, user_id)
                .service(service_id, &out.grant.service_version)
                .detail(format!("grant {{{}}}{note}", join(categories)));
            Self::append(st, entry);
            Ok(out)
        })
    }

    pub fn revoke(
        &self,
        user_id: &str,
        service_id: &str,
    ) -> Result<RevocationReceipt, ConsentError> {
        self.mutate(|st, now| {
            let version = Self::check_service(st, service_id)
                .map_err(|_| ConsentError::UnknownService(service_id.to_owned()))?
                .version
                .clone();
            let receipt = st.consents.revoke(user_id, service_id, now);
            let note = if receipt.already_absent {
                " (nothing granted)"
            } else {
                ""
            };
            let entry = AuditEntry::new(Origin::ConsentChange, now, user_id)
                .service(service_id, &version)
                .detail(format!("revoke{note}"));
            Self::append(st, entry);
            Ok(receipt)
        })
    }

    /// Data-using services still waiting for this user's consent.
    pub fn pending_consents(&self, user_id: &str) -> Vec<String> {
        let st = self.state.read();
        st.consents
            .pending_consents(&st.registry, user_id, &st.system_id)
            .expect("engine system exists")
    }

    pub fn grants_of(&self, user_id: &str) -> Vec<ConsentGrant> {
        self.state
            .read()
            .consents
            .grants_of(user_id)
            .cloned()
            .collect()
    }

    pub fn snapshots(&self) -> Vec<ConsentSnapshot> {
        self.state.read().consents.snapshots().to_vec()
    }

    // Data ingestion.

    pub fn put_record(
        &self,
        user_id: &str,
        category: &str,
        payload: Vec<u8>,
        source: DataSource,
    ) -> Result<RecordId, DataError> {
        self.mutate(|st, now| {
            st.data.put_record(
                st.registry.vocabulary(),
                user_id,
                category,
                payload,
                source,
                now,
            )
        })
    }

    // Enforcement.

    fn check_service<'a>(
        st: &'a EngineState,
        service_id: &str,
    ) -> Result<&'a AIServiceDescriptor, EnforcementError> {
        st.registry
            .service(service_id)
            .filter(|_| st.registry.system_of(service_id) == Some(st.system_id.as_str()))
            .ok_or_else(|| EnforcementError::UnknownService(service_id.to_owned()))
    }

    fn enforce(
        st: &mut EngineState,
        now: DateTime<Utc>,
        user_id: &str,
        service_id: &str,
        requested: Option<&BTreeSet<String>>,
        recipient: Option<&str>,
        view_capacity: usize,
    ) -> Result<AccessOutcome, EnforcementError> {
        Self::check_service(st, service_id)?;
        let f = build_filter(&st.registry, &st.consents, user_id, service_id)?;
        let origin = if recipient.is_some() {
            Origin::ThirdPartyShare
        } else {
            Origin::ServiceExecution
        };
        let description = describe_filter(&f);
        let data_version = st.data.version_digest(user_id);
        let entry = AuditEntry::new(origin, now, user_id)
            .service(&f.service_id, &f.service_version)
            .data_version(&data_version)
            .filter(&description);
        let to = recipient.map(|r| format!(" to {r}")).unwrap_or_default();

        if let Some(req) = requested {
            let missing: BTreeSet<String> =
                req.difference(&f.allowed_categories).cloned().collect();
            if !missing.is_empty() {
                Self::append(
                    st,
                    entry.detail(format!("denied{to}: missing {{{}}}", join(&missing))),
                );
                let denial = Denial {
                    user_id: user_id.to_owned(),
                    service_id: service_id.to_owned(),
                    requested: req.clone(),
                    missing,
                };
                return Ok(AccessOutcome::Denied { denial });
            }
        }

        let records = match select_records(&st.data, &f, requested) {
            Ok(r) => r,
            Err(e) => {
                let entry = AuditEntry::new(Origin::EnforcementError, now, user_id)
                    .service(&f.service_id, &f.service_version)
                    .data_version(&data_version)
                    .filter(&description)
                    .detail(e.to_string());
                Self::append(st, entry);
                return Err(e);
            }
        };
        let view_id = st.views.next_id();
        let view = FilteredView {
            view_id: view_id.clone(),
            user_id: user_id.to_owned(),
            service_id: service_id.to_owned(),
            service_version: f.service_version.clone(),
            recipient: recipient.map(str::to_owned),
            filter: description,
            records_digest: records_digest(&records),
            records,
            data_version,
            created_at: now,
        };
        Self::append(
            st,
            entry.detail(format!(
                "view {view_id}{to}: {} records",
                view.records.len()
            )),
        );
        st.views.insert(view.clone(), view_capacity);
        Ok(AccessOutcome::Granted { view })
    }

    /// Every record the user's live grants let `service_id` see.
    pub fn materialize_view(
        &self,
        user_id: &str,
        service_id: &str,
    ) -> Result<FilteredView, EnforcementError> {
        let cap = self.config.view_capacity;
        self.mutate(
            |st, now| match Self::enforce(st, now, user_id, service_id, None, None, cap)? {
                AccessOutcome::Granted { view } => Ok(view),
                AccessOutcome::Denied { .. } => {
                    unreachable!("unrestricted requests are never denied")
                }
            },
        )
    }

    /// A view of exactly `requested`, or a denial naming what is not granted.
    pub fn enforce_access(
        &self,
        user_id: &str,
        service_id: &str,
        requested: &BTreeSet<String>,
    ) -> Result<AccessOutcome, EnforcementError> {
        let cap = self.config.view_capacity;
        self.mutate(|st, now| {
            Self::enforce(st, now, user_id, service_id, Some(requested), None, cap)
        })
    }

    /// Hands a view to one of the service's declared third-party accessors
    /// under the same filter a direct execution would get.
    pub fn share_with_accessor(
        &self,
        user_id: &str,
        service_id: &str,
        recipient: &str,
        requested: &BTreeSet<String>,
    ) -> Result<AccessOutcome, EnforcementError> {
        let cap = self.config.view_capacity;
        self.mutate(|st, now| {
            let d = Self::check_service(st, service_id)?;
            let declared = d
                .accessors
                .iter()
                .any(|a| a.name == recipient && a.kind != AccessorKind::SystemItself);
            if !declared {
                return Err(EnforcementError::UndeclaredRecipient {
                    service: service_id.to_owned(),
                    recipient: recipient.to_owned(),
                });
            }
            Self::enforce(
                st,
                now,
                user_id,
                service_id,
                Some(requested),
                Some(recipient),
                cap,
            )
        })
    }

    pub fn view(&self, view_id: &str) -> Option<CachedView> {
        self.state.read().views.get(view_id).cloned()
    }

    // Subject access.

    pub fn export_all(&self, user_id: &str, filters: &AccessFilters) -> DataPackage {
        self.mutate(|st, now| {
            let selector = filters.selector(&st.registry, &st.system_id);
            let records: Vec<PersonalDataRecord> = st
                .data
                .get_records(user_id, &selector)
                .into_iter()
                .cloned()
                .collect();
            let grants = st
                .consents
                .grants_of(user_id)
                .filter(|g| filters.admits_grant(g))
                .cloned()
                .collect();
            let complaints = st
                .complaints
                .iter()
                .filter(|c| c.user_id == user_id)
                .cloned()
                .collect();
            let entry = AuditEntry::new(Origin::SubjectRight, now, user_id)
                .data_version(&st.data.version_digest(user_id))
                .detail(format!("export: {} records", records.len()));
            Self::append(st, entry);
            DataPackage {
                user_id: user_id.to_owned(),
                generated_at: now,
                records,
                grants,
                complaints,
                trace: TRACE_LOCATOR.to_owned(),
            }
        })
    }

    /// Tombstones the matching records and invalidates the user's views.
    pub fn request_erasure(&self, user_id: &str, filters: &AccessFilters) -> usize {
        self.mutate(|st, now| {
            let selector = filters.selector(&st.registry, &st.system_id);
            let n = st.data.erase(user_id, &selector, now);
            let invalidated = st.views.invalidate_user(user_id);
            let entry = AuditEntry::new(Origin::SubjectRight, now, user_id)
                .data_version(&st.data.version_digest(user_id))
                .detail(format!(
                    "erasure: {n} records, {invalidated} views invalidated"
                ));
            Self::append(st, entry);
            n
        })
    }

    pub fn request_rectification(
        &self,
        user_id: &str,
        record_id: RecordId,
        payload: Vec<u8>,
    ) -> Result<u32, SubjectError> {
        self.mutate(|st, now| {
            let owned = st
                .data
                .record(record_id)
                .is_some_and(|r| r.user_id == user_id);
            let result = if owned {
                st.data
                    .rectify(record_id, payload, now)
                    .map_err(|e| match e {
                        DataError::AlreadyErased(id) => SubjectError::AlreadyErased(id),
                        DataError::EmptyPayload => SubjectError::EmptyPayload,
                        _ => SubjectError::NotFound(record_id),
                    })
            } else {
                Err(SubjectError::NotFound(record_id))
            };
            let detail = match &result {
                Ok(v) => format!("rectification: {record_id} now version {v}"),
                Err(e) => format!("rectification rejected: {e}"),
            };
            let entry = AuditEntry::new(Origin::SubjectRight, now, user_id)
                .data_version(&st.data.version_digest(user_id))
                .detail(detail);
            Self::append(st, entry);
            result
        })
    }

    pub fn file_complaint(&self, user_id: &str, text: &str) -> Result<Complaint, SubjectError> {
        self.mutate(|st, now| {
            let result = if text.trim().is_empty() {
                Err(SubjectError::EmptyText)
            } else {
                let c = Complaint {
                    receipt_id: format!("c{}", st.complaints.len() + 1),
                    user_id: user_id.to_owned(),
                    text: text.to_owned(),
                    filed_at: now,
                };
                st.complaints.push(c.clone());
                Ok(c)
            };
            let detail = match &result {
                Ok(c) => format!("complaint {}", c.receipt_id),
                Err(e) => format!("complaint rejected: {e}"),
            };
            Self::append(
                st,
                AuditEntry::new(Origin::SubjectRight, now, user_id).detail(detail),
            );
            result
        })
    }

    // Audit.

    pub fn export_trace(&self, user_id: &str) -> TraceDocument {
        self.state.read().audit.export_trace(user_id)
    }

    pub fn audit_records(&self) -> Vec<AuditRecord> {
        self.state.read().audit.records().to_vec()
    }

    pub fn audit_query(&self, q: &AuditQuery) -> Vec<AuditRecord> {
        self.state
            .read()
            .audit
            .query(q)
            .into_iter()
            .cloned()
            .collect()
    }

    pub fn verify_integrity(&self) -> Result<(), FirstBadSeq> {
        self.state.read().audit.verify_integrity()
    }
}
