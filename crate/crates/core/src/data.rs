//! Versioned personal-data records with rectification and erasure.
//!
//! Erasure leaves a tombstone: the record keeps its id, category, source and
//! timestamps so audit entries stay resolvable, but the payload is dropped
//! and can never come back.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptor::Vocabulary;
use crate::digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RecordId(pub u64);

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    UserDirect,
    DerivedInternal,
    ThirdParty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSource {
    pub kind: SourceKind,
    #[serde(default)]
    pub provenance: String,
}

impl DataSource {
    pub fn user_direct() -> Self {
        Self {
            kind: SourceKind::UserDirect,
            provenance: String::new(),
        }
    }

    pub fn new(kind: SourceKind, provenance: &str) -> Self {
        Self {
            kind,
            provenance: provenance.to_owned(),
        }
    }
}

pub(crate) mod base64_opt {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(bytes) => s.serialize_some(&STANDARD.encode(bytes)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        Option::<String>::deserialize(d)?
            .map(|s| STANDARD.decode(s).map_err(serde::de::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonalDataRecord {
    pub record_id: RecordId,
    pub user_id: String,
    pub category: String,
    /// Base64 on the wire; `None` once erased.
    #[serde(with = "base64_opt")]
    pub payload: Option<Vec<u8>>,
    pub source: DataSource,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
    pub version: u32,
    pub erased: bool,
}

impl PersonalDataRecord {
    pub fn is_live(&self) -> bool {
        !self.erased
    }
}

/// Which records a read or erasure applies to. `None` means "any".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSelector {
    #[serde(default)]
    pub categories: Option<BTreeSet<String>>,
    #[serde(default)]
    pub sources: Option<BTreeSet<SourceKind>>,
}

impl RecordSelector {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn categories<I: IntoIterator<Item = S>, S: Into<String>>(cats: I) -> Self {
        Self {
            categories: Some(cats.into_iter().map(Into::into).collect()),
            sources: None,
        }
    }

    pub fn matches(&self, r: &PersonalDataRecord) -> bool {
        self.categories
            .as_ref()
            .is_none_or(|c| c.contains(&r.category))
            && self
                .sources
                .as_ref()
                .is_none_or(|s| s.contains(&r.source.kind))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataError {
    #[error("unknown data category {0:?}")]
    UnknownCategory(String),
    #[error("payload must not be empty")]
    EmptyPayload,
    #[error("record {0} not found")]
    NotFound(RecordId),
    #[error("record {0} has been erased")]
    AlreadyErased(RecordId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataStore {
    /// user id -> record id -> record
    users: BTreeMap<String, BTreeMap<RecordId, PersonalDataRecord>>,
    owner: BTreeMap<RecordId, String>,
    next_id: u64,
}

impl DataStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put_record(
        &mut self,
        vocab: &Vocabulary,
        user_id: &str,
        category: &str,
        payload: Vec<u8>,
        source: DataSource,
        at: DateTime<Utc>,
    ) -> Result<RecordId, DataError> {
        if vocab.category(category).is_none() {
            return Err(DataError::UnknownCategory(category.to_owned()));
        }
        if payload.is_empty() {
            return Err(DataError::EmptyPayload);
        }
        self.next_id += 1;
        let id = RecordId(self.next_id);
        let rec = PersonalDataRecord {
            record_id: id,
            user_id: user_id.to_owned(),
            category: category.to_owned(),
            payload: Some(payload),
            source,
            created_at: at,
            updated_at: at,
            version: 1,
            erased: false,
        };
        self.users
            .entry(user_id.to_owned())
            .or_default()
            .insert(id, rec);
        self.owner.insert(id, user_id.to_owned());
        Ok(id)
    }

    pub fn record(&self, id: RecordId) -> Option<&PersonalDataRecord> {
        let user = self.owner.get(&id)?;
        self.users.get(user)?.get(&id)
    }

    fn record_mut(&mut self, id: RecordId) -> Option<&mut PersonalDataRecord> {
        let user = self.owner.get(&id)?;
        self.users.get_mut(user)?.get_mut(&id)
    }

    /// Live records of `user_id` matching `selector`, ordered by
    /// (category, record id).
    pub fn get_records(
        &self,
        user_id: &str,
        selector: &RecordSelector,
    ) -> Vec<&PersonalDataRecord> {
        let mut out: Vec<_> = self
            .users
            .get(user_id)
            .into_iter()
            .flat_map(BTreeMap::values)
            .filter(|r| r.is_live() && selector.matches(r))
            .collect();
        out.sort_by(|a, b| (&a.category, a.record_id).cmp(&(&b.category, b.record_id)));
        out
    }

    /// Every record of the user including tombstones, in id order.
    pub fn all_records(&self, user_id: &str) -> impl Iterator<Item = &PersonalDataRecord> {
        self.users
            .get(user_id)
            .into_iter()
            .flat_map(BTreeMap::values)
    }

    pub fn rectify(
        &mut self,
        id: RecordId,
        new_payload: Vec<u8>,
        at: DateTime<Utc>,
    ) -> Result<u32, DataError> {
        let rec = self.record_mut(id).ok_or(DataError::NotFound(id))?;
        if rec.erased {
            return Err(DataError::AlreadyErased(id));
        }
        if new_payload.is_empty() {
            return Err(DataError::EmptyPayload);
        }
        rec.payload = Some(new_payload);
        rec.version += 1;
        rec.updated_at = at;
        Ok(rec.version)
    }

    pub fn erase(&mut self, user_id: &str, selector: &RecordSelector, at: DateTime<Utc>) -> usize {
        let Some(records) = self.users.get_mut(user_id) else {
            return 0;
        };
        let mut n = 0;
        for rec in records
            .values_mut()
            .filter(|r| r.is_live() && selector.matches(r))
        {
            rec.payload = None;
            rec.erased = true;
            rec.updated_at = at;
            n += 1;
        }
        n
    }

    /// Digest over the ids and versions of the user's live records.
    pub fn version_digest(&self, user_id: &str) -> String {
        let entries: Vec<(RecordId, u32)> = self
            .users
            .get(user_id)
            .into_iter()
            .flat_map(BTreeMap::values)
            .filter(|r| r.is_live())
            .map(|r| (r.record_id, r.version))
            .collect();
        digest::digest_of(&(user_id, entries))
    }

    pub fn user_ids(&self) -> impl Iterator<Item = &str> {
        self.users.keys().map(String::as_str)
    }
}
