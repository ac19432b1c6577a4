//! Append-only audit database with a SHA-256 hash chain.
//!
//! Each record stores the chain value of its predecessor (`prev_chain`) and
//! its own `chain = H(prev_chain, canonical content)`. The first record links
//! to the all-zero digest. A per-user trace carries both values, so the
//! receiver can check every record on its own and every consecutive pair.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    ServiceExecution,
    ConsentChange,
    SubjectRight,
    ThirdPartyShare,
    EnforcementError,
}

impl Origin {
    pub const ALL: [Origin; 5] = [
        Self::ServiceExecution,
        Self::ConsentChange,
        Self::SubjectRight,
        Self::ThirdPartyShare,
        Self::EnforcementError,
    ];
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ServiceExecution => "service_execution",
            Self::ConsentChange => "consent_change",
            Self::SubjectRight => "subject_right",
            Self::ThirdPartyShare => "third_party_share",
            Self::EnforcementError => "enforcement_error",
        })
    }
}

/// A record before it is sequenced and chained.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub origin: Origin,
    pub at: DateTime<Utc>,
    pub user_id: String,
    pub service_id: String,
    pub data_version: String,
    pub filter_description: String,
    pub service_version: String,
    pub detail: String,
}

impl AuditEntry {
    pub fn new(origin: Origin, at: DateTime<Utc>, user_id: &str) -> Self {
        Self {
            origin,
            at,
            user_id: user_id.to_owned(),
            service_id: String::new(),
            data_version: String::new(),
            filter_description: String::new(),
            service_version: String::new(),
            detail: String::new(),
        }
    }

    pub fn service(mut self, id: &str, version: &str) -> Self {
        self.service_id = id.to_owned();
        self.service_version = version.to_owned();
        self
    }

    pub fn data_version(mut self, v: &str) -> Self {
        self.data_version = v.to_owned();
        self
    }

    pub fn filter(mut self, description: &str) -> Self {
        self.filter_description = description.to_owned();
        self
    }

    pub fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub origin: Origin,
    pub at: DateTime<Utc>,
    pub user_id: String,
    pub service_id: String,
    pub data_version: String,
    pub filter_description: String,
    pub service_version: String,
    pub detail: String,
    pub prev_chain: String,
    pub chain: String,
}

#[derive(Serialize)]
struct ChainedContent<'a> {
    seq: u64,
    origin: Origin,
    at: &'a DateTime<Utc>,
    user_id: &'a str,
    service_id: &'a str,
    data_version: &'a str,
    filter_description: &'a str,
    service_version: &'a str,
    detail: &'a str,
}

impl AuditRecord {
    /// Chain value implied by this record's content and `prev_chain`.
    pub fn compute_chain(&self) -> String {
        let content = ChainedContent {
            seq: self.seq,
            origin: self.origin,
            at: &self.at,
            user_id: &self.user_id,
            service_id: &self.service_id,
            data_version: &self.data_version,
            filter_description: &self.filter_description,
            service_version: &self.service_version,
            detail: &self.detail,
        };
        digest::digest_parts([
            self.prev_chain.as_bytes(),
            &digest::canonical_json(&content),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("audit entry of origin {origin} is missing {field}")]
pub struct MissingField {
    pub origin: Origin,
    pub field: &'static str,
}

fn check_fields(e: &AuditEntry) -> Result<(), MissingField> {
    let required: &[(&'static str, &str)] = match e.origin {
        Origin::ServiceExecution | Origin::ThirdPartyShare => &[
            ("user_id", &e.user_id),
            ("service_id", &e.service_id),
            ("data_version", &e.data_version),
            ("filter_description", &e.filter_description),
            ("service_version", &e.service_version),
        ],
        Origin::ConsentChange | Origin::EnforcementError => {
            &[("user_id", &e.user_id), ("service_id", &e.service_id)]
        }
        Origin::SubjectRight => &[("user_id", &e.user_id)],
    };
    match required.iter().find(|(_, v)| v.is_empty()) {
        Some((field, _)) => Err(MissingField {
            origin: e.origin,
            field,
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditQuery {
    pub user_id: Option<String>,
    /// Inclusive lower bound.
    pub from: Option<DateTime<Utc>>,
    /// Exclusive upper bound.
    pub until: Option<DateTime<Utc>>,
    pub origins: Option<BTreeSet<Origin>>,
}

impl AuditQuery {
    pub fn matches(&self, r: &AuditRecord) -> bool {
        self.user_id.as_ref().is_none_or(|u| &r.user_id == u)
            && self.from.is_none_or(|f| r.at >= f)
            && self.until.is_none_or(|u| r.at < u)
            && self.origins.as_ref().is_none_or(|o| o.contains(&r.origin))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("audit chain broken at seq {0}")]
pub struct FirstBadSeq(pub u64);

/// Every record touching one user, with chain values for independent checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub user_id: String,
    pub records: Vec<AuditRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AuditLog {
    records: Vec<AuditRecord>,
}

impl AuditLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps previously persisted records without checking them; call
    /// [`AuditLog::verify_integrity`] to do that.
    pub fn from_records(records: Vec<AuditRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[AuditRecord] {
        &self.records
    }

    pub fn head_chain(&self) -> String {
        self.records
            .last()
            .map_or_else(digest::zero_hex, |r| r.chain.clone())
    }

    pub fn append(&mut self, entry: AuditEntry) -> Result<u64, MissingField> {
        check_fields(&entry)?;
        let seq = self.records.len() as u64 + 1;
        let mut rec = AuditRecord {
            seq,
            origin: entry.origin,
            at: entry.at,
            user_id: entry.user_id,
            service_id: entry.service_id,
            data_version: entry.data_version,
            filter_description: entry.filter_description,
            service_version: entry.service_version,
            detail: entry.detail,
            prev_chain: self.head_chain(),
            chain: String::new(),
        };
        rec.chain = rec.compute_chain();
        self.records.push(rec);
        Ok(seq)
    }

    pub fn query(&self, q: &AuditQuery) -> Vec<&AuditRecord> {
        self.records.iter().filter(|r| q.matches(r)).collect()
    }

    pub fn export_trace(&self, user_id: &str) -> TraceDocument {
        TraceDocument {
            user_id: user_id.to_owned(),
            records: self
                .records
                .iter()
                .filter(|r| r.user_id == user_id)
                .cloned()
                .collect(),
        }
    }

    pub fn verify_integrity(&self) -> Result<(), FirstBadSeq> {
        let mut prev = digest::zero_hex();
        for (i, r) in self.records.iter().enumerate() {
            let expected_seq = i as u64 + 1;
            if r.seq != expected_seq || r.prev_chain != prev || r.compute_chain() != r.chain {
                return Err(FirstBadSeq(expected_seq));
            }
            prev = r.chain.clone();
        }
        Ok(())
    }
}

/// Checks a trace without access to the full log: every record must match
/// its own chain value, and records with consecutive seqs must link up.
pub fn verify_trace(trace: &TraceDocument) -> Result<(), FirstBadSeq> {
    let mut prev: Option<&AuditRecord> = None;
    for r in &trace.records {
        if r.compute_chain() != r.chain || r.user_id != trace.user_id {
            return Err(FirstBadSeq(r.seq));
        }
        if r.seq == 1 && r.prev_chain != digest::zero_hex() {
            return Err(FirstBadSeq(r.seq));
        }
        if let Some(p) = prev {
            if r.seq <= p.seq || (r.seq == p.seq + 1 && r.prev_chain != p.chain) {
                return Err(FirstBadSeq(r.seq));
            }
        }
        prev = Some(r);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t(s: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + s, 0).unwrap()
    }

    fn exec(user: &str, at: i64) -> AuditEntry {
        AuditEntry::new(Origin::ServiceExecution, t(at), user)
            .service("svc", "v1")
            .data_version("d1")
            .filter("user=u service=svc@v1 purpose=p allow={} consent=0")
    }

    #[test]
    fn first_append_is_seq_one() {
        let mut log = AuditLog::new();
        assert_eq!(log.append(exec("u", 0)), Ok(1));
        assert_eq!(log.records()[0].prev_chain, digest::zero_hex());
    }

    #[test]
    fn execution_without_filter_is_rejected() {
        let mut log = AuditLog::new();
        let mut e = exec("u", 0);
        e.filter_description.clear();
        assert_eq!(
            log.append(e),
            Err(MissingField {
                origin: Origin::ServiceExecution,
                field: "filter_description"
            })
        );
        assert!(log.is_empty());
    }

    #[test]
    fn subject_right_needs_only_user() {
        let mut log = AuditLog::new();
        assert!(log
            .append(AuditEntry::new(Origin::SubjectRight, t(0), "u"))
            .is_ok());
        assert!(log
            .append(AuditEntry::new(Origin::SubjectRight, t(0), ""))
            .is_err());
        assert!(log
            .append(AuditEntry::new(Origin::ConsentChange, t(0), "u"))
            .is_err());
    }

    #[test]
    fn hundred_appends_verify() {
        let mut log = AuditLog::new();
        for i in 0..100 {
            assert_eq!(log.append(exec("u", i)).unwrap(), i as u64 + 1);
        }
        let seqs: Vec<u64> = log.records().iter().map(|r| r.seq).collect();
        assert_eq!(seqs, (1..=100).collect::<Vec<_>>());
        assert_eq!(log.verify_integrity(), Ok(()));
    }

    #[test]
    fn empty_log_verifies() {
        assert_eq!(AuditLog::new().verify_integrity(), Ok(()));
        assert!(AuditLog::new().export_trace("u").records.is_empty());
    }

    #[test]
    fn byte_flip_is_located() {
        let mut log = AuditLog::new();
        for i in 0..10 {
            log.append(exec(if i % 2 == 0 { "a" } else { "b" }, i))
                .unwrap();
        }
        for k in 1..=10usize {
            let mut json = serde_json::to_vec(&log).unwrap();
            // Flip the low bit of the first byte of record k's detail-free data_version value.
            let marker = b"\"data_version\":\"d1\"";
            let pos = json
                .windows(marker.len())
                .enumerate()
                .filter(|(_, w)| *w == marker)
                .nth(k - 1)
                .map(|(i, _)| i)
                .unwrap();
            json[pos + marker.len() - 3] ^= 0x01;
            let tampered: AuditLog = serde_json::from_slice(&json).unwrap();
            assert_eq!(tampered.verify_integrity(), Err(FirstBadSeq(k as u64)));
        }
    }

    #[test]
    fn rechained_tamper_breaks_next_link() {
        let mut log = AuditLog::new();
        for i in 0..5 {
            log.append(exec("u", i)).unwrap();
        }
        let mut recs = log.records().to_vec();
        recs[2].detail = "forged".into();
        recs[2].chain = recs[2].compute_chain();
        assert_eq!(
            AuditLog::from_records(recs).verify_integrity(),
            Err(FirstBadSeq(4))
        );
    }

    #[test]
    fn query_by_origin_and_time() {
        let mut log = AuditLog::new();
        log.append(exec("u", 0)).unwrap();
        log.append(AuditEntry::new(Origin::ConsentChange, t(5), "u").service("svc", ""))
            .unwrap();
        log.append(exec("v", 10)).unwrap();
        let q = AuditQuery {
            origins: Some(BTreeSet::from([Origin::ConsentChange])),
            ..Default::default()
        };
        let got = log.query(&q);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].origin, Origin::ConsentChange);

        let q = AuditQuery {
            from: Some(t(5)),
            until: Some(t(10)),
            ..Default::default()
        };
        let got: Vec<u64> = log.query(&q).iter().map(|r| r.seq).collect();
        assert_eq!(got, [2]);
        assert!(AuditLog::new().query(&AuditQuery::default()).is_empty());
    }

    #[test]
    fn trace_projection_verifies() {
        let mut log = AuditLog::new();
        for i in 0..6 {
            log.append(exec(if i % 3 == 0 { "a" } else { "b" }, i))
                .unwrap();
        }
        let trace = log.export_trace("a");
        assert_eq!(trace.records.len(), 2);
        assert_eq!(verify_trace(&trace), Ok(()));
        let mut bad = trace.clone();
        bad.records[1].at = t(999);
        assert_eq!(verify_trace(&bad), Err(FirstBadSeq(bad.records[1].seq)));
    }
}
