//! Transparency signs, consent enforcement, filtered data views and an
//! auditable trail for systems that run AI services over personal data.

pub mod audit;
pub mod clock;
pub mod consent;
pub mod data;
pub mod descriptor;
pub mod digest;
pub mod document;
pub mod enforcer;
pub mod engine;
pub mod fixtures;
pub mod headers;
pub mod registry;
pub mod sign;
pub mod signs;
pub mod subject;

pub use audit::{AuditLog, AuditQuery, AuditRecord, FirstBadSeq, Origin, TraceDocument};
pub use clock::{Clock, ManualClock, SystemClock};
pub use consent::{ConsentError, ConsentGrant, ConsentStore};
pub use data::{DataSource, PersonalDataRecord, RecordId, RecordSelector, SourceKind};
pub use descriptor::{
    AIServiceDescriptor, AccessorEntity, AccessorKind, ArtifactKind, DataCategory, Purpose,
    PurposeCategory, RetentionPeriod, SystemDescriptor, Violation,
};
pub use document::SystemDocument;
pub use enforcer::{AccessOutcome, Denial, EnforcementError, FilterPredicate, FilteredView};
pub use engine::{Engine, EngineConfig, EngineState};
pub use headers::{encode_sign_headers, parse_sign_headers, HeaderError, HeaderSet};
pub use registry::{Registry, RegistryError};
pub use sign::{Axis, CodeDataSign, ObjectivitySign, PrivacySign, SignTriplet};
pub use signs::{aggregate_system_signs, derive_service_signs, SystemSigns};
pub use subject::{AccessFilters, Complaint, DataPackage, SubjectError};
