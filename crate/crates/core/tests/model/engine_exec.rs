use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use clearsign_core::{
    fixtures, AccessFilters, AccessOutcome, DataSource, EnforcementError, Engine, EngineConfig,
    ManualClock, Origin, RecordId, SubjectError,
};

use super::{Call, ErrKind, Executor, Outcome, Payloads};

/// The engine driven directly, without the consent gate.
pub struct EngineExec {
    pub engine: Engine,
    pub clock: Arc<ManualClock>,
}

impl EngineExec {
    pub fn new() -> Self {
        let registry = fixtures::DEMO.document().into_registry().unwrap();
        let clock = Arc::new(ManualClock::new(
            Utc.timestamp_opt(1_700_000_000, 0).unwrap(),
        ));
        let engine = Engine::new(registry, "navi", clock.clone(), EngineConfig::default()).unwrap();
        Self { engine, clock }
    }
}

fn payloads(records: &[clearsign_core::PersonalDataRecord]) -> Payloads {
    records
        .iter()
        .map(|r| {
            (
                r.record_id.0,
                r.payload.clone().expect("served records carry payloads"),
            )
        })
        .collect()
}

fn access(out: Result<AccessOutcome, EnforcementError>) -> Outcome {
    match out {
        Ok(AccessOutcome::Granted { view }) => Outcome::View(payloads(&view.records)),
        Ok(AccessOutcome::Denied { denial }) => Outcome::Denied(denial.missing),
        Err(EnforcementError::UndeclaredRecipient { .. }) => {
            Outcome::Err(ErrKind::UndeclaredRecipient)
        }
        Err(e) => panic!("unexpected enforcement error {e}"),
    }
}

impl Executor for EngineExec {
    fn put(&mut self, user: &str, category: &str, payload: &[u8]) -> u64 {
        self.engine
            .put_record(user, category, payload.to_vec(), DataSource::user_direct())
            .unwrap()
            .0
    }

    fn call(&mut self, call: &Call) -> Outcome {
        let e = &self.engine;
        match call {
            Call::Grant {
                user,
                service,
                cats,
            } => match e.grant(user, service, cats) {
                Ok(_) => Outcome::Ok,
                Err(clearsign_core::ConsentError::CategoryNotDeclared { .. }) => {
                    Outcome::Err(ErrKind::CategoryNotDeclared)
                }
                Err(other) => panic!("{other}"),
            },
            Call::Revoke { user, service } => {
                e.revoke(user, service).unwrap();
                Outcome::Ok
            }
            Call::Erase { user, cats } => {
                let f = AccessFilters {
                    categories: cats.clone(),
                    ..AccessFilters::all()
                };
                Outcome::Count(e.request_erasure(user, &f))
            }
            Call::Rectify { user, id, payload } => {
                match e.request_rectification(user, RecordId(*id), payload.clone()) {
                    Ok(v) => Outcome::Version(v),
                    Err(SubjectError::NotFound(_)) => Outcome::Err(ErrKind::NotFound),
                    Err(SubjectError::AlreadyErased(_)) => Outcome::Err(ErrKind::AlreadyErased),
                    Err(other) => panic!("{other}"),
                }
            }
            Call::Materialize { user, service } => Outcome::View(payloads(
                &e.materialize_view(user, service).unwrap().records,
            )),
            Call::Enforce {
                user,
                service,
                cats,
            } => access(e.enforce_access(user, service, cats)),
            Call::Share {
                user,
                service,
                recipient,
                cats,
            } => access(e.share_with_accessor(user, service, recipient, cats)),
            Call::Export { user } => {
                Outcome::Package(payloads(&e.export_all(user, &AccessFilters::all()).records))
            }
            Call::Complain { user, text } => match e.file_complaint(user, text) {
                Ok(_) => Outcome::Ok,
                Err(SubjectError::EmptyText) => Outcome::Err(ErrKind::EmptyText),
                Err(other) => panic!("{other}"),
            },
        }
    }

    fn reconfigure(&mut self, service: &str, name: &str) {
        let mut d = self.engine.service(service).unwrap();
        d.name = name.to_owned();
        let (_, changed) = self.engine.register_service(d).unwrap();
        assert!(changed);
    }

    fn tick(&mut self, hours: i64) {
        self.clock.advance(Duration::hours(hours));
        self.engine.maintain();
    }

    fn audit_counts(&mut self) -> BTreeMap<Origin, usize> {
        let mut m = BTreeMap::new();
        for r in self.engine.audit_records() {
            *m.entry(r.origin).or_default() += 1;
        }
        m
    }

    fn audit_intact(&mut self) -> bool {
        self.engine.verify_integrity().is_ok()
    }
}
