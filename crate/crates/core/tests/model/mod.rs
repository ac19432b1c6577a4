//! A brute-force reference model of consent enforcement. Random operation
//! sequences run against an executor (the engine directly, or the HTTP
//! gateway) and against this model; every outcome must match exactly.

#![allow(dead_code)]

pub mod engine_exec;

use std::collections::{BTreeMap, BTreeSet};

use clearsign_core::{Origin, SystemDocument};
use proptest::prelude::*;

pub const USERS: [&str; 3] = ["ana", "ben", "cy"];
pub const CATEGORIES: [&str; 4] = ["location", "images", "navigation", "use-statistics"];
pub const RECIPIENT: &str = "company A";

#[derive(Debug, Clone)]
pub enum Op {
    Put {
        user: usize,
        cat: usize,
    },
    Grant {
        user: usize,
        service: usize,
        mask: u8,
    },
    Revoke {
        user: usize,
        service: usize,
    },
    Erase {
        user: usize,
        mask: Option<u8>,
    },
    Rectify {
        user: usize,
        nth: usize,
        foreign: bool,
    },
    Materialize {
        user: usize,
        service: usize,
    },
    Enforce {
        user: usize,
        service: usize,
        mask: u8,
    },
    Share {
        user: usize,
        service: usize,
        mask: u8,
    },
    Export {
        user: usize,
    },
    Complain {
        user: usize,
        empty: bool,
    },
    Reconfigure {
        service: usize,
    },
    Tick {
        hours: i64,
    },
}

pub fn op_strategy() -> impl Strategy<Value = Op> {
    let u = 0..USERS.len();
    prop_oneof![
        4 => (u.clone(), 0..CATEGORIES.len()).prop_map(|(user, cat)| Op::Put { user, cat }),
        3 => (u.clone(), 0..3usize, 0..16u8).prop_map(|(user, service, mask)| Op::Grant { user, service, mask }),
        1 => (u.clone(), 0..3usize).prop_map(|(user, service)| Op::Revoke { user, service }),
        1 => (u.clone(), proptest::option::of(0..16u8)).prop_map(|(user, mask)| Op::Erase { user, mask }),
        1 => (u.clone(), 0..8usize, any::<bool>()).prop_map(|(user, nth, foreign)| Op::Rectify { user, nth, foreign }),
        3 => (u.clone(), 0..3usize).prop_map(|(user, service)| Op::Materialize { user, service }),
        3 => (u.clone(), 0..3usize, 0..16u8).prop_map(|(user, service, mask)| Op::Enforce { user, service, mask }),
        1 => (u.clone(), 0..3usize, 0..16u8).prop_map(|(user, service, mask)| Op::Share { user, service, mask }),
        1 => u.clone().prop_map(|user| Op::Export { user }),
        1 => (u, any::<bool>()).prop_map(|(user, empty)| Op::Complain { user, empty }),
        1 => (0..3usize).prop_map(|service| Op::Reconfigure { service }),
        1 => (1..48i64).prop_map(|hours| Op::Tick { hours }),
    ]
}

pub fn sequence_strategy(max_len: usize) -> impl Strategy<Value = Vec<Op>> {
    proptest::collection::vec(op_strategy(), 1..max_len)
}

pub fn mask_set(mask: u8) -> BTreeSet<String> {
    CATEGORIES
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, c)| c.to_string())
        .collect()
}

/// A call with every argument resolved to concrete values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Call {
    Grant {
        user: String,
        service: String,
        cats: BTreeSet<String>,
    },
    Revoke {
        user: String,
        service: String,
    },
    Erase {
        user: String,
        cats: Option<BTreeSet<String>>,
    },
    Rectify {
        user: String,
        id: u64,
        payload: Vec<u8>,
    },
    Materialize {
        user: String,
        service: String,
    },
    Enforce {
        user: String,
        service: String,
        cats: BTreeSet<String>,
    },
    Share {
        user: String,
        service: String,
        recipient: String,
        cats: BTreeSet<String>,
    },
    Export {
        user: String,
    },
    Complain {
        user: String,
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ErrKind {
    CategoryNotDeclared,
    NotFound,
    AlreadyErased,
    EmptyText,
    UndeclaredRecipient,
}

/// Record id -> payload.
pub type Payloads = BTreeMap<u64, Vec<u8>>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    View(Payloads),
    Denied(BTreeSet<String>),
    ConsentRequired(Vec<String>),
    Degraded(Payloads),
    Count(usize),
    Version(u32),
    Package(Payloads),
    Err(ErrKind),
}

pub trait Executor {
    fn put(&mut self, user: &str, category: &str, payload: &[u8]) -> u64;
    fn call(&mut self, call: &Call) -> Outcome;
    /// Re-registers `service` under a new display name.
    fn reconfigure(&mut self, service: &str, name: &str);
    fn tick(&mut self, hours: i64);
    fn audit_counts(&mut self) -> BTreeMap<Origin, usize>;
    fn audit_intact(&mut self) -> bool;
}

#[derive(Debug, Clone)]
struct Rec {
    user: String,
    category: String,
    payload: Vec<u8>,
    version: u32,
    erased: bool,
}

#[derive(Debug, Clone)]
struct Svc {
    id: String,
    declared: BTreeSet<String>,
    degraded: bool,
    third_parties: BTreeSet<String>,
    epoch: u64,
}

pub struct Model {
    services: Vec<Svc>,
    records: BTreeMap<u64, Rec>,
    /// (user, service) -> (categories, service epoch at grant time)
    grants: BTreeMap<(String, String), (BTreeSet<String>, u64)>,
    audit: BTreeMap<Origin, usize>,
    /// Whether calls pass the first-contact consent gate.
    gated: bool,
    counter: u64,
}

impl Model {
    pub fn new(doc: &SystemDocument, gated: bool) -> Self {
        let services = doc
            .services
            .iter()
            .map(|d| Svc {
                id: d.id.clone(),
                declared: d.data_categories.clone(),
                degraded: d.degraded_fallback,
                third_parties: d
                    .accessors
                    .iter()
                    .filter(|a| a.kind != clearsign_core::AccessorKind::SystemItself)
                    .map(|a| a.name.clone())
                    .collect(),
                epoch: 0,
            })
            .collect();
        Self {
            services,
            records: BTreeMap::new(),
            grants: BTreeMap::new(),
            audit: BTreeMap::new(),
            gated,
            counter: 0,
        }
    }

    pub fn service_ids(&self) -> Vec<String> {
        self.services.iter().map(|s| s.id.clone()).collect()
    }

    fn fresh_payload(&mut self, tag: &str) -> Vec<u8> {
        self.counter += 1;
        format!("payload-{}-{tag}", self.counter).into_bytes()
    }

    fn bump(&mut self, o: Origin) {
        *self.audit.entry(o).or_default() += 1;
    }

    fn svc(&self, i: usize) -> &Svc {
        &self.services[i % self.services.len()]
    }

    /// Categories `user` may currently release to service `i`.
    fn allowed(&self, user: &str, i: usize) -> BTreeSet<String> {
        let s = self.svc(i);
        match self.grants.get(&(user.to_owned(), s.id.clone())) {
            Some((cats, epoch)) if *epoch == s.epoch => {
                cats.intersection(&s.declared).cloned().collect()
            }
            _ => BTreeSet::new(),
        }
    }

    fn pending(&self, user: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .services
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.declared.is_empty())
            .filter(|(i, s)| {
                self.grants
                    .get(&(user.to_owned(), s.id.clone()))
                    .is_none_or(|(_, e)| *e != self.svc(*i).epoch)
            })
            .map(|(_, s)| s.id.clone())
            .collect();
        out.sort();
        out
    }

    fn live_of(&self, user: &str, cats: Option<&BTreeSet<String>>) -> Payloads {
        self.records
            .iter()
            .filter(|(_, r)| {
                r.user == user && !r.erased && cats.is_none_or(|c| c.contains(&r.category))
            })
            .map(|(id, r)| (*id, r.payload.clone()))
            .collect()
    }

    fn access(
        &mut self,
        user: &str,
        i: usize,
        requested: Option<BTreeSet<String>>,
        origin: Origin,
    ) -> Outcome {
        let allowed = self.allowed(user, i);
        if let Some(req) = &requested {
            let missing: BTreeSet<String> = req.difference(&allowed).cloned().collect();
            if !missing.is_empty() {
                self.bump(origin);
                return Outcome::Denied(missing);
            }
        }
        let cats = requested.unwrap_or(allowed);
        self.bump(origin);
        Outcome::View(self.live_of(user, Some(&cats)))
    }

    /// Gate in front of service calls; `None` means the call proceeds.
    fn gate(&mut self, user: &str, i: usize, allow_degraded: bool) -> Option<Outcome> {
        if !self.gated {
            return None;
        }
        let pending = self.pending(user);
        let s = self.svc(i);
        if !pending.contains(&s.id) {
            return None;
        }
        if allow_degraded && s.degraded {
            self.bump(Origin::ServiceExecution);
            return Some(Outcome::Degraded(Payloads::new()));
        }
        Some(Outcome::ConsentRequired(pending))
    }

    /// Applies `op` to both the model and `exec`, returning an error message
    /// on the first divergence.
    pub fn step<E: Executor>(&mut self, exec: &mut E, op: &Op) -> Result<(), String> {
        let user = |u: &usize| USERS[*u % USERS.len()].to_owned();
        let (call, expected) = match op {
            Op::Put { user: u, cat } => {
                let u = user(u);
                let cat = CATEGORIES[*cat % CATEGORIES.len()];
                let payload = self.fresh_payload(cat);
                let id = exec.put(&u, cat, &payload);
                if self.records.contains_key(&id) {
                    return Err(format!("record id {id} reused"));
                }
                self.records.insert(
                    id,
                    Rec {
                        user: u,
                        category: cat.to_owned(),
                        payload,
                        version: 1,
                        erased: false,
                    },
                );
                return Ok(());
            }
            Op::Reconfigure { service } => {
                self.counter += 1;
                let idx = *service % self.services.len();
                let id = self.services[idx].id.clone();
                exec.reconfigure(&id, &format!("{id} revision {}", self.counter));
                self.services[idx].epoch += 1;
                return Ok(());
            }
            Op::Tick { hours } => {
                exec.tick(*hours);
                return Ok(());
            }
            Op::Grant {
                user: u,
                service,
                mask,
            } => {
                let u = user(u);
                let s = self.svc(*service).clone();
                let cats = mask_set(*mask);
                let expected = if cats.is_subset(&s.declared) {
                    let epoch = s.epoch;
                    self.grants
                        .insert((u.clone(), s.id.clone()), (cats.clone(), epoch));
                    self.bump(Origin::ConsentChange);
                    Outcome::Ok
                } else {
                    Outcome::Err(ErrKind::CategoryNotDeclared)
                };
                (
                    Call::Grant {
                        user: u,
                        service: s.id,
                        cats,
                    },
                    expected,
                )
            }
            Op::Revoke { user: u, service } => {
                let u = user(u);
                let s = self.svc(*service).id.clone();
                self.grants.remove(&(u.clone(), s.clone()));
                self.bump(Origin::ConsentChange);
                (
                    Call::Revoke {
                        user: u,
                        service: s,
                    },
                    Outcome::Ok,
                )
            }
            Op::Erase { user: u, mask } => {
                let u = user(u);
                let cats = mask.map(mask_set);
                let mut n = 0;
                for r in self.records.values_mut() {
                    if r.user == u
                        && !r.erased
                        && cats.as_ref().is_none_or(|c| c.contains(&r.category))
                    {
                        r.erased = true;
                        r.payload.clear();
                        n += 1;
                    }
                }
                self.bump(Origin::SubjectRight);
                (Call::Erase { user: u, cats }, Outcome::Count(n))
            }
            Op::Rectify {
                user: u,
                nth,
                foreign,
            } => {
                let u = user(u);
                let candidates: Vec<u64> = self
                    .records
                    .iter()
                    .filter(|(_, r)| (r.user == u) != *foreign)
                    .map(|(id, _)| *id)
                    .collect();
                let payload = self.fresh_payload("rectified");
                let id = if candidates.is_empty() {
                    1_000_000
                } else {
                    candidates[nth % candidates.len()]
                };
                let expected = match self.records.get_mut(&id) {
                    Some(r) if r.user == u && r.erased => Outcome::Err(ErrKind::AlreadyErased),
                    Some(r) if r.user == u => {
                        r.version += 1;
                        r.payload = payload.clone();
                        Outcome::Version(r.version)
                    }
                    _ => Outcome::Err(ErrKind::NotFound),
                };
                self.bump(Origin::SubjectRight);
                (
                    Call::Rectify {
                        user: u,
                        id,
                        payload,
                    },
                    expected,
                )
            }
            Op::Materialize { user: u, service } => {
                let u = user(u);
                let s = self.svc(*service).id.clone();
                let expected = match self.gate(&u, *service, true) {
                    Some(o) => o,
                    None => self.access(&u, *service, None, Origin::ServiceExecution),
                };
                (
                    Call::Materialize {
                        user: u,
                        service: s,
                    },
                    expected,
                )
            }
            Op::Enforce {
                user: u,
                service,
                mask,
            } => {
                let u = user(u);
                let s = self.svc(*service).id.clone();
                let cats = mask_set(*mask);
                let expected = match self.gate(&u, *service, true) {
                    Some(o) => o,
                    None => self.access(&u, *service, Some(cats.clone()), Origin::ServiceExecution),
                };
                (
                    Call::Enforce {
                        user: u,
                        service: s,
                        cats,
                    },
                    expected,
                )
            }
            Op::Share {
                user: u,
                service,
                mask,
            } => {
                let u = user(u);
                let svc = self.svc(*service).clone();
                let cats = mask_set(*mask);
                let expected = if !svc.third_parties.contains(RECIPIENT) {
                    Outcome::Err(ErrKind::UndeclaredRecipient)
                } else {
                    match self.gate(&u, *service, false) {
                        Some(o) => o,
                        None => {
                            self.access(&u, *service, Some(cats.clone()), Origin::ThirdPartyShare)
                        }
                    }
                };
                (
                    Call::Share {
                        user: u,
                        service: svc.id,
                        recipient: RECIPIENT.to_owned(),
                        cats,
                    },
                    expected,
                )
            }
            Op::Export { user: u } => {
                let u = user(u);
                self.bump(Origin::SubjectRight);
                let expected = Outcome::Package(self.live_of(&u, None));
                (Call::Export { user: u }, expected)
            }
            Op::Complain { user: u, empty } => {
                let u = user(u);
                self.bump(Origin::SubjectRight);
                let (text, expected) = if *empty {
                    (" ".to_owned(), Outcome::Err(ErrKind::EmptyText))
                } else {
                    ("my data was shared".to_owned(), Outcome::Ok)
                };
                (Call::Complain { user: u, text }, expected)
            }
        };
        let actual = exec.call(&call);
        if actual != expected {
            return Err(format!("{call:?}: expected {expected:?}, got {actual:?}"));
        }
        Ok(())
    }

    pub fn expected_audit(&self) -> &BTreeMap<Origin, usize> {
        &self.audit
    }

    /// Payloads that have ever been erased; they must never be served again.
    pub fn erased_ids(&self) -> BTreeSet<u64> {
        self.records
            .iter()
            .filter(|(_, r)| r.erased)
            .map(|(id, _)| *id)
            .collect()
    }
}

/// Runs a whole sequence and checks the audit trail afterwards.
pub fn run_sequence<E: Executor>(
    doc: &SystemDocument,
    exec: &mut E,
    ops: &[Op],
    gated: bool,
) -> Result<(), String> {
    let mut model = Model::new(doc, gated);
    for op in ops {
        model.step(exec, op)?;
    }
    let mut actual = exec.audit_counts();
    actual.retain(|_, n| *n > 0);
    if &actual != model.expected_audit() {
        return Err(format!(
            "audit counts: expected {:?}, got {actual:?}",
            model.expected_audit()
        ));
    }
    if !exec.audit_intact() {
        return Err("audit chain does not verify".into());
    }
    Ok(())
}
