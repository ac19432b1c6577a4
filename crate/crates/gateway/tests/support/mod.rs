#![allow(dead_code)]

#[path = "../../../core/tests/model/mod.rs"]
pub mod model;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::http::{HeaderMap, Request, StatusCode};
use axum::Router;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use chrono::{Duration, TimeZone, Utc};
use clearsign_core::{
    encode_sign_headers, fixtures, Engine, EngineConfig, ManualClock, Origin, SystemDocument,
};
use clearsign_gateway::{router, AppState, StaticTokens};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use model::{Call, ErrKind, Executor, Outcome, Payloads};

pub fn token(user: &str) -> String {
    format!("tok-{user}")
}

pub struct TestApp {
    pub engine: Arc<Engine>,
    pub clock: Arc<ManualClock>,
    pub router: Router,
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Bytes,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("non-JSON body ({e}): {:?}", self.body))
    }

    /// Whether the response carries exactly the sign headers of `engine`.
    pub fn has_sign_headers(&self, engine: &Engine) -> bool {
        encode_sign_headers(&engine.signs())
            .iter()
            .all(|(name, value)| {
                self.headers.get(name).and_then(|v| v.to_str().ok()) == Some(value)
            })
    }
}

impl TestApp {
    pub fn new(doc: SystemDocument) -> Self {
        let clock = Arc::new(ManualClock::new(
            Utc.timestamp_opt(1_700_000_000, 0).unwrap(),
        ));
        let id = doc.id.clone();
        let engine = Arc::new(
            Engine::new(
                doc.into_registry().unwrap(),
                &id,
                clock.clone(),
                EngineConfig::default(),
            )
            .unwrap(),
        );
        let tokens: BTreeMap<String, String> = model::USERS
            .iter()
            .chain(["dana"].iter())
            .map(|u| (token(u), u.to_string()))
            .collect();
        let router = router(AppState::new(
            engine.clone(),
            Arc::new(StaticTokens::new(tokens)),
        ));
        Self {
            engine,
            clock,
            router,
        }
    }

    pub fn demo() -> Self {
        Self::new(fixtures::DEMO.document())
    }

    pub async fn send(
        &self,
        method: &str,
        path: &str,
        user: Option<&str>,
        body: Option<Value>,
    ) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(u) = user {
            req = req.header("authorization", format!("Bearer {}", token(u)));
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(b.to_string())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        let res = self.router.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let headers = res.headers().clone();
        let body = res.into_body().collect().await.unwrap().to_bytes();
        Reply {
            status,
            headers,
            body,
        }
    }
}

fn strings(v: &Value, out: &mut Vec<String>) {
    match v {
        Value::String(s) => out.push(s.clone()),
        Value::Array(a) => a.iter().for_each(|x| strings(x, out)),
        Value::Object(o) => o.values().for_each(|x| strings(x, out)),
        _ => {}
    }
}

fn payloads_of(records: &Value) -> Payloads {
    records
        .as_array()
        .expect("records array")
        .iter()
        .map(|r| {
            let id = r["record_id"].as_u64().expect("record id");
            let payload = B64
                .decode(r["payload"].as_str().expect("payload present"))
                .expect("base64 payload");
            (id, payload)
        })
        .collect()
}

/// Drives the reference model through the HTTP API, checking the sign
/// headers and scanning every body for payloads it should not carry.
pub struct HttpExec {
    pub app: TestApp,
    rt: tokio::runtime::Runtime,
    /// base64 payload -> record id, for everything ever stored.
    known: BTreeMap<String, u64>,
    pub problems: Vec<String>,
    pub responses: usize,
}

impl HttpExec {
    pub fn new(app: TestApp) -> Self {
        let rt = tokio::runtime::Builder::new_current_thread()
            .build()
            .unwrap();
        Self {
            app,
            rt,
            known: BTreeMap::new(),
            problems: Vec::new(),
            responses: 0,
        }
    }

    pub fn send(
        &mut self,
        method: &str,
        path: &str,
        user: Option<&str>,
        body: Option<Value>,
    ) -> Reply {
        let reply = self.rt.block_on(self.app.send(method, path, user, body));
        self.responses += 1;
        if !reply.has_sign_headers(&self.app.engine) {
            self.problems.push(format!(
                "{method} {path} -> {} without sign headers",
                reply.status
            ));
        }
        reply
    }

    /// Record ids whose payloads appear anywhere in the body.
    pub fn payload_ids(&self, reply: &Reply) -> BTreeSet<u64> {
        let Ok(v) = serde_json::from_slice::<Value>(&reply.body) else {
            return BTreeSet::new();
        };
        let mut all = Vec::new();
        strings(&v, &mut all);
        all.iter()
            .filter_map(|s| self.known.get(s).copied())
            .collect()
    }

    fn check_body(&mut self, what: &str, reply: &Reply, served: Option<&Payloads>) {
        let allowed: BTreeSet<u64> = served
            .map(|p| p.keys().copied().collect())
            .unwrap_or_default();
        let extra: Vec<u64> = self
            .payload_ids(reply)
            .difference(&allowed)
            .copied()
            .collect();
        if !extra.is_empty() {
            self.problems.push(format!(
                "{what}: body carries payloads of records {extra:?} it does not account for"
            ));
        }
    }

    fn access_outcome(&mut self, what: &str, reply: Reply) -> Outcome {
        let v = reply.json();
        let out = match (reply.status, v["outcome"].as_str(), v["error"].as_str()) {
            (StatusCode::OK, Some("pass_through"), _) => {
                Outcome::View(payloads_of(&v["view"]["records"]))
            }
            (StatusCode::OK, Some("degraded_mode"), _) => {
                Outcome::Degraded(payloads_of(&v["view"]["records"]))
            }
            (StatusCode::FORBIDDEN, Some("denied"), _) => Outcome::Denied(
                v["denial"]["missing"]
                    .as_array()
                    .unwrap()
                    .iter()
                    .map(|c| c.as_str().unwrap().to_owned())
                    .collect(),
            ),
            (StatusCode::PRECONDITION_REQUIRED, Some("consent_required"), _) => {
                if v["factsheet"] != "/factsheets/privacy" {
                    self.problems
                        .push(format!("{what}: 428 without factsheet locator"));
                }
                Outcome::ConsentRequired(
                    v["pending"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|c| c.as_str().unwrap().to_owned())
                        .collect(),
                )
            }
            (StatusCode::FORBIDDEN, _, Some("undeclared_recipient")) => {
                Outcome::Err(ErrKind::UndeclaredRecipient)
            }
            (s, _, _) => panic!("{what}: unexpected {s} {v}"),
        };
        let served = match &out {
            Outcome::View(p) | Outcome::Degraded(p) => Some(p.clone()),
            _ => None,
        };
        self.check_body(what, &reply, served.as_ref());
        out
    }
}

fn cats_json(c: &BTreeSet<String>) -> Value {
    json!(c.iter().collect::<Vec<_>>())
}

impl Executor for HttpExec {
    fn put(&mut self, user: &str, category: &str, payload: &[u8]) -> u64 {
        let encoded = B64.encode(payload);
        let r = self.send(
            "POST",
            "/records",
            Some(user),
            Some(json!({ "category": category, "payload": encoded })),
        );
        assert_eq!(r.status, StatusCode::CREATED, "{:?}", r.body);
        let id = r.json()["record_id"].as_u64().unwrap();
        self.known.insert(encoded, id);
        id
    }

    fn call(&mut self, call: &Call) -> Outcome {
        let what = format!("{call:?}");
        match call {
            Call::Grant {
                user,
                service,
                cats,
            } => {
                let r = self.send(
                    "POST",
                    "/consents",
                    Some(user),
                    Some(json!({ "service_id": service, "categories": cats_json(cats) })),
                );
                self.check_body(&what, &r, None);
                match r.status {
                    StatusCode::OK => Outcome::Ok,
                    StatusCode::BAD_REQUEST if r.json()["error"] == "category_not_declared" => {
                        Outcome::Err(ErrKind::CategoryNotDeclared)
                    }
                    s => panic!("{what}: {s}"),
                }
            }
            Call::Revoke { user, service } => {
                let r = self.send("DELETE", &format!("/consents/{service}"), Some(user), None);
                self.check_body(&what, &r, None);
                assert_eq!(r.status, StatusCode::OK);
                Outcome::Ok
            }
            Call::Erase { user, cats } => {
                let body = match cats {
                    Some(c) => json!({ "categories": cats_json(c) }),
                    None => json!({}),
                };
                let r = self.send("POST", "/my-data/erasure", Some(user), Some(body));
                assert_eq!(r.status, StatusCode::OK);
                Outcome::Count(r.json()["erased"].as_u64().unwrap() as usize)
            }
            Call::Rectify { user, id, payload } => {
                let encoded = B64.encode(payload);
                let r = self.send(
                    "POST",
                    "/my-data/rectification",
                    Some(user),
                    Some(json!({ "record_id": id, "payload": encoded })),
                );
                self.check_body(&what, &r, None);
                match r.status {
                    StatusCode::OK => {
                        self.known.insert(encoded, *id);
                        Outcome::Version(r.json()["version"].as_u64().unwrap() as u32)
                    }
                    StatusCode::NOT_FOUND => Outcome::Err(ErrKind::NotFound),
                    StatusCode::CONFLICT => Outcome::Err(ErrKind::AlreadyErased),
                    s => panic!("{what}: {s}"),
                }
            }
            Call::Materialize { user, service } => {
                let r = self.send(
                    "POST",
                    &format!("/services/{service}/access"),
                    Some(user),
                    None,
                );
                self.access_outcome(&what, r)
            }
            Call::Enforce {
                user,
                service,
                cats,
            } => {
                let r = self.send(
                    "POST",
                    &format!("/services/{service}/access"),
                    Some(user),
                    Some(json!({ "categories": cats_json(cats) })),
                );
                self.access_outcome(&what, r)
            }
            Call::Share {
                user,
                service,
                recipient,
                cats,
            } => {
                let body = json!({ "recipient": recipient, "categories": cats_json(cats) });
                let r = self.send(
                    "POST",
                    &format!("/services/{service}/shares"),
                    Some(user),
                    Some(body),
                );
                self.access_outcome(&what, r)
            }
            Call::Export { user } => {
                let r = self.send("GET", "/my-data", Some(user), None);
                assert_eq!(r.status, StatusCode::OK);
                let p = payloads_of(&r.json()["records"]);
                self.check_body(&what, &r, Some(&p));
                Outcome::Package(p)
            }
            Call::Complain { user, text } => {
                let r = self.send(
                    "POST",
                    "/complaints",
                    Some(user),
                    Some(json!({ "text": text })),
                );
                match r.status {
                    StatusCode::CREATED => Outcome::Ok,
                    StatusCode::BAD_REQUEST => Outcome::Err(ErrKind::EmptyText),
                    s => panic!("{what}: {s}"),
                }
            }
        }
    }

    fn reconfigure(&mut self, service: &str, name: &str) {
        let mut d = self.app.engine.service(service).unwrap();
        d.name = name.to_owned();
        assert!(self.app.engine.register_service(d).unwrap().1);
    }

    fn tick(&mut self, hours: i64) {
        self.app.clock.advance(Duration::hours(hours));
        self.app.engine.maintain();
    }

    fn audit_counts(&mut self) -> BTreeMap<Origin, usize> {
        let mut m = BTreeMap::new();
        for r in self.app.engine.audit_records() {
            *m.entry(r.origin).or_default() += 1;
        }
        m
    }

    fn audit_intact(&mut self) -> bool {
        if self.app.engine.verify_integrity().is_err() {
            return false;
        }
        model::USERS.iter().all(|u| {
            let r = self.send("GET", "/my-data/trace", Some(u), None);
            let trace: clearsign_core::TraceDocument = serde_json::from_slice(&r.body).unwrap();
            clearsign_core::audit::verify_trace(&trace).is_ok()
        })
    }
}
