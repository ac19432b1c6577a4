//! Shared setup for the benchmarks.

use std::collections::BTreeSet;
use std::sync::Arc;

use clearsign_core::{fixtures, DataSource, Engine, EngineConfig, SystemClock};

pub const CATEGORIES: [&str; 4] = ["location", "images", "navigation", "use-statistics"];

/// The demo system with `records` records for user `ana`, who has granted
/// `route` access to location data.
pub fn demo_engine(records: usize) -> Engine {
    let doc = fixtures::DEMO.document();
    let id = doc.id.clone();
    let engine = Engine::new(
        doc.into_registry().unwrap(),
        &id,
        Arc::new(SystemClock),
        EngineConfig::default(),
    )
    .unwrap();
    for i in 0..records {
        let payload = format!("record {i:06} {}", "x".repeat(48)).into_bytes();
        engine
            .put_record(
                "ana",
                CATEGORIES[i % CATEGORIES.len()],
                payload,
                DataSource::user_direct(),
            )
            .unwrap();
    }
    engine
        .grant("ana", "route", &BTreeSet::from(["location".to_owned()]))
        .unwrap();
    engine
}
