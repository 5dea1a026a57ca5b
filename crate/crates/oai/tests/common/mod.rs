#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use metabridge_core::oai::{Datestamp, Granularity};
use metabridge_core::store::{FixedClock, Store};
use metabridge_core::testkit::{random_record, rng};
use metabridge_core::ArticleRecord;
use metabridge_oai::{serve, HarvestJob, Provider, ProviderConfig, ServerHandle};

pub fn t0() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 8, 0, 0).unwrap()
}

/// Fills `dir` with `n` records, one minute apart starting at [`t0`].
pub fn seed_store(dir: &Path, n: usize, seed: u64) -> (Vec<ArticleRecord>, Arc<FixedClock>) {
    let clock = Arc::new(FixedClock::new(t0()));
    let mut store = Store::open_with_clock(dir, clock.clone()).unwrap();
    let mut g = rng(seed);
    let records: Vec<ArticleRecord> = (0..n).map(|i| random_record(&mut g, i)).collect();
    for r in &records {
        store.upsert(r).unwrap();
        clock.advance(60);
    }
    (records, clock)
}

pub fn start(dir: &Path, page_size: usize, granularity: Granularity) -> (ServerHandle, String) {
    let config = ProviderConfig {
        base_url: String::new(),
        page_size,
        granularity,
        ..ProviderConfig::default()
    };
    let (handle, provider) = serve(Provider::new(config, dir), "127.0.0.1:0", 4).unwrap();
    let url = provider.config.base_url.clone();
    (handle, url)
}

pub fn job(endpoint: &str, prefix: &str) -> HarvestJob {
    HarvestJob {
        metadata_prefix: prefix.into(),
        politeness_delay: Duration::ZERO,
        ..HarvestJob::new(endpoint)
    }
}

pub fn second(offset_secs: i64) -> Datestamp {
    Datestamp::second(t0() + chrono::Duration::seconds(offset_secs))
}

/// Every live record of a store directory, in identifier order.
pub fn contents(dir: &Path) -> Vec<(String, Datestamp, bool, Option<ArticleRecord>)> {
    let snap = metabridge_core::store::StoreSnapshot::load(dir).unwrap();
    let mut out: Vec<_> = snap
        .headers()
        .into_iter()
        .map(|h| {
            let rec = snap.get(&h.identifier).unwrap();
            (h.identifier, h.datestamp, h.deleted, rec)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Every file under `dir` (except the writer lock) with its bytes.
pub fn tree(dir: &Path) -> Vec<(std::path::PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(std::path::PathBuf, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else if path.file_name().is_some_and(|n| n != ".lock") {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
