use std::sync::Arc;

use chrono::{TimeZone, Utc};
use metabridge_core::oai::{Datestamp, RecordHeader};
use metabridge_core::store::{FixedClock, Store};
use metabridge_core::testkit::{random_record, rng};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn list_equals_brute_force_filter(seed in any::<u64>(), from in 0i64..200, len in 0i64..200, day in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let base = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();
        let mut g = rng(seed);
        let mut store = Store::open_with_clock(dir.path(), Arc::new(FixedClock::new(base))).unwrap();
        let n = g.gen_range(0..30);
        for i in 0..n {
            let offset = g.gen_range(0..200) * 3600;
            let stamp = Datestamp::second(base + chrono::Duration::seconds(offset));
            store.upsert_at(&random_record(&mut g, i), stamp).unwrap();
            if g.gen_bool(0.2) {
                store.mark_deleted(&format!("oai:example.org:article/{i}")).unwrap();
            }
        }
        let lo = Datestamp::second(base + chrono::Duration::hours(from));
        let hi = Datestamp::second(base + chrono::Duration::hours(from + len));
        let (lo, hi) = if day {
            (lo.with_granularity(metabridge_core::oai::Granularity::Day), hi.with_granularity(metabridge_core::oai::Granularity::Day))
        } else {
            (lo, hi)
        };
        let day_end = |d: Datestamp| if day { d.instant() + chrono::Duration::seconds(86_399) } else { d.instant() };
        let mut expected: Vec<RecordHeader> = store
            .headers()
            .into_iter()
            .filter(|h| h.datestamp.instant() >= lo.instant() && h.datestamp.instant() <= day_end(hi))
            .collect();
        expected.sort_by(|a, b| a.datestamp.instant().cmp(&b.datestamp.instant()).then(a.identifier.cmp(&b.identifier)));
        prop_assert_eq!(store.list(Some(lo), Some(hi)), expected);
        prop_assert_eq!(store.list(None, None).len(), store.len());
        prop_assert!(store.self_check().is_empty());
    }
}

#[test]
fn fifty_three_records_list_sorted() {
    let dir = tempfile::tempdir().unwrap();
    let clock = Arc::new(FixedClock::new(Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap()));
    let mut store = Store::open_with_clock(dir.path(), clock.clone()).unwrap();
    let mut g = rng(53);
    for i in 0..53 {
        store.upsert(&random_record(&mut g, i)).unwrap();
        clock.advance(if i % 3 == 0 { 0 } else { 60 });
    }
    let all = store.list(None, None);
    assert_eq!(all.len(), 53);
    assert!(all.windows(2).all(|w| (w[0].datestamp.instant(), &w[0].identifier) < (w[1].datestamp.instant(), &w[1].identifier)));
    let empty_window = store.list(
        Some(Datestamp::parse("1999-01-01").unwrap()),
        Some(Datestamp::parse("1999-12-31").unwrap()),
    );
    assert!(empty_window.is_empty());
}
