//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{DateTime, TimeZone, Utc};
use metabridge_core::articulatus::{emit_articulatus, parse_articulatus, ArticulatusOptions};
use metabridge_core::crosswalk::{crosswalk_ojs_to_neb, AffiliationMap, Crosswalk};
use metabridge_core::oai::{Datestamp, OaiErrorCode, OaiPayload, RecordHeader};
use metabridge_core::ojs::{emit_ojs_with, parse_ojs, OjsDocument, OjsEmitOptions};
use metabridge_core::store::{FaultPlan, FixedClock, Store, StoreError, StoreSnapshot};
use metabridge_core::template::{parse_template, render_template};
use metabridge_core::testkit::{articulatus_projection, random_record, rng, template_projection};
use metabridge_core::xml::{self, Element};
use metabridge_core::{validate_for_indexing, ArticleRecord, GalleyFile};
use metabridge_oai::{serve, ClientError, HarvestJob, OaiClient, Provider, ProviderConfig, ServerHandle};
use rand::Rng;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("golden crosswalk", golden_crosswalk),
        ("round trips", round_trips),
        ("OAI loopback", oai_loopback),
        ("protocol errors", protocol_errors),
        ("datestamp law", datestamp_law),
        ("indexing validator", indexing_validator),
        ("store crash safety", store_crash_safety),
        ("RSS ordering", rss_ordering),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {}. {name}: {detail} [{secs:.2}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    if took < limit {
        Ok(())
    } else {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    }
}

fn fixture(name: &str) -> Vec<u8> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name);
    std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 3, 1, 8, 0, 0).unwrap()
}

/// `n` random records one minute apart.
fn seed_store(dir: &Path, n: usize, seed: u64) -> (Vec<ArticleRecord>, Arc<FixedClock>) {
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

fn start_provider(dir: &Path, page_size: usize) -> (ServerHandle, String) {
    let config = ProviderConfig {
        base_url: String::new(),
        page_size,
        ..ProviderConfig::default()
    };
    let (handle, provider) = serve(Provider::new(config, dir), "127.0.0.1:0", 4).unwrap();
    let url = provider.config.base_url.clone();
    (handle, url)
}

fn job(url: &str, prefix: &str) -> HarvestJob {
    HarvestJob {
        metadata_prefix: prefix.into(),
        politeness_delay: Duration::ZERO,
        ..HarvestJob::new(url)
    }
}

// 1 ------------------------------------------------------------------------

/// Text of every mapped field, read straight from the DOM.
fn mapped_fields(article: &Element) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for name in ["pages", "artType"] {
        out.push((name.to_string(), article.child_text(name).unwrap_or_default()));
    }
    for author in article.child("authors").into_iter().flat_map(|a| a.children_named("author")) {
        let num = author.attr("num").unwrap_or_default();
        let info = author.child("individInfo");
        for name in ["surname", "initials", "orgName"] {
            let text = info.and_then(|i| i.child_text(name)).unwrap_or_default();
            out.push((format!("author[{num}]/{name}"), text));
        }
    }
    for (group, item) in [("artTitles", "artTitle"), ("abstracts", "abstract")] {
        for el in article.child(group).into_iter().flat_map(|g| g.children_named(item)) {
            out.push((format!("{item}[{}]", el.attr("lang").unwrap_or_default()), el.text()));
        }
    }
    out
}

fn golden_crosswalk() -> Check {
    let start = Instant::now();
    let affiliations = AffiliationMap::parse(&String::from_utf8(fixture("affiliations.txt")).unwrap()).unwrap();
    let crosswalk = Crosswalk {
        affiliations,
        ..Crosswalk::ojs_to_neb()
    };
    let out = crosswalk_ojs_to_neb(&fixture("fragment_ojs.xml"), &crosswalk).map_err(|e| e.to_string())?;
    let got = mapped_fields(&xml::parse(&out.xml).map_err(|e| e.to_string())?);
    let want = mapped_fields(&xml::parse(&fixture("fragment_articulatus.xml")).unwrap());
    within(start, Duration::from_secs(1))?;
    ensure!(want.len() == 12, "golden file has {} mapped fields, expected 12", want.len());
    for (g, w) in got.iter().zip(&want) {
        ensure!(g == w, "{}: got {:?}, want {:?}", w.0, g.1, w.1);
    }
    ensure!(got.len() == want.len(), "{} mapped fields, want {}", got.len(), want.len());
    let losses: Vec<String> = out.losses.iter().map(ToString::to_string).collect();
    ensure!(
        losses.iter().any(|l| l == "subjects (RUS): 3 dropped"),
        "keyword loss not reported: {losses:?}"
    );
    Ok(format!("{} mapped fields identical; keywords reported dropped", got.len()))
}

// 2 ------------------------------------------------------------------------

fn round_trips() -> Check {
    let start = Instant::now();
    let mut g = rng(20_240_301);
    let mut failures: Vec<String> = Vec::new();
    for i in 0..1000 {
        let r = random_record(&mut g, i);
        let ojs = emit_ojs_with(&OjsDocument::single(r.clone()), OjsEmitOptions::archival())
            .map_err(|e| e.to_string())
            .and_then(|x| parse_ojs(&x).map_err(|e| e.to_string()));
        if !matches!(&ojs, Ok(doc) if doc.records == [r.clone()]) {
            failures.push(format!("ojs #{i}"));
        }
        let neb = emit_articulatus(std::slice::from_ref(&r), &ArticulatusOptions::default())
            .map_err(|e| e.to_string())
            .and_then(|o| parse_articulatus(&o.xml).map_err(|e| e.to_string()));
        if !matches!(&neb, Ok(v) if *v == [articulatus_projection(&r)]) {
            failures.push(format!("articulatus #{i}"));
        }
        if parse_template(&render_template(&r)).ok() != Some(template_projection(&r)) {
            failures.push(format!("template #{i}"));
        }
    }
    within(start, Duration::from_secs(60))?;
    ensure!(failures.is_empty(), "{} failures, first: {:?}", failures.len(), &failures[..failures.len().min(5)]);
    Ok("1000 records x 3 formats, 0 failures".into())
}

// 3 ------------------------------------------------------------------------

fn ids_via_stream(client: &OaiClient, url: &str) -> Result<(Vec<String>, usize), String> {
    let j = job(url, "oai_dc");
    let mut stream = client.list_records(&j).map_err(|e| e.to_string())?;
    let mut ids = Vec::new();
    for r in stream.by_ref() {
        ids.push(r.map_err(|e| e.to_string())?.header.identifier);
    }
    Ok((ids, stream.pages()))
}

fn oai_loopback() -> Check {
    let start = Instant::now();
    let src = tempfile::tempdir().unwrap();
    let (records, clock) = seed_store(src.path(), 53, 3);
    let expected: BTreeSet<String> = records.iter().map(|r| r.identifier.clone()).collect();
    let client = OaiClient::new();

    let (_server, url) = start_provider(src.path(), 10);
    let dst = tempfile::tempdir().unwrap();
    let mut store = Store::open(dst.path()).unwrap();
    let s = client.harvest_into_store(&job(&url, "ojs_native"), &mut store).map_err(|e| e.to_string())?;
    ensure!(s.errors.is_empty(), "harvest errors: {:?}", s.errors);
    ensure!(s.pages == 6, "{} pages, want 6", s.pages);
    ensure!((s.fetched, s.added, s.updated) == (53, 53, 0), "summary {s}");
    let got: BTreeSet<String> = store.headers().into_iter().map(|h| h.identifier).collect();
    ensure!(got == expected, "harvested identifiers differ from the provider's");

    for size in [1, 7, 53, 100] {
        let (_srv, u) = start_provider(src.path(), size);
        let (ids, pages) = ids_via_stream(&client, &u)?;
        let unique: BTreeSet<String> = ids.iter().cloned().collect();
        ensure!(ids.len() == 53 && unique == expected, "page size {size}: {} ids, {} unique", ids.len(), unique.len());
        ensure!(pages == 53usize.div_ceil(size), "page size {size}: {pages} pages");
    }

    clock.advance(3600);
    {
        let mut source = Store::open_with_clock(src.path(), clock.clone()).unwrap();
        let mut touched = records[17].clone();
        touched.pages = Some("1-99".into());
        source.upsert(&touched).unwrap();
    }
    let mut inc = job(&url, "ojs_native");
    inc.from = store.watermark();
    let s = client.harvest_into_store(&inc, &mut store).map_err(|e| e.to_string())?;
    ensure!(s.errors.is_empty(), "incremental errors: {:?}", s.errors);
    ensure!((s.fetched, s.added, s.updated) == (1, 0, 1), "incremental summary {s}");
    within(start, Duration::from_secs(30))?;
    Ok("53 ids in 6 pages; sizes 1/7/53/100 agree; incremental fetched=1".into())
}

// 4 ------------------------------------------------------------------------

fn raw_get(url: &str, args: &[(&str, &str)]) -> Result<Vec<u8>, String> {
    let u = url::Url::parse_with_params(url, args).map_err(|e| e.to_string())?;
    let resp = reqwest::blocking::get(u).map_err(|e| e.to_string())?;
    ensure!(resp.status() == 200, "HTTP {}", resp.status());
    Ok(resp.bytes().map_err(|e| e.to_string())?.to_vec())
}

fn protocol_errors() -> Check {
    let src = tempfile::tempdir().unwrap();
    let (records, clock) = seed_store(src.path(), 25, 4);
    let (_server, url) = start_provider(src.path(), 10);
    let client = OaiClient::new();

    let token = match client.request(&url, &[("verb", "ListIdentifiers"), ("metadataPrefix", "oai_dc")]) {
        Ok(OaiPayload::ListIdentifiers { token: Some(t), .. }) => t.token,
        other => return Err(format!("no resumption token on the first page: {other:?}")),
    };
    clock.advance(600);
    Store::open_with_clock(src.path(), clock).unwrap().mark_deleted(&records[3].identifier).unwrap();

    let cases: [(OaiErrorCode, Vec<(&str, &str)>); 6] = [
        (OaiErrorCode::BadVerb, vec![("verb", "Frobnicate")]),
        (OaiErrorCode::BadArgument, vec![("verb", "ListRecords")]),
        (OaiErrorCode::BadResumptionToken, vec![("verb", "ListIdentifiers"), ("resumptionToken", &token)]),
        (
            OaiErrorCode::IdDoesNotExist,
            vec![("verb", "GetRecord"), ("metadataPrefix", "oai_dc"), ("identifier", "oai:nowhere:0")],
        ),
        (OaiErrorCode::CannotDisseminateFormat, vec![("verb", "ListRecords"), ("metadataPrefix", "marc21")]),
        (
            OaiErrorCode::NoRecordsMatch,
            vec![("verb", "ListRecords"), ("metadataPrefix", "oai_dc"), ("from", "2099-01-01")],
        ),
    ];
    for (code, args) in &cases {
        let body = raw_get(&url, args)?;
        let root = xml::parse(&body).map_err(|e| format!("{code}: body is not well-formed XML: {e}"))?;
        ensure!(root.name == "OAI-PMH", "{code}: root element <{}>", root.name);
        match client.request(&url, args) {
            Err(e @ ClientError::Protocol(_)) => {
                ensure!(e.protocol_code() == Some(*code), "expected {code}, client saw {e}")
            }
            other => return Err(format!("expected {code}, client got {other:?}")),
        }
    }
    Ok("6 error codes produced, well-formed, and typed by the client".into())
}

// 5 ------------------------------------------------------------------------

/// Days since 1970-01-01 for a proleptic Gregorian date, by civil arithmetic.
fn days_from_civil(y: i64, m: i64, d: i64) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let mp = (m + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn days_in_month(y: i64, m: i64) -> i64 {
    match m {
        2 if (y % 4 == 0 && y % 100 != 0) || y % 400 == 0 => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    }
}

fn datestamp_law() -> Check {
    let mut g = rng(5);
    let mut stamps: Vec<(String, i64, Datestamp)> = Vec::with_capacity(10_000);
    for i in 0..10_000 {
        let y = g.gen_range(1900..=2100);
        let m = g.gen_range(1..=12);
        let d = g.gen_range(1..=days_in_month(y, m));
        let day_secs = days_from_civil(y, m, d) * 86_400;
        let (text, secs) = if i % 2 == 0 {
            (format!("{y:04}-{m:02}-{d:02}"), day_secs)
        } else {
            let (hh, mm, ss) = (g.gen_range(0..24), g.gen_range(0..60), g.gen_range(0..60));
            (
                format!("{y:04}-{m:02}-{d:02}T{hh:02}:{mm:02}:{ss:02}Z"),
                day_secs + hh * 3600 + mm * 60 + ss,
            )
        };
        let parsed = Datestamp::parse(&text).map_err(|e| format!("{text}: {e}"))?;
        ensure!(parsed.format() == text, "{text} formats back as {}", parsed.format());
        ensure!(Datestamp::parse(&parsed.format()).ok() == Some(parsed), "{text}: parse/format not inverse");
        ensure!(parsed.instant().timestamp() == secs, "{text}: instant {} vs oracle {secs}", parsed.instant());
        stamps.push((text, secs, parsed));
    }
    let mut compared = 0;
    for w in stamps.windows(2) {
        let ((ta, sa, a), (tb, sb, b)) = (&w[0], &w[1]);
        if sa != sb {
            ensure!(a.cmp(b) == sa.cmp(sb), "{ta} vs {tb}: ordering disagrees with the oracle");
            compared += 1;
        }
        ensure!((a == b) == (ta == tb), "{ta} vs {tb}: equality disagrees");
    }
    Ok(format!("10000 stamps round-trip; {compared} ordered pairs agree with the oracle"))
}

// 6 ------------------------------------------------------------------------

fn indexing_validator() -> Check {
    let fragment = parse_ojs(&fixture("fragment_ojs.xml")).map_err(|e| e.to_string())?.records.remove(0);
    let errors = validate_for_indexing(&fragment).error_codes();
    ensure!(errors.is_empty(), "fragment record has errors {errors:?}");
    ensure!(fragment.date_published.is_none() && fragment.references.is_empty(), "fragment shape changed");
    type Mutation = (&'static str, fn(&mut ArticleRecord));
    let mutations: [Mutation; 4] = [
        ("no-title", |r| r.titles = Default::default()),
        ("no-author", |r| r.authors.clear()),
        ("no-pages-or-date", |r| r.pages = None),
        ("no-fulltext", |r| r.galleys.clear()),
    ];
    for (code, mutate) in mutations {
        let mut r = fragment.clone();
        mutate(&mut r);
        let got = validate_for_indexing(&r).error_codes();
        ensure!(got == [code], "deleting the field behind {code} gave {got:?}");
    }
    Ok("fragment passes; each of 4 single-field deletions triggers exactly its rule".into())
}

// 7 ------------------------------------------------------------------------

type State = (Vec<RecordHeader>, Vec<Option<ArticleRecord>>, Option<Datestamp>);

fn state(dir: &Path) -> State {
    let snap = StoreSnapshot::load(dir).unwrap();
    let headers = snap.headers();
    let records = headers.iter().map(|h| snap.get(&h.identifier).unwrap()).collect();
    (headers, records, snap.watermark())
}

fn store_crash_safety() -> Check {
    let base = tempfile::tempdir().unwrap();
    let mut g = rng(7);
    let existing: Vec<ArticleRecord> = (0..3).map(|i| random_record(&mut g, i)).collect();
    let mut changed = existing[1].clone();
    changed.galleys = vec![GalleyFile::new("PDF", "new.pdf", "application/pdf", b"%PDF-1.4\n".to_vec()).unwrap()];
    let fresh = random_record(&mut g, 99);

    type Op = Box<dyn Fn(&mut Store) -> Result<(), StoreError>>;
    let ops: Vec<(&str, Op)> = vec![
        ("add", Box::new(move |s| s.upsert(&fresh).map(drop))),
        ("update", Box::new(move |s| s.upsert(&changed).map(drop))),
        ("delete", {
            let id = existing[2].identifier.clone();
            Box::new(move |s| s.mark_deleted(&id).map(drop))
        }),
    ];
    let prepare = |dir: &Path| -> Store {
        let clock = Arc::new(FixedClock::new(t0()));
        let mut s = Store::open_with_clock(dir, clock.clone()).unwrap();
        for r in &existing {
            s.upsert(r).unwrap();
        }
        clock.advance(60);
        s
    };
    let mut runs = 0;
    for (name, op) in &ops {
        let reference = base.path().join(format!("{name}-ref"));
        let pre = {
            let mut s = prepare(&reference);
            let pre = state(&reference);
            op(&mut s).map_err(|e| format!("{name}: {e}"))?;
            pre
        };
        let post = state(&reference);
        ensure!(pre != post, "{name}: operation changed nothing");
        for partial in [false, true] {
            for step in 1.. {
                let dir = base.path().join(format!("{name}-{partial}-{step}"));
                let mut s = prepare(&dir);
                s.set_fault_plan(Some(FaultPlan {
                    fail_at_step: step,
                    partial_write: partial,
                }));
                let finished = op(&mut s).is_ok();
                drop(s);
                runs += 1;
                let reopened = Store::open(&dir).map_err(|e| format!("{name} step {step}: reopen failed: {e}"))?;
                let problems = reopened.self_check();
                ensure!(problems.is_empty(), "{name} step {step}: {problems:?}");
                drop(reopened);
                let after = state(&dir);
                ensure!(after == pre || after == post, "{name} step {step} (partial={partial}): mixed state");
                if finished {
                    ensure!(after == post, "{name}: completed write not visible");
                    break;
                }
            }
        }
    }
    Ok(format!("{runs} interrupted writes over add/update/delete all reopen as old or new"))
}

// 8 ------------------------------------------------------------------------

fn rss_ordering() -> Check {
    let src = tempfile::tempdir().unwrap();
    let mut g = rng(8);
    let mut expected: Vec<(String, i64)> = Vec::new();
    {
        let mut store = Store::open(src.path()).unwrap();
        let mut offsets: Vec<i64> = Vec::new();
        while offsets.len() < 5 {
            let o = g.gen_range(0..1_000_000);
            if !offsets.contains(&o) {
                offsets.push(o);
            }
        }
        for (i, off) in offsets.iter().enumerate() {
            let r = random_record(&mut g, i);
            let at = t0() + chrono::Duration::seconds(*off);
            store.upsert_at(&r, Datestamp::second(at)).unwrap();
            expected.push((r.identifier, at.timestamp()));
        }
    }
    // Oracle: plain selection of the maximum, repeated.
    let mut oracle = Vec::new();
    let mut left = expected.clone();
    while !left.is_empty() {
        let best = (0..left.len()).max_by_key(|&i| left[i].1).unwrap();
        oracle.push(left.remove(best));
    }

    let (_server, url) = start_provider(src.path(), 10);
    let rss = url.replace("/oai", "/rss");
    for limit in 1..=7 {
        let body = reqwest::blocking::get(format!("{rss}?limit={limit}")).map_err(|e| e.to_string())?;
        let doc = xml::parse(&body.bytes().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let items: Vec<(String, i64)> = doc
            .child("channel")
            .ok_or("no channel")?
            .children_named("item")
            .map(|i| {
                let guid = i.child_text("guid").unwrap_or_default();
                let date = i.child_text("pubDate").unwrap_or_default();
                let t = DateTime::parse_from_rfc2822(&date).map(|d| d.timestamp()).unwrap_or(i64::MIN);
                (guid, t)
            })
            .collect();
        ensure!(items.len() == limit.min(5), "limit {limit}: {} items", items.len());
        ensure!(
            items.windows(2).all(|w| w[0].1.cmp(&w[1].1) == Ordering::Greater),
            "limit {limit}: pubDates not strictly descending"
        );
        ensure!(items[..] == oracle[..items.len()], "limit {limit}: items differ from the sort oracle");
    }
    Ok("limits 1..7 give min(limit, 5) items, newest first".into())
}
