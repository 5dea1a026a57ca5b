mod common;

use common::*;
use metabridge_core::oai::{parse_oai_response, Granularity, Metadata, OaiErrorCode, OaiPayload, OaiResponse, OaiVerb};
use metabridge_core::store::Store;

fn get(url: &str, args: &[(&str, &str)]) -> (reqwest::StatusCode, Vec<u8>) {
    let url = url::Url::parse_with_params(url, args).unwrap();
    let resp = reqwest::blocking::get(url).unwrap();
    (resp.status(), resp.bytes().unwrap().to_vec())
}

fn ask(url: &str, args: &[(&str, &str)]) -> OaiResponse {
    let (status, body) = get(url, args);
    assert_eq!(status, 200);
    parse_oai_response(&body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&body)))
}

fn code(url: &str, args: &[(&str, &str)]) -> OaiErrorCode {
    let resp = ask(url, args);
    let errors = resp.body.expect_err("expected an error response");
    errors[0].code
}

#[test]
fn malformed_requests_get_typed_errors() {
    let src = tempfile::tempdir().unwrap();
    seed_store(src.path(), 5, 11);
    let (_server, url) = start(src.path(), 10, Granularity::Second);
    let cases: &[(&[(&str, &str)], OaiErrorCode)] = &[
        (&[], OaiErrorCode::BadVerb),
        (&[("verb", "Frobnicate")], OaiErrorCode::BadVerb),
        (&[("verb", "Identify"), ("verb", "Identify")], OaiErrorCode::BadVerb),
        (&[("verb", "ListRecords")], OaiErrorCode::BadArgument),
        (&[("verb", "Identify"), ("color", "red")], OaiErrorCode::BadArgument),
        (&[("verb", "ListRecords"), ("metadataPrefix", "oai_dc"), ("from", "yesterday")], OaiErrorCode::BadArgument),
        (
            &[("verb", "ListRecords"), ("metadataPrefix", "oai_dc"), ("from", "2024-03-01"), ("until", "2024-03-02T00:00:00Z")],
            OaiErrorCode::BadArgument,
        ),
        (
            &[("verb", "ListRecords"), ("metadataPrefix", "oai_dc"), ("from", "2024-03-02"), ("until", "2024-03-01")],
            OaiErrorCode::BadArgument,
        ),
        (
            &[("verb", "ListIdentifiers"), ("metadataPrefix", "oai_dc"), ("resumptionToken", "x")],
            OaiErrorCode::BadArgument,
        ),
        (&[("verb", "GetRecord"), ("identifier", "oai:example.org:article/1")], OaiErrorCode::BadArgument),
        (&[("verb", "ListRecords"), ("metadataPrefix", "marc21")], OaiErrorCode::CannotDisseminateFormat),
        (
            &[("verb", "GetRecord"), ("metadataPrefix", "marc21"), ("identifier", "oai:example.org:article/1")],
            OaiErrorCode::CannotDisseminateFormat,
        ),
        (&[("verb", "GetRecord"), ("metadataPrefix", "oai_dc"), ("identifier", "oai:nowhere:1")], OaiErrorCode::IdDoesNotExist),
        (&[("verb", "ListMetadataFormats"), ("identifier", "oai:nowhere:1")], OaiErrorCode::IdDoesNotExist),
        (&[("verb", "ListRecords"), ("metadataPrefix", "oai_dc"), ("from", "2030-01-01")], OaiErrorCode::NoRecordsMatch),
        (&[("verb", "ListIdentifiers"), ("resumptionToken", "garbage")], OaiErrorCode::BadResumptionToken),
        (&[("verb", "ListSets")], OaiErrorCode::NoSetHierarchy),
        (&[("verb", "ListRecords"), ("metadataPrefix", "oai_dc"), ("set", "physics")], OaiErrorCode::NoSetHierarchy),
    ];
    for (args, expected) in cases {
        assert_eq!(code(&url, args), *expected, "{args:?}");
    }
}

#[test]
fn request_attributes_are_echoed_only_when_understood() {
    let src = tempfile::tempdir().unwrap();
    seed_store(src.path(), 2, 12);
    let (_server, url) = start(src.path(), 10, Granularity::Second);
    let bad = ask(&url, &[("verb", "Bogus")]);
    assert!(bad.request.args.is_empty());
    assert_eq!(bad.request.base_url, url);
    let good = ask(&url, &[("verb", "ListMetadataFormats")]);
    assert_eq!(good.request.arg("verb"), Some("ListMetadataFormats"));
}

#[test]
fn identify_describes_the_repository() {
    let src = tempfile::tempdir().unwrap();
    seed_store(src.path(), 4, 13);
    let (_server, url) = start(src.path(), 10, Granularity::Day);
    let info = metabridge_oai::OaiClient::new().identify(&url).unwrap();
    assert_eq!(info.granularity, Granularity::Day);
    assert_eq!(info.base_url, url);
    assert_eq!(info.earliest_datestamp.format(), "2024-03-01");
}

#[test]
fn token_goes_stale_when_the_store_changes() {
    let src = tempfile::tempdir().unwrap();
    let (records, clock) = seed_store(src.path(), 25, 14);
    let (_server, url) = start(src.path(), 10, Granularity::Second);
    let first = ask(&url, &[("verb", "ListIdentifiers"), ("metadataPrefix", "oai_dc")]);
    let Ok(OaiPayload::ListIdentifiers { token: Some(token), .. }) = first.body else {
        panic!("expected a first page with a token")
    };
    assert_eq!((token.cursor, token.complete_list_size), (Some(0), Some(25)));

    // Still valid while nothing changes, and reusable.
    for _ in 0..2 {
        let page = ask(&url, &[("verb", "ListIdentifiers"), ("resumptionToken", &token.token)]);
        assert!(page.body.is_ok());
    }
    assert_eq!(
        code(&url, &[("verb", "ListRecords"), ("resumptionToken", &token.token)]),
        OaiErrorCode::BadResumptionToken
    );

    clock.advance(3600);
    Store::open_with_clock(src.path(), clock).unwrap().mark_deleted(&records[0].identifier).unwrap();
    assert_eq!(
        code(&url, &[("verb", "ListIdentifiers"), ("resumptionToken", &token.token)]),
        OaiErrorCode::BadResumptionToken
    );
}

#[test]
fn last_page_carries_an_empty_token() {
    let src = tempfile::tempdir().unwrap();
    seed_store(src.path(), 12, 15);
    let (_server, url) = start(src.path(), 5, Granularity::Second);
    let mut args = vec![("verb".to_string(), "ListIdentifiers".to_string()), ("metadataPrefix".into(), "oai_dc".into())];
    let mut cursors = Vec::new();
    let mut seen = 0;
    loop {
        let pairs: Vec<(&str, &str)> = args.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let Ok(OaiPayload::ListIdentifiers { headers, token }) = ask(&url, &pairs).body else { panic!() };
        seen += headers.len();
        let token = token.expect("multi-page lists always carry a token");
        cursors.push(token.cursor);
        if token.is_final() {
            break;
        }
        args = vec![("verb".into(), "ListIdentifiers".into()), ("resumptionToken".into(), token.token)];
    }
    assert_eq!(seen, 12);
    assert_eq!(cursors, vec![Some(0), Some(5), Some(10)]);

    let single = ask(&url, &[("verb", "ListIdentifiers"), ("metadataPrefix", "oai_dc"), ("from", "2024-03-01T08:10:00Z")]);
    let Ok(OaiPayload::ListIdentifiers { headers, token }) = single.body else { panic!() };
    assert_eq!((headers.len(), token), (2, None));
}

#[test]
fn deleted_records_have_headers_only() {
    let src = tempfile::tempdir().unwrap();
    let (records, clock) = seed_store(src.path(), 3, 16);
    Store::open_with_clock(src.path(), clock).unwrap().mark_deleted(&records[1].identifier).unwrap();
    let (_server, url) = start(src.path(), 10, Granularity::Second);
    let resp = ask(&url, &[("verb", "GetRecord"), ("metadataPrefix", "ojs_native"), ("identifier", &records[1].identifier)]);
    let Ok(OaiPayload::GetRecord(rec)) = resp.body else { panic!() };
    assert!(rec.header.deleted);
    assert!(rec.metadata.is_none());

    let resp = ask(&url, &[("verb", "GetRecord"), ("metadataPrefix", "ojs_native"), ("identifier", &records[0].identifier)]);
    let Ok(OaiPayload::GetRecord(rec)) = resp.body else { panic!() };
    assert_eq!(rec.metadata, Some(Metadata::OjsNative(records[0].clone())));
}

#[test]
fn post_requests_and_other_paths() {
    let src = tempfile::tempdir().unwrap();
    seed_store(src.path(), 1, 17);
    let (_server, url) = start(src.path(), 10, Granularity::Second);
    let resp = reqwest::blocking::Client::new()
        .post(&url)
        .header("Content-Type", "application/x-www-form-urlencoded")
        .body("verb=Identify")
        .send()
        .unwrap();
    let parsed = parse_oai_response(&resp.bytes().unwrap()).unwrap();
    assert_eq!(parsed.body.unwrap().verb(), OaiVerb::Identify);
    let other = url.replace("/oai", "/elsewhere");
    assert_eq!(get(&other, &[]).0, 404);
}
