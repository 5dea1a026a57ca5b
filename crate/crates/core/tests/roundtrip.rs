use metabridge_core::articulatus::{emit_articulatus, parse_articulatus, ArticulatusOptions};
use metabridge_core::crosswalk::{crosswalk_neb_to_ojs, crosswalk_ojs_to_neb, Crosswalk};
use metabridge_core::ojs::{emit_ojs, emit_ojs_with, parse_ojs, OjsDocument, OjsEmitOptions};
use metabridge_core::template::{parse_template, render_template};
use metabridge_core::testkit::{
    articulatus_projection, interchange_projection, random_record, rng, template_projection,
};
use metabridge_core::{validate_for_indexing, ArtType, LangCode};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ojs_archival_round_trip(seed in any::<u64>()) {
        let r = random_record(&mut rng(seed), 0);
        let xml = emit_ojs_with(&OjsDocument::single(r.clone()), OjsEmitOptions::archival()).unwrap();
        prop_assert_eq!(parse_ojs(&xml).unwrap().records, vec![r]);
    }

    #[test]
    fn ojs_interchange_round_trip(seed in any::<u64>()) {
        let r = random_record(&mut rng(seed), 0);
        let xml = emit_ojs(&OjsDocument::single(r.clone())).unwrap();
        prop_assert_eq!(parse_ojs(&xml).unwrap().records, vec![interchange_projection(&r)]);
    }

    #[test]
    fn articulatus_round_trip(seed in any::<u64>()) {
        let r = random_record(&mut rng(seed), 0);
        let out = emit_articulatus(std::slice::from_ref(&r), &ArticulatusOptions::default()).unwrap();
        prop_assert_eq!(parse_articulatus(&out.xml).unwrap(), vec![articulatus_projection(&r)]);
    }

    #[test]
    fn template_round_trip(seed in any::<u64>()) {
        let r = random_record(&mut rng(seed), 0);
        prop_assert_eq!(parse_template(&render_template(&r)).unwrap(), template_projection(&r));
    }

    /// For Russian-language records the rule engine and the direct emitter
    /// must produce identical bytes.
    #[test]
    fn crosswalk_agrees_with_direct_emission(seed in any::<u64>()) {
        let mut r = random_record(&mut rng(seed), 0);
        r.titles.insert(LangCode::Rus, "Заголовок");
        if matches!(r.art_type, Some(ArtType::Other(_))) {
            r.art_type = None;
        }
        let ojs = emit_ojs_with(&OjsDocument::single(r.clone()), OjsEmitOptions::archival()).unwrap();
        let walked = crosswalk_ojs_to_neb(&ojs, &Crosswalk::ojs_to_neb()).unwrap();
        let direct = emit_articulatus(&[r], &ArticulatusOptions::default()).unwrap();
        prop_assert_eq!(String::from_utf8(walked.xml).unwrap(), String::from_utf8(direct.xml).unwrap());
    }

    /// Articulatus -> OJS -> Articulatus keeps every field Articulatus has,
    /// except references, which OJS interchange cannot hold.
    #[test]
    fn crosswalk_there_and_back(seed in any::<u64>()) {
        let r = random_record(&mut rng(seed), 0);
        let neb = emit_articulatus(std::slice::from_ref(&r), &ArticulatusOptions::default()).unwrap().xml;
        let ojs = crosswalk_neb_to_ojs(&neb, &Crosswalk::neb_to_ojs()).unwrap();
        let back = crosswalk_ojs_to_neb(&ojs.xml, &Crosswalk::ojs_to_neb()).unwrap();
        let mut want = articulatus_projection(&r);
        want.references.clear();
        want.art_type = Some(ArtType::Prc);
        let mut got = parse_articulatus(&back.xml).unwrap();
        prop_assert_eq!(got.len(), 1);
        let got = got.remove(0);
        prop_assert_eq!(got.titles, want.titles);
        prop_assert_eq!(got.abstracts, want.abstracts);
        prop_assert_eq!(got.pages, want.pages);
        prop_assert_eq!(got.authors.len(), want.authors.len());
        for (g, w) in got.authors.iter().zip(&want.authors) {
            prop_assert_eq!(&g.lastname, &w.lastname);
            prop_assert_eq!(&g.firstname, &w.firstname);
            prop_assert_eq!(&g.middlename, &w.middlename);
            prop_assert_eq!(&g.affiliation, &w.affiliation);
        }
    }

    /// Removing the data behind one error rule triggers exactly that rule.
    #[test]
    fn single_field_deletion_triggers_single_error(seed in any::<u64>(), which in 0usize..4) {
        let mut r = random_record(&mut rng(seed), 0);
        r.pages.get_or_insert_with(|| "1-2".into());
        if r.authors.is_empty() {
            r.authors.push(metabridge_core::Author::new("Анна", "Иванова"));
        }
        if r.galleys.is_empty() {
            r.references.push(metabridge_core::Reference::new("Ссылка").unwrap());
        }
        prop_assert!(validate_for_indexing(&r).error_codes().is_empty());
        let code = match which {
            0 => { r.titles = Default::default(); "no-title" }
            1 => { r.authors.clear(); "no-author" }
            2 => { r.pages = None; r.date_published = None; "no-pages-or-date" }
            _ => { r.galleys.clear(); r.references.clear(); "no-fulltext" }
        };
        prop_assert_eq!(validate_for_indexing(&r).error_codes(), vec![code]);
    }
}

#[test]
fn multi_record_documents_round_trip() {
    let mut g = rng(11);
    let records: Vec<_> = (0..5).map(|i| random_record(&mut g, i)).collect();
    let xml = emit_ojs_with(&OjsDocument::articles(records.clone()), OjsEmitOptions::archival()).unwrap();
    assert_eq!(parse_ojs(&xml).unwrap().records, records);
    let neb = emit_articulatus(&records, &ArticulatusOptions::default()).unwrap();
    let expected: Vec<_> = records.iter().map(articulatus_projection).collect();
    assert_eq!(parse_articulatus(&neb.xml).unwrap(), expected);
}
