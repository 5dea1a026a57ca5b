//! Seeded random records for round-trip and property tests, plus the
//! projections that describe what each lossy format can carry.

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{
    initials_of, split_initials, ArtType, ArticleRecord, Author, GalleyFile, LangCode, LocalizedText, Reference,
};

const RU_WORDS: &[&str] = &[
    "информация", "система", "архив", "журнал", "статья", "наука", "метаданные", "сбор", "протокол",
    "конференция", "сборник", "индекс", "ёлка", "Щука", "данные", "обмен",
];
const EN_WORDS: &[&str] = &[
    "information", "system", "archive", "journal", "article", "science", "metadata", "harvest",
    "protocol", "R&D", "a<b", "x>y", "\"quoted\"", "it's", "proceedings", "index",
];
const RU_GIVEN: &[&str] = &["Ирина", "Дмитрий", "Анна", "Юрий", "Ёжик", "Эльвира"];
const EN_GIVEN: &[&str] = &["Irina", "Dmitry", "Anna", "Yuri", "O'Neil", "Zoe"];
const SURNAMES: &[&str] = &["Мборо", "Прокудин", "Иванова", "Smith", "Ng", "Попов-Сидоров"];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn words(rng: &mut impl Rng, lang: LangCode, n: std::ops::RangeInclusive<usize>) -> String {
    let pool = match lang {
        LangCode::Rus => RU_WORDS,
        LangCode::Eng => EN_WORDS,
    };
    let count = rng.gen_range(n);
    (0..count).map(|_| *pool.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn localized(rng: &mut impl Rng, n: std::ops::RangeInclusive<usize>, require: bool) -> LocalizedText {
    let mut t = LocalizedText::new();
    let mask = if require { rng.gen_range(1..4) } else { rng.gen_range(0..4) };
    for (bit, lang) in LangCode::ALL.into_iter().enumerate() {
        if mask & (1 << bit) != 0 {
            t.insert(lang, words(rng, lang, n.clone()));
        }
    }
    t
}

fn multiline(rng: &mut impl Rng, lang: LangCode) -> String {
    let lines = rng.gen_range(1..=3);
    (0..lines).map(|_| words(rng, lang, 2..=8)).collect::<Vec<_>>().join("\n")
}

fn author(rng: &mut impl Rng, index: usize) -> Author {
    let cyrillic = rng.gen_bool(0.6);
    let given = if cyrillic { RU_GIVEN } else { EN_GIVEN };
    let mut a = Author::new(*given.choose(rng).unwrap(), *SURNAMES.choose(rng).unwrap());
    if rng.gen_bool(0.5) {
        a.middlename = Some(given.choose(rng).unwrap().to_string());
    }
    if rng.gen_bool(0.5) {
        a.country = Some(["RU", "US", "KZ"].choose(rng).unwrap().to_string());
    }
    if rng.gen_bool(0.6) {
        a.email = Some(format!("author{index}@example.org"));
    }
    if rng.gen_bool(0.4) {
        let bio = localized(rng, 3..=10, false);
        a.biography = (!bio.is_empty()).then_some(bio);
    }
    if rng.gen_bool(0.6) {
        a.affiliation = Some(words(rng, LangCode::Rus, 2..=4));
    }
    a.initials_only = rng.gen_bool(0.1);
    a
}

/// A valid, non-deleted record. Identifiers are unique per `index`.
pub fn random_record(rng: &mut impl Rng, index: usize) -> ArticleRecord {
    let mut r = ArticleRecord::new(format!("oai:example.org:article/{index}"));
    r.titles = localized(rng, 1..=8, true);
    for lang in LangCode::ALL {
        if rng.gen_bool(0.7) {
            r.abstracts.insert(lang, multiline(rng, lang));
        }
        if rng.gen_bool(0.6) {
            let n = rng.gen_range(1..=4);
            let kws: Vec<String> = (0..n).map(|_| words(rng, lang, 1..=3)).collect();
            r.subjects.insert(lang, kws);
        }
    }
    let n_authors = rng.gen_range(0..=4);
    r.authors = (0..n_authors).map(|i| author(rng, i)).collect();
    if n_authors > 0 && rng.gen_bool(0.8) {
        let p = rng.gen_range(0..n_authors);
        r.authors[p].primary_contact = true;
    }
    if rng.gen_bool(0.8) {
        let start: u32 = rng.gen_range(1..500);
        r.pages = Some(if rng.gen_bool(0.8) {
            format!("{start}-{}", start + rng.gen_range(0..30))
        } else {
            start.to_string()
        });
    }
    r.art_type = match rng.gen_range(0..3) {
        0 => None,
        1 => Some(ArtType::Prc),
        _ => Some(ArtType::Other("RAR".into())),
    };
    let n_refs = rng.gen_range(0..=4);
    r.references = (0..n_refs)
        .filter_map(|_| Reference::new(&format!("{}. {}", words(rng, LangCode::Rus, 2..=5), rng.gen_range(1990..2030))))
        .collect();
    let n_galleys = rng.gen_range(0..=2);
    for g in 0..n_galleys {
        let (name, mime) = [("article.pdf", "application/pdf"), ("article.html", "text/html")][g];
        let len = rng.gen_range(0..64);
        let payload: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        r.galleys.push(GalleyFile::new(if g == 0 { "PDF" } else { "HTML" }, name, mime, payload).unwrap());
    }
    if rng.gen_bool(0.7) {
        let days = rng.gen_range(0..20_000);
        r.date_published = Some(NaiveDate::from_ymd_opt(1980, 1, 1).unwrap() + chrono::Duration::days(days));
    }
    r
}

/// What survives an Articulatus emit/parse cycle.
pub fn articulatus_projection(r: &ArticleRecord) -> ArticleRecord {
    let mut p = ArticleRecord {
        identifier: ArticleRecord::derived_identifier(&r.titles),
        titles: r.titles.clone(),
        abstracts: r.abstracts.clone(),
        pages: r.pages.clone(),
        art_type: Some(r.art_type.clone().unwrap_or(ArtType::Prc)),
        references: r.references.clone(),
        ..Default::default()
    };
    p.authors = r
        .authors
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let (firstname, middlename) = split_initials(&initials_of(a));
            Author {
                firstname,
                middlename,
                lastname: a.lastname.clone(),
                affiliation: a.affiliation.clone(),
                primary_contact: i == 0,
                initials_only: true,
                ..Default::default()
            }
        })
        .collect();
    p
}

/// What survives a template render/parse cycle: everything but galley bytes.
pub fn template_projection(r: &ArticleRecord) -> ArticleRecord {
    let mut p = r.clone();
    for g in &mut p.galleys {
        g.payload.clear();
    }
    p
}

/// What survives the interchange OJS profile.
pub fn interchange_projection(r: &ArticleRecord) -> ArticleRecord {
    let mut p = r.clone();
    p.identifier = ArticleRecord::derived_identifier(&r.titles);
    p.date_published = None;
    p.art_type = None;
    p.references.clear();
    for a in &mut p.authors {
        a.affiliation = None;
        a.initials_only = false;
    }
    p
}
