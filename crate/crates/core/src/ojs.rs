//! OJS native import/export XML (`native.dtd` family).
//!
//! The parser accepts the four document roots (`article`, `articles`, `issue`,
//! `issues`) and keeps any article child it does not understand as raw markup
//! so it can be written back unchanged. The emitter writes a fixed element
//! order and base64-embeds galley payloads.
//!
//! Two emission profiles exist. [`OjsProfile::Interchange`] writes only the
//! elements found in real OJS exports. [`OjsProfile::Archival`] additionally
//! carries the record identifier, publication date, affiliation, article type
//! and references so that a record survives a full round trip; the store and
//! the `ojs_native` OAI format use it.

use std::collections::BTreeMap;

use base64::Engine;
use chrono::NaiveDate;
use thiserror::Error;

use crate::model::{
    locale_map, locale_unmap, split_keywords, ArticleRecord, Author, GalleyFile, LangCode,
    LocalizedText, ModelError, Reference,
};
use crate::xml::{self, Element, Node, XmlSyntaxError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OjsError {
    #[error(transparent)]
    XmlSyntax(#[from] XmlSyntaxError),
    #[error("unsupported root element <{0}>")]
    UnsupportedRoot(String),
    #[error("galley `{filename}` does not hold valid base64")]
    BadBase64 { filename: String },
    #[error("<{element}> at byte {position} has no locale attribute")]
    MissingLocaleAttribute { element: String, position: usize },
    #[error("<{element}> at byte {position}: unsupported locale `{locale}`")]
    UnsupportedLocale {
        element: String,
        locale: String,
        position: usize,
    },
    #[error("bad date_published `{0}`")]
    BadDate(String),
    #[error("<galley> at byte {0} has no file")]
    MissingGalleyFile(usize),
    #[error("article root needs exactly one record, got {0}")]
    ArticleRootCount(usize),
    #[error("invalid record: {0}")]
    InvalidRecord(#[from] ModelError),
    #[error("record `{0}` is deleted and cannot be emitted")]
    DeletedRecord(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RootKind {
    Article,
    Articles,
    Issue,
    Issues,
}

impl RootKind {
    pub fn element_name(self) -> &'static str {
        match self {
            RootKind::Article => "article",
            RootKind::Articles => "articles",
            RootKind::Issue => "issue",
            RootKind::Issues => "issues",
        }
    }

    pub fn from_element_name(name: &str) -> Option<RootKind> {
        Some(match name {
            "article" => RootKind::Article,
            "articles" => RootKind::Articles,
            "issue" => RootKind::Issue,
            "issues" => RootKind::Issues,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IssueMetadata {
    pub title: LocalizedText,
    pub volume: Option<String>,
    pub number: Option<String>,
    pub year: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OjsDocument {
    pub root_kind: RootKind,
    pub records: Vec<ArticleRecord>,
    /// Required for `issue`/`issues` roots. A multi-issue input keeps the
    /// metadata of its first issue.
    pub issue_metadata: Option<IssueMetadata>,
    /// Unrecognized `<article>` children as raw markup, by record index.
    pub extras: BTreeMap<usize, Vec<String>>,
}

impl OjsDocument {
    pub fn single(record: ArticleRecord) -> Self {
        OjsDocument {
            root_kind: RootKind::Article,
            records: vec![record],
            issue_metadata: None,
            extras: BTreeMap::new(),
        }
    }

    pub fn articles(records: Vec<ArticleRecord>) -> Self {
        OjsDocument {
            root_kind: RootKind::Articles,
            records,
            issue_metadata: None,
            extras: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OjsProfile {
    #[default]
    Interchange,
    Archival,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GalleyPayloads {
    /// `<embed encoding="base64">` with the file contents.
    #[default]
    Embed,
    /// `<href src="filename">`; the payload lives elsewhere.
    Href,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OjsEmitOptions {
    pub profile: OjsProfile,
    pub galleys: GalleyPayloads,
}

impl OjsEmitOptions {
    pub fn archival() -> Self {
        OjsEmitOptions {
            profile: OjsProfile::Archival,
            galleys: GalleyPayloads::Embed,
        }
    }
}

pub fn parse_ojs(input: &[u8]) -> Result<OjsDocument, OjsError> {
    let root = xml::parse(input)?;
    let root_kind = RootKind::from_element_name(&root.name)
        .ok_or_else(|| OjsError::UnsupportedRoot(root.name.clone()))?;
    let mut articles: Vec<&Element> = Vec::new();
    let mut issue_metadata = None;
    match root_kind {
        RootKind::Article => articles.push(&root),
        RootKind::Articles => articles.extend(root.children_named("article")),
        RootKind::Issue => {
            issue_metadata = Some(parse_issue(&root, &mut articles)?);
        }
        RootKind::Issues => {
            for issue in root.children_named("issue") {
                let meta = parse_issue(issue, &mut articles)?;
                issue_metadata.get_or_insert(meta);
            }
            issue_metadata.get_or_insert_with(IssueMetadata::default);
        }
    }
    let mut records = Vec::with_capacity(articles.len());
    let mut extras = BTreeMap::new();
    for (i, article) in articles.into_iter().enumerate() {
        let (record, raw) = record_from_element(article, Some(input))?;
        if !raw.is_empty() {
            extras.insert(i, raw);
        }
        records.push(record);
    }
    Ok(OjsDocument {
        root_kind,
        records,
        issue_metadata,
        extras,
    })
}

fn parse_issue<'a>(
    issue: &'a Element,
    articles: &mut Vec<&'a Element>,
) -> Result<IssueMetadata, OjsError> {
    let mut meta = IssueMetadata::default();
    for child in issue.elements() {
        match child.name.as_str() {
            "title" => {
                let lang = locale_of(child)?;
                meta.title.insert(lang, child.text());
            }
            "volume" => meta.volume = Some(child.text()),
            "number" => meta.number = Some(child.text()),
            "year" => meta.year = Some(child.text()),
            "article" => articles.push(child),
            "section" => articles.extend(child.children_named("article")),
            _ => {}
        }
    }
    Ok(meta)
}

fn locale_of(el: &Element) -> Result<LangCode, OjsError> {
    let locale = el
        .attr("locale")
        .ok_or_else(|| OjsError::MissingLocaleAttribute {
            element: el.name.clone(),
            position: el.span.start,
        })?;
    locale_unmap(locale).map_err(|_| OjsError::UnsupportedLocale {
        element: el.name.clone(),
        locale: locale.to_string(),
        position: el.span.start,
    })
}

/// Reads one `<article>` element. `source` is the document the element was
/// parsed from; when given, unknown children are returned as raw markup.
pub fn record_from_element(
    article: &Element,
    source: Option<&[u8]>,
) -> Result<(ArticleRecord, Vec<String>), OjsError> {
    let mut record = ArticleRecord::default();
    let mut identifier = None;
    let mut extras = Vec::new();
    for child in article.elements() {
        match child.name.as_str() {
            "id" => identifier = Some(child.text()),
            "title" => {
                let lang = locale_of(child)?;
                record.titles.insert(lang, child.text());
            }
            "abstract" => {
                let lang = locale_of(child)?;
                record.abstracts.insert(lang, child.text());
            }
            "indexing" => {
                for subject in child.children_named("subject") {
                    let lang = locale_of(subject)?;
                    let words = split_keywords(&subject.text());
                    if !words.is_empty() {
                        record.subjects.entry(lang).or_default().extend(words);
                    }
                }
            }
            "author" => record.authors.push(parse_author(child)?),
            "pages" => record.pages = Some(child.text()),
            "date_published" => {
                let text = child.text();
                let date = NaiveDate::parse_from_str(text.trim(), "%Y-%m-%d")
                    .map_err(|_| OjsError::BadDate(text.clone()))?;
                record.date_published = Some(date);
            }
            "galley" => record.galleys.push(parse_galley(child)?),
            "art_type" => record.art_type = Some(child.text().parse().unwrap()),
            "references" => {
                record.references.extend(
                    child
                        .children_named("reference")
                        .filter_map(|r| Reference::new(&r.text())),
                );
            }
            _ => {
                if let Some(src) = source {
                    if let Some(raw) = src.get(child.span.clone()) {
                        extras.push(String::from_utf8_lossy(raw).into_owned());
                    }
                }
            }
        }
    }
    // Only the first primary contact is honored.
    let mut seen_primary = false;
    for author in &mut record.authors {
        if author.primary_contact {
            author.primary_contact = !seen_primary;
            seen_primary = true;
        }
    }
    record.identifier = match identifier {
        Some(id) if !id.is_empty() => id,
        _ => ArticleRecord::derived_identifier(&record.titles),
    };
    Ok((record, extras))
}

fn parse_author(el: &Element) -> Result<Author, OjsError> {
    let mut author = Author {
        primary_contact: el.attr("primary_contact") == Some("true"),
        initials_only: el.attr("initials_only") == Some("true"),
        ..Default::default()
    };
    for child in el.elements() {
        match child.name.as_str() {
            "firstname" => author.firstname = child.text(),
            "middlename" => author.middlename = Some(child.text()),
            "lastname" => author.lastname = child.text(),
            "affiliation" => author.affiliation = Some(child.text()),
            "country" => author.country = Some(child.text()),
            "email" => author.email = Some(child.text()),
            "biography" => {
                let lang = locale_of(child)?;
                author
                    .biography
                    .get_or_insert_with(LocalizedText::new)
                    .insert(lang, child.text());
            }
            _ => {}
        }
    }
    if author.biography.as_ref().is_some_and(LocalizedText::is_empty) {
        author.biography = None;
    }
    Ok(author)
}

fn parse_galley(el: &Element) -> Result<GalleyFile, OjsError> {
    let label = el.child_text("label").unwrap_or_default();
    let file = el
        .child("file")
        .ok_or(OjsError::MissingGalleyFile(el.span.start))?;
    if let Some(embed) = file.child("embed") {
        let filename = embed.attr("filename").unwrap_or_default().to_string();
        let mime_type = embed.attr("mime_type").unwrap_or_default().to_string();
        let mut encoded = embed.text();
        encoded.retain(|c| !c.is_ascii_whitespace());
        let payload = base64::engine::general_purpose::STANDARD
            .decode(encoded.as_bytes())
            .map_err(|_| OjsError::BadBase64 {
                filename: filename.clone(),
            })?;
        return Ok(GalleyFile::new(label, filename, mime_type, payload)?);
    }
    if let Some(href) = file.child("href") {
        let filename = href.attr("src").unwrap_or_default();
        let filename = filename.rsplit(['/', '\\']).next().unwrap_or_default();
        let mime_type = href.attr("mime_type").unwrap_or_default().to_string();
        return Ok(GalleyFile::new(label, filename, mime_type, Vec::new())?);
    }
    Err(OjsError::MissingGalleyFile(el.span.start))
}

pub fn emit_ojs(doc: &OjsDocument) -> Result<Vec<u8>, OjsError> {
    emit_ojs_with(doc, OjsEmitOptions::default())
}

pub fn emit_ojs_with(doc: &OjsDocument, options: OjsEmitOptions) -> Result<Vec<u8>, OjsError> {
    for record in &doc.records {
        if record.deleted {
            return Err(OjsError::DeletedRecord(record.identifier.clone()));
        }
        record.check()?;
    }
    let article = |i: usize, r: &ArticleRecord| {
        let mut el = article_element(r, options);
        if let Some(raw) = doc.extras.get(&i) {
            el.children.extend(raw.iter().cloned().map(Node::Raw));
        }
        el
    };
    let root = match doc.root_kind {
        RootKind::Article => {
            if doc.records.len() != 1 {
                return Err(OjsError::ArticleRootCount(doc.records.len()));
            }
            article(0, &doc.records[0])
        }
        RootKind::Articles => {
            let mut root = Element::new("articles");
            for (i, r) in doc.records.iter().enumerate() {
                root.push(article(i, r));
            }
            root
        }
        RootKind::Issue | RootKind::Issues => {
            let meta = doc
                .issue_metadata
                .as_ref()
                .ok_or_else(|| OjsError::UnsupportedRoot(doc.root_kind.element_name().into()))?;
            let mut issue = Element::new("issue");
            for (lang, text) in meta.title.iter() {
                issue.push(Element::new("title").with_attr("locale", locale_map(lang)).with_text(text));
            }
            for (name, value) in [("volume", &meta.volume), ("number", &meta.number), ("year", &meta.year)] {
                if let Some(v) = value {
                    issue.push(Element::new(name).with_text(v.as_str()));
                }
            }
            let mut section = Element::new("section");
            for (i, r) in doc.records.iter().enumerate() {
                section.push(article(i, r));
            }
            issue.push(section);
            if doc.root_kind == RootKind::Issues {
                Element::new("issues").with_child(issue)
            } else {
                issue
            }
        }
    };
    Ok(xml::to_document(&root))
}

/// Builds the `<article>` element for one record.
pub fn article_element(record: &ArticleRecord, options: OjsEmitOptions) -> Element {
    let archival = options.profile == OjsProfile::Archival;
    let mut el = Element::new("article");
    if archival {
        el.push(Element::new("id").with_text(record.identifier.as_str()));
    }
    for (lang, text) in record.titles.iter() {
        el.push(Element::new("title").with_attr("locale", locale_map(lang)).with_text(text));
    }
    for (lang, text) in record.abstracts.iter() {
        el.push(Element::new("abstract").with_attr("locale", locale_map(lang)).with_text(text));
    }
    if record.keyword_count() > 0 {
        let mut indexing = Element::new("indexing");
        for (lang, words) in &record.subjects {
            if !words.is_empty() {
                indexing.push(
                    Element::new("subject")
                        .with_attr("locale", locale_map(*lang))
                        .with_text(words.join("; ")),
                );
            }
        }
        el.push(indexing);
    }
    for author in &record.authors {
        el.push(author_element(author, archival));
    }
    if let Some(pages) = &record.pages {
        el.push(Element::new("pages").with_text(pages.as_str()));
    }
    if archival {
        if let Some(date) = record.date_published {
            el.push(Element::new("date_published").with_text(date.format("%Y-%m-%d").to_string()));
        }
    }
    let galley_locale = locale_map(record.primary_language());
    for galley in &record.galleys {
        let file = match options.galleys {
            GalleyPayloads::Embed => Element::new("embed")
                .with_attr("filename", galley.filename.as_str())
                .with_attr("encoding", "base64")
                .with_attr("mime_type", galley.mime_type.as_str())
                .with_text(base64::engine::general_purpose::STANDARD.encode(&galley.payload)),
            GalleyPayloads::Href => Element::new("href")
                .with_attr("src", galley.filename.as_str())
                .with_attr("mime_type", galley.mime_type.as_str()),
        };
        el.push(
            Element::new("galley")
                .with_attr("locale", galley_locale)
                .with_child(Element::new("label").with_text(galley.label.as_str()))
                .with_child(Element::new("file").with_child(file)),
        );
    }
    if archival {
        if let Some(art_type) = &record.art_type {
            el.push(Element::new("art_type").with_text(art_type.code()));
        }
        if !record.references.is_empty() {
            let mut refs = Element::new("references");
            for r in &record.references {
                refs.push(Element::new("reference").with_text(r.text()));
            }
            el.push(refs);
        }
    }
    el
}

fn author_element(author: &Author, archival: bool) -> Element {
    let mut el = Element::new("author");
    if author.primary_contact {
        el.set_attr("primary_contact", "true");
    }
    if archival && author.initials_only {
        el.set_attr("initials_only", "true");
    }
    el.push(Element::new("firstname").with_text(author.firstname.as_str()));
    if let Some(m) = &author.middlename {
        el.push(Element::new("middlename").with_text(m.as_str()));
    }
    el.push(Element::new("lastname").with_text(author.lastname.as_str()));
    if archival {
        if let Some(a) = &author.affiliation {
            el.push(Element::new("affiliation").with_text(a.as_str()));
        }
    }
    if let Some(c) = &author.country {
        el.push(Element::new("country").with_text(c.as_str()));
    }
    if let Some(e) = &author.email {
        el.push(Element::new("email").with_text(e.as_str()));
    }
    if let Some(bio) = &author.biography {
        for (lang, text) in bio.iter() {
            el.push(Element::new("biography").with_attr("locale", locale_map(lang)).with_text(text));
        }
    }
    el
}

/// Fields of `record` that the interchange profile does not carry.
pub fn interchange_losses(record: &ArticleRecord) -> Vec<String> {
    let mut out = Vec::new();
    if !record.references.is_empty() {
        out.push(format!("references: {} dropped", record.references.len()));
    }
    if record.date_published.is_some() {
        out.push("date_published: 1 dropped".to_string());
    }
    let affiliations = record.authors.iter().filter(|a| a.affiliation.is_some()).count();
    if affiliations > 0 {
        out.push(format!("affiliation: {affiliations} dropped"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_collection() {
        let doc = parse_ojs(b"<articles></articles>").unwrap();
        assert_eq!(doc.root_kind, RootKind::Articles);
        assert!(doc.records.is_empty());
    }

    #[test]
    fn rejects_other_roots() {
        assert_eq!(
            parse_ojs(b"<journal/>").unwrap_err(),
            OjsError::UnsupportedRoot("journal".into())
        );
    }

    #[test]
    fn all_four_roots_parse() {
        let article = r#"<article><title locale="ru_RU">Т</title></article>"#;
        for doc in [
            article.to_string(),
            format!("<articles>{article}{article}</articles>"),
            format!("<issue><volume>1</volume><section>{article}</section></issue>"),
            format!("<issues><issue><year>2013</year>{article}</issue><issue>{article}</issue></issues>"),
        ] {
            let parsed = parse_ojs(doc.as_bytes()).unwrap();
            assert!(!parsed.records.is_empty(), "{doc}");
        }
    }

    #[test]
    fn missing_locale_is_reported() {
        let err = parse_ojs(b"<article><title>x</title></article>").unwrap_err();
        assert!(matches!(err, OjsError::MissingLocaleAttribute { ref element, .. } if element == "title"));
    }

    #[test]
    fn bad_base64_names_the_file() {
        let doc = r#"<article><title locale="ru_RU">Т</title><galley><label>PDF</label><file>
            <embed filename="a.pdf" encoding="base64" mime_type="application/pdf">{Код}</embed></file></galley></article>"#;
        assert_eq!(
            parse_ojs(doc.as_bytes()).unwrap_err(),
            OjsError::BadBase64 { filename: "a.pdf".into() }
        );
    }

    #[test]
    fn subjects_accept_delimited_and_repeated_forms() {
        let doc = r#"<article><title locale="ru_RU">Т</title><indexing>
            <subject locale="ru_RU"> a; b ;</subject><subject locale="ru_RU">c</subject>
            <subject locale="en_US">d</subject></indexing></article>"#;
        let r = &parse_ojs(doc.as_bytes()).unwrap().records[0];
        assert_eq!(r.subjects[&LangCode::Rus], vec!["a", "b", "c"]);
        assert_eq!(r.subjects[&LangCode::Eng], vec!["d"]);
        let out = String::from_utf8(emit_ojs(&OjsDocument::single(r.clone())).unwrap()).unwrap();
        assert!(out.contains(r#"<subject locale="ru_RU">a; b; c</subject>"#));
    }

    #[test]
    fn unknown_elements_survive_reemission() {
        let doc = r#"<article><title locale="ru_RU">Т</title><sponsor locale="ru_RU">Фонд <b>X</b></sponsor></article>"#;
        let parsed = parse_ojs(doc.as_bytes()).unwrap();
        assert_eq!(parsed.extras[&0], vec![r#"<sponsor locale="ru_RU">Фонд <b>X</b></sponsor>"#.to_string()]);
        let again = parse_ojs(&emit_ojs(&parsed).unwrap()).unwrap();
        assert_eq!(again, parsed);
    }

    #[test]
    fn zero_galleys_emit_no_galley_element() {
        let mut r = ArticleRecord::new("x");
        r.titles.insert(LangCode::Rus, "Т");
        let out = String::from_utf8(emit_ojs(&OjsDocument::single(r)).unwrap()).unwrap();
        assert!(!out.contains("<galley"));
        assert!(out.starts_with("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<article>"));
    }

    #[test]
    fn issue_roots_need_metadata() {
        let doc = OjsDocument {
            root_kind: RootKind::Issue,
            records: vec![],
            issue_metadata: None,
            extras: BTreeMap::new(),
        };
        assert!(matches!(emit_ojs(&doc), Err(OjsError::UnsupportedRoot(_))));
    }

    #[test]
    fn href_galleys_have_empty_payload() {
        let doc = r#"<article><title locale="ru_RU">Т</title><galley locale="ru_RU"><label>PDF</label>
            <file><href src="dir/a.pdf" mime_type="application/pdf"/></file></galley></article>"#;
        let g = &parse_ojs(doc.as_bytes()).unwrap().records[0].galleys[0];
        assert_eq!(g.filename, "a.pdf");
        assert!(g.payload.is_empty());
    }

    #[test]
    fn deleted_records_are_not_emitted() {
        let mut r = ArticleRecord::new("x");
        r.titles.insert(LangCode::Rus, "Т");
        r.deleted = true;
        assert!(matches!(emit_ojs(&OjsDocument::single(r)), Err(OjsError::DeletedRecord(_))));
    }
}
