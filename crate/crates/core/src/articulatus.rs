//! Codec for the Articulatus XML that НЭБ (elibrary.ru) ingests.
//!
//! Author names exist only as surname plus initials in this format, so parsing
//! yields initials-only given names (`initials_only` set). Keywords, galleys
//! and contact details have no place in the output and are not written.

use thiserror::Error;

use crate::model::{
    initials_of, split_initials, ArticleRecord, Author, LangCode, Reference,
};
use crate::xml::{self, Element, XmlSyntaxError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArticulatusError {
    #[error(transparent)]
    XmlSyntax(#[from] XmlSyntaxError),
    #[error("<{element}> at byte {position}: bad lang attribute {value:?}")]
    BadLangAttribute {
        element: String,
        value: Option<String>,
        position: usize,
    },
    #[error("record `{0}` has no title")]
    MissingTitle(String),
    #[error("record `{0}` is deleted and cannot be emitted")]
    DeletedRecord(String),
    #[error("unsupported root element <{0}>")]
    UnsupportedRoot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArticulatusOptions {
    /// Written when a record carries no article type.
    pub default_art_type: String,
    /// Write an empty `<text>`; НЭБ links to the full text instead of hosting it.
    pub emit_empty_text: bool,
}

impl Default for ArticulatusOptions {
    fn default() -> Self {
        ArticulatusOptions {
            default_art_type: "PRC".to_string(),
            emit_empty_text: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ArticulatusDocument {
    pub records: Vec<ArticleRecord>,
    pub options: ArticulatusOptions,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmitOutput {
    pub xml: Vec<u8>,
    pub warnings: Vec<String>,
}

/// One record becomes a bare `<article>` document; any other count is wrapped
/// in `<articles>`.
pub fn emit_articulatus(
    records: &[ArticleRecord],
    options: &ArticulatusOptions,
) -> Result<EmitOutput, ArticulatusError> {
    let mut warnings = Vec::new();
    let mut articles = Vec::with_capacity(records.len());
    for record in records {
        articles.push(article_element(record, options, &mut warnings)?);
    }
    let root = wrap_articles(articles);
    Ok(EmitOutput {
        xml: xml::to_document(&root),
        warnings,
    })
}

pub(crate) fn wrap_articles(mut articles: Vec<Element>) -> Element {
    if articles.len() == 1 {
        articles.pop().unwrap()
    } else {
        let mut root = Element::new("articles");
        for a in articles {
            root.push(a);
        }
        root
    }
}

pub fn article_element(
    record: &ArticleRecord,
    options: &ArticulatusOptions,
    warnings: &mut Vec<String>,
) -> Result<Element, ArticulatusError> {
    if record.deleted {
        return Err(ArticulatusError::DeletedRecord(record.identifier.clone()));
    }
    if record.titles.is_empty() {
        return Err(ArticulatusError::MissingTitle(record.identifier.clone()));
    }
    let lang = record.primary_language().neb_code();
    let mut el = Element::new("article");
    if let Some(pages) = &record.pages {
        el.push(Element::new("pages").with_text(pages.as_str()));
    }
    let art_type = record
        .art_type
        .as_ref()
        .map(|t| t.code().to_string())
        .unwrap_or_else(|| options.default_art_type.clone());
    el.push(Element::new("artType").with_text(art_type));
    if !record.authors.is_empty() {
        let mut authors = Element::new("authors");
        for (i, a) in record.authors.iter().enumerate() {
            let mut info = Element::new("individInfo")
                .with_attr("lang", lang)
                .with_child(Element::new("surname").with_text(a.lastname.as_str()))
                .with_child(Element::new("initials").with_text(initials_of(a)));
            match &a.affiliation {
                Some(org) => info.push(Element::new("orgName").with_text(org.as_str())),
                None => warnings.push(format!(
                    "record `{}`: author {} ({}) has no affiliation; orgName omitted",
                    record.identifier,
                    i + 1,
                    a.lastname
                )),
            }
            authors.push(
                Element::new("author")
                    .with_attr("num", author_num(i))
                    .with_child(info),
            );
        }
        el.push(authors);
    }
    let mut titles = Element::new("artTitles");
    for (l, t) in record.titles.iter() {
        titles.push(Element::new("artTitle").with_attr("lang", l.neb_code()).with_text(t));
    }
    el.push(titles);
    if !record.abstracts.is_empty() {
        let mut abstracts = Element::new("abstracts");
        for (l, t) in record.abstracts.iter() {
            abstracts.push(Element::new("abstract").with_attr("lang", l.neb_code()).with_text(t));
        }
        el.push(abstracts);
    }
    if options.emit_empty_text {
        el.push(Element::new("text").with_attr("lang", lang));
    }
    if !record.references.is_empty() {
        let mut refs = Element::new("references");
        for r in &record.references {
            refs.push(Element::new("reference").with_text(r.text()));
        }
        el.push(refs);
    }
    Ok(el)
}

/// Zero-padded three-digit author number, 1-based.
pub fn author_num(index: usize) -> String {
    format!("{:03}", index + 1)
}

pub fn parse_articulatus(input: &[u8]) -> Result<Vec<ArticleRecord>, ArticulatusError> {
    let root = xml::parse(input)?;
    match root.name.as_str() {
        "article" => Ok(vec![record_from_element(&root)?]),
        "articles" => root
            .children_named("article")
            .map(record_from_element)
            .collect(),
        other => Err(ArticulatusError::UnsupportedRoot(other.to_string())),
    }
}

fn lang_of(el: &Element) -> Result<LangCode, ArticulatusError> {
    let value = el.attr("lang");
    value
        .and_then(|v| LangCode::from_neb_code(v).ok())
        .ok_or_else(|| ArticulatusError::BadLangAttribute {
            element: el.name.clone(),
            value: value.map(str::to_string),
            position: el.span.start,
        })
}

pub fn record_from_element(article: &Element) -> Result<ArticleRecord, ArticulatusError> {
    let mut record = ArticleRecord::default();
    for child in article.elements() {
        match child.name.as_str() {
            "pages" => record.pages = Some(child.text()),
            "artType" => record.art_type = Some(child.text().parse().unwrap()),
            "authors" => {
                for author in child.children_named("author") {
                    record.authors.push(parse_author(author)?);
                }
            }
            "artTitles" => {
                for t in child.children_named("artTitle") {
                    record.titles.insert(lang_of(t)?, t.text());
                }
            }
            "abstracts" => {
                for a in child.children_named("abstract") {
                    record.abstracts.insert(lang_of(a)?, a.text());
                }
            }
            "references" => record.references.extend(
                child
                    .children_named("reference")
                    .filter_map(|r| Reference::new(&r.text())),
            ),
            "text" => {
                lang_of(child)?;
            }
            _ => {}
        }
    }
    if let Some(first) = record.authors.first_mut() {
        first.primary_contact = true;
    }
    record.identifier = ArticleRecord::derived_identifier(&record.titles);
    Ok(record)
}

fn parse_author(el: &Element) -> Result<Author, ArticulatusError> {
    let mut author = Author {
        initials_only: true,
        ..Default::default()
    };
    // Several individInfo blocks may exist (one per language); the first wins.
    let mut infos = el.children_named("individInfo");
    if let Some(info) = infos.next() {
        lang_of(info)?;
        author.lastname = info.child_text("surname").unwrap_or_default();
        let (first, middle) = split_initials(&info.child_text("initials").unwrap_or_default());
        author.firstname = first;
        author.middlename = middle;
        author.affiliation = info.child_text("orgName");
    }
    for info in infos {
        lang_of(info)?;
    }
    Ok(author)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LocalizedText;

    fn record(authors: usize) -> ArticleRecord {
        let mut r = ArticleRecord::new("x");
        r.titles = LocalizedText::new().with(LangCode::Rus, "Т");
        for i in 0..authors {
            r.authors.push(Author::new("Анна", format!("Фамилия{i}")));
        }
        r
    }

    #[test]
    fn author_numbers_are_padded() {
        let out = emit_articulatus(&[record(3)], &ArticulatusOptions::default()).unwrap();
        let text = String::from_utf8(out.xml).unwrap();
        for n in ["001", "002", "003"] {
            assert!(text.contains(&format!("<author num=\"{n}\">")), "{text}");
        }
        assert_eq!(out.warnings.len(), 3);
    }

    #[test]
    fn no_references_means_no_element() {
        let text = String::from_utf8(
            emit_articulatus(&[record(0)], &ArticulatusOptions::default()).unwrap().xml,
        )
        .unwrap();
        assert!(!text.contains("<references"));
        assert!(text.contains("<text lang=\"RUS\"></text>"));
        assert!(text.contains("<artType>PRC</artType>"));
    }

    #[test]
    fn empty_text_can_be_suppressed() {
        let options = ArticulatusOptions {
            emit_empty_text: false,
            ..Default::default()
        };
        let text = String::from_utf8(emit_articulatus(&[record(0)], &options).unwrap().xml).unwrap();
        assert!(!text.contains("<text"));
    }

    #[test]
    fn missing_title_is_an_error() {
        let r = ArticleRecord::new("x");
        assert_eq!(
            emit_articulatus(&[r], &ArticulatusOptions::default()).unwrap_err(),
            ArticulatusError::MissingTitle("x".into())
        );
    }

    #[test]
    fn minimal_article_parses_to_an_empty_record() {
        let records = parse_articulatus(b"<article></article>").unwrap();
        assert_eq!(records.len(), 1);
        assert!(records[0].titles.is_empty());
    }

    #[test]
    fn bad_lang_is_rejected() {
        let err = parse_articulatus(br#"<article><artTitles><artTitle lang="FRA">x</artTitle></artTitles></article>"#)
            .unwrap_err();
        assert!(matches!(err, ArticulatusError::BadLangAttribute { .. }));
    }

    #[test]
    fn multiple_records_use_a_wrapper() {
        let out = emit_articulatus(&[record(1), record(1)], &ArticulatusOptions::default()).unwrap();
        let records = parse_articulatus(&out.xml).unwrap();
        assert_eq!(records.len(), 2);
        let empty = emit_articulatus(&[], &ArticulatusOptions::default()).unwrap();
        assert!(parse_articulatus(&empty.xml).unwrap().is_empty());
    }
}
