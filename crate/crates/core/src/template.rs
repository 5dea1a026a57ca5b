//! Plain-text authoring templates.
//!
//! ```text
//! # comment (column 1 only)
//! [ARTICLE]
//! id = ims-2013-030
//! title.ru = Развитие комплексных информационных систем
//! abstract.ru = first line \
//! second line
//! keywords.ru = информационные системы; информатизация
//! pages = 178-183
//!
//! [AUTHOR]
//! firstname = Ирина
//! lastname = Мборо
//!
//! [REFERENCES]
//! ref = Научная электронная библиотека. URL: http://elibrary.ru
//!
//! [GALLEY]
//! label = PDF
//! file = DL03Mbogo.pdf
//! mime_type = application/pdf
//! ```
//!
//! A line ending in `\` continues on the next line; the backslash is dropped
//! and a newline joins the two parts. Galley payloads are never inlined: the
//! `file` key names a path that the caller resolves.

use std::fmt;

use chrono::NaiveDate;
use thiserror::Error;

use crate::model::{
    is_valid_pages, split_keywords, ArtType, ArticleRecord, Author, GalleyFile, LangCode,
    LocalizedText, Reference,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("line {line}: missing [{section}] section")]
    MissingSection { section: SectionName, line: usize },
    #[error("line {line}: duplicate [{section}] section")]
    DuplicateSection { section: SectionName, line: usize },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { key: String, line: usize },
    #[error("line {line}: bad language suffix on `{key}` (expected .ru or .en)")]
    BadLanguageSuffix { key: String, line: usize },
    #[error("line {0}: malformed line")]
    MalformedLine(usize),
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { name: String, line: usize },
    #[error("line {line}: unknown key `{key}` in [{section}]")]
    UnknownKey {
        section: SectionName,
        key: String,
        line: usize,
    },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    BadValue {
        key: String,
        line: usize,
        reason: String,
    },
    #[error("line {line}: [{section}] section is missing `{key}`")]
    MissingKey {
        section: SectionName,
        key: &'static str,
        line: usize,
    },
    #[error("line {0}: more than one author is marked primary")]
    ConflictingPrimary(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SectionName {
    Article,
    Author,
    References,
    Galley,
}

impl SectionName {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "ARTICLE" => SectionName::Article,
            "AUTHOR" => SectionName::Author,
            "REFERENCES" => SectionName::References,
            "GALLEY" => SectionName::Galley,
            _ => return None,
        })
    }

    fn as_str(self) -> &'static str {
        match self {
            SectionName::Article => "ARTICLE",
            SectionName::Author => "AUTHOR",
            SectionName::References => "REFERENCES",
            SectionName::Galley => "GALLEY",
        }
    }
}

impl fmt::Display for SectionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Section {
    pub name: SectionName,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    fn new(name: SectionName) -> Self {
        Section {
            name,
            line: 0,
            entries: Vec::new(),
        }
    }

    fn add(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.entries.push(Entry {
            key: key.into(),
            value: value.into(),
            line: 0,
        });
    }
}

/// Sections in document order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TemplateDocument {
    pub sections: Vec<Section>,
}

/// A parsed template plus the galley paths it references, aligned with
/// `record.galleys`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedTemplate {
    pub record: ArticleRecord,
    pub galley_sources: Vec<String>,
}

impl TemplateDocument {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut doc = TemplateDocument::default();
        let mut pending: Option<Entry> = None;
        for (idx, raw) in text.split('\n').enumerate() {
            let line_no = idx + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if let Some(mut entry) = pending.take() {
                entry.value.push('\n');
                match line.strip_suffix('\\') {
                    Some(part) => {
                        entry.value.push_str(part);
                        pending = Some(entry);
                    }
                    None => {
                        entry.value.push_str(line.trim_end());
                        doc.add_entry(entry)?;
                    }
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let trimmed = line.trim();
            if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim();
                let section = SectionName::parse(name).ok_or_else(|| TemplateError::UnknownSection {
                    name: name.to_string(),
                    line: line_no,
                })?;
                if section == SectionName::Article
                    && doc.sections.iter().any(|s| s.name == SectionName::Article)
                {
                    return Err(TemplateError::DuplicateSection {
                        section,
                        line: line_no,
                    });
                }
                doc.sections.push(Section {
                    name: section,
                    line: line_no,
                    entries: Vec::new(),
                });
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(TemplateError::MalformedLine(line_no));
            };
            let key = key.trim();
            if key.is_empty() || doc.sections.is_empty() {
                return Err(TemplateError::MalformedLine(line_no));
            }
            let value = value.trim_start();
            let mut entry = Entry {
                key: key.to_string(),
                value: String::new(),
                line: line_no,
            };
            match value.strip_suffix('\\') {
                Some(part) => {
                    entry.value.push_str(part);
                    pending = Some(entry);
                }
                None => {
                    entry.value.push_str(value.trim_end());
                    doc.add_entry(entry)?;
                }
            }
        }
        if let Some(entry) = pending {
            doc.add_entry(entry)?;
        }
        Ok(doc)
    }

    fn add_entry(&mut self, entry: Entry) -> Result<(), TemplateError> {
        let section = self
            .sections
            .last_mut()
            .ok_or(TemplateError::MalformedLine(entry.line))?;
        let repeatable = section.name == SectionName::References && entry.key == "ref";
        if !repeatable && section.entries.iter().any(|e| e.key == entry.key) {
            return Err(TemplateError::DuplicateKey {
                key: entry.key,
                line: entry.line,
            });
        }
        section.entries.push(entry);
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, section) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.push('[');
            out.push_str(section.name.as_str());
            out.push_str("]\n");
            for entry in &section.entries {
                out.push_str(&entry.key);
                out.push_str(" = ");
                let mut lines = entry.value.split('\n').peekable();
                while let Some(l) = lines.next() {
                    out.push_str(l);
                    if lines.peek().is_some() {
                        out.push_str("\\\n");
                    }
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn to_record(&self) -> Result<ParsedTemplate, TemplateError> {
        let article = self
            .sections
            .iter()
            .find(|s| s.name == SectionName::Article)
            .ok_or(TemplateError::MissingSection {
                section: SectionName::Article,
                // Reported where the first other section starts, or line 1.
                line: self.sections.first().map_or(1, |s| s.line),
            })?;
        let mut record = ArticleRecord::default();
        let mut identifier = None;
        for e in &article.entries {
            let (base, lang) = split_key(e, &["title", "abstract", "keywords"])?;
            match (base, lang) {
                ("id", None) => identifier = non_empty(&e.value),
                ("title", Some(l)) => {
                    record.titles.insert(l, e.value.as_str());
                }
                ("abstract", Some(l)) => {
                    record.abstracts.insert(l, e.value.as_str());
                }
                ("keywords", Some(l)) => {
                    let words = split_keywords(&e.value);
                    if !words.is_empty() {
                        record.subjects.insert(l, words);
                    }
                }
                ("pages", None) => {
                    if let Some(p) = non_empty(&e.value) {
                        if !is_valid_pages(&p) {
                            return Err(bad_value(e, "expected `N` or `N-M`"));
                        }
                        record.pages = Some(p);
                    }
                }
                ("type", None) => record.art_type = non_empty(&e.value).map(|t| t.parse::<ArtType>().unwrap()),
                ("date", None) => {
                    if let Some(d) = non_empty(&e.value) {
                        let date = NaiveDate::parse_from_str(&d, "%Y-%m-%d")
                            .map_err(|_| bad_value(e, "expected YYYY-MM-DD"))?;
                        record.date_published = Some(date);
                    }
                }
                _ => return Err(unknown_key(article, e)),
            }
        }

        let mut explicit_primary: Vec<(usize, bool, usize)> = Vec::new();
        let mut galley_sources = Vec::new();
        for section in &self.sections {
            match section.name {
                SectionName::Article => {}
                SectionName::Author => {
                    let mut author = Author::default();
                    for e in &section.entries {
                        let (base, lang) = split_key(e, &["bio"])?;
                        match (base, lang) {
                            ("firstname", None) => author.firstname = e.value.clone(),
                            ("middlename", None) => author.middlename = non_empty(&e.value),
                            ("lastname", None) => author.lastname = e.value.clone(),
                            ("country", None) => author.country = non_empty(&e.value),
                            ("email", None) => author.email = non_empty(&e.value),
                            ("affiliation", None) => author.affiliation = non_empty(&e.value),
                            ("bio", Some(l)) => {
                                author
                                    .biography
                                    .get_or_insert_with(LocalizedText::new)
                                    .insert(l, e.value.as_str());
                            }
                            ("primary", None) => {
                                explicit_primary.push((record.authors.len(), parse_bool(e)?, e.line))
                            }
                            ("initials_only", None) => author.initials_only = parse_bool(e)?,
                            _ => return Err(unknown_key(section, e)),
                        }
                    }
                    if author.biography.as_ref().is_some_and(LocalizedText::is_empty) {
                        author.biography = None;
                    }
                    record.authors.push(author);
                }
                SectionName::References => {
                    for e in &section.entries {
                        if e.key != "ref" {
                            return Err(unknown_key(section, e));
                        }
                        if let Some(r) = Reference::new(&e.value) {
                            record.references.push(r);
                        }
                    }
                }
                SectionName::Galley => {
                    let (mut label, mut file, mut mime) = (String::new(), None, None);
                    for e in &section.entries {
                        match e.key.as_str() {
                            "label" => label = e.value.clone(),
                            "file" => file = non_empty(&e.value),
                            "mime_type" => mime = non_empty(&e.value),
                            _ => return Err(unknown_key(section, e)),
                        }
                    }
                    let path = file.ok_or(TemplateError::MissingKey {
                        section: SectionName::Galley,
                        key: "file",
                        line: section.line,
                    })?;
                    let filename = path
                        .rsplit(['/', '\\'])
                        .next()
                        .unwrap_or_default()
                        .to_string();
                    let mime = mime.unwrap_or_else(|| guess_mime(&filename).to_string());
                    let galley = GalleyFile::new(label, filename, mime, Vec::new()).map_err(|_| {
                        TemplateError::BadValue {
                            key: "file".into(),
                            line: section.line,
                            reason: format!("`{path}` does not name a file"),
                        }
                    })?;
                    record.galleys.push(galley);
                    galley_sources.push(path);
                }
            }
        }

        let chosen: Vec<&(usize, bool, usize)> = explicit_primary.iter().filter(|p| p.1).collect();
        if chosen.len() > 1 {
            return Err(TemplateError::ConflictingPrimary(chosen[1].2));
        }
        if let Some((idx, _, _)) = chosen.first() {
            record.authors[*idx].primary_contact = true;
        } else if !record.authors.is_empty()
            && !explicit_primary.iter().any(|(idx, v, _)| *idx == 0 && !v)
        {
            record.authors[0].primary_contact = true;
        }

        record.identifier =
            identifier.unwrap_or_else(|| ArticleRecord::derived_identifier(&record.titles));
        Ok(ParsedTemplate {
            record,
            galley_sources,
        })
    }

    pub fn from_record(record: &ArticleRecord) -> Self {
        let mut doc = TemplateDocument::default();
        let mut article = Section::new(SectionName::Article);
        article.add("id", record.identifier.as_str());
        for (l, t) in record.titles.iter() {
            article.add(format!("title.{}", l.suffix()), t);
        }
        for (l, t) in record.abstracts.iter() {
            article.add(format!("abstract.{}", l.suffix()), t);
        }
        for (l, words) in &record.subjects {
            if !words.is_empty() {
                article.add(format!("keywords.{}", l.suffix()), words.join("; "));
            }
        }
        if let Some(p) = &record.pages {
            article.add("pages", p.as_str());
        }
        if let Some(t) = &record.art_type {
            article.add("type", t.code());
        }
        if let Some(d) = record.date_published {
            article.add("date", d.format("%Y-%m-%d").to_string());
        }
        doc.sections.push(article);

        for (i, a) in record.authors.iter().enumerate() {
            let mut s = Section::new(SectionName::Author);
            s.add("firstname", a.firstname.as_str());
            if let Some(m) = &a.middlename {
                s.add("middlename", m.as_str());
            }
            s.add("lastname", a.lastname.as_str());
            for (key, value) in [("country", &a.country), ("email", &a.email), ("affiliation", &a.affiliation)] {
                if let Some(v) = value {
                    s.add(key, v.as_str());
                }
            }
            if let Some(bio) = &a.biography {
                for (l, t) in bio.iter() {
                    s.add(format!("bio.{}", l.suffix()), t);
                }
            }
            if a.primary_contact {
                s.add("primary", "true");
            } else if i == 0 {
                s.add("primary", "false");
            }
            if a.initials_only {
                s.add("initials_only", "true");
            }
            doc.sections.push(s);
        }
        if !record.references.is_empty() {
            let mut s = Section::new(SectionName::References);
            for r in &record.references {
                s.add("ref", r.text());
            }
            doc.sections.push(s);
        }
        for g in &record.galleys {
            let mut s = Section::new(SectionName::Galley);
            s.add("label", g.label.as_str());
            s.add("file", g.filename.as_str());
            s.add("mime_type", g.mime_type.as_str());
            doc.sections.push(s);
        }
        doc
    }
}

fn split_key<'a>(e: &'a Entry, localized: &[&str]) -> Result<(&'a str, Option<LangCode>), TemplateError> {
    let (base, suffix) = match e.key.split_once('.') {
        Some((b, s)) => (b, Some(s)),
        None => (e.key.as_str(), None),
    };
    let bad = || TemplateError::BadLanguageSuffix {
        key: e.key.clone(),
        line: e.line,
    };
    if localized.contains(&base) {
        let lang = suffix.and_then(LangCode::from_suffix).ok_or_else(bad)?;
        Ok((base, Some(lang)))
    } else if suffix.is_some() {
        Err(bad())
    } else {
        Ok((base, None))
    }
}

fn non_empty(value: &str) -> Option<String> {
    (!value.is_empty()).then(|| value.to_string())
}

fn parse_bool(e: &Entry) -> Result<bool, TemplateError> {
    match e.value.as_str() {
        "true" | "yes" => Ok(true),
        "false" | "no" => Ok(false),
        _ => Err(bad_value(e, "expected true or false")),
    }
}

fn bad_value(e: &Entry, reason: &str) -> TemplateError {
    TemplateError::BadValue {
        key: e.key.clone(),
        line: e.line,
        reason: reason.to_string(),
    }
}

fn unknown_key(section: &Section, e: &Entry) -> TemplateError {
    TemplateError::UnknownKey {
        section: section.name,
        key: e.key.clone(),
        line: e.line,
    }
}

pub fn guess_mime(filename: &str) -> &'static str {
    let ext = filename.rsplit_once('.').map(|(_, e)| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("pdf") => "application/pdf",
        Some("html" | "htm") => "text/html",
        Some("xml") => "application/xml",
        Some("txt") => "text/plain",
        Some("doc") => "application/msword",
        Some("docx") => "application/vnd.openxmlformats-officedocument.wordprocessingml.document",
        _ => "application/octet-stream",
    }
}

/// Parses template text and resolves it into a record and its galley paths.
pub fn parse_template_with_sources(text: &str) -> Result<ParsedTemplate, TemplateError> {
    TemplateDocument::parse(text)?.to_record()
}

/// Parses template text into a record. Galley payloads are left empty.
pub fn parse_template(text: &str) -> Result<ArticleRecord, TemplateError> {
    Ok(parse_template_with_sources(text)?.record)
}

/// Renders a record as template text. Galleys are written by filename only.
pub fn render_template(record: &ArticleRecord) -> String {
    TemplateDocument::from_record(record).render()
}
