//! Canonical article record and the helpers every codec shares.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("unsupported language `{0}`")]
    UnsupportedLanguage(String),
    #[error("record identifier is empty")]
    EmptyIdentifier,
    #[error("record `{0}` has no title")]
    MissingTitle(String),
    #[error("record `{identifier}`: pages `{pages}` is not `N` or `N-M`")]
    BadPages { identifier: String, pages: String },
    #[error("record `{0}` has more than one primary contact")]
    MultiplePrimaryContacts(String),
    #[error("galley filename `{0}` contains a path separator")]
    BadGalleyFilename(String),
}

/// Closed set of record languages, ordered Russian first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LangCode {
    Rus,
    Eng,
}

impl LangCode {
    pub const ALL: [LangCode; 2] = [LangCode::Rus, LangCode::Eng];

    /// Three-letter code used by Articulatus `lang` attributes.
    pub fn neb_code(self) -> &'static str {
        match self {
            LangCode::Rus => "RUS",
            LangCode::Eng => "ENG",
        }
    }

    pub fn from_neb_code(code: &str) -> Result<LangCode, ModelError> {
        match code {
            "RUS" => Ok(LangCode::Rus),
            "ENG" => Ok(LangCode::Eng),
            other => Err(ModelError::UnsupportedLanguage(other.to_string())),
        }
    }

    /// Key suffix used by authoring templates (`title.ru`).
    pub fn suffix(self) -> &'static str {
        match self {
            LangCode::Rus => "ru",
            LangCode::Eng => "en",
        }
    }

    pub fn from_suffix(suffix: &str) -> Option<LangCode> {
        match suffix {
            "ru" => Some(LangCode::Rus),
            "en" => Some(LangCode::Eng),
            _ => None,
        }
    }
}

impl fmt::Display for LangCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.neb_code())
    }
}

/// OJS locale for a language code under the default table.
pub fn locale_map(code: LangCode) -> &'static str {
    match code {
        LangCode::Rus => "ru_RU",
        LangCode::Eng => "en_US",
    }
}

/// Inverse of [`locale_map`].
pub fn locale_unmap(locale: &str) -> Result<LangCode, ModelError> {
    match locale {
        "ru_RU" => Ok(LangCode::Rus),
        "en_US" => Ok(LangCode::Eng),
        other => Err(ModelError::UnsupportedLanguage(other.to_string())),
    }
}

/// Language code to OJS locale table; the default matches [`locale_map`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocaleMap {
    pub rus: String,
    pub eng: String,
}

impl Default for LocaleMap {
    fn default() -> Self {
        LocaleMap {
            rus: locale_map(LangCode::Rus).to_string(),
            eng: locale_map(LangCode::Eng).to_string(),
        }
    }
}

impl LocaleMap {
    pub fn map(&self, code: LangCode) -> &str {
        match code {
            LangCode::Rus => &self.rus,
            LangCode::Eng => &self.eng,
        }
    }

    pub fn unmap(&self, locale: &str) -> Result<LangCode, ModelError> {
        if locale == self.rus {
            Ok(LangCode::Rus)
        } else if locale == self.eng {
            Ok(LangCode::Eng)
        } else {
            Err(ModelError::UnsupportedLanguage(locale.to_string()))
        }
    }
}

/// Text keyed by language. Empty strings are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LocalizedText(BTreeMap<LangCode, String>);

impl LocalizedText {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the entry for `lang`; returns false (and stores nothing) for empty text.
    pub fn insert(&mut self, lang: LangCode, text: impl Into<String>) -> bool {
        let text = text.into();
        if text.is_empty() {
            return false;
        }
        self.0.insert(lang, text);
        true
    }

    pub fn with(mut self, lang: LangCode, text: impl Into<String>) -> Self {
        self.insert(lang, text);
        self
    }

    pub fn get(&self, lang: LangCode) -> Option<&str> {
        self.0.get(&lang).map(String::as_str)
    }

    pub fn remove(&mut self, lang: LangCode) -> Option<String> {
        self.0.remove(&lang)
    }

    pub fn iter(&self) -> impl Iterator<Item = (LangCode, &str)> {
        self.0.iter().map(|(k, v)| (*k, v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    /// Russian entry if present, otherwise English.
    pub fn preferred(&self) -> Option<&str> {
        self.get(LangCode::Rus).or_else(|| self.get(LangCode::Eng))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Author {
    pub firstname: String,
    pub middlename: Option<String>,
    pub lastname: String,
    /// ISO 3166-1 alpha-2.
    pub country: Option<String>,
    pub email: Option<String>,
    pub biography: Option<LocalizedText>,
    pub affiliation: Option<String>,
    pub primary_contact: bool,
    /// Given names are known only as initials (e.g. `И.` / `А.`).
    pub initials_only: bool,
}

impl Author {
    pub fn new(firstname: impl Into<String>, lastname: impl Into<String>) -> Self {
        Author {
            firstname: firstname.into(),
            lastname: lastname.into(),
            ..Default::default()
        }
    }
}

/// `И.А.` style initials: first letter of the first name, then of the middle name.
pub fn initials_of(author: &Author) -> String {
    let Some(first) = first_letter(&author.firstname) else {
        return String::new();
    };
    let mut out = String::new();
    out.push(first);
    out.push('.');
    if let Some(middle) = author.middlename.as_deref().and_then(first_letter) {
        out.push(middle);
        out.push('.');
    }
    out
}

fn first_letter(s: &str) -> Option<char> {
    s.chars().find(|c| c.is_alphabetic())
}

/// Splits `И.А.` back into initials-only given names (`И.`, `А.`).
pub fn split_initials(initials: &str) -> (String, Option<String>) {
    let mut parts = initials
        .split('.')
        .map(str::trim)
        .filter(|p| !p.is_empty());
    let first = parts.next().map(|p| format!("{p}.")).unwrap_or_default();
    let rest: Vec<String> = parts.map(|p| format!("{p}.")).collect();
    let middle = if rest.is_empty() {
        None
    } else {
        Some(rest.join(""))
    };
    (first, middle)
}

/// Bibliographic citation; surrounding whitespace is stripped on construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reference(String);

impl Reference {
    pub fn new(text: &str) -> Option<Reference> {
        let t = text.trim();
        (!t.is_empty()).then(|| Reference(t.to_string()))
    }

    pub fn text(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GalleyFile {
    pub label: String,
    pub filename: String,
    pub mime_type: String,
    pub payload: Vec<u8>,
}

impl GalleyFile {
    pub fn new(
        label: impl Into<String>,
        filename: impl Into<String>,
        mime_type: impl Into<String>,
        payload: Vec<u8>,
    ) -> Result<Self, ModelError> {
        let filename = filename.into();
        if !is_plain_filename(&filename) {
            return Err(ModelError::BadGalleyFilename(filename));
        }
        Ok(GalleyFile {
            label: label.into(),
            filename,
            mime_type: mime_type.into(),
            payload,
        })
    }
}

pub(crate) fn is_plain_filename(name: &str) -> bool {
    !name.is_empty() && !name.contains(['/', '\\']) && name != "." && name != ".."
}

/// Article type code. Only `PRC` (conference proceedings) is known; other codes
/// are carried verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ArtType {
    Prc,
    Other(String),
}

impl ArtType {
    pub fn code(&self) -> &str {
        match self {
            ArtType::Prc => "PRC",
            ArtType::Other(s) => s,
        }
    }
}

impl FromStr for ArtType {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "PRC" {
            ArtType::Prc
        } else {
            ArtType::Other(s.to_string())
        })
    }
}

impl fmt::Display for ArtType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ArticleRecord {
    pub identifier: String,
    pub titles: LocalizedText,
    pub abstracts: LocalizedText,
    pub subjects: BTreeMap<LangCode, Vec<String>>,
    pub authors: Vec<Author>,
    pub pages: Option<String>,
    /// `None` means the source did not say; emitters fall back to `PRC`.
    pub art_type: Option<ArtType>,
    pub references: Vec<Reference>,
    pub galleys: Vec<GalleyFile>,
    pub date_published: Option<NaiveDate>,
    pub deleted: bool,
}

impl ArticleRecord {
    pub fn new(identifier: impl Into<String>) -> Self {
        ArticleRecord {
            identifier: identifier.into(),
            ..Default::default()
        }
    }

    /// Stable identifier for records whose source format carries none.
    pub fn derived_identifier(titles: &LocalizedText) -> String {
        let mut hasher = Sha256::new();
        for (lang, text) in titles.iter() {
            hasher.update(lang.neb_code().as_bytes());
            hasher.update([0]);
            hasher.update(text.as_bytes());
            hasher.update([0]);
        }
        let digest = hasher.finalize();
        format!("rec-{}", hex::encode(&digest[..8]))
    }

    pub fn keyword_count(&self) -> usize {
        self.subjects.values().map(Vec::len).sum()
    }

    pub fn primary_language(&self) -> LangCode {
        if self.titles.get(LangCode::Rus).is_some() || self.titles.is_empty() {
            LangCode::Rus
        } else {
            LangCode::Eng
        }
    }

    /// Checks the structural invariants of the record.
    pub fn check(&self) -> Result<(), ModelError> {
        if self.identifier.is_empty() {
            return Err(ModelError::EmptyIdentifier);
        }
        if !self.deleted && self.titles.is_empty() {
            return Err(ModelError::MissingTitle(self.identifier.clone()));
        }
        if let Some(pages) = &self.pages {
            if !is_valid_pages(pages) {
                return Err(ModelError::BadPages {
                    identifier: self.identifier.clone(),
                    pages: pages.clone(),
                });
            }
        }
        if self.authors.iter().filter(|a| a.primary_contact).count() > 1 {
            return Err(ModelError::MultiplePrimaryContacts(self.identifier.clone()));
        }
        for g in &self.galleys {
            if !is_plain_filename(&g.filename) {
                return Err(ModelError::BadGalleyFilename(g.filename.clone()));
            }
        }
        Ok(())
    }
}

/// `digits` or `digits-digits`.
pub fn is_valid_pages(pages: &str) -> bool {
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    match pages.split_once('-') {
        Some((a, b)) => digits(a) && digits(b),
        None => digits(pages),
    }
}

/// Splits a `;`-delimited keyword string, trimming and dropping empty items.
pub fn split_keywords(raw: &str) -> Vec<String> {
    raw.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_indexing_ready(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.findings.iter().any(|f| f.severity == Severity::Error)
    }

    pub fn error_codes(&self) -> Vec<&'static str> {
        self.codes(Severity::Error)
    }

    pub fn warning_codes(&self) -> Vec<&'static str> {
        self.codes(Severity::Warning)
    }

    fn codes(&self, severity: Severity) -> Vec<&'static str> {
        self.findings
            .iter()
            .filter(|f| f.severity == severity)
            .map(|f| f.code)
            .collect()
    }

    fn push(&mut self, severity: Severity, code: &'static str, message: impl Into<String>) {
        self.findings.push(Finding {
            severity,
            code,
            message: message.into(),
        });
    }
}

/// Metadata checks a record must pass before it is worth exposing to indexers.
pub fn validate_for_indexing(record: &ArticleRecord) -> ValidationReport {
    use Severity::{Error, Warning};
    let mut report = ValidationReport::default();
    if record.deleted {
        report.push(Error, "deleted", "record is a deletion tombstone");
        return report;
    }
    if record.titles.is_empty() {
        report.push(Error, "no-title", "record has no title");
    }
    if !record.authors.iter().any(|a| !a.lastname.trim().is_empty()) {
        report.push(Error, "no-author", "record has no author with a surname");
    }
    if record.pages.is_none() && record.date_published.is_none() {
        report.push(
            Error,
            "no-pages-or-date",
            "record has neither pages nor a publication date",
        );
    }
    if record.galleys.is_empty() && record.references.is_empty() {
        report.push(
            Error,
            "no-fulltext",
            "record has no galley file and no full-text reference",
        );
    }
    if record.abstracts.is_empty() {
        report.push(Warning, "no-abstract", "record has no abstract");
    }
    if record.keyword_count() == 0 {
        report.push(Warning, "no-subjects", "record has no keywords");
    } else if record
        .subjects
        .get(&LangCode::Eng)
        .is_none_or(|k| k.is_empty())
    {
        report.push(Warning, "no-eng-subjects", "record has no English keywords");
    }
    if record.titles.get(LangCode::Eng).is_none() {
        report.push(Warning, "no-eng-title", "record has no English title");
    }
    for (i, author) in record.authors.iter().enumerate() {
        if author.firstname.trim().is_empty() {
            report.push(
                Warning,
                "empty-initials",
                format!("author {} has no first name; initials will be empty", i + 1),
            );
        }
    }
    report
}
