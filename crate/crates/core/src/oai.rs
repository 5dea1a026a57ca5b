//! OAI-PMH 2.0 vocabulary shared by the harvester and the data provider:
//! verbs, error codes, datestamps, the response envelope and `oai_dc`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, NaiveTime, TimeZone, Utc};
use thiserror::Error;

use crate::model::{locale_map, ArticleRecord, Author, LangCode};
use crate::ojs::{self, OjsEmitOptions, OjsError};
use crate::xml::{self, Element, XmlSyntaxError};

pub const OAI_NS: &str = "http://www.openarchives.org/OAI/2.0/";
pub const OAI_SCHEMA: &str = "http://www.openarchives.org/OAI/2.0/OAI-PMH.xsd";
pub const OAI_DC_NS: &str = "http://www.openarchives.org/OAI/2.0/oai_dc/";
pub const OAI_DC_SCHEMA: &str = "http://www.openarchives.org/OAI/2.0/oai_dc.xsd";
pub const DC_NS: &str = "http://purl.org/dc/elements/1.1/";
pub const XSI_NS: &str = "http://www.w3.org/2001/XMLSchema-instance";
pub const OJS_NATIVE_NS: &str = "urn:metabridge:ojs-native";
pub const OJS_NATIVE_SCHEMA: &str = "urn:metabridge:ojs-native.xsd";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OaiCoreError {
    #[error("bad datestamp `{0}`")]
    BadDatestamp(String),
    #[error(transparent)]
    XmlSyntax(#[from] XmlSyntaxError),
    #[error("unknown verb element <{0}>")]
    UnknownVerbElement(String),
    #[error("malformed OAI-PMH response: {0}")]
    Malformed(String),
    #[error("embedded record: {0}")]
    Ojs(#[from] OjsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OaiVerb {
    Identify,
    ListMetadataFormats,
    ListSets,
    ListIdentifiers,
    ListRecords,
    GetRecord,
}

impl OaiVerb {
    pub const ALL: [OaiVerb; 6] = [
        OaiVerb::Identify,
        OaiVerb::ListMetadataFormats,
        OaiVerb::ListSets,
        OaiVerb::ListIdentifiers,
        OaiVerb::ListRecords,
        OaiVerb::GetRecord,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OaiVerb::Identify => "Identify",
            OaiVerb::ListMetadataFormats => "ListMetadataFormats",
            OaiVerb::ListSets => "ListSets",
            OaiVerb::ListIdentifiers => "ListIdentifiers",
            OaiVerb::ListRecords => "ListRecords",
            OaiVerb::GetRecord => "GetRecord",
        }
    }
}

impl FromStr for OaiVerb {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        OaiVerb::ALL.into_iter().find(|v| v.as_str() == s).ok_or(())
    }
}

impl fmt::Display for OaiVerb {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OaiErrorCode {
    BadArgument,
    BadResumptionToken,
    BadVerb,
    CannotDisseminateFormat,
    IdDoesNotExist,
    NoRecordsMatch,
    NoMetadataFormats,
    NoSetHierarchy,
}

impl OaiErrorCode {
    pub const ALL: [OaiErrorCode; 8] = [
        OaiErrorCode::BadArgument,
        OaiErrorCode::BadResumptionToken,
        OaiErrorCode::BadVerb,
        OaiErrorCode::CannotDisseminateFormat,
        OaiErrorCode::IdDoesNotExist,
        OaiErrorCode::NoRecordsMatch,
        OaiErrorCode::NoMetadataFormats,
        OaiErrorCode::NoSetHierarchy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OaiErrorCode::BadArgument => "badArgument",
            OaiErrorCode::BadResumptionToken => "badResumptionToken",
            OaiErrorCode::BadVerb => "badVerb",
            OaiErrorCode::CannotDisseminateFormat => "cannotDisseminateFormat",
            OaiErrorCode::IdDoesNotExist => "idDoesNotExist",
            OaiErrorCode::NoRecordsMatch => "noRecordsMatch",
            OaiErrorCode::NoMetadataFormats => "noMetadataFormats",
            OaiErrorCode::NoSetHierarchy => "noSetHierarchy",
        }
    }
}

impl FromStr for OaiErrorCode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        OaiErrorCode::ALL.into_iter().find(|c| c.as_str() == s).ok_or(())
    }
}

impl fmt::Display for OaiErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Granularity {
    Day,
    Second,
}

impl Granularity {
    /// The form advertised by Identify.
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Day => "YYYY-MM-DD",
            Granularity::Second => "YYYY-MM-DDThh:mm:ssZ",
        }
    }
}

impl FromStr for Granularity {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "YYYY-MM-DD" => Ok(Granularity::Day),
            "YYYY-MM-DDThh:mm:ssZ" => Ok(Granularity::Second),
            _ => Err(()),
        }
    }
}

/// A UTC instant together with the precision it was written in. Day stamps
/// sit at midnight.
///
/// Ordering follows the instant; a day stamp and a second stamp for the same
/// midnight are ordered day-first so that `Ord` stays consistent with `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Datestamp {
    instant: DateTime<Utc>,
    granularity: Granularity,
}

impl Datestamp {
    pub fn day(date: NaiveDate) -> Self {
        Datestamp {
            instant: Utc.from_utc_datetime(&date.and_time(NaiveTime::MIN)),
            granularity: Granularity::Day,
        }
    }

    /// Sub-second precision is discarded.
    pub fn second(instant: DateTime<Utc>) -> Self {
        let secs = instant.timestamp();
        Datestamp {
            instant: DateTime::from_timestamp(secs, 0).expect("in range"),
            granularity: Granularity::Second,
        }
    }

    pub fn instant(&self) -> DateTime<Utc> {
        self.instant
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn date(&self) -> NaiveDate {
        self.instant.date_naive()
    }

    /// Truncates to day precision or widens to second precision.
    pub fn with_granularity(&self, granularity: Granularity) -> Datestamp {
        match granularity {
            Granularity::Day => Datestamp::day(self.date()),
            Granularity::Second => Datestamp {
                instant: self.instant,
                granularity,
            },
        }
    }

    /// Last instant covered by the stamp: end of day for day stamps. Used for
    /// inclusive `until` bounds.
    pub fn upper_instant(&self) -> DateTime<Utc> {
        match self.granularity {
            Granularity::Day => self.instant + Duration::days(1) - Duration::seconds(1),
            Granularity::Second => self.instant,
        }
    }

    pub fn plus_seconds(&self, secs: i64) -> Datestamp {
        Datestamp::second(self.instant + Duration::seconds(secs))
    }

    pub fn parse(text: &str) -> Result<Datestamp, OaiCoreError> {
        parse_datestamp(text)
    }

    pub fn format(&self) -> String {
        format_datestamp(self)
    }
}

impl PartialOrd for Datestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Datestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.instant
            .cmp(&other.instant)
            .then(self.granularity.cmp(&other.granularity))
    }
}

impl fmt::Display for Datestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_datestamp(self))
    }
}

impl FromStr for Datestamp {
    type Err = OaiCoreError;

    fn from_str(s: &str) -> Result<Self, OaiCoreError> {
        parse_datestamp(s)
    }
}

fn shape_matches(text: &str, shape: &str) -> bool {
    text.len() == shape.len()
        && text.bytes().zip(shape.bytes()).all(|(c, s)| match s {
            b'9' => c.is_ascii_digit(),
            _ => c == s,
        })
}

/// Accepts exactly `YYYY-MM-DD` or `YYYY-MM-DDThh:mm:ssZ`.
pub fn parse_datestamp(text: &str) -> Result<Datestamp, OaiCoreError> {
    let bad = || OaiCoreError::BadDatestamp(text.to_string());
    if shape_matches(text, "9999-99-99") {
        let date = NaiveDate::parse_from_str(text, "%Y-%m-%d").map_err(|_| bad())?;
        Ok(Datestamp::day(date))
    } else if shape_matches(text, "9999-99-99T99:99:99Z") {
        let naive = NaiveDateTime::parse_from_str(text, "%Y-%m-%dT%H:%M:%SZ").map_err(|_| bad())?;
        Ok(Datestamp {
            instant: Utc.from_utc_datetime(&naive),
            granularity: Granularity::Second,
        })
    } else {
        Err(bad())
    }
}

pub fn format_datestamp(d: &Datestamp) -> String {
    match d.granularity {
        Granularity::Day => d.instant.format("%Y-%m-%d").to_string(),
        Granularity::Second => d.instant.format("%Y-%m-%dT%H:%M:%SZ").to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordHeader {
    pub identifier: String,
    pub datestamp: Datestamp,
    pub set_specs: Vec<String>,
    pub deleted: bool,
}

/// `token` is opaque to everyone but the provider that minted it. An empty
/// token marks the last page of a list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResumptionToken {
    pub token: String,
    pub complete_list_size: Option<u64>,
    pub cursor: Option<u64>,
}

impl ResumptionToken {
    pub fn is_final(&self) -> bool {
        self.token.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DcRecord {
    pub title: Vec<String>,
    pub creator: Vec<String>,
    pub subject: Vec<String>,
    pub description: Vec<String>,
    pub publisher: Vec<String>,
    pub date: Vec<String>,
    pub r#type: Vec<String>,
    pub format: Vec<String>,
    pub identifier: Vec<String>,
    pub language: Vec<String>,
}

impl DcRecord {
    fn fields(&self) -> [(&'static str, &Vec<String>); 10] {
        [
            ("title", &self.title),
            ("creator", &self.creator),
            ("subject", &self.subject),
            ("description", &self.description),
            ("publisher", &self.publisher),
            ("date", &self.date),
            ("type", &self.r#type),
            ("format", &self.format),
            ("identifier", &self.identifier),
            ("language", &self.language),
        ]
    }

    fn field_mut(&mut self, name: &str) -> Option<&mut Vec<String>> {
        Some(match name {
            "title" => &mut self.title,
            "creator" => &mut self.creator,
            "subject" => &mut self.subject,
            "description" => &mut self.description,
            "publisher" => &mut self.publisher,
            "date" => &mut self.date,
            "type" => &mut self.r#type,
            "format" => &mut self.format,
            "identifier" => &mut self.identifier,
            "language" => &mut self.language,
            _ => return None,
        })
    }
}

/// Language order used when flattening localized fields into `oai_dc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DcOrder {
    #[default]
    RusFirst,
    EngFirst,
}

impl DcOrder {
    fn langs(self) -> [LangCode; 2] {
        match self {
            DcOrder::RusFirst => [LangCode::Rus, LangCode::Eng],
            DcOrder::EngFirst => [LangCode::Eng, LangCode::Rus],
        }
    }
}

/// `Lastname, Firstname Middlename`.
pub fn dc_creator(author: &Author) -> String {
    let mut given = author.firstname.clone();
    if let Some(m) = &author.middlename {
        if !given.is_empty() {
            given.push(' ');
        }
        given.push_str(m);
    }
    if given.is_empty() {
        author.lastname.clone()
    } else {
        format!("{}, {}", author.lastname, given)
    }
}

pub fn record_to_dc(record: &ArticleRecord, order: DcOrder) -> DcRecord {
    let mut dc = DcRecord::default();
    for lang in order.langs() {
        dc.title.extend(record.titles.get(lang).map(str::to_string));
        dc.description.extend(record.abstracts.get(lang).map(str::to_string));
        if let Some(words) = record.subjects.get(&lang) {
            dc.subject.extend(words.iter().cloned());
        }
        let present = record.titles.get(lang).is_some()
            || record.abstracts.get(lang).is_some()
            || record.subjects.get(&lang).is_some_and(|w| !w.is_empty());
        if present {
            dc.language.push(locale_map(lang).to_string());
        }
    }
    dc.creator = record.authors.iter().map(dc_creator).collect();
    dc.date.extend(record.date_published.map(|d| d.format("%Y-%m-%d").to_string()));
    dc.identifier.push(record.identifier.clone());
    for g in &record.galleys {
        if !g.mime_type.is_empty() && !dc.format.contains(&g.mime_type) {
            dc.format.push(g.mime_type.clone());
        }
    }
    dc
}

fn script_language(text: &str) -> LangCode {
    let cyrillic = text.chars().any(|c| ('\u{0400}'..='\u{04FF}').contains(&c));
    if cyrillic {
        LangCode::Rus
    } else {
        LangCode::Eng
    }
}

/// Best-effort inverse of [`record_to_dc`]. Languages are guessed from the
/// script of each value, so the result is lossy.
pub fn dc_to_record(dc: &DcRecord) -> ArticleRecord {
    let mut record = ArticleRecord::new(dc.identifier.first().cloned().unwrap_or_default());
    for t in &dc.title {
        let lang = script_language(t);
        if record.titles.get(lang).is_none() {
            record.titles.insert(lang, t.clone());
        }
    }
    for d in &dc.description {
        let lang = script_language(d);
        if record.abstracts.get(lang).is_none() {
            record.abstracts.insert(lang, d.clone());
        }
    }
    for s in &dc.subject {
        if !s.trim().is_empty() {
            record.subjects.entry(script_language(s)).or_default().push(s.trim().to_string());
        }
    }
    for c in &dc.creator {
        let (last, given) = c.split_once(", ").unwrap_or((c.as_str(), ""));
        let mut names = given.split_whitespace();
        let mut author = Author::new(names.next().unwrap_or_default(), last);
        let rest: Vec<&str> = names.collect();
        if !rest.is_empty() {
            author.middlename = Some(rest.join(" "));
        }
        author.primary_contact = record.authors.is_empty();
        record.authors.push(author);
    }
    record.date_published = dc
        .date
        .iter()
        .find_map(|d| NaiveDate::parse_from_str(d.get(..10).unwrap_or(d), "%Y-%m-%d").ok());
    if record.identifier.is_empty() {
        record.identifier = ArticleRecord::derived_identifier(&record.titles);
    }
    record
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestEcho {
    pub base_url: String,
    /// Request arguments in the order they are written as attributes.
    pub args: Vec<(String, String)>,
}

impl RequestEcho {
    pub fn new(base_url: impl Into<String>) -> Self {
        RequestEcho {
            base_url: base_url.into(),
            args: Vec::new(),
        }
    }

    pub fn arg(&self, name: &str) -> Option<&str> {
        self.args.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdentifyInfo {
    pub repository_name: String,
    pub base_url: String,
    pub protocol_version: String,
    pub admin_emails: Vec<String>,
    pub earliest_datestamp: Datestamp,
    pub deleted_record: String,
    pub granularity: Granularity,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetadataFormat {
    pub prefix: String,
    pub schema: String,
    pub namespace: String,
}

impl MetadataFormat {
    pub fn oai_dc() -> Self {
        MetadataFormat {
            prefix: "oai_dc".into(),
            schema: OAI_DC_SCHEMA.into(),
            namespace: OAI_DC_NS.into(),
        }
    }

    pub fn ojs_native() -> Self {
        MetadataFormat {
            prefix: "ojs_native".into(),
            schema: OJS_NATIVE_SCHEMA.into(),
            namespace: OJS_NATIVE_NS.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Metadata {
    Dc(DcRecord),
    /// Full-fidelity record in the archival OJS profile with embedded galleys.
    OjsNative(ArticleRecord),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OaiRecord {
    pub header: RecordHeader,
    /// Absent for deleted records.
    pub metadata: Option<Metadata>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OaiPayload {
    Identify(IdentifyInfo),
    ListMetadataFormats(Vec<MetadataFormat>),
    ListSets(Vec<(String, String)>),
    ListIdentifiers {
        headers: Vec<RecordHeader>,
        token: Option<ResumptionToken>,
    },
    ListRecords {
        records: Vec<OaiRecord>,
        token: Option<ResumptionToken>,
    },
    GetRecord(OaiRecord),
}

impl OaiPayload {
    pub fn verb(&self) -> OaiVerb {
        match self {
            OaiPayload::Identify(_) => OaiVerb::Identify,
            OaiPayload::ListMetadataFormats(_) => OaiVerb::ListMetadataFormats,
            OaiPayload::ListSets(_) => OaiVerb::ListSets,
            OaiPayload::ListIdentifiers { .. } => OaiVerb::ListIdentifiers,
            OaiPayload::ListRecords { .. } => OaiVerb::ListRecords,
            OaiPayload::GetRecord(_) => OaiVerb::GetRecord,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OaiError {
    pub code: OaiErrorCode,
    pub message: String,
}

impl OaiError {
    pub fn new(code: OaiErrorCode, message: impl Into<String>) -> Self {
        OaiError {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for OaiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.message.is_empty() {
            f.write_str(self.code.as_str())
        } else {
            write!(f, "{}: {}", self.code, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OaiResponse {
    pub response_date: Datestamp,
    pub request: RequestEcho,
    pub body: Result<OaiPayload, Vec<OaiError>>,
}

pub fn emit_oai_response(response: &OaiResponse) -> Vec<u8> {
    let mut root = Element::new("OAI-PMH")
        .with_attr("xmlns", OAI_NS)
        .with_attr("xmlns:xsi", XSI_NS)
        .with_attr("xsi:schemaLocation", format!("{OAI_NS} {OAI_SCHEMA}"));
    root.push(Element::new("responseDate").with_text(response.response_date.format()));
    let mut request = Element::new("request");
    for (k, v) in &response.request.args {
        request.set_attr(k.as_str(), v.as_str());
    }
    request.push_text(response.request.base_url.as_str());
    root.push(request);
    match &response.body {
        Err(errors) => {
            for e in errors {
                let mut el = Element::new("error").with_attr("code", e.code.as_str());
                if !e.message.is_empty() {
                    el.push_text(e.message.as_str());
                }
                root.push(el);
            }
        }
        Ok(payload) => root.push(payload_element(payload)),
    }
    xml::to_document(&root)
}

fn payload_element(payload: &OaiPayload) -> Element {
    let mut el = Element::new(payload.verb().as_str());
    match payload {
        OaiPayload::Identify(info) => {
            el.push(Element::new("repositoryName").with_text(info.repository_name.as_str()));
            el.push(Element::new("baseURL").with_text(info.base_url.as_str()));
            el.push(Element::new("protocolVersion").with_text(info.protocol_version.as_str()));
            for e in &info.admin_emails {
                el.push(Element::new("adminEmail").with_text(e.as_str()));
            }
            el.push(Element::new("earliestDatestamp").with_text(info.earliest_datestamp.format()));
            el.push(Element::new("deletedRecord").with_text(info.deleted_record.as_str()));
            el.push(Element::new("granularity").with_text(info.granularity.as_str()));
        }
        OaiPayload::ListMetadataFormats(formats) => {
            for f in formats {
                el.push(
                    Element::new("metadataFormat")
                        .with_child(Element::new("metadataPrefix").with_text(f.prefix.as_str()))
                        .with_child(Element::new("schema").with_text(f.schema.as_str()))
                        .with_child(Element::new("metadataNamespace").with_text(f.namespace.as_str())),
                );
            }
        }
        OaiPayload::ListSets(sets) => {
            for (spec, name) in sets {
                el.push(
                    Element::new("set")
                        .with_child(Element::new("setSpec").with_text(spec.as_str()))
                        .with_child(Element::new("setName").with_text(name.as_str())),
                );
            }
        }
        OaiPayload::ListIdentifiers { headers, token } => {
            for h in headers {
                el.push(header_element(h));
            }
            el.children.extend(token.as_ref().map(|t| xml::Node::Element(token_element(t))));
        }
        OaiPayload::ListRecords { records, token } => {
            for r in records {
                el.push(record_element(r));
            }
            el.children.extend(token.as_ref().map(|t| xml::Node::Element(token_element(t))));
        }
        OaiPayload::GetRecord(r) => el.push(record_element(r)),
    }
    el
}

fn header_element(h: &RecordHeader) -> Element {
    let mut el = Element::new("header");
    if h.deleted {
        el.set_attr("status", "deleted");
    }
    el.push(Element::new("identifier").with_text(h.identifier.as_str()));
    el.push(Element::new("datestamp").with_text(h.datestamp.format()));
    for s in &h.set_specs {
        el.push(Element::new("setSpec").with_text(s.as_str()));
    }
    el
}

fn token_element(t: &ResumptionToken) -> Element {
    let mut el = Element::new("resumptionToken");
    if let Some(n) = t.complete_list_size {
        el.set_attr("completeListSize", n.to_string());
    }
    if let Some(n) = t.cursor {
        el.set_attr("cursor", n.to_string());
    }
    if !t.token.is_empty() {
        el.push_text(t.token.as_str());
    }
    el
}

fn record_element(r: &OaiRecord) -> Element {
    let mut el = Element::new("record").with_child(header_element(&r.header));
    if let Some(m) = &r.metadata {
        el.push(Element::new("metadata").with_child(metadata_element(m)));
    }
    el
}

fn metadata_element(m: &Metadata) -> Element {
    match m {
        Metadata::Dc(dc) => {
            let mut el = Element::new("oai_dc:dc")
                .with_attr("xmlns:oai_dc", OAI_DC_NS)
                .with_attr("xmlns:dc", DC_NS)
                .with_attr("xmlns:xsi", XSI_NS)
                .with_attr("xsi:schemaLocation", format!("{OAI_DC_NS} {OAI_DC_SCHEMA}"));
            for (name, values) in dc.fields() {
                for v in values {
                    el.push(Element::new(format!("dc:{name}")).with_text(v.as_str()));
                }
            }
            el
        }
        Metadata::OjsNative(record) => {
            let mut el = ojs::article_element(record, OjsEmitOptions::archival());
            el.attrs.insert(0, ("xmlns".to_string(), OJS_NATIVE_NS.to_string()));
            el
        }
    }
}

pub fn parse_oai_response(input: &[u8]) -> Result<OaiResponse, OaiCoreError> {
    let root = xml::parse(input)?;
    if root.name != "OAI-PMH" {
        return Err(OaiCoreError::Malformed(format!("root element is <{}>", root.name)));
    }
    let response_date = parse_datestamp(&required_text(&root, "responseDate")?)?;
    let request_el = root
        .child("request")
        .ok_or_else(|| OaiCoreError::Malformed("missing <request>".into()))?;
    let request = RequestEcho {
        base_url: request_el.text(),
        args: request_el.attrs.clone(),
    };
    let errors: Vec<OaiError> = root
        .children_named("error")
        .map(|e| {
            let code = e.attr("code").unwrap_or_default();
            let code = code
                .parse()
                .map_err(|_| OaiCoreError::Malformed(format!("unknown error code `{code}`")))?;
            Ok(OaiError::new(code, e.text()))
        })
        .collect::<Result<_, OaiCoreError>>()?;
    if !errors.is_empty() {
        return Ok(OaiResponse {
            response_date,
            request,
            body: Err(errors),
        });
    }
    let verb_el = root
        .elements()
        .find(|e| !matches!(e.name.as_str(), "responseDate" | "request"))
        .ok_or_else(|| OaiCoreError::Malformed("no verb element and no error".into()))?;
    let verb: OaiVerb = verb_el
        .name
        .parse()
        .map_err(|_| OaiCoreError::UnknownVerbElement(verb_el.name.clone()))?;
    let payload = match verb {
        OaiVerb::Identify => OaiPayload::Identify(IdentifyInfo {
            repository_name: required_text(verb_el, "repositoryName")?,
            base_url: required_text(verb_el, "baseURL")?,
            protocol_version: required_text(verb_el, "protocolVersion")?,
            admin_emails: verb_el.children_named("adminEmail").map(Element::text).collect(),
            earliest_datestamp: parse_datestamp(&required_text(verb_el, "earliestDatestamp")?)?,
            deleted_record: required_text(verb_el, "deletedRecord")?,
            granularity: {
                let g = required_text(verb_el, "granularity")?;
                g.parse()
                    .map_err(|_| OaiCoreError::Malformed(format!("granularity `{g}`")))?
            },
        }),
        OaiVerb::ListMetadataFormats => OaiPayload::ListMetadataFormats(
            verb_el
                .children_named("metadataFormat")
                .map(|f| {
                    Ok(MetadataFormat {
                        prefix: required_text(f, "metadataPrefix")?,
                        schema: required_text(f, "schema")?,
                        namespace: required_text(f, "metadataNamespace")?,
                    })
                })
                .collect::<Result<_, OaiCoreError>>()?,
        ),
        OaiVerb::ListSets => OaiPayload::ListSets(
            verb_el
                .children_named("set")
                .map(|s| Ok((required_text(s, "setSpec")?, required_text(s, "setName")?)))
                .collect::<Result<_, OaiCoreError>>()?,
        ),
        OaiVerb::ListIdentifiers => OaiPayload::ListIdentifiers {
            headers: verb_el
                .children_named("header")
                .map(parse_header)
                .collect::<Result<_, _>>()?,
            token: parse_token(verb_el)?,
        },
        OaiVerb::ListRecords => OaiPayload::ListRecords {
            records: verb_el
                .children_named("record")
                .map(parse_record)
                .collect::<Result<_, _>>()?,
            token: parse_token(verb_el)?,
        },
        OaiVerb::GetRecord => OaiPayload::GetRecord(parse_record(
            verb_el
                .child("record")
                .ok_or_else(|| OaiCoreError::Malformed("GetRecord without <record>".into()))?,
        )?),
    };
    Ok(OaiResponse {
        response_date,
        request,
        body: Ok(payload),
    })
}

fn required_text(el: &Element, name: &str) -> Result<String, OaiCoreError> {
    el.child_text(name)
        .ok_or_else(|| OaiCoreError::Malformed(format!("<{}> lacks <{name}>", el.name)))
}

fn parse_header(el: &Element) -> Result<RecordHeader, OaiCoreError> {
    Ok(RecordHeader {
        identifier: required_text(el, "identifier")?,
        datestamp: parse_datestamp(&required_text(el, "datestamp")?)?,
        set_specs: el.children_named("setSpec").map(Element::text).collect(),
        deleted: el.attr("status") == Some("deleted"),
    })
}

fn parse_token(el: &Element) -> Result<Option<ResumptionToken>, OaiCoreError> {
    let Some(t) = el.child("resumptionToken") else {
        return Ok(None);
    };
    let count = |name: &str| -> Result<Option<u64>, OaiCoreError> {
        t.attr(name)
            .map(|v| {
                v.parse()
                    .map_err(|_| OaiCoreError::Malformed(format!("{name}=`{v}`")))
            })
            .transpose()
    };
    Ok(Some(ResumptionToken {
        token: t.text().trim().to_string(),
        complete_list_size: count("completeListSize")?,
        cursor: count("cursor")?,
    }))
}

fn parse_record(el: &Element) -> Result<OaiRecord, OaiCoreError> {
    let header = parse_header(
        el.child("header")
            .ok_or_else(|| OaiCoreError::Malformed("<record> without <header>".into()))?,
    )?;
    let metadata = match el.child("metadata").and_then(|m| m.elements().next()) {
        None => None,
        Some(m) if m.name == "dc" => {
            let mut dc = DcRecord::default();
            for field in m.elements() {
                if let Some(list) = dc.field_mut(&field.name) {
                    list.push(field.text());
                }
            }
            Some(Metadata::Dc(dc))
        }
        Some(m) if m.name == "article" => Some(Metadata::OjsNative(ojs::record_from_element(m, None)?.0)),
        Some(m) => {
            return Err(OaiCoreError::Malformed(format!(
                "unsupported metadata element <{}>",
                m.name
            )))
        }
    };
    Ok(OaiRecord { header, metadata })
}
