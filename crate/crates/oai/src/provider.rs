//! OAI-PMH data provider and RSS feed over a record store.
//!
//! Every request reads a fresh manifest snapshot, so a harvest running in
//! another process is visible at the next request and never half-applied.
//! Resumption tokens carry the whole list position, so the provider keeps no
//! session state and can be restarted between pages.

use std::collections::BTreeSet;
use std::path::PathBuf;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use chrono::Utc;
use metabridge_core::oai::{
    emit_oai_response, parse_datestamp, record_to_dc, Datestamp, DcOrder, Granularity, IdentifyInfo, Metadata,
    MetadataFormat, OaiError, OaiErrorCode, OaiPayload, OaiRecord, OaiResponse, OaiVerb, RecordHeader,
    RequestEcho, ResumptionToken,
};
use metabridge_core::store::{StoreError, StoreSnapshot};
use metabridge_core::LangCode;
use sha2::{Digest, Sha256};

use crate::http::HttpResponse;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderConfig {
    pub repository_name: String,
    /// Absolute URL of the OAI endpoint, echoed in responses and used for
    /// RSS item links.
    pub base_url: String,
    pub base_path: String,
    pub page_size: usize,
    pub granularity: Granularity,
    pub admin_email: String,
    pub dc_order: DcOrder,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            repository_name: "metabridge repository".into(),
            base_url: "http://localhost/oai".into(),
            base_path: "/oai".into(),
            page_size: 100,
            granularity: Granularity::Second,
            admin_email: "admin@localhost".into(),
            dc_order: DcOrder::RusFirst,
        }
    }
}

impl ProviderConfig {
    /// Path of the RSS feed: `rss` next to the OAI endpoint.
    pub fn rss_path(&self) -> String {
        match self.base_path.rsplit_once('/') {
            Some((parent, _)) => format!("{parent}/rss"),
            None => "/rss".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Provider {
    pub config: ProviderConfig,
    pub store_dir: PathBuf,
}

const FORMATS: [&str; 2] = ["oai_dc", "ojs_native"];

fn formats() -> Vec<MetadataFormat> {
    vec![MetadataFormat::oai_dc(), MetadataFormat::ojs_native()]
}

/// List position and filter carried by a resumption token.
#[derive(Debug, Clone, PartialEq, Eq)]
struct TokenState {
    verb: OaiVerb,
    offset: usize,
    prefix: String,
    from: Option<String>,
    until: Option<String>,
    fingerprint: String,
}

impl TokenState {
    fn encode(&self) -> String {
        let text = format!(
            "v1\n{}\n{}\n{}\n{}\n{}\n{}",
            self.verb,
            self.offset,
            self.prefix,
            self.from.as_deref().unwrap_or(""),
            self.until.as_deref().unwrap_or(""),
            self.fingerprint
        );
        URL_SAFE_NO_PAD.encode(text)
    }

    fn decode(token: &str) -> Option<TokenState> {
        let bytes = URL_SAFE_NO_PAD.decode(token).ok()?;
        let text = String::from_utf8(bytes).ok()?;
        let parts: Vec<&str> = text.split('\n').collect();
        let [version, verb, offset, prefix, from, until, fingerprint] = parts.as_slice() else {
            return None;
        };
        if *version != "v1" {
            return None;
        }
        let opt = |s: &str| (!s.is_empty()).then(|| s.to_string());
        Some(TokenState {
            verb: verb.parse().ok()?,
            offset: offset.parse().ok()?,
            prefix: prefix.to_string(),
            from: opt(from),
            until: opt(until),
            fingerprint: fingerprint.to_string(),
        })
    }
}

/// Changes whenever the set of headers a filter selects changes.
fn fingerprint(prefix: &str, from: Option<&str>, until: Option<&str>, headers: &[RecordHeader]) -> String {
    let mut h = Sha256::new();
    h.update(format!("{prefix}\n{}\n{}\n{}\n", from.unwrap_or(""), until.unwrap_or(""), headers.len()));
    for header in headers {
        h.update(format!("{}\t{}\t{}\n", header.identifier, header.datestamp, header.deleted));
    }
    hex::encode(&h.finalize()[..12])
}

type Args = Vec<(String, String)>;

fn bad_argument(msg: impl Into<String>) -> Vec<OaiError> {
    vec![OaiError::new(OaiErrorCode::BadArgument, msg)]
}

impl Provider {
    pub fn new(config: ProviderConfig, store_dir: impl Into<PathBuf>) -> Self {
        Provider {
            config,
            store_dir: store_dir.into(),
        }
    }

    /// Answers one OAI-PMH request given its decoded query (or form) pairs.
    pub fn handle_request(&self, params: &[(String, String)]) -> HttpResponse {
        let snapshot = match StoreSnapshot::load(&self.store_dir) {
            Ok(s) => s,
            Err(e) => return HttpResponse::server_error(&e.to_string()),
        };
        match self.respond(&snapshot, params, Datestamp::second(Utc::now())) {
            Ok(response) => HttpResponse::xml(emit_oai_response(&response)),
            Err(e) => HttpResponse::server_error(&e.to_string()),
        }
    }

    /// Builds the response envelope. Only store read failures are errors;
    /// everything wrong with the request is answered in-protocol.
    pub fn respond(
        &self,
        snapshot: &StoreSnapshot,
        params: &[(String, String)],
        now: Datestamp,
    ) -> Result<OaiResponse, StoreError> {
        let mut request = RequestEcho::new(self.config.base_url.as_str());
        let body = match self.validate(params) {
            Err(errors) => Err(errors),
            Ok((verb, args)) => {
                // Attributes are echoed only for requests that were understood.
                request.args = params.to_vec();
                self.dispatch(snapshot, verb, &args)?
            }
        };
        Ok(OaiResponse {
            response_date: now,
            request,
            body,
        })
    }

    fn validate(&self, params: &[(String, String)]) -> Result<(OaiVerb, Args), Vec<OaiError>> {
        let verbs: Vec<&str> = params.iter().filter(|(k, _)| k == "verb").map(|(_, v)| v.as_str()).collect();
        let verb: OaiVerb = match verbs.as_slice() {
            [] => return Err(vec![OaiError::new(OaiErrorCode::BadVerb, "missing verb")]),
            [v] => v
                .parse()
                .map_err(|_| vec![OaiError::new(OaiErrorCode::BadVerb, format!("illegal verb `{v}`"))])?,
            _ => return Err(vec![OaiError::new(OaiErrorCode::BadVerb, "verb given more than once")]),
        };
        let args: Args = params.iter().filter(|(k, _)| k != "verb").cloned().collect();
        let mut seen = BTreeSet::new();
        for (k, _) in &args {
            if !seen.insert(k.as_str()) {
                return Err(bad_argument(format!("argument `{k}` repeated")));
            }
        }
        let (required, optional, exclusive): (&[&str], &[&str], Option<&str>) = match verb {
            OaiVerb::Identify => (&[], &[], None),
            OaiVerb::ListMetadataFormats => (&[], &["identifier"], None),
            OaiVerb::ListSets => (&[], &[], Some("resumptionToken")),
            OaiVerb::ListIdentifiers | OaiVerb::ListRecords => {
                (&["metadataPrefix"], &["from", "until", "set"], Some("resumptionToken"))
            }
            OaiVerb::GetRecord => (&["identifier", "metadataPrefix"], &[], None),
        };
        if let Some(ex) = exclusive {
            if seen.contains(ex) {
                if seen.len() > 1 {
                    return Err(bad_argument(format!("`{ex}` is an exclusive argument")));
                }
                return Ok((verb, args));
            }
        }
        for k in &seen {
            if !required.contains(k) && !optional.contains(k) {
                return Err(bad_argument(format!("illegal argument `{k}` for {verb}")));
            }
        }
        for r in required {
            if !seen.contains(r) {
                return Err(bad_argument(format!("missing required argument `{r}`")));
            }
        }
        Ok((verb, args))
    }

    fn dispatch(
        &self,
        snapshot: &StoreSnapshot,
        verb: OaiVerb,
        args: &Args,
    ) -> Result<Result<OaiPayload, Vec<OaiError>>, StoreError> {
        let arg = |name: &str| args.iter().find(|(k, _)| k == name).map(|(_, v)| v.as_str());
        let g = self.config.granularity;
        Ok(match verb {
            OaiVerb::Identify => Ok(OaiPayload::Identify(IdentifyInfo {
                repository_name: self.config.repository_name.clone(),
                base_url: self.config.base_url.clone(),
                protocol_version: "2.0".into(),
                admin_emails: vec![self.config.admin_email.clone()],
                earliest_datestamp: snapshot
                    .earliest_datestamp()
                    .unwrap_or_else(|| parse_datestamp("1970-01-01T00:00:00Z").unwrap())
                    .with_granularity(g),
                deleted_record: "persistent".into(),
                granularity: g,
            })),
            OaiVerb::ListMetadataFormats => match arg("identifier") {
                Some(id) if snapshot.header(id).is_none() => Err(vec![OaiError::new(
                    OaiErrorCode::IdDoesNotExist,
                    format!("unknown identifier `{id}`"),
                )]),
                _ => Ok(OaiPayload::ListMetadataFormats(formats())),
            },
            OaiVerb::ListSets => Err(vec![OaiError::new(
                OaiErrorCode::NoSetHierarchy,
                "this repository does not support sets",
            )]),
            OaiVerb::GetRecord => {
                let id = arg("identifier").unwrap();
                let prefix = arg("metadataPrefix").unwrap();
                if !FORMATS.contains(&prefix) {
                    Err(vec![cannot_disseminate(prefix)])
                } else {
                    match snapshot.header(id) {
                        None => Err(vec![OaiError::new(
                            OaiErrorCode::IdDoesNotExist,
                            format!("unknown identifier `{id}`"),
                        )]),
                        Some(h) => Ok(OaiPayload::GetRecord(self.record(snapshot, h, prefix)?)),
                    }
                }
            }
            OaiVerb::ListIdentifiers | OaiVerb::ListRecords => self.list(snapshot, verb, args)?,
        })
    }

    fn list(
        &self,
        snapshot: &StoreSnapshot,
        verb: OaiVerb,
        args: &Args,
    ) -> Result<Result<OaiPayload, Vec<OaiError>>, StoreError> {
        let arg = |name: &str| args.iter().find(|(k, _)| k == name).map(|(_, v)| v.to_string());
        let (state, resumed) = match arg("resumptionToken") {
            Some(token) => match TokenState::decode(&token) {
                Some(s) if s.verb == verb => (s, true),
                _ => return Ok(Err(vec![bad_token("token is not valid for this request")])),
            },
            None => {
                if arg("set").is_some() {
                    return Ok(Err(vec![OaiError::new(
                        OaiErrorCode::NoSetHierarchy,
                        "this repository does not support sets",
                    )]));
                }
                let state = TokenState {
                    verb,
                    offset: 0,
                    prefix: arg("metadataPrefix").unwrap(),
                    from: arg("from"),
                    until: arg("until"),
                    fingerprint: String::new(),
                };
                (state, false)
            }
        };
        let from = match self.window_bound(state.from.as_deref()) {
            Ok(d) => d,
            Err(e) => return Ok(Err(e)),
        };
        let until = match self.window_bound(state.until.as_deref()) {
            Ok(d) => d,
            Err(e) => return Ok(Err(e)),
        };
        if let (Some(f), Some(u)) = (from, until) {
            if f.granularity() != u.granularity() {
                return Ok(Err(bad_argument("`from` and `until` differ in granularity")));
            }
            if f > u {
                return Ok(Err(bad_argument("`from` is later than `until`")));
            }
        }
        if !FORMATS.contains(&state.prefix.as_str()) {
            return Ok(Err(vec![cannot_disseminate(&state.prefix)]));
        }

        let headers = snapshot.list(from, until);
        let fp = fingerprint(&state.prefix, state.from.as_deref(), state.until.as_deref(), &headers);
        if resumed && (fp != state.fingerprint || state.offset >= headers.len()) {
            return Ok(Err(vec![bad_token("the result list changed since this token was issued")]));
        }
        if headers.is_empty() {
            return Ok(Err(vec![OaiError::new(
                OaiErrorCode::NoRecordsMatch,
                "no records match the request",
            )]));
        }
        let end = (state.offset + self.config.page_size).min(headers.len());
        let token = if end < headers.len() {
            let next = TokenState {
                offset: end,
                fingerprint: fp,
                ..state.clone()
            };
            Some(ResumptionToken {
                token: next.encode(),
                complete_list_size: Some(headers.len() as u64),
                cursor: Some(state.offset as u64),
            })
        } else if state.offset > 0 {
            Some(ResumptionToken {
                token: String::new(),
                complete_list_size: Some(headers.len() as u64),
                cursor: Some(state.offset as u64),
            })
        } else {
            None
        };
        let page = &headers[state.offset..end];
        Ok(Ok(if verb == OaiVerb::ListIdentifiers {
            OaiPayload::ListIdentifiers {
                headers: page.iter().map(|h| self.public_header(h.clone())).collect(),
                token,
            }
        } else {
            let mut records = Vec::with_capacity(page.len());
            for h in page {
                records.push(self.record(snapshot, h.clone(), &state.prefix)?);
            }
            OaiPayload::ListRecords { records, token }
        }))
    }

    fn window_bound(&self, text: Option<&str>) -> Result<Option<Datestamp>, Vec<OaiError>> {
        let Some(text) = text else { return Ok(None) };
        let d = parse_datestamp(text).map_err(|_| bad_argument(format!("bad datestamp `{text}`")))?;
        if d.granularity() > self.config.granularity {
            return Err(bad_argument(format!("`{text}` is finer than the repository granularity")));
        }
        Ok(Some(d))
    }

    fn public_header(&self, mut h: RecordHeader) -> RecordHeader {
        h.datestamp = h.datestamp.with_granularity(self.config.granularity);
        h
    }

    fn record(&self, snapshot: &StoreSnapshot, header: RecordHeader, prefix: &str) -> Result<OaiRecord, StoreError> {
        let metadata = if header.deleted {
            None
        } else {
            let record = snapshot.get(&header.identifier)?.ok_or_else(|| {
                StoreError::StoreRead(format!("`{}` vanished from the store", header.identifier))
            })?;
            Some(match prefix {
                "oai_dc" => Metadata::Dc(record_to_dc(&record, self.config.dc_order)),
                _ => Metadata::OjsNative(record),
            })
        };
        Ok(OaiRecord {
            header: self.public_header(header),
            metadata,
        })
    }

    /// RSS 2.0 feed of the `limit` most recently changed live records.
    pub fn emit_rss(&self, snapshot: &StoreSnapshot, limit: usize) -> Result<Vec<u8>, StoreError> {
        emit_rss(snapshot, &self.config, limit)
    }
}

fn cannot_disseminate(prefix: &str) -> OaiError {
    OaiError::new(
        OaiErrorCode::CannotDisseminateFormat,
        format!("metadata format `{prefix}` is not supported"),
    )
}

fn bad_token(msg: &str) -> OaiError {
    OaiError::new(OaiErrorCode::BadResumptionToken, msg)
}

pub fn emit_rss(snapshot: &StoreSnapshot, config: &ProviderConfig, limit: usize) -> Result<Vec<u8>, StoreError> {
    use metabridge_core::xml::{self, Element};
    let mut channel = Element::new("channel")
        .with_child(Element::new("title").with_text(config.repository_name.as_str()))
        .with_child(Element::new("link").with_text(config.base_url.as_str()))
        .with_child(
            Element::new("description").with_text(format!("Recently changed records in {}", config.repository_name)),
        );
    let mut headers: Vec<RecordHeader> = snapshot.headers().into_iter().filter(|h| !h.deleted).collect();
    headers.reverse();
    for h in headers.into_iter().take(limit.max(1)) {
        let Some(record) = snapshot.get(&h.identifier)? else { continue };
        let title = record
            .titles
            .get(LangCode::Rus)
            .or_else(|| record.titles.get(LangCode::Eng))
            .unwrap_or_default();
        let link = url::Url::parse_with_params(
            &config.base_url,
            [("verb", "GetRecord"), ("metadataPrefix", "oai_dc"), ("identifier", h.identifier.as_str())],
        )
        .map(String::from)
        .unwrap_or_else(|_| config.base_url.clone());
        channel.push(
            Element::new("item")
                .with_child(Element::new("title").with_text(title))
                .with_child(Element::new("link").with_text(link))
                .with_child(Element::new("guid").with_attr("isPermaLink", "false").with_text(h.identifier.as_str()))
                .with_child(
                    Element::new("pubDate")
                        .with_text(h.datestamp.instant().format("%a, %d %b %Y %H:%M:%S GMT").to_string()),
                ),
        );
    }
    Ok(xml::to_document(&Element::new("rss").with_attr("version", "2.0").with_child(channel)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokens_survive_encoding() {
        let s = TokenState {
            verb: OaiVerb::ListRecords,
            offset: 30,
            prefix: "oai_dc".into(),
            from: Some("2020-01-01".into()),
            until: None,
            fingerprint: "abc".into(),
        };
        assert_eq!(TokenState::decode(&s.encode()), Some(s));
        assert_eq!(TokenState::decode("not a token"), None);
    }

    #[test]
    fn rss_sits_next_to_the_endpoint() {
        let mut c = ProviderConfig::default();
        assert_eq!(c.rss_path(), "/rss");
        c.base_path = "/journal/oai".into();
        assert_eq!(c.rss_path(), "/journal/rss");
    }
}
