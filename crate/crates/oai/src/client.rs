//! OAI-PMH harvester.

use std::thread::sleep;
use std::time::Duration;

use metabridge_core::oai::{
    dc_to_record, parse_oai_response, Datestamp, Granularity, IdentifyInfo, Metadata, OaiCoreError, OaiError,
    OaiErrorCode, OaiPayload, OaiRecord, OaiVerb, ResumptionToken,
};
use metabridge_core::store::{Store, StoreError, UpsertOutcome};
use thiserror::Error;

pub const USER_AGENT: &str = concat!("metabridge-harvester/", env!("CARGO_PKG_VERSION"), " (OAI-PMH 2.0)");

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("network error: {0}")]
    Network(String),
    #[error("HTTP status {0}")]
    Http(u16),
    #[error("OAI-PMH error {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Protocol(Vec<OaiError>),
    #[error("unreadable response: {0}")]
    Parse(#[from] OaiCoreError),
    #[error("response to {expected} carried a {got} payload")]
    UnexpectedPayload { expected: OaiVerb, got: OaiVerb },
    #[error("invalid harvest job: {0}")]
    BadJob(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl ClientError {
    /// First OAI-PMH error code, for protocol errors.
    pub fn protocol_code(&self) -> Option<OaiErrorCode> {
        match self {
            ClientError::Protocol(errors) => errors.first().map(|e| e.code),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HarvestJob {
    pub endpoint: String,
    pub metadata_prefix: String,
    pub from: Option<Datestamp>,
    pub until: Option<Datestamp>,
    pub set_spec: Option<String>,
    pub retry_budget: u32,
    pub politeness_delay: Duration,
}

impl HarvestJob {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HarvestJob {
            endpoint: endpoint.into(),
            metadata_prefix: "oai_dc".into(),
            from: None,
            until: None,
            set_spec: None,
            retry_budget: 3,
            politeness_delay: Duration::from_millis(1000),
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        let url = url::Url::parse(&self.endpoint).map_err(|e| ClientError::BadJob(format!("endpoint: {e}")))?;
        if url.scheme() != "http" {
            return Err(ClientError::BadJob(format!("unsupported scheme `{}`", url.scheme())));
        }
        if let (Some(f), Some(u)) = (self.from, self.until) {
            if f.instant() > u.upper_instant() {
                return Err(ClientError::BadJob("`from` is later than `until`".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HarvestSummary {
    pub fetched: usize,
    pub added: usize,
    pub updated: usize,
    pub deleted: usize,
    pub unchanged: usize,
    pub pages: usize,
    pub errors: Vec<String>,
}

impl std::fmt::Display for HarvestSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "fetched={} added={} updated={} deleted={} unchanged={} pages={} errors={}",
            self.fetched,
            self.added,
            self.updated,
            self.deleted,
            self.unchanged,
            self.pages,
            self.errors.len()
        )
    }
}

#[derive(Debug, Clone)]
pub struct OaiClient {
    http: reqwest::blocking::Client,
    /// First retry waits this long; each further retry doubles it.
    pub backoff_base: Duration,
    /// Upper bound for a server-requested `Retry-After` wait.
    pub max_retry_after: Duration,
}

impl Default for OaiClient {
    fn default() -> Self {
        OaiClient::new()
    }
}

impl OaiClient {
    pub fn new() -> Self {
        let http = reqwest::blocking::Client::builder()
            .user_agent(USER_AGENT)
            .redirect(reqwest::redirect::Policy::limited(5))
            .timeout(Duration::from_secs(60))
            .build()
            .expect("HTTP client configuration is static");
        OaiClient {
            http,
            backoff_base: Duration::from_millis(250),
            max_retry_after: Duration::from_secs(120),
        }
    }

    pub fn with_backoff(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    /// One request, retried on transport failures and 5xx answers only.
    fn fetch(&self, endpoint: &str, args: &[(&str, &str)], retry_budget: u32) -> Result<OaiPayload, ClientError> {
        let url = url::Url::parse_with_params(endpoint, args).map_err(|e| ClientError::BadJob(e.to_string()))?;
        let mut attempt = 0;
        loop {
            let (err, wait) = match self.http.get(url.clone()).send() {
                Err(e) => (ClientError::Network(e.to_string()), None),
                Ok(resp) if resp.status().is_server_error() => {
                    let retry_after = (resp.status().as_u16() == 503)
                        .then(|| resp.headers().get("Retry-After"))
                        .flatten()
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.trim().parse::<u64>().ok())
                        .map(|s| Duration::from_secs(s).min(self.max_retry_after));
                    (ClientError::Http(resp.status().as_u16()), retry_after)
                }
                Ok(resp) if !resp.status().is_success() => return Err(ClientError::Http(resp.status().as_u16())),
                Ok(resp) => {
                    let body = resp.bytes().map_err(|e| ClientError::Network(e.to_string()))?;
                    let parsed = parse_oai_response(&body)?;
                    return parsed.body.map_err(ClientError::Protocol);
                }
            };
            if attempt >= retry_budget {
                return Err(err);
            }
            sleep(wait.unwrap_or(self.backoff_base * 2u32.saturating_pow(attempt)));
            attempt += 1;
        }
    }

    /// Sends one OAI-PMH request with arbitrary arguments. In-protocol
    /// errors come back as [`ClientError::Protocol`].
    pub fn request(&self, endpoint: &str, args: &[(&str, &str)]) -> Result<OaiPayload, ClientError> {
        self.fetch(endpoint, args, 3)
    }

    pub fn identify(&self, endpoint: &str) -> Result<IdentifyInfo, ClientError> {
        self.identify_with_budget(endpoint, 3)
    }

    fn identify_with_budget(&self, endpoint: &str, budget: u32) -> Result<IdentifyInfo, ClientError> {
        match self.fetch(endpoint, &[("verb", "Identify")], budget)? {
            OaiPayload::Identify(info) => Ok(info),
            other => Err(ClientError::UnexpectedPayload {
                expected: OaiVerb::Identify,
                got: other.verb(),
            }),
        }
    }

    /// Streams every record of the job, following resumption tokens. Window
    /// bounds are sent as given; see [`OaiClient::harvest_into_store`] for
    /// granularity negotiation.
    pub fn list_records(&self, job: &HarvestJob) -> Result<RecordStream<'_>, ClientError> {
        job.validate()?;
        Ok(RecordStream {
            client: self,
            job: job.clone(),
            granularity: Granularity::Second,
            buffer: Vec::new().into_iter(),
            next_token: None,
            started: false,
            done: false,
            pages: 0,
            failed: false,
        })
    }

    fn stream_with_granularity(&self, job: &HarvestJob, g: Granularity) -> Result<RecordStream<'_>, ClientError> {
        let mut s = self.list_records(job)?;
        s.granularity = g;
        Ok(s)
    }

    /// Harvests `job` into `store`, upserting by identifier. The store
    /// watermark advances to the newest datestamp seen when the run
    /// completes without errors.
    pub fn harvest_into_store(&self, job: &HarvestJob, store: &mut Store) -> Result<HarvestSummary, ClientError> {
        job.validate()?;
        let mut summary = HarvestSummary::default();
        let granularity = match self.identify_with_budget(&job.endpoint, job.retry_budget) {
            Ok(info) => info.granularity,
            Err(e) => {
                summary.errors.push(format!("Identify: {e}"));
                return Ok(summary);
            }
        };
        let mut stream = self.stream_with_granularity(job, granularity)?;
        let mut newest: Option<Datestamp> = None;
        for item in stream.by_ref() {
            let record = match item {
                Ok(r) => r,
                Err(e) => {
                    summary.errors.push(e.to_string());
                    break;
                }
            };
            let h = &record.header;
            newest = newest.max(Some(h.datestamp));
            let stored = store.header(&h.identifier);
            let overlap = job.from.is_some_and(|f| h.datestamp.instant() <= f.upper_instant())
                && stored.as_ref().is_some_and(|s| s.datestamp == h.datestamp && s.deleted == h.deleted);
            if overlap {
                continue;
            }
            if stored.as_ref().is_some_and(|s| s.datestamp > h.datestamp) {
                summary.fetched += 1;
                summary.unchanged += 1;
                continue;
            }
            if h.deleted {
                summary.fetched += 1;
                if store.mark_deleted_at(&h.identifier, h.datestamp)? {
                    summary.deleted += 1;
                } else {
                    summary.unchanged += 1;
                }
                continue;
            }
            let mut article = match record.metadata {
                Some(Metadata::OjsNative(r)) => r,
                Some(Metadata::Dc(dc)) => dc_to_record(&dc),
                None => {
                    summary.errors.push(format!("`{}`: record without metadata", h.identifier));
                    continue;
                }
            };
            article.identifier = h.identifier.clone();
            if let Err(e) = article.check() {
                summary.errors.push(format!("`{}`: {e}", h.identifier));
                continue;
            }
            summary.fetched += 1;
            match store.upsert_at(&article, h.datestamp)? {
                UpsertOutcome::Added => summary.added += 1,
                UpsertOutcome::Updated => summary.updated += 1,
                UpsertOutcome::Unchanged => summary.unchanged += 1,
            }
        }
        summary.pages = stream.pages();
        if summary.errors.is_empty() {
            if let Some(n) = newest {
                store.advance_watermark(n)?;
            }
        }
        Ok(summary)
    }
}

/// Records of a ListRecords chain, fetched page by page on demand. Iteration
/// ends at the last page or right after yielding the first error.
pub struct RecordStream<'a> {
    client: &'a OaiClient,
    job: HarvestJob,
    granularity: Granularity,
    buffer: std::vec::IntoIter<OaiRecord>,
    next_token: Option<String>,
    started: bool,
    done: bool,
    pages: usize,
    failed: bool,
}

impl RecordStream<'_> {
    pub fn pages(&self) -> usize {
        self.pages
    }

    /// True when iteration stopped because of an error.
    pub fn failed(&self) -> bool {
        self.failed
    }

    fn next_page(&mut self) -> Result<(), ClientError> {
        let mut args: Vec<(&str, String)> = vec![("verb", "ListRecords".into())];
        match &self.next_token {
            Some(t) => args.push(("resumptionToken", t.clone())),
            None => {
                args.push(("metadataPrefix", self.job.metadata_prefix.clone()));
                if let Some(f) = self.job.from {
                    args.push(("from", f.with_granularity(self.granularity).format()));
                }
                if let Some(u) = self.job.until {
                    let u = if self.granularity == Granularity::Day {
                        u.with_granularity(Granularity::Day)
                    } else {
                        Datestamp::second(u.upper_instant())
                    };
                    args.push(("until", u.format()));
                }
                if let Some(s) = &self.job.set_spec {
                    args.push(("set", s.clone()));
                }
            }
        }
        if self.started && !self.job.politeness_delay.is_zero() {
            sleep(self.job.politeness_delay);
        }
        self.started = true;
        let pairs: Vec<(&str, &str)> = args.iter().map(|(k, v)| (*k, v.as_str())).collect();
        match self.client.fetch(&self.job.endpoint, &pairs, self.job.retry_budget) {
            Ok(OaiPayload::ListRecords { records, token }) => {
                self.pages += 1;
                self.buffer = records.into_iter();
                self.next_token = token.filter(|t: &ResumptionToken| !t.is_final()).map(|t| t.token);
                if self.next_token.is_none() {
                    self.done = true;
                }
                Ok(())
            }
            Ok(other) => Err(ClientError::UnexpectedPayload {
                expected: OaiVerb::ListRecords,
                got: other.verb(),
            }),
            Err(e) if e.protocol_code() == Some(OaiErrorCode::NoRecordsMatch) && self.next_token.is_none() => {
                self.pages += 1;
                self.done = true;
                Ok(())
            }
            Err(e) => Err(e),
        }
    }
}

impl Iterator for RecordStream<'_> {
    type Item = Result<OaiRecord, ClientError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(r) = self.buffer.next() {
                return Some(Ok(r));
            }
            if self.done {
                return None;
            }
            if let Err(e) = self.next_page() {
                self.done = true;
                self.failed = true;
                return Some(Err(e));
            }
        }
    }
}
