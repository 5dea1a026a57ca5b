//! OAI-PMH 2.0 data provider, harvester and the HTTP glue between them.

pub mod client;
pub mod http;
pub mod provider;

pub use client::{ClientError, HarvestJob, HarvestSummary, OaiClient, RecordStream};
pub use http::{serve, serve_fn, HttpRequest, HttpResponse, ServerHandle};
pub use provider::{Provider, ProviderConfig};
