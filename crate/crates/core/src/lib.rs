//! Scholarly metadata interchange: a canonical article record, codecs for the
//! OJS native and Articulatus XML formats, a rule-driven crosswalk between
//! them, plain-text authoring templates, the OAI-PMH 2.0 vocabulary, and a
//! file-backed record store.

pub mod articulatus;
pub mod crosswalk;
pub mod model;
pub mod oai;
pub mod store;
pub mod ojs;
pub mod template;
pub mod xml;

pub use model::{
    initials_of, locale_map, locale_unmap, validate_for_indexing, ArtType, ArticleRecord, Author,
    GalleyFile, LangCode, LocalizedText, Reference, Severity, ValidationReport,
};

#[cfg(any(test, feature = "testkit"))]
pub mod testkit;
