//! Tools for turning tournament replaypacks into validated JSON datasets.
//!
//! The pieces, bottom-up:
//!
//! - [`mpq`]: the MoPAQ container that replay files are stored in.
//! - [`versioned`]: the tagged binary encoding used by replay members.
//! - [`protocol`]: the pinned replay schema (header, details, events).
//! - [`extract`]: per-replay extraction and the data-parallel replaypack processor.
//! - [`prep`]: directory flattening, packaging, renaming, merging, downloads and the end-to-end pipeline.
//! - [`anon`]: the nickname pseudonymization store, HTTP service and client.
//! - [`dataset`]: loading and validating extractor output.
//! - [`fixtures`]: deterministic synthetic replays and corpora.

pub mod anon;
pub mod dataset;
pub mod extract;
pub mod fixtures;
pub mod mpq;
pub mod prep;
pub mod protocol;
pub mod util;
pub mod versioned;
