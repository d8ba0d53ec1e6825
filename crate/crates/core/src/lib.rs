//! Content-agnostic detection of appreciated users in threaded conversations.
//!
//! A conversation is turned into an argumentation graph (attacks and
//! defences between posts), per-user structural features are aggregated from
//! that graph, and classifiers learn which users belong to the top slice of
//! corpus-wide approval.

pub mod analysis;
pub mod argraph;
pub mod features;
pub mod ingest;
pub mod io;
pub mod labeling;
pub mod learners;
pub mod metrics;
pub mod pipeline;
pub mod synth;
