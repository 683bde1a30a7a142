//! Shortcut-resistant multi-hop question generation over knowledge graphs.
//!
//! The crate is `no_std` (it needs `alloc`). It covers the pure parts of the
//! pipeline:
//!
//! - [`kg`]: an immutable, multi-indexed triple store.
//! - [`chain`]: constrained random-walk mining of reasoning chains, the
//!   viability check, a brute-force backward solver and depth truncation.
//! - [`render`]: hypernym masking with alphabetical placeholders and question
//!   assembly.
//! - [`filters`]: yes/no knowledge judging and split manifests.
//! - [`eval`]: prompt construction, string-match scoring, self-consistency
//!   and reference solvers.
//! - [`analyze`]: answer/context similarity and sliding-window accuracy curves.
//!
//! File formats, HTTP clients, caching and the command line live in the
//! `chainqa` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analyze;
pub mod chain;
pub mod client;
pub mod eval;
pub mod filters;
pub mod kg;
pub mod render;
pub mod rng;
pub mod synth;

pub use chain::{ChainLayer, Difficulty, Fact, ReasoningChain};
pub use client::{ChatClient, ChatError, EmbedError, EmbeddingProvider};
pub use kg::{EntityId, KnowledgeGraph, RawTriple, RelationId, Term};
pub use render::RenderedQuestion;
