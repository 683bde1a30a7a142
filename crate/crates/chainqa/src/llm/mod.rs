//! Concrete clients for remote chat and embedding models.

pub mod cache;
pub mod embed;
pub mod http;
