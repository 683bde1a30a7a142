pub mod dataset;
pub mod tables;
pub mod triples;
