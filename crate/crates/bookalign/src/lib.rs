//! File formats, posterior providers and the batch pipeline around
//! `bookalign-core`.

pub mod config;
pub mod corpus;
pub mod ctcp;
pub mod pipeline;
pub mod provider;
pub mod report;
pub mod wav;

pub use bookalign_core as core;
