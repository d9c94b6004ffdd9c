//! Multi-label classification of French app-store reviews into rating, bug
//! report, feature request and user experience.

pub mod corpus;
pub mod classifier;
pub mod cli;
pub mod encode;
pub mod evalx;
pub mod fsutil;
pub mod ingest;
