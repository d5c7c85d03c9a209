//! Extractive phrase summarization for student reflection responses.
//!
//! The pipeline extracts candidate phrases with a linear-chain CRF, scores
//! phrase pairs with an ensemble of similarity metrics, groups phrases into
//! communities whose sizes estimate how many students raised each issue, and
//! picks one representative per community with LexRank. [`evalmetrics`]
//! scores summaries with ROUGE and with color matching over highlights.

pub mod corpus;
pub mod evalmetrics;
pub mod extractor;
pub mod similarity;
pub mod clustering;
pub mod ranking;
pub mod pipeline;
